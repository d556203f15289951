#include "sle/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace sle {

namespace {

constexpr double kTouchTolerance = 1e-12;

// Set of distances to c2 realized by points of the circle or annulus around
// c1 is the interval [dist(d, [a1, b1]), d + b1].
bool distance_band_meets(double d, double a1, double b1, double a2, double b2) {
  auto const near = d < a1 ? a1 - d : (d > b1 ? d - b1 : 0.0);
  auto const far = d + b1;
  auto const slack = kTouchTolerance * std::max({1.0, b1, b2});
  return near <= b2 + slack && far + slack >= a2;
}

void require_positive_radius(double r, char const* what) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw domain_error(fmt::format("{} must be positive and finite, got {}", what, r));
  }
}

}  // namespace

Mode parse_mode(std::string const& name) {
  if (name == "radial") {
    return Mode::radial;
  }
  if (name == "whole-plane" || name == "whole_plane") {
    return Mode::whole_plane;
  }
  throw domain_error(fmt::format("mode must be radial or whole-plane, got '{}'", name));
}

std::string mode_name(Mode mode) { return mode == Mode::radial ? "radial" : "whole-plane"; }

std::vector<complex> mode_anchors(Mode mode) {
  if (mode == Mode::radial) {
    return {complex(0.0, 0.0), complex(1.0, 0.0)};
  }
  return {complex(0.0, 0.0)};
}

std::vector<double> l_sequence(std::span<complex const> points, std::span<complex const> anchors) {
  std::vector<double> l(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    auto best = std::numeric_limits<double>::infinity();
    for (auto const a : anchors) {
      best = std::min(best, std::abs(points[k] - a));
    }
    for (std::size_t j = 0; j < k; ++j) {
      best = std::min(best, std::abs(points[k] - points[j]));
    }
    if (!(best > 0.0)) {
      throw domain_error(fmt::format(
          "point {} ({}, {}) coincides with an anchor or an earlier point", k + 1, points[k].real(),
          points[k].imag()));
    }
    l[k] = best;
  }
  return l;
}

std::vector<PointSpec> make_point_specs(Mode mode, std::span<complex const> points,
                                        std::span<double const> radii) {
  if (points.size() != radii.size()) {
    throw domain_error("one radius per point required");
  }
  if (points.empty()) {
    throw domain_error("at least one query point required");
  }
  std::vector<PointSpec> specs(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    auto const z = points[k];
    require_positive_radius(radii[k], "query radius r");
    if (mode == Mode::radial) {
      if (std::abs(z) > 1.0 + 1e-12) {
        throw domain_error(
            fmt::format("radial query point ({}, {}) lies outside the closed unit disc", z.real(),
                        z.imag()));
      }
      specs[k].y = std::max(0.0, 1.0 - std::abs(z));
    } else {
      if (!(radii[k] < std::abs(z))) {
        throw domain_error(fmt::format(
            "whole-plane query needs 0 < r < |z| (point ({}, {}), r = {})", z.real(), z.imag(),
            radii[k]));
      }
      specs[k].y = 1.0;
    }
    specs[k].z = z;
    specs[k].r = radii[k];
  }
  auto const anchors = mode_anchors(mode);
  auto const l = l_sequence(points, anchors);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    specs[k].l = l[k];
  }
  return specs;
}

double radial_bound_kernel(SleParams const& params, std::span<PointSpec const> specs) {
  double kernel = 1.0;
  for (auto const& s : specs) {
    kernel *= py_ratio(params, s.y, std::min(s.r, s.l), s.l);
  }
  return kernel;
}

double whole_plane_bound_kernel(SleParams const& params, std::span<PointSpec const> specs) {
  double kernel = 1.0;
  for (auto const& s : specs) {
    if (!(s.r < std::abs(s.z))) {
      throw domain_error(fmt::format("whole-plane query needs r < |z| (r = {}, |z| = {})", s.r,
                                     std::abs(s.z)));
    }
    kernel *= std::pow(std::min(s.r, s.l) / s.l, params.interior_exponent());
  }
  return kernel;
}

double bound_kernel(Mode mode, SleParams const& params, std::span<PointSpec const> specs) {
  return mode == Mode::radial ? radial_bound_kernel(params, specs)
                              : whole_plane_bound_kernel(params, specs);
}

double min_over_orders_kernel(Mode mode, SleParams const& params, std::span<complex const> points,
                              std::span<double const> radii) {
  if (points.size() > 8) {
    throw domain_error("min-over-orders kernel is limited to 8 points");
  }
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  auto best = std::numeric_limits<double>::infinity();
  std::vector<complex> z(points.size());
  std::vector<double> r(points.size());
  do {
    for (std::size_t k = 0; k < order.size(); ++k) {
      z[k] = points[order[k]];
      r[k] = radii[order[k]];
    }
    auto const specs = make_point_specs(mode, z, r);
    best = std::min(best, bound_kernel(mode, params, specs));
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

double one_point_kernel(SleParams const& params, double y0, double r, double R) {
  require_positive_radius(r, "r");
  if (!(r < R)) {
    throw domain_error(fmt::format("one-point kernel needs r < R (r = {}, R = {})", r, R));
  }
  return py_ratio(params, y0, r, R);
}

double ordered_crossing_kernel(SleParams const& params, double r0, double R0,
                               std::span<Ring const> rings) {
  require_positive_radius(r0, "r0");
  if (!(r0 <= R0)) {
    throw domain_error(fmt::format("ordered crossing needs r0 <= R0 (r0 = {}, R0 = {})", r0, R0));
  }
  auto kernel = std::pow(r0 / R0, params.alpha / 4.0);
  for (auto const& ring : rings) {
    require_positive_radius(ring.r, "ring radius r_j");
    if (!(ring.r <= ring.R)) {
      throw domain_error(
          fmt::format("ring needs r_j <= R_j (r_j = {}, R_j = {})", ring.r, ring.R));
    }
    kernel *= py_ratio(params, ring.y, ring.r, ring.R);
  }
  return kernel;
}

std::vector<Circle> CircleFamily::circles() const {
  std::vector<Circle> out;
  for (std::size_t e = 0; e < groups.size(); ++e) {
    for (auto const radius : groups[e].radii) {
      out.push_back({groups[e].center, radius, static_cast<int>(e)});
    }
  }
  return out;
}

std::string hypothesis_name(FamilyHypothesis hypothesis) {
  switch (hypothesis) {
    case FamilyHypothesis::empty_group:
      return "empty-group";
    case FamilyHypothesis::ratio:
      return "ratio-1/4";
    case FamilyHypothesis::overlapping_annuli:
      return "disjoint-annuli";
    case FamilyHypothesis::encloses_anchor:
      return "avoids-0-and-1";
  }
  return "unknown";
}

FamilyError::FamilyError(FamilyHypothesis hypothesis, int group_a, int group_b,
                         std::string const& what)
    : domain_error(fmt::format("circle family violates {}: {}", hypothesis_name(hypothesis), what)),
      hypothesis_(hypothesis),
      group_a_(group_a),
      group_b_(group_b) {}

bool annuli_intersect(complex c1, double a1, double b1, complex c2, double a2, double b2) {
  return distance_band_meets(std::abs(c1 - c2), a1, b1, a2, b2);
}

void validate_family(CircleFamily const& family) {
  auto const& groups = family.groups;
  for (std::size_t e = 0; e < groups.size(); ++e) {
    auto const& g = groups[e];
    auto const id = static_cast<int>(e);
    if (g.radii.empty()) {
      throw FamilyError(FamilyHypothesis::empty_group, id, -1, fmt::format("group {} is empty", e));
    }
    for (std::size_t s = 0; s < g.radii.size(); ++s) {
      require_positive_radius(g.radii[s], "circle radius");
      if (s > 0 && std::abs(g.radii[s - 1] / g.radii[s] - 4.0) > 1e-9) {
        throw FamilyError(FamilyHypothesis::ratio, id, -1,
                          fmt::format("group {} radii {} and {} are not in ratio 4", e,
                                      g.radii[s - 1], g.radii[s]));
      }
    }
    for (auto const anchor : {complex(0.0, 0.0), complex(1.0, 0.0)}) {
      if (std::abs(anchor - g.center) <= g.r_max()) {
        throw FamilyError(FamilyHypothesis::encloses_anchor, id, -1,
                          fmt::format("group {} circle of radius {} reaches ({}, {})", e,
                                      g.r_max(), anchor.real(), anchor.imag()));
      }
    }
  }
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      auto const& ga = groups[a];
      auto const& gb = groups[b];
      if (annuli_intersect(ga.center, ga.r_min(), ga.r_max(), gb.center, gb.r_min(),
                           gb.r_max())) {
        throw FamilyError(FamilyHypothesis::overlapping_annuli, static_cast<int>(a),
                          static_cast<int>(b),
                          fmt::format("annuli of groups {} and {} intersect", a, b));
      }
    }
  }
}

double concentric_family_kernel(SleParams const& params, CircleFamily const& family) {
  validate_family(family);
  double kernel = 1.0;
  for (auto const& g : family.groups) {
    kernel *= py_ratio(params, g.y, g.r_min(), g.r_max());
  }
  return kernel;
}

std::size_t family_group_bound(std::size_t n) { return n + 3 * n * (n - (n > 0 ? 1 : 0)) / 2; }

CircleFamily build_circle_family(std::span<PointSpec const> specs) {
  auto const n = specs.size();
  for (std::size_t j = 0; j < n; ++j) {
    require_positive_radius(specs[j].l, "nearest distance l");
    for (std::size_t k = 0; k < j; ++k) {
      if (specs[j].z == specs[k].z) {
        throw domain_error(fmt::format("points {} and {} coincide", k + 1, j + 1));
      }
    }
  }
  CircleFamily family;
  // kept[j][s-1]: whether circle l_j / 4^s survives pruning.
  std::vector<std::vector<bool>> kept(n);
  std::vector<int> depth(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto const& p = specs[j];
    RadiusSnap snap{p.r, p.l, 0, 1.0};
    if (p.r < p.l) {
      int h = 0;
      auto radius = p.l;
      while (radius / 4.0 >= p.r * (1.0 - 1e-12)) {
        radius /= 4.0;
        ++h;
      }
      snap.h = h;
      snap.snapped = radius;
    } else {
      snap.snapped = p.r;
    }
    snap.factor = snap.snapped / p.r;
    family.snaps.push_back(snap);
    depth[j] = snap.h;
    kept[j].assign(static_cast<std::size_t>(snap.h), true);
  }
  auto radius_of = [&](std::size_t j, int s) { return specs[j].l / std::pow(4.0, s); };
  for (std::size_t j = 0; j < n; ++j) {
    for (int s = 1; s <= depth[j]; ++s) {
      for (std::size_t k = j + 1; k < n; ++k) {
        // Circle of radius rho around z_j meets the closed disc D_k.
        auto const d = std::abs(specs[j].z - specs[k].z);
        if (distance_band_meets(d, radius_of(j, s), radius_of(j, s), 0.0, specs[k].l / 4.0)) {
          kept[j][static_cast<std::size_t>(s - 1)] = false;
          break;
        }
      }
    }
  }
  // Two consecutive surviving circles of z_j stay in one group unless a
  // surviving circle around another point meets the annulus between them.
  auto annulus_is_clear = [&](std::size_t j, int s) {
    auto const outer = radius_of(j, s);
    auto const inner = radius_of(j, s + 1);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) {
        continue;
      }
      auto const d = std::abs(specs[j].z - specs[k].z);
      for (int t = 1; t <= depth[k]; ++t) {
        if (kept[k][static_cast<std::size_t>(t - 1)] &&
            distance_band_meets(d, radius_of(k, t), radius_of(k, t), inner, outer)) {
          return false;
        }
      }
    }
    return true;
  };
  for (std::size_t j = 0; j < n; ++j) {
    CircleGroup current;
    auto flush = [&] {
      if (!current.radii.empty()) {
        family.groups.push_back(current);
        current.radii.clear();
      }
    };
    for (int s = 1; s <= depth[j]; ++s) {
      if (!kept[j][static_cast<std::size_t>(s - 1)]) {
        flush();
        continue;
      }
      if (!current.radii.empty() && !annulus_is_clear(j, s - 1)) {
        flush();
      }
      if (current.radii.empty()) {
        current.center = specs[j].z;
        current.y = specs[j].y;
        current.point = static_cast<int>(j);
      }
      current.radii.push_back(radius_of(j, s));
    }
    flush();
  }
  return family;
}

RunSplit split_group_kernel(SleParams const& params, CircleGroup const& group,
                            std::span<int const> cuts) {
  auto const size = static_cast<int>(group.radii.size());
  std::vector<int> starts{0};
  for (auto const c : cuts) {
    if (c <= starts.back() || c >= size) {
      throw domain_error("run cuts must be increasing positions inside the group");
    }
    starts.push_back(c);
  }
  starts.push_back(size);
  // Log domain: with large alpha the kernels underflow long before the
  // inequality between them becomes meaningless.
  double log_product = 0.0;
  for (std::size_t i = 0; i + 1 < starts.size(); ++i) {
    auto const outer = group.radii[static_cast<std::size_t>(starts[i])];
    auto const inner = group.radii[static_cast<std::size_t>(starts[i + 1] - 1)];
    log_product += py_log_ratio(params, group.y, inner, outer);
  }
  auto const log_kernel = py_log_ratio(params, group.y, group.r_min(), group.r_max());
  auto const log_bound =
      params.alpha * static_cast<double>(cuts.size()) * std::log(4.0) + log_kernel;
  auto const product = std::exp(log_product);
  auto const kernel = std::exp(log_kernel);
  auto const bound = std::exp(log_bound);
  return {product, kernel, bound};
}

nlohmann::json kernel_query(nlohmann::json const& query) {
  if (!query.is_object()) {
    throw domain_error("kernel query must be a JSON object");
  }
  if (!query.contains("kappa") || !query["kappa"].is_number()) {
    throw domain_error("kernel query needs a numeric 'kappa'");
  }
  auto const params = exponents(query["kappa"].get<double>());
  auto const mode = parse_mode(query.value("mode", std::string("radial")));
  if (!query.contains("points") || !query["points"].is_array()) {
    throw domain_error("kernel query needs a 'points' array");
  }
  std::vector<complex> z;
  std::vector<double> r;
  for (auto const& p : query["points"]) {
    if (!p.contains("z") || !p["z"].is_array() || p["z"].size() != 2 || !p.contains("r")) {
      throw domain_error("each point needs \"z\": [re, im] and \"r\"");
    }
    z.emplace_back(p["z"][0].get<double>(), p["z"][1].get<double>());
    r.push_back(p["r"].get<double>());
  }
  auto const specs = make_point_specs(mode, z, r);
  nlohmann::json out;
  out["kernel"] = bound_kernel(mode, params, specs);
  out["l"] = nlohmann::json::array();
  out["y"] = nlohmann::json::array();
  for (auto const& s : specs) {
    out["l"].push_back(s.l);
    if (mode == Mode::radial) {
      out["y"].push_back(s.y);
    }
  }
  if (z.size() <= 8) {
    out["min_over_orders"] = min_over_orders_kernel(mode, params, z, r);
  }
  return out;
}

}  // namespace sle
