#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "sle/harness.hpp"

namespace sle {

namespace {

// Smallest t in [0, 1] with |a + t (b - a) - c| <= rho, given |a - c| > rho.
std::optional<double> segment_entry(complex a, complex b, complex c, double rho) {
  auto const w = a - c;
  auto const v = b - a;
  auto const A = std::norm(v);
  if (A == 0.0) {
    return std::nullopt;
  }
  auto const B = 2.0 * (w * std::conj(v)).real();
  if (B >= 0.0) {
    return std::nullopt;  // moving away from the center: both roots negative
  }
  auto const C = std::norm(w) - rho * rho;
  auto const disc = B * B - 4.0 * A * C;
  if (disc < 0.0) {
    return std::nullopt;
  }
  // Stable smaller root of A t^2 + B t + C with C > 0.
  auto const q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
  auto const t = std::max(std::min(q / A, C / q), 0.0);
  if (t > 1.0) {
    return std::nullopt;
  }
  return t;
}

std::vector<double> parse_pair(nlohmann::json const& j, char const* what) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != 2) {
    throw domain_error(fmt::format("{} must be [re, im]", what));
  }
  return v;
}

}  // namespace

std::vector<int> CrossingRecord::order() const {
  std::vector<int> hit;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (tau[i]) {
      hit.push_back(static_cast<int>(i));
    }
  }
  std::stable_sort(hit.begin(), hit.end(), [&](int a, int b) { return *tau[a] < *tau[b]; });
  return hit;
}

CrossingRecord crossing_times(Trace const& trace, std::span<Circle const> circles) {
  CrossingRecord record;
  record.tau.resize(circles.size());
  auto const& pts = trace.points;
  for (std::size_t i = 0; i < circles.size(); ++i) {
    auto const c = circles[i].center;
    auto const rho = circles[i].radius;
    if (pts.empty()) {
      continue;
    }
    if (std::abs(pts[0] - c) <= rho) {
      record.tau[i] = 0.0;
      continue;
    }
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      // Cheap rejection: the segment stays outside when even its nearest
      // point is farther than rho.
      if (point_segment_distance(c, pts[k], pts[k + 1]) > rho) {
        continue;
      }
      if (auto const t = segment_entry(pts[k], pts[k + 1], c, rho)) {
        record.tau[i] = static_cast<double>(k) + *t;
        break;
      }
      // Tangential touch lost to rounding: count the closest point.
      record.tau[i] = static_cast<double>(k + 1);
      break;
    }
  }
  return record;
}

CrossingRecord crossing_times(Trace const& trace, CircleFamily const& family) {
  auto const circles = family.circles();
  return crossing_times(trace, circles);
}

bool chain_occurs(OrderedChain const& chain, CrossingRecord const& record) {
  if (chain.circles.empty()) {
    return true;
  }
  if (chain.strict.size() + 1 != chain.circles.size()) {
    throw domain_error("ordered chain needs one relation between consecutive circles");
  }
  for (auto const c : chain.circles) {
    if (c < 0 || static_cast<std::size_t>(c) >= record.tau.size() || !record.tau[c]) {
      return false;
    }
  }
  for (std::size_t i = 0; i + 1 < chain.circles.size(); ++i) {
    auto const a = *record.tau[chain.circles[i]];
    auto const b = *record.tau[chain.circles[i + 1]];
    if (chain.strict[i] ? !(a < b) : !(a <= b)) {
      return false;
    }
  }
  return true;
}

std::vector<Circle> OrderedEvent::circles() const {
  std::vector<Circle> out;
  out.push_back({z0, r0, 0});
  for (std::size_t j = 0; j < rings.size(); ++j) {
    auto const g = static_cast<int>(j + 1);
    out.push_back({rings[j].z, rings[j].R, g});
    out.push_back({rings[j].z, rings[j].r, g});
  }
  out.push_back({z0, r0_prime, 0});
  return out;
}

OrderedChain OrderedEvent::chain() const {
  OrderedChain chain;
  auto const n = static_cast<int>(2 * rings.size() + 2);
  for (int i = 0; i < n; ++i) {
    chain.circles.push_back(i);
  }
  // xi_0 < xi^_1 <= xi_1 < xi^_2 <= ... <= xi_m < xi_0'
  for (int i = 0; i + 1 < n; ++i) {
    chain.strict.push_back(i % 2 == 0);
  }
  return chain;
}

void OrderedEvent::validate() const {
  if (!(r0_prime > 0.0 && r0_prime < r0 && r0 <= R0)) {
    throw domain_error(fmt::format(
        "ordered event needs 0 < r0' < r0 <= R0 (r0' = {}, r0 = {}, R0 = {})", r0_prime, r0, R0));
  }
  std::vector<std::pair<complex, double>> outer{{z0, R0}};
  for (auto const& ring : rings) {
    if (!(ring.r > 0.0 && ring.r <= ring.R)) {
      throw domain_error(
          fmt::format("ordered event ring needs 0 < r_j <= R_j (r = {}, R = {})", ring.r, ring.R));
    }
    outer.emplace_back(ring.z, ring.R);
  }
  for (std::size_t j = 0; j < outer.size(); ++j) {
    auto const [z, R] = outer[j];
    if (std::abs(z) > 1.0 + 1e-12 || z == complex(0.0, 0.0) || z == complex(1.0, 0.0)) {
      throw domain_error(fmt::format("event center ({}, {}) must lie in the closed disc minus 0, 1",
                                     z.real(), z.imag()));
    }
    for (auto const anchor : {complex(0.0, 0.0), complex(1.0, 0.0)}) {
      if (std::abs(anchor - z) < R) {
        throw domain_error(fmt::format("event circle of radius {} around ({}, {}) encloses ({}, {})",
                                       R, z.real(), z.imag(), anchor.real(), anchor.imag()));
      }
    }
    for (std::size_t k = 0; k < j; ++k) {
      if (std::abs(outer[k].first - z) <= outer[k].second + R) {
        throw domain_error(
            fmt::format("closed discs of the outer circles {} and {} intersect", k, j));
      }
    }
  }
}

double OrderedEvent::kernel(SleParams const& params) const {
  std::vector<sle::Ring> kernel_rings;
  for (auto const& ring : rings) {
    kernel_rings.push_back({std::max(0.0, 1.0 - std::abs(ring.z)), ring.r, ring.R});
  }
  return ordered_crossing_kernel(params, r0, R0, kernel_rings);
}

nlohmann::json OrderedEvent::to_json() const {
  nlohmann::json j{{"z0", {z0.real(), z0.imag()}}, {"R0", R0}, {"r0", r0}, {"r0_prime", r0_prime}};
  j["rings"] = nlohmann::json::array();
  for (auto const& ring : rings) {
    j["rings"].push_back({{"z", {ring.z.real(), ring.z.imag()}}, {"R", ring.R}, {"r", ring.r}});
  }
  return j;
}

OrderedEvent OrderedEvent::from_json(nlohmann::json const& j) {
  OrderedEvent e;
  auto const z = parse_pair(j.at("z0"), "event z0");
  e.z0 = {z[0], z[1]};
  e.R0 = j.at("R0").get<double>();
  e.r0 = j.at("r0").get<double>();
  e.r0_prime = j.at("r0_prime").get<double>();
  for (auto const& r : j.value("rings", nlohmann::json::array())) {
    auto const rz = parse_pair(r.at("z"), "ring z");
    e.rings.push_back({{rz[0], rz[1]}, r.at("R").get<double>(), r.at("r").get<double>()});
  }
  return e;
}

Proportion ordered_event_frequency(std::span<CrossingRecord const> records,
                                   OrderedEvent const& event) {
  event.validate();
  auto const chain = event.chain();
  std::size_t hits = 0;
  for (auto const& rec : records) {
    hits += chain_occurs(chain, rec) ? 1 : 0;
  }
  return proportion(hits, records.size());
}

Proportion ordered_event_frequency(std::span<Trace const> traces, OrderedEvent const& event) {
  event.validate();
  auto const circles = event.circles();
  std::vector<CrossingRecord> records;
  records.reserve(traces.size());
  for (auto const& t : traces) {
    records.push_back(crossing_times(t, circles));
  }
  return ordered_event_frequency(records, event);
}

}  // namespace sle
