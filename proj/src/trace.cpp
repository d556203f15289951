#include "sle/trace.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sle/loewner.hpp"

namespace sle {

namespace {

constexpr std::uint64_t kAngleKey = ~std::uint64_t{0};

// One stage of the slit chain applied in place to a block of points stored as
// separate real/imaginary arrays: w -> e^{i mu} z, where z is the root in the
// disc of z/(1+z)^2 = e^{-duration} u/(1+u)^2, u = e^{-i mu} w. Written
// branch-free so the loop vectorizes; this is the hot spot of every
// simulation.
void slit_stage(double* __restrict xr, double* __restrict xi, std::size_t count, double cr,
                double ci, double shrink) {
  for (std::size_t j = 0; j < count; ++j) {
    auto const wr = xr[j];
    auto const wi = xi[j];
    auto const ur = wr * cr + wi * ci;
    auto const ui = wi * cr - wr * ci;
    auto const ar = 1.0 + ur;
    auto const dr = ar * ar - ui * ui;
    auto const di = 2.0 * ar * ui;
    // u = -1 only for the boundary point opposite the driver.
    auto const dn = dr * dr + di * di + 1e-300;
    auto const scale = shrink / dn;
    auto const c_re = scale * (ur * dr + ui * di);
    auto const c_im = scale * (ui * dr - ur * di);
    // s = sqrt(1 - 4c), then pick the sign making |1 - 2c + s| largest.
    auto const qr = 1.0 - 4.0 * c_re;
    auto const qi = -4.0 * c_im;
    auto const mod = std::sqrt(qr * qr + qi * qi);
    auto const t = std::sqrt(0.5 * (mod + std::fabs(qr)));
    auto const other = qi / (2.0 * t);
    auto const sr = qr >= 0.0 ? t : std::fabs(other);
    auto const si = qr >= 0.0 ? other : std::copysign(t, qi);
    auto const br = 1.0 - 2.0 * c_re;
    auto const bi = -2.0 * c_im;
    auto const sign = br * sr + bi * si < 0.0 ? -1.0 : 1.0;
    auto const er = br + sign * sr;
    auto const ei = bi + sign * si;
    auto const en = er * er + ei * ei;
    auto const zr = 2.0 * (c_re * er + c_im * ei) / en;
    auto const zi = 2.0 * (c_im * er - c_re * ei) / en;
    xr[j] = zr * cr - zi * ci;
    xi[j] = zr * ci + zi * cr;
  }
}

// Recomputes points[from..] of the slit chain. Node j >= 1 is
// f_1 o ... o f_j (e^{i lambda_{j-1}}); maps are applied innermost first by
// sweeping stages from the last interval down to the first.
void slit_points(DrivingPath const& path, std::size_t from, std::vector<complex>& points) {
  auto const n = path.size();
  points.resize(n);
  points[0] = complex(1.0, 0.0);
  from = std::max<std::size_t>(from, 1);
  if (from >= n) {
    return;
  }
  std::vector<double> xr(n - from);
  std::vector<double> xi(n - from);
  for (std::size_t k = n - 1; k >= 1; --k) {
    auto const cr = std::cos(path.values[k - 1]);
    auto const ci = std::sin(path.values[k - 1]);
    auto const begin = std::max(k, from);
    if (k >= from) {
      xr[k - from] = cr;
      xi[k - from] = ci;
    }
    slit_stage(xr.data() + (begin - from), xi.data() + (begin - from), n - begin, cr, ci,
               std::exp(-(path.times[k] - path.times[k - 1])));
  }
  for (std::size_t j = from; j < n; ++j) {
    points[j] = complex(xr[j - from], xi[j - from]);
  }
}

void reverse_flow_points(DrivingPath const& path, double epsilon, std::size_t from,
                         std::vector<complex>& points) {
  points.resize(path.size());
  for (std::size_t j = std::max<std::size_t>(from, 0); j < path.size(); ++j) {
    points[j] = j == 0 ? complex(1.0, 0.0) : trace_point(path, path.times[j], epsilon);
  }
}

void compute_points(DrivingPath const& path, Scheme scheme, double epsilon, std::size_t from,
                    std::vector<complex>& points) {
  if (scheme == Scheme::slit) {
    slit_points(path, from, points);
  } else {
    reverse_flow_points(path, epsilon, from, points);
  }
}

double segment_target(complex a, complex b, Refinement const& refinement) {
  auto target = refinement.max_segment;
  for (auto const& q : refinement.focus) {
    auto const dist = point_segment_distance(q.z, a, b);
    target = std::min(target, refinement.ratio * std::max(dist, q.r_min));
  }
  return target;
}

Trace make_trace(DrivingPath const& path, std::vector<complex> points) {
  Trace trace;
  trace.points = std::move(points);
  trace.times = path.times;
  trace.kappa = path.kappa;
  trace.dt = path.dt;
  trace.seed = path.seed;
  trace.horizon = path.horizon();
  return trace;
}

void transform(Trace& trace, complex factor) {
  for (auto& p : trace.points) {
    p *= factor;
  }
}

}  // namespace

double default_horizon(double disc_radius, double r_min) {
  if (!(disc_radius > 0.0 && r_min > 0.0)) {
    throw domain_error("default_horizon needs positive disc radius and query radius");
  }
  return std::max(std::log(disc_radius / r_min), 0.0) + 6.0;
}

Trace trace_from_driving(DrivingPath const& driving, Scheme scheme, double epsilon) {
  std::vector<complex> points;
  compute_points(driving, scheme, epsilon, 0, points);
  return make_trace(driving, std::move(points));
}

Trace trace_from_driving(DrivingPath driving, Scheme scheme, double epsilon,
                         Refinement const& refinement) {
  std::vector<complex> points;
  compute_points(driving, scheme, epsilon, 0, points);
  if (!refinement.active()) {
    return make_trace(driving, std::move(points));
  }
  std::vector<int> levels;
  for (int pass = 0; pass < refinement.max_passes; ++pass) {
    levels.assign(driving.intervals(), 0);
    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
      auto const len = std::abs(points[k + 1] - points[k]);
      auto const target = segment_target(points[k], points[k + 1], refinement);
      if (len > target) {
        // Displacement grows like the square root of capacity time, so
        // (len/target)^2 pieces is the natural first guess.
        auto const pieces = (len / target) * (len / target);
        auto const l = std::clamp(static_cast<int>(std::ceil(std::log2(pieces))), 1, 8);
        levels[k] = std::max(levels[k], l);
        // The new slit starts where e^{i lambda_k} lands on the hull, away
        // from the previous tip when the driving jumped at node k; only
        // bisecting the interval before the node closes that gap.
        if (k > 0) {
          levels[k - 1] = std::max(levels[k - 1], l);
        }
      }
    }
    std::size_t first = driving.size();
    std::size_t added = 0;
    for (std::size_t k = 0; k < levels.size(); ++k) {
      if (levels[k] == 0) {
        continue;
      }
      auto const room = driving.positions[k + 1] - driving.positions[k];
      while (levels[k] > 0 && room < (std::uint64_t{2} << levels[k])) {
        --levels[k];  // dyadic resolution exhausted
      }
      if (levels[k] == 0) {
        continue;
      }
      added += (std::size_t{1} << levels[k]) - 1;
      first = std::min(first, k + 1);
    }
    if (added == 0 || driving.size() + added > refinement.max_nodes) {
      break;
    }
    // Points before the first refined interval only depend on earlier maps.
    std::vector<complex> kept(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(first));
    refine_intervals(driving, levels);
    points = std::move(kept);
    compute_points(driving, scheme, epsilon, first, points);
  }
  return make_trace(driving, std::move(points));
}

Trace simulate_radial_trace(double kappa, double horizon, double dt, std::uint64_t seed,
                            double epsilon) {
  if (!(epsilon > 0.0)) {
    throw domain_error(fmt::format("epsilon must be positive, got {}", epsilon));
  }
  auto const driving = sample_driving(kappa, horizon, dt, seed);
  return trace_from_driving(driving, Scheme::reverse_flow, epsilon);
}

DrivingPath engine_driving(double kappa, std::uint64_t seed, EngineConfig const& cfg) {
  auto const k = cfg.zero_driving ? 0.0 : kappa;
  if (cfg.grid_growth <= 0.0) {
    return sample_driving(k, cfg.horizon, cfg.dt, seed);
  }
  auto const times = capacity_grid(cfg.horizon, cfg.dt, cfg.grid_growth, cfg.dt_max);
  return sample_driving_on(k, times, seed);
}

Trace simulate_radial_trace(double kappa, std::uint64_t seed, EngineConfig const& cfg) {
  if (!(cfg.horizon > 0.0)) {
    throw domain_error("simulate_radial_trace: engine horizon must be set");
  }
  auto driving = engine_driving(kappa, seed, cfg);
  auto trace = trace_from_driving(std::move(driving), cfg.scheme, cfg.epsilon, cfg.refinement);
  trace.kappa = kappa;
  return trace;
}

double whole_plane_angle(std::uint64_t seed) { return 2.0 * kPi * keyed_uniform(seed, kAngleKey); }

Trace simulate_whole_plane_approx(WholePlaneConfig const& cfg, double horizon, double dt,
                                  std::uint64_t seed, double epsilon, Scheme scheme) {
  if (!(cfg.target_points_radius > 0.0 && cfg.disc_radius >= 4.0 * cfg.target_points_radius)) {
    throw domain_error(fmt::format("whole-plane approximant needs N >= 4R (N={}, R={})",
                                   cfg.disc_radius, cfg.target_points_radius));
  }
  auto const driving = sample_driving(cfg.kappa, horizon, dt, seed);
  auto trace = trace_from_driving(driving, scheme, epsilon);
  transform(trace, cfg.disc_radius * std::polar(1.0, whole_plane_angle(seed)));
  return trace;
}

Trace simulate_whole_plane_approx(double kappa, std::uint64_t seed, EngineConfig const& cfg) {
  if (!(cfg.disc_radius > 0.0)) {
    throw domain_error("whole-plane approximant needs a positive disc radius");
  }
  if (!(cfg.horizon > 0.0)) {
    throw domain_error("simulate_whole_plane_approx: engine horizon must be set");
  }
  auto const factor = cfg.disc_radius * std::polar(1.0, whole_plane_angle(seed));
  auto refinement = cfg.refinement;
  for (auto& q : refinement.focus) {
    q.z /= factor;
    q.r_min /= cfg.disc_radius;
  }
  refinement.max_segment /= cfg.disc_radius;
  auto driving = engine_driving(kappa, seed, cfg);
  auto trace = trace_from_driving(std::move(driving), cfg.scheme, cfg.epsilon, refinement);
  trace.kappa = kappa;
  transform(trace, factor);
  return trace;
}

double point_segment_distance(complex z, complex a, complex b) {
  auto const ab = b - a;
  auto const len2 = std::norm(ab);
  if (len2 == 0.0) {
    return std::abs(z - a);
  }
  auto const t = std::clamp(((z - a) * std::conj(ab)).real() / len2, 0.0, 1.0);
  return std::abs(z - (a + t * ab));
}

double dist_to_trace(Trace const& trace, complex z) {
  if (trace.points.empty()) {
    throw std::invalid_argument("dist_to_trace: empty trace");
  }
  if (trace.points.size() == 1) {
    return std::abs(z - trace.points.front());
  }
  auto best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < trace.points.size(); ++k) {
    best = std::min(best, point_segment_distance(z, trace.points[k], trace.points[k + 1]));
  }
  return best;
}

}  // namespace sle
