#include "sle/loewner.hpp"

#include <cmath>

#include <fmt/format.h>

namespace sle {

namespace {

constexpr double kOnSlitTolerance = 1e-12;
constexpr int kMaxSubsteps = 1'000'000;

complex unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

// Root of c g^2 + (2c - 1) g + c = 0 inside the closed unit disc. The two
// roots multiply to 1; dividing by the larger denominator picks the small one
// without cancellation.
complex koebe_root(complex c) {
  auto const s = std::sqrt(1.0 - 4.0 * c);
  auto const base = 1.0 - 2.0 * c;
  auto const plus = base + s;
  auto const minus = base - s;
  return 2.0 * c / (std::norm(plus) >= std::norm(minus) ? plus : minus);
}

complex loewner_rhs(complex g, complex driver) { return g * (driver + g) / (driver - g); }

struct FlowOutcome {
  complex value;
  bool hit_singularity = false;
  double elapsed = 0.0;
};

// RK4 on dg/ds = sign * g (e+g)/(e-g) for a span of length `duration`. The
// local step is halved until it moves g by at most a tenth of its distance to
// the driving point.
FlowOutcome integrate(complex g, complex driver, double duration, double sign) {
  FlowOutcome out{g};
  auto remaining = duration;
  auto h = duration;
  int count = 0;
  while (remaining > 0.0) {
    auto const dist = std::abs(g - driver);
    if (dist < kSwallowThreshold) {
      out.value = g;
      out.hit_singularity = true;
      out.elapsed = duration - remaining;
      return out;
    }
    h = std::min(h, remaining);
    auto const k1 = sign * loewner_rhs(g, driver);
    while (dist < 10.0 * h * std::abs(k1)) {
      h *= 0.5;
    }
    auto const k2 = sign * loewner_rhs(g + 0.5 * h * k1, driver);
    auto const k3 = sign * loewner_rhs(g + 0.5 * h * k2, driver);
    auto const k4 = sign * loewner_rhs(g + h * k3, driver);
    g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    remaining = h >= remaining ? 0.0 : remaining - h;
    h *= 2.0;
    if (++count > kMaxSubsteps) {
      throw integration_error("radial Loewner flow did not converge within the substep budget");
    }
  }
  out.value = g;
  return out;
}

}  // namespace

std::optional<complex> slit_forward(complex z, ElementaryMap const& map) {
  auto const rot = unit(map.driving);
  auto const u = z * std::conj(rot);
  auto const one_plus = 1.0 + u;
  if (std::norm(one_plus) == 0.0) {
    return z;
  }
  auto const c = std::exp(map.duration) * u / (one_plus * one_plus);
  if (std::abs(c.imag()) <= kOnSlitTolerance * std::abs(c) &&
      c.real() >= 0.25 * (1.0 - kOnSlitTolerance)) {
    return std::nullopt;
  }
  return rot * koebe_root(c);
}

complex slit_inverse(complex w, ElementaryMap const& map) {
  auto const rot = unit(map.driving);
  auto const u = w * std::conj(rot);
  auto const one_plus = 1.0 + u;
  if (std::norm(one_plus) == 0.0) {
    return w;
  }
  auto const c = std::exp(-map.duration) * u / (one_plus * one_plus);
  return rot * koebe_root(c);
}

double slit_tip(double duration) { return koebe_root(complex(0.25 * std::exp(-duration))).real(); }

LoewnerState::LoewnerState(DrivingPath const& driving, std::size_t step_index)
    : driving_(&driving), step_index_(step_index) {
  if (step_index >= driving.size()) {
    throw std::out_of_range(
        fmt::format("step index {} beyond driving path of {} nodes", step_index, driving.size()));
  }
  maps_.reserve(step_index);
  for (std::size_t k = 0; k < step_index; ++k) {
    maps_.push_back({driving.values[k], driving.times[k + 1] - driving.times[k]});
  }
}

ForwardResult forward_map_apply(LoewnerState const& state, complex z) {
  ForwardResult result{z};
  double start = 0.0;
  for (auto const& map : state.map_stack()) {
    auto const flow = integrate(result.value, unit(map.driving), map.duration, 1.0);
    if (flow.hit_singularity) {
      result.value = flow.value;
      result.swallowed = true;
      result.swallow_time = start + flow.elapsed;
      return result;
    }
    result.value = flow.value;
    start += map.duration;
  }
  return result;
}

ForwardResult forward_map_slit(LoewnerState const& state, complex z) {
  ForwardResult result{z};
  double start = 0.0;
  for (auto const& map : state.map_stack()) {
    auto const next = slit_forward(result.value, map);
    if (!next) {
      // On the slit F is real; the point reaches the tip when e^s F = 1/4.
      auto const u = result.value * std::conj(unit(map.driving));
      auto const f = (u / ((1.0 + u) * (1.0 + u))).real();
      result.swallowed = true;
      result.swallow_time = start + std::max(0.0, std::log(0.25 / f));
      return result;
    }
    result.value = *next;
    start += map.duration;
  }
  return result;
}

complex trace_point(DrivingPath const& driving, double t, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw domain_error(fmt::format("epsilon must lie in (0,1), got {}", epsilon));
  }
  if (!(t >= 0.0 && t <= driving.horizon() * (1.0 + 1e-12))) {
    throw domain_error(fmt::format("t={} outside [0, {}]", t, driving.horizon()));
  }
  std::vector<ElementaryMap> maps;
  for (std::size_t k = 0; k + 1 < driving.size() && driving.times[k] < t; ++k) {
    maps.push_back({driving.values[k], std::min(driving.times[k + 1], t) - driving.times[k]});
  }
  auto const tip_driving = maps.empty() ? driving.values.front() : maps.back().driving;
  auto g = (1.0 - epsilon) * unit(tip_driving);
  for (auto it = maps.rbegin(); it != maps.rend(); ++it) {
    auto const flow = integrate(g, unit(it->driving), it->duration, -1.0);
    if (flow.hit_singularity) {
      throw integration_error("reverse Loewner flow reached the driving point");
    }
    g = flow.value;
  }
  if (std::abs(g) > 1.0 + 1e-9) {
    throw integration_error(
        fmt::format("reverse Loewner flow left the disc (|g| = {}); step too coarse", std::abs(g)));
  }
  return g;
}

}  // namespace sle
