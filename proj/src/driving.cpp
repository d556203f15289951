#include "sle/driving.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "sle/geometry.hpp"

namespace sle {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// SplitMix64 as a UniformRandomBitGenerator, so the standard distributions
// can run off a counter-derived state.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    auto z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

std::uint64_t key_state(std::uint64_t seed, std::uint64_t key) {
  return mix64(mix64(seed) ^ (key * 0xd6e8feb86659fd93ULL));
}

}  // namespace

double keyed_normal(std::uint64_t seed, std::uint64_t key) {
  SplitMix64 engine(key_state(seed, key));
  std::normal_distribution<double> normal(0.0, 1.0);
  return normal(engine);
}

double keyed_uniform(std::uint64_t seed, std::uint64_t key) {
  SplitMix64 engine(key_state(seed, key));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return uniform(engine);
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t index) {
  return mix64(mix64(master_seed) + mix64(index ^ 0x5851f42d4c957f2dULL));
}

double DrivingPath::value_at(double t) const {
  if (values.empty()) {
    return 0.0;
  }
  // Interval (t_{k-1}, t_k] carries value[k-1].
  auto const it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) {
    return values.front();
  }
  auto const k = static_cast<std::size_t>(it - times.begin());
  return values[std::min(k, values.size()) - 1];
}

DrivingPath sample_driving(double kappa, double horizon, double dt, std::uint64_t seed) {
  if (!(kappa >= 0.0 && kappa < 8.0)) {
    throw domain_error(fmt::format("kappa must lie in (0,8), got {}", kappa));
  }
  if (!(horizon > 0.0)) {
    throw domain_error(fmt::format("horizon must be positive, got {}", horizon));
  }
  if (!(dt > 0.0 && dt <= horizon)) {
    throw domain_error(fmt::format("dt must lie in (0, horizon], got {}", dt));
  }
  auto const steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  DrivingPath path;
  path.kappa = kappa;
  path.dt = dt;
  path.seed = seed;
  path.positions.resize(steps + 1);
  path.times.resize(steps + 1);
  path.values.resize(steps + 1);
  auto const scale = std::sqrt(kappa * dt);
  for (std::size_t j = 0; j <= steps; ++j) {
    path.positions[j] = j * kDyadicUnits;
    path.times[j] = static_cast<double>(j) * dt;
    if (j > 0) {
      auto const step = kappa == 0.0 ? 0.0 : scale * keyed_normal(seed, path.positions[j]);
      path.values[j] = path.values[j - 1] + step;
    }
  }
  return path;
}

DrivingPath sample_driving_on(double kappa, std::span<double const> times, std::uint64_t seed) {
  if (!(kappa >= 0.0 && kappa < 8.0)) {
    throw domain_error(fmt::format("kappa must lie in (0,8), got {}", kappa));
  }
  if (times.size() < 2 || times.front() != 0.0) {
    throw domain_error("driving grid needs at least two times starting at 0");
  }
  DrivingPath path;
  path.kappa = kappa;
  path.dt = times[1];
  path.seed = seed;
  path.positions.resize(times.size());
  path.times.assign(times.begin(), times.end());
  path.values.resize(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) {
    path.positions[j] = j * kDyadicUnits;
    if (j > 0) {
      auto const step = times[j] - times[j - 1];
      if (!(step > 0.0)) {
        throw domain_error("driving grid times must be strictly increasing");
      }
      path.values[j] = path.values[j - 1] +
                       (kappa == 0.0 ? 0.0 : std::sqrt(kappa * step) * keyed_normal(seed, path.positions[j]));
    }
  }
  return path;
}

std::vector<double> capacity_grid(double horizon, double dt0, double growth, double dt_max) {
  if (!(horizon > 0.0 && dt0 > 0.0 && dt0 <= horizon && growth >= 0.0 && dt_max >= dt0)) {
    throw domain_error("capacity_grid: need 0 < dt0 <= horizon, growth >= 0, dt_max >= dt0");
  }
  std::vector<double> times{0.0};
  while (times.back() < horizon * (1.0 - 1e-12)) {
    auto const t = times.back();
    auto const step = std::min(dt_max, dt0 * std::exp(growth * t));
    times.push_back(t + step);
  }
  return times;
}

namespace {

struct Node {
  std::uint64_t position;
  double time;
  double value;
};

// Appends the interior nodes of [a, b] produced by `levels` bisections, in
// time order.
void bisect(DrivingPath const& path, Node const& a, Node const& b, int levels,
            std::vector<Node>& out) {
  if (levels <= 0 || b.position - a.position < 2) {
    return;
  }
  auto const mid_position = a.position + (b.position - a.position) / 2;
  auto const span = b.time - a.time;
  auto const mid_time = a.time + span * static_cast<double>(mid_position - a.position) /
                                     static_cast<double>(b.position - a.position);
  auto const mean = 0.5 * (a.value + b.value);
  // Bridge variance at the midpoint: kappa * (t_m - t_a)(t_b - t_m)/(t_b - t_a).
  auto const left = mid_time - a.time;
  auto const right = b.time - mid_time;
  auto const var = path.kappa * left * right / span;
  auto const value =
      path.kappa == 0.0 ? mean : mean + std::sqrt(var) * keyed_normal(path.seed, mid_position);
  Node const mid{mid_position, mid_time, value};
  bisect(path, a, mid, levels - 1, out);
  out.push_back(mid);
  bisect(path, mid, b, levels - 1, out);
}

}  // namespace

void refine_intervals(DrivingPath& path, std::span<int const> levels) {
  auto const n = path.size();
  if (levels.size() != path.intervals()) {
    throw std::invalid_argument("refine_intervals: one level per interval required");
  }
  DrivingPath out;
  out.kappa = path.kappa;
  out.dt = path.dt;
  out.seed = path.seed;
  std::vector<Node> scratch;
  auto push = [&](Node const& node) {
    out.positions.push_back(node.position);
    out.times.push_back(node.time);
    out.values.push_back(node.value);
  };
  for (std::size_t k = 0; k < n; ++k) {
    Node const a{path.positions[k], path.times[k], path.values[k]};
    push(a);
    if (k + 1 < n && levels[k] > 0) {
      Node const b{path.positions[k + 1], path.times[k + 1], path.values[k + 1]};
      scratch.clear();
      bisect(path, a, b, levels[k], scratch);
      for (auto const& node : scratch) {
        push(node);
      }
    }
  }
  path = std::move(out);
}

std::size_t refine_interval(DrivingPath& path, std::size_t k, int levels) {
  if (k >= path.intervals()) {
    throw std::out_of_range("refine_interval: interval index out of range");
  }
  auto const before = path.size();
  std::vector<int> all(path.intervals(), 0);
  all[k] = levels;
  refine_intervals(path, all);
  return path.size() - before;
}

DrivingPath refine_all(DrivingPath const& path) {
  auto copy = path;
  std::vector<int> all(copy.intervals(), 1);
  refine_intervals(copy, all);
  return copy;
}

}  // namespace sle
