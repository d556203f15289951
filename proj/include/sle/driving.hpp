#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sle {

/// Number of dyadic sub-positions per base step. Node positions are stored as
/// integers in these units so that bridge refinement is exact and every
/// random draw can be keyed by the position it belongs to.
inline constexpr std::uint64_t kDyadicUnits = std::uint64_t{1} << 32;

/// Discretized driving function lambda(t) = sqrt(kappa) B_t on a capacity-time
/// grid. The grid starts uniform (step dt) and may be refined locally by
/// Brownian-bridge bisection; values at existing nodes never change.
///
/// Every Gaussian draw is a pure function of (seed, node position), so a path
/// refined in any order equals the same path refined in any other order.
struct DrivingPath {
  double kappa = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> positions;  // node positions in kDyadicUnits
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::size_t intervals() const { return values.empty() ? 0 : values.size() - 1; }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }

  /// Piecewise-constant driving at capacity time t: the value at the left
  /// node of the interval containing t (value[0] at t = 0).
  double value_at(double t) const;
};

/// Brownian driving with independent N(0, kappa dt) increments on the grid
/// j dt, j = 0..ceil(horizon/dt). kappa == 0 yields the deterministic
/// lambda == 0 path used as a closed-form regression target.
DrivingPath sample_driving(double kappa, double horizon, double dt, std::uint64_t seed);

/// Brownian driving on an arbitrary increasing time grid starting at 0.
/// dt records the first step.
DrivingPath sample_driving_on(double kappa, std::span<double const> times, std::uint64_t seed);

/// Capacity grid whose step grows like dt0 e^{growth t}, capped at dt_max.
/// The trace shrinks toward the target at rate e^{-t}, so growth 2 keeps the
/// displacement per step roughly constant. growth 0 gives the uniform grid.
std::vector<double> capacity_grid(double horizon, double dt0, double growth, double dt_max);

/// Splits interval k (between nodes k and k+1) into 2^levels pieces by
/// recursive Brownian-bridge bisection. Returns the number of inserted nodes.
std::size_t refine_interval(DrivingPath& path, std::size_t k, int levels);

/// Splits many intervals at once; levels[k] applies to interval k of the
/// current path (0 leaves it alone).
void refine_intervals(DrivingPath& path, std::span<int const> levels);

/// Bisects every interval once.
DrivingPath refine_all(DrivingPath const& path);

/// Standard normal draw keyed by (seed, key). Deterministic across calls.
double keyed_normal(std::uint64_t seed, std::uint64_t key);

/// Uniform [0,1) draw keyed by (seed, key).
double keyed_uniform(std::uint64_t seed, std::uint64_t key);

/// Per-sample seed schedule used by campaigns: seed_i = hash(master, i).
std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t index);

}  // namespace sle
