#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "sle/driving.hpp"
#include "sle/geometry.hpp"

namespace sle {

/// One step of the discretized chain: the radial Loewner flow run for
/// `duration` with the driving held at `driving`.
struct ElementaryMap {
  double driving;
  double duration;
};

/// Distance to the driving point below which a forward trajectory counts as
/// swallowed.
inline constexpr double kSwallowThreshold = 1e-12;

/// Closed-form forward map of one elementary step. With constant driving
/// e^{i mu} the flow conserves e^{-t} F(e^{-i mu} g), F(w) = w/(1+w)^2, so
/// g is the root in the closed disc of a quadratic. Returns nullopt for points
/// on the slit, i.e. swallowed during this step.
std::optional<complex> slit_forward(complex z, ElementaryMap const& map);

/// Inverse of slit_forward: maps the unit disc onto the disc minus the slit
/// grown during the step.
complex slit_inverse(complex w, ElementaryMap const& map);

/// Tip of the slit grown by a single step of length `duration` from 1 along
/// the radius, x with x/(1+x)^2 = e^{-duration}/4.
double slit_tip(double duration);

/// Forward chain g_t for t = time of step_index: the composition of the first
/// step_index elementary maps read off the driving path.
class LoewnerState {
 public:
  LoewnerState(DrivingPath const& driving, std::size_t step_index);

  DrivingPath const& driving() const { return *driving_; }
  std::size_t step_index() const { return step_index_; }
  double time() const { return driving_->times[step_index_]; }
  /// Elementary maps applied so far, in application order.
  std::vector<ElementaryMap> const& map_stack() const { return maps_; }

 private:
  DrivingPath const* driving_;
  std::size_t step_index_;
  std::vector<ElementaryMap> maps_;
};

struct ForwardResult {
  complex value;
  bool swallowed = false;
  double swallow_time = 0.0;  // capacity time at which the point was swallowed
};

/// g_t(z) by fixed-step RK4 on the radial Loewner equation, halving the local
/// step near the driving point. Swallowed points report the time they hit
/// the singularity instead of a value.
ForwardResult forward_map_apply(LoewnerState const& state, complex z);

/// Same flow with the closed-form slit maps.
ForwardResult forward_map_slit(LoewnerState const& state, complex z);

/// gamma(t) from the time-reversed Loewner flow: start at
/// (1 - epsilon) e^{i lambda(t)} and integrate back to time 0 with the driving
/// read backwards. Throws integration_error if the flow leaves the disc.
complex trace_point(DrivingPath const& driving, double t, double epsilon);

class integration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sle
