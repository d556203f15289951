#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "sle/driving.hpp"
#include "sle/geometry.hpp"

namespace sle {

/// Polyline approximation of an SLE curve with the parameters that produced
/// it. Radial traces start at 1 and live in the closed unit disc; whole-plane
/// approximants are radial traces rotated and scaled by the disc radius.
struct Trace {
  std::vector<complex> points;
  std::vector<double> times;
  double kappa = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  double horizon = 0.0;

  std::size_t size() const { return points.size(); }
};

enum class Scheme {
  slit,          // closed-form elementary slit maps, exact for the discrete chain
  reverse_flow,  // RK4 on the time-reversed Loewner equation from (1-eps) e^{i lambda}
};

/// A query point around which the polyline must resolve the curve: segments
/// are bisected until their length is at most ratio * max(dist, r_min).
struct FocusPoint {
  complex z;
  double r_min;
};

struct Refinement {
  std::vector<FocusPoint> focus;
  // 0.2 still biased the small-r hit frequencies; 0.1 is within noise of 0.05.
  double ratio = 0.1;
  double max_segment = std::numeric_limits<double>::infinity();
  std::size_t max_nodes = 200'000;
  int max_passes = 12;

  bool active() const {
    return !focus.empty() || max_segment < std::numeric_limits<double>::infinity();
  }
};

struct EngineConfig {
  double dt = 0.01;          // first base step
  double grid_growth = 2.0;  // base step dt e^{growth t}; 0 is the uniform grid
  double dt_max = 0.5;       // cap on the base step when grid_growth > 0
  double horizon = 0.0;      // 0 selects default_horizon
  double epsilon = 1e-6;
  Scheme scheme = Scheme::slit;
  bool zero_driving = false;  // lambda == 0 test mode
  double disc_radius = 1.0;   // whole-plane approximant only
  Refinement refinement;
};

struct WholePlaneConfig {
  double disc_radius;
  double target_points_radius;
  double kappa;
};

/// ln(N / r_min) + 6: the conformal radius of the target decays like e^{-t},
/// so past this time the curve sits well inside the smallest query radius.
double default_horizon(double disc_radius, double r_min);

/// Polyline through the discrete chain's trace at every node of `driving`.
Trace trace_from_driving(DrivingPath const& driving, Scheme scheme, double epsilon);

/// Same, bisecting driving intervals (Brownian bridge) until the refinement
/// targets hold. Focus points are in the trace's own coordinates.
Trace trace_from_driving(DrivingPath driving, Scheme scheme, double epsilon,
                         Refinement const& refinement);

/// Radial SLE_kappa in D from 1 to 0 on the uniform grid, extracted with the
/// reverse flow at every grid time.
Trace simulate_radial_trace(double kappa, double horizon, double dt, std::uint64_t seed,
                            double epsilon);

/// Base driving path of an engine configuration (uniform or growing grid).
DrivingPath engine_driving(double kappa, std::uint64_t seed, EngineConfig const& cfg);

/// Radial SLE_kappa under a full engine configuration.
Trace simulate_radial_trace(double kappa, std::uint64_t seed, EngineConfig const& cfg);

/// Whole-plane SLE_kappa toward 0, approximated by a radial trace in the disc
/// of radius N started from a uniform boundary angle.
Trace simulate_whole_plane_approx(WholePlaneConfig const& cfg, double horizon, double dt,
                                  std::uint64_t seed, double epsilon,
                                  Scheme scheme = Scheme::reverse_flow);

/// Whole-plane approximant under a full engine configuration; cfg.disc_radius
/// is N and focus points are given in the plane (not the unit disc).
Trace simulate_whole_plane_approx(double kappa, std::uint64_t seed, EngineConfig const& cfg);

/// Start angle of the whole-plane approximant for a seed.
double whole_plane_angle(std::uint64_t seed);

/// Binary record: header (kappa, dt, horizon as f64; seed, point count as
/// u64), then (re, im) f64 pairs, then the capacity time of every point. All
/// fields little-endian. Round-trips exactly.
void write_trace_binary(Trace const& trace, std::ostream& out);
Trace read_trace_binary(std::istream& in);

/// CSV with header "t,re,im"; values printed with 17 significant digits.
void write_trace_csv(Trace const& trace, std::ostream& out);
Trace read_trace_csv(std::istream& in);

/// Distance from z to the polyline.
double dist_to_trace(Trace const& trace, complex z);

/// Euclidean distance from z to the segment [a, b].
double point_segment_distance(complex z, complex a, complex b);

}  // namespace sle
