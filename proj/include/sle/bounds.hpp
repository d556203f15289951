#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sle/geometry.hpp"

namespace sle {

enum class Mode { radial, whole_plane };

Mode parse_mode(std::string const& name);
std::string mode_name(Mode mode);

/// Query point with its radius and the derived quantities the kernels need.
/// y = 1 - |z| in radial mode; whole-plane specs carry y = 1 internally so the
/// shared P_y code path reduces to the interior power law.
struct PointSpec {
  complex z;
  double r = 0.0;
  double y = 0.0;
  double l = 0.0;
};

/// l_k = distance from z_k to anchors and to z_1..z_{k-1}, in input order.
std::vector<double> l_sequence(std::span<complex const> points, std::span<complex const> anchors);

/// {0, 1} for radial, {0} for whole-plane.
std::vector<complex> mode_anchors(Mode mode);

/// Validates the points for the mode and fills y and l.
std::vector<PointSpec> make_point_specs(Mode mode, std::span<complex const> points,
                                        std::span<double const> radii);

/// prod_k P_{y_k}(r_k ^ l_k) / P_{y_k}(l_k).
double radial_bound_kernel(SleParams const& params, std::span<PointSpec const> specs);

/// prod_k ((r_k ^ l_k) / l_k)^{2-d}.
double whole_plane_bound_kernel(SleParams const& params, std::span<PointSpec const> specs);

double bound_kernel(Mode mode, SleParams const& params, std::span<PointSpec const> specs);

/// The multipoint kernel depends on the order of the points through l_k.
/// Smallest kernel over all orders (input of at most 8 points).
double min_over_orders_kernel(Mode mode, SleParams const& params, std::span<complex const> points,
                              std::span<double const> radii);

/// P_{y0}(r) / P_{y0}(R), 0 < r < R.
double one_point_kernel(SleParams const& params, double y0, double r, double R);

struct Ring {
  double y;
  double r;
  double R;
};

/// (r0/R0)^{alpha/4} prod_j P_{y_j}(r_j)/P_{y_j}(R_j).
double ordered_crossing_kernel(SleParams const& params, double r0, double R0,
                               std::span<Ring const> rings);

/// Concentric circles of one group, radii descending by a factor of 4.
struct CircleGroup {
  complex center;
  std::vector<double> radii;
  double y = 0.0;
  int point = -1;  // index of the originating query point, -1 if none

  double r_min() const { return radii.back(); }
  double r_max() const { return radii.front(); }
};

struct Circle {
  complex center;
  double radius;
  int group;
};

/// How a requested radius was snapped up to l / 4^h.
struct RadiusSnap {
  double requested = 0.0;
  double snapped = 0.0;
  int h = 0;
  double factor = 1.0;  // snapped / requested, in [1, 4)
};

struct CircleFamily {
  std::vector<CircleGroup> groups;
  std::vector<RadiusSnap> snaps;  // one per input point (build_circle_family only)

  std::vector<Circle> circles() const;
};

enum class FamilyHypothesis {
  empty_group,
  ratio,             // radii within a group not in ratio 4
  overlapping_annuli,
  encloses_anchor,   // circle passes through or encloses 0 or 1
};

std::string hypothesis_name(FamilyHypothesis hypothesis);

class FamilyError : public domain_error {
 public:
  FamilyError(FamilyHypothesis hypothesis, int group_a, int group_b, std::string const& what);
  FamilyHypothesis hypothesis() const { return hypothesis_; }
  int group_a() const { return group_a_; }
  int group_b() const { return group_b_; }

 private:
  FamilyHypothesis hypothesis_;
  int group_a_;
  int group_b_;
};

/// Closed annuli {a1 <= |z - c1| <= b1} and {a2 <= |z - c2| <= b2} meet.
bool annuli_intersect(complex c1, double a1, double b1, complex c2, double a2, double b2);

/// Throws FamilyError naming the first violated hypothesis.
void validate_family(CircleFamily const& family);

/// prod_e P_{y_e}(r_e)/P_{y_e}(R_e) over a validated family.
double concentric_family_kernel(SleParams const& params, CircleFamily const& family);

/// Circles l_j/4^s (s = 1..h_j), minus those meeting a later disc
/// D_k = {|z - z_k| <= l_k/4}, split into uninterrupted concentric runs.
/// Requested radii are snapped up to l_j / 4^{h_j}.
CircleFamily build_circle_family(std::span<PointSpec const> specs);

/// Upper bound on the number of groups for n points: n + 3n(n-1)/2.
std::size_t family_group_bound(std::size_t n);

/// Kernels of a group cut into consecutive runs at the given positions
/// (indices into radii where a new run starts), and the domination
/// prod_runs P_run <= 4^{alpha * cuts} P_group.
struct RunSplit {
  double runs_product;
  double group_kernel;
  double bound;  // 4^{alpha * cuts} * group_kernel
};
RunSplit split_group_kernel(SleParams const& params, CircleGroup const& group,
                            std::span<int const> cuts);

/// Evaluates a kernel query document
/// {"kappa", "mode", "points": [{"z": [re, im], "r"}]}.
nlohmann::json kernel_query(nlohmann::json const& query);

}  // namespace sle
