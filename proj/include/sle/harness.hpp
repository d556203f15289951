#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sle/bounds.hpp"
#include "sle/trace.hpp"

namespace sle {

// ---------------------------------------------------------------- statistics

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr double kWilsonZ = 1.959964;

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t hits, std::size_t n, double z = kWilsonZ);

struct Proportion {
  std::size_t hits = 0;
  std::size_t n = 0;
  double p_hat = 0.0;
  Interval ci;
  double std_err = 0.0;  // Wilson half-width / z
};

Proportion proportion(std::size_t hits, std::size_t n);

/// Percentile bootstrap interval of a statistic of the sample mean of
/// f(x_i); resampling is seeded and deterministic.
Interval bootstrap_mean_interval(std::span<double const> values, std::uint64_t seed,
                                 int resamples = 1000, double level = 0.95);

struct SweepPoint {
  double r;
  double p_hat;
  double std_err;
};

struct ExponentFit {
  std::vector<double> radii;   // radii used in the fit
  std::vector<double> log_p;
  std::vector<double> log_se;
  std::vector<double> dropped;  // radii with p_hat == 0, excluded
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
  double chi2_red = 0.0;
};

/// Weighted least squares of log p_hat on log r, weights 1/se(log p)^2 with
/// se(log p) = std_err/p_hat. The slope error is inflated by sqrt(chi2_red)
/// when the scatter exceeds the stated errors. Without positive std_err the
/// fit is unweighted with the residual-based error.
ExponentFit fit_exponent(std::span<SweepPoint const> sweep);

/// p_hat <= C kernel with a single constant: C_r = p_hat/kernel per radius,
/// C = max_r C_r, and the constant is stable when max/min <= max_spread.
struct DominationCheck {
  std::vector<double> c_hat;
  double c_max = 0.0;
  double c_min = 0.0;
  double spread = 0.0;
  bool pass = false;
};

DominationCheck check_domination(std::span<double const> p_hat, std::span<double const> kernel,
                                 double max_spread = 3.0);

// ------------------------------------------------------------------ geometry

/// Uniform bucket grid over the segments of a polyline. Buckets only prune:
/// every query evaluates exact point-segment distances.
class SegmentIndex {
 public:
  SegmentIndex(std::span<complex const> points, double bucket);

  /// min(dist(z, polyline), cutoff); exact whenever the distance is below
  /// the cutoff. The cutoff must not exceed the bucket size.
  double distance(complex z, double cutoff) const;

  double bucket() const { return bucket_; }
  std::int64_t bucket_of(double coordinate) const;

  /// Segment ids stored in bucket (ix, iy).
  std::span<std::uint32_t const> segments_in(std::int64_t ix, std::int64_t iy) const;
  std::vector<std::pair<std::int64_t, std::int64_t>> occupied() const;

  complex a(std::uint32_t s) const { return points_[s]; }
  complex b(std::uint32_t s) const { return points_[s + 1]; }

 private:
  std::span<complex const> points_;
  double bucket_;
  std::vector<std::uint64_t> keys_;  // bucket key per entry, sorted
  std::vector<std::uint32_t> ids_;   // segment id per entry
};

struct Region {
  enum class Kind { disc, box, plane };
  Kind kind = Kind::disc;
  complex center{0.0, 0.0};
  double radius = 1.0;
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

  static Region unit_disc() { return {}; }
  static Region disc(complex c, double r);
  static Region box(double x0, double x1, double y0, double y1);
  /// No restriction at all.
  static Region plane();

  bool contains(complex z) const;
  double area() const;
  nlohmann::json to_json() const;
  static Region from_json(nlohmann::json const& j);
};

struct MinkowskiEstimate {
  double r = 0.0;
  double d = 0.0;
  double grid_h = 0.0;
  std::size_t cells = 0;        // centers within r of the polyline
  std::size_t inner_cells = 0;  // whole cell within r
  std::size_t outer_cells = 0;  // cell meets the r-neighbourhood
  double area = 0.0;
  double area_lower = 0.0;
  double area_upper = 0.0;
  double content = 0.0;  // r^{d-2} area
  double content_lower = 0.0;
  double content_upper = 0.0;
  std::optional<Region> region;
};

/// r^{d-2} times the area of {dist(., trace) < r}, counted on the grid of
/// pitch grid_h anchored at the origin and restricted to cell centers inside
/// the region. Requires 0 < grid_h <= r/4. Brackets count cells entirely
/// inside / touching the neighbourhood.
MinkowskiEstimate minkowski_content(Trace const& trace, double d, double r, double grid_h,
                                    std::optional<Region> const& region);

/// Same with d = 1 + kappa/8 of the trace (d = 1 for the kappa = 0 mode).
MinkowskiEstimate minkowski_content(Trace const& trace, double r, double grid_h,
                                    std::optional<Region> const& region);

// ----------------------------------------------------------------- crossings

/// First polyline parameter (segment index + fraction) at which the trace
/// reaches each circle's closed disc; nullopt when never.
struct CrossingRecord {
  std::vector<std::optional<double>> tau;

  /// Indices of hit circles sorted by first visit.
  std::vector<int> order() const;
};

CrossingRecord crossing_times(Trace const& trace, std::span<Circle const> circles);
CrossingRecord crossing_times(Trace const& trace, CircleFamily const& family);

/// tau[c_0] rel_0 tau[c_1] rel_1 ... with every circle hit; rel is < when
/// strict[i] and <= otherwise.
struct OrderedChain {
  std::vector<int> circles;
  std::vector<bool> strict;
};

bool chain_occurs(OrderedChain const& chain, CrossingRecord const& record);

/// The ordered crossing event around z0 (outer circle R0, circle r0, inner
/// circle r0') with intermediate rings (R_j, r_j) around z_j:
/// tau(r0) < tau(R1) <= tau(r1) < ... < tau(Rm) <= tau(rm) < tau(r0') < inf.
struct OrderedEvent {
  struct Ring {
    complex z;
    double R;
    double r;
  };
  complex z0;
  double R0 = 0.0;
  double r0 = 0.0;
  double r0_prime = 0.0;
  std::vector<Ring> rings;

  /// [xi_0, xi^_1, xi_1, ..., xi^_m, xi_m, xi_0'].
  std::vector<Circle> circles() const;
  OrderedChain chain() const;
  /// Checks nesting and the disjoint-disc hypotheses; throws domain_error.
  void validate() const;
  double kernel(SleParams const& params) const;

  nlohmann::json to_json() const;
  static OrderedEvent from_json(nlohmann::json const& j);
};

Proportion ordered_event_frequency(std::span<CrossingRecord const> records,
                                   OrderedEvent const& event);
Proportion ordered_event_frequency(std::span<Trace const> traces, OrderedEvent const& event);

// ---------------------------------------------------------------- campaigns

struct CampaignPlan {
  std::string name = "campaign";
  Mode mode = Mode::radial;
  double kappa = 2.0;
  EngineConfig engine;
  std::vector<complex> points;
  std::vector<std::vector<double>> radius_sets;  // one radius per point, per set
  std::vector<OrderedEvent> events;
  std::vector<double> minkowski_radii;
  double grid_divisor = 8.0;  // grid_h = r / grid_divisor
  std::optional<Region> region;  // default: unit disc (radial), required (whole-plane)
  std::optional<double> dimension;  // content exponent; default 1 + kappa/8, or 1 with zero driving
  int n_max = 3;
  std::size_t samples = 100;
  std::uint64_t master_seed = 1;
  std::size_t shard_size = 250;

  /// Rejects plans that violate a module invariant, naming it.
  void validate() const;
  /// Engine used for every sample: horizon and refinement targets derived
  /// from the queries unless set explicitly.
  EngineConfig resolved_engine() const;
  std::vector<Circle> event_circles() const;
  std::optional<Region> resolved_region() const;
  double content_dimension() const;

  nlohmann::json to_json() const;
  static CampaignPlan from_json(nlohmann::json const& j);
};

struct SampleRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::size_t nodes = 0;
  std::vector<double> dist;     // per query point
  std::vector<double> tau;      // per event circle, NaN when never hit
  std::vector<double> content;  // per Minkowski radius
  std::string error;            // nonempty when the sample failed

  bool failed() const { return !error.empty(); }
};

/// Pure function of (plan, index).
SampleRecord run_sample(CampaignPlan const& plan, EngineConfig const& engine, std::uint64_t index);
Trace simulate_sample(CampaignPlan const& plan, EngineConfig const& engine, std::uint64_t seed);

/// Partial summary over any set of sample indices. merge is associative and
/// commutative; aggregates are computed from the merged records in index
/// order so the result does not depend on how the work was split.
struct CampaignSummary {
  std::vector<SampleRecord> records;  // sorted by index, unique

  static CampaignSummary merge(CampaignSummary a, CampaignSummary b);
  std::vector<std::uint64_t> failed() const;
};

CampaignSummary run_samples(CampaignPlan const& plan, std::uint64_t begin, std::uint64_t end,
                            unsigned workers = 1);

struct MomentCell {
  int n;
  double r;
  double moment;
  Interval ci;
  double running_min;  // min of the moment over radii >= r
};

struct MomentTable {
  std::vector<double> radii;
  int n_max = 0;
  std::vector<std::vector<double>> contents;  // [radius][sample]
  std::vector<MomentCell> cells;              // n-major

  MomentCell const& at(int n, std::size_t radius_index) const;
};

MomentTable moment_table(std::vector<double> radii, std::vector<std::vector<double>> contents,
                         int n_max, std::uint64_t seed, int resamples = 1000);

struct HitResult {
  std::vector<std::vector<double>> distances;  // [sample][point]
  std::vector<std::vector<double>> radius_sets;
  std::vector<Proportion> joint;                // per radius set
  std::vector<std::vector<Proportion>> marginal;  // [set][point]
  std::size_t samples = 0;
};

/// Hit statistics from per-sample distances: a sample hits a radius set when
/// dist(trace, z_k) < r_k for every k.
HitResult evaluate_hits(std::vector<std::vector<double>> distances,
                        std::vector<std::vector<double>> radius_sets);

HitResult estimate_hit_probability(SleParams const& params, Mode mode,
                                   std::span<PointSpec const> specs, std::size_t samples,
                                   std::uint64_t seed, EngineConfig const& engine,
                                   unsigned workers = 1);

MomentTable minkowski_moments(SleParams const& params, Mode mode, int n_max,
                              std::vector<double> r_list, std::size_t samples, std::uint64_t seed,
                              std::optional<Region> region, EngineConfig const& engine,
                              unsigned workers = 1);

/// Deterministic aggregate document of a summary.
nlohmann::json aggregate_json(CampaignPlan const& plan, CampaignSummary const& summary);

struct CampaignOptions {
  unsigned workers = 1;
  bool resume = true;
  /// Stop after this many newly computed shards (simulates an interruption).
  std::optional<std::size_t> stop_after_shards;
  std::ostream* progress = nullptr;
};

struct CampaignResult {
  CampaignSummary summary;
  nlohmann::json aggregate;
  std::vector<std::uint64_t> failed;
  bool complete = false;
};

/// Runs (or resumes) a campaign in `dir`: manifest.json, shards/*.csv with
/// raw per-sample statistics, aggregate.json once every shard exists.
CampaignResult run_campaign(CampaignPlan const& plan, std::filesystem::path const& dir,
                            CampaignOptions const& options = {});

/// Error raised by in-memory estimators when samples failed.
class SampleFailure : public std::runtime_error {
 public:
  SampleFailure(std::vector<std::uint64_t> indices, std::string const& first_error);
  std::vector<std::uint64_t> const& indices() const { return indices_; }

 private:
  std::vector<std::uint64_t> indices_;
};

std::string code_version();

}  // namespace sle
