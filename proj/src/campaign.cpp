#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "sle/harness.hpp"

namespace sle {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Polyline segments are capped at this fraction of the smallest Minkowski
// radius. Against a four times finer cap the content moves by about 1.5%
// at r = 0.01, for a fifth of the cost.
constexpr double kMinkowskiSegment = 0.5;

// Smallest scale assumed for the horizon when a plan has no queries.
constexpr double kBareScale = 1e-3;

constexpr std::uint64_t kBootstrapSalt = 0x6d6f6d656e747321ULL;

std::string scheme_name(Scheme s) { return s == Scheme::slit ? "slit" : "reverse_flow"; }

Scheme parse_scheme(std::string const& name) {
  if (name == "slit") {
    return Scheme::slit;
  }
  if (name == "reverse_flow") {
    return Scheme::reverse_flow;
  }
  throw domain_error(fmt::format("unknown scheme '{}' (expected slit or reverse_flow)", name));
}

nlohmann::json engine_to_json(EngineConfig const& e) {
  nlohmann::json j{{"dt", e.dt},
                   {"grid_growth", e.grid_growth},
                   {"dt_max", e.dt_max},
                   {"horizon", e.horizon},
                   {"epsilon", e.epsilon},
                   {"scheme", scheme_name(e.scheme)},
                   {"zero_driving", e.zero_driving},
                   {"disc_radius", e.disc_radius}};
  nlohmann::json r{{"ratio", e.refinement.ratio},
                   {"max_nodes", e.refinement.max_nodes},
                   {"max_passes", e.refinement.max_passes}};
  if (std::isfinite(e.refinement.max_segment)) {
    r["max_segment"] = e.refinement.max_segment;
  }
  j["refinement"] = r;
  return j;
}

void check_keys(nlohmann::json const& j, std::initializer_list<char const*> allowed,
                char const* where) {
  for (auto const& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](char const* a) { return key == a; })) {
      throw domain_error(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

EngineConfig engine_from_json(nlohmann::json const& j) {
  if (!j.is_object()) {
    throw domain_error("engine must be a JSON object");
  }
  check_keys(j,
             {"dt", "grid_growth", "dt_max", "horizon", "epsilon", "scheme", "zero_driving",
              "disc_radius", "refinement"},
             "engine");
  EngineConfig e;
  e.dt = j.value("dt", e.dt);
  e.grid_growth = j.value("grid_growth", e.grid_growth);
  e.dt_max = j.value("dt_max", e.dt_max);
  e.horizon = j.value("horizon", e.horizon);
  e.epsilon = j.value("epsilon", e.epsilon);
  e.scheme = parse_scheme(j.value("scheme", scheme_name(e.scheme)));
  e.zero_driving = j.value("zero_driving", e.zero_driving);
  e.disc_radius = j.value("disc_radius", e.disc_radius);
  if (j.contains("refinement")) {
    auto const& r = j["refinement"];
    check_keys(r, {"ratio", "max_segment", "max_nodes", "max_passes"}, "engine.refinement");
    e.refinement.ratio = r.value("ratio", e.refinement.ratio);
    e.refinement.max_segment = r.value("max_segment", e.refinement.max_segment);
    e.refinement.max_nodes = r.value("max_nodes", e.refinement.max_nodes);
    e.refinement.max_passes = r.value("max_passes", e.refinement.max_passes);
  }
  return e;
}

nlohmann::json proportion_json(Proportion const& p) {
  return {{"hits", p.hits}, {"n", p.n},          {"p_hat", p.p_hat},
          {"lo", p.ci.lo},  {"hi", p.ci.hi},     {"std_err", p.std_err}};
}

std::string number(double x) {
  if (std::isnan(x)) {
    return "nan";
  }
  return fmt::format("{:.17g}", x);
}

std::string sanitize(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '\r') {
      c = ';';
    }
  }
  return s;
}

std::size_t shard_count(CampaignPlan const& plan) {
  return (plan.samples + plan.shard_size - 1) / plan.shard_size;
}

std::filesystem::path shard_path(std::filesystem::path const& dir, std::size_t shard) {
  return dir / "shards" / fmt::format("shard_{:05d}.csv", shard);
}

std::string shard_header(CampaignPlan const& plan) {
  std::string h = "sample_index,seed,nodes";
  for (std::size_t k = 0; k < plan.points.size(); ++k) {
    h += fmt::format(",dist_{}", k);
  }
  for (std::size_t c = 0; c < plan.event_circles().size(); ++c) {
    h += fmt::format(",tau_{}", c);
  }
  for (std::size_t i = 0; i < plan.minkowski_radii.size(); ++i) {
    h += fmt::format(",content_{}", i);
  }
  return h + ",error";
}

std::string shard_csv(CampaignPlan const& plan, CampaignSummary const& summary) {
  std::string out = shard_header(plan) + "\n";
  auto const n_tau = plan.event_circles().size();
  for (auto const& rec : summary.records) {
    out += fmt::format("{},{},{}", rec.index, rec.seed, rec.nodes);
    for (std::size_t k = 0; k < plan.points.size(); ++k) {
      out += "," + number(k < rec.dist.size() ? rec.dist[k] : kNaN);
    }
    for (std::size_t c = 0; c < n_tau; ++c) {
      auto const t = c < rec.tau.size() ? rec.tau[c] : kNaN;
      out += "," + (std::isnan(t) || rec.failed() ? std::string("none") : number(t));
    }
    for (std::size_t i = 0; i < plan.minkowski_radii.size(); ++i) {
      out += "," + number(i < rec.content.size() ? rec.content[i] : kNaN);
    }
    out += "," + sanitize(rec.error) + "\n";
  }
  return out;
}

double parse_number(std::string const& field) {
  if (field == "none" || field == "nan") {
    return kNaN;
  }
  std::size_t used = 0;
  auto const x = std::stod(field, &used);
  if (used != field.size()) {
    throw std::invalid_argument("trailing characters");
  }
  return x;
}

// Reads a shard; nullopt when absent or not a complete shard of this plan.
std::optional<CampaignSummary> read_shard(CampaignPlan const& plan, std::filesystem::path const& path,
                                          std::uint64_t begin, std::uint64_t end) {
  std::ifstream in(path);
  if (!in) {
    return std::nullopt;
  }
  std::string line;
  if (!std::getline(in, line) || line != shard_header(plan)) {
    return std::nullopt;
  }
  auto const n_pts = plan.points.size();
  auto const n_tau = plan.event_circles().size();
  auto const n_cnt = plan.minkowski_radii.size();
  CampaignSummary summary;
  try {
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        f.push_back(cell);
      }
      if (!line.empty() && line.back() == ',') {
        f.emplace_back();
      }
      if (f.size() != 4 + n_pts + n_tau + n_cnt) {
        return std::nullopt;
      }
      SampleRecord rec;
      rec.index = std::stoull(f[0]);
      rec.seed = std::stoull(f[1]);
      rec.nodes = std::stoull(f[2]);
      std::size_t at = 3;
      for (std::size_t k = 0; k < n_pts; ++k) {
        rec.dist.push_back(parse_number(f[at++]));
      }
      for (std::size_t c = 0; c < n_tau; ++c) {
        rec.tau.push_back(parse_number(f[at++]));
      }
      for (std::size_t i = 0; i < n_cnt; ++i) {
        rec.content.push_back(parse_number(f[at++]));
      }
      rec.error = f[at];
      summary.records.push_back(std::move(rec));
    }
  } catch (std::exception const&) {
    return std::nullopt;
  }
  if (summary.records.size() != end - begin) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < summary.records.size(); ++i) {
    if (summary.records[i].index != begin + i ||
        summary.records[i].seed != sample_seed(plan.master_seed, begin + i)) {
      return std::nullopt;
    }
  }
  return summary;
}

void write_atomic(std::filesystem::path const& path, std::string const& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    }
    out << content;
    if (!out.flush()) {
      throw std::runtime_error(fmt::format("write failed for {}", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

double min_radius_at(std::vector<Circle> const& circles, complex c) {
  auto best = std::numeric_limits<double>::infinity();
  for (auto const& x : circles) {
    if (x.center == c) {
      best = std::min(best, x.radius);
    }
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------- plan

void CampaignPlan::validate() const {
  auto const params = exponents(kappa);
  (void)params;
  if (samples < 1) {
    throw domain_error("samples must be at least 1");
  }
  if (shard_size < 1) {
    throw domain_error("shard_size must be at least 1");
  }
  if (!(engine.dt > 0.0)) {
    throw domain_error(fmt::format("engine dt must be positive, got {}", engine.dt));
  }
  if (!(engine.epsilon > 0.0 && engine.epsilon < 1.0)) {
    throw domain_error(fmt::format("engine epsilon must lie in (0, 1), got {}", engine.epsilon));
  }
  if (engine.horizon < 0.0) {
    throw domain_error("engine horizon must be nonnegative (0 selects the default)");
  }
  if (engine.grid_growth > 0.0 && !(engine.dt_max >= engine.dt)) {
    throw domain_error("engine dt_max must be at least dt on the growing grid");
  }
  if (!(engine.refinement.ratio > 0.0 && engine.refinement.max_segment > 0.0)) {
    throw domain_error("refinement ratio and max_segment must be positive");
  }
  if (mode == Mode::radial && engine.disc_radius != 1.0) {
    throw domain_error("disc_radius applies to whole-plane mode only (radial runs in the unit disc)");
  }
  if (!(engine.disc_radius > 0.0)) {
    throw domain_error("disc_radius must be positive");
  }
  for (auto const& set : radius_sets) {
    if (set.size() != points.size()) {
      throw domain_error(fmt::format("radius set has {} radii for {} points", set.size(),
                                     points.size()));
    }
    make_point_specs(mode, points, set);
  }
  if (!points.empty() && radius_sets.empty()) {
    throw domain_error("query points need at least one radius set");
  }
  if (mode == Mode::whole_plane && !points.empty()) {
    double R = 0.0;
    for (auto const z : points) {
      R = std::max(R, std::abs(z));
    }
    if (engine.disc_radius < 4.0 * R) {
      throw domain_error(fmt::format(
          "whole-plane approximant needs N >= 4R (N = {}, R = max |z_k| = {})", engine.disc_radius, R));
    }
  }
  if (mode == Mode::whole_plane && !events.empty()) {
    throw domain_error("ordered crossing events are defined in the unit disc (radial mode)");
  }
  for (auto const& e : events) {
    e.validate();
  }
  if (!minkowski_radii.empty()) {
    for (auto const r : minkowski_radii) {
      if (!(r > 0.0)) {
        throw domain_error(fmt::format("Minkowski radius must be positive, got {}", r));
      }
    }
    if (!(grid_divisor >= 4.0)) {
      throw domain_error(
          fmt::format("grid_h = r/{} violates the resolution floor grid_h <= r/4", grid_divisor));
    }
    if (n_max < 1 || n_max > 4) {
      throw domain_error(fmt::format("moment order n_max must lie in 1..4, got {}", n_max));
    }
    if (mode == Mode::whole_plane && !region) {
      throw domain_error("whole-plane Minkowski content needs an explicit compact region");
    }
    if (region && mode == Mode::whole_plane && region->kind == Region::Kind::plane) {
      throw domain_error("whole-plane Minkowski content needs a compact region, not the plane");
    }
    if (dimension && !(*dimension >= 1.0 && *dimension <= 2.0)) {
      throw domain_error(fmt::format("content dimension must lie in [1, 2], got {}", *dimension));
    }
  }
}

std::vector<Circle> CampaignPlan::event_circles() const {
  std::vector<Circle> out;
  for (auto const& e : events) {
    auto const c = e.circles();
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

std::optional<Region> CampaignPlan::resolved_region() const {
  if (region) {
    if (region->kind == Region::Kind::plane) {
      return std::nullopt;
    }
    return region;
  }
  if (mode == Mode::radial) {
    return Region::unit_disc();
  }
  return std::nullopt;
}

double CampaignPlan::content_dimension() const {
  if (dimension) {
    return *dimension;
  }
  return engine.zero_driving ? 1.0 : exponents(kappa).d;
}

EngineConfig CampaignPlan::resolved_engine() const {
  auto e = engine;
  auto const N = mode == Mode::whole_plane ? e.disc_radius : 1.0;
  auto smallest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < points.size(); ++k) {
    auto r_min = std::numeric_limits<double>::infinity();
    for (auto const& set : radius_sets) {
      r_min = std::min(r_min, set[k]);
    }
    e.refinement.focus.push_back({points[k], r_min});
    smallest = std::min(smallest, r_min);
  }
  auto const circles = event_circles();
  std::vector<complex> centers;
  for (auto const& c : circles) {
    if (std::find(centers.begin(), centers.end(), c.center) == centers.end()) {
      centers.push_back(c.center);
      auto const r = min_radius_at(circles, c.center);
      e.refinement.focus.push_back({c.center, r});
      smallest = std::min(smallest, r);
    }
  }
  if (!minkowski_radii.empty()) {
    auto const r = *std::min_element(minkowski_radii.begin(), minkowski_radii.end());
    e.refinement.max_segment = std::min(e.refinement.max_segment, kMinkowskiSegment * r);
    smallest = std::min(smallest, r);
  }
  if (e.horizon == 0.0) {
    e.horizon = default_horizon(N, std::isfinite(smallest) ? smallest : kBareScale * N);
  }
  return e;
}

nlohmann::json CampaignPlan::to_json() const {
  nlohmann::json j{{"name", name},
                   {"mode", mode_name(mode)},
                   {"kappa", kappa},
                   {"samples", samples},
                   {"master_seed", master_seed},
                   {"shard_size", shard_size},
                   {"engine", engine_to_json(engine)}};
  j["points"] = nlohmann::json::array();
  for (auto const z : points) {
    j["points"].push_back({z.real(), z.imag()});
  }
  j["radius_sets"] = radius_sets;
  j["events"] = nlohmann::json::array();
  for (auto const& e : events) {
    j["events"].push_back(e.to_json());
  }
  nlohmann::json m{{"radii", minkowski_radii}, {"grid_divisor", grid_divisor}, {"n_max", n_max}};
  if (region) {
    m["region"] = region->to_json();
  }
  if (dimension) {
    m["dimension"] = *dimension;
  }
  j["minkowski"] = m;
  return j;
}

CampaignPlan CampaignPlan::from_json(nlohmann::json const& j) {
  if (!j.is_object()) {
    throw domain_error("plan must be a JSON object");
  }
  check_keys(j,
             {"name", "mode", "kappa", "samples", "master_seed", "shard_size", "engine", "points",
              "radius_sets", "radii", "events", "minkowski", "output_dir", "workers"},
             "plan");
  CampaignPlan p;
  try {
    p.name = j.value("name", p.name);
    p.mode = parse_mode(j.value("mode", mode_name(p.mode)));
    p.kappa = j.value("kappa", p.kappa);
    p.samples = j.value("samples", p.samples);
    p.master_seed = j.value("master_seed", p.master_seed);
    p.shard_size = j.value("shard_size", p.shard_size);
    if (j.contains("engine")) {
      p.engine = engine_from_json(j["engine"]);
    }
    for (auto const& z : j.value("points", nlohmann::json::array())) {
      if (z.is_array() && z.size() == 2) {
        p.points.emplace_back(z[0].get<double>(), z[1].get<double>());
      } else if (z.is_object() && z.contains("z")) {
        p.points.emplace_back(z["z"][0].get<double>(), z["z"][1].get<double>());
      } else {
        throw domain_error("each point must be [re, im]");
      }
    }
    if (j.contains("radius_sets")) {
      p.radius_sets = j["radius_sets"].get<std::vector<std::vector<double>>>();
    }
    if (j.contains("radii")) {
      // Shorthand sweep: the same radius for every point.
      for (auto const r : j["radii"].get<std::vector<double>>()) {
        p.radius_sets.emplace_back(p.points.size(), r);
      }
    }
    for (auto const& e : j.value("events", nlohmann::json::array())) {
      p.events.push_back(OrderedEvent::from_json(e));
    }
    if (j.contains("minkowski")) {
      auto const& m = j["minkowski"];
      check_keys(m, {"radii", "grid_divisor", "n_max", "region", "dimension"}, "minkowski");
      p.minkowski_radii = m.value("radii", std::vector<double>{});
      p.grid_divisor = m.value("grid_divisor", p.grid_divisor);
      p.n_max = m.value("n_max", p.n_max);
      if (m.contains("region")) {
        p.region = Region::from_json(m["region"]);
      }
      if (m.contains("dimension")) {
        p.dimension = m["dimension"].get<double>();
      }
    }
  } catch (nlohmann::json::exception const& e) {
    throw domain_error(fmt::format("malformed plan: {}", e.what()));
  }
  return p;
}

// ------------------------------------------------------------------- samples

Trace simulate_sample(CampaignPlan const& plan, EngineConfig const& engine, std::uint64_t seed) {
  if (plan.mode == Mode::whole_plane) {
    return simulate_whole_plane_approx(plan.kappa, seed, engine);
  }
  return simulate_radial_trace(plan.kappa, seed, engine);
}

SampleRecord run_sample(CampaignPlan const& plan, EngineConfig const& engine, std::uint64_t index) {
  SampleRecord rec;
  rec.index = index;
  rec.seed = sample_seed(plan.master_seed, index);
  try {
    auto const trace = simulate_sample(plan, engine, rec.seed);
    rec.nodes = trace.size();
    for (auto const z : plan.points) {
      rec.dist.push_back(dist_to_trace(trace, z));
    }
    auto const circles = plan.event_circles();
    if (!circles.empty()) {
      auto const cr = crossing_times(trace, circles);
      for (auto const& t : cr.tau) {
        rec.tau.push_back(t ? *t : kNaN);
      }
    }
    if (!plan.minkowski_radii.empty()) {
      auto const region = plan.resolved_region();
      auto const d = plan.content_dimension();
      for (auto const r : plan.minkowski_radii) {
        rec.content.push_back(minkowski_content(trace, d, r, r / plan.grid_divisor, region).content);
      }
    }
  } catch (std::exception const& e) {
    rec.nodes = 0;
    rec.dist.clear();
    rec.tau.clear();
    rec.content.clear();
    rec.error = e.what()[0] != '\0' ? e.what() : "unknown error";
  }
  return rec;
}

CampaignSummary CampaignSummary::merge(CampaignSummary a, CampaignSummary b) {
  CampaignSummary out;
  out.records = std::move(a.records);
  out.records.insert(out.records.end(), std::make_move_iterator(b.records.begin()),
                     std::make_move_iterator(b.records.end()));
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](auto const& x, auto const& y) { return x.index < y.index; });
  // Records are pure functions of their index, so duplicates are identical.
  out.records.erase(std::unique(out.records.begin(), out.records.end(),
                                [](auto const& x, auto const& y) { return x.index == y.index; }),
                    out.records.end());
  return out;
}

std::vector<std::uint64_t> CampaignSummary::failed() const {
  std::vector<std::uint64_t> out;
  for (auto const& r : records) {
    if (r.failed()) {
      out.push_back(r.index);
    }
  }
  return out;
}

CampaignSummary run_samples(CampaignPlan const& plan, std::uint64_t begin, std::uint64_t end,
                            unsigned workers) {
  auto const engine = plan.resolved_engine();
  CampaignSummary summary;
  if (end <= begin) {
    return summary;
  }
  summary.records.resize(end - begin);
  std::atomic<std::uint64_t> next{begin};
  auto work = [&] {
    for (auto i = next++; i < end; i = next++) {
      summary.records[i - begin] = run_sample(plan, engine, i);
    }
  };
  auto const n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(end - begin)));
  if (n == 1) {
    work();
    return summary;
  }
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < n; ++w) {
    pool.emplace_back(work);
  }
  return summary;
}

// --------------------------------------------------------------- estimators

MomentCell const& MomentTable::at(int n, std::size_t radius_index) const {
  if (n < 1 || n > n_max || radius_index >= radii.size()) {
    throw domain_error(fmt::format("no moment cell for n = {}, radius index {}", n, radius_index));
  }
  return cells[static_cast<std::size_t>(n - 1) * radii.size() + radius_index];
}

MomentTable moment_table(std::vector<double> radii, std::vector<std::vector<double>> contents,
                         int n_max, std::uint64_t seed, int resamples) {
  if (radii.size() != contents.size()) {
    throw domain_error("moment table needs one content column per radius");
  }
  if (n_max < 1) {
    throw domain_error("moment order must be at least 1");
  }
  MomentTable table;
  table.radii = std::move(radii);
  table.contents = std::move(contents);
  table.n_max = n_max;
  // Running minimum over radii >= r, walking from the largest radius down.
  std::vector<std::size_t> by_radius(table.radii.size());
  for (std::size_t i = 0; i < by_radius.size(); ++i) {
    by_radius[i] = i;
  }
  std::stable_sort(by_radius.begin(), by_radius.end(),
                   [&](auto a, auto b) { return table.radii[a] > table.radii[b]; });
  for (int n = 1; n <= n_max; ++n) {
    std::vector<MomentCell> row(table.radii.size());
    for (std::size_t ri = 0; ri < table.radii.size(); ++ri) {
      auto const& c = table.contents[ri];
      if (c.empty()) {
        throw domain_error("moment table needs at least one sample per radius");
      }
      std::vector<double> powered(c.size());
      double sum = 0.0;
      for (std::size_t s = 0; s < c.size(); ++s) {
        powered[s] = std::pow(c[s], n);
        sum += powered[s];
      }
      auto const cell_seed = sample_seed(seed ^ kBootstrapSalt,
                                         static_cast<std::uint64_t>(n) * 1000 + ri);
      row[ri] = {n, table.radii[ri], sum / static_cast<double>(c.size()),
                 bootstrap_mean_interval(powered, cell_seed, resamples), 0.0};
    }
    auto running = std::numeric_limits<double>::infinity();
    for (auto const ri : by_radius) {
      running = std::min(running, row[ri].moment);
      row[ri].running_min = running;
    }
    table.cells.insert(table.cells.end(), row.begin(), row.end());
  }
  return table;
}

HitResult evaluate_hits(std::vector<std::vector<double>> distances,
                        std::vector<std::vector<double>> radius_sets) {
  HitResult out;
  out.samples = distances.size();
  for (auto const& set : radius_sets) {
    std::size_t joint = 0;
    std::vector<std::size_t> marginal(set.size(), 0);
    for (auto const& d : distances) {
      if (d.size() != set.size()) {
        throw domain_error("each sample needs one distance per radius");
      }
      bool all = true;
      for (std::size_t k = 0; k < set.size(); ++k) {
        auto const hit = d[k] < set[k];
        marginal[k] += hit ? 1 : 0;
        all = all && hit;
      }
      joint += all ? 1 : 0;
    }
    out.joint.push_back(proportion(joint, out.samples));
    std::vector<Proportion> m;
    for (auto const h : marginal) {
      m.push_back(proportion(h, out.samples));
    }
    out.marginal.push_back(std::move(m));
  }
  out.distances = std::move(distances);
  out.radius_sets = std::move(radius_sets);
  return out;
}

SampleFailure::SampleFailure(std::vector<std::uint64_t> indices, std::string const& first_error)
    : std::runtime_error(fmt::format("{} sample(s) failed, first (index {}): {}", indices.size(),
                                     indices.empty() ? 0 : indices.front(), first_error)),
      indices_(std::move(indices)) {}

namespace {

void throw_on_failure(CampaignSummary const& summary) {
  auto const failed = summary.failed();
  if (!failed.empty()) {
    auto const first = std::find_if(summary.records.begin(), summary.records.end(),
                                    [](auto const& r) { return r.failed(); });
    throw SampleFailure(failed, first->error);
  }
}

}  // namespace

HitResult estimate_hit_probability(SleParams const& params, Mode mode,
                                   std::span<PointSpec const> specs, std::size_t samples,
                                   std::uint64_t seed, EngineConfig const& engine,
                                   unsigned workers) {
  CampaignPlan plan;
  plan.mode = mode;
  plan.kappa = params.kappa;
  plan.engine = engine;
  plan.samples = samples;
  plan.master_seed = seed;
  std::vector<double> radii;
  for (auto const& s : specs) {
    plan.points.push_back(s.z);
    radii.push_back(s.r);
  }
  plan.radius_sets = {radii};
  plan.validate();
  auto const summary = run_samples(plan, 0, samples, workers);
  throw_on_failure(summary);
  std::vector<std::vector<double>> distances;
  for (auto const& r : summary.records) {
    distances.push_back(r.dist);
  }
  return evaluate_hits(std::move(distances), plan.radius_sets);
}

MomentTable minkowski_moments(SleParams const& params, Mode mode, int n_max,
                              std::vector<double> r_list, std::size_t samples, std::uint64_t seed,
                              std::optional<Region> region, EngineConfig const& engine,
                              unsigned workers) {
  CampaignPlan plan;
  plan.mode = mode;
  plan.kappa = params.kappa;
  plan.engine = engine;
  plan.samples = samples;
  plan.master_seed = seed;
  plan.minkowski_radii = r_list;
  plan.n_max = n_max;
  plan.region = std::move(region);
  plan.validate();
  auto const summary = run_samples(plan, 0, samples, workers);
  throw_on_failure(summary);
  std::vector<std::vector<double>> contents(r_list.size());
  for (auto const& r : summary.records) {
    for (std::size_t i = 0; i < r_list.size(); ++i) {
      contents[i].push_back(r.content[i]);
    }
  }
  return moment_table(std::move(r_list), std::move(contents), n_max, seed);
}

// ----------------------------------------------------------------- aggregate

nlohmann::json aggregate_json(CampaignPlan const& plan, CampaignSummary const& summary) {
  auto const params = exponents(plan.kappa);
  std::vector<SampleRecord const*> ok;
  for (auto const& r : summary.records) {
    if (!r.failed()) {
      ok.push_back(&r);
    }
  }
  nlohmann::json j{{"name", plan.name},
                   {"mode", mode_name(plan.mode)},
                   {"kappa", plan.kappa},
                   {"d", params.d},
                   {"alpha", params.alpha},
                   {"samples", plan.samples},
                   {"records", summary.records.size()},
                   {"completed", ok.size()},
                   {"failed", summary.failed()}};
  std::size_t max_nodes = 0;
  double sum_nodes = 0.0;
  for (auto const* r : ok) {
    max_nodes = std::max(max_nodes, r->nodes);
    sum_nodes += static_cast<double>(r->nodes);
  }
  j["nodes"] = {{"mean", ok.empty() ? 0.0 : sum_nodes / static_cast<double>(ok.size())},
                {"max", max_nodes}};

  j["hits"] = nlohmann::json::array();
  if (!plan.points.empty()) {
    std::vector<std::vector<double>> distances;
    for (auto const* r : ok) {
      distances.push_back(r->dist);
    }
    auto const hits = evaluate_hits(std::move(distances), plan.radius_sets);
    for (std::size_t s = 0; s < plan.radius_sets.size(); ++s) {
      auto const& radii = plan.radius_sets[s];
      auto const specs = make_point_specs(plan.mode, plan.points, radii);
      nlohmann::json h{{"radii", radii},
                       {"joint", proportion_json(hits.joint[s])},
                       {"kernel", bound_kernel(plan.mode, params, specs)}};
      h["marginal"] = nlohmann::json::array();
      for (auto const& m : hits.marginal[s]) {
        h["marginal"].push_back(proportion_json(m));
      }
      if (plan.points.size() <= 8) {
        h["min_over_orders_kernel"] = min_over_orders_kernel(plan.mode, params, plan.points, radii);
      }
      j["hits"].push_back(h);
    }
  }

  j["events"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (auto const& e : plan.events) {
    auto const n_circles = e.circles().size();
    std::vector<CrossingRecord> records;
    for (auto const* r : ok) {
      CrossingRecord cr;
      for (std::size_t c = 0; c < n_circles; ++c) {
        auto const t = r->tau[offset + c];
        cr.tau.push_back(std::isnan(t) ? std::nullopt : std::optional<double>(t));
      }
      records.push_back(std::move(cr));
    }
    j["events"].push_back({{"event", e.to_json()},
                           {"kernel", e.kernel(params)},
                           {"frequency", proportion_json(ordered_event_frequency(records, e))}});
    offset += n_circles;
  }

  if (!plan.minkowski_radii.empty() && !ok.empty()) {
    std::vector<std::vector<double>> contents(plan.minkowski_radii.size());
    for (auto const* r : ok) {
      for (std::size_t i = 0; i < contents.size(); ++i) {
        contents[i].push_back(r->content[i]);
      }
    }
    auto const table =
        moment_table(plan.minkowski_radii, std::move(contents), plan.n_max, plan.master_seed);
    auto const region = plan.resolved_region();
    nlohmann::json m{{"radii", plan.minkowski_radii},
                     {"grid_divisor", plan.grid_divisor},
                     {"dimension", plan.content_dimension()},
                     {"n_max", plan.n_max},
                     {"region", region ? region->to_json() : nlohmann::json("plane")}};
    m["moments"] = nlohmann::json::array();
    for (auto const& c : table.cells) {
      m["moments"].push_back({{"n", c.n},
                              {"r", c.r},
                              {"moment", c.moment},
                              {"lo", c.ci.lo},
                              {"hi", c.ci.hi},
                              {"running_min", c.running_min}});
    }
    j["minkowski"] = m;
  }
  return j;
}

// -------------------------------------------------------------------- store

std::string code_version() { return "sle-toolkit 1.0.0"; }

CampaignResult run_campaign(CampaignPlan const& plan, std::filesystem::path const& dir,
                            CampaignOptions const& options) {
  plan.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir / "shards");
  auto const manifest_path = dir / "manifest.json";
  auto const plan_json = plan.to_json();
  bool fresh = !options.resume || !fs::exists(manifest_path);
  if (!fresh) {
    std::ifstream in(manifest_path);
    nlohmann::json old;
    try {
      old = nlohmann::json::parse(in);
    } catch (nlohmann::json::exception const&) {
      throw domain_error(fmt::format("{} is not valid JSON", manifest_path.string()));
    }
    if (old.value("plan", nlohmann::json()) != plan_json) {
      throw domain_error(fmt::format(
          "{} holds a campaign with a different plan; use a new directory or disable resume",
          dir.string()));
    }
  }
  if (fresh) {
    for (auto const& entry : fs::directory_iterator(dir / "shards")) {
      fs::remove(entry.path());
    }
    fs::remove(dir / "aggregate.json");
    fs::remove(dir / "failures.json");
    nlohmann::json first_seeds = nlohmann::json::array();
    for (std::uint64_t i = 0; i < std::min<std::uint64_t>(plan.samples, 8); ++i) {
      first_seeds.push_back(sample_seed(plan.master_seed, i));
    }
    nlohmann::json manifest{
        {"plan", plan_json},
        {"code_version", code_version()},
        {"created", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)))},
        {"seed_schedule",
         {{"rule", "seed_i = hash(master_seed, i)"},
          {"master_seed", plan.master_seed},
          {"first", first_seeds}}},
        {"shards", shard_count(plan)},
        {"shard_size", plan.shard_size}};
    write_atomic(manifest_path, manifest.dump(2) + "\n");
  }

  auto const n_shards = shard_count(plan);
  auto const bounds = [&](std::size_t s) {
    auto const begin = static_cast<std::uint64_t>(s * plan.shard_size);
    auto const end = std::min<std::uint64_t>(begin + plan.shard_size, plan.samples);
    return std::pair{begin, end};
  };
  std::vector<std::size_t> missing;
  for (std::size_t s = 0; s < n_shards; ++s) {
    auto const [b, e] = bounds(s);
    if (!read_shard(plan, shard_path(dir, s), b, e)) {
      missing.push_back(s);
    }
  }

  auto const engine = plan.resolved_engine();
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> claimed{0};
  std::mutex io;
  std::exception_ptr error;
  auto const limit = options.stop_after_shards.value_or(missing.size());
  auto work = [&] {
    while (true) {
      if (claimed++ >= limit) {
        return;
      }
      auto const m = next++;
      if (m >= missing.size()) {
        return;
      }
      auto const s = missing[m];
      auto const [b, e] = bounds(s);
      try {
        CampaignSummary part;
        for (auto i = b; i < e; ++i) {
          part.records.push_back(run_sample(plan, engine, i));
        }
        auto const csv = shard_csv(plan, part);
        std::lock_guard lock(io);
        write_atomic(shard_path(dir, s), csv);
        if (options.progress) {
          *options.progress << fmt::format("shard {}/{} written ({} samples)\n", s + 1, n_shards,
                                           e - b);
          options.progress->flush();
        }
      } catch (...) {
        std::lock_guard lock(io);
        if (!error) {
          error = std::current_exception();
        }
        return;
      }
    }
  };
  auto const n_workers =
      std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(missing.size())));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) {
      pool.emplace_back(work);
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }

  // Aggregates always come from the persisted shards, so a resumed campaign
  // and an uninterrupted one read the same bytes.
  CampaignResult result;
  result.complete = true;
  for (std::size_t s = 0; s < n_shards; ++s) {
    auto const [b, e] = bounds(s);
    auto part = read_shard(plan, shard_path(dir, s), b, e);
    if (!part) {
      result.complete = false;
      continue;
    }
    result.summary = CampaignSummary::merge(std::move(result.summary), std::move(*part));
  }
  result.failed = result.summary.failed();
  if (!result.complete) {
    return result;
  }
  result.aggregate = aggregate_json(plan, result.summary);
  write_atomic(dir / "aggregate.json", result.aggregate.dump(2) + "\n");
  if (result.failed.empty()) {
    fs::remove(dir / "failures.json");
  } else {
    nlohmann::json failures = nlohmann::json::array();
    for (auto const& r : result.summary.records) {
      if (r.failed()) {
        failures.push_back({{"index", r.index}, {"seed", r.seed}, {"error", r.error}});
      }
    }
    write_atomic(dir / "failures.json", failures.dump(2) + "\n");
  }
  return result;
}

}  // namespace sle
