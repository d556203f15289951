#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "sle/harness.hpp"

namespace {

enum Exit { kPass = 0, kValidation = 1, kRuntime = 2, kStatistical = 3 };

// Overrides given on the command line; unset fields keep the plan value.
struct Overrides {
  std::optional<double> kappa;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<std::size_t> shard_size;
  std::optional<int> n_max;
  std::optional<double> horizon;
  std::optional<double> disc_radius;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  bool fresh = false;
  bool quiet = false;
};

nlohmann::json read_json(std::string const& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open {}", path));
  }
  try {
    return nlohmann::json::parse(in);
  } catch (nlohmann::json::exception const& e) {
    throw sle::domain_error(fmt::format("{} is not valid JSON: {}", path, e.what()));
  }
}

// flags > plan > defaults
sle::CampaignPlan load_plan(std::string const& path, Overrides const& o) {
  auto j = path.empty() ? nlohmann::json::object() : read_json(path);
  if (o.kappa) j["kappa"] = *o.kappa;
  if (o.samples) j["samples"] = *o.samples;
  if (o.seed) j["master_seed"] = *o.seed;
  if (o.mode) j["mode"] = *o.mode;
  if (o.shard_size) j["shard_size"] = *o.shard_size;
  if (o.n_max) j["minkowski"]["n_max"] = *o.n_max;
  if (o.horizon) j["engine"]["horizon"] = *o.horizon;
  if (o.disc_radius) j["engine"]["disc_radius"] = *o.disc_radius;
  auto plan = sle::CampaignPlan::from_json(j);
  plan.validate();
  return plan;
}

std::filesystem::path output_dir(std::string const& plan_path, Overrides const& o,
                                 sle::CampaignPlan const& plan) {
  if (o.out) {
    return *o.out;
  }
  if (!plan_path.empty()) {
    auto const j = read_json(plan_path);
    if (j.contains("output_dir")) {
      return j["output_dir"].get<std::string>();
    }
  }
  if (auto const* env = std::getenv("SLE_OUTPUT_DIR"); env && *env) {
    return std::filesystem::path(env) / plan.name;
  }
  return std::filesystem::path("sle_output") / plan.name;
}

void add_common(CLI::App* cmd, std::string& plan_path, Overrides& o) {
  cmd->add_option("-p,--plan", plan_path, "Experiment plan (JSON)");
  cmd->add_option("-k,--kappa", o.kappa, "SLE parameter in (0, 8)");
  cmd->add_option("-n,--samples", o.samples, "Number of samples");
  cmd->add_option("-s,--seed", o.seed, "Master seed");
  cmd->add_option("-m,--mode", o.mode, "radial or whole-plane");
  cmd->add_option("--horizon", o.horizon, "Capacity horizon (0 derives it from the queries)");
  cmd->add_option("--disc-radius", o.disc_radius, "Disc radius N of the whole-plane approximant");
  cmd->add_option("-o,--out", o.out, "Output directory (default $SLE_OUTPUT_DIR/<name>)");
  cmd->add_option("-j,--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", o.quiet, "No progress output");
}

sle::CampaignResult campaign(sle::CampaignPlan const& plan, std::filesystem::path const& dir,
                             Overrides const& o) {
  sle::CampaignOptions opt;
  opt.workers = o.workers;
  opt.resume = !o.fresh;
  opt.progress = o.quiet ? nullptr : &std::cerr;
  auto result = sle::run_campaign(plan, dir, opt);
  if (!result.failed.empty()) {
    fmt::print(std::cerr, "{} sample(s) failed; see {}\n", result.failed.size(),
               (dir / "failures.json").string());
  }
  return result;
}

void write_file(std::filesystem::path const& path, std::string const& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  out << content;
}

// ------------------------------------------------------------------ simulate

int cmd_simulate(std::string const& plan_path, Overrides const& o, bool csv) {
  auto const plan = load_plan(plan_path, o);
  auto const dir = output_dir(plan_path, o, plan);
  std::filesystem::create_directories(dir);
  auto const engine = plan.resolved_engine();
  nlohmann::json files = nlohmann::json::array();
  for (std::uint64_t i = 0; i < plan.samples; ++i) {
    auto const seed = sle::sample_seed(plan.master_seed, i);
    auto const trace = sle::simulate_sample(plan, engine, seed);
    auto const stem = fmt::format("trace_{:05d}_{}", i, seed);
    {
      std::ofstream out(dir / (stem + ".bin"), std::ios::binary | std::ios::trunc);
      sle::write_trace_binary(trace, out);
    }
    if (csv) {
      std::ofstream out(dir / (stem + ".csv"), std::ios::trunc);
      sle::write_trace_csv(trace, out);
    }
    files.push_back({{"index", i}, {"seed", seed}, {"stem", stem}, {"points", trace.size()}});
    if (!o.quiet) {
      fmt::print(std::cerr, "{} ({} points)\n", stem, trace.size());
    }
  }
  nlohmann::json manifest{{"plan", plan.to_json()},
                          {"code_version", sle::code_version()},
                          {"traces", files}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  fmt::print("{} traces written to {}\n", plan.samples, dir.string());
  return kPass;
}

// ------------------------------------------------------------- verify-bounds

struct SweepRow {
  double r;
  sle::Proportion p;
  double kernel;
};

// Domination table for one sweep; returns whether the single-constant check
// passes. Appends gnuplot-ready rows to csv.
bool report_sweep(std::string const& label, std::vector<SweepRow> const& rows, double max_spread,
                  std::string& csv) {
  std::vector<double> p_hat, kernel;
  std::vector<sle::SweepPoint> sweep;
  for (auto const& row : rows) {
    p_hat.push_back(row.p.p_hat);
    kernel.push_back(row.kernel);
    sweep.push_back({row.r, row.p.p_hat, row.p.std_err});
  }
  auto const dom = sle::check_domination(p_hat, kernel, max_spread);
  fmt::print("\n{}\n", label);
  fmt::print("{:>10} {:>9} {:>9} {:>9} {:>12} {:>10}\n", "r", "p_hat", "lo", "hi", "kernel",
             "C_r");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto const& row = rows[i];
    fmt::print("{:>10.5g} {:>9.5f} {:>9.5f} {:>9.5f} {:>12.6g} {:>10.5g}\n", row.r, row.p.p_hat,
               row.p.ci.lo, row.p.ci.hi, row.kernel, dom.c_hat[i]);
    csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", label,
                       row.r, row.p.p_hat, row.p.ci.lo, row.p.ci.hi, row.p.std_err, row.kernel,
                       dom.c_hat[i]);
  }
  fmt::print("fitted C = {:.5g}, spread max/min = {:.4g} (limit {}) -> {}\n", dom.c_max,
             dom.spread, max_spread, dom.pass ? "PASS" : "FAIL");
  try {
    auto const fit = sle::fit_exponent(sweep);
    fmt::print("log-log slope = {:.4f} +- {:.4f} (chi2_red {:.3g}{})\n", fit.slope,
               fit.slope_stderr, fit.chi2_red,
               fit.dropped.empty() ? "" : fmt::format(", {} radii dropped", fit.dropped.size()));
  } catch (sle::domain_error const& e) {
    fmt::print("log-log slope unavailable: {}\n", e.what());
  }
  return dom.pass;
}

constexpr char const* kSweepHeader = "sweep,r,p_hat,lo,hi,std_err,kernel,c_r\n";

// Rows "r,p_hat,std_err,kernel" from an external sweep (synthetic checks).
int verify_sweep_csv(std::string const& path, double max_spread, std::filesystem::path const& out) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open {}", path));
  }
  std::string line;
  std::getline(in, line);
  if (line != "r,p_hat,std_err,kernel") {
    throw sle::domain_error("sweep CSV needs the header r,p_hat,std_err,kernel");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    std::string f[4];
    for (auto& x : f) {
      std::getline(ss, x, ',');
    }
    SweepRow row{std::stod(f[0]), {}, std::stod(f[3])};
    row.p.p_hat = std::stod(f[1]);
    row.p.std_err = std::stod(f[2]);
    row.p.ci = {row.p.p_hat - sle::kWilsonZ * row.p.std_err,
                row.p.p_hat + sle::kWilsonZ * row.p.std_err};
    rows.push_back(row);
  }
  std::string csv = kSweepHeader;
  auto const pass = report_sweep(path, rows, max_spread, csv);
  std::filesystem::create_directories(out);
  write_file(out / "verify.csv", csv);
  return pass ? kPass : kStatistical;
}

int cmd_verify(std::string const& plan_path, Overrides const& o, double max_spread,
               std::string const& sweep_csv) {
  if (!sweep_csv.empty()) {
    return verify_sweep_csv(sweep_csv, max_spread, o.out.value_or("."));
  }
  auto const plan = load_plan(plan_path, o);
  if (plan.radius_sets.empty() && plan.events.empty()) {
    throw sle::domain_error("verify-bounds needs a radius sweep (points + radius_sets) or events");
  }
  auto const dir = output_dir(plan_path, o, plan);
  auto const result = campaign(plan, dir, o);
  if (!result.complete) {
    return kRuntime;
  }
  auto const& agg = result.aggregate;
  fmt::print("{}: {} mode, kappa = {}, d = {}, alpha = {}, {} samples ({} failed)\n", plan.name,
             sle::mode_name(plan.mode), plan.kappa, agg["d"].get<double>(),
             agg["alpha"].get<double>(), plan.samples, result.failed.size());
  std::string csv = kSweepHeader;
  bool pass = true;
  auto const proportion_of = [](nlohmann::json const& j) {
    sle::Proportion p;
    p.hits = j["hits"];
    p.n = j["n"];
    p.p_hat = j["p_hat"];
    p.ci = {j["lo"], j["hi"]};
    p.std_err = j["std_err"];
    return p;
  };
  if (!agg["hits"].empty()) {
    std::vector<SweepRow> rows;
    for (auto const& h : agg["hits"]) {
      rows.push_back({h["radii"][0].get<double>(), proportion_of(h["joint"]),
                      h["kernel"].get<double>()});
    }
    pass = report_sweep("joint", rows, max_spread, csv) && pass;
    // Multipoint <= one-point on identical samples.
    for (auto const& h : agg["hits"]) {
      for (auto const& m : h["marginal"]) {
        if (h["joint"]["hits"].get<std::size_t>() > m["hits"].get<std::size_t>()) {
          fmt::print("joint count exceeds a marginal count at r = {}\n", h["radii"][0].dump());
          pass = false;
        }
      }
    }
  }
  if (!agg["events"].empty()) {
    std::vector<SweepRow> rows;
    for (auto const& e : agg["events"]) {
      rows.push_back({e["event"]["r0_prime"].get<double>(), proportion_of(e["frequency"]),
                      e["kernel"].get<double>()});
    }
    pass = report_sweep("ordered events (r = r0')", rows, max_spread, csv) && pass;
  }
  write_file(dir / "verify.csv", csv);
  fmt::print("\nraw table: {}\noverall: {}\n", (dir / "verify.csv").string(), pass ? "PASS" : "FAIL");
  if (!result.failed.empty()) {
    return kRuntime;
  }
  return pass ? kPass : kStatistical;
}

// ----------------------------------------------------------------- minkowski

int cmd_minkowski(std::string const& plan_path, Overrides const& o) {
  auto const plan = load_plan(plan_path, o);
  if (plan.minkowski_radii.empty()) {
    throw sle::domain_error("minkowski needs minkowski.radii in the plan");
  }
  auto const dir = output_dir(plan_path, o, plan);
  auto const result = campaign(plan, dir, o);
  if (!result.complete) {
    return kRuntime;
  }
  auto const& m = result.aggregate["minkowski"];
  fmt::print("{}: d = {}, grid_h = r/{}, region {}\n", plan.name, m["dimension"].get<double>(),
             plan.grid_divisor, m["region"].dump());
  fmt::print("{:>3} {:>10} {:>14} {:>14} {:>14} {:>14}\n", "n", "r", "moment", "lo", "hi",
             "running_min");
  std::string csv = "n,r,moment,lo,hi,running_min\n";
  for (auto const& c : m["moments"]) {
    fmt::print("{:>3} {:>10.5g} {:>14.6g} {:>14.6g} {:>14.6g} {:>14.6g}\n", c["n"].get<int>(),
               c["r"].get<double>(), c["moment"].get<double>(), c["lo"].get<double>(),
               c["hi"].get<double>(), c["running_min"].get<double>());
    csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", c["n"].get<int>(),
                       c["r"].get<double>(), c["moment"].get<double>(), c["lo"].get<double>(),
                       c["hi"].get<double>(), c["running_min"].get<double>());
  }
  write_file(dir / "moments.csv", csv);
  fmt::print("raw table: {}\n", (dir / "moments.csv").string());
  return result.failed.empty() ? kPass : kRuntime;
}

// -------------------------------------------------------------------- kernel

int cmd_kernel(std::string const& query_path, std::string const& inline_query) {
  nlohmann::json query;
  if (!inline_query.empty()) {
    try {
      query = nlohmann::json::parse(inline_query);
    } catch (nlohmann::json::exception const& e) {
      throw sle::domain_error(fmt::format("query is not valid JSON: {}", e.what()));
    }
  } else if (!query_path.empty() && query_path != "-") {
    query = read_json(query_path);
  } else {
    try {
      query = nlohmann::json::parse(std::cin);
    } catch (nlohmann::json::exception const& e) {
      throw sle::domain_error(fmt::format("query is not valid JSON: {}", e.what()));
    }
  }
  fmt::print("{}\n", sle::kernel_query(query).dump());
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radial and whole-plane SLE simulation and bound verification"};
  app.require_subcommand(1);
  std::string plan_path;
  Overrides o;

  auto* simulate = app.add_subcommand("simulate", "Write sample traces (binary, optional CSV)");
  add_common(simulate, plan_path, o);
  bool csv = false;
  simulate->add_flag("--csv", csv, "Also write t,re,im CSV per trace");

  auto* verify = app.add_subcommand("verify-bounds", "Hit frequencies against bound kernels");
  add_common(verify, plan_path, o);
  double max_spread = 3.0;
  std::string sweep_csv;
  verify->add_option("--max-spread", max_spread, "Allowed max/min ratio of C_r")
      ->check(CLI::PositiveNumber);
  verify->add_option("--sweep-csv", sweep_csv, "Check an external r,p_hat,std_err,kernel table");
  verify->add_option("--shard-size", o.shard_size, "Samples per shard");
  verify->add_flag("--fresh", o.fresh, "Discard stored shards instead of resuming");

  auto* minkowski = app.add_subcommand("minkowski", "Moments of the Minkowski content profile");
  add_common(minkowski, plan_path, o);
  minkowski->add_option("--n-max", o.n_max, "Highest moment order (1..4)");
  minkowski->add_option("--shard-size", o.shard_size, "Samples per shard");
  minkowski->add_flag("--fresh", o.fresh, "Discard stored shards instead of resuming");

  auto* kernel = app.add_subcommand("kernel", "Evaluate a bound kernel query (JSON)");
  std::string query_path;
  std::string inline_query;
  kernel->add_option("query", query_path, "Query file, or - for stdin");
  kernel->add_option("-e,--eval", inline_query, "Inline JSON query");

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const& e) {
    auto const code = app.exit(e);
    return code == 0 ? kPass : kValidation;
  }

  try {
    if (simulate->parsed()) {
      return cmd_simulate(plan_path, o, csv);
    }
    if (verify->parsed()) {
      return cmd_verify(plan_path, o, max_spread, sweep_csv);
    }
    if (minkowski->parsed()) {
      return cmd_minkowski(plan_path, o);
    }
    return cmd_kernel(query_path, inline_query);
  } catch (sle::domain_error const& e) {
    fmt::print(std::cerr, "validation error: {}\n", e.what());
    return kValidation;
  } catch (std::exception const& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kRuntime;
  }
}
