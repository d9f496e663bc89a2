#include "micp/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "micp/errors.hpp"
#include "micp/pipeline.hpp"
#include "micp/simulator.hpp"

namespace micp {

using nlohmann::json;

namespace {

std::vector<double> parse_number_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad number in ") + what + ": '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos)
      throw ConfigError(std::string("bad number in ") + what + ": '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " is empty");
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

std::string replace_extension(const std::string& path, const std::string& ext) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + ext;
  return path.substr(0, dot) + ext;
}

std::optional<std::string> provenance_timestamp(bool wall_clock) {
  std::time_t when = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    when = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else if (wall_clock) {
    when = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  } else {
    return std::nullopt;
  }
  std::tm tm{};
  gmtime_r(&when, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Flags shared by calibrate and sweep; applied before the config file.
struct RunFlags {
  double alpha = 0.10;
  double alpha_ret = 0.1;
  double eta = 0.1;
  double gamma = 1.0;
  int grid_steps = 20;
  double similarity_threshold = 0.9;
  std::string stop_score = "penalized-freq";
  std::string match = "exact";
  std::string cluster_mode;
  std::uint64_t seed = 0;
  bool gridsearch = false;
  std::string budgets;
  std::string config_path;
  unsigned threads = 1;

  void attach(CLI::App& cmd) {
    cmd.add_option("--alpha", alpha, "Total error budget")->capture_default_str();
    cmd.add_option("--alpha-ret", alpha_ret, "Retrieval error budget")->capture_default_str();
    cmd.add_option("--eta", eta, "Entropy penalty weight")->capture_default_str();
    cmd.add_option("--gamma", gamma, "Turn-count weight in the composite objective")->capture_default_str();
    cmd.add_option("--grid-steps", grid_steps, "Grid values per budget dimension")->capture_default_str();
    cmd.add_option("--similarity-threshold", similarity_threshold, "Cosine threshold for clustering")
        ->capture_default_str();
    cmd.add_option("--stop-score", stop_score, "penalized-freq | neg-entropy")
        ->check(CLI::IsMember({"penalized-freq", "neg-entropy"}))
        ->capture_default_str();
    cmd.add_option("--match", match, "Gold matching rule: exact | contains")
        ->check(CLI::IsMember({"exact", "contains"}))
        ->capture_default_str();
    cmd.add_option("--cluster-mode", cluster_mode, "embedding | exact-match (default: from data)")
        ->check(CLI::IsMember({"embedding", "exact-match"}));
    cmd.add_option("--seed", seed, "Seed echoed into the artifact")->capture_default_str();
    auto* grid = cmd.add_flag("--gridsearch", gridsearch, "Choose budgets by grid search on --opt");
    auto* bud = cmd.add_option("--budgets", budgets, "Comma-separated alpha_0..alpha_{T-1}");
    grid->excludes(bud);
    cmd.add_option("--config", config_path, "JSON run config; its keys override flags");
    cmd.add_option("--threads", threads, "Worker threads (output does not depend on it)")
        ->capture_default_str();
  }

  RunConfig resolve() const {
    json j = {{"alpha", alpha},
              {"alpha_ret", alpha_ret},
              {"eta", eta},
              {"gamma", gamma},
              {"grid_steps", grid_steps},
              {"similarity_threshold", similarity_threshold},
              {"stop_score", stop_score},
              {"match", match},
              {"seed", seed},
              {"gridsearch", gridsearch},
              {"threads", threads}};
    if (!cluster_mode.empty()) j["cluster_mode"] = cluster_mode;
    if (!budgets.empty()) j["budgets"] = parse_number_list(budgets, "--budgets");
    RunConfig config = run_config_from_json(j);
    if (!config_path.empty()) config = run_config_from_json(read_json_file(config_path), config);
    if (config.gridsearch && config.budgets)
      throw ConfigError("--gridsearch and --budgets are mutually exclusive");
    return config;
  }
};

CalibrationArtifact make_artifact(const RunConfig& config, CalibrationResult result,
                                  std::map<std::string, std::string> digests, bool wall_clock) {
  CalibrationArtifact a;
  a.config = config;
  a.state = std::move(result.state);
  a.budget_scale = result.diagnostics.budget_scale;
  if (result.diagnostics.grid) a.grid_objective = result.diagnostics.grid->objective;
  a.provenance.input_digests = std::move(digests);
  a.provenance.timestamp = provenance_timestamp(wall_clock);
  a.provenance.seed = config.seed;
  return a;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, std::string truth_path,
                 std::optional<std::uint64_t> seed, unsigned threads, std::ostream& out) {
  json j = read_json_file(config_path);
  if (seed && j.is_object() && !j.contains("seed")) j["seed"] = *seed;
  const SimConfig config = sim_config_from_json(j);
  const auto sim = generate_trajectories(config, threads);
  write_trajectory_file(out_path, sim.records);
  if (truth_path.empty()) truth_path = replace_extension(out_path, ".truth.jsonl");
  auto truth = open_out(truth_path);
  write_ground_truth(truth, config, sim.truth);
  out << "wrote " << sim.records.size() << " records to " << out_path << " (ground truth: "
      << truth_path << ")\n";
  return kExitOk;
}

int cmd_split(const std::string& in_path, const std::string& sizes_text, std::uint64_t seed,
              const std::string& opt_path, const std::string& cal_path, const std::string& test_path,
              std::ostream& out) {
  const auto records = read_trajectory_file(in_path);
  const auto sizes = parse_number_list(sizes_text, "--sizes");
  if (sizes.size() != 3) throw ConfigError("--sizes needs three values: n_opt,n_cal,n_test");
  for (double s : sizes)
    if (s < 0 || s != std::floor(s)) throw ConfigError("--sizes must be non-negative integers");
  const auto split = split_dataset(records, seed,
                                   {static_cast<std::size_t>(sizes[0]), static_cast<std::size_t>(sizes[1]),
                                    static_cast<std::size_t>(sizes[2])});
  write_trajectory_file(opt_path, split.opt);
  write_trajectory_file(cal_path, split.cal);
  write_trajectory_file(test_path, split.test);
  out << "split " << records.size() << " records into " << split.opt.size() << " / "
      << split.cal.size() << " / " << split.test.size() << "\n";
  return kExitOk;
}

int cmd_calibrate(const RunFlags& flags, const std::string& cal_path, const std::string& opt_path,
                  const std::string& artifact_path, bool wall_clock, std::ostream& out) {
  const RunConfig config = flags.resolve();
  const auto cal = read_trajectory_file(cal_path);
  std::vector<TrajectoryRecord> opt;
  std::map<std::string, std::string> digests{{"cal", sha256_file(cal_path)}};
  if (config.gridsearch) {
    if (opt_path.empty()) throw ConfigError("--gridsearch requires --opt");
    opt = read_trajectory_file(opt_path);
    digests["opt"] = sha256_file(opt_path);
  }
  auto result = calibrate(opt, cal, config);
  const auto artifact = make_artifact(config, std::move(result), std::move(digests), wall_clock);
  save_artifact(artifact_path, artifact);

  out << "calibrated on " << cal.size() << " records; budgets:";
  for (const auto& b : artifact.state.allocation.budgets) out << ' ' << b.alpha_t;
  out << "; constraint slack " << artifact.state.allocation.constraint_slack() << "\nwrote "
      << artifact_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& test_path, const std::string& artifact_path,
                 const std::string& report_path, std::string csv_path, unsigned threads,
                 std::ostream& out) {
  const auto artifact = load_artifact(artifact_path);
  const auto test = read_trajectory_file(test_path);
  const auto ev = evaluate(test, artifact.state, threads);

  json report = report_to_json(ev.metrics, artifact);
  report["inputs"] = {{"test", sha256_file(test_path)}, {"artifact", sha256_file(artifact_path)}};
  open_out(report_path) << report.dump(2) << '\n';
  if (csv_path.empty()) csv_path = replace_extension(report_path, ".csv");
  auto csv = open_out(csv_path);
  write_records_csv(csv, ev.records);

  out << "coverage " << ev.metrics.coverage_rate << " (target " << 1.0 - ev.metrics.alpha_total
      << "), avg turns " << ev.metrics.avg_turns << ", avg set size " << ev.metrics.avg_set_size
      << "\nwrote " << report_path << " and " << csv_path << "\n";
  return kExitOk;
}

int cmd_sweep(const RunFlags& flags, const std::string& alphas_text, const std::string& opt_path,
              const std::string& cal_path, const std::string& test_path,
              const std::string& report_path, std::string csv_path, std::ostream& out) {
  const RunConfig base = flags.resolve();
  const auto alphas = parse_number_list(alphas_text, "--alphas");
  const auto cal = read_trajectory_file(cal_path);
  const auto test = read_trajectory_file(test_path);
  std::vector<TrajectoryRecord> opt;
  if (base.gridsearch) {
    if (opt_path.empty()) throw ConfigError("--gridsearch requires --opt");
    opt = read_trajectory_file(opt_path);
  }

  const auto scoring = scoring_for(base, cal);
  const auto cal_summaries = summarize_all(cal, scoring, base.threads);
  const auto test_summaries = summarize_all(test, scoring, base.threads);
  std::vector<RecordSummary> opt_summaries;
  if (base.gridsearch) opt_summaries = summarize_all(opt, scoring, base.threads);

  json rows = json::array();
  if (csv_path.empty()) csv_path = replace_extension(report_path, ".csv");
  auto csv = open_out(csv_path);
  csv << "alpha,coverage,gold_retention,avg_turns,avg_set_size,answer_rate,composite_L\n";
  for (double alpha : alphas) {
    RunConfig config = base;
    config.alpha_total = alpha;
    auto result = calibrate(opt_summaries, cal, cal_summaries, config);
    const auto ev = evaluate(test, test_summaries, result.state, base.threads);
    const auto& m = ev.metrics;
    json budgets = json::array();
    for (const auto& b : result.state.allocation.budgets) budgets.push_back(b.alpha_t);
    rows.push_back({{"alpha", alpha},
                    {"coverage", m.coverage_rate},
                    {"gold_retention", m.gold_retention_rate},
                    {"avg_turns", m.avg_turns},
                    {"avg_set_size", m.avg_set_size},
                    {"answer_rate", m.answer_rate},
                    {"composite_L", m.composite_L},
                    {"budgets", std::move(budgets)}});
    csv << json(alpha).dump() << ',' << json(m.coverage_rate).dump() << ','
        << json(m.gold_retention_rate).dump() << ',' << json(m.avg_turns).dump() << ','
        << json(m.avg_set_size).dump() << ',' << json(m.answer_rate).dump() << ','
        << json(m.composite_L).dump() << '\n';
    out << "alpha " << alpha << ": coverage " << m.coverage_rate << ", avg turns " << m.avg_turns
        << ", avg set size " << m.avg_set_size << "\n";
  }
  json report = {{"format", "micp-sweep-report"},
                 {"version", kReportVersion},
                 {"config", run_config_to_json(base)},
                 {"rows", std::move(rows)}};
  open_out(report_path) << report.dump(2) << '\n';
  out << "wrote " << report_path << " and " << csv_path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-turn conformal calibration toolkit", "micp"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic trajectory log");
  std::string sim_config, sim_out, sim_truth;
  std::optional<std::uint64_t> sim_seed;
  unsigned sim_threads = 1;
  sim->add_option("--config", sim_config, "Simulation config (JSON)")->required();
  sim->add_option("--out", sim_out, "Output trajectory log (JSONL)")->required();
  sim->add_option("--truth", sim_truth, "Ground-truth sidecar (default: <out>.truth.jsonl)");
  sim->add_option("--seed", sim_seed, "Seed, used when the config has none");
  sim->add_option("--threads", sim_threads, "Worker threads");

  auto* split = app.add_subcommand("split", "Shuffle and slice a log into opt/cal/test");
  std::string split_in, split_sizes = "300,300,300", split_opt, split_cal, split_test;
  std::uint64_t split_seed = 0;
  split->add_option("--in", split_in, "Input trajectory log")->required();
  split->add_option("--sizes", split_sizes, "n_opt,n_cal,n_test")->capture_default_str();
  split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split->add_option("--opt", split_opt, "Output optimization split")->required();
  split->add_option("--cal", split_cal, "Output calibration split")->required();
  split->add_option("--test", split_test, "Output test split")->required();

  auto* cal = app.add_subcommand("calibrate", "Calibrate all thresholds and write an artifact");
  RunFlags cal_flags;
  cal_flags.attach(*cal);
  std::string cal_in, cal_opt, cal_artifact;
  bool cal_timestamp = false;
  cal->add_option("--cal,--in", cal_in, "Calibration trajectory log")->required();
  cal->add_option("--opt", cal_opt, "Optimization trajectory log (for --gridsearch)");
  cal->add_option("--artifact,--out", cal_artifact, "Output artifact path")->required();
  cal->add_flag("--timestamp", cal_timestamp, "Record the wall-clock time in the artifact");

  auto* ev = app.add_subcommand("evaluate", "Apply an artifact to a test log");
  std::string ev_test, ev_artifact, ev_report, ev_csv;
  unsigned ev_threads = 1;
  ev->add_option("--test,--in", ev_test, "Test trajectory log")->required();
  ev->add_option("--artifact", ev_artifact, "Calibration artifact")->required();
  ev->add_option("--report,--out", ev_report, "Output report (JSON)")->required();
  ev->add_option("--csv", ev_csv, "Per-record CSV (default: <report>.csv)");
  ev->add_option("--threads", ev_threads, "Worker threads");

  auto* sweep = app.add_subcommand("sweep", "Calibrate and evaluate over a list of alphas");
  RunFlags sweep_flags;
  sweep_flags.attach(*sweep);
  std::string sweep_alphas = "0.05,0.10,0.15,0.20,0.25", sweep_opt, sweep_cal, sweep_test,
              sweep_report, sweep_csv;
  sweep->add_option("--alphas", sweep_alphas, "Comma-separated alphas")->capture_default_str();
  sweep->add_option("--opt", sweep_opt, "Optimization trajectory log");
  sweep->add_option("--cal", sweep_cal, "Calibration trajectory log")->required();
  sweep->add_option("--test", sweep_test, "Test trajectory log")->required();
  sweep->add_option("--report,--out", sweep_report, "Output sweep report (JSON)")->required();
  sweep->add_option("--csv", sweep_csv, "Sweep table CSV (default: <report>.csv)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_truth, sim_seed, sim_threads, out);
    if (split->parsed())
      return cmd_split(split_in, split_sizes, split_seed, split_opt, split_cal, split_test, out);
    if (cal->parsed()) return cmd_calibrate(cal_flags, cal_in, cal_opt, cal_artifact, cal_timestamp, out);
    if (ev->parsed()) return cmd_evaluate(ev_test, ev_artifact, ev_report, ev_csv, ev_threads, out);
    if (sweep->parsed())
      return cmd_sweep(sweep_flags, sweep_alphas, sweep_opt, sweep_cal, sweep_test, sweep_report,
                       sweep_csv, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ConstraintError& e) {
    err << "constraint violation: " << e.what() << "\n";
    return kExitConstraint;
  } catch (const VersionError& e) {
    err << "version mismatch: " << e.what() << "\n";
    return kExitVersion;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace micp
