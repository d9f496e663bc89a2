#include "micp/pipeline.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "micp/errors.hpp"
#include "micp/random.hpp"

namespace micp {

using nlohmann::json;

namespace {

const char* to_string(StopScoreMode m) {
  return m == StopScoreMode::penalized_freq ? "penalized-freq" : "neg-entropy";
}
const char* to_string(MatchRule m) { return m == MatchRule::exact ? "exact" : "contains"; }
const char* to_string(ClusterMode m) { return m == ClusterMode::embedding ? "embedding" : "exact-match"; }

StopScoreMode stop_mode_from(const std::string& s) {
  if (s == "penalized-freq") return StopScoreMode::penalized_freq;
  if (s == "neg-entropy") return StopScoreMode::neg_entropy;
  throw ConfigError("unknown stop score mode '" + s + "'");
}
MatchRule match_from(const std::string& s) {
  if (s == "exact") return MatchRule::exact;
  if (s == "contains") return MatchRule::contains;
  throw ConfigError("unknown match rule '" + s + "'");
}
ClusterMode cluster_mode_from(const std::string& s) {
  if (s == "embedding") return ClusterMode::embedding;
  if (s == "exact-match") return ClusterMode::exact_match;
  throw ConfigError("unknown cluster mode '" + s + "'");
}

template <typename T>
T get_as(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("missing key '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!(alpha_total > 0.0 && alpha_total < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(alpha_ret > 0.0 && alpha_ret < 1.0)) throw ConfigError("alpha-ret must lie in (0, 1)");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be finite and >= 0");
  if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
  if (grid_steps < 2) throw ConfigError("grid-steps must be >= 2");
  if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0))
    throw ConfigError("similarity-threshold must lie in (0, 1)");
  if (budgets)
    for (double a : *budgets)
      if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("budgets must be finite and >= 0");
}

json run_config_to_json(const RunConfig& c) {
  json j = {{"alpha", c.alpha_total},
            {"alpha_ret", c.alpha_ret},
            {"eta", c.eta},
            {"gamma", c.gamma},
            {"grid_steps", c.grid_steps},
            {"similarity_threshold", c.similarity_threshold},
            {"stop_score", to_string(c.stop_mode)},
            {"match", to_string(c.match)},
            {"cluster_mode", nullptr},
            {"seed", c.seed},
            {"gridsearch", c.gridsearch},
            {"budgets", nullptr}};
  if (c.cluster_mode) j["cluster_mode"] = to_string(*c.cluster_mode);
  if (c.budgets) j["budgets"] = *c.budgets;
  return j;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> known = {
      "alpha", "alpha_ret", "eta", "gamma", "grid_steps", "similarity_threshold", "stop_score",
      "match", "cluster_mode", "seed", "gridsearch", "budgets", "threads"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown run config key '" + key + "'");
  if (j.contains("alpha")) c.alpha_total = get_as<double>(j, "alpha");
  if (j.contains("alpha_ret")) c.alpha_ret = get_as<double>(j, "alpha_ret");
  if (j.contains("eta")) c.eta = get_as<double>(j, "eta");
  if (j.contains("gamma")) c.gamma = get_as<double>(j, "gamma");
  if (j.contains("grid_steps")) c.grid_steps = get_as<int>(j, "grid_steps");
  if (j.contains("similarity_threshold")) c.similarity_threshold = get_as<double>(j, "similarity_threshold");
  if (j.contains("stop_score")) c.stop_mode = stop_mode_from(get_as<std::string>(j, "stop_score"));
  if (j.contains("match")) c.match = match_from(get_as<std::string>(j, "match"));
  if (j.contains("cluster_mode")) {
    if (j["cluster_mode"].is_null()) c.cluster_mode.reset();
    else c.cluster_mode = cluster_mode_from(get_as<std::string>(j, "cluster_mode"));
  }
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("gridsearch")) c.gridsearch = get_as<bool>(j, "gridsearch");
  if (j.contains("budgets")) {
    if (j["budgets"].is_null()) c.budgets.reset();
    else c.budgets = get_as<std::vector<double>>(j, "budgets");
  }
  if (j.contains("threads")) c.threads = get_as<unsigned>(j, "threads");
  c.validate();
  return c;
}

ScoringConfig scoring_for(const RunConfig& config, std::span<const TrajectoryRecord> data) {
  ScoringConfig s;
  s.clustering.similarity_threshold = config.similarity_threshold;
  s.clustering.eta = config.eta;
  s.clustering.mode = config.cluster_mode ? *config.cluster_mode : infer_cluster_mode(data);
  s.stop_mode = config.stop_mode;
  s.match = config.match;
  return s;
}

CalibrationResult calibrate(std::span<const TrajectoryRecord> opt,
                            std::span<const TrajectoryRecord> cal, const RunConfig& config) {
  const auto scoring = scoring_for(config, cal);
  const auto cal_summaries = summarize_all(cal, scoring, config.threads);
  std::vector<RecordSummary> opt_summaries;
  if (config.gridsearch && !config.budgets) opt_summaries = summarize_all(opt, scoring, config.threads);
  auto result = calibrate(opt_summaries, cal, cal_summaries, config);
  result.state.scoring = scoring;
  return result;
}

CalibrationResult calibrate(std::span<const RecordSummary> opt_summaries,
                            std::span<const TrajectoryRecord> cal,
                            std::span<const RecordSummary> cal_summaries, const RunConfig& config) {
  config.validate();
  if (cal.empty()) throw ConfigError("calibration set is empty");
  const int final_turn = common_final_turn(cal_summaries);

  CalibrationResult result;
  auto& state = result.state;
  auto& diag = result.diagnostics;
  state.scoring = scoring_for(config, cal);
  state.retrieval = calibrate_retrieval(cal, config.alpha_ret);

  if (config.budgets) {
    diag.requested_prefix = *config.budgets;
  } else if (config.gridsearch) {
    if (opt_summaries.empty()) throw ConfigError("grid search requires an optimization set");
    if (common_final_turn(opt_summaries) != final_turn)
      throw ConfigError("optimization and calibration sets have different turn counts");
    diag.grid = grid_search(opt_summaries, config.alpha_total, config.grid_steps, config.gamma,
                            config.stop_mode, config.threads);
    diag.requested_prefix = diag.grid->prefix;
  } else {
    throw ConfigError("either explicit budgets or grid search must be requested");
  }
  if (diag.requested_prefix.size() != static_cast<std::size_t>(final_turn))
    throw ConfigError("expected " + std::to_string(final_turn) + " budgets (alpha_0..alpha_" +
                      std::to_string(final_turn - 1) + "), got " +
                      std::to_string(diag.requested_prefix.size()));

  auto alloc = calibrate_allocation(cal_summaries, diag.requested_prefix, config.alpha_total,
                                    config.gamma, config.stop_mode);
  if (!alloc && config.budgets)
    throw ConstraintError(
        "budgets violate sum_t (1 - c_ans^t) * alpha_t <= (1 - c_ans^final) * alpha on the "
        "calibration set");
  // A grid optimum chosen on the optimization set can overshoot the budget
  // measured on the calibration set; shrink it until it fits.
  double scale = 1.0;
  for (int attempt = 0; !alloc && attempt < 60; ++attempt) {
    scale = attempt < 59 ? scale * 0.5 : 0.0;
    std::vector<double> shrunk = diag.requested_prefix;
    for (auto& a : shrunk) a *= scale;
    alloc = calibrate_allocation(cal_summaries, shrunk, config.alpha_total, config.gamma,
                                 config.stop_mode);
  }
  if (!alloc) throw ConstraintError("no feasible budget allocation on the calibration set");
  diag.budget_scale = scale;
  state.allocation = std::move(*alloc);

  std::vector<StopOutcome> outcomes;
  outcomes.reserve(cal_summaries.size());
  for (const auto& r : cal_summaries) {
    outcomes.push_back(apply_stopping(r, state.allocation.budgets));
    diag.n_cal_answerable_at_stop += r.answerable_by(outcomes.back().t_star);
  }
  state.q_freq = calibrate_freq_threshold(cal_summaries, outcomes, config.alpha_total);
  return result;
}

json threshold_to_json(const Threshold& q) {
  json value;
  switch (q.kind) {
    case Threshold::Kind::finite: value = q.value; break;
    case Threshold::Kind::neg_inf: value = "-inf"; break;
    case Threshold::Kind::pos_inf: value = "+inf"; break;
  }
  return {{"value", value}, {"level", q.level}, {"n", q.n}};
}

Threshold threshold_from_json(const json& j) {
  Threshold q;
  const auto& v = j.at("value");
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "-inf") q.kind = Threshold::Kind::neg_inf;
    else if (s == "+inf") q.kind = Threshold::Kind::pos_inf;
    else throw ConfigError("bad threshold sentinel '" + s + "'");
  } else {
    q.kind = Threshold::Kind::finite;
    q.value = v.get<double>();
  }
  q.level = j.at("level").get<double>();
  q.n = j.at("n").get<std::size_t>();
  return q;
}

json artifact_to_json(const CalibrationArtifact& a) {
  const auto& s = a.state;
  json budgets = json::array();
  for (const auto& b : s.allocation.budgets)
    budgets.push_back({{"t", b.t},
                       {"alpha_t", b.alpha_t},
                       {"q_t", threshold_to_json(b.q_t)},
                       {"c_ans_t", b.c_ans_t},
                       {"n_active", b.n_active},
                       {"n_unanswerable", b.n_unanswerable},
                       {"empty_unanswerable", b.empty_unanswerable}});
  json provenance = {{"input_digests", a.provenance.input_digests},
                     {"timestamp", nullptr},
                     {"seed", a.provenance.seed},
                     {"generator", kGeneratorId}};
  if (a.provenance.timestamp) provenance["timestamp"] = *a.provenance.timestamp;
  return {
      {"format", kArtifactFormat},
      {"version", a.version},
      {"config", run_config_to_json(a.config)},
      {"scoring",
       {{"similarity_threshold", s.scoring.clustering.similarity_threshold},
        {"eta", s.scoring.clustering.eta},
        {"cluster_mode", to_string(s.scoring.clustering.mode)},
        {"stop_score", to_string(s.scoring.stop_mode)},
        {"match", to_string(s.scoring.match)}}},
      {"retrieval",
       {{"q_ret", threshold_to_json(s.retrieval.q_ret)},
        {"alpha_ret", s.retrieval.alpha_ret},
        {"n_gold_scores", s.retrieval.n_gold_scores}}},
      {"allocation",
       {{"alpha_total", s.allocation.alpha_total},
        {"c_ans_final", s.allocation.c_ans_final},
        {"gamma", s.allocation.gamma},
        {"stop_score", to_string(s.allocation.stop_score_mode)},
        {"constraint_slack", s.allocation.constraint_slack()},
        {"budgets", std::move(budgets)}}},
      {"q_freq", threshold_to_json(s.q_freq)},
      {"budget_scale", a.budget_scale},
      {"grid_objective", a.grid_objective ? json(*a.grid_objective) : json(nullptr)},
      {"provenance", std::move(provenance)},
  };
}

CalibrationArtifact artifact_from_json(const json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != kArtifactFormat)
    throw VersionError("not a calibration artifact");
  const int version = j.value("version", -1);
  if (version != kArtifactVersion)
    throw VersionError("artifact version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kArtifactVersion) + ")");
  try {
    CalibrationArtifact a;
    a.version = version;
    a.config = run_config_from_json(j.at("config"));
    auto& s = a.state;
    const auto& sc = j.at("scoring");
    s.scoring.clustering.similarity_threshold = sc.at("similarity_threshold").get<double>();
    s.scoring.clustering.eta = sc.at("eta").get<double>();
    s.scoring.clustering.mode = cluster_mode_from(sc.at("cluster_mode").get<std::string>());
    s.scoring.stop_mode = stop_mode_from(sc.at("stop_score").get<std::string>());
    s.scoring.match = match_from(sc.at("match").get<std::string>());

    const auto& rj = j.at("retrieval");
    s.retrieval.q_ret = threshold_from_json(rj.at("q_ret"));
    s.retrieval.alpha_ret = rj.at("alpha_ret").get<double>();
    s.retrieval.n_gold_scores = rj.at("n_gold_scores").get<std::size_t>();

    const auto& aj = j.at("allocation");
    s.allocation.alpha_total = aj.at("alpha_total").get<double>();
    s.allocation.c_ans_final = aj.at("c_ans_final").get<double>();
    s.allocation.gamma = aj.at("gamma").get<double>();
    s.allocation.stop_score_mode = stop_mode_from(aj.at("stop_score").get<std::string>());
    for (const auto& bj : aj.at("budgets")) {
      TurnBudget b;
      b.t = bj.at("t").get<int>();
      b.alpha_t = bj.at("alpha_t").get<double>();
      b.q_t = threshold_from_json(bj.at("q_t"));
      b.c_ans_t = bj.at("c_ans_t").get<double>();
      b.n_active = bj.at("n_active").get<std::size_t>();
      b.n_unanswerable = bj.at("n_unanswerable").get<std::size_t>();
      b.empty_unanswerable = bj.at("empty_unanswerable").get<bool>();
      s.allocation.budgets.push_back(b);
    }
    s.q_freq = threshold_from_json(j.at("q_freq"));
    a.budget_scale = j.at("budget_scale").get<double>();
    if (!j.at("grid_objective").is_null()) a.grid_objective = j.at("grid_objective").get<double>();

    const auto& pj = j.at("provenance");
    a.provenance.input_digests = pj.at("input_digests").get<std::map<std::string, std::string>>();
    if (!pj.at("timestamp").is_null()) a.provenance.timestamp = pj.at("timestamp").get<std::string>();
    a.provenance.seed = pj.at("seed").get<std::uint64_t>();
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed calibration artifact: ") + e.what());
  }
}

void save_artifact(const std::string& path, const CalibrationArtifact& artifact) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write artifact '" + path + "'");
  out << artifact_to_json(artifact).dump(2) << '\n';
}

CalibrationArtifact load_artifact(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open artifact '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("artifact '" + path + "' is not valid JSON: " + e.what());
  }
  return artifact_from_json(j);
}

json metrics_to_json(const MetricsReport& m) {
  json per_turn = json::array();
  for (const auto& t : m.per_turn)
    per_turn.push_back({{"t", t.t}, {"n_corr", t.n_corr}, {"n_wrong", t.n_wrong}, {"c_ans", t.c_ans}});
  return {{"n_records", m.n_records},
          {"coverage_rate", m.coverage_rate},
          {"gold_retention_rate", m.gold_retention_rate},
          {"n_retrievable_gold", m.n_retrievable_gold},
          {"avg_passages_retained", m.avg_passages_retained},
          {"avg_turns", m.avg_turns},
          {"avg_set_size", m.avg_set_size},
          {"answer_rate", m.answer_rate},
          {"composite_L", m.composite_L},
          {"per_turn", std::move(per_turn)},
          {"alpha_total", m.alpha_total},
          {"alpha_ret", m.alpha_ret},
          {"gamma", m.gamma}};
}

json report_to_json(const MetricsReport& metrics, const CalibrationArtifact& artifact) {
  return {{"format", kReportFormat},
          {"version", kReportVersion},
          {"metrics", metrics_to_json(metrics)},
          {"coverage_vs_alpha",
           {{"alpha", metrics.alpha_total},
            {"target", 1.0 - metrics.alpha_total},
            {"coverage", metrics.coverage_rate}}},
          {"artifact_seed", artifact.provenance.seed}};
}

void write_records_csv(std::ostream& out, std::span<const RecordResult> rows) {
  out << "id,t_star,set_size,covered,cant_answer\n";
  for (const auto& r : rows) {
    // ids are written verbatim unless they need quoting
    std::string id = r.id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : id) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      id = quoted + "\"";
    }
    out << id << ',' << r.t_star << ',' << r.set_size << ',' << (r.covered ? 1 : 0) << ','
        << (r.cant_answer ? 1 : 0) << '\n';
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace micp
