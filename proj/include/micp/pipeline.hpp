#pragma once

// End-to-end calibration and the persisted artifact / report formats.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "micp/answer_set.hpp"
#include "micp/trajectory.hpp"

namespace micp {

inline constexpr const char* kArtifactFormat = "micp-calibration-artifact";
inline constexpr int kArtifactVersion = 1;
inline constexpr const char* kReportFormat = "micp-metrics-report";
inline constexpr int kReportVersion = 1;

struct RunConfig {
  double alpha_total = 0.10;
  double alpha_ret = 0.1;
  double eta = 0.1;
  double gamma = 1.0;
  int grid_steps = 20;
  double similarity_threshold = 0.9;
  StopScoreMode stop_mode = StopScoreMode::penalized_freq;
  MatchRule match = MatchRule::exact;
  std::optional<ClusterMode> cluster_mode;  // inferred from the data when unset
  std::uint64_t seed = 0;
  bool gridsearch = false;
  std::optional<std::vector<double>> budgets;  // alpha_0..alpha_{T-1}
  unsigned threads = 1;                        // never serialized

  void validate() const;
  // threads is ignored: it never changes results
  bool operator==(const RunConfig& o) const {
    return alpha_total == o.alpha_total && alpha_ret == o.alpha_ret && eta == o.eta &&
           gamma == o.gamma && grid_steps == o.grid_steps &&
           similarity_threshold == o.similarity_threshold && stop_mode == o.stop_mode &&
           match == o.match && cluster_mode == o.cluster_mode && seed == o.seed &&
           gridsearch == o.gridsearch && budgets == o.budgets;
  }
};

nlohmann::json run_config_to_json(const RunConfig& config);
// Applies the keys present in `j` on top of `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

struct CalibrationDiagnostics {
  std::optional<GridSearchResult> grid;
  std::vector<double> requested_prefix;
  double budget_scale = 1.0;  // < 1 when the grid optimum had to be shrunk on cal
  std::size_t n_cal_answerable_at_stop = 0;
};

struct CalibrationResult {
  CalibrationState state;
  CalibrationDiagnostics diagnostics;
};

// Stage 1 (retrieval threshold) then stage 2 (stop thresholds, frequency
// threshold). `opt` is only read when config.gridsearch is set.
CalibrationResult calibrate(std::span<const TrajectoryRecord> opt,
                            std::span<const TrajectoryRecord> cal, const RunConfig& config);

// Same, with precomputed summaries (they must match config's scoring).
CalibrationResult calibrate(std::span<const RecordSummary> opt_summaries,
                            std::span<const TrajectoryRecord> cal,
                            std::span<const RecordSummary> cal_summaries, const RunConfig& config);

ScoringConfig scoring_for(const RunConfig& config, std::span<const TrajectoryRecord> data);

struct Provenance {
  std::map<std::string, std::string> input_digests;  // role -> sha256 hex
  std::optional<std::string> timestamp;
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

struct CalibrationArtifact {
  int version = kArtifactVersion;
  RunConfig config;
  CalibrationState state;
  double budget_scale = 1.0;
  std::optional<double> grid_objective;
  Provenance provenance;

  bool operator==(const CalibrationArtifact&) const = default;
};

nlohmann::json threshold_to_json(const Threshold& q);
Threshold threshold_from_json(const nlohmann::json& j);

nlohmann::json artifact_to_json(const CalibrationArtifact& artifact);
// Throws VersionError on a format or version mismatch.
CalibrationArtifact artifact_from_json(const nlohmann::json& j);
void save_artifact(const std::string& path, const CalibrationArtifact& artifact);
CalibrationArtifact load_artifact(const std::string& path);

nlohmann::json metrics_to_json(const MetricsReport& metrics);
nlohmann::json report_to_json(const MetricsReport& metrics, const CalibrationArtifact& artifact);
void write_records_csv(std::ostream& out, std::span<const RecordResult> rows);

std::string sha256_file(const std::string& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace micp
