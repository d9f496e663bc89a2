#pragma once

// Trajectory data model: one question's multi-turn log of retrieved passages
// and sampled answers, plus answer matching, JSONL ingestion and splitting.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace micp {

struct PassageHit {
  std::string pid;
  double score = 0.0;  // retriever relevance s_t(p)
  bool is_gold = false;

  bool operator==(const PassageHit&) const = default;
};

struct AnswerSample {
  std::string text;
  std::optional<std::vector<double>> embedding;

  bool operator==(const AnswerSample&) const = default;
};

struct TurnLog {
  int t = 0;
  std::vector<PassageHit> passages;
  std::vector<AnswerSample> samples;

  bool operator==(const TurnLog&) const = default;
};

struct TrajectoryRecord {
  std::string id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::vector<TurnLog> turns;  // turn 0 .. T

  // Index of the final turn (T).
  int final_turn() const { return static_cast<int>(turns.size()) - 1; }
  std::size_t sample_count() const { return turns.empty() ? 0 : turns.front().samples.size(); }

  bool operator==(const TrajectoryRecord&) const = default;
};

struct DatasetSplit {
  std::vector<TrajectoryRecord> opt;
  std::vector<TrajectoryRecord> cal;
  std::vector<TrajectoryRecord> test;
  std::uint64_t seed = 0;
};

struct SplitSizes {
  std::size_t n_opt = 0;
  std::size_t n_cal = 0;
  std::size_t n_test = 0;
};

// How a sampled answer is compared against the gold answers.
enum class MatchRule {
  exact,     // normalized exact match
  contains,  // normalized answer contains a normalized gold answer
};

// Lowercase, strip punctuation, drop leading articles, collapse whitespace.
std::string normalize_answer(std::string_view text);

// Throws ConfigError when golds is empty.
bool matches_gold(std::string_view answer, std::span<const std::string> golds,
                  MatchRule rule = MatchRule::exact);

// Parses line-delimited records. Blank lines are skipped; line numbers in
// errors are 1-based physical lines.
std::vector<TrajectoryRecord> parse_trajectory_log(std::istream& in);
std::vector<TrajectoryRecord> read_trajectory_file(const std::string& path);

// Checks the record invariants; `line` is only used for error messages.
void validate_record(const TrajectoryRecord& record, std::size_t line = 0);

nlohmann::json record_to_json(const TrajectoryRecord& record);
TrajectoryRecord record_from_json(const nlohmann::json& j, std::size_t line = 0);

void write_trajectory_log(std::ostream& out, std::span<const TrajectoryRecord> records);
void write_trajectory_file(const std::string& path, std::span<const TrajectoryRecord> records);

// Seeded Fisher-Yates shuffle followed by contiguous slicing into opt, cal, test.
DatasetSplit split_dataset(std::span<const TrajectoryRecord> records, std::uint64_t seed,
                           SplitSizes sizes);

}  // namespace micp
