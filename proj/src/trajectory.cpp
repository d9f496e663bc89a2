#include "micp/trajectory.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "micp/errors.hpp"
#include "micp/random.hpp"

namespace micp {

using nlohmann::json;

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc < 0x80 && std::ispunct(uc)) continue;
    cleaned.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : c);
  }

  std::vector<std::string> tokens;
  std::istringstream words(cleaned);
  for (std::string w; words >> w;) tokens.push_back(std::move(w));

  std::size_t first = 0;
  while (first < tokens.size() &&
         (tokens[first] == "a" || tokens[first] == "an" || tokens[first] == "the"))
    ++first;

  std::string out;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool matches_gold(std::string_view answer, std::span<const std::string> golds, MatchRule rule) {
  if (golds.empty()) throw ConfigError("matches_gold: gold answer list is empty");
  const std::string norm = normalize_answer(answer);
  for (const auto& g : golds) {
    const std::string gold = normalize_answer(g);
    if (rule == MatchRule::exact) {
      if (norm == gold) return true;
    } else if (!gold.empty()) {
      // token-boundary containment
      const std::string hay = " " + norm + " ";
      if (hay.find(" " + gold + " ") != std::string::npos) return true;
    }
  }
  return false;
}

namespace {

template <typename T>
T require_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(line, std::string("field '") + key + "': " + e.what());
  }
}

json require_array(const json& j, const char* key, std::size_t line) {
  auto value = require_field<json>(j, key, line);
  if (!value.is_array()) throw ParseError(line, std::string("field '") + key + "' is not an array");
  return value;
}

}  // namespace

void validate_record(const TrajectoryRecord& r, std::size_t line) {
  if (r.gold_answers.empty()) throw SchemaError(line, "gold_answers is empty");
  if (r.turns.empty()) throw SchemaError(line, "turns is empty");
  const std::size_t m = r.turns.front().samples.size();
  if (m == 0) throw SchemaError(line, "turn 0 has no samples");
  std::optional<std::size_t> dim;
  for (std::size_t i = 0; i < r.turns.size(); ++i) {
    const auto& turn = r.turns[i];
    if (turn.t != static_cast<int>(i))
      throw SchemaError(line, "turn indices must be consecutive from 0 (found t=" +
                                  std::to_string(turn.t) + " at position " + std::to_string(i) + ")");
    if (turn.samples.size() != m)
      throw SchemaError(line, "inconsistent sample count: turn 0 has " + std::to_string(m) +
                                  ", turn " + std::to_string(i) + " has " +
                                  std::to_string(turn.samples.size()));
    for (const auto& p : turn.passages)
      if (!std::isfinite(p.score)) throw SchemaError(line, "non-finite passage score");
    for (const auto& s : turn.samples) {
      if (!s.embedding) continue;
      if (s.embedding->empty()) throw SchemaError(line, "empty embedding");
      if (dim && *dim != s.embedding->size())
        throw SchemaError(line, "embedding dimension mismatch");
      dim = s.embedding->size();
      double norm2 = 0.0;
      for (double v : *s.embedding) {
        if (!std::isfinite(v)) throw SchemaError(line, "non-finite embedding value");
        norm2 += v * v;
      }
      if (norm2 == 0.0) throw SchemaError(line, "zero-norm embedding");
    }
  }
}

TrajectoryRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "record is not an object");
  TrajectoryRecord r;
  r.id = require_field<std::string>(j, "id", line);
  r.question = require_field<std::string>(j, "question", line);
  r.gold_answers = require_field<std::vector<std::string>>(j, "gold_answers", line);
  const auto turns = require_array(j, "turns", line);
  for (const auto& tj : turns) {
    if (!tj.is_object()) throw ParseError(line, "turn is not an object");
    TurnLog turn;
    turn.t = require_field<int>(tj, "t", line);
    for (const auto& pj : require_array(tj, "passages", line)) {
      if (!pj.is_object()) throw ParseError(line, "passage is not an object");
      turn.passages.push_back({require_field<std::string>(pj, "pid", line),
                               require_field<double>(pj, "score", line),
                               require_field<bool>(pj, "is_gold", line)});
    }
    for (const auto& sj : require_array(tj, "samples", line)) {
      if (!sj.is_object()) throw ParseError(line, "sample is not an object");
      AnswerSample s;
      s.text = require_field<std::string>(sj, "text", line);
      if (auto it = sj.find("embedding"); it != sj.end() && !it->is_null())
        s.embedding = require_field<std::vector<double>>(sj, "embedding", line);
      turn.samples.push_back(std::move(s));
    }
    r.turns.push_back(std::move(turn));
  }
  validate_record(r, line);
  return r;
}

json record_to_json(const TrajectoryRecord& r) {
  json turns = json::array();
  for (const auto& turn : r.turns) {
    json passages = json::array();
    for (const auto& p : turn.passages)
      passages.push_back({{"pid", p.pid}, {"score", p.score}, {"is_gold", p.is_gold}});
    json samples = json::array();
    for (const auto& s : turn.samples) {
      json sj = {{"text", s.text}};
      if (s.embedding) sj["embedding"] = *s.embedding;
      samples.push_back(std::move(sj));
    }
    turns.push_back({{"t", turn.t}, {"passages", std::move(passages)}, {"samples", std::move(samples)}});
  }
  return {{"id", r.id},
          {"question", r.question},
          {"gold_answers", r.gold_answers},
          {"turns", std::move(turns)}};
}

std::vector<TrajectoryRecord> parse_trajectory_log(std::istream& in) {
  std::vector<TrajectoryRecord> records;
  std::optional<std::size_t> dataset_dim;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    auto record = record_from_json(j, line_no);
    for (const auto& turn : record.turns)
      for (const auto& s : turn.samples) {
        if (!s.embedding) continue;
        if (dataset_dim && *dataset_dim != s.embedding->size())
          throw SchemaError(line_no, "embedding dimension differs from earlier records");
        dataset_dim = s.embedding->size();
      }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<TrajectoryRecord> read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory log '" + path + "'");
  return parse_trajectory_log(in);
}

void write_trajectory_log(std::ostream& out, std::span<const TrajectoryRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_trajectory_file(const std::string& path, std::span<const TrajectoryRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_trajectory_log(out, records);
}

DatasetSplit split_dataset(std::span<const TrajectoryRecord> records, std::uint64_t seed,
                           SplitSizes sizes) {
  const std::size_t wanted = sizes.n_opt + sizes.n_cal + sizes.n_test;
  if (wanted > records.size())
    throw ConfigError("split sizes (" + std::to_string(wanted) + ") exceed record count (" +
                      std::to_string(records.size()) + ")");
  std::unordered_set<std::string> ids;
  for (const auto& r : records)
    if (!ids.insert(r.id).second) throw ConfigError("duplicate record id '" + r.id + "'");

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  DatasetSplit split;
  split.seed = seed;
  std::size_t pos = 0;
  auto take = [&](std::vector<TrajectoryRecord>& dst, std::size_t n) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) dst.push_back(records[order[pos++]]);
  };
  take(split.opt, sizes.n_opt);
  take(split.cal, sizes.n_cal);
  take(split.test, sizes.n_test);
  return split;
}

}  // namespace micp
