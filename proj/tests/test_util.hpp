#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "micp/trajectory.hpp"

namespace micp::test {

// Record whose turn t samples are `turns[t]` (text only, no embeddings).
inline TrajectoryRecord text_record(std::string id, std::vector<std::string> golds,
                                    const std::vector<std::vector<std::string>>& turns) {
  TrajectoryRecord r;
  r.id = std::move(id);
  r.question = "q " + r.id;
  r.gold_answers = std::move(golds);
  for (std::size_t t = 0; t < turns.size(); ++t) {
    TurnLog turn;
    turn.t = static_cast<int>(t);
    for (const auto& s : turns[t]) turn.samples.push_back({s, std::nullopt});
    r.turns.push_back(std::move(turn));
  }
  return r;
}

// `count` copies of `text`.
inline std::vector<std::string> repeat(const std::string& text, std::size_t count) {
  return std::vector<std::string>(count, text);
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Oracle: sort then index, 1-based k; returns nullopt for out-of-range k.
inline std::optional<double> kth_smallest(std::vector<double> v, long k) {
  if (k < 1 || k > static_cast<long>(v.size())) return std::nullopt;
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(k - 1)];
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace micp::test
