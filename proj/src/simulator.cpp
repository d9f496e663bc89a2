#include "micp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "micp/errors.hpp"
#include "micp/parallel.hpp"
#include "micp/random.hpp"

namespace micp {

using nlohmann::json;

void SimConfig::validate() const {
  if (T < 0) throw ConfigError("T must be >= 0");
  if (M < 2) throw ConfigError("M must be >= 2");
  if (K < n_gold_passages) throw ConfigError("K must be at least n_gold_passages");
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  if (first_answerable_turn_probs.size() != static_cast<std::size_t>(T + 2))
    throw ConfigError("first_answerable_turn_probs must have T + 2 entries");
  double sum = 0.0;
  for (double p : first_answerable_turn_probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("probabilities must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("first_answerable_turn_probs must sum to 1");
  if (!(concentration_answerable > 0.0) || !(concentration_unanswerable > 0.0))
    throw ConfigError("concentrations must be positive");
  if (!(gold_score_sd > 0.0) || !(distractor_score_sd > 0.0))
    throw ConfigError("score standard deviations must be positive");
  if (!std::isfinite(gold_score_mean) || !std::isfinite(distractor_score_mean))
    throw ConfigError("score means must be finite");
  if (!(gold_retrievable_prob >= 0.0 && gold_retrievable_prob <= 1.0))
    throw ConfigError("gold_retrievable_prob must lie in [0, 1]");
}

json sim_config_to_json(const SimConfig& c) {
  return {{"n_records", c.n_records},
          {"T", c.T},
          {"M", c.M},
          {"K", c.K},
          {"first_answerable_turn_probs", c.first_answerable_turn_probs},
          {"concentration_answerable", c.concentration_answerable},
          {"concentration_unanswerable", c.concentration_unanswerable},
          {"gold_score_mean", c.gold_score_mean},
          {"gold_score_sd", c.gold_score_sd},
          {"distractor_score_mean", c.distractor_score_mean},
          {"distractor_score_sd", c.distractor_score_sd},
          {"gold_retrievable_prob", c.gold_retrievable_prob},
          {"n_gold_passages", c.n_gold_passages},
          {"vocab_size", c.vocab_size},
          {"seed", c.seed}};
}

SimConfig sim_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
  static const std::set<std::string> known = {
      "n_records", "T", "M", "K", "first_answerable_turn_probs", "concentration_answerable",
      "concentration_unanswerable", "gold_score_mean", "gold_score_sd", "distractor_score_mean",
      "distractor_score_sd", "gold_retrievable_prob", "n_gold_passages", "vocab_size", "seed"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown simulation config key '" + key + "'");

  SimConfig c;
  auto read = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) {
      try {
        it->get_to(field);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("simulation config key '") + key + "': " + e.what());
      }
    }
  };
  read("n_records", c.n_records);
  read("T", c.T);
  read("M", c.M);
  read("K", c.K);
  read("concentration_answerable", c.concentration_answerable);
  read("concentration_unanswerable", c.concentration_unanswerable);
  read("gold_score_mean", c.gold_score_mean);
  read("gold_score_sd", c.gold_score_sd);
  read("distractor_score_mean", c.distractor_score_mean);
  read("distractor_score_sd", c.distractor_score_sd);
  read("gold_retrievable_prob", c.gold_retrievable_prob);
  read("n_gold_passages", c.n_gold_passages);
  read("vocab_size", c.vocab_size);
  read("seed", c.seed);
  if (j.contains("first_answerable_turn_probs")) {
    read("first_answerable_turn_probs", c.first_answerable_turn_probs);
  } else if (c.T != SimConfig{}.T) {
    throw ConfigError("first_answerable_turn_probs is required when T differs from the default");
  }
  c.validate();
  return c;
}

namespace {

std::size_t draw_categorical(Rng& rng, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // rounding fell off the end: last positive weight
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

std::string record_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sim-%07zu", index);
  return buf;
}

TrajectoryRecord generate_one(const SimConfig& c, std::size_t index, std::optional<int>& first) {
  Rng rng(derive_seed(c.seed, index));
  TrajectoryRecord r;
  r.id = record_id(index);
  r.question = "synthetic question " + std::to_string(index);
  const std::string gold = "gold answer " + std::to_string(index);
  r.gold_answers = {gold};

  const std::size_t pick = draw_categorical(rng, c.first_answerable_turn_probs);
  first = pick <= static_cast<std::size_t>(c.T) ? std::optional<int>(static_cast<int>(pick))
                                                 : std::nullopt;

  const std::size_t dim = c.vocab_size + 1;  // slot 0 is the gold answer
  for (int t = 0; t <= c.T; ++t) {
    TurnLog turn;
    turn.t = t;

    for (std::size_t g = 0; g < c.n_gold_passages; ++g) {
      const bool present = rng.uniform() < c.gold_retrievable_prob;
      const double score = rng.normal(c.gold_score_mean, c.gold_score_sd);
      if (present) turn.passages.push_back({"gold-" + std::to_string(g), score, true});
    }
    for (std::size_t k = 0; turn.passages.size() < c.K; ++k)
      turn.passages.push_back({"d" + std::to_string(t) + "-" + std::to_string(k),
                               rng.normal(c.distractor_score_mean, c.distractor_score_sd), false});
    std::stable_sort(turn.passages.begin(), turn.passages.end(),
                     [](const PassageHit& a, const PassageHit& b) { return a.score > b.score; });

    std::vector<double> weights(dim, 0.0);
    double free_mass = 1.0;
    if (first && t >= *first) {
      weights[0] = rng.beta_a1(c.concentration_answerable);
      free_mass -= weights[0];
    } else {
      const std::size_t mode = 1 + rng.below(c.vocab_size);
      const double peak = rng.beta_a1(c.concentration_unanswerable);
      weights[mode] = peak;
      free_mass -= peak;
    }
    std::vector<double> spread(c.vocab_size);
    double spread_total = 0.0;
    for (auto& s : spread) spread_total += (s = rng.exponential());
    for (std::size_t v = 0; v < c.vocab_size; ++v) weights[v + 1] += free_mass * spread[v] / spread_total;

    for (std::size_t s = 0; s < c.M; ++s) {
      const std::size_t a = draw_categorical(rng, weights);
      AnswerSample sample;
      sample.text = a == 0 ? gold : "wrong answer " + std::to_string(a);
      std::vector<double> emb(dim, 0.0);
      emb[a] = 1.0;
      sample.embedding = std::move(emb);
      turn.samples.push_back(std::move(sample));
    }
    r.turns.push_back(std::move(turn));
  }
  return r;
}

}  // namespace

SimOutput generate_trajectories(const SimConfig& config, unsigned threads) {
  config.validate();
  SimOutput out;
  out.records.resize(config.n_records);
  out.truth.resize(config.n_records);
  parallel_for(config.n_records, threads, [&](std::size_t i) {
    std::optional<int> first;
    out.records[i] = generate_one(config, i, first);
    out.truth[i] = {out.records[i].id, first};
  });
  return out;
}

void write_ground_truth(std::ostream& out, const SimConfig& config,
                        const std::vector<GroundTruth>& truth) {
  out << json{{"generator", kGeneratorId}, {"config", sim_config_to_json(config)}}.dump() << '\n';
  for (const auto& g : truth) {
    json row = {{"id", g.id}, {"first_answerable_turn", nullptr}};
    if (g.first_answerable_turn) row["first_answerable_turn"] = *g.first_answerable_turn;
    out << row.dump() << '\n';
  }
}

}  // namespace micp
