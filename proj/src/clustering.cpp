#include "micp/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "micp/errors.hpp"

namespace micp {

void ClusteringConfig::validate() const {
  if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0))
    throw ConfigError("similarity threshold must lie strictly between 0 and 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be a finite value >= 0");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("embedding dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ConfigError("zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

using Groups = std::vector<std::vector<std::size_t>>;

Groups group_exact(std::span<const AnswerSample> samples) {
  std::map<std::string, std::size_t> slot;
  Groups groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = slot.emplace(normalize_answer(samples[i].text), groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

Groups group_average_linkage(std::span<const AnswerSample> samples, double threshold) {
  const std::size_t n = samples.size();
  for (const auto& s : samples)
    if (!s.embedding) throw ConfigError("embedding clustering requires every sample to carry an embedding");

  // sum[i][j]: total pairwise similarity between clusters i and j.
  std::vector<std::vector<double>> sum(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      sum[i][j] = sum[j][i] = cosine_similarity(*samples[i].embedding, *samples[j].embedding);

  Groups groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = {i};
  std::vector<bool> alive(n, true);

  while (true) {
    bool found = false;
    double best = 0.0;
    std::tuple<std::size_t, std::size_t> best_key{};
    std::size_t best_a = 0, best_b = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        const double avg =
            sum[a][b] / static_cast<double>(groups[a].size() * groups[b].size());
        // groups[x].front() is the lowest member index of cluster x
        const auto key = std::minmax(groups[a].front(), groups[b].front());
        const std::tuple<std::size_t, std::size_t> tkey{key.first, key.second};
        if (!found || avg > best || (avg == best && tkey < best_key)) {
          found = true;
          best = avg;
          best_key = tkey;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (!found || best < threshold) break;

    auto& into = groups[best_a];
    into.insert(into.end(), groups[best_b].begin(), groups[best_b].end());
    std::sort(into.begin(), into.end());
    groups[best_b].clear();
    alive[best_b] = false;
    for (std::size_t c = 0; c < n; ++c) {
      if (!alive[c] || c == best_a) continue;
      sum[best_a][c] = sum[c][best_a] = sum[best_a][c] + sum[best_b][c];
    }
  }

  Groups out;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) out.push_back(std::move(groups[i]));
  return out;
}

}  // namespace

std::vector<Cluster> cluster_answers(std::span<const AnswerSample> samples,
                                     const ClusteringConfig& config) {
  config.validate();
  if (samples.empty()) throw ConfigError("cannot cluster an empty sample list");

  Groups groups = config.mode == ClusterMode::embedding
                      ? group_average_linkage(samples, config.similarity_threshold)
                      : group_exact(samples);

  const auto m = static_cast<double>(samples.size());
  std::vector<Cluster> clusters;
  clusters.reserve(groups.size());
  for (auto& g : groups) {
    Cluster c;
    c.representative = samples[g.front()].text;
    c.frequency = static_cast<double>(g.size()) / m;
    c.members = std::move(g);
    clusters.push_back(std::move(c));
  }
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    if (a.representative != b.representative) return a.representative < b.representative;
    return a.members.front() < b.members.front();
  });

  const double ne = samples.size() >= 2 ? normalized_entropy(clusters, samples.size()) : 0.0;
  for (auto& c : clusters) c.penalized_confidence = penalized_confidence(c.frequency, ne, config.eta);
  return clusters;
}

double normalized_entropy_of(std::span<const double> frequencies, std::size_t sample_count) {
  if (sample_count < 2) throw ConfigError("normalized entropy needs at least 2 samples");
  double h = 0.0;
  for (double f : frequencies)
    if (f > 0.0) h -= f * std::log(f);
  return h / std::log(static_cast<double>(sample_count));
}

double normalized_entropy(std::span<const Cluster> clusters, std::size_t sample_count) {
  std::vector<double> freqs;
  freqs.reserve(clusters.size());
  for (const auto& c : clusters) freqs.push_back(c.frequency);
  return normalized_entropy_of(freqs, sample_count);
}

}  // namespace micp
