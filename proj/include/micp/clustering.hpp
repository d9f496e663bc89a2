#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "micp/trajectory.hpp"

namespace micp {

enum class ClusterMode { embedding, exact_match };

struct ClusteringConfig {
  double similarity_threshold = 0.9;
  double eta = 0.1;  // weight of the normalized-entropy penalty
  ClusterMode mode = ClusterMode::embedding;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct Cluster {
  std::string representative;        // text of the lowest-index member
  std::vector<std::size_t> members;  // ascending sample indices
  double frequency = 0.0;            // |members| / M
  double penalized_confidence = 0.0;

  bool operator==(const Cluster&) const = default;
};

// Average-linkage agglomeration on cosine similarity (embedding mode) or
// grouping by normalized text (exact-match mode). Output is ordered by
// descending frequency, then ascending representative, then lowest member.
// penalized_confidence is filled in with the turn-level entropy penalty.
std::vector<Cluster> cluster_answers(std::span<const AnswerSample> samples,
                                     const ClusteringConfig& config);

// Entropy of the cluster frequencies divided by log M. Requires M >= 2.
double normalized_entropy(std::span<const Cluster> clusters, std::size_t sample_count);
double normalized_entropy_of(std::span<const double> frequencies, std::size_t sample_count);

constexpr double penalized_confidence(double frequency, double ne, double eta) {
  return frequency - eta * ne;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace micp
