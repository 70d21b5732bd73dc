#pragma once

#include <span>
#include <vector>

#include "wmobs/classifier.hpp"
#include "wmobs/toylm.hpp"

namespace wmobs {

struct FeatureConfig {
  bool use_bigrams = true;
  int vocab_size = 512;

  // Unigram slots [0, V), then bigram (a, b) at V + a * V + b.
  Eigen::Index dim() const {
    const auto v = static_cast<Eigen::Index>(vocab_size);
    return use_bigrams ? v + v * v : v;
  }
  bool operator==(const FeatureConfig&) const = default;
};

/// Unigram (and bigram) counts of the generated tokens, L2-normalized.
FeatureVector featurize(std::span<const TokenId> tokens, const FeatureConfig& cfg);
inline FeatureVector featurize(const TokenSeq& x, const FeatureConfig& cfg) { return featurize(x.tokens, cfg); }

struct CurvePoint {
  int samples_per_entity = 0;
  double top1 = 0.0;
  double top3 = 0.0;
};

struct LearningCurve {
  int n_entities = 0;
  std::vector<CurvePoint> points;
};

/// For each count c, trains on the first c pool examples of every entity (in
/// pool order) and evaluates on the fixed test set. Weights are stored in
/// single precision.
LearningCurve learning_curve(const LabeledDataset& pool, const LabeledDataset& test,
                             std::span<const int> sample_counts, const TrainHyper& hyper, int workers = 1);

}  // namespace wmobs
