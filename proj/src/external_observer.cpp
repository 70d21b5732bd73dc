#include "wmobs/external_observer.hpp"

#include <algorithm>
#include <cmath>

#include "wmobs/error.hpp"
#include "wmobs/parallel.hpp"

namespace wmobs {

FeatureVector featurize(std::span<const TokenId> tokens, const FeatureConfig& cfg) {
  if (tokens.empty()) throw Error(ErrorCode::EmptyOutput, "cannot featurize an empty output");
  const auto V = static_cast<Eigen::Index>(cfg.vocab_size);
  std::vector<Eigen::Index> idx;
  idx.reserve(cfg.use_bigrams ? 2 * tokens.size() : tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const TokenId tok = tokens[t];
    if (tok < 0 || tok >= cfg.vocab_size) throw Error(ErrorCode::InvalidSpec, "token id outside vocabulary");
    idx.push_back(tok);
    if (cfg.use_bigrams && t > 0) idx.push_back(V + static_cast<Eigen::Index>(tokens[t - 1]) * V + tok);
  }
  std::sort(idx.begin(), idx.end());

  FeatureVector fv(cfg.dim());
  fv.reserve(static_cast<Eigen::Index>(idx.size()));
  double sq = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && idx[j] == idx[i]) ++j;
    const auto c = static_cast<double>(j - i);
    fv.insertBack(idx[i]) = c;
    sq += c * c;
    i = j;
  }
  fv /= std::sqrt(sq);
  return fv;
}

LearningCurve learning_curve(const LabeledDataset& pool, const LabeledDataset& test,
                             std::span<const int> sample_counts, const TrainHyper& hyper, int workers) {
  if (sample_counts.empty()) throw Error(ErrorCode::InvalidSpec, "no sample counts");
  for (std::size_t i = 0; i < sample_counts.size(); ++i) {
    if (sample_counts[i] < 1) throw Error(ErrorCode::InvalidSpec, "sample counts must be positive");
    if (i > 0 && sample_counts[i] <= sample_counts[i - 1])
      throw Error(ErrorCode::InvalidSpec, "sample counts must be strictly increasing");
  }
  if (test.size() == 0) throw Error(ErrorCode::EmptyTestSet, "no test examples");

  // Pool indices per entity, in pool order.
  std::vector<std::vector<std::size_t>> by_entity(static_cast<std::size_t>(pool.n_classes));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int y = pool.labels[i];
    if (y < 0 || y >= pool.n_classes) throw Error(ErrorCode::InvalidSpec, "label outside [0, n_classes)");
    by_entity[static_cast<std::size_t>(y)].push_back(i);
  }
  const int need = sample_counts.back();
  for (std::size_t e = 0; e < by_entity.size(); ++e)
    if (static_cast<int>(by_entity[e].size()) < need)
      throw Error(ErrorCode::InsufficientPool, "entity " + std::to_string(e) + " has " +
                                                   std::to_string(by_entity[e].size()) + " pool samples, need " +
                                                   std::to_string(need));

  LearningCurve curve;
  curve.n_entities = pool.n_classes;
  curve.points.resize(sample_counts.size());
  parallel_for(sample_counts.size(), workers, [&](std::size_t p) {
    const auto c = static_cast<std::size_t>(sample_counts[p]);
    std::vector<std::size_t> subset;
    subset.reserve(c * by_entity.size());
    for (const auto& ids : by_entity) subset.insert(subset.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(c));
    std::sort(subset.begin(), subset.end());
    const auto clf = train<float>(pool, hyper, subset);
    const TopKAccuracy acc = evaluate(clf, test);
    curve.points[p] = {sample_counts[p], acc.top1, acc.top3};
  });
  return curve;
}

}  // namespace wmobs
