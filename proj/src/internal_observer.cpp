#include "wmobs/internal_observer.hpp"

#include <algorithm>
#include <cmath>

#include "wmobs/error.hpp"
#include "wmobs/parallel.hpp"

namespace wmobs {

CalibrationTable calibrate_from_scores(const std::vector<std::vector<double>>& null_scores,
                                       double target_fpr, int min_nulls) {
  if (!(target_fpr > 0.0 && target_fpr < 1.0))
    throw Error(ErrorCode::InvalidSpec, "target_fpr must lie in (0, 1)");
  if (null_scores.empty()) throw Error(ErrorCode::InsufficientNulls, "no keys to calibrate");
  CalibrationTable cal;
  cal.target_fpr = target_fpr;
  cal.null_sample_count = static_cast<int>(null_scores.front().size());
  for (std::size_t e = 0; e < null_scores.size(); ++e) {
    std::vector<double> sorted = null_scores[e];
    const auto n = static_cast<long>(sorted.size());
    if (n < std::max(min_nulls, 1))
      throw Error(ErrorCode::InsufficientNulls, "key " + std::to_string(e) + " has " + std::to_string(n) +
                                                    " null scores, need " + std::to_string(min_nulls));
    std::sort(sorted.begin(), sorted.end());
    // The epsilon keeps products such as 0.8 * 10 from rounding up a rank.
    long r = static_cast<long>(std::ceil((1.0 - target_fpr) * static_cast<double>(n + 1) - 1e-9));
    r = std::clamp(r, 1L, n);
    cal.thresholds.push_back(sorted[static_cast<std::size_t>(r - 1)]);
    cal.null_sample_count = std::min(cal.null_sample_count, static_cast<int>(n));
  }
  return cal;
}

CalibrationTable calibrate(const DetectorBank& bank, const std::vector<std::vector<TokenSeq>>& null_outputs,
                           double target_fpr) {
  if (null_outputs.size() != bank.size())
    throw Error(ErrorCode::SizeMismatch, "one null set per detector required");
  std::vector<std::vector<double>> scores(bank.size());
  for (std::size_t e = 0; e < bank.size(); ++e) {
    scores[e].reserve(null_outputs[e].size());
    for (const auto& x : null_outputs[e]) scores[e].push_back(bank[e].score(x).z);
  }
  return calibrate_from_scores(scores, target_fpr);
}

ScoreVector score_all(const DetectorBank& bank, const TokenSeq& x) {
  ScoreVector sv(static_cast<Eigen::Index>(bank.size()));
  for (std::size_t e = 0; e < bank.size(); ++e) sv(static_cast<Eigen::Index>(e)) = bank[e].score(x).z;
  return sv;
}

Eigen::MatrixXd score_matrix(const DetectorBank& bank, std::span<const TokenSeq> outputs, int workers) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(outputs.size()), static_cast<Eigen::Index>(bank.size()));
  parallel_for(outputs.size(), workers, [&](std::size_t i) {
    m.row(static_cast<Eigen::Index>(i)) = score_all(bank, outputs[i]).transpose();
  });
  return m;
}

std::vector<std::vector<double>> cross_key_nulls(const Eigen::MatrixXd& scores, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
    throw Error(ErrorCode::SizeMismatch, "one label per scored output required");
  std::vector<std::vector<double>> nulls(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index e = 0; e < scores.cols(); ++e)
      if (labels[static_cast<std::size_t>(i)] != e) nulls[static_cast<std::size_t>(e)].push_back(scores(i, e));
  return nulls;
}

int attribute(const ScoreVector& sv) {
  Eigen::Index best = 0;
  for (Eigen::Index e = 1; e < sv.size(); ++e)
    if (sv(e) > sv(best)) best = e;
  return static_cast<int>(best);
}

std::optional<int> attribute_thresholded(const ScoreVector& sv, const CalibrationTable& cal) {
  if (static_cast<std::size_t>(sv.size()) != cal.thresholds.size())
    throw Error(ErrorCode::SizeMismatch, "score vector and calibration cover different entities");
  if (sv.size() == 0) throw Error(ErrorCode::SizeMismatch, "empty score vector");
  const int e = attribute(sv);
  if (sv(e) > cal.thresholds[static_cast<std::size_t>(e)]) return e;
  return std::nullopt;
}

AttributionReport evaluate_attribution_scores(const Eigen::MatrixXd& scores, std::span<const int> labels,
                                              const CalibrationTable& cal) {
  if (scores.rows() == 0) throw Error(ErrorCode::EmptyTestSet, "no test outputs");
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
    throw Error(ErrorCode::SizeMismatch, "one label per scored output required");
  const auto n = static_cast<int>(scores.cols());

  AttributionReport rep;
  rep.n_entities = n;
  rep.confusion = Eigen::MatrixXi::Zero(n, n);
  rep.unattributed.assign(static_cast<std::size_t>(n), 0);
  std::vector<int> per_entity(static_cast<std::size_t>(n), 0);
  std::vector<int> null_total(static_cast<std::size_t>(n), 0), null_hits(static_cast<std::size_t>(n), 0);
  int correct = 0, wrong = 0;

  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const int truth = labels[static_cast<std::size_t>(i)];
    if (truth < 0 || truth >= n) throw Error(ErrorCode::SizeMismatch, "label outside the bank");
    ++per_entity[static_cast<std::size_t>(truth)];
    const ScoreVector sv = scores.row(i).transpose();
    for (int e = 0; e < n; ++e) {
      if (e == truth) continue;
      ++null_total[static_cast<std::size_t>(e)];
      null_hits[static_cast<std::size_t>(e)] += sv(e) > cal.thresholds[static_cast<std::size_t>(e)];
    }
    const auto got = attribute_thresholded(sv, cal);
    if (!got) {
      ++rep.unattributed[static_cast<std::size_t>(truth)];
      ++rep.unattributed_count;
      continue;
    }
    ++rep.confusion(truth, *got);
    if (*got == truth) {
      ++correct;
    } else {
      ++wrong;
    }
  }

  rep.samples_per_entity = *std::max_element(per_entity.begin(), per_entity.end());
  const auto total = static_cast<double>(scores.rows());
  rep.top1_tpr_at_fpr = correct / total;
  rep.global_misattribution = wrong / total;
  for (int e = 0; e < n; ++e) {
    const auto k = static_cast<std::size_t>(e);
    rep.per_key_fpr.push_back(null_total[k] ? static_cast<double>(null_hits[k]) / null_total[k] : 0.0);
  }
  return rep;
}

AttributionReport evaluate_attribution(const DetectorBank& bank, const CalibrationTable& cal,
                                       std::span<const TokenSeq> test, int workers) {
  if (test.empty()) throw Error(ErrorCode::EmptyTestSet, "no test outputs");
  std::vector<int> labels;
  labels.reserve(test.size());
  for (const auto& x : test) {
    if (!x.true_entity) throw Error(ErrorCode::InvalidSpec, "test output without ground-truth label");
    labels.push_back(*x.true_entity);
  }
  return evaluate_attribution_scores(score_matrix(bank, test, workers), labels, cal);
}

LinkVerdict link(const TokenSeq& xi, const TokenSeq& xj, const DetectorBank& bank, const CalibrationTable& cal) {
  const auto ai = attribute_thresholded(score_all(bank, xi), cal);
  const auto aj = attribute_thresholded(score_all(bank, xj), cal);
  if (!ai || !aj) return LinkVerdict::Undecided;
  return *ai == *aj ? LinkVerdict::Linked : LinkVerdict::Unlinked;
}

UsageTable monitor_usage(std::span<const TimedOutput> stream, const DetectorBank& bank,
                         const CalibrationTable& cal, double bucket_width) {
  if (!(bucket_width > 0.0)) throw Error(ErrorCode::InvalidSpec, "bucket width must be positive");
  const auto n = static_cast<Eigen::Index>(bank.size());
  UsageTable table;
  table.bucket_width = bucket_width;
  Eigen::Index buckets = 0;
  std::vector<Eigen::Index> bucket_of;
  bucket_of.reserve(stream.size());
  for (const auto& item : stream) {
    if (!(item.timestamp >= 0.0)) throw Error(ErrorCode::InvalidSpec, "timestamps must be non-negative");
    const auto b = static_cast<Eigen::Index>(std::floor(item.timestamp / bucket_width));
    bucket_of.push_back(b);
    buckets = std::max(buckets, b + 1);
  }
  table.counts = Eigen::MatrixXi::Zero(buckets, n + 1);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto got = attribute_thresholded(score_all(bank, stream[i].output), cal);
    ++table.counts(bucket_of[i], got ? *got : n);
  }
  return table;
}

}  // namespace wmobs
