#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "wmobs/registry.hpp"
#include "wmobs/toylm.hpp"

namespace wmobs {

/// Detector statistics D_{k_e}(x), one entry per entity in bank order.
using ScoreVector = Eigen::VectorXd;

struct CalibrationTable {
  std::vector<double> thresholds;  // tau_e, indexed by entity id
  double target_fpr = 0.01;
  int null_sample_count = 0;  // smallest per-key null set used
};

inline constexpr int kMinNullsPerKey = 100;

/// Per-key threshold: the r-th smallest null score with
/// r = ceil((1 - alpha)(N + 1)), clamped to N. Combined with the strict rule
/// s > tau this bounds the calibration-set FPR by alpha.
CalibrationTable calibrate_from_scores(const std::vector<std::vector<double>>& null_scores,
                                       double target_fpr, int min_nulls = kMinNullsPerKey);

CalibrationTable calibrate(const DetectorBank& bank, const std::vector<std::vector<TokenSeq>>& null_outputs,
                           double target_fpr);

ScoreVector score_all(const DetectorBank& bank, const TokenSeq& x);

/// Rows are outputs, columns are entities.
Eigen::MatrixXd score_matrix(const DetectorBank& bank, std::span<const TokenSeq> outputs, int workers = 1);

/// Cross-key nulls: for each key e, the scores of outputs whose true entity
/// is not e.
std::vector<std::vector<double>> cross_key_nulls(const Eigen::MatrixXd& scores,
                                                 std::span<const int> labels);

/// Argmax; ties go to the lowest entity id.
int attribute(const ScoreVector& sv);

/// nullopt means UNATTRIBUTED.
std::optional<int> attribute_thresholded(const ScoreVector& sv, const CalibrationTable& cal);

struct AttributionReport {
  int n_entities = 0;
  int samples_per_entity = 0;
  double top1_tpr_at_fpr = 0.0;
  Eigen::MatrixXi confusion;          // [true entity, attributed entity]
  std::vector<int> unattributed;      // per true entity
  int unattributed_count = 0;
  std::vector<double> per_key_fpr;    // held-out cross-key FPR of tau_e
  double global_misattribution = 0.0; // attributed to a wrong entity
};

AttributionReport evaluate_attribution(const DetectorBank& bank, const CalibrationTable& cal,
                                       std::span<const TokenSeq> test, int workers = 1);

AttributionReport evaluate_attribution_scores(const Eigen::MatrixXd& scores, std::span<const int> labels,
                                              const CalibrationTable& cal);

enum class LinkVerdict { Linked, Unlinked, Undecided };

LinkVerdict link(const TokenSeq& xi, const TokenSeq& xj, const DetectorBank& bank,
                 const CalibrationTable& cal);

struct TimedOutput {
  double timestamp = 0.0;
  TokenSeq output;
};

/// Attribution counts per time bucket. Column n_entities is UNATTRIBUTED.
/// Bucket b covers [b * width, (b + 1) * width).
struct UsageTable {
  double bucket_width = 1.0;
  Eigen::MatrixXi counts;  // buckets x (n_entities + 1)
};

UsageTable monitor_usage(std::span<const TimedOutput> stream, const DetectorBank& bank,
                         const CalibrationTable& cal, double bucket_width);

}  // namespace wmobs
