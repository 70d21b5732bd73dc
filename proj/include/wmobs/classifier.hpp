#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wmobs/error.hpp"
#include "wmobs/random.hpp"

namespace wmobs {

/// L2-normalized n-gram counts.
using FeatureVector = Eigen::SparseVector<double>;

struct LabeledDataset {
  std::vector<FeatureVector> features;
  std::vector<int> labels;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct TrainHyper {
  double learning_rate = 8.0;
  int epochs = 10;
  int batch_size = 16;
  double l2_penalty = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const TrainHyper&) const = default;
};

/// Numerically stable softmax for any dense expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar shift = logits.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = (logits.array() - shift).exp().matrix();
  p /= p.sum();
  return p;
}

namespace detail {
// Rows this far ahead are prefetched while walking a sparse example.
inline constexpr int kPrefetchDistance = 8;
}  // namespace detail

/// Multinomial logistic regression with weights stored in `Scalar`.
/// Weights are held feature-major (one row of class weights per feature)
/// times a lazy decay scale, so a sparse update costs O(nnz * classes) even
/// with an L2 penalty. Logits and probabilities are computed in double.
template <typename Scalar>
class BasicClassifier {
 public:
  using WeightRows = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicClassifier(int n_classes, Eigen::Index dim)
      : n_classes_(n_classes), dim_(dim), bias_(Eigen::VectorXd::Zero(std::max(n_classes, 0))) {
    if (n_classes < 2) throw Error(ErrorCode::InvalidSpec, "need at least two classes");
    if (dim < 1) throw Error(ErrorCode::InvalidSpec, "feature dimension must be positive");
    unscaled_ = WeightRows::Zero(dim, n_classes);
  }

  int n_classes() const { return n_classes_; }
  Eigen::Index dim() const { return dim_; }

  Eigen::VectorXd logits(const FeatureVector& fv) const {
    if (fv.size() != dim_) throw Error(ErrorCode::SizeMismatch, "feature dimension differs from classifier");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_classes_);
    double* out = acc.data();
    const Scalar* w = unscaled_.data();
    const Eigen::Index n = n_classes_;
    const Eigen::Index nnz = fv.nonZeros();
    const auto* idx = fv.innerIndexPtr();
    const double* val = fv.valuePtr();
    for (Eigen::Index k = 0; k < nnz; ++k) {
      if (k + detail::kPrefetchDistance < nnz) __builtin_prefetch(w + idx[k + detail::kPrefetchDistance] * n);
      const Scalar* row = w + idx[k] * n;
      const double v = val[k];
      for (Eigen::Index c = 0; c < n; ++c) out[c] += v * static_cast<double>(row[c]);
    }
    return bias_ + scale_ * acc;
  }

  Eigen::VectorXd predict_proba(const FeatureVector& fv) const { return softmax(logits(fv)); }

  /// Effective weights as n_classes x dim (dense copy).
  Eigen::MatrixXd weights() const { return scale_ * unscaled_.transpose().template cast<double>(); }
  const Eigen::VectorXd& bias() const { return bias_; }

  void set_weights(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
    if (w.rows() != n_classes_ || w.cols() != dim_ || b.size() != n_classes_)
      throw Error(ErrorCode::SizeMismatch, "weight shapes differ from classifier");
    unscaled_ = w.transpose().template cast<Scalar>();
    scale_ = 1.0;
    bias_ = b;
  }

  bool finite() const { return std::isfinite(scale_) && unscaled_.allFinite() && bias_.allFinite(); }

  /// One gradient step on a mini-batch, given residuals p - y per example:
  /// W <- (1 - lr * l2) W - (lr / B) sum_i r_i phi_i^T,  b <- b - (lr / B) sum_i r_i.
  void step(std::span<const FeatureVector* const> batch, std::span<const Eigen::VectorXd> residuals,
            double learning_rate, double l2_penalty) {
    scale_ *= 1.0 - learning_rate * l2_penalty;
    const double lr_b = learning_rate / static_cast<double>(batch.size());
    const Eigen::Index n = n_classes_;
    Scalar* w = unscaled_.data();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> r_s(n);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const Eigen::VectorXd& r = residuals[j];
      bias_.noalias() -= lr_b * r;
      r_s = (r * (lr_b / scale_)).template cast<Scalar>();
      const Scalar* rp = r_s.data();
      const FeatureVector& fv = *batch[j];
      const Eigen::Index nnz = fv.nonZeros();
      const auto* idx = fv.innerIndexPtr();
      const double* val = fv.valuePtr();
      for (Eigen::Index k = 0; k < nnz; ++k) {
        if (k + detail::kPrefetchDistance < nnz) __builtin_prefetch(w + idx[k + detail::kPrefetchDistance] * n);
        Scalar* row = w + idx[k] * n;
        const auto v = static_cast<Scalar>(val[k]);
        for (Eigen::Index c = 0; c < n; ++c) row[c] -= v * rp[c];
      }
    }
    if (scale_ < 1e-6) {
      unscaled_ *= static_cast<Scalar>(scale_);
      scale_ = 1.0;
    }
  }

 private:
  int n_classes_;
  Eigen::Index dim_;
  WeightRows unscaled_;
  double scale_ = 1.0;
  Eigen::VectorXd bias_;
};

using Classifier = BasicClassifier<double>;

struct LossGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;  // n_classes x dim
  Eigen::VectorXd grad_bias;
};

/// Mean cross-entropy over `data` plus (l2/2)||W||^2, with its gradient.
template <typename Scalar>
LossGradient loss_and_gradient(const BasicClassifier<Scalar>& clf, const LabeledDataset& data, double l2_penalty) {
  if (data.size() == 0) throw Error(ErrorCode::EmptyTestSet, "empty dataset");
  const Eigen::MatrixXd w = clf.weights();
  LossGradient out;
  out.grad_weights = Eigen::MatrixXd::Zero(clf.n_classes(), clf.dim());
  out.grad_bias = Eigen::VectorXd::Zero(clf.n_classes());
  const auto m = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::VectorXd p = clf.predict_proba(data.features[i]);
    const int y = data.labels[i];
    out.loss -= std::log(p(y)) / m;
    p(y) -= 1.0;
    for (FeatureVector::InnerIterator it(data.features[i]); it; ++it)
      out.grad_weights.col(it.index()) += (it.value() / m) * p;
    out.grad_bias += p / m;
  }
  out.loss += 0.5 * l2_penalty * w.squaredNorm();
  out.grad_weights += l2_penalty * w;
  return out;
}

/// Mini-batch gradient descent from zero weights, examples reshuffled each
/// epoch from `hyper.seed`. `subset` restricts training to those example
/// indices (all examples when empty).
template <typename Scalar = double>
BasicClassifier<Scalar> train(const LabeledDataset& data, const TrainHyper& hyper,
                              std::span<const std::size_t> subset = {}) {
  if (data.n_classes < 2) throw Error(ErrorCode::InvalidSpec, "need at least two classes");
  if (hyper.batch_size < 1) throw Error(ErrorCode::InvalidSpec, "batch_size must be >= 1");
  if (hyper.epochs < 0) throw Error(ErrorCode::InvalidSpec, "epochs must be >= 0");
  if (!(hyper.learning_rate > 0.0)) throw Error(ErrorCode::InvalidSpec, "learning_rate must be > 0");
  if (!(hyper.l2_penalty >= 0.0 && hyper.learning_rate * hyper.l2_penalty < 1.0))
    throw Error(ErrorCode::InvalidSpec, "l2_penalty must satisfy 0 <= lr * l2 < 1");

  std::vector<std::size_t> order;
  if (subset.empty()) {
    order.resize(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  } else {
    order.assign(subset.begin(), subset.end());
  }
  if (order.empty()) throw Error(ErrorCode::MissingClass, "no training examples");
  const Eigen::Index dim = data.features[order.front()].size();
  std::vector<char> seen(static_cast<std::size_t>(data.n_classes), 0);
  for (std::size_t i : order) {
    const int y = data.labels[i];
    if (y < 0 || y >= data.n_classes) throw Error(ErrorCode::InvalidSpec, "label outside [0, n_classes)");
    if (data.features[i].size() != dim) throw Error(ErrorCode::SizeMismatch, "mixed feature dimensions");
    seen[static_cast<std::size_t>(y)] = 1;
  }
  for (int c = 0; c < data.n_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)])
      throw Error(ErrorCode::MissingClass, "class " + std::to_string(c) + " has no training example");

  BasicClassifier<Scalar> clf(data.n_classes, dim);
  const auto batch = static_cast<std::size_t>(hyper.batch_size);
  std::vector<Eigen::VectorXd> residual(batch);
  std::vector<const FeatureVector*> members(batch);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    RandomStream rng(derive_seed(hyper.seed, -3, epoch));
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t size = std::min(order.size() - start, batch);
      for (std::size_t j = 0; j < size; ++j) {
        const std::size_t i = order[start + j];
        members[j] = &data.features[i];
        residual[j] = clf.predict_proba(data.features[i]);
        epoch_loss -= std::log(residual[j](data.labels[i]));
        residual[j](data.labels[i]) -= 1.0;
      }
      clf.step(std::span<const FeatureVector* const>(members.data(), size),
               std::span<const Eigen::VectorXd>(residual.data(), size), hyper.learning_rate, hyper.l2_penalty);
    }
    if (!std::isfinite(epoch_loss) || !clf.finite())
      throw Error(ErrorCode::NonFiniteLoss, "training diverged in epoch " + std::to_string(epoch));
  }
  return clf;
}

/// The k most probable classes, most probable first; ties to the lower id.
template <typename Scalar>
std::vector<int> predict_topk(const BasicClassifier<Scalar>& clf, const FeatureVector& fv, int k) {
  if (k < 1 || k > clf.n_classes()) throw Error(ErrorCode::BadK, "k must lie in [1, n_classes]");
  const Eigen::VectorXd p = clf.predict_proba(fv);
  std::vector<int> ids(static_cast<std::size_t>(clf.n_classes()));
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(),
                    [&](int a, int b) { return p(a) > p(b) || (p(a) == p(b) && a < b); });
  ids.resize(static_cast<std::size_t>(k));
  return ids;
}

struct TopKAccuracy {
  double top1 = 0.0;
  double top3 = 0.0;
};

template <typename Scalar>
TopKAccuracy evaluate(const BasicClassifier<Scalar>& clf, const LabeledDataset& test) {
  if (test.size() == 0) throw Error(ErrorCode::EmptyTestSet, "no test examples");
  const int k = std::min(3, clf.n_classes());
  int hit1 = 0, hit3 = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto ranked = predict_topk(clf, test.features[i], k);
    hit1 += ranked.front() == test.labels[i];
    hit3 += std::find(ranked.begin(), ranked.end(), test.labels[i]) != ranked.end();
  }
  const auto n = static_cast<double>(test.size());
  return {hit1 / n, hit3 / n};
}

}  // namespace wmobs
