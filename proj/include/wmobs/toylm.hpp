#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wmobs/random.hpp"

namespace wmobs {

using ProbVector = Eigen::VectorXd;
using ProbView = Eigen::Map<const ProbVector>;

/// Next-token law of one context: probabilities and their running sums.
struct NextToken {
  ProbView dist;
  ProbView cdf;
};

struct ModelSpec {
  int vocab_size = 512;
  int order = 2;
  double concentration = 0.5;
  double smoothing = 0.0;
  // Upper bound on materialized rows. When vocab_size^order exceeds it,
  // contexts share rows through a keyed hash of the context.
  int table_rows = 4096;

  bool operator==(const ModelSpec&) const = default;
};

/// Markov chain over a closed vocabulary. Rows are stored densely, one per
/// row slot, with smoothing already mixed in. Immutable after construction.
class Model {
 public:
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  /// Hand-built chain: each entry maps an `order`-token context to its row.
  /// Contexts absent from the table fall back to the uniform row.
  static Model from_table(int order, int vocab_size,
                          const std::map<std::vector<TokenId>, std::vector<double>>& rows);

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  double smoothing() const { return smoothing_; }
  Eigen::Index num_rows() const { return rows_.rows(); }

  /// Next-token distribution. Only the last `order` tokens of `context`
  /// are consulted; shorter or unknown contexts yield the uniform row.
  ProbView next_dist(std::span<const TokenId> context) const { return next(context).dist; }
  NextToken next(std::span<const TokenId> context) const;

  ProbView row(Eigen::Index r) const { return ProbView(rows_.row(r).data(), vocab_size_); }
  ProbView cdf_row(Eigen::Index r) const { return ProbView(cdfs_.row(r).data(), vocab_size_); }

 private:
  Model(int order, int vocab_size, double smoothing);

  enum class Indexing { Dense, Hashed, Explicit };

  // Row slot for a full-length context, or -1 for the uniform fallback.
  Eigen::Index slot_of(std::span<const TokenId> ctx) const;

  int order_;
  int vocab_size_;
  double smoothing_;
  Indexing indexing_ = Indexing::Dense;
  std::uint64_t hash_salt_ = 0;
  // Row-major so every row is contiguous; the last row is always uniform.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cdfs_;

  void finish_rows();
  std::unordered_map<std::uint64_t, Eigen::Index> explicit_slots_;
};

struct Prompt {
  int id = 0;
  std::vector<TokenId> tokens;
};

using PromptPool = std::vector<Prompt>;

PromptPool build_prompt_pool(int pool_size, int prompt_len, const Model& model, std::uint64_t seed);

/// A generated output. `tokens` holds generated tokens only; the prompt is
/// referenced by id.
struct TokenSeq {
  std::vector<TokenId> tokens;
  int prompt_id = 0;
  std::optional<int> true_entity;
  std::string scheme_tag = "none";

  bool operator==(const TokenSeq&) const = default;
};

/// One generation step. `history` is prompt plus everything generated so
/// far; `position` is the index of the token being generated.
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual TokenId next(std::span<const TokenId> history, std::size_t position, const NextToken& step,
                       RandomStream& rng) const = 0;
  virtual std::string tag() const = 0;
};

/// Inverse-CDF draw consuming exactly one uniform: the first token whose
/// running sum exceeds u. Binary search over `step.cdf`; returns the same
/// token as sample_categorical(step.dist, rng).
TokenId sample_from_cdf(const NextToken& step, RandomStream& rng);

// Linear-scan inverse-CDF draw consuming exactly one uniform.
template <typename Derived>
TokenId sample_categorical(const Eigen::MatrixBase<Derived>& dist, RandomStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    if (dist(i) <= 0.0) continue;
    acc += dist(i);
    last = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

class PlainSampler final : public Sampler {
 public:
  TokenId next(std::span<const TokenId>, std::size_t, const NextToken& step,
               RandomStream& rng) const override {
    return sample_from_cdf(step, rng);
  }
  std::string tag() const override { return "none"; }
};

TokenSeq generate(const Model& model, const Prompt& prompt, int length, const Sampler& sampler,
                  RandomStream& stream);

}  // namespace wmobs
