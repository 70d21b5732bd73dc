#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wmobs/random.hpp"
#include "wmobs/toylm.hpp"

namespace wmobs {

struct WatermarkKey {
  std::uint64_t value = 0;
  bool operator==(const WatermarkKey&) const = default;
};

enum class SchemeKind { Kgw, Unigram, Exp };

std::string to_string(SchemeKind kind);
SchemeKind scheme_kind_from_string(const std::string& name);

struct SchemeConfig {
  SchemeKind kind = SchemeKind::Kgw;
  double gamma = 0.25;
  double delta = 2.0;
  int context_h = 1;
  int vocab_size = 512;

  void validate() const;
  int green_size() const { return static_cast<int>(std::floor(gamma * vocab_size)); }
  // Number of leading tokens of an output that are never scored.
  int unscored_prefix() const { return kind == SchemeKind::Unigram ? 0 : context_h; }

  bool operator==(const SchemeConfig&) const = default;
};

/// Keyed pseudorandom uniform. The pipeline is fixed byte for byte:
///   h  = FNV-1a-64 over LE 4-byte context tokens, then LE 4-byte salt
///   u  = (SplitMix64(key XOR h) >> 11) * 2^-53
double prf_uniform(WatermarkKey key, std::span<const TokenId> context, std::int32_t salt);

/// Same as prf_uniform for every salt in [0, vocab), hashing the context once.
void prf_uniform_all(WatermarkKey key, std::span<const TokenId> context, std::span<double> out);

class GreenSet {
 public:
  GreenSet() = default;
  explicit GreenSet(std::vector<std::uint8_t> mask);

  bool contains(TokenId t) const { return mask_[static_cast<std::size_t>(t)] != 0; }
  int size() const { return size_; }
  int vocab_size() const { return static_cast<int>(mask_.size()); }
  std::vector<TokenId> members() const;
  const std::vector<std::uint8_t>& mask() const { return mask_; }

 private:
  std::vector<std::uint8_t> mask_;
  int size_ = 0;
};

/// The floor(gamma * V) tokens with the smallest keyed uniforms, ties broken
/// by lower id. KGW hashes the last `context_h` tokens; UNIGRAM ignores context.
GreenSet green_set(WatermarkKey key, std::span<const TokenId> context, const SchemeConfig& cfg);

/// Membership of a single token without materializing the set.
bool in_green_set(WatermarkKey key, std::span<const TokenId> context, TokenId token,
                  const SchemeConfig& cfg);

/// p'_i proportional to p_i * e^delta on green tokens, p_i elsewhere.
/// delta = 0 returns the input unchanged, bit for bit.
template <typename Derived>
ProbVector kgw_embed_step(const Eigen::MatrixBase<Derived>& dist, std::span<const std::uint8_t> green_mask,
                          double delta) {
  ProbVector out = dist;
  if (delta == 0.0) return out;
  const double boost = std::exp(delta);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (green_mask[static_cast<std::size_t>(i)]) out(i) *= boost;
  out /= out.sum();
  return out;
}

template <typename Derived>
ProbVector kgw_embed_step(const Eigen::MatrixBase<Derived>& dist, const GreenSet& green, double delta) {
  return kgw_embed_step(dist, std::span<const std::uint8_t>(green.mask()), delta);
}

struct DetectorScore {
  double z = 0.0;
  double raw = 0.0;
  int positions_scored = 0;
};

/// Green-hit count over generated tokens, normalized under the
/// Binomial(T', gamma) null.
DetectorScore kgw_score(WatermarkKey key, std::span<const TokenId> tokens, const SchemeConfig& cfg);
inline DetectorScore kgw_score(WatermarkKey key, const TokenSeq& x, const SchemeConfig& cfg) {
  return kgw_score(key, x.tokens, cfg);
}

/// Exponential-minimum sampling: argmax_i u_i^(1/p_i) over tokens with p_i > 0.
TokenId exp_embed_step(const ProbView& dist, WatermarkKey key, std::span<const TokenId> context);

/// Sum of -ln(1 - u) at the emitted tokens, normalized under the Exp(1) null.
DetectorScore exp_score(WatermarkKey key, std::span<const TokenId> tokens, const SchemeConfig& cfg);
inline DetectorScore exp_score(WatermarkKey key, const TokenSeq& x, const SchemeConfig& cfg) {
  return exp_score(key, x.tokens, cfg);
}

// Green-set lookup table for short hash windows (h = 0, or h = 1 with a
// modest vocabulary). Built eagerly; immutable afterwards.
class GreenTable;

/// A keyed detector D_k. Uses a precomputed green table when one fits.
class Detector {
 public:
  Detector(WatermarkKey key, SchemeConfig cfg, bool precompute = true);

  DetectorScore score(std::span<const TokenId> tokens) const;
  DetectorScore score(const TokenSeq& x) const { return score(x.tokens); }

  WatermarkKey key() const { return key_; }
  const SchemeConfig& config() const { return cfg_; }

 private:
  WatermarkKey key_;
  SchemeConfig cfg_;
  std::shared_ptr<const GreenTable> table_;
};

/// Generation under E_k for KGW/UNIGRAM: draws from the model row and keeps
/// red tokens with probability e^-delta, i.e. the law of kgw_embed_step.
/// With delta = 0 it consumes the stream exactly like PlainSampler.
class KgwSampler final : public Sampler {
 public:
  KgwSampler(WatermarkKey key, SchemeConfig cfg, bool precompute = true);
  TokenId next(std::span<const TokenId> history, std::size_t position, const NextToken& step,
               RandomStream& rng) const override;
  std::string tag() const override { return to_string(cfg_.kind); }

 private:
  WatermarkKey key_;
  SchemeConfig cfg_;
  std::shared_ptr<const GreenTable> table_;
};

/// Deterministic given key and context; consumes no stream draws.
class ExpSampler final : public Sampler {
 public:
  ExpSampler(WatermarkKey key, SchemeConfig cfg);
  TokenId next(std::span<const TokenId> history, std::size_t position, const NextToken& step,
               RandomStream& rng) const override;
  std::string tag() const override { return "EXP"; }

 private:
  WatermarkKey key_;
  SchemeConfig cfg_;
};

/// Sampler for any zero-bit scheme under `key`.
std::unique_ptr<Sampler> make_sampler(WatermarkKey key, const SchemeConfig& cfg);

// ---- multi-bit ---------------------------------------------------------

struct MessageBits {
  std::vector<std::uint8_t> bits;
  int block_len = 1;
};

/// Key for message slot `slot` carrying bit `value`:
/// SplitMix64(base XOR FNV-1a-64(slot, value)).
WatermarkKey derive_bit_key(WatermarkKey base, int slot, int value);

class MultibitSampler final : public Sampler {
 public:
  MultibitSampler(WatermarkKey base_key, MessageBits msg, SchemeConfig cfg);
  TokenId next(std::span<const TokenId> history, std::size_t position, const NextToken& step,
               RandomStream& rng) const override;
  std::string tag() const override { return "MULTIBIT-" + to_string(cfg_.kind); }

 private:
  MessageBits msg_;
  SchemeConfig cfg_;
  std::vector<KgwSampler> slots_;
};

TokenSeq multibit_embed(const Model& model, const Prompt& prompt, WatermarkKey base_key,
                        const MessageBits& msg, const SchemeConfig& cfg, int length,
                        RandomStream& stream);

struct MultibitDecode {
  std::vector<std::uint8_t> bits;
  std::vector<double> confidence;
};

MultibitDecode multibit_decode(WatermarkKey base_key, std::span<const TokenId> tokens, int num_bits,
                               int block_len, const SchemeConfig& cfg);
inline MultibitDecode multibit_decode(WatermarkKey base_key, const TokenSeq& x, int num_bits,
                                      int block_len, const SchemeConfig& cfg) {
  return multibit_decode(base_key, x.tokens, num_bits, block_len, cfg);
}

}  // namespace wmobs
