#include "wmobs/schemes.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "wmobs/error.hpp"

namespace wmobs {

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Kgw: return "KGW";
    case SchemeKind::Unigram: return "UNIGRAM";
    case SchemeKind::Exp: return "EXP";
  }
  return "?";
}

SchemeKind scheme_kind_from_string(const std::string& name) {
  if (name == "KGW") return SchemeKind::Kgw;
  if (name == "UNIGRAM") return SchemeKind::Unigram;
  if (name == "EXP") return SchemeKind::Exp;
  throw Error(ErrorCode::InvalidSpec, "unknown scheme '" + name + "'");
}

void SchemeConfig::validate() const {
  if (vocab_size < 2) throw Error(ErrorCode::InvalidSpec, "scheme vocab_size must be >= 2");
  if (context_h < 0) throw Error(ErrorCode::InvalidSpec, "context_h must be >= 0");
  if (kind != SchemeKind::Exp) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidSpec, "gamma must lie in (0, 1)");
    if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidSpec, "delta must be >= 0");
    if (green_size() < 1) throw Error(ErrorCode::InvalidSpec, "gamma * vocab_size rounds to an empty green set");
  }
  if (kind == SchemeKind::Unigram && context_h != 0)
    throw Error(ErrorCode::InvalidSpec, "UNIGRAM requires context_h = 0");
}

namespace {

// FNV-1a continuation over the LE bytes of `salt`.
inline std::uint64_t salt_hash(std::uint64_t h, std::int32_t salt) {
  const auto u = static_cast<std::uint32_t>(salt);
  h = (h ^ (u & 0xffU)) * 0x100000001b3ULL;
  h = (h ^ ((u >> 8) & 0xffU)) * 0x100000001b3ULL;
  h = (h ^ ((u >> 16) & 0xffU)) * 0x100000001b3ULL;
  h = (h ^ (u >> 24)) * 0x100000001b3ULL;
  return h;
}

std::span<const TokenId> window(std::span<const TokenId> context, const SchemeConfig& cfg) {
  if (cfg.kind == SchemeKind::Unigram) return {};
  const auto h = static_cast<std::size_t>(cfg.context_h);
  return context.size() > h ? context.last(h) : context;
}

// Scratch buffer for the V keyed uniforms of one context.
std::span<double> scratch(int vocab) {
  thread_local std::vector<double> buf;
  buf.resize(static_cast<std::size_t>(vocab));
  return buf;
}

std::vector<std::uint8_t> green_mask(WatermarkKey key, std::span<const TokenId> ctx, int vocab, int k) {
  auto u = scratch(vocab);
  prf_uniform_all(key, ctx, u);
  std::vector<TokenId> ids(static_cast<std::size_t>(vocab));
  std::iota(ids.begin(), ids.end(), 0);
  auto less = [&](TokenId a, TokenId b) {
    const double ua = u[static_cast<std::size_t>(a)], ub = u[static_cast<std::size_t>(b)];
    return ua < ub || (ua == ub && a < b);
  };
  std::nth_element(ids.begin(), ids.begin() + k, ids.end(), less);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(vocab), 0);
  for (int i = 0; i < k; ++i) mask[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = 1;
  return mask;
}

}  // namespace

double prf_uniform(WatermarkKey key, std::span<const TokenId> context, std::int32_t salt) {
  const std::uint64_t h = salt_hash(fnv1a64(context), salt);
  return to_unit(splitmix64(key.value ^ h));
}

void prf_uniform_all(WatermarkKey key, std::span<const TokenId> context, std::span<double> out) {
  const std::uint64_t ctx_hash = fnv1a64(context);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = to_unit(splitmix64(key.value ^ salt_hash(ctx_hash, static_cast<std::int32_t>(i))));
}

GreenSet::GreenSet(std::vector<std::uint8_t> mask) : mask_(std::move(mask)) {
  size_ = static_cast<int>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

std::vector<TokenId> GreenSet::members() const {
  std::vector<TokenId> out;
  out.reserve(static_cast<std::size_t>(size_));
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) out.push_back(static_cast<TokenId>(i));
  return out;
}

GreenSet green_set(WatermarkKey key, std::span<const TokenId> context, const SchemeConfig& cfg) {
  if (cfg.kind == SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "green_set needs KGW or UNIGRAM");
  return GreenSet(green_mask(key, window(context, cfg), cfg.vocab_size, cfg.green_size()));
}

bool in_green_set(WatermarkKey key, std::span<const TokenId> context, TokenId token,
                  const SchemeConfig& cfg) {
  if (cfg.kind == SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "green_set needs KGW or UNIGRAM");
  auto u = scratch(cfg.vocab_size);
  prf_uniform_all(key, window(context, cfg), u);
  const double ut = u[static_cast<std::size_t>(token)];
  int rank = 0;
  for (std::size_t j = 0; j < u.size(); ++j)
    rank += (u[j] < ut) || (u[j] == ut && static_cast<TokenId>(j) < token);
  return rank < cfg.green_size();
}

// ---- green table -------------------------------------------------------

class GreenTable {
 public:
  static std::shared_ptr<const GreenTable> maybe_build(WatermarkKey key, const SchemeConfig& cfg) {
    if (cfg.kind == SchemeKind::Exp) return nullptr;
    const int h = cfg.unscored_prefix();
    if (h > 1 || (h == 1 && cfg.vocab_size > 4096)) return nullptr;
    auto t = std::make_shared<GreenTable>();
    t->h_ = h;
    t->vocab_ = cfg.vocab_size;
    const int rows = h == 0 ? 1 : cfg.vocab_size;
    t->masks_.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cfg.vocab_size));
    for (int r = 0; r < rows; ++r) {
      std::vector<TokenId> ctx;
      if (h == 1) ctx.push_back(r);
      auto m = green_mask(key, ctx, cfg.vocab_size, cfg.green_size());
      t->masks_.insert(t->masks_.end(), m.begin(), m.end());
    }
    return t;
  }

  // Mask row for the window ending at `context`, or nullptr when the
  // available context is shorter than the hash window.
  const std::uint8_t* row(std::span<const TokenId> context) const {
    if (h_ == 0) return masks_.data();
    if (context.empty()) return nullptr;
    const TokenId prev = context.back();
    if (prev < 0 || prev >= vocab_) return nullptr;
    return masks_.data() + static_cast<std::size_t>(prev) * static_cast<std::size_t>(vocab_);
  }

 private:
  int h_ = 0;
  int vocab_ = 0;
  std::vector<std::uint8_t> masks_;
};

// ---- scoring -----------------------------------------------------------

namespace {

DetectorScore binomial_z(int hits, int scored, double gamma) {
  DetectorScore s;
  s.raw = hits;
  s.positions_scored = scored;
  s.z = (hits - gamma * scored) / std::sqrt(scored * gamma * (1.0 - gamma));
  return s;
}

void require_length(std::span<const TokenId> tokens, const SchemeConfig& cfg) {
  const auto need = static_cast<std::size_t>(cfg.unscored_prefix()) + 1;
  if (tokens.size() < need)
    throw Error(ErrorCode::TooShort, "need at least " + std::to_string(need) + " tokens");
}

}  // namespace

DetectorScore kgw_score(WatermarkKey key, std::span<const TokenId> tokens, const SchemeConfig& cfg) {
  if (cfg.kind == SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "kgw_score needs KGW or UNIGRAM");
  require_length(tokens, cfg);
  const auto h = static_cast<std::size_t>(cfg.unscored_prefix());
  int hits = 0;
  for (std::size_t t = h; t < tokens.size(); ++t)
    hits += in_green_set(key, tokens.subspan(t - h, h), tokens[t], cfg);
  return binomial_z(hits, static_cast<int>(tokens.size() - h), cfg.gamma);
}

TokenId exp_embed_step(const ProbView& dist, WatermarkKey key, std::span<const TokenId> context) {
  const auto V = static_cast<std::size_t>(dist.size());
  auto u = scratch(static_cast<int>(V));
  prf_uniform_all(key, context, u);
  const double* p = dist.data();
  // argmax u^(1/p) = argmin -ln(u)/p. Since -ln(u) >= 1 - u, the bound
  // (1 - u)/p lets us rule out most tokens without a log. The seed
  // minimizes that bound; comparisons are cross-multiplied.
  std::size_t seed = 0;
  while (seed < V && !(p[seed] > 0.0)) ++seed;
  if (seed == V) throw Error(ErrorCode::DegenerateDist, "distribution has no positive mass");
  double seed_num = 1.0 - u[seed], seed_p = p[seed];
  for (std::size_t i = seed + 1; i < V; ++i) {
    const double num = 1.0 - u[i];
    if (num * seed_p < seed_num * p[i]) {
      seed = i;
      seed_num = num;
      seed_p = p[i];
    }
  }
  std::size_t best = seed;
  double best_cost = -std::log(u[seed]) / p[seed];
  for (std::size_t i = 0; i < V; ++i) {
    if (!(p[i] > 0.0) || i == seed || (1.0 - u[i]) > best_cost * p[i]) continue;
    const double c = -std::log(u[i]) / p[i];
    if (c < best_cost || (c == best_cost && i < best)) {
      best = i;
      best_cost = c;
    }
  }
  return static_cast<TokenId>(best);
}

DetectorScore exp_score(WatermarkKey key, std::span<const TokenId> tokens, const SchemeConfig& cfg) {
  if (cfg.kind != SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "exp_score needs EXP");
  require_length(tokens, cfg);
  const auto h = static_cast<std::size_t>(cfg.context_h);
  double sum = 0.0;
  for (std::size_t t = h; t < tokens.size(); ++t) {
    const double u = prf_uniform(key, tokens.subspan(t - h, h), tokens[t]);
    sum += -std::log1p(-u);
  }
  const auto scored = static_cast<int>(tokens.size() - h);
  DetectorScore s;
  s.raw = sum;
  s.positions_scored = scored;
  s.z = (sum - scored) / std::sqrt(static_cast<double>(scored));
  return s;
}

// ---- detector / samplers ----------------------------------------------

Detector::Detector(WatermarkKey key, SchemeConfig cfg, bool precompute) : key_(key), cfg_(cfg) {
  cfg_.validate();
  if (precompute) table_ = GreenTable::maybe_build(key_, cfg_);
}

DetectorScore Detector::score(std::span<const TokenId> tokens) const {
  if (cfg_.kind == SchemeKind::Exp) return exp_score(key_, tokens, cfg_);
  if (!table_) return kgw_score(key_, tokens, cfg_);
  require_length(tokens, cfg_);
  const auto h = static_cast<std::size_t>(cfg_.unscored_prefix());
  int hits = 0;
  for (std::size_t t = h; t < tokens.size(); ++t)
    hits += table_->row(tokens.subspan(t - h, h))[static_cast<std::size_t>(tokens[t])];
  return binomial_z(hits, static_cast<int>(tokens.size() - h), cfg_.gamma);
}

KgwSampler::KgwSampler(WatermarkKey key, SchemeConfig cfg, bool precompute) : key_(key), cfg_(cfg) {
  cfg_.validate();
  if (cfg_.kind == SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "KgwSampler needs KGW or UNIGRAM");
  if (precompute) table_ = GreenTable::maybe_build(key_, cfg_);
}

TokenId KgwSampler::next(std::span<const TokenId> history, std::size_t, const NextToken& step,
                         RandomStream& rng) const {
  if (cfg_.delta == 0.0) return sample_from_cdf(step, rng);
  const std::uint8_t* row = table_ ? table_->row(window(history, cfg_)) : nullptr;
  GreenSet computed;
  if (!row) {
    computed = green_set(key_, history, cfg_);
    row = computed.mask().data();
  }
  // Rejection from the model row: green proposals are always kept, red ones
  // with probability e^-delta, which leaves exactly the law of kgw_embed_step.
  const double keep_red = std::exp(-cfg_.delta);
  for (;;) {
    const TokenId t = sample_from_cdf(step, rng);
    if (row[static_cast<std::size_t>(t)] || rng.uniform() < keep_red) return t;
  }
}

ExpSampler::ExpSampler(WatermarkKey key, SchemeConfig cfg) : key_(key), cfg_(cfg) {
  cfg_.validate();
  if (cfg_.kind != SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "ExpSampler needs EXP");
}

TokenId ExpSampler::next(std::span<const TokenId> history, std::size_t, const NextToken& step,
                         RandomStream&) const {
  return exp_embed_step(step.dist, key_, window(history, cfg_));
}

std::unique_ptr<Sampler> make_sampler(WatermarkKey key, const SchemeConfig& cfg) {
  if (cfg.kind == SchemeKind::Exp) return std::make_unique<ExpSampler>(key, cfg);
  return std::make_unique<KgwSampler>(key, cfg);
}

// ---- multi-bit ---------------------------------------------------------

WatermarkKey derive_bit_key(WatermarkKey base, int slot, int value) {
  return WatermarkKey{splitmix64(base.value ^ fnv1a64({slot, value}))};
}

MultibitSampler::MultibitSampler(WatermarkKey base_key, MessageBits msg, SchemeConfig cfg)
    : msg_(std::move(msg)), cfg_(cfg) {
  if (msg_.bits.empty()) throw Error(ErrorCode::EmptyMessage, "message has no bits");
  if (msg_.block_len < 1) throw Error(ErrorCode::InvalidSpec, "block_len must be >= 1");
  if (cfg_.kind == SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "multi-bit needs KGW or UNIGRAM");
  slots_.reserve(msg_.bits.size());
  for (std::size_t b = 0; b < msg_.bits.size(); ++b)
    slots_.emplace_back(derive_bit_key(base_key, static_cast<int>(b), msg_.bits[b] ? 1 : 0), cfg_,
                        /*precompute=*/false);
}

TokenId MultibitSampler::next(std::span<const TokenId> history, std::size_t position,
                              const NextToken& step, RandomStream& rng) const {
  const std::size_t slot = (position / static_cast<std::size_t>(msg_.block_len)) % slots_.size();
  return slots_[slot].next(history, position, step, rng);
}

TokenSeq multibit_embed(const Model& model, const Prompt& prompt, WatermarkKey base_key,
                        const MessageBits& msg, const SchemeConfig& cfg, int length,
                        RandomStream& stream) {
  MultibitSampler sampler(base_key, msg, cfg);
  return generate(model, prompt, length, sampler, stream);
}

MultibitDecode multibit_decode(WatermarkKey base_key, std::span<const TokenId> tokens, int num_bits,
                               int block_len, const SchemeConfig& cfg) {
  if (num_bits < 1) throw Error(ErrorCode::InvalidCount, "num_bits must be >= 1");
  if (block_len < 1) throw Error(ErrorCode::InvalidSpec, "block_len must be >= 1");
  if (cfg.kind == SchemeKind::Exp) throw Error(ErrorCode::WrongScheme, "multi-bit needs KGW or UNIGRAM");

  const auto h = static_cast<std::size_t>(cfg.unscored_prefix());
  const auto nb = static_cast<std::size_t>(num_bits);
  std::vector<int> scored(nb, 0), hits0(nb, 0), hits1(nb, 0);
  std::vector<WatermarkKey> k0(nb), k1(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    k0[b] = derive_bit_key(base_key, static_cast<int>(b), 0);
    k1[b] = derive_bit_key(base_key, static_cast<int>(b), 1);
  }
  for (std::size_t t = h; t < tokens.size(); ++t) {
    const std::size_t b = (t / static_cast<std::size_t>(block_len)) % nb;
    auto ctx = tokens.subspan(t - h, h);
    ++scored[b];
    hits0[b] += in_green_set(k0[b], ctx, tokens[t], cfg);
    hits1[b] += in_green_set(k1[b], ctx, tokens[t], cfg);
  }

  MultibitDecode out;
  out.bits.resize(nb);
  out.confidence.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (scored[b] == 0)
      throw Error(ErrorCode::TooShort, "slot " + std::to_string(b) + " has no scored positions");
    const double z0 = binomial_z(hits0[b], scored[b], cfg.gamma).z;
    const double z1 = binomial_z(hits1[b], scored[b], cfg.gamma).z;
    out.bits[b] = z1 > z0 ? 1 : 0;
    out.confidence[b] = std::abs(z1 - z0);
  }
  return out;
}

}  // namespace wmobs
