#include "wmobs/toylm.hpp"

#include <algorithm>
#include <cmath>

#include "wmobs/error.hpp"

namespace wmobs {

namespace {

constexpr std::int32_t kRowEntity = -2;
constexpr std::int32_t kRowSalt = 0x726f77;
constexpr std::uint64_t kContextHashSalt = 0x6374785f68617368ULL;

// Mixed-radix code of a full-length context; caller guarantees ids < vocab.
std::uint64_t dense_code(std::span<const TokenId> ctx, int vocab) {
  std::uint64_t code = 0;
  for (TokenId t : ctx) code = code * static_cast<std::uint64_t>(vocab) + static_cast<std::uint64_t>(t);
  return code;
}

}  // namespace

Model::Model(int order, int vocab_size, double smoothing)
    : order_(order), vocab_size_(vocab_size), smoothing_(smoothing) {}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.vocab_size < 2) throw Error(ErrorCode::InvalidSpec, "vocab_size must be >= 2");
  if (spec.order < 0) throw Error(ErrorCode::InvalidSpec, "order must be >= 0");
  if (!(spec.concentration > 0.0)) throw Error(ErrorCode::InvalidSpec, "concentration must be > 0");
  if (!(spec.smoothing >= 0.0 && spec.smoothing <= 1.0))
    throw Error(ErrorCode::InvalidSpec, "smoothing must lie in [0, 1]");
  if (spec.table_rows < 1) throw Error(ErrorCode::InvalidSpec, "table_rows must be >= 1");

  Model m(spec.order, spec.vocab_size, spec.smoothing);

  // Number of distinct contexts, saturating at table_rows + 1.
  std::uint64_t contexts = 1;
  for (int i = 0; i < spec.order && contexts <= static_cast<std::uint64_t>(spec.table_rows); ++i)
    contexts *= static_cast<std::uint64_t>(spec.vocab_size);

  Eigen::Index n_rows;
  if (contexts <= static_cast<std::uint64_t>(spec.table_rows)) {
    m.indexing_ = Indexing::Dense;
    n_rows = static_cast<Eigen::Index>(contexts);
  } else {
    m.indexing_ = Indexing::Hashed;
    n_rows = spec.table_rows;
    m.hash_salt_ = splitmix64(seed ^ kContextHashSalt);
  }

  const int V = spec.vocab_size;
  m.rows_.resize(n_rows + 1, V);
  const double uniform_mass = 1.0 / V;
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    auto row = m.rows_.row(r);
    if (spec.smoothing >= 1.0) {
      row.setConstant(uniform_mass);
      continue;
    }
    RandomStream row_rng(derive_seed(seed, kRowEntity, static_cast<std::int32_t>(r), kRowSalt));
    for (int i = 0; i < V; ++i) row(i) = row_rng.gamma(spec.concentration);
    double total = row.sum();
    if (!(total > 0.0)) {
      row.setConstant(uniform_mass);
    } else {
      row /= total;
    }
    row = (1.0 - spec.smoothing) * row.array() + spec.smoothing * uniform_mass;
  }
  m.rows_.row(n_rows).setConstant(uniform_mass);
  m.finish_rows();
  return m;
}

Model Model::from_table(int order, int vocab_size,
                        const std::map<std::vector<TokenId>, std::vector<double>>& rows) {
  if (vocab_size < 2) throw Error(ErrorCode::InvalidSpec, "vocab_size must be >= 2");
  if (order < 0) throw Error(ErrorCode::InvalidSpec, "order must be >= 0");
  Model m(order, vocab_size, 0.0);
  m.indexing_ = Indexing::Explicit;
  m.rows_.resize(static_cast<Eigen::Index>(rows.size()) + 1, vocab_size);
  Eigen::Index r = 0;
  for (const auto& [ctx, probs] : rows) {
    if (static_cast<int>(ctx.size()) != order)
      throw Error(ErrorCode::InvalidSpec, "context length must equal order");
    if (static_cast<int>(probs.size()) != vocab_size)
      throw Error(ErrorCode::InvalidSpec, "row length must equal vocab_size");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!(probs[i] >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative probability");
      m.rows_(r, static_cast<Eigen::Index>(i)) = probs[i];
      total += probs[i];
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidSpec, "row does not sum to 1");
    for (TokenId t : ctx)
      if (t < 0 || t >= vocab_size) throw Error(ErrorCode::InvalidSpec, "context token out of range");
    m.explicit_slots_.emplace(dense_code(ctx, vocab_size), r);
    ++r;
  }
  m.rows_.row(r).setConstant(1.0 / vocab_size);
  m.finish_rows();
  return m;
}

void Model::finish_rows() {
  cdfs_.resize(rows_.rows(), rows_.cols());
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < rows_.cols(); ++i) {
      acc += rows_(r, i);
      cdfs_(r, i) = acc;
    }
  }
}

Eigen::Index Model::slot_of(std::span<const TokenId> ctx) const {
  for (TokenId t : ctx)
    if (t < 0 || t >= vocab_size_) return -1;
  switch (indexing_) {
    case Indexing::Dense:
      return static_cast<Eigen::Index>(dense_code(ctx, vocab_size_));
    case Indexing::Hashed: {
      std::uint64_t h = splitmix64(fnv1a64(ctx) ^ hash_salt_);
      return static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(rows_.rows() - 1));
    }
    case Indexing::Explicit: {
      auto it = explicit_slots_.find(dense_code(ctx, vocab_size_));
      return it == explicit_slots_.end() ? -1 : it->second;
    }
  }
  return -1;
}

NextToken Model::next(std::span<const TokenId> context) const {
  Eigen::Index slot = -1;
  if (static_cast<int>(context.size()) >= order_)
    slot = slot_of(context.last(static_cast<std::size_t>(order_)));
  if (slot < 0) slot = rows_.rows() - 1;
  return {row(slot), cdf_row(slot)};
}

TokenId sample_from_cdf(const NextToken& step, RandomStream& rng) {
  const double u = rng.uniform();
  const double* begin = step.cdf.data();
  const double* end = begin + step.cdf.size();
  const double* hit = std::upper_bound(begin, end, u);
  if (hit != end) return static_cast<TokenId>(hit - begin);
  // Rounding left the total just below u: take the last token with mass.
  for (Eigen::Index i = step.dist.size() - 1; i > 0; --i)
    if (step.dist(i) > 0.0) return static_cast<TokenId>(i);
  return 0;
}

PromptPool build_prompt_pool(int pool_size, int prompt_len, const Model& model, std::uint64_t seed) {
  if (pool_size < 1) throw Error(ErrorCode::InvalidSpec, "pool_size must be >= 1");
  if (prompt_len < 0) throw Error(ErrorCode::InvalidSpec, "prompt_len must be >= 0");
  PromptPool pool;
  pool.reserve(static_cast<std::size_t>(pool_size));
  for (int id = 0; id < pool_size; ++id) {
    RandomStream rng(derive_seed(seed, -1, id, 0x70726f6d));
    Prompt p;
    p.id = id;
    p.tokens.reserve(static_cast<std::size_t>(prompt_len));
    for (int i = 0; i < prompt_len; ++i) {
      // The first `order` tokens have no full context and are drawn uniformly.
      p.tokens.push_back(sample_categorical(model.next_dist(p.tokens), rng));
    }
    pool.push_back(std::move(p));
  }
  return pool;
}

TokenSeq generate(const Model& model, const Prompt& prompt, int length, const Sampler& sampler,
                  RandomStream& stream) {
  if (length < 1) throw Error(ErrorCode::InvalidLength, "length must be >= 1");
  std::vector<TokenId> history;
  history.reserve(prompt.tokens.size() + static_cast<std::size_t>(length));
  history.insert(history.end(), prompt.tokens.begin(), prompt.tokens.end());
  for (int t = 0; t < length; ++t) {
    const NextToken step = model.next(history);
    history.push_back(sampler.next(history, static_cast<std::size_t>(t), step, stream));
  }
  TokenSeq out;
  out.tokens.assign(history.begin() + static_cast<std::ptrdiff_t>(prompt.tokens.size()), history.end());
  out.prompt_id = prompt.id;
  out.scheme_tag = sampler.tag();
  return out;
}

}  // namespace wmobs
