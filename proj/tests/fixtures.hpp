#pragma once

#include <vector>

#include "wmobs/schemes.hpp"
#include "wmobs/toylm.hpp"

namespace wmobs::testing {

inline const Model& toy_model() {
  static const Model m = Model::build({512, 2, 0.5, 0.0}, 1001);
  return m;
}

// `count` outputs of length T under `sampler`, labelled `entity`.
inline std::vector<TokenSeq> outputs(const Sampler& sampler, int entity, int count, std::uint64_t seed,
                                     int T = 256) {
  std::vector<TokenSeq> out;
  for (int i = 0; i < count; ++i) {
    RandomStream s(derive_seed(seed, entity, i));
    Prompt p{i, {static_cast<TokenId>(s.below(512)), static_cast<TokenId>(s.below(512))}};
    auto x = generate(toy_model(), p, T, sampler, s);
    x.true_entity = entity;
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace wmobs::testing
