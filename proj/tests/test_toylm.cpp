#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <random>
#include <set>

#include "stats.hpp"
#include "wmobs/error.hpp"
#include "wmobs/schemes.hpp"
#include "wmobs/toylm.hpp"

using namespace wmobs;

namespace {

double entropy(const Eigen::Ref<const Eigen::VectorXd>& p) {
  double h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0) h -= p(i) * std::log(p(i));
  return h;
}

std::vector<TokenId> random_context(RandomStream& rng, int len, int V) {
  std::vector<TokenId> ctx(static_cast<std::size_t>(len));
  for (auto& t : ctx) t = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(V)));
  return ctx;
}

}  // namespace

TEST_CASE("smoothing 1 gives a uniform row") {
  Model m = Model::build({8, 0, 0.5, 1.0}, 123);
  auto d = m.next_dist({});
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(d(i) == doctest::Approx(1.0 / 8).epsilon(1e-15));
}

TEST_CASE("build is deterministic and validates its spec") {
  ModelSpec spec{16, 1, 0.5, 0.1};
  Model a = Model::build(spec, 9), b = Model::build(spec, 9), c = Model::build(spec, 10);
  REQUIRE(a.num_rows() == b.num_rows());
  bool differs = false;
  for (Eigen::Index r = 0; r < a.num_rows(); ++r) {
    CHECK(a.row(r) == b.row(r));
    differs = differs || a.row(r) != c.row(r);
  }
  CHECK(differs);

  CHECK_THROWS_AS(Model::build({1, 0, 0.5, 0}, 0), Error);
  CHECK_THROWS_AS(Model::build({8, -1, 0.5, 0}, 0), Error);
  CHECK_THROWS_AS(Model::build({8, 1, 0.0, 0}, 0), Error);
  CHECK_THROWS_AS(Model::build({8, 1, 0.5, 1.5}, 0), Error);
  try {
    Model::build({8, 1, -1, 0}, 0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidSpec);
  }
}

TEST_CASE("row entropy matches the Dirichlet expectation and a second implementation") {
  // V=512, order=2, concentration=0.5, seed=7. Contexts hash onto 4096 rows.
  const int V = 512;
  const double alpha = 0.5;
  Model m = Model::build({V, 2, alpha, 0.0}, 7);
  RandomStream ctx_rng(77);
  double mean_h = 0;
  for (int i = 0; i < 1000; ++i) {
    auto ctx = random_context(ctx_rng, 2, V);
    mean_h += entropy(m.next_dist(ctx));
  }
  mean_h /= 1000;

  // E[H] of a symmetric Dirichlet(alpha) over V outcomes.
  const double expected = boost::math::digamma(V * alpha + 1) - boost::math::digamma(alpha + 1);

  // Same construction with std::gamma_distribution and std::mt19937_64.
  std::mt19937_64 gen(7);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  double other_h = 0;
  Eigen::VectorXd row(V);
  for (int i = 0; i < 1000; ++i) {
    for (int t = 0; t < V; ++t) row(t) = gamma(gen);
    row /= row.sum();
    other_h += entropy(row);
  }
  other_h /= 1000;

  // Per-row entropy has sd ~0.04, so the 1000-row means agree to ~0.003.
  CHECK(mean_h == doctest::Approx(expected).epsilon(0.003));
  CHECK(mean_h == doctest::Approx(other_h).epsilon(0.003));
}

TEST_CASE("next_dist context handling") {
  SUBCASE("order 0 ignores context") {
    Model m = Model::build({16, 0, 0.5, 0.0}, 1);
    CHECK(m.next_dist({}) == m.next_dist(std::vector<TokenId>{3, 4, 5}));
  }
  SUBCASE("hand-built two-state chain") {
    Model m = Model::from_table(1, 2, {{{0}, {0.3, 0.7}}, {{1}, {1.0, 0.0}}});
    auto d = m.next_dist(std::vector<TokenId>{0});
    CHECK(d(0) == 0.3);
    CHECK(d(1) == 0.7);
    // Only the last `order` tokens matter.
    CHECK(m.next_dist(std::vector<TokenId>{1, 1, 0}) == d);
  }
  SUBCASE("unseen and short contexts fall back to uniform") {
    Model m = Model::from_table(2, 4, {{{0, 1}, {1, 0, 0, 0}}});
    auto u = m.next_dist(std::vector<TokenId>{2, 2});
    for (int i = 0; i < 4; ++i) CHECK(u(i) == 0.25);
    CHECK(m.next_dist(std::vector<TokenId>{1}) == u);
  }
  SUBCASE("from_table validation") {
    CHECK_THROWS_AS(Model::from_table(1, 2, {{{0}, {0.3, 0.6}}}), Error);
    CHECK_THROWS_AS(Model::from_table(1, 2, {{{0, 1}, {0.3, 0.7}}}), Error);
    CHECK_THROWS_AS(Model::from_table(1, 2, {{{5}, {0.3, 0.7}}}), Error);
  }
}

TEST_CASE("next_dist rows are valid distributions (fuzz)") {
  RandomStream rng(2024);
  for (const ModelSpec& spec : {ModelSpec{512, 2, 0.5, 0.0}, ModelSpec{32, 1, 0.1, 0.05}, ModelSpec{64, 3, 2.0, 0.2}}) {
    Model m = Model::build(spec, 11);
    for (int i = 0; i < 3400; ++i) {
      auto ctx = random_context(rng, spec.order, spec.vocab_size);
      auto step = m.next(ctx);
      REQUIRE(step.dist.minCoeff() >= 0.0);
      REQUIRE(std::abs(step.dist.sum() - 1.0) < 1e-9);
      REQUIRE(std::abs(step.cdf(spec.vocab_size - 1) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("prompt pool") {
  Model m = Model::build({32, 1, 0.5, 0.0}, 3);
  auto one = build_prompt_pool(1, 4, m, 5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].id == 0);

  auto pool = build_prompt_pool(200, 8, m, 5);
  std::set<int> ids;
  for (const auto& p : pool) {
    CHECK(p.tokens.size() == 8);
    ids.insert(p.id);
    for (TokenId t : p.tokens) CHECK((t >= 0 && t < 32));
  }
  CHECK(ids.size() == 200);
  auto again = build_prompt_pool(200, 8, m, 5);
  for (std::size_t i = 0; i < pool.size(); ++i) CHECK(pool[i].tokens == again[i].tokens);
  CHECK_THROWS_AS(build_prompt_pool(0, 8, m, 5), Error);
}

TEST_CASE("generate") {
  Model forced = Model::from_table(1, 3, {{{0}, {0, 0, 1}}});
  RandomStream s(1);
  auto x = generate(forced, Prompt{4, {0}}, 1, PlainSampler{}, s);
  CHECK(x.tokens == std::vector<TokenId>{2});
  CHECK(x.prompt_id == 4);
  CHECK(x.scheme_tag == "none");

  Model m = Model::build({64, 1, 0.5, 0.0}, 8);
  Prompt p{0, {1, 2, 3}};
  RandomStream a(77), b(77);
  auto xa = generate(m, p, 50, PlainSampler{}, a);
  auto xb = generate(m, p, 50, PlainSampler{}, b);
  CHECK(xa == xb);
  CHECK(xa.tokens.size() == 50);

  CHECK_THROWS_AS(generate(m, p, 0, PlainSampler{}, a), Error);
}

TEST_CASE("KGW with delta 0 reproduces plain sampling token for token") {
  Model m = Model::build({128, 1, 0.5, 0.0}, 4);
  Prompt p{0, {5}};
  SchemeConfig cfg{SchemeKind::Kgw, 0.25, 0.0, 1, 128};
  KgwSampler kgw(WatermarkKey{1234}, cfg);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomStream a(seed), b(seed);
    CHECK(generate(m, p, 100, PlainSampler{}, a).tokens == generate(m, p, 100, kgw, b).tokens);
  }
}

TEST_CASE("plain order-0 unigram frequencies match the row") {
  const int V = 20;
  Model m = Model::build({V, 0, 1.0, 0.0}, 6);
  RandomStream s(6);
  auto x = generate(m, Prompt{0, {}}, 100000, PlainSampler{}, s);
  std::vector<long> counts(V, 0);
  for (TokenId t : x.tokens) ++counts[static_cast<std::size_t>(t)];
  auto row = m.next_dist({});
  std::vector<double> p(row.data(), row.data() + V);
  CHECK(testing::chi_square_p(counts, p) > 0.001);
}

TEST_CASE("sample_from_cdf agrees with the linear scan") {
  Model m = Model::build({256, 1, 0.3, 0.0}, 12);
  RandomStream ctx_rng(1);
  for (int i = 0; i < 2000; ++i) {
    auto ctx = random_context(ctx_rng, 1, 256);
    auto step = m.next(ctx);
    RandomStream a(static_cast<std::uint64_t>(i)), b(static_cast<std::uint64_t>(i));
    REQUIRE(sample_from_cdf(step, a) == sample_categorical(step.dist, b));
  }
}
