#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "stats.hpp"
#include "wmobs/error.hpp"
#include "wmobs/external_observer.hpp"
#include "wmobs/registry.hpp"

using namespace wmobs;

TEST_CASE("featurize") {
  FeatureConfig uni{false, 8};
  auto f = featurize(std::vector<TokenId>{5, 5, 5}, uni);
  CHECK(f.nonZeros() == 1);
  CHECK(f.coeff(5) == doctest::Approx(1.0));

  auto g = featurize(std::vector<TokenId>{3, 3, 5}, uni);
  CHECK(g.coeff(3) == doctest::Approx(2 / std::sqrt(5.0)));
  CHECK(g.coeff(5) == doctest::Approx(1 / std::sqrt(5.0)));

  FeatureConfig bi{true, 8};
  CHECK(bi.dim() == 8 + 64);
  auto h = featurize(std::vector<TokenId>{3, 3, 5}, bi);
  // Unigrams 3:2, 5:1; bigrams (3,3):1, (3,5):1. Norm sqrt(7).
  const double s = std::sqrt(7.0);
  CHECK(h.coeff(3) == doctest::Approx(2 / s));
  CHECK(h.coeff(8 + 3 * 8 + 3) == doctest::Approx(1 / s));
  CHECK(h.coeff(8 + 3 * 8 + 5) == doctest::Approx(1 / s));
  CHECK(h.norm() == doctest::Approx(1.0).epsilon(1e-12));

  try {
    featurize(std::vector<TokenId>{}, uni);
    FAIL("expected EmptyOutput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyOutput);
  }
  CHECK_THROWS_AS(featurize(std::vector<TokenId>{9}, uni), Error);
}

TEST_CASE("feature vectors are unit norm with in-range indices") {
  PlainSampler plain;
  FeatureConfig cfg{true, 512};
  for (const auto& x : testing::outputs(plain, 0, 50, 3)) {
    auto f = featurize(x, cfg);
    CHECK(std::abs(f.norm() - 1) < 1e-9);
    for (FeatureVector::InnerIterator it(f); it; ++it) CHECK(it.index() < cfg.dim());
  }
}

namespace {

struct Split {
  LabeledDataset pool, test;
};

Split kgw_data(int n, int per_entity, DeploymentMode mode, std::uint64_t seed) {
  const SchemeConfig cfg;
  const auto reg = assign_keys(n, mode, seed);
  const FeatureConfig fc;
  Split s;
  s.pool.n_classes = s.test.n_classes = n;
  for (int e = 0; e < n; ++e) {
    std::unique_ptr<Sampler> sampler =
        mode == DeploymentMode::None ? std::make_unique<PlainSampler>() : make_sampler(reg.keys[static_cast<std::size_t>(e)], cfg);
    for (const auto& x : testing::outputs(*sampler, e, per_entity, seed + 1)) {
      s.pool.features.push_back(featurize(x, fc));
      s.pool.labels.push_back(e);
    }
    for (const auto& x : testing::outputs(*sampler, e, 100, seed + 2)) {
      s.test.features.push_back(featurize(x, fc));
      s.test.labels.push_back(e);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("learning_curve") {
  auto d = kgw_data(4, 400, DeploymentMode::PerEntity, 10);
  const std::vector<int> one = {100};
  auto single = learning_curve(d.pool, d.test, one, TrainHyper{});
  REQUIRE(single.points.size() == 1);
  CHECK(single.n_entities == 4);

  const std::vector<int> counts = {50, 400};
  auto curve = learning_curve(d.pool, d.test, counts, TrainHyper{}, 2);
  REQUIRE(curve.points.size() == 2);
  for (const auto& p : curve.points) CHECK(p.top3 >= p.top1);
  // Per-entity keys leave a learnable trace well above 1/4.
  CHECK(curve.points[1].top1 > 0.25 + 3 * testing::binomial_sigma(0.25, 400));
  CHECK(learning_curve(d.pool, d.test, counts, TrainHyper{}, 1).points[1].top1 == curve.points[1].top1);

  const std::vector<int> too_many = {401};
  try {
    learning_curve(d.pool, d.test, too_many, TrainHyper{});
    FAIL("expected InsufficientPool");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientPool);
  }
  const std::vector<int> unordered = {200, 100};
  CHECK_THROWS_AS(learning_curve(d.pool, d.test, unordered, TrainHyper{}), Error);
}

TEST_CASE("shared key gives the observer nothing to learn") {
  auto d = kgw_data(4, 400, DeploymentMode::Shared, 11);
  const std::vector<int> counts = {400};
  auto curve = learning_curve(d.pool, d.test, counts, TrainHyper{});
  CHECK(std::abs(curve.points[0].top1 - 0.25) <= 3 * testing::binomial_sigma(0.25, 400));
}

TEST_CASE("one-vs-all targeted monitoring uses two classes") {
  auto d = kgw_data(4, 300, DeploymentMode::PerEntity, 12);
  d.pool.n_classes = 2;
  for (auto& y : d.pool.labels) y = y == 0 ? 1 : 0;
  // Target entity 0 (first 100 test rows) against 100 rows of entity 1.
  LabeledDataset test;
  test.n_classes = 2;
  for (std::size_t i = 0; i < 200; ++i) {
    test.features.push_back(d.test.features[i]);
    test.labels.push_back(i < 100 ? 1 : 0);
  }
  auto clf = train<float>(d.pool, TrainHyper{});
  CHECK(clf.n_classes() == 2);
  CHECK(evaluate(clf, test).top1 > 0.5 + 3 * testing::binomial_sigma(0.5, 200));
}
