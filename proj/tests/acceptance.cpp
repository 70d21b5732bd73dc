// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--only 3,4` runs a subset.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stats.hpp"
#include "wmobs/classifier.hpp"
#include "wmobs/harness.hpp"
#include "wmobs/internal_observer.hpp"
#include "wmobs/report.hpp"
#include "wmobs/schemes.hpp"

using namespace wmobs;

namespace {

constexpr std::uint64_t kSeed = 20240601;
const std::vector<int> kCounts = {100, 500, 1000, 2000, 4000};
const std::vector<int> kEntityCounts = {2, 4, 8, 16};

int g_workers = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const Model& toy() {
  static const Model m = Model::build(ModelSpec{}, splitmix64(kSeed));
  return m;
}

std::vector<TokenSeq> plain_outputs(int count, int T, std::uint64_t seed) {
  std::vector<TokenSeq> out(static_cast<std::size_t>(count));
  PlainSampler plain;
  for (int i = 0; i < count; ++i) {
    RandomStream s(derive_seed(seed, 0, i));
    Prompt p{i, {static_cast<TokenId>(s.below(512)), static_cast<TokenId>(s.below(512))}};
    out[static_cast<std::size_t>(i)] = generate(toy(), p, T, plain, s);
  }
  return out;
}

ScenarioConfig base_scenario(const std::string& id) {
  ScenarioConfig c;
  c.scenario_id = id;
  c.master_seed = kSeed;
  c.samples_per_entity_test = 100;
  return c;
}

// 1. Null z statistics of KGW and EXP detectors on unwatermarked text.
Outcome null_soundness() {
  const auto xs = plain_outputs(10000, 256, kSeed + 1);
  const SchemeConfig kgw;
  const SchemeConfig exp{SchemeKind::Exp, 0.25, 0.0, default_context_h(SchemeKind::Exp), 512};
  std::vector<double> zk, ze;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const WatermarkKey key{splitmix64(kSeed ^ i)};
    zk.push_back(kgw_score(key, xs[i], kgw).z);
    ze.push_back(exp_score(key, xs[i], exp).z);
  }
  const auto mk = testing::moments(zk), me = testing::moments(ze);
  auto ok = [](testing::Moments m) {
    return std::abs(m.mean) <= 0.05 && m.variance >= 0.9 && m.variance <= 1.1;
  };
  return {ok(mk) && ok(me), fmt("KGW mean %.4f var %.4f; EXP mean %.4f var %.4f (10000 samples each)", mk.mean,
                                mk.variance, me.mean, me.variance)};
}

// 2. Per-key FPR of thresholds fitted on 5000 cross-key nulls, measured on
// 5000 fresh ones.
Outcome calibration_fpr() {
  const int n = 4, per_entity_half = 1667;
  const SchemeConfig cfg;
  const auto reg = assign_keys(n, DeploymentMode::PerEntity, kSeed + 2);
  const auto bank = detector_bank(reg, cfg);
  std::vector<std::vector<double>> cal_nulls(n), fresh_nulls(n);
  for (int e = 0; e < n; ++e) {
    KgwSampler sampler(reg.keys[static_cast<std::size_t>(e)], cfg);
    for (int i = 0; i < 2 * per_entity_half; ++i) {
      RandomStream s(derive_seed(kSeed + 2, e, i));
      Prompt p{i, {static_cast<TokenId>(s.below(512)), static_cast<TokenId>(s.below(512))}};
      const auto x = generate(toy(), p, 256, sampler, s);
      for (int k = 0; k < n; ++k) {
        if (k == e) continue;
        auto& dst = i < per_entity_half ? cal_nulls : fresh_nulls;
        dst[static_cast<std::size_t>(k)].push_back(bank[static_cast<std::size_t>(k)].score(x).z);
      }
    }
  }
  for (auto* sets : {&cal_nulls, &fresh_nulls})
    for (auto& v : *sets) v.resize(5000);
  const auto cal = calibrate_from_scores(cal_nulls, 0.01);
  bool pass = true;
  std::string detail = "held-out FPR per key:";
  for (int k = 0; k < n; ++k) {
    const auto& f = fresh_nulls[static_cast<std::size_t>(k)];
    const auto& c = cal_nulls[static_cast<std::size_t>(k)];
    const double tau = cal.thresholds[static_cast<std::size_t>(k)];
    double over = 0, over_cal = 0;
    for (double z : f) over += z > tau;
    for (double z : c) over_cal += z > tau;
    const double fpr = over / static_cast<double>(f.size());
    pass = pass && fpr >= 0.005 && fpr <= 0.02 && over_cal / static_cast<double>(c.size()) <= 0.01;
    detail += fmt(" %.4f", fpr);
  }
  return {pass, detail + " (5000 calibration + 5000 fresh nulls each)"};
}

// 3. Thresholded argmax attribution for n in {2, 4, 8, 16}.
Outcome internal_attribution() {
  ScenarioConfig base = base_scenario("internal");
  base.observers = {Observer::Internal};
  base.samples_per_entity_train = 500;
  std::vector<SweepValue> ns;
  for (int n : kEntityCounts) ns.emplace_back(static_cast<double>(n));
  const auto reports = sweep(base, SweepSpec{SweepAxis::NEntities, ns}, g_workers);
  bool pass = true;
  std::string detail = "top-1 TPR@1%FPR:";
  for (const auto& r : reports) {
    const double acc = r.attribution->top1_tpr_at_fpr;
    pass = pass && acc >= 0.95;
    detail += fmt(" n=%d %.3f", r.config.n_entities, acc);
  }

  // Separation. On a flat row the boosted green mass is
  // p_g = gamma e^delta / (1 + gamma (e^delta - 1)), so the matched-key mean z
  // is about (p_g - gamma) sqrt(T' / (gamma (1 - gamma))) while mismatched
  // keys stay N(0, 1). Compare that to measurement.
  const SchemeConfig cfg;
  const WatermarkKey key{kSeed};
  KgwSampler sampler(key, cfg);
  double hits = 0, positions = 0, z_sum = 0;
  const int trials = 300;
  for (int i = 0; i < trials; ++i) {
    RandomStream s(derive_seed(kSeed + 3, 0, i));
    const auto x = generate(toy(), Prompt{i, {1, 2}}, 256, sampler, s);
    const auto sc = kgw_score(key, x, cfg);
    hits += sc.raw;
    positions += sc.positions_scored;
    z_sum += sc.z;
  }
  const double boost = std::exp(cfg.delta);
  const double pg_flat = cfg.gamma * boost / (1 + cfg.gamma * (boost - 1));
  const double predicted = (pg_flat - cfg.gamma) * std::sqrt(255 / (cfg.gamma * (1 - cfg.gamma)));
  detail += fmt("; separation: p_g predicted %.3f measured %.3f, matched z predicted %.2f measured %.2f, "
                "mismatched N(0,1)",
                pg_flat, hits / positions, predicted, z_sum / trials);
  return {pass, detail};
}

std::string curve_text(const LearningCurve& c) {
  std::string s;
  for (const auto& p : c.points) s += fmt(" %d:%.3f/%.3f", p.samples_per_entity, p.top1, p.top3);
  return s;
}

ScenarioConfig external_scenario(const std::string& id, int n, DeploymentMode mode) {
  ScenarioConfig c = base_scenario(id);
  c.n_entities = n;
  c.deployment = mode;
  c.observers = {Observer::External};
  c.samples_per_entity_train = kCounts.back();
  c.sample_counts = kCounts;
  return c;
}

// 4. External learning curve under per-entity KGW keys, n = 16.
Outcome external_emergence() {
  const auto r = run_scenario(external_scenario("kgw-external", 16, DeploymentMode::PerEntity), g_workers);
  const auto& pts = r.curve->points;
  const double test_n = 16 * 100;
  const double first = pts.front().top1, last = pts.back().top1;
  const double sigma = std::sqrt(first * (1 - first) / test_n + last * (1 - last) / test_n);
  bool top3_ok = true;
  for (const auto& p : pts) top3_ok = top3_ok && p.top3 >= p.top1;
  const bool pass = last >= 0.1875 && top3_ok && (last - first) >= 5 * sigma;
  return {pass, fmt("top1/top3 by samples per entity:%s; gain %.3f = %.1f sigma", curve_text(*r.curve).c_str(),
                    last - first, (last - first) / sigma)};
}

// 5. Shared-key and no-watermark controls stay at chance.
Outcome control_collapse() {
  bool pass = true;
  std::string detail;
  for (DeploymentMode mode : {DeploymentMode::Shared, DeploymentMode::None}) {
    for (int n : kEntityCounts) {
      const auto r = run_scenario(external_scenario("control", n, mode), g_workers);
      const double chance = 1.0 / n;
      const double sigma = testing::binomial_sigma(chance, 100.0 * n);
      double worst = 0;
      for (const auto& p : r.curve->points) worst = std::max(worst, std::abs(p.top1 - chance) / sigma);
      pass = pass && worst <= 3.0;
      detail += fmt("%s%s n=%d max|dev| %.2f sigma", detail.empty() ? "" : "; ", to_string(mode).c_str(), n, worst);
    }
  }
  return {pass, detail};
}

// 6. EXP: external near chance, internal attribution intact.
Outcome mitigation() {
  ScenarioConfig c = external_scenario("exp", 16, DeploymentMode::PerEntity);
  c.scheme = SchemeConfig{SchemeKind::Exp, 0.25, 0.0, default_context_h(SchemeKind::Exp), 512};
  c.observers = {Observer::Internal, Observer::External};
  const auto r = run_scenario(c, g_workers);
  const double chance = 1.0 / 16, sigma = testing::binomial_sigma(chance, 1600);
  double worst = 0;
  for (const auto& p : r.curve->points) worst = std::max(worst, std::abs(p.top1 - chance) / sigma);
  const double internal = r.attribution->top1_tpr_at_fpr;
  return {worst <= 3.0 && internal >= 0.95,
          fmt("external top1:%s (max|dev| %.2f sigma); internal TPR@1%%FPR %.3f", curve_text(*r.curve).c_str(), worst,
              internal)};
}

// 7. EXP single-step marginal over random keys equals the model row.
Outcome distribution_preservation() {
  const std::vector<TokenId> ctx = {11, 42, 7, 300};
  const auto dist = toy().next_dist(ctx);
  std::vector<long> counts(512, 0);
  RandomStream rng(kSeed + 7);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(exp_embed_step(dist, WatermarkKey{rng.next_u64()}, ctx))];
  std::vector<double> p(dist.data(), dist.data() + 512);
  const double pval = testing::chi_square_p(counts, p);
  return {pval > 0.001, fmt("chi-square p = %.4f over 100000 keys", pval)};
}

// 8. Multi-bit message recovery and null decode confidence.
Outcome multibit() {
  const SchemeConfig cfg{SchemeKind::Kgw, 0.25, 4.0, 1, 512};
  const WatermarkKey base{kSeed + 8};
  RandomStream bits_rng(kSeed + 8);
  int exact = 0;
  const int runs = 500;
  for (int run = 0; run < runs; ++run) {
    std::vector<std::uint8_t> bits(16);
    for (auto& b : bits) b = static_cast<std::uint8_t>(bits_rng.below(2));
    RandomStream s(derive_seed(kSeed + 8, 0, run));
    Prompt p{run, {static_cast<TokenId>(s.below(512)), static_cast<TokenId>(s.below(512))}};
    const auto x = multibit_embed(toy(), p, base, MessageBits{bits, 32}, cfg, 512, s);
    exact += multibit_decode(base, x, 16, 32, cfg).bits == bits;
  }
  double conf = 0, ones = 0, total = 0;
  for (const auto& x : plain_outputs(runs, 512, kSeed + 80)) {
    const auto dec = multibit_decode(base, x, 16, 32, cfg);
    for (std::size_t b = 0; b < 16; ++b) {
      conf += dec.confidence[b];
      ones += dec.bits[b];
      ++total;
    }
  }
  const double rate = static_cast<double>(exact) / runs;
  const double mean_conf = conf / total;
  return {rate >= 0.99 && mean_conf < 0.5,
          fmt("exact recovery %.3f (need >= 0.99); unwatermarked mean confidence |z1-z0| = %.3f (need < 0.5), "
              "fraction of ones %.3f",
              rate, mean_conf, ones / total)};
}

// 9. Gradient oracle, zero-epoch uniformity, separable toy.
Outcome classifier_correctness() {
  const int n = 3;
  const Eigen::Index dim = 10;
  RandomStream rng(kSeed + 9);
  LabeledDataset data;
  data.n_classes = n;
  for (int i = 0; i < 15; ++i) {
    FeatureVector f(dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      if (rng.below(2)) f.insert(j) = rng.normal();
    data.features.push_back(f);
    data.labels.push_back(i % n);
  }
  Eigen::MatrixXd w(n, dim);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) b(i) = rng.normal();
  const double l2 = 0.05, h = 1e-5;
  Classifier clf(n, dim);
  clf.set_weights(w, b);
  const auto g = loss_and_gradient(clf, data, l2);
  auto loss_at = [&](const Eigen::MatrixXd& ww) {
    Classifier c(n, dim);
    c.set_weights(ww, b);
    return loss_and_gradient(c, data, l2).loss;
  };
  double worst = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Eigen::MatrixXd wp = w, wm = w;
    wp.data()[i] += h;
    wm.data()[i] -= h;
    const double numeric = (loss_at(wp) - loss_at(wm)) / (2 * h);
    const double analytic = g.grad_weights.data()[i];
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric)));
  }

  TrainHyper zero;
  zero.epochs = 0;
  const auto untrained = train(data, zero);
  bool uniform = true;
  for (const auto& f : data.features) uniform = uniform && (untrained.predict_proba(f).array() == 1.0 / n).all();

  LabeledDataset sep;
  sep.n_classes = 2;
  for (int i = 0; i < 40; ++i) {
    FeatureVector f(10);
    f.insert((i % 2) * 5 + i % 5) = 1.0;
    sep.features.push_back(f);
    sep.labels.push_back(i % 2);
  }
  const double sep_acc = evaluate(train(sep, TrainHyper{}), sep).top1;
  return {worst <= 1e-4 && uniform && sep_acc == 1.0,
          fmt("max relative gradient error %.2e; zero-epoch uniform %s; separable training top-1 %.3f", worst,
              uniform ? "yes" : "no", sep_acc)};
}

// 10. Byte-identical report.json across runs and worker counts.
Outcome determinism() {
  ScenarioConfig c = base_scenario("determinism");
  c.n_entities = 4;
  c.samples_per_entity_train = 300;
  c.sample_counts = {100, 300};
  const std::vector<RunReport> a = {run_scenario(c, 1)};
  const std::vector<RunReport> b = {run_scenario(c, 4)};
  const std::vector<RunReport> a2 = {run_scenario(c, 1)};
  const auto da = reports_document(a), db = reports_document(b), da2 = reports_document(a2);
  const bool same = da == db && da == da2;
  return {same, fmt("report.json %zu bytes; workers 1 vs 4 vs 1 %s", da.size(), same ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  g_workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--workers", g_workers, "Parallelism bound");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"null soundness", null_soundness},
      {"calibration FPR", calibration_fpr},
      {"internal attribution", internal_attribution},
      {"external emergence", external_emergence},
      {"control collapse", control_collapse},
      {"mitigation (EXP)", mitigation},
      {"distribution preservation", distribution_preservation},
      {"multi-bit monitoring", multibit},
      {"classifier correctness", classifier_correctness},
      {"determinism", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d failed, total %.1fs\n", failures, total);
  return failures == 0 ? 0 : 1;
}
