#include "wmobs/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "wmobs/error.hpp"
#include "wmobs/parallel.hpp"

namespace wmobs {

namespace {

std::string number_text(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename F>
auto staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), std::string(stage) + ": " + e.detail());
  }
}

}  // namespace

std::string to_string(Observer obs) { return obs == Observer::Internal ? "INTERNAL" : "EXTERNAL"; }

Observer observer_from_string(const std::string& name) {
  if (name == "INTERNAL") return Observer::Internal;
  if (name == "EXTERNAL") return Observer::External;
  throw Error(ErrorCode::InvalidSpec, "unknown observer '" + name + "'");
}

bool ScenarioConfig::has(Observer obs) const {
  return std::find(observers.begin(), observers.end(), obs) != observers.end();
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidSpec, field + " " + why);
  };
  if (n_entities < 1) fail("n_entities", "must be >= 1");
  if (samples_per_entity_train < 0) fail("samples_per_entity_train", "must be >= 0");
  if (samples_per_entity_test < 1) fail("samples_per_entity_test", "must be >= 1");
  if (gen_length < 1) fail("gen_length", "must be >= 1");
  if (prompt_pool_size < 2) fail("prompt_pool_size", "must be >= 2");
  if (prompt_len < 1) fail("prompt_len", "must be >= 1");
  if (!(train_frac > 0.0 && train_frac < 1.0)) fail("train_frac", "must be in (0, 1)");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) fail("target_fpr", "must be in (0, 1)");
  if (scheme.vocab_size != model.vocab_size) fail("scheme.vocab_size", "must equal model.vocab_size");
  scheme.validate();
  std::set<Observer> seen;
  for (Observer o : observers)
    if (!seen.insert(o).second) fail("observers", "contains duplicates");
  if (has(Observer::External)) {
    if (sample_counts.empty()) fail("sample_counts", "must be non-empty");
    for (std::size_t i = 0; i < sample_counts.size(); ++i) {
      if (sample_counts[i] < 1) fail("sample_counts", "entries must be >= 1");
      if (i > 0 && sample_counts[i] <= sample_counts[i - 1]) fail("sample_counts", "must be strictly increasing");
    }
    if (sample_counts.back() > samples_per_entity_train)
      fail("sample_counts", "exceed samples_per_entity_train");
  }
  if (classifier.epochs < 0 || classifier.batch_size < 1 || !(classifier.learning_rate > 0.0) ||
      classifier.l2_penalty < 0.0)
    fail("classifier", "hyperparameters out of range");
}

SeedProvenance SeedProvenance::derive(std::uint64_t master) {
  auto tagged = [master](std::uint64_t tag) { return splitmix64(master ^ tag); };
  SeedProvenance s;
  s.master = master;
  s.model = tagged(0x6d6f64656cULL);
  s.prompts = tagged(0x70726f6d707473ULL);
  s.split = tagged(0x73706c6974ULL);
  s.keys = tagged(0x6b657973ULL);
  s.train_schedule = tagged(0x747261696eULL);
  s.test_schedule = tagged(0x74657374ULL);
  return s;
}

PromptSplit split_prompts(std::span<const Prompt> pool, double train_frac, std::uint64_t seed) {
  if (pool.size() < 2) throw Error(ErrorCode::PoolTooSmall, "need at least 2 prompts");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error(ErrorCode::InvalidSpec, "train_frac must be in (0, 1)");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(pool.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, pool.size() - 1);
  PromptSplit out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.train : out.test).push_back(pool[order[i]]);
  return out;
}

std::vector<TokenSeq> generate_corpus(const ScenarioConfig& cfg, const EntityRegistry& registry,
                                      const Model& model, std::span<const Prompt> prompts,
                                      int count_per_entity, std::uint64_t schedule_seed,
                                      std::uint64_t stream_seed, int workers) {
  if (registry.n_entities != cfg.n_entities || registry.mode != cfg.deployment)
    throw Error(ErrorCode::InvalidSpec, "registry does not match config");
  if (count_per_entity < 0) throw Error(ErrorCode::InvalidCount, "count_per_entity must be >= 0");
  if (prompts.empty()) throw Error(ErrorCode::PoolTooSmall, "no prompts");

  std::vector<std::size_t> schedule(static_cast<std::size_t>(count_per_entity));
  RandomStream sched(schedule_seed);
  for (auto& s : schedule) s = static_cast<std::size_t>(sched.below(prompts.size()));

  std::vector<std::unique_ptr<Sampler>> samplers;
  if (cfg.deployment == DeploymentMode::None) {
    samplers.push_back(std::make_unique<PlainSampler>());
  } else if (cfg.deployment == DeploymentMode::Shared) {
    samplers.push_back(make_sampler(registry.keys.at(0), cfg.scheme));
  } else {
    for (const auto& key : registry.keys) samplers.push_back(make_sampler(key, cfg.scheme));
  }

  const auto n = static_cast<std::size_t>(cfg.n_entities);
  const auto count = static_cast<std::size_t>(count_per_entity);
  std::vector<TokenSeq> out(n * count);
  parallel_for(out.size(), workers, [&](std::size_t j) {
    const auto e = j / count;
    const auto i = j % count;
    const Sampler& sampler = *samplers[samplers.size() == 1 ? 0 : e];
    RandomStream stream(derive_seed(stream_seed, static_cast<std::int32_t>(e), static_cast<std::int32_t>(i), 0));
    TokenSeq x = generate(model, prompts[schedule[i]], cfg.gen_length, sampler, stream);
    x.true_entity = static_cast<int>(e);
    out[j] = std::move(x);
  });
  return out;
}

std::optional<double> RunReport::metric(const std::string& observer, const std::string& name,
                                        std::optional<int> samples_per_entity) const {
  for (const auto& m : metrics)
    if (m.observer == observer && m.name == name &&
        (!samples_per_entity || m.samples_per_entity == *samples_per_entity))
      return m.value;
  return std::nullopt;
}

namespace {

std::vector<int> labels_of(std::span<const TokenSeq> xs) {
  std::vector<int> labels;
  labels.reserve(xs.size());
  for (const auto& x : xs) labels.push_back(x.true_entity.value_or(-1));
  return labels;
}

LabeledDataset featurize_all(std::span<const TokenSeq> xs, const FeatureConfig& fc, int n_classes,
                             int workers) {
  LabeledDataset ds;
  ds.n_classes = n_classes;
  ds.labels = labels_of(xs);
  ds.features.resize(xs.size());
  parallel_for(xs.size(), workers, [&](std::size_t i) { ds.features[i] = featurize(xs[i], fc); });
  return ds;
}

}  // namespace

RunReport run_scenario(const ScenarioConfig& cfg, int workers) {
  const auto start = std::chrono::steady_clock::now();
  staged("config", [&] {
    cfg.validate();
    return 0;
  });

  RunReport report;
  report.config = cfg;
  report.seeds = SeedProvenance::derive(cfg.master_seed);
  report.control = cfg.deployment != DeploymentMode::PerEntity;
  const auto& seeds = report.seeds;

  report.registry = staged("registry", [&] { return assign_keys(cfg.n_entities, cfg.deployment, seeds.keys); });

  auto finish = [&] {
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  };
  if (cfg.observers.empty()) return finish();

  const Model model = staged("model", [&] { return Model::build(cfg.model, seeds.model); });
  const PromptPool pool =
      staged("prompts", [&] { return build_prompt_pool(cfg.prompt_pool_size, cfg.prompt_len, model, seeds.prompts); });
  const PromptSplit split = staged("split", [&] { return split_prompts(pool, cfg.train_frac, seeds.split); });
  report.train_prompts = static_cast<int>(split.train.size());
  report.test_prompts = static_cast<int>(split.test.size());
  {
    std::set<int> train_ids;
    for (const auto& p : split.train) train_ids.insert(p.id);
    report.prompt_overlap = static_cast<int>(
        std::count_if(split.test.begin(), split.test.end(), [&](const Prompt& p) { return train_ids.count(p.id) > 0; }));
  }

  auto train = staged("generation", [&] {
    return generate_corpus(cfg, report.registry, model, split.train, cfg.samples_per_entity_train,
                           seeds.train_schedule, splitmix64(seeds.train_schedule), workers);
  });
  auto test = staged("generation", [&] {
    return generate_corpus(cfg, report.registry, model, split.test, cfg.samples_per_entity_test,
                           seeds.test_schedule, splitmix64(seeds.test_schedule), workers);
  });

  if (cfg.has(Observer::Internal)) {
    staged("internal", [&] {
      // Without keys in use, score against the keys a PER_ENTITY deployment
      // with the same seed would have issued.
      const EntityRegistry keys = cfg.deployment == DeploymentMode::None
                                      ? assign_keys(cfg.n_entities, DeploymentMode::PerEntity, seeds.keys)
                                      : report.registry;
      const DetectorBank bank = detector_bank(keys, cfg.scheme);
      const auto train_labels = labels_of(train);
      const Eigen::MatrixXd train_scores = score_matrix(bank, train, workers);
      report.calibration = calibrate_from_scores(cross_key_nulls(train_scores, train_labels), cfg.target_fpr);
      const Eigen::MatrixXd test_scores = score_matrix(bank, test, workers);
      const auto test_labels = labels_of(test);
      report.attribution = evaluate_attribution_scores(test_scores, test_labels, *report.calibration);
      return 0;
    });
    const auto& a = *report.attribution;
    const int spe = cfg.samples_per_entity_test;
    const double total = static_cast<double>(spe) * cfg.n_entities;
    const double mean_fpr = a.per_key_fpr.empty()
                                ? 0.0
                                : std::accumulate(a.per_key_fpr.begin(), a.per_key_fpr.end(), 0.0) /
                                      static_cast<double>(a.per_key_fpr.size());
    report.metrics.push_back({"internal", "top1_tpr_at_fpr", spe, a.top1_tpr_at_fpr});
    report.metrics.push_back({"internal", "global_misattribution", spe, a.global_misattribution});
    report.metrics.push_back({"internal", "unattributed_rate", spe, a.unattributed_count / total});
    report.metrics.push_back({"internal", "mean_per_key_fpr", spe, mean_fpr});
  }

  if (cfg.has(Observer::External)) {
    staged("external", [&] {
      const FeatureConfig fc = cfg.features();
      LabeledDataset pool_ds = featurize_all(train, fc, cfg.n_entities, workers);
      std::vector<TokenSeq>().swap(train);
      LabeledDataset test_ds = featurize_all(test, fc, cfg.n_entities, workers);
      report.curve = learning_curve(pool_ds, test_ds, cfg.sample_counts, cfg.classifier, workers);
      return 0;
    });
    for (const auto& p : report.curve->points) {
      report.metrics.push_back({"external", "top1", p.samples_per_entity, p.top1});
      report.metrics.push_back({"external", "top3", p.samples_per_entity, p.top3});
    }
  }
  return finish();
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::NEntities: return "n_entities";
    case SweepAxis::Delta: return "delta";
    case SweepAxis::SampleCounts: return "sample_counts";
    case SweepAxis::Scheme: return "scheme";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  for (auto a : {SweepAxis::NEntities, SweepAxis::Delta, SweepAxis::SampleCounts, SweepAxis::Scheme})
    if (to_string(a) == name) return a;
  throw Error(ErrorCode::BadAxis, "unknown sweep axis '" + name + "'");
}

int default_context_h(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Kgw: return 1;
    case SchemeKind::Unigram: return 0;
    case SchemeKind::Exp: return 4;
  }
  return 1;
}

std::vector<ScenarioConfig> sweep_points(const ScenarioConfig& base, const SweepSpec& spec) {
  if (spec.values.empty()) throw Error(ErrorCode::BadAxis, "sweep has no values");
  const std::string axis = to_string(spec.axis);
  auto bad = [&](const std::string& why) { throw Error(ErrorCode::BadAxis, axis + ": " + why); };
  if (spec.axis == SweepAxis::Delta && base.scheme.kind == SchemeKind::Exp) bad("EXP has no delta");
  if (spec.axis == SweepAxis::SampleCounts && !base.has(Observer::External)) bad("needs the EXTERNAL observer");

  std::vector<ScenarioConfig> points;
  for (std::size_t k = 0; k < spec.values.size(); ++k) {
    ScenarioConfig cfg = base;
    cfg.master_seed = splitmix64(base.master_seed ^ static_cast<std::uint64_t>(k));
    const SweepValue& v = spec.values[k];
    std::string label;
    switch (spec.axis) {
      case SweepAxis::NEntities: {
        const double* d = std::get_if<double>(&v);
        if (!d || *d < 1 || *d != std::floor(*d)) bad("values must be positive integers");
        cfg.n_entities = static_cast<int>(*d);
        label = number_text(*d);
        break;
      }
      case SweepAxis::Delta: {
        const double* d = std::get_if<double>(&v);
        if (!d || !(*d >= 0.0)) bad("values must be non-negative numbers");
        cfg.scheme.delta = *d;
        label = number_text(*d);
        break;
      }
      case SweepAxis::SampleCounts: {
        const auto* c = std::get_if<std::vector<int>>(&v);
        if (!c) bad("values must be lists of counts");
        cfg.sample_counts = *c;
        for (std::size_t i = 0; i < c->size(); ++i) label += (i ? "," : "") + std::to_string((*c)[i]);
        break;
      }
      case SweepAxis::Scheme: {
        const auto* s = std::get_if<std::string>(&v);
        if (!s) bad("values must be scheme names");
        try {
          cfg.scheme.kind = scheme_kind_from_string(*s);
        } catch (const Error&) {
          bad("unknown scheme '" + *s + "'");
        }
        cfg.scheme.context_h = default_context_h(cfg.scheme.kind);
        label = *s;
        break;
      }
    }
    cfg.scenario_id = base.scenario_id + "/" + axis + "=" + label;
    try {
      cfg.validate();
    } catch (const Error& e) {
      bad(e.detail());
    }
    points.push_back(std::move(cfg));
  }
  return points;
}

std::vector<RunReport> sweep(const ScenarioConfig& base, const SweepSpec& spec, int workers) {
  std::vector<RunReport> reports;
  for (const auto& cfg : sweep_points(base, spec)) reports.push_back(run_scenario(cfg, workers));
  return reports;
}

}  // namespace wmobs
