#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wmobs/classifier.hpp"
#include "wmobs/external_observer.hpp"
#include "wmobs/internal_observer.hpp"
#include "wmobs/registry.hpp"
#include "wmobs/schemes.hpp"
#include "wmobs/toylm.hpp"

namespace wmobs {

enum class Observer { Internal, External };

std::string to_string(Observer obs);
Observer observer_from_string(const std::string& name);

struct ScenarioConfig {
  std::string scenario_id = "scenario";
  ModelSpec model;
  SchemeConfig scheme;
  DeploymentMode deployment = DeploymentMode::PerEntity;
  int n_entities = 4;
  int samples_per_entity_train = 1000;
  int samples_per_entity_test = 100;
  int gen_length = 256;
  int prompt_pool_size = 1000;
  int prompt_len = 8;
  double train_frac = 0.8;
  std::vector<int> sample_counts = {100, 250, 500, 1000};
  double target_fpr = 0.01;
  std::uint64_t master_seed = 20240601;
  std::vector<Observer> observers = {Observer::Internal, Observer::External};
  bool use_bigrams = true;
  TrainHyper classifier;

  bool has(Observer obs) const;
  FeatureConfig features() const { return {use_bigrams, model.vocab_size}; }

  /// Throws InvalidSpec naming the first bad field.
  void validate() const;

  bool operator==(const ScenarioConfig&) const = default;
};

/// Seeds of every stochastic stage, all derived from master_seed.
struct SeedProvenance {
  std::uint64_t master = 0;
  std::uint64_t model = 0;
  std::uint64_t prompts = 0;
  std::uint64_t split = 0;
  std::uint64_t keys = 0;
  std::uint64_t train_schedule = 0;
  std::uint64_t test_schedule = 0;

  static SeedProvenance derive(std::uint64_t master);
  bool operator==(const SeedProvenance&) const = default;
};

struct PromptSplit {
  std::vector<Prompt> train;
  std::vector<Prompt> test;
};

PromptSplit split_prompts(std::span<const Prompt> pool, double train_frac, std::uint64_t seed);

/// Entity-major: sample i of entity e sits at e * count + i. Every entity
/// uses the same prompt schedule, drawn from `schedule_seed`; the sampling
/// stream of (e, i) is derive_seed(stream_seed, e, i, 0).
std::vector<TokenSeq> generate_corpus(const ScenarioConfig& cfg, const EntityRegistry& registry,
                                      const Model& model, std::span<const Prompt> prompts,
                                      int count_per_entity, std::uint64_t schedule_seed,
                                      std::uint64_t stream_seed, int workers = 1);

struct Metric {
  std::string observer;  // "internal" or "external"
  std::string name;
  int samples_per_entity = 0;
  double value = 0.0;

  bool operator==(const Metric&) const = default;
};

struct RunReport {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  ScenarioConfig config;
  SeedProvenance seeds;
  EntityRegistry registry;
  bool control = false;  // SHARED or NONE deployment
  int train_prompts = 0;
  int test_prompts = 0;
  int prompt_overlap = 0;
  std::optional<CalibrationTable> calibration;
  std::optional<AttributionReport> attribution;
  std::optional<LearningCurve> curve;
  std::vector<Metric> metrics;
  double wall_clock_seconds = 0.0;

  /// First metric with this observer and name (and count, if given).
  std::optional<double> metric(const std::string& observer, const std::string& name,
                               std::optional<int> samples_per_entity = std::nullopt) const;
};

RunReport run_scenario(const ScenarioConfig& cfg, int workers = 1);

enum class SweepAxis { NEntities, Delta, SampleCounts, Scheme };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

using SweepValue = std::variant<double, std::string, std::vector<int>>;

struct SweepSpec {
  SweepAxis axis = SweepAxis::NEntities;
  std::vector<SweepValue> values;

  bool operator==(const SweepSpec&) const = default;
};

/// Point k runs with master_seed SplitMix64(base.master_seed ^ k). A scheme
/// value also resets context_h to that scheme's default.
std::vector<ScenarioConfig> sweep_points(const ScenarioConfig& base, const SweepSpec& spec);

std::vector<RunReport> sweep(const ScenarioConfig& base, const SweepSpec& spec, int workers = 1);

/// Default context width per scheme: KGW 1, UNIGRAM 0, EXP 4.
int default_context_h(SchemeKind kind);

}  // namespace wmobs
