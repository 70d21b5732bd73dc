#include "wmobs/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "wmobs/error.hpp"

namespace wmobs {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects anything it was not asked for.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw SchemaError(leaf(), where("") + " must be an object");
  }

  void only(std::initializer_list<const char*> allowed) const {
    for (const auto& [k, v] : obj_.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) throw SchemaError(k, "unknown key '" + where(k) + "'");
    }
  }

  const json* find(const char* key) const {
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const char* key, T& out) const {
    if (const json* v = find(key)) out = convert<T>(*v, key);
  }

  template <typename T>
  T convert(const json& v, const char* key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) type_error(key, "a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) type_error(key, "a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (v.is_number_unsigned()) return v.get<std::uint64_t>();
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        try {
          std::size_t used = 0;
          const auto x = std::stoull(s, &used, 0);
          if (used == s.size() && !s.empty() && s[0] != '-') return x;
        } catch (const std::exception&) {
        }
      }
      type_error(key, "an unsigned 64-bit integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) type_error(key, "an integer");
      const auto x = v.get<std::int64_t>();
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) type_error(key, "in range");
      return static_cast<T>(x);
    } else {
      static_assert(std::is_floating_point_v<T>);
      if (!v.is_number()) type_error(key, "a number");
      return v.get<T>();
    }
  }

  [[noreturn]] void type_error(const char* key, const char* what) const {
    throw SchemaError(key, "'" + where(key) + "' must be " + what);
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "document" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  std::string leaf() const {
    const auto dot = path_.rfind('.');
    return dot == std::string::npos ? path_ : path_.substr(dot + 1);
  }

  const json& obj_;
  std::string path_;
};

template <typename F>
auto as_schema(const char* key, F&& f) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(key, e.detail());
  }
}

ModelSpec model_from_json(const json& obj) {
  Fields f(obj, "model");
  f.only({"vocab_size", "order", "concentration", "smoothing", "table_rows"});
  ModelSpec m;
  f.read("vocab_size", m.vocab_size);
  f.read("order", m.order);
  f.read("concentration", m.concentration);
  f.read("smoothing", m.smoothing);
  f.read("table_rows", m.table_rows);
  return m;
}

SchemeConfig scheme_from_json(const json& obj, int vocab_size) {
  Fields f(obj, "scheme");
  f.only({"kind", "gamma", "delta", "context_h"});
  SchemeConfig s;
  std::string kind = to_string(s.kind);
  f.read("kind", kind);
  s.kind = as_schema("kind", [&] { return scheme_kind_from_string(kind); });
  s.context_h = default_context_h(s.kind);
  f.read("gamma", s.gamma);
  f.read("delta", s.delta);
  f.read("context_h", s.context_h);
  s.vocab_size = vocab_size;
  return s;
}

TrainHyper classifier_from_json(const json& obj) {
  Fields f(obj, "classifier");
  f.only({"learning_rate", "epochs", "batch_size", "l2_penalty", "seed"});
  TrainHyper h;
  f.read("learning_rate", h.learning_rate);
  f.read("epochs", h.epochs);
  f.read("batch_size", h.batch_size);
  f.read("l2_penalty", h.l2_penalty);
  f.read("seed", h.seed);
  return h;
}

SweepSpec sweep_from_json(const json& obj) {
  Fields f(obj, "sweep");
  f.only({"axis", "values"});
  SweepSpec s;
  std::string axis;
  if (!f.find("axis")) throw SchemaError("axis", "'sweep.axis' is required");
  f.read("axis", axis);
  s.axis = as_schema("axis", [&] { return sweep_axis_from_string(axis); });
  const json* values = f.find("values");
  if (!values || !values->is_array()) throw SchemaError("values", "'sweep.values' must be an array");
  for (const auto& v : *values) {
    if (v.is_number()) {
      s.values.emplace_back(v.get<double>());
    } else if (v.is_string()) {
      s.values.emplace_back(v.get<std::string>());
    } else if (v.is_array()) {
      std::vector<int> counts;
      for (const auto& c : v) counts.push_back(f.convert<int>(c, "values"));
      s.values.emplace_back(std::move(counts));
    } else {
      throw SchemaError("values", "'sweep.values' entries must be numbers, strings, or arrays");
    }
  }
  return s;
}

OutputOptions output_from_json(const json& obj) {
  Fields f(obj, "output");
  f.only({"dir", "emit_secrets", "emit_timing", "plots"});
  OutputOptions o;
  f.read("dir", o.dir);
  f.read("emit_secrets", o.emit_secrets);
  f.read("emit_timing", o.emit_timing);
  f.read("plots", o.plots);
  return o;
}

constexpr std::initializer_list<const char*> kScenarioKeys = {
    "scenario_id", "model", "scheme", "deployment", "n_entities", "samples_per_entity_train",
    "samples_per_entity_test", "gen_length", "prompt_pool_size", "prompt_len", "train_frac",
    "sample_counts", "target_fpr", "master_seed", "observers", "use_bigrams", "classifier"};

ScenarioConfig read_scenario(const Fields& f) {
  ScenarioConfig c;
  f.read("scenario_id", c.scenario_id);
  if (const json* m = f.find("model")) c.model = model_from_json(*m);
  c.scheme.vocab_size = c.model.vocab_size;
  if (const json* s = f.find("scheme")) c.scheme = scheme_from_json(*s, c.model.vocab_size);
  std::string deployment = to_string(c.deployment);
  f.read("deployment", deployment);
  c.deployment = as_schema("deployment", [&] { return deployment_from_string(deployment); });
  f.read("n_entities", c.n_entities);
  f.read("samples_per_entity_train", c.samples_per_entity_train);
  f.read("samples_per_entity_test", c.samples_per_entity_test);
  f.read("gen_length", c.gen_length);
  f.read("prompt_pool_size", c.prompt_pool_size);
  f.read("prompt_len", c.prompt_len);
  f.read("train_frac", c.train_frac);
  if (const json* v = f.find("sample_counts")) {
    if (!v->is_array()) f.type_error("sample_counts", "an array");
    c.sample_counts.clear();
    for (const auto& x : *v) c.sample_counts.push_back(f.convert<int>(x, "sample_counts"));
  }
  f.read("target_fpr", c.target_fpr);
  f.read("master_seed", c.master_seed);
  if (const json* v = f.find("observers")) {
    if (!v->is_array()) f.type_error("observers", "an array");
    c.observers.clear();
    for (const auto& x : *v) {
      const auto name = f.convert<std::string>(x, "observers");
      c.observers.push_back(as_schema("observers", [&] { return observer_from_string(name); }));
    }
  }
  f.read("use_bigrams", c.use_bigrams);
  if (const json* h = f.find("classifier")) c.classifier = classifier_from_json(*h);
  return c;
}

// Maps the field named in an InvalidSpec message back to its key.
void validate_scenario(const ScenarioConfig& c) {
  try {
    c.validate();
  } catch (const Error& e) {
    const std::string& d = e.detail();
    std::string key = d.substr(0, d.find(' '));
    if (auto dot = key.rfind('.'); dot != std::string::npos) key = key.substr(dot + 1);
    throw SchemaError(key, d);
  }
}

}  // namespace

ScenarioConfig scenario_from_json(const json& obj) {
  Fields f(obj, "");
  f.only(kScenarioKeys);
  ScenarioConfig c = read_scenario(f);
  validate_scenario(c);
  return c;
}

CliConfig parse_config_json(const json& doc) {
  Fields f(doc, "");
  std::vector<const char*> allowed(kScenarioKeys);
  for (const char* k : {"schema_version", "sweep", "output"}) allowed.push_back(k);
  for (const auto& [k, v] : doc.items())
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
      throw SchemaError(k, "unknown key '" + k + "'");

  CliConfig c;
  if (!f.find("schema_version")) throw SchemaError("schema_version", "'schema_version' is required");
  f.read("schema_version", c.schema_version);
  if (c.schema_version != CliConfig::kSchemaVersion)
    throw SchemaError("schema_version", "unsupported schema_version " + std::to_string(c.schema_version) +
                                            " (expected " + std::to_string(CliConfig::kSchemaVersion) + ")");
  c.scenario = read_scenario(f);
  if (const json* s = f.find("sweep")) c.sweep = sweep_from_json(*s);
  if (const json* o = f.find("output")) c.output = output_from_json(*o);
  if (c.sweep) {
    try {
      sweep_points(c.scenario, *c.sweep);
    } catch (const Error& e) {
      throw SchemaError("sweep", e.detail());
    }
  } else {
    validate_scenario(c.scenario);
  }
  return c;
}

CliConfig parse_config_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config_json(doc);
}

CliConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["scenario_id"] = c.scenario_id;
  j["model"] = {{"vocab_size", c.model.vocab_size},
                {"order", c.model.order},
                {"concentration", c.model.concentration},
                {"smoothing", c.model.smoothing},
                {"table_rows", c.model.table_rows}};
  j["scheme"] = {{"kind", to_string(c.scheme.kind)},
                 {"gamma", c.scheme.gamma},
                 {"delta", c.scheme.delta},
                 {"context_h", c.scheme.context_h}};
  j["deployment"] = to_string(c.deployment);
  j["n_entities"] = c.n_entities;
  j["samples_per_entity_train"] = c.samples_per_entity_train;
  j["samples_per_entity_test"] = c.samples_per_entity_test;
  j["gen_length"] = c.gen_length;
  j["prompt_pool_size"] = c.prompt_pool_size;
  j["prompt_len"] = c.prompt_len;
  j["train_frac"] = c.train_frac;
  j["sample_counts"] = c.sample_counts;
  j["target_fpr"] = c.target_fpr;
  j["master_seed"] = c.master_seed;
  j["observers"] = json::array();
  for (Observer o : c.observers) j["observers"].push_back(to_string(o));
  j["use_bigrams"] = c.use_bigrams;
  j["classifier"] = {{"learning_rate", c.classifier.learning_rate},
                     {"epochs", c.classifier.epochs},
                     {"batch_size", c.classifier.batch_size},
                     {"l2_penalty", c.classifier.l2_penalty},
                     {"seed", c.classifier.seed}};
  return j;
}

json to_json(const CliConfig& c) {
  json j = to_json(c.scenario);
  j["schema_version"] = c.schema_version;
  if (c.sweep) {
    json values = json::array();
    for (const auto& v : c.sweep->values) std::visit([&](const auto& x) { values.push_back(x); }, v);
    j["sweep"] = {{"axis", to_string(c.sweep->axis)}, {"values", values}};
  }
  j["output"] = {{"dir", c.output.dir},
                 {"emit_secrets", c.output.emit_secrets},
                 {"emit_timing", c.output.emit_timing},
                 {"plots", c.output.plots}};
  return j;
}

}  // namespace wmobs
