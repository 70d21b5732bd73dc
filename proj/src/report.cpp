#include "wmobs/report.hpp"

#include <charconv>

#include "wmobs/config.hpp"
#include "wmobs/error.hpp"

namespace wmobs {

using nlohmann::json;

std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

json to_json(const RunReport& r, const ReportOptions& opts) {
  json j;
  j["scenario_id"] = r.config.scenario_id;
  j["config"] = to_json(r.config);
  j["seeds"] = {{"master", r.seeds.master},
                {"model", r.seeds.model},
                {"prompts", r.seeds.prompts},
                {"split", r.seeds.split},
                {"keys", r.seeds.keys},
                {"train_schedule", r.seeds.train_schedule},
                {"test_schedule", r.seeds.test_schedule}};
  json reg = {{"mode", to_string(r.registry.mode)}, {"n_entities", r.registry.n_entities}};
  if (opts.emit_secrets) {
    reg["keys"] = json::array();
    for (const auto& k : r.registry.keys) reg["keys"].push_back(k.value);
  }
  j["registry"] = reg;
  j["control"] = r.control;
  j["prompt_split"] = {{"train", r.train_prompts}, {"test", r.test_prompts}, {"overlap", r.prompt_overlap}};
  if (r.calibration) {
    j["calibration"] = {{"target_fpr", r.calibration->target_fpr},
                        {"null_sample_count", r.calibration->null_sample_count},
                        {"thresholds", r.calibration->thresholds}};
  }
  if (r.attribution) {
    const auto& a = *r.attribution;
    json confusion = json::array();
    for (Eigen::Index i = 0; i < a.confusion.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index c = 0; c < a.confusion.cols(); ++c) row.push_back(a.confusion(i, c));
      confusion.push_back(row);
    }
    j["attribution"] = {{"n_entities", a.n_entities},
                        {"samples_per_entity", a.samples_per_entity},
                        {"top1_tpr_at_fpr", a.top1_tpr_at_fpr},
                        {"confusion", confusion},
                        {"unattributed", a.unattributed},
                        {"unattributed_count", a.unattributed_count},
                        {"per_key_fpr", a.per_key_fpr},
                        {"global_misattribution", a.global_misattribution}};
  }
  if (r.curve) {
    json points = json::array();
    for (const auto& p : r.curve->points)
      points.push_back({{"samples_per_entity", p.samples_per_entity}, {"top1", p.top1}, {"top3", p.top3}});
    j["learning_curve"] = {{"n_entities", r.curve->n_entities}, {"points", points}};
  }
  j["metrics"] = json::array();
  for (const auto& m : r.metrics)
    j["metrics"].push_back(
        {{"observer", m.observer}, {"metric", m.name}, {"samples_per_entity", m.samples_per_entity}, {"value", m.value}});
  if (opts.emit_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

std::string reports_document(std::span<const RunReport> reports, const ReportOptions& opts) {
  json doc;
  doc["schema_version"] = RunReport::kSchemaVersion;
  doc["reports"] = json::array();
  for (const auto& r : reports) doc["reports"].push_back(to_json(r, opts));
  return doc.dump(2) + "\n";
}

std::vector<RunReport> parse_reports_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("invalid report JSON: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != RunReport::kSchemaVersion)
      throw Error(ErrorCode::SchemaError, "unsupported report schema_version");
    std::vector<RunReport> out;
    for (const auto& j : doc.at("reports")) {
      RunReport r;
      r.config = scenario_from_json(j.at("config"));
      const auto& s = j.at("seeds");
      r.seeds = {s.at("master"), s.at("model"), s.at("prompts"), s.at("split"),
                 s.at("keys"), s.at("train_schedule"), s.at("test_schedule")};
      const auto& reg = j.at("registry");
      r.registry.n_entities = reg.at("n_entities");
      r.registry.mode = deployment_from_string(reg.at("mode"));
      r.registry.master_seed = r.seeds.keys;
      if (reg.contains("keys"))
        for (const auto& k : reg["keys"]) r.registry.keys.push_back(WatermarkKey{k.get<std::uint64_t>()});
      r.control = j.at("control");
      r.train_prompts = j.at("prompt_split").at("train");
      r.test_prompts = j.at("prompt_split").at("test");
      r.prompt_overlap = j.at("prompt_split").at("overlap");
      if (j.contains("calibration")) {
        const auto& c = j["calibration"];
        r.calibration = CalibrationTable{c.at("thresholds").get<std::vector<double>>(), c.at("target_fpr"),
                                         c.at("null_sample_count")};
      }
      if (j.contains("attribution")) {
        const auto& a = j["attribution"];
        AttributionReport ar;
        ar.n_entities = a.at("n_entities");
        ar.samples_per_entity = a.at("samples_per_entity");
        ar.top1_tpr_at_fpr = a.at("top1_tpr_at_fpr");
        const auto& conf = a.at("confusion");
        ar.confusion.resize(static_cast<Eigen::Index>(conf.size()),
                            conf.empty() ? 0 : static_cast<Eigen::Index>(conf[0].size()));
        for (std::size_t i = 0; i < conf.size(); ++i)
          for (std::size_t c = 0; c < conf[i].size(); ++c)
            ar.confusion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = conf[i][c];
        ar.unattributed = a.at("unattributed").get<std::vector<int>>();
        ar.unattributed_count = a.at("unattributed_count");
        ar.per_key_fpr = a.at("per_key_fpr").get<std::vector<double>>();
        ar.global_misattribution = a.at("global_misattribution");
        r.attribution = std::move(ar);
      }
      if (j.contains("learning_curve")) {
        LearningCurve lc;
        lc.n_entities = j["learning_curve"].at("n_entities");
        for (const auto& p : j["learning_curve"].at("points"))
          lc.points.push_back({p.at("samples_per_entity"), p.at("top1"), p.at("top3")});
        r.curve = std::move(lc);
      }
      for (const auto& m : j.at("metrics"))
        r.metrics.push_back({m.at("observer"), m.at("metric"), m.at("samples_per_entity"), m.at("value")});
      if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j["wall_clock_seconds"];
      out.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed report: ") + e.what());
  }
}

namespace {

// Scenario ids are free text; quote them when CSV needs it.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string reports_csv(std::span<const RunReport> reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) {
    const auto& c = r.config;
    const std::string prefix = csv_field(c.scenario_id) + "," + to_string(c.scheme.kind) + "," +
                               to_string(c.deployment) + "," + std::to_string(c.n_entities) + ",";
    for (const auto& m : r.metrics) {
      out += prefix + std::to_string(m.samples_per_entity) + "," + m.observer + "," + m.name + "," +
             format_number(m.value) + "," + std::to_string(c.master_seed) + "\n";
    }
  }
  return out;
}

}  // namespace wmobs
