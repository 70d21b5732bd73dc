#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "wmobs/harness.hpp"

namespace wmobs {

struct OutputOptions {
  std::string dir = "out";
  bool emit_secrets = false;  // write registry keys into report.json
  bool emit_timing = false;   // write wall-clock seconds (breaks byte identity)
  bool plots = true;

  bool operator==(const OutputOptions&) const = default;
};

struct CliConfig {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  ScenarioConfig scenario;
  std::optional<SweepSpec> sweep;
  OutputOptions output;

  bool operator==(const CliConfig&) const = default;
};

/// Throws IoError when the file cannot be read, SchemaError(key) otherwise.
CliConfig parse_config(const std::filesystem::path& path);
CliConfig parse_config_text(std::string_view text);
CliConfig parse_config_json(const nlohmann::json& doc);

/// Every field, defaults included. parse_config_json(to_json(c)) == c.
nlohmann::json to_json(const CliConfig& cfg);
nlohmann::json to_json(const ScenarioConfig& cfg);

/// The scenario part of a config document (no schema_version, sweep, output).
ScenarioConfig scenario_from_json(const nlohmann::json& obj);

}  // namespace wmobs
