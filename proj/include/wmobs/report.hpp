#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmobs/harness.hpp"

namespace wmobs {

struct ReportOptions {
  bool emit_secrets = false;
  bool emit_timing = false;
};

nlohmann::json to_json(const RunReport& report, const ReportOptions& opts = {});

/// {"schema_version": 1, "reports": [...]}, dumped with two-space indent and
/// a trailing newline.
std::string reports_document(std::span<const RunReport> reports, const ReportOptions& opts = {});

/// Reads back what reports_document wrote. Restores config, metrics, curve,
/// and the attribution summary; keys only when they were emitted.
std::vector<RunReport> parse_reports_document(const std::string& text);

inline constexpr const char* kCsvHeader =
    "scenario_id,scheme,deployment,n_entities,samples_per_entity,observer,metric,value,seed";

/// Header line plus one row per metric. Numbers use the shortest decimal
/// that round-trips.
std::string reports_csv(std::span<const RunReport> reports);

std::string format_number(double v);

}  // namespace wmobs
