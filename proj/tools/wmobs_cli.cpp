// wmobs: run watermark-monitoring scenarios and render their reports.
//
//   wmobs run --config cfg.json [--out DIR] [--seed N] [--workers W]
//   wmobs plot --reports DIR/report.json [--out DIR]
//   wmobs validate --config cfg.json [--print]
//   wmobs version
//
// Exit codes: 0 success, 1 config error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "wmobs/config.hpp"
#include "wmobs/error.hpp"
#include "wmobs/plot.hpp"
#include "wmobs/report.hpp"

namespace fs = std::filesystem;
using namespace wmobs;

namespace {

constexpr const char* kVersion = "0.1.0";

struct ConfigFailure {
  std::string message;
};

std::uint64_t parse_seed(const std::string& text, const char* source) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used == text.size() && text[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw ConfigFailure{std::string(source) + ": not an unsigned 64-bit integer: '" + text + "'"};
}

CliConfig load(const std::string& path) {
  try {
    return parse_config(path);
  } catch (const SchemaError& e) {
    throw ConfigFailure{std::string("config: ") + e.what()};
  } catch (const Error& e) {
    throw ConfigFailure{std::string("config: ") + e.what()};
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// internal_top1.svg for multi-n internal runs, external_top{1,3}.svg for
// learning curves. Returns the files written.
std::vector<fs::path> write_plots(std::span<const RunReport> reports, const fs::path& dir) {
  std::vector<fs::path> written;
  auto any = [&](const char* observer) {
    for (const auto& r : reports)
      for (const auto& m : r.metrics)
        if (m.observer == observer) return true;
    return false;
  };
  if (any("internal")) {
    std::set<int> ns;
    for (const auto& r : reports) ns.insert(r.config.n_entities);
    if (ns.size() > 1) {
      PlotSpec spec{PlotX::NEntities, "internal", "top1_tpr_at_fpr", "Internal attribution (TPR at calibrated FPR)"};
      written.push_back(dir / "internal_top1.svg");
      write_file(written.back(), plot_curves(reports, spec));
    }
  }
  if (any("external")) {
    for (const char* metric : {"top1", "top3"}) {
      PlotSpec spec{PlotX::SamplesPerEntity, "external", metric, std::string("External re-identification, ") + metric};
      written.push_back(dir / (std::string("external_") + metric + ".svg"));
      write_file(written.back(), plot_curves(reports, spec));
    }
  }
  return written;
}

int cmd_run(const std::string& config_path, const std::string& out_flag, const std::string& seed_flag,
            int workers) {
  CliConfig cfg = load(config_path);
  if (const char* env = std::getenv("WM_OBS_SEED"); env && *env) cfg.scenario.master_seed = parse_seed(env, "WM_OBS_SEED");
  if (!seed_flag.empty()) cfg.scenario.master_seed = parse_seed(seed_flag, "--seed");
  const fs::path dir = out_flag.empty() ? fs::path(cfg.output.dir) : fs::path(out_flag);

  std::vector<RunReport> reports;
  if (cfg.sweep) {
    for (const auto& point : sweep_points(cfg.scenario, *cfg.sweep)) {
      std::fprintf(stderr, "running %s\n", point.scenario_id.c_str());
      reports.push_back(run_scenario(point, workers));
      std::fprintf(stderr, "  %.1f s\n", reports.back().wall_clock_seconds);
    }
  } else {
    std::fprintf(stderr, "running %s\n", cfg.scenario.scenario_id.c_str());
    reports.push_back(run_scenario(cfg.scenario, workers));
    std::fprintf(stderr, "  %.1f s\n", reports.back().wall_clock_seconds);
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
  const ReportOptions opts{cfg.output.emit_secrets, cfg.output.emit_timing};
  write_file(dir / "report.json", reports_document(reports, opts));
  write_file(dir / "report.csv", reports_csv(reports));
  std::size_t plots = 0;
  if (cfg.output.plots) plots = write_plots(reports, dir).size();
  std::printf("%zu report(s), %zu plot(s) written to %s\n", reports.size(), plots, dir.string().c_str());
  return 0;
}

int cmd_plot(const std::string& reports_path, const std::string& out_flag) {
  const auto reports = parse_reports_document(read_file(reports_path));
  const fs::path dir = out_flag.empty() ? fs::path(reports_path).parent_path() : fs::path(out_flag);
  if (!dir.empty()) fs::create_directories(dir);
  const auto written = write_plots(reports, dir);
  if (written.empty()) throw Error(ErrorCode::MetricMissing, "no plottable metrics in '" + reports_path + "'");
  for (const auto& p : written) std::printf("%s\n", p.string().c_str());
  return 0;
}

int cmd_validate(const std::string& config_path, bool print) {
  const CliConfig cfg = load(config_path);
  if (print) {
    std::printf("%s\n", to_json(cfg).dump(2).c_str());
  } else {
    const std::size_t points = cfg.sweep ? cfg.sweep->values.size() : 1;
    std::printf("ok: %s, %zu scenario point(s)\n", cfg.scenario.scenario_id.c_str(), points);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark monitoring simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed, reports_path;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool print = false;

  auto* run = app.add_subcommand("run", "Run a scenario or sweep and write reports");
  run->add_option("--config", config_path, "Config JSON")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
  run->add_option("--seed", seed, "Override master_seed (also WM_OBS_SEED)");
  run->add_option("--workers", workers, "Parallelism bound")->check(CLI::PositiveNumber);

  auto* plot = app.add_subcommand("plot", "Re-render SVG plots from report.json");
  plot->add_option("--reports", reports_path, "report.json")->required();
  plot->add_option("--out", out_dir, "Output directory (default: next to the reports)");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config_path, "Config JSON")->required();
  validate->add_flag("--print", print, "Print the config with defaults filled in");

  app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seed, workers);
    if (*plot) return cmd_plot(reports_path, out_dir);
    if (*validate) return cmd_validate(config_path, print);
    std::printf("wmobs %s\n", kVersion);
    return 0;
  } catch (const ConfigFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
