#pragma once

#include <span>
#include <string>

#include "wmobs/harness.hpp"

namespace wmobs {

enum class PlotX { SamplesPerEntity, NEntities };

struct PlotSpec {
  PlotX x = PlotX::SamplesPerEntity;
  std::string observer = "external";
  std::string metric = "top1";
  std::string title;
  int width = 640;
  int height = 420;
};

/// Standalone SVG. For SamplesPerEntity each report is one series; for
/// NEntities all reports form a single series. A dashed chance line sits at
/// 1/n (the smallest n when reports differ).
std::string plot_curves(std::span<const RunReport> reports, const PlotSpec& spec);

}  // namespace wmobs
