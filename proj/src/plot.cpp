#include "wmobs/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "wmobs/error.hpp"
#include "wmobs/report.hpp"

namespace wmobs {

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string plot_curves(std::span<const RunReport> reports, const PlotSpec& spec) {
  if (reports.empty()) throw Error(ErrorCode::EmptyReport, "no reports to plot");

  std::vector<Series> series;
  std::set<int> ns;
  if (spec.x == PlotX::SamplesPerEntity) {
    for (const auto& r : reports) {
      Series s{r.config.scenario_id, {}};
      for (const auto& m : r.metrics)
        if (m.observer == spec.observer && m.name == spec.metric) s.points.emplace_back(m.samples_per_entity, m.value);
      if (s.points.empty()) continue;
      ns.insert(r.config.n_entities);
      series.push_back(std::move(s));
    }
  } else {
    Series s{spec.observer + " " + spec.metric, {}};
    for (const auto& r : reports) {
      // The last matching entry is the largest sample count.
      std::optional<double> v;
      for (const auto& m : r.metrics)
        if (m.observer == spec.observer && m.name == spec.metric) v = m.value;
      if (!v) continue;
      s.points.emplace_back(r.config.n_entities, *v);
      ns.insert(r.config.n_entities);
    }
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  if (series.empty()) throw Error(ErrorCode::MetricMissing, spec.observer + "/" + spec.metric + " not in any report");

  double xmin = series[0].points[0].first, xmax = xmin;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }

  const double left = 64, right = 170, top = 40, bottom = 56;
  const double w = spec.width, h = spec.height;
  const double pw = w - left - right, ph = h - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (1.0 - y) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" viewBox=\"0 0 " + std::to_string(spec.width) + " " +
         std::to_string(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + px(w) + "\" height=\"" + px(h) + "\" fill=\"white\"/>\n";
  if (!spec.title.empty())
    svg += "<text x=\"" + px(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
           escape(spec.title) + "</text>\n";

  // Axes and ticks.
  svg += "<g stroke=\"black\" fill=\"none\">\n";
  svg += "<line x1=\"" + px(left) + "\" y1=\"" + px(top + ph) + "\" x2=\"" + px(left + pw) + "\" y2=\"" +
         px(top + ph) + "\"/>\n";
  svg += "<line x1=\"" + px(left) + "\" y1=\"" + px(top) + "\" x2=\"" + px(left) + "\" y2=\"" + px(top + ph) + "\"/>\n";
  svg += "</g>\n<g fill=\"black\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg += "<text x=\"" + px(left - 6) + "\" y=\"" + px(sy(v) + 4) + "\" text-anchor=\"end\">" + format_number(v) +
           "</text>\n";
  }
  std::set<double> xticks;
  for (const auto& s : series)
    for (const auto& p : s.points) xticks.insert(p.first);
  for (double x : xticks)
    svg += "<text x=\"" + px(sx(x)) + "\" y=\"" + px(top + ph + 16) + "\" text-anchor=\"middle\">" +
           format_number(x) + "</text>\n";
  const std::string xlabel = spec.x == PlotX::SamplesPerEntity ? "samples per entity" : "number of entities";
  svg += "<text x=\"" + px(left + pw / 2) + "\" y=\"" + px(h - 14) + "\" text-anchor=\"middle\">" + xlabel +
         "</text>\n";
  svg += "<text transform=\"translate(16 " + px(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(spec.metric) + " accuracy</text>\n";
  svg += "</g>\n";

  // Chance: horizontal at 1/n per distinct n, or 1/n against n.
  if (spec.x == PlotX::SamplesPerEntity) {
    for (int n : ns) {
      const double y = sy(1.0 / n);
      svg += "<line class=\"chance\" x1=\"" + px(left) + "\" y1=\"" + px(y) + "\" x2=\"" + px(left + pw) + "\" y2=\"" +
             px(y) + "\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n";
      svg += "<text x=\"" + px(left + pw - 2) + "\" y=\"" + px(y - 4) + "\" text-anchor=\"end\" fill=\"gray\">chance 1/" +
             std::to_string(n) + "</text>\n";
    }
  } else {
    std::string d;
    for (int n : ns) d += (d.empty() ? "M" : " L") + px(sx(n)) + " " + px(sy(1.0 / n));
    svg += "<path class=\"chance\" d=\"" + d + "\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n";
  }

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (const auto& [x, y] : series[i].points) pts += (pts.empty() ? "" : " ") + px(sx(x)) + "," + px(sy(y));
    svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    for (const auto& [x, y] : series[i].points)
      svg += "<circle cx=\"" + px(sx(x)) + "\" cy=\"" + px(sy(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
  }

  // Legend.
  svg += "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = top + 8 + 18 * static_cast<double>(i);
    const char* color = kPalette[i % std::size(kPalette)];
    svg += "<rect x=\"" + px(left + pw + 12) + "\" y=\"" + px(y - 8) + "\" width=\"12\" height=\"10\" fill=\"" +
           color + "\"/>\n";
    svg += "<text x=\"" + px(left + pw + 30) + "\" y=\"" + px(y + 1) + "\">" + escape(series[i].label) + "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace wmobs
