#include "sotif/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sotif/json_writer.hpp"

namespace sotif::plot {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 60.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;

std::string num(double v) { return format_fixed(v, 2); }

}  // namespace

std::string sweep_svg(std::span<const eval::ProtocolReport> sweep) {
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double t_min = 0.0, t_max = 1.0;
  if (!sweep.empty()) {
    t_min = sweep.front().theta_w;
    t_max = sweep.back().theta_w;
    if (t_max <= t_min) t_max = t_min + 1.0;
  }
  double uqs_max = 1.0;
  for (const auto& r : sweep) {
    if (std::isfinite(r.uqs)) uqs_max = std::max(uqs_max, r.uqs);
  }
  uqs_max = std::ceil(uqs_max);

  auto px = [&](double theta) { return kLeft + (theta - t_min) / (t_max - t_min) * plot_w; };
  auto py = [&](double v, double top) { return kTop + plot_h - v / top * plot_h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Axes and ticks.
  svg += "<g stroke=\"#444\" fill=\"none\">\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(plot_w) + "\" height=\"" +
         num(plot_h) + "\"/>\n";
  svg += "</g>\n<g fill=\"#222\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(v, 1.0) + 4) + "\" text-anchor=\"end\">" +
           format_fixed(v, 1) + "</text>\n";
    svg += "<text x=\"" + num(kWidth - kRight + 8) + "\" y=\"" + num(py(v * uqs_max, uqs_max) + 4) + "\">" +
           format_fixed(v * uqs_max, 1) + "</text>\n";
  }
  for (int i = 0; i <= 6; ++i) {
    const double t = t_min + (t_max - t_min) * i / 6.0;
    svg += "<text x=\"" + num(px(t)) + "\" y=\"" + num(kTop + plot_h + 18) + "\" text-anchor=\"middle\">" +
           format_fixed(t, 2) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">uncertainty threshold theta_w</text>\n";
  svg += "<text x=\"" + num(kWidth - 12) + "\" y=\"" + num(kTop - 10) + "\" text-anchor=\"end\">UQS</text>\n";
  svg += "</g>\n";

  struct Series {
    const char* name;
    const char* color;
    std::function<double(const eval::ProtocolReport&)> value;
    double top;
  };
  const Series series[] = {
      {"ACR", "#1f77b4", [](const eval::ProtocolReport& r) { return r.acr; }, 1.0},
      {"FAR", "#d62728", [](const eval::ProtocolReport& r) { return r.far; }, 1.0},
      {"CQS", "#2ca02c", [](const eval::ProtocolReport& r) { return r.cqs; }, 1.0},
      {"UQS", "#9467bd", [](const eval::ProtocolReport& r) { return r.uqs; }, uqs_max},
  };

  int legend = 0;
  for (const auto& s : series) {
    std::vector<std::string> segments(1);
    for (const auto& r : sweep) {
      const double v = s.value(r);
      if (!std::isfinite(v)) {
        if (!segments.back().empty()) segments.emplace_back();
        continue;
      }
      if (!segments.back().empty()) segments.back() += ' ';
      segments.back() += num(px(r.theta_w)) + "," + num(py(v, s.top));
    }
    for (const auto& pts : segments) {
      if (pts.empty()) continue;
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(s.color) + "\" stroke-width=\"2\" points=\"" + pts +
             "\"/>\n";
    }
    const double ly = kTop + 14 + 16 * legend++;
    svg += "<line x1=\"" + num(kLeft + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(kLeft + 30) + "\" y2=\"" +
           num(ly - 4) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + 36) + "\" y=\"" + num(ly) + "\">" + s.name + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace sotif::plot
