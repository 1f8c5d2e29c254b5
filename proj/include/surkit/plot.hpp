#pragma once

// Self-contained SVG plot of one video's fits: empirical SUR as a
// right-continuous step, the fitted analytic curves, and the empirical p%SUR
// marker. No external fonts, styles or scripts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>

#include "surkit/empirical.hpp"
#include "surkit/fitting.hpp"
#include "surkit/surmodels.hpp"

namespace surkit::plot {

namespace detail {

inline constexpr double kWidth = 640, kHeight = 420;
inline constexpr double kLeft = 56, kRight = 160, kTop = 28, kBottom = 44;  // margins; legend on the right
inline constexpr double kQpMax = 51;

inline double px(double qp) { return kLeft + qp / kQpMax * (kWidth - kLeft - kRight); }
inline double py(double sur) { return kTop + (1.0 - sur) * (kHeight - kTop - kBottom); }

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                      "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace detail

inline std::string fit_plot_svg(const SurCurve& empirical, std::span<const FitResult> fits, double p = 0.75,
                                const std::string& title = "") {
  using namespace detail;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    s += "<text x=\"" + num(kLeft) + "\" y=\"18\" font-size=\"13\">" + escape(title) + "</text>\n";
  }

  // axes, ticks and light grid
  s += "<g stroke=\"#ddd\" stroke-width=\"0.5\">\n";
  for (int q = 0; q <= 50; q += 10) s += "<line x1=\"" + num(px(q)) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(px(q)) + "\" y2=\"" + num(py(1)) + "\"/>\n";
  for (int k = 0; k <= 4; ++k) s += "<line x1=\"" + num(px(0)) + "\" y1=\"" + num(py(k / 4.0)) + "\" x2=\"" + num(px(kQpMax)) + "\" y2=\"" + num(py(k / 4.0)) + "\"/>\n";
  s += "</g>\n";
  s += "<rect x=\"" + num(px(0)) + "\" y=\"" + num(py(1)) + "\" width=\"" + num(px(kQpMax) - px(0)) + "\" height=\"" +
       num(py(0) - py(1)) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int q = 0; q <= 50; q += 10) {
    s += "<text x=\"" + num(px(q)) + "\" y=\"" + num(py(0) + 15) + "\" text-anchor=\"middle\">" + std::to_string(q) + "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    s += "<text x=\"" + num(px(0) - 6) + "\" y=\"" + num(py(k / 4.0) + 4) + "\" text-anchor=\"end\">" + num(k / 4.0) + "</text>\n";
  }
  s += "<text x=\"" + num((px(0) + px(kQpMax)) / 2) + "\" y=\"" + num(kHeight - 8) + "\" text-anchor=\"middle\">QP</text>\n";
  s += "<text x=\"14\" y=\"" + num((py(0) + py(1)) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       num((py(0) + py(1)) / 2) + ")\">SUR</text>\n";

  // analytic curves, sampled finely between grid levels
  const auto& grid = empirical.grid;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& m = fits[k].model;
    std::string pts;
    const int steps = (grid.max() - grid.min()) * 8;
    for (int i = 0; i <= steps; ++i) {
      const double x = grid.min() + i / 8.0;
      double y = surkit::detail::evaluate_unchecked(m.family, m.params, x);
      if (!std::isfinite(y)) continue;
      y = std::clamp(y, -0.05, 1.05);
      pts += num(px(x)) + "," + num(py(y)) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[k % kPalette.size()]) +
         "\" stroke-width=\"1.3\" points=\"" + pts + "\"/>\n";
    const double ly = kTop + 14 + 16.0 * static_cast<double>(k);
    s += "<line x1=\"" + num(kWidth - kRight + 12) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(kWidth - kRight + 32) +
         "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + kPalette[k % kPalette.size()] + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(kWidth - kRight + 38) + "\" y=\"" + num(ly) + "\">" +
         escape(family_name(m.family)) + (fits[k].converged ? "" : " (nc)") + "</text>\n";
  }

  // empirical SUR: value at level i holds on [i, i+1)
  std::string step;
  for (std::size_t i = 0; i < empirical.values.size(); ++i) {
    const double x0 = grid.level(i);
    const double x1 = std::min<double>(x0 + 1, grid.max());
    const double y = empirical.values[i];
    step += num(px(x0)) + "," + num(py(y)) + " " + num(px(x1)) + "," + num(py(y)) + " ";
  }
  s += "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.6\" points=\"" + step + "\"/>\n";
  for (std::size_t i = 0; i < empirical.values.size(); ++i) {
    s += "<circle cx=\"" + num(px(grid.level(i))) + "\" cy=\"" + num(py(empirical.values[i])) + "\" r=\"1.8\"/>\n";
  }
  const double legend_y = kTop + 14 + 16.0 * static_cast<double>(fits.size());
  s += "<line x1=\"" + num(kWidth - kRight + 12) + "\" y1=\"" + num(legend_y - 4) + "\" x2=\"" +
       num(kWidth - kRight + 32) + "\" y2=\"" + num(legend_y - 4) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  s += "<text x=\"" + num(kWidth - kRight + 38) + "\" y=\"" + num(legend_y) + "\">empirical</text>\n";

  // empirical p%SUR marker
  const auto mark = first_level_at_or_below(empirical, p);
  s += "<line x1=\"" + num(px(0)) + "\" y1=\"" + num(py(p)) + "\" x2=\"" + num(px(kQpMax)) + "\" y2=\"" + num(py(p)) +
       "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s += "<line x1=\"" + num(px(mark.level)) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(px(mark.level)) + "\" y2=\"" +
       num(py(1)) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s += "<circle cx=\"" + num(px(mark.level)) + "\" cy=\"" + num(py(p)) + "\" r=\"4\" fill=\"none\" stroke=\"red\" stroke-width=\"1.5\"/>\n";
  char label[64];
  std::snprintf(label, sizeof label, "%g%%SUR = %d", p * 100, mark.level);
  s += "<text x=\"" + num(px(mark.level) + 6) + "\" y=\"" + num(py(p) - 6) + "\" fill=\"red\">" + label + "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace surkit::plot
