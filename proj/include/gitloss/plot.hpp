#pragma once

// Loss-curve tables and dependency-free SVG rendering.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gitloss/csv.hpp"
#include "gitloss/errors.hpp"
#include "gitloss/losses.hpp"
#include "gitloss/metrics.hpp"

namespace gitloss {

struct CurveRow {
  double t = 0.0;
  double center = 0.0;  // lambda_c * t^2 / 2
  double git = 0.0;     // lambda_g / (1 + t^2)
};

/// Both penalty terms as functions of a signed 1-D offset t = x - c,
/// sampled at `steps` evenly spaced points of [-range, range]. Sample k and
/// steps-1-k are exact negatives of each other.
inline std::vector<CurveRow> loss_curves(double lambda_c, double lambda_g, double range,
                                         std::size_t steps) {
  if (steps < 2) throw ParameterError("curves: steps must be >= 2");
  if (!(range > 0.0)) throw ParameterError("curves: range must be > 0");
  std::vector<CurveRow> rows;
  rows.reserve(steps);
  const double span = static_cast<double>(steps - 1);
  for (std::size_t k = 0; k < steps; ++k) {
    const double numer = 2.0 * static_cast<double>(k) - span;
    const double t = range * numer / span;
    rows.push_back({t, lambda_c * t * t / 2.0, lambda_g * git_pair_term(t * t)});
  }
  return rows;
}

inline std::string format_curves(const std::vector<CurveRow>& rows) {
  std::string out = "t,l_c,l_g\n";
  for (const auto& r : rows) out += fmt::format("{},{},{}\n", csv::num(r.t), csv::num(r.center), csv::num(r.git));
  return out;
}

namespace svg {

// Ten well-separated class colors.
inline constexpr std::array<const char*, 10> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline constexpr double kWidth = 640;
inline constexpr double kHeight = 480;
inline constexpr double kLeft = 60, kRight = 130, kTop = 30, kBottom = 50;

struct Bounds {
  double x0, x1, y0, y1;
};

inline Bounds padded(double x0, double x1, double y0, double y1) {
  auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      lo -= 1.0;
      hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  };
  widen(x0, x1);
  widen(y0, y1);
  return {x0, x1, y0, y1};
}

inline double px(const Bounds& b, double x) {
  return kLeft + (x - b.x0) / (b.x1 - b.x0) * (kWidth - kLeft - kRight);
}
inline double py(const Bounds& b, double y) {
  return kHeight - kBottom - (y - b.y0) / (b.y1 - b.y0) * (kHeight - kTop - kBottom);
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string header(const std::string& title) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n"
      "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" "
      "text-anchor=\"middle\">{3}</text>\n",
      kWidth, kHeight, (kWidth - kRight + kLeft) / 2, escape(title));
}

inline std::string axes(const Bounds& b, const std::string& xlabel, const std::string& ylabel) {
  std::string out;
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  out += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
      left, top, right - left, bottom - top);
  for (int k = 0; k <= 4; ++k) {
    const double fx = b.x0 + (b.x1 - b.x0) * k / 4.0;
    const double fy = b.y0 + (b.y1 - b.y0) * k / 4.0;
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"middle\">{:.3g}</text>\n",
        px(b, fx), bottom + 14, fx);
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"end\">{:.3g}</text>\n",
        left - 4, py(b, fy) + 3, fy);
  }
  out += fmt::format(
      "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\">{}</text>\n",
      (left + right) / 2, kHeight - 12, escape(xlabel));
  out += fmt::format(
      "<text x=\"14\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2f})\">{}</text>\n",
      (top + bottom) / 2, (top + bottom) / 2, escape(ylabel));
  return out;
}

inline std::string legend_entry(std::size_t slot, const char* color, const std::string& label,
                                bool line) {
  const double x = kWidth - kRight + 14;
  const double y = kTop + 12 + 18.0 * static_cast<double>(slot);
  std::string marker =
      line ? fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                         "stroke=\"{}\" stroke-width=\"2\"/>",
                         x, y - 4, x + 16, y - 4, color)
           : fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"{}\"/>", x + 8, y - 4,
                         color);
  return fmt::format(
      "<g class=\"legend\">{}<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" "
      "font-size=\"11\">{}</text></g>\n",
      marker, x + 22, y, escape(label));
}

}  // namespace svg

inline std::string curves_svg(const std::vector<CurveRow>& rows, double lambda_c, double lambda_g) {
  double y1 = 0.0;
  for (const auto& r : rows) y1 = std::max({y1, r.center, r.git});
  const auto b = svg::padded(rows.front().t, rows.back().t, 0.0, y1);
  auto polyline = [&](auto value, const char* color) {
    std::string pts;
    for (const auto& r : rows) pts += fmt::format("{:.2f},{:.2f} ", svg::px(b, r.t), svg::py(b, value(r)));
    if (!pts.empty()) pts.pop_back();
    return fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                       color, pts);
  };
  std::string out = svg::header(fmt::format("Loss terms vs offset (lambda_c={}, lambda_g={})",
                                            csv::num(lambda_c), csv::num(lambda_g)));
  out += svg::axes(b, "x - c", "loss");
  out += polyline([](const CurveRow& r) { return r.center; }, svg::kPalette[0]);
  out += polyline([](const CurveRow& r) { return r.git; }, svg::kPalette[3]);
  out += svg::legend_entry(0, svg::kPalette[0], "L_C", true);
  out += svg::legend_entry(1, svg::kPalette[3], "L_G", true);
  out += "</svg>\n";
  return out;
}

/// 2-D scatter of an embedding set, one color per class, with legend.
inline std::string scatter_svg(const EmbeddingSet& emb, const std::string& title) {
  if (emb.labels.empty()) throw ParameterError("scatter: embedding set is empty");
  if (emb.features.cols() != 2) {
    throw ParameterError("scatter: features are " + std::to_string(emb.features.cols()) +
                         "-dimensional; retrain with --feature-dim 2 to plot them");
  }
  const auto& x = emb.features;
  double x0 = x(0, 0), x1 = x0, y0 = x(0, 1), y1 = y0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    x0 = std::min(x0, x(i, 0));
    x1 = std::max(x1, x(i, 0));
    y0 = std::min(y0, x(i, 1));
    y1 = std::max(y1, x(i, 1));
  }
  const auto b = svg::padded(x0, x1, y0, y1);
  std::map<Label, std::size_t> classes;
  for (Label y : emb.labels) classes.emplace(y, 0);
  std::size_t slot = 0;
  for (auto& [label, s] : classes) s = slot++;

  std::string out = svg::header(title);
  out += svg::axes(b, "feature 1", "feature 2");
  out += "<g class=\"points\">\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const char* color = svg::kPalette[classes[emb.labels[i]] % svg::kPalette.size()];
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.5\" fill=\"{}\"/>\n",
                       svg::px(b, x(i, 0)), svg::py(b, x(i, 1)), color);
  }
  out += "</g>\n";
  for (const auto& [label, s] : classes) {
    out += svg::legend_entry(s, svg::kPalette[s % svg::kPalette.size()],
                             "class " + std::to_string(label), false);
  }
  out += "</svg>\n";
  return out;
}

}  // namespace gitloss
