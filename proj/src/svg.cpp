#include "gseo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include <fmt/format.h>

#include "gseo/error.hpp"

namespace gseo::svg {

namespace {

constexpr int kLabelWidth = 220;
constexpr int kPlotWidth = 440;
constexpr int kBarHeight = 14;
constexpr int kGroupGap = 10;
constexpr int kTop = 40;
constexpr int kLegendHeight = 24;

constexpr std::string_view kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                         "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

}  // namespace

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string grouped_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                              const std::vector<Series>& series) {
  for (const auto& s : series) {
    if (s.values.size() != categories.size()) {
      throw Error("invalid-input", fmt::format("series '{}' has {} values for {} categories", s.name,
                                               s.values.size(), categories.size()));
    }
  }
  double lo = 0.0;
  double hi = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo <= 0.0) hi = lo + 1.0;
  const double scale = kPlotWidth / (hi - lo);
  const double zero_x = kLabelWidth + (0.0 - lo) * scale;

  const int group_h = static_cast<int>(series.size()) * kBarHeight + kGroupGap;
  const int height = kTop + static_cast<int>(categories.size()) * group_h + kLegendHeight + 10;
  const int width = kLabelWidth + kPlotWidth + 80;

  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height, width, height);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", width, height);
  out += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"14\" font-weight=\"bold\">{}</text>\n",
                     10, escape(title));

  for (std::size_t c = 0; c < categories.size(); ++c) {
    const int gy = kTop + static_cast<int>(c) * group_h;
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", kLabelWidth - 6,
                       gy + static_cast<int>(series.size()) * kBarHeight / 2 + 4,
                       escape(categories[c]));
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      const double x1 = zero_x + std::min(0.0, v) * scale;
      const double w = std::abs(v) * scale;
      const int y = gy + static_cast<int>(s) * kBarHeight;
      out += fmt::format(
          "<rect x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" fill=\"{}\"/>\n", x1, y, w,
          kBarHeight - 2, kPalette[s % std::size(kPalette)]);
      const double tx = v < 0 ? x1 - 3 : x1 + w + 3;
      out += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"{}\">{:.2f}</text>\n", tx,
                         y + kBarHeight - 4, v < 0 ? "end" : "start", v);
    }
  }
  const int axis_bottom = kTop + static_cast<int>(categories.size()) * group_h;
  out += fmt::format("<line x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" stroke=\"#333333\"/>\n",
                     zero_x, kTop - 4, zero_x, axis_bottom);

  int lx = kLabelWidth;
  const int ly = axis_bottom + 14;
  for (std::size_t s = 0; s < series.size(); ++s) {
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", lx,
                       ly - 9, kPalette[s % std::size(kPalette)]);
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", lx + 14, ly, escape(series[s].name));
    lx += 20 + static_cast<int>(series[s].name.size()) * 7;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace gseo::svg
