#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "loadshift/agents.hpp"

namespace loadshift {

namespace {

constexpr std::size_t kMaxBars = 6;
constexpr int kWidth = 640;
constexpr int kLabelWidth = 260;
constexpr int kBarArea = 280;
constexpr int kRowHeight = 28;
constexpr int kTop = 40;
constexpr const char* kPositiveFill = "#d9534f";
constexpr const char* kNegativeFill = "#337ab7";

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string attribution_svg(const Attribution& attribution, const std::string& title) {
  const auto& phi = attribution.contributions;
  std::vector<std::size_t> order(phi.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(phi[a]) > std::abs(phi[b]); });
  if (order.size() > kMaxBars) order.resize(kMaxBars);

  double largest = 0;
  for (std::size_t j : order) largest = std::max(largest, std::abs(phi[j]));
  const int height = kTop + static_cast<int>(order.size()) * kRowHeight + 20;
  const int axis = kLabelWidth + kBarArea / 2;

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
      "<text x=\"10\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n"
      "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n",
      kWidth, height, kWidth, height, escape_xml(title), axis, kTop - 4, axis, height - 16);

  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t j = order[r];
    const double v = phi[j];
    const double len = largest > 0 ? std::abs(v) / largest * (kBarArea / 2.0 - 4) : 0.0;
    const double x = v >= 0 ? axis : axis - len;
    const int y = kTop + static_cast<int>(r) * kRowHeight;
    const std::string name = j < attribution.feature_names.size() ? attribution.feature_names[j] : fmt::format("x{}", j);
    svg += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n"
        "<rect x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" fill=\"{}\"/>\n"
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{:+.3f}</text>\n",
        kLabelWidth - 8, y + 16, escape_xml(name), x, y + 4, len, kRowHeight - 8,
        v >= 0 ? kPositiveFill : kNegativeFill, kLabelWidth + kBarArea + 8, y + 16, v);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace loadshift
