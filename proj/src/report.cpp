#include "lesionkit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lesionkit {

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

std::string format_parameters(std::int64_t count) {
  char buf[32];
  if (count >= 1'000'000)
    std::snprintf(buf, sizeof buf, "%.1fM", static_cast<double>(count) / 1e6);
  else if (count >= 1'000)
    std::snprintf(buf, sizeof buf, "%.1fK", static_cast<double>(count) / 1e3);
  else
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(count));
  return buf;
}

namespace {

std::vector<std::vector<std::string>> table_rows(const std::vector<ModelResult>& results) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Model", "Parameters", "Accuracy", "Precision", "Recall", "F1"});
  for (const auto& r : results) {
    rows.push_back({r.model, format_parameters(r.parameters), format_percent(r.report.accuracy_std),
                    format_percent(r.report.precision.weighted),
                    format_percent(r.report.recall.weighted), format_percent(r.report.f1.weighted)});
  }
  return rows;
}

std::string xml_escape(const std::string& s) {
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

}  // namespace

std::string render_comparison_table(const std::vector<ModelResult>& results) {
  const auto rows = table_rows(results);
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const std::string& cell = rows[r][c];
      const std::string pad(width[c] - cell.size(), ' ');
      if (c > 0) out << "  ";
      // First column left-aligned, numbers right-aligned.
      out << (c == 0 ? cell + pad : pad + cell);
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

std::string render_comparison_csv(const std::vector<ModelResult>& results) {
  std::ostringstream out;
  for (const auto& row : table_rows(results)) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  return out.str();
}

std::string render_heatmap_svg(const MetricReport& report, const std::string& title) {
  const auto n = static_cast<int>(report.row_normalized.rows());
  constexpr int cell = 64, left = 140, top = 60, bottom = 110;
  const int width = left + n * cell + 20;
  const int height = top + n * cell + bottom;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  char buf[64];
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const double v = std::clamp(report.row_normalized(i, k), 0.0, 1.0);
      // White to dark blue.
      const int red = static_cast<int>(247 - v * (247 - 8));
      const int green = static_cast<int>(251 - v * (251 - 48));
      const int blue = static_cast<int>(255 - v * (255 - 107));
      std::snprintf(buf, sizeof buf, "#%02x%02x%02x", red, green, blue);
      const int x = left + k * cell, y = top + i * cell;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"" << buf << "\" stroke=\"#ffffff\"/>\n";
      svg << "<text class=\"cell\" x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 5
          << "\" text-anchor=\"middle\" font-size=\"13\" fill=\"" << (v > 0.5 ? "#ffffff" : "#000000")
          << "\">" << format_percent(report.row_normalized(i, k)) << "</text>\n";
    }
  }
  for (int i = 0; i < n; ++i) {
    const std::string name = i < static_cast<int>(report.classes.size()) ? report.classes[static_cast<std::size_t>(i)] : "";
    svg << "<text class=\"true-label\" x=\"" << left - 8 << "\" y=\"" << top + i * cell + cell / 2 + 5
        << "\" text-anchor=\"end\" font-size=\"12\">" << xml_escape(name) << "</text>\n";
    const int cx = left + i * cell + cell / 2, cy = top + n * cell + 12;
    svg << "<text class=\"pred-label\" x=\"" << cx << "\" y=\"" << cy
        << "\" text-anchor=\"end\" font-size=\"12\" transform=\"rotate(-45 " << cx << ' ' << cy
        << ")\">" << xml_escape(name) << "</text>\n";
  }
  svg << "<text x=\"" << left + n * cell / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\" font-size=\"13\">predicted</text>\n";
  svg << "<text x=\"16\" y=\"" << top + n * cell / 2 << "\" font-size=\"13\" transform=\"rotate(-90 16 "
      << top + n * cell / 2 << ")\" text-anchor=\"middle\">true</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

RenderedReport render_report(const std::vector<ModelResult>& results) {
  if (results.empty()) throw std::invalid_argument("no model reports to render");
  RenderedReport out;
  out.table = render_comparison_table(results);
  out.csv = render_comparison_csv(results);
  for (const auto& r : results)
    out.heatmaps.emplace_back(r.model, render_heatmap_svg(r.report, r.model + " (row %)"));
  return out;
}

}  // namespace lesionkit
