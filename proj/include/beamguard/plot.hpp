#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "beamguard/image_io.hpp"

namespace beamguard::plot {

using Color = std::array<uint8_t, 3>;

// 5x7 glyphs, one byte per row, bit 4 = leftmost column
struct Glyph {
  char ch;
  std::array<uint8_t, 7> rows;
};

inline const std::array<uint8_t, 7>& glyph_rows(char c) {
  static const std::vector<Glyph> table = {
      {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
      {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
      {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
      {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
      {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
      {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
      {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
      {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
      {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
      {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
      {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
      {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
      {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
      {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
      {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
      {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
      {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
      {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
      {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
      {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
      {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
      {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
      {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}},
      {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
      {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
      {'@', {0x0e, 0x11, 0x01, 0x0d, 0x15, 0x15, 0x0e}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
      {'%', {0x19, 0x1a, 0x02, 0x04, 0x08, 0x0b, 0x13}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
  };
  static const std::array<uint8_t, 7> unknown = {0x1f, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1f};
  char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : table)
    if (g.ch == up) return g.rows;
  return unknown;
}

inline int text_width(const std::string& s, int scale = 1) {
  return static_cast<int>(s.size()) * 6 * scale;
}

inline void put_pixel(img::ImageU8& im, int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= im.width || y >= im.height) return;
  uint8_t* p = im.pixel(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

inline void fill_rect(img::ImageU8& im, int x, int y, int w, int h, Color c) {
  for (int j = y; j < y + h; j++)
    for (int i = x; i < x + w; i++) put_pixel(im, i, j, c);
}

inline void draw_text(img::ImageU8& im, int x, int y, const std::string& s, Color c,
                      int scale = 1) {
  int cx = x;
  for (char ch : s) {
    const auto& rows = glyph_rows(ch);
    for (int r = 0; r < 7; r++)
      for (int b = 0; b < 5; b++)
        if (rows[r] & (1 << (4 - b)))
          fill_rect(im, cx + b * scale, y + r * scale, scale, scale, c);
    cx += 6 * scale;
  }
}

// blue (negative) through near-white (zero) to red (positive)
inline Color diverging_color(double v, double vmax) {
  const Color mid{245, 245, 245};
  const Color pos{186, 32, 38};
  const Color neg{38, 62, 170};
  if (!(vmax > 0)) return mid;
  double t = std::min(1.0, std::abs(v) / vmax);
  const Color& end = v >= 0 ? pos : neg;
  Color out;
  for (int i = 0; i < 3; i++)
    out[i] = static_cast<uint8_t>(std::lround(mid[i] + t * (end[i] - mid[i])));
  return out;
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.2f", v);
  return buf;
}

inline img::ImageU8 render_heatmap(const std::vector<std::vector<double>>& values,
                                   const std::vector<std::string>& row_labels,
                                   const std::vector<std::string>& col_labels,
                                   const std::string& title, const std::string& footnote) {
  const int rows = static_cast<int>(values.size());
  const int cols = rows ? static_cast<int>(values[0].size()) : 0;
  if (rows == 0 || cols == 0) throw std::invalid_argument("render_heatmap: empty matrix");
  if (static_cast<int>(row_labels.size()) != rows ||
      static_cast<int>(col_labels.size()) != cols)
    throw std::invalid_argument("render_heatmap: label count mismatch");

  const int cell_w = 72, cell_h = 30, pad = 8;
  int label_w = 0;
  for (const auto& l : row_labels) label_w = std::max(label_w, text_width(l));
  const int left = pad + label_w + pad;
  const int top = pad + 10 + pad + 10 + pad;
  const int width = left + cols * cell_w + pad;
  const int height = top + rows * cell_h + pad + 10 + pad;

  img::ImageU8 im(width, height);
  fill_rect(im, 0, 0, width, height, {255, 255, 255});
  const Color ink{20, 20, 20};

  double vmax = 0;
  for (const auto& r : values)
    for (double v : r) vmax = std::max(vmax, std::abs(v));

  draw_text(im, pad, pad, title, ink);
  for (int j = 0; j < cols; j++) {
    int cx = left + j * cell_w + (cell_w - text_width(col_labels[j])) / 2;
    draw_text(im, cx, pad + 10 + pad, col_labels[j], ink);
  }
  for (int i = 0; i < rows; i++) {
    draw_text(im, pad, top + i * cell_h + (cell_h - 7) / 2, row_labels[i], ink);
    for (int j = 0; j < cols; j++) {
      int x = left + j * cell_w, y = top + i * cell_h;
      fill_rect(im, x, y, cell_w - 2, cell_h - 2, diverging_color(values[i][j], vmax));
      std::string txt = format_value(values[i][j]);
      draw_text(im, x + (cell_w - 2 - text_width(txt)) / 2, y + (cell_h - 2 - 7) / 2, txt, ink);
    }
  }
  draw_text(im, pad, top + rows * cell_h + pad, footnote, ink);
  return im;
}

struct HistSeries {
  std::string name;
  std::vector<double> values;
};

inline img::ImageU8 render_histogram(const std::vector<HistSeries>& series, int bins,
                                     const std::string& title) {
  if (series.empty() || bins < 1) throw std::invalid_argument("render_histogram: bad inputs");
  double lo = 0, hi = 0;
  bool first = true;
  for (const auto& s : series)
    for (double v : s.values) {
      if (first || v < lo) lo = first ? v : std::min(lo, v);
      if (first || v > hi) hi = first ? v : std::max(hi, v);
      first = false;
    }
  if (first) throw std::invalid_argument("render_histogram: no samples");
  if (hi <= lo) hi = lo + 1.0;

  const int ns = static_cast<int>(series.size());
  std::vector<std::vector<int>> counts(ns, std::vector<int>(bins, 0));
  int peak = 1;
  for (int s = 0; s < ns; s++)
    for (double v : series[s].values) {
      int b = static_cast<int>((v - lo) / (hi - lo) * bins);
      b = std::min(bins - 1, std::max(0, b));
      peak = std::max(peak, ++counts[s][b]);
    }

  const int bar_w = 5, group_w = ns * bar_w + 3, plot_h = 160, pad = 10;
  const int left = pad + 24, top = pad + 10 + pad + 10 + pad;
  const int width = std::max(left + bins * group_w + pad, 320);
  const int height = top + plot_h + pad + 10 + pad;
  static const std::vector<Color> palette = {
      {60, 100, 190}, {200, 70, 60}, {70, 160, 90}, {160, 110, 40}};

  img::ImageU8 im(width, height);
  fill_rect(im, 0, 0, width, height, {255, 255, 255});
  const Color ink{20, 20, 20};
  draw_text(im, pad, pad, title, ink);
  int lx = pad;
  for (int s = 0; s < ns; s++) {
    fill_rect(im, lx, pad + 10 + pad, 8, 8, palette[s % palette.size()]);
    draw_text(im, lx + 12, pad + 10 + pad, series[s].name, ink);
    lx += 12 + text_width(series[s].name) + 16;
  }

  fill_rect(im, left, top + plot_h, bins * group_w, 1, ink);
  for (int s = 0; s < ns; s++)
    for (int b = 0; b < bins; b++) {
      int h = static_cast<int>(std::lround(static_cast<double>(counts[s][b]) / peak * plot_h));
      if (h > 0)
        fill_rect(im, left + b * group_w + s * bar_w, top + plot_h - h, bar_w - 1, h,
                  palette[s % palette.size()]);
    }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", lo);
  draw_text(im, left, top + plot_h + 4, buf, ink);
  std::snprintf(buf, sizeof(buf), "%.2f", hi);
  std::string hs(buf);
  draw_text(im, left + bins * group_w - text_width(hs), top + plot_h + 4, hs, ink);
  return im;
}

}  // namespace beamguard::plot
