#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "beamguard/dataset.hpp"
#include "beamguard/image_io.hpp"
#include "beamguard/scene.hpp"

namespace beamguard::detect {

// ground-truth detector: every vehicle box from the record metadata
inline std::vector<sim::Box> detect_oracle(const sim::DatasetRecord& r) {
  std::vector<sim::Box> boxes = r.distractor_boxes;
  for (auto& b : boxes) b.confidence = 1.0;
  sim::Box t = r.target_bbox;
  t.confidence = 1.0;
  boxes.push_back(t);
  return boxes;
}

// color-blob detector: threshold the per-channel distance to the target color
// in 8-bit space and take tight boxes of 4-connected components
inline std::vector<sim::Box> detect_blob(const img::ImageU8& im,
                                         const std::array<float, 3>& target_color,
                                         double tolerance = 0.05, int min_area = 9) {
  if (tolerance < 0 || min_area < 1) throw std::invalid_argument("detect_blob: bad thresholds");
  const int w = im.width, h = im.height;
  std::vector<uint8_t> mask(static_cast<size_t>(w) * h);
  std::vector<uint8_t> seen(static_cast<size_t>(w) * h);
  std::vector<int> stack;
  std::vector<sim::Box> out;
  double tol = tolerance * 255.0 + 1e-9;

  uint8_t q[3];
  for (int c = 0; c < 3; c++) q[c] = img::quantize_u8(target_color[c]);
  for (int y = 0; y < h; y++)
    for (int x = 0; x < w; x++) {
      const uint8_t* px = im.pixel(x, y);
      bool hit = true;
      for (int c = 0; c < 3 && hit; c++)
        if (std::abs(int(px[c]) - int(q[c])) > tol) hit = false;
      mask[static_cast<size_t>(y) * w + x] = hit;
    }
  for (int y = 0; y < h; y++)
    for (int x = 0; x < w; x++) {
      size_t at = static_cast<size_t>(y) * w + x;
      if (!mask[at] || seen[at]) continue;
      int x_min = x, x_max = x, y_min = y, y_max = y;
      long area = 0;
      stack.clear();
      stack.push_back(static_cast<int>(at));
      seen[at] = 1;
      while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        int cy = cur / w, cx = cur % w;
        area++;
        x_min = std::min(x_min, cx);
        x_max = std::max(x_max, cx);
        y_min = std::min(y_min, cy);
        y_max = std::max(y_max, cy);
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; k++) {
          if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
          size_t nat = static_cast<size_t>(ny[k]) * w + nx[k];
          if (mask[nat] && !seen[nat]) {
            seen[nat] = 1;
            stack.push_back(static_cast<int>(nat));
          }
        }
      }
      if (area >= min_area) {
        sim::Box b{x_min, y_min, x_max + 1, y_max + 1};
        b.confidence = static_cast<double>(area) / static_cast<double>(b.area());
        out.push_back(b);
      }
    }
  std::sort(out.begin(), out.end(), [](const sim::Box& a, const sim::Box& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    if (a.x_min != b.x_min) return a.x_min < b.x_min;
    return a.y_min < b.y_min;
  });
  return out;
}

}  // namespace beamguard::detect
