#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace beamguard::sim {

struct CameraModel {
  int width = 64;
  int height = 64;
  double horizontal_fov_rad = 1.6;
};

// pinhole mapping from a horizontal pixel coordinate to azimuth
inline double azimuth_from_pixel(const CameraModel& cam, double x) {
  if (!(cam.horizontal_fov_rad > 0.0 && cam.horizontal_fov_rad < M_PI))
    throw std::invalid_argument("azimuth_from_pixel: fov must lie in (0, pi)");
  if (!(x >= 0.0 && x <= cam.width))
    throw std::domain_error("azimuth_from_pixel: pixel outside the frame");
  double u = 2.0 * x / cam.width - 1.0;
  return std::atan(u * std::tan(cam.horizontal_fov_rad / 2.0));
}

// half-open pixel box [x_min, x_max) x [y_min, y_max)
struct Box {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;
  double confidence = 1.0;

  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long area() const { return static_cast<long>(width()) * height(); }
};

// horizontal bin label in 1..num_bins: ceil(x_c * A / W), clamped
inline int assign_bin(const Box& b, int image_width, int num_bins) {
  if (image_width < 1 || num_bins < 1) throw std::invalid_argument("assign_bin: bad sizes");
  double xc = b.center_x();
  int chi = static_cast<int>(std::ceil(xc * num_bins / static_cast<double>(image_width)));
  return std::clamp(chi, 1, num_bins);
}

}  // namespace beamguard::sim
