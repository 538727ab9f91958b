#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "logrecon/geometry.hpp"
#include "logrecon/projector.hpp"

namespace testing {

using namespace logrecon;

// Area-weighted disk: each pixel holds value * covered fraction (n x n subsamples).
inline ImageSlice disk_image(const ImageGrid& grid, double cx, double cy, double r, float value, int n = 8) {
  ImageSlice img(grid);
  const double ps = grid.pixel_size;
  for (int iy = 0; iy < grid.n_y; ++iy)
    for (int ix = 0; ix < grid.n_x; ++ix) {
      int inside = 0;
      for (int sy = 0; sy < n; ++sy)
        for (int sx = 0; sx < n; ++sx) {
          const double x = grid.x_center(ix) + ((sx + 0.5) / n - 0.5) * ps;
          const double y = grid.y_center(iy) + ((sy + 0.5) / n - 0.5) * ps;
          inside += (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
        }
      img.at(iy, ix) = static_cast<float>(value * inside / double(n * n));
    }
  return img;
}

// Exact length of the source-to-bin ray inside a disk.
inline double disk_chord(const FanBeamGeometry& g, int a, int k, double cx, double cy, double r) {
  const double b = g.angle_rad(a);
  const double sx = g.source_radius() * std::cos(b), sy = g.source_radius() * std::sin(b);
  const double dx = -g.detector_radius() * std::cos(b) - g.bin_offset(k) * std::sin(b);
  const double dy = -g.detector_radius() * std::sin(b) + g.bin_offset(k) * std::cos(b);
  const double ux = dx - sx, uy = dy - sy, len = std::hypot(ux, uy);
  const double dist = std::abs(ux * (sy - cy) - uy * (sx - cx)) / len;
  return dist < r ? 2.0 * std::sqrt(r * r - dist * dist) : 0.0;
}

inline std::vector<float> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(u(rng));
  return v;
}

template <class A, class B>
double dot(const A& a, const B& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

// Per-pixel SSIM straight from the definition, one window at a time.
inline double ssim_oracle(const ImageSlice& x, const ImageSlice& y, double range) {
  const int n = 11, h = x.grid.n_y, w = x.grid.n_x;
  const double sigma = 1.5, c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  std::vector<std::vector<double>> win(n, std::vector<double>(n));
  double tot = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double di = i - 5.0, dj = j - 5.0;
      win[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      tot += win[i][j];
    }
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + n <= h; ++r)
    for (int c = 0; c + n <= w; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          mx += win[i][j] / tot * x.at(r + i, c + j);
          my += win[i][j] / tot * y.at(r + i, c + j);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double a = x.at(r + i, c + j) - mx, b = y.at(r + i, c + j) - my;
          vx += win[i][j] / tot * a * a;
          vy += win[i][j] / tot * b * b;
          cxy += win[i][j] / tot * a * b;
        }
      acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace testing
