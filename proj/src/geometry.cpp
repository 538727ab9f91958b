#include "logrecon/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace logrecon {

ImageGrid::ImageGrid(int nx, int ny, double pixel_mm, double ox, double oy)
    : n_x(nx), n_y(ny), pixel_size(pixel_mm), origin_x(ox), origin_y(oy) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("ImageGrid: pixel counts must be >= 1");
  if (!(pixel_mm > 0.0)) throw std::invalid_argument("ImageGrid: pixel_size must be > 0");
}

double ImageGrid::half_diagonal() const {
  const double hx = 0.5 * extent_x() + std::abs(origin_x);
  const double hy = 0.5 * extent_y() + std::abs(origin_y);
  return std::hypot(hx, hy);
}

std::vector<double> ScanPlan::slice_angles(int slice) const {
  if (slice < 0 || slice >= n_slices) throw std::out_of_range("ScanPlan: slice index out of range");
  return equispaced_source_angles(n_sources, per_slice_offsets_deg[static_cast<std::size_t>(slice)]);
}

std::vector<double> equispaced_source_angles(int n_src, double offset_deg) {
  if (n_src < 1) throw std::invalid_argument("equispaced_source_angles: n_src must be >= 1");
  if (!(offset_deg >= 0.0 && offset_deg < 360.0))
    throw std::invalid_argument("equispaced_source_angles: offset must lie in [0, 360)");
  const double step = 360.0 / n_src;
  std::vector<double> angles(static_cast<std::size_t>(n_src));
  for (int k = 0; k < n_src; ++k) {
    double a = std::fmod(offset_deg + k * step, 360.0);
    if (a >= 360.0) a -= 360.0;
    angles[static_cast<std::size_t>(k)] = a;
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

ScanPlan sample_scan_plan(int n_slices, int n_src, std::uint64_t seed) {
  if (n_slices < 1) throw std::invalid_argument("sample_scan_plan: n_slices must be >= 1");
  if (n_src < 1) throw std::invalid_argument("sample_scan_plan: n_src must be >= 1");
  ScanPlan plan;
  plan.n_slices = n_slices;
  plan.n_sources = n_src;
  plan.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset(0.0, 360.0);
  plan.per_slice_offsets_deg.reserve(static_cast<std::size_t>(n_slices));
  for (int j = 0; j < n_slices; ++j) {
    double o = offset(rng);
    if (o >= 360.0) o = 0.0;
    plan.per_slice_offsets_deg.push_back(o);
  }
  return plan;
}

namespace {

double corner_detector_coordinate(double source_radius, double detector_radius, double angle_rad,
                                  double x, double y) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  const double along = x * c + y * s;    // toward the source
  const double lateral = -x * s + y * c;  // along the detector
  return (source_radius + detector_radius) * lateral / (source_radius - along);
}

}  // namespace

double detector_coordinate(const FanBeamGeometry& geom, int angle_index, double x, double y) {
  return corner_detector_coordinate(geom.source_radius(), geom.detector_radius(),
                                    geom.angle_rad(angle_index), x, y);
}

FanBeamGeometry build_fanbeam(const ImageGrid& grid, double source_radius, double detector_radius,
                              int n_det, double det_width, const std::vector<double>& angles_deg) {
  if (grid.n_x < 1 || grid.n_y < 1 || !(grid.pixel_size > 0.0))
    throw std::invalid_argument("build_fanbeam: invalid image grid");
  if (!(source_radius > grid.half_diagonal()))
    throw std::invalid_argument("build_fanbeam: source_radius must exceed half the grid diagonal");
  if (!(detector_radius > 0.0)) throw std::invalid_argument("build_fanbeam: detector_radius must be > 0");
  if (n_det < 1) throw std::invalid_argument("build_fanbeam: n_detector_bins must be >= 1");
  if (!(det_width > 0.0)) throw std::invalid_argument("build_fanbeam: detector width must be > 0");
  if (angles_deg.empty()) throw std::invalid_argument("build_fanbeam: at least one source angle required");

  FanBeamGeometry g;
  g.grid_ = grid;
  g.source_radius_ = source_radius;
  g.detector_radius_ = detector_radius;
  g.n_det_ = n_det;
  g.det_width_ = det_width;
  g.angles_deg_ = angles_deg;
  g.radians_.reserve(angles_deg.size());
  for (double a : angles_deg) {
    if (!(a >= 0.0 && a < 360.0)) {
      std::ostringstream msg;
      msg << "build_fanbeam: source angle " << a << " outside [0, 360)";
      throw std::invalid_argument(msg.str());
    }
    g.radians_.push_back(a * std::numbers::pi / 180.0);
  }

  const double hx = 0.5 * grid.extent_x(), hy = 0.5 * grid.extent_y();
  const double corners[4][2] = {{grid.origin_x - hx, grid.origin_y - hy},
                                {grid.origin_x + hx, grid.origin_y - hy},
                                {grid.origin_x + hx, grid.origin_y + hy},
                                {grid.origin_x - hx, grid.origin_y + hy}};
  const double half_width = 0.5 * det_width;
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    for (const auto& corner : corners) {
      const double t = corner_detector_coordinate(source_radius, detector_radius, g.radians_[i],
                                                  corner[0], corner[1]);
      if (std::abs(t) > half_width) {
        std::ostringstream msg;
        msg << "build_fanbeam: grid corner (" << corner[0] << ", " << corner[1]
            << ") mm projects to detector coordinate " << t << " mm at source angle "
            << angles_deg[i] << " deg, outside half-width " << half_width << " mm";
        throw std::invalid_argument(msg.str());
      }
    }
  }
  return g;
}

FanBeamGeometry default_fanbeam(const ImageGrid& grid, const std::vector<double>& angles_deg) {
  const double extent = std::max(grid.extent_x(), grid.extent_y());
  const double rs = 2.0 * extent;
  const double rd = 2.0 * extent;
  const int n_det = 2 * std::max(grid.n_x, grid.n_y);
  const double rc = grid.half_diagonal();
  // Widest detector footprint of a disc of radius rc over all source angles.
  const double t_max = (rs + rd) * rc / std::sqrt(rs * rs - rc * rc);
  return build_fanbeam(grid, rs, rd, n_det, 2.0 * 1.05 * t_max, angles_deg);
}

FanBeamGeometry FanBeamGeometry::with_angles(const std::vector<double>& angles_deg) const {
  return build_fanbeam(grid_, source_radius_, detector_radius_, n_det_, det_width_, angles_deg);
}

bool FanBeamGeometry::operator==(const FanBeamGeometry& other) const {
  return grid_ == other.grid_ && source_radius_ == other.source_radius_ &&
         detector_radius_ == other.detector_radius_ && n_det_ == other.n_det_ &&
         det_width_ == other.det_width_ && angles_deg_ == other.angles_deg_;
}

}  // namespace logrecon
