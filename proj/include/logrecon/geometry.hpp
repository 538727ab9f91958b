#pragma once

#include <cstdint>
#include <vector>

namespace logrecon {

/// Square-pixel reconstruction grid centred on the rotation axis.
struct ImageGrid {
  int n_x = 1;
  int n_y = 1;
  double pixel_size = 1.0;  // mm
  double origin_x = 0.0;    // mm, position of the grid centre
  double origin_y = 0.0;

  ImageGrid() = default;
  ImageGrid(int nx, int ny, double pixel_mm, double ox = 0.0, double oy = 0.0);

  std::size_t size() const { return static_cast<std::size_t>(n_x) * n_y; }
  double extent_x() const { return n_x * pixel_size; }
  double extent_y() const { return n_y * pixel_size; }
  double half_diagonal() const;

  // Pixel-centre coordinates in mm. Row index grows with y.
  double x_center(int ix) const { return origin_x + (ix - 0.5 * (n_x - 1)) * pixel_size; }
  double y_center(int iy) const { return origin_y + (iy - 0.5 * (n_y - 1)) * pixel_size; }

  bool operator==(const ImageGrid&) const = default;
};

/// Fan-beam acquisition with a flat detector opposite the source.
///
/// For a source angle b (degrees), the source sits at source_radius * (cos b, sin b)
/// and the detector centre at -detector_radius * (cos b, sin b). Detector bins are
/// laid out along (-sin b, cos b) with bin k centred at (k - (n-1)/2) * bin_width().
class FanBeamGeometry {
 public:
  FanBeamGeometry() = default;

  const ImageGrid& grid() const { return grid_; }
  double source_radius() const { return source_radius_; }
  double detector_radius() const { return detector_radius_; }
  int n_detector_bins() const { return n_det_; }
  double detector_width() const { return det_width_; }
  const std::vector<double>& source_angles_deg() const { return angles_deg_; }
  int n_sources() const { return static_cast<int>(angles_deg_.size()); }
  std::size_t sinogram_size() const { return static_cast<std::size_t>(n_sources()) * n_det_; }

  double bin_width() const { return det_width_ / n_det_; }
  double bin_offset(int k) const { return (k - 0.5 * (n_det_ - 1)) * bin_width(); }
  // Radians for angle index i; the only degree to radian conversion point.
  double angle_rad(int i) const { return radians_[static_cast<std::size_t>(i)]; }

  // Same detector/source layout, different source angles.
  FanBeamGeometry with_angles(const std::vector<double>& angles_deg) const;

  bool operator==(const FanBeamGeometry& other) const;

  friend FanBeamGeometry build_fanbeam(const ImageGrid&, double, double, int, double,
                                       const std::vector<double>&);

 private:
  ImageGrid grid_;
  double source_radius_ = 0.0;
  double detector_radius_ = 0.0;
  int n_det_ = 0;
  double det_width_ = 0.0;
  std::vector<double> angles_deg_;
  std::vector<double> radians_;
};

/// Per-slice source-angle offsets for a sequential scan.
struct ScanPlan {
  int n_slices = 0;
  int n_sources = 0;
  std::vector<double> per_slice_offsets_deg;
  std::uint64_t seed = 0;

  std::vector<double> slice_angles(int slice) const;
};

std::vector<double> equispaced_source_angles(int n_src, double offset_deg);

ScanPlan sample_scan_plan(int n_slices, int n_src, std::uint64_t seed);

/// Validates the coverage invariant: every grid corner must project onto the
/// detector for every source angle. Throws std::invalid_argument naming the
/// offending corner and angle otherwise.
FanBeamGeometry build_fanbeam(const ImageGrid& grid, double source_radius, double detector_radius,
                              int n_det, double det_width, const std::vector<double>& angles_deg);

/// Defaults used across the tools: both radii at twice the grid extent, two
/// detector bins per grid pixel, width sized to cover the grid at any angle
/// with a 5% margin.
FanBeamGeometry default_fanbeam(const ImageGrid& grid, const std::vector<double>& angles_deg);

// Detector coordinate (mm along the flat detector) hit by the ray through (x, y).
double detector_coordinate(const FanBeamGeometry& geom, int angle_index, double x, double y);

}  // namespace logrecon
