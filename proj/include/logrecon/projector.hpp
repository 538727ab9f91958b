#pragma once

#include <span>
#include <string>
#include <vector>

#include "logrecon/geometry.hpp"

namespace logrecon {

/// Attenuation image on a grid, row-major with rows along y.
struct ImageSlice {
  ImageGrid grid;
  std::vector<float> values;

  ImageSlice() = default;
  explicit ImageSlice(const ImageGrid& g) : grid(g), values(g.size(), 0.0f) {}
  ImageSlice(const ImageGrid& g, std::vector<float> v);

  float& at(int iy, int ix) { return values[static_cast<std::size_t>(iy) * grid.n_x + ix]; }
  float at(int iy, int ix) const { return values[static_cast<std::size_t>(iy) * grid.n_x + ix]; }
};

/// Line integrals indexed [source angle][detector bin].
struct Sinogram {
  FanBeamGeometry geometry;
  std::vector<float> values;

  Sinogram() = default;
  explicit Sinogram(const FanBeamGeometry& g) : geometry(g), values(g.sinogram_size(), 0.0f) {}
  Sinogram(const FanBeamGeometry& g, std::vector<float> v);

  float& at(int angle, int bin) {
    return values[static_cast<std::size_t>(angle) * geometry.n_detector_bins() + bin];
  }
  float at(int angle, int bin) const {
    return values[static_cast<std::size_t>(angle) * geometry.n_detector_bins() + bin];
  }
};

// Raw-buffer forms used by the autodiff node; sizes must match the geometry.
void forward_project(std::span<const float> image, const FanBeamGeometry& geom, std::span<float> sino);
void back_project(std::span<const float> sino, const FanBeamGeometry& geom, std::span<float> image);
// Double-precision variants for the iterative solvers.
void forward_project(std::span<const double> image, const FanBeamGeometry& geom, std::span<double> sino);
void back_project(std::span<const double> sino, const FanBeamGeometry& geom, std::span<double> image);

/// Joseph-interpolated fan-beam ray transform.
Sinogram forward_project(const ImageSlice& image, const FanBeamGeometry& geom);

/// Exact transpose of forward_project on the same discretisation.
ImageSlice back_project(const Sinogram& sino, const FanBeamGeometry& geom);

enum class FbpFilter { RamLak, Hann };

FbpFilter parse_fbp_filter(const std::string& name);

/// Fan-beam filtered back-projection for a full 360 degree scan: cosine
/// pre-weighting, FFT ramp filter (optionally Hann-apodised) and distance-weighted
/// back-projection. Fewer than two source angles prints a warning and still returns.
ImageSlice fbp_reconstruct(const Sinogram& sino, const FanBeamGeometry& geom,
                           FbpFilter filter = FbpFilter::RamLak, double cutoff = 1.0);

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline constexpr std::size_t kDenseMatrixLimit = 10'000'000;

/// Explicit system matrix (n_src*n_det) x (n_x*n_y), assembled ray by ray.
/// Refuses with std::length_error beyond kDenseMatrixLimit entries.
DenseMatrix dense_system_matrix(const FanBeamGeometry& geom);

}  // namespace logrecon
