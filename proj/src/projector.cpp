#include "logrecon/projector.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "logrecon/parallel.hpp"

namespace logrecon {

ImageSlice::ImageSlice(const ImageGrid& g, std::vector<float> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size()) throw std::invalid_argument("ImageSlice: value count does not match grid");
}

Sinogram::Sinogram(const FanBeamGeometry& g, std::vector<float> v) : geometry(g), values(std::move(v)) {
  if (values.size() != geometry.sinogram_size())
    throw std::invalid_argument("Sinogram: value count does not match geometry");
}

namespace {

// Visits every (pixel, weight) pair of the Joseph stencil of one ray. The ray is
// sampled once per pixel column (or row, whichever axis it runs closer to) and
// linearly interpolated between the two neighbouring pixels across it; pixels
// outside the grid count as zero.
template <typename Visitor>
void trace_ray(const FanBeamGeometry& geom, int angle, int bin, Visitor&& visit) {
  const ImageGrid& grid = geom.grid();
  const double beta = geom.angle_rad(angle);
  const double c = std::cos(beta), s = std::sin(beta);
  const double sx = geom.source_radius() * c, sy = geom.source_radius() * s;
  const double t = geom.bin_offset(bin);
  const double dx = -geom.detector_radius() * c - t * s;
  const double dy = -geom.detector_radius() * s + t * c;
  const double rx = dx - sx, ry = dy - sy;
  const double len = std::hypot(rx, ry);
  const double ps = grid.pixel_size;

  if (std::abs(rx) >= std::abs(ry)) {
    const double step = ps * len / std::abs(rx);
    for (int ix = 0; ix < grid.n_x; ++ix) {
      const double x = grid.x_center(ix);
      const double lambda = (x - sx) / rx;
      if (lambda < 0.0 || lambda > 1.0) continue;
      const double fy = (sy + lambda * ry - grid.origin_y) / ps + 0.5 * (grid.n_y - 1);
      const double fl = std::floor(fy);
      const int iy = static_cast<int>(fl);
      const double w = fy - fl;
      if (iy >= 0 && iy < grid.n_y) visit(static_cast<std::size_t>(iy) * grid.n_x + ix, (1.0 - w) * step);
      if (iy + 1 >= 0 && iy + 1 < grid.n_y && w > 0.0)
        visit(static_cast<std::size_t>(iy + 1) * grid.n_x + ix, w * step);
    }
  } else {
    const double step = ps * len / std::abs(ry);
    for (int iy = 0; iy < grid.n_y; ++iy) {
      const double y = grid.y_center(iy);
      const double lambda = (y - sy) / ry;
      if (lambda < 0.0 || lambda > 1.0) continue;
      const double fx = (sx + lambda * rx - grid.origin_x) / ps + 0.5 * (grid.n_x - 1);
      const double fl = std::floor(fx);
      const int ix = static_cast<int>(fl);
      const double w = fx - fl;
      const std::size_t row = static_cast<std::size_t>(iy) * grid.n_x;
      if (ix >= 0 && ix < grid.n_x) visit(row + ix, (1.0 - w) * step);
      if (ix + 1 >= 0 && ix + 1 < grid.n_x && w > 0.0) visit(row + ix + 1, w * step);
    }
  }
}

}  // namespace

namespace {

template <typename T>
void forward_impl(std::span<const T> image, const FanBeamGeometry& geom, std::span<T> sino) {
  if (image.size() != geom.grid().size()) throw std::invalid_argument("forward_project: image does not match geometry grid");
  if (sino.size() != geom.sinogram_size()) throw std::invalid_argument("forward_project: sinogram size mismatch");
  const int n_det = geom.n_detector_bins();
  parallel_chunks(static_cast<std::size_t>(geom.n_sources()), [&](std::size_t a0, std::size_t a1, std::size_t) {
    for (std::size_t a = a0; a < a1; ++a) {
      for (int k = 0; k < n_det; ++k) {
        double sum = 0.0;
        trace_ray(geom, static_cast<int>(a), k, [&](std::size_t p, double w) { sum += w * image[p]; });
        sino[a * n_det + k] = static_cast<T>(sum);
      }
    }
  });
}

// Per-chunk partial images are reduced in chunk order, so the result only
// depends on the worker count.
template <typename T>
void back_impl(std::span<const T> sino, const FanBeamGeometry& geom, std::span<T> image) {
  if (image.size() != geom.grid().size()) throw std::invalid_argument("back_project: image does not match geometry grid");
  if (sino.size() != geom.sinogram_size()) throw std::invalid_argument("back_project: sinogram size mismatch");
  const std::size_t n_src = static_cast<std::size_t>(geom.n_sources());
  const int n_det = geom.n_detector_bins();
  const std::size_t chunks = chunk_count(n_src);
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(image.size(), 0.0));
  parallel_chunks(n_src, [&](std::size_t a0, std::size_t a1, std::size_t chunk) {
    auto& acc = partial[chunk];
    for (std::size_t a = a0; a < a1; ++a) {
      for (int k = 0; k < n_det; ++k) {
        const double v = sino[a * n_det + k];
        if (v == 0.0) continue;
        trace_ray(geom, static_cast<int>(a), k, [&](std::size_t p, double w) { acc[p] += w * v; });
      }
    }
  });
  for (std::size_t p = 0; p < image.size(); ++p) {
    double sum = 0.0;
    for (const auto& acc : partial) sum += acc[p];
    image[p] = static_cast<T>(sum);
  }
}

}  // namespace

void forward_project(std::span<const float> image, const FanBeamGeometry& geom, std::span<float> sino) {
  forward_impl(image, geom, sino);
}

void forward_project(std::span<const double> image, const FanBeamGeometry& geom, std::span<double> sino) {
  forward_impl(image, geom, sino);
}

void back_project(std::span<const float> sino, const FanBeamGeometry& geom, std::span<float> image) {
  back_impl(sino, geom, image);
}

void back_project(std::span<const double> sino, const FanBeamGeometry& geom, std::span<double> image) {
  back_impl(sino, geom, image);
}

Sinogram forward_project(const ImageSlice& image, const FanBeamGeometry& geom) {
  if (!(image.grid == geom.grid())) throw std::invalid_argument("forward_project: image grid does not match geometry");
  Sinogram out(geom);
  forward_project(image.values, geom, out.values);
  return out;
}

ImageSlice back_project(const Sinogram& sino, const FanBeamGeometry& geom) {
  if (sino.values.size() != geom.sinogram_size())
    throw std::invalid_argument("back_project: sinogram shape does not match geometry");
  ImageSlice out(geom.grid());
  back_project(sino.values, geom, out.values);
  return out;
}

FbpFilter parse_fbp_filter(const std::string& name) {
  if (name == "ram-lak" || name == "ramlak") return FbpFilter::RamLak;
  if (name == "hann") return FbpFilter::Hann;
  throw std::invalid_argument("unknown FBP filter '" + name + "' (expected ram-lak or hann)");
}

namespace {

// Frequency response of the band-limited ramp with spacing ds, padded to n_fft.
std::vector<double> ramp_response(int n_fft, double ds, FbpFilter filter, double cutoff) {
  std::vector<double> kernel(static_cast<std::size_t>(n_fft), 0.0);
  const int half = n_fft / 2;
  for (int i = 0; i < n_fft; ++i) {
    const int n = i <= half ? i : i - n_fft;
    if (n == 0) {
      kernel[static_cast<std::size_t>(i)] = 1.0 / (4.0 * ds * ds);
    } else if (n % 2 != 0) {
      kernel[static_cast<std::size_t>(i)] = -1.0 / (n * n * std::numbers::pi * std::numbers::pi * ds * ds);
    }
  }
  const int n_freq = n_fft / 2 + 1;
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(n_freq));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n_fft, kernel.data(),
                                        reinterpret_cast<fftw_complex*>(spectrum.data()), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  std::vector<double> response(static_cast<std::size_t>(n_freq));
  for (int f = 0; f < n_freq; ++f) {
    const double nu = static_cast<double>(f) / (n_fft / 2);  // 1 at Nyquist
    double window = 1.0;
    if (nu > cutoff) {
      window = 0.0;
    } else if (filter == FbpFilter::Hann) {
      window = 0.5 * (1.0 + std::cos(std::numbers::pi * nu / cutoff));
    }
    // Real part: the spatial kernel is symmetric.
    response[static_cast<std::size_t>(f)] = spectrum[static_cast<std::size_t>(f)].real() * window;
  }
  return response;
}

}  // namespace

ImageSlice fbp_reconstruct(const Sinogram& sino, const FanBeamGeometry& geom, FbpFilter filter, double cutoff) {
  if (sino.values.size() != geom.sinogram_size())
    throw std::invalid_argument("fbp_reconstruct: sinogram shape does not match geometry");
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw std::invalid_argument("fbp_reconstruct: cutoff must lie in (0, 1]");
  const int n_src = geom.n_sources();
  if (n_src < 2)
    std::cerr << "warning: fbp_reconstruct with " << n_src << " source angle(s); result is not meaningful\n";

  const int n_det = geom.n_detector_bins();
  const double rs = geom.source_radius();
  const double magnification = (rs + geom.detector_radius()) / rs;
  const double ds = geom.bin_width() / magnification;  // bin spacing at the rotation axis

  int n_fft = 1;
  while (n_fft < 2 * n_det) n_fft *= 2;
  const std::vector<double> response = ramp_response(n_fft, ds, filter, cutoff);
  const int n_freq = n_fft / 2 + 1;

  std::vector<double> line(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n_freq));
  fftw_plan fwd = fftw_plan_dft_r2c_1d(n_fft, line.data(), reinterpret_cast<fftw_complex*>(spec.data()),
                                       FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(n_fft, reinterpret_cast<fftw_complex*>(spec.data()), line.data(),
                                       FFTW_ESTIMATE);

  std::vector<double> filtered(static_cast<std::size_t>(n_src) * n_det);
  for (int a = 0; a < n_src; ++a) {
    std::fill(line.begin(), line.end(), 0.0);
    for (int k = 0; k < n_det; ++k) {
      const double s = geom.bin_offset(k) / magnification;
      line[static_cast<std::size_t>(k)] = sino.at(a, k) * rs / std::sqrt(rs * rs + s * s);
    }
    fftw_execute(fwd);
    for (int f = 0; f < n_freq; ++f) spec[static_cast<std::size_t>(f)] *= response[static_cast<std::size_t>(f)];
    fftw_execute(inv);
    // c2r is unnormalised; ds converts the discrete convolution to an integral.
    for (int k = 0; k < n_det; ++k)
      filtered[static_cast<std::size_t>(a) * n_det + k] = line[static_cast<std::size_t>(k)] * ds / n_fft;
  }
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);

  const ImageGrid& grid = geom.grid();
  ImageSlice out(grid);
  const double d_beta = 2.0 * std::numbers::pi / n_src;
  for (int iy = 0; iy < grid.n_y; ++iy) {
    const double y = grid.y_center(iy);
    for (int ix = 0; ix < grid.n_x; ++ix) {
      const double x = grid.x_center(ix);
      double sum = 0.0;
      for (int a = 0; a < n_src; ++a) {
        const double beta = geom.angle_rad(a);
        const double c = std::cos(beta), s = std::sin(beta);
        const double depth = rs - (x * c + y * s);
        const double u = depth / rs;
        const double s_axis = rs * (-x * s + y * c) / depth;
        const double fk = s_axis / ds + 0.5 * (n_det - 1);
        const double fl = std::floor(fk);
        const int k = static_cast<int>(fl);
        const double w = fk - fl;
        double q = 0.0;
        const double* row = &filtered[static_cast<std::size_t>(a) * n_det];
        if (k >= 0 && k < n_det) q += (1.0 - w) * row[k];
        if (k + 1 >= 0 && k + 1 < n_det) q += w * row[k + 1];
        sum += q / (u * u);
      }
      out.at(iy, ix) = static_cast<float>(0.5 * d_beta * sum);
    }
  }
  return out;
}

DenseMatrix dense_system_matrix(const FanBeamGeometry& geom) {
  const std::size_t rows = geom.sinogram_size();
  const std::size_t cols = geom.grid().size();
  if (rows * cols > kDenseMatrixLimit)
    throw std::length_error("dense_system_matrix: " + std::to_string(rows) + " x " + std::to_string(cols) +
                            " exceeds the dense size limit");
  DenseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.assign(rows * cols, 0.0);
  const int n_det = geom.n_detector_bins();
  for (int a = 0; a < geom.n_sources(); ++a) {
    for (int k = 0; k < n_det; ++k) {
      const std::size_t r = static_cast<std::size_t>(a) * n_det + k;
      trace_ray(geom, a, k, [&](std::size_t p, double w) { m.data[r * cols + p] += w; });
    }
  }
  return m;
}

}  // namespace logrecon
