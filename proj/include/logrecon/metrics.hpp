#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "logrecon/projector.hpp"

namespace logrecon {

using Mask = std::vector<std::uint8_t>;

/// 10 log10(range^2 / MSE); +infinity when the images are identical. A missing
/// data_range means max(ref) - min(ref).
double psnr(std::span<const float> x, std::span<const float> ref, std::optional<double> data_range = std::nullopt);
double psnr(const ImageSlice& x, const ImageSlice& ref, std::optional<double> data_range = std::nullopt);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::optional<double> data_range;
};

/// Mean SSIM over every position where the Gaussian window fits entirely.
double ssim(const ImageSlice& x, const ImageSlice& ref, const SsimOptions& opts = {});

/// 2|a & b| / (|a| + |b|), with two empty masks scoring 1.
double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Slices [z_start, z_end) of one knot whorl.
struct KnotGroup {
  int z_start = 0;
  int z_end = 0;

  int length() const { return z_end - z_start; }
  // Start/End cover round-half-up(20%) of the slices each, Mid the rest.
  int start_count() const;
  int end_count() const;
  int mid_count() const { return length() - start_count() - end_count(); }
};

inline constexpr int kProfilePoints = 101;

struct DiceProfile {
  std::vector<double> r;  // normalised axial distance, kProfilePoints samples on [0, 1]
  std::vector<double> mean;
  std::vector<double> std;
};

struct KnotGroupReport {
  double start = 0.0;
  double mid = 0.0;
  double end = 0.0;
  double total = 0.0;
  double bulk = 0.0;  // one Dice over the whole volume
  DiceProfile profile;
  std::vector<std::vector<double>> slice_scores;  // per group
};

/// Slice-wise Dice inside each group, region means weighting every slice
/// equally, whole-volume Dice and the interpolated mean/std profile.
/// Volumes are [slice][y][x] with `slice_size` voxels per slice.
KnotGroupReport knot_group_analysis(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                    std::size_t slice_size, const std::vector<KnotGroup>& groups);

/// Pixels above `threshold`, minus 4-connected components smaller than
/// `min_component_px`.
Mask threshold_segment(const ImageSlice& image, double threshold, int min_component_px);

}  // namespace logrecon
