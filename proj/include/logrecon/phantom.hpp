#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "logrecon/geometry.hpp"
#include "logrecon/projector.hpp"

namespace logrecon {

/// A group of knots leaving the pith at roughly the same height.
struct KnotWhorl {
  int z_start = 0;
  int z_extent = 1;
  std::vector<double> azimuths_deg;  // one per knot
  double cone_half_angle_deg = 8.0;
  double max_radial_reach = 0.85;  // fraction of the local outer radius

  int n_knots() const { return static_cast<int>(azimuths_deg.size()); }
};

struct Attenuations {
  double background = 0.0;
  double heartwood = 0.40;
  double sapwood = 0.55;
  double knot = 0.75;
};

/// Outer boundary: radius tapering linearly along the log, perturbed by low-order
/// angular Fourier terms whose coefficients vary smoothly between control slices.
struct RadiusProfile {
  double base_mm = 26.0;
  double taper_mm_per_slice = -0.02;
  double roughness = 0.04;        // relative amplitude of the Fourier perturbation
  int roughness_order = 4;        // highest angular order
  double axial_correlation = 16;  // slices between random control points
};

struct LogPhantomSpec {
  int n_slices = 64;
  ImageGrid grid{64, 64, 1.0};
  double slice_spacing_mm = 2.0;
  RadiusProfile outer_radius;
  std::array<double, 2> pith_offset_mm{0.0, 0.0};
  double heartwood_fraction = 0.6;
  Attenuations attenuations;
  double growth_ring_period_mm = 3.0;
  double growth_ring_amplitude = 0.05;
  std::vector<KnotWhorl> whorls;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on a violated invariant.
  void validate() const;

  // Outer radius (mm) of slice z at polar angle phi about the grid centre.
  double outer_radius_mm(int z, double phi) const;
  double mean_radius_mm(int z) const;
};

/// Random but reproducible spec: whorls spaced along the log with random knot
/// azimuths, pith offset and bark roughness drawn from the seed.
LogPhantomSpec random_log_spec(const ImageGrid& grid, int n_slices, std::uint64_t seed);

/// Volumes indexed [slice][y][x].
struct LogPhantom {
  ImageGrid grid;
  int n_slices = 0;
  std::vector<float> volume;
  std::vector<std::uint8_t> knot_labels;
  std::vector<int> whorl_starts;
  std::vector<std::pair<int, int>> knot_groups;  // [z_start, z_end) per whorl

  ImageSlice slice(int z) const;
  std::vector<std::uint8_t> label_slice(int z) const;
  std::size_t slice_size() const { return grid.size(); }
};

LogPhantom generate_log_phantom(const LogPhantomSpec& spec);

enum class TargetStrategy { Last, Middle };

TargetStrategy parse_strategy(const std::string& name);
std::string to_string(TargetStrategy s);
int target_index(int window, TargetStrategy s);

/// Simulated sinograms for every slice of one log, plus the enumeration of all
/// contiguous windows of `window` slices.
class SliceDataset {
 public:
  struct Entry {
    int window_start = 0;
    int target_index = 0;  // within the window
  };

  SliceDataset() = default;
  SliceDataset(std::string log_id, std::vector<ImageSlice> slices, std::vector<Sinogram> sinograms, ScanPlan plan,
               int window, TargetStrategy strategy);

  const std::string& log_id() const { return log_id_; }
  int window() const { return window_; }
  TargetStrategy strategy() const { return strategy_; }
  const ScanPlan& plan() const { return plan_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  int n_slices() const { return static_cast<int>(slices_.size()); }

  const ImageSlice& slice(int z) const { return slices_.at(static_cast<std::size_t>(z)); }
  const Sinogram& sinogram(int z) const { return sinograms_.at(static_cast<std::size_t>(z)); }
  std::vector<ImageSlice> slice_window(std::size_t entry) const;
  std::vector<Sinogram> sinogram_window(std::size_t entry) const;
  // Absolute slice index of the reconstruction target of an entry.
  int target_slice(std::size_t entry) const;

 private:
  std::string log_id_;
  std::vector<ImageSlice> slices_;
  std::vector<Sinogram> sinograms_;
  ScanPlan plan_;
  int window_ = 1;
  TargetStrategy strategy_ = TargetStrategy::Last;
  std::vector<Entry> entries_;
};

/// y_j = A_j x_j + e_j for every slice, A_j using slice j's offset from the plan
/// and e_j i.i.d. Gaussian (noise_sigma = 0 gives exact projections).
SliceDataset simulate_dataset(const LogPhantom& phantom, const ScanPlan& plan, const FanBeamGeometry& geom_template,
                              int window, TargetStrategy strategy, double noise_sigma, std::string log_id = "log");

struct LogSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Whole-log partition by largest-remainder rounding of the ratios after a
/// seeded shuffle; every bucket with a nonzero ratio receives at least one log.
LogSplit split_logs(const std::vector<std::string>& log_ids, std::array<double, 3> ratios, std::uint64_t seed);

}  // namespace logrecon
