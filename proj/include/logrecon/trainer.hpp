#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "logrecon/lpd.hpp"
#include "logrecon/phantom.hpp"
#include "logrecon/projector.hpp"
#include "logrecon/variational.hpp"

namespace logrecon {

struct TrainConfig {
  std::int64_t total_iterations = 2000;
  int batch_size = 4;
  double lr0 = 1e-5;
  double lr_min = 0.0;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 500;
  std::int64_t validation_every = 250;
  std::int64_t log_every = 10;
  // Best-validation parameters go here; the latest periodic snapshot to "<path>.last".
  // Empty disables checkpointing.
  std::string checkpoint_path;

  void validate() const;
};

struct TrainStep {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct ValidationStep {
  std::int64_t iteration = 0;
  double mean_psnr = 0.0;
};

struct TrainHistory {
  std::vector<TrainStep> steps;
  std::vector<ValidationStep> validation;
  std::int64_t best_iteration = 0;
  double best_psnr = 0.0;
};

struct TrainResult {
  LpdModel model;  // best-validation parameters (final ones without validation data)
  TrainHistory history;
};

/// Adam on shuffled minibatches of windows with the cosine schedule, minimising
/// the mean squared error between the network output and each window's target
/// slice. Deterministic for a given (model, datasets, config). Throws
/// std::runtime_error on a non-finite loss; checkpoint files already on disk stay.
TrainResult train(const LpdModel& init, const std::vector<SliceDataset>& train_sets,
                  const std::vector<SliceDataset>& val_sets, const TrainConfig& tc);

/// Mean of the first and of the last `k` logged losses.
std::pair<double, double> loss_head_tail(const TrainHistory& history, std::size_t k);

void write_history_csv(const std::string& path, const TrainHistory& history);

/// Window of `length` sinograms for target slice z, clamped at the ends of the
/// log so every slice can be reconstructed.
std::vector<Sinogram> clamped_window(const SliceDataset& data, int z, int length, TargetStrategy strategy);

/// Mean PSNR of a model over every slice of the given datasets.
double mean_validation_psnr(const LpdModel& model, const std::vector<SliceDataset>& sets);

struct SweepConfig {
  std::vector<int> source_counts{5, 9};
  std::vector<int> window_sizes{3};
  std::vector<TargetStrategy> strategies{TargetStrategy::Last};
  std::uint64_t plan_seed = 0;
  double noise_sigma = 0.0;
  bool include_tv = true;
  TVConfig tv;
  FbpFilter fbp_filter = FbpFilter::Hann;
  double fbp_cutoff = 1.0;
};

/// Reconstruction of every slice of a simulated log with "fbp", "tv", or the
/// given model ("lpd2d"/"lpd25d", windows clamped at the ends).
std::vector<ImageSlice> reconstruct_log(const std::string& method, const SliceDataset& data, const LpdModel* model,
                                        const SweepConfig& config);

struct SweepRow {
  int n_sources = 0;
  int window = 1;
  TargetStrategy strategy = TargetStrategy::Last;
  std::string method;
  bool present = false;  // false when no checkpoint matches the cell
  double psnr = 0.0;
  double ssim = 0.0;
  int n_slices = 0;
};

/// Every (source count, window, strategy, method) cell: mean PSNR and SSIM over
/// all slices of all test volumes. Checkpoints are matched to cells by their
/// architecture tags; cells without one are reported absent.
std::vector<SweepRow> evaluate_sweep(const std::vector<std::string>& checkpoints,
                                     const std::vector<LogPhantom>& volumes, const SweepConfig& config);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace logrecon
