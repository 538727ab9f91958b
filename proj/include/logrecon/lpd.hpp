#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "logrecon/autodiff.hpp"
#include "logrecon/phantom.hpp"
#include "logrecon/projector.hpp"

namespace logrecon {

/// Learned Primal-Dual with C memory channels for both primal and dual state.
struct Lpd2dConfig {
  int n_iterations = 10;
  int memory_channels = 5;
  int conv_filters = 32;

  void validate() const;
};

/// Channel axis carries a window of neighbouring slices, each with its own geometry.
struct Lpd25dConfig {
  int n_iterations = 10;
  int n_slices = 3;
  TargetStrategy strategy = TargetStrategy::Last;
  int conv_filters = 32;

  void validate() const;
};

enum class LpdKind { Lpd2d, Lpd25d };

std::string to_string(LpdKind kind);
LpdKind parse_lpd_kind(const std::string& name);

/// Architecture plus learned parameters, the unit that is trained, saved and evaluated.
struct LpdModel {
  LpdKind kind = LpdKind::Lpd2d;
  int n_iterations = 10;
  int channels = 5;  // memory channels (2D) or window length (2.5D)
  TargetStrategy strategy = TargetStrategy::Last;
  int conv_filters = 32;
  // The network sees A / operator_norm and y / operator_norm.
  double operator_norm = 1.0;
  // Acquisition the model was built for; evaluation refuses anything else.
  ImageGrid grid;
  int n_sources = 0;
  int n_detector_bins = 0;
  ParameterSet params;

  Lpd2dConfig config_2d() const;
  Lpd25dConfig config_25d() const;
  int window() const { return kind == LpdKind::Lpd2d ? 1 : channels; }
  int output_channel() const;

  // Throws std::invalid_argument if the geometry differs in grid or sinogram shape.
  void check_geometry(const FanBeamGeometry& geom) const;
};

// Input/output channel counts of the per-iteration CNN stacks.
struct StackChannels {
  int dual_in, dual_out, primal_in, primal_out;
};
StackChannels stack_channels(const Lpd2dConfig& config);
StackChannels stack_channels(const Lpd25dConfig& config);

/// Operator norm estimate used to normalise A inside the network.
double lpd_operator_norm(const FanBeamGeometry& geom);

/// 2M stacks conv(in->F) PReLU conv(F->F) PReLU conv(F->out) with Kaiming
/// fan-in normal weights, zero biases and PReLU slopes of 0.25.
ParameterSet init_lpd2d(const Lpd2dConfig& config, const FanBeamGeometry& geom, std::uint64_t seed);
ParameterSet init_lpd25d(const Lpd25dConfig& config, const std::vector<FanBeamGeometry>& geoms, std::uint64_t seed);

LpdModel make_lpd2d(const Lpd2dConfig& config, const FanBeamGeometry& geom, std::uint64_t seed);
LpdModel make_lpd25d(const Lpd25dConfig& config, const FanBeamGeometry& geom, std::uint64_t seed);

using GeometryPtr = std::shared_ptr<const FanBeamGeometry>;

/// Differentiable unrolled forward pass. `sino` is [B, 1, n_src, n_det] (2D) or
/// [B, n, n_src, n_det] (2.5D) in raw line-integral units; `geoms` holds one
/// geometry per (batch, channel) plane of `sino`. Returns every primal channel
/// of the final iterate, [B, C or n, H, W].
Var lpd_unrolled(const LpdModel& model, const std::map<std::string, Var>& params, Var sino,
                 const std::vector<GeometryPtr>& geoms);

/// The reconstruction: primal channel 0 (2D) or the strategy's slice (2.5D), [B, 1, H, W].
Var lpd_output(const LpdModel& model, const std::map<std::string, Var>& params, Var sino,
               const std::vector<GeometryPtr>& geoms);

ImageSlice lpd2d_forward(const ParameterSet& params, const Sinogram& sino, const FanBeamGeometry& geom,
                         const Lpd2dConfig& config, double operator_norm);
ImageSlice lpd25d_forward(const ParameterSet& params, const std::vector<Sinogram>& sinos, const Lpd25dConfig& config,
                          double operator_norm);

/// Convenience wrapper: one reconstruction from a window of sinograms (length 1 for 2D).
ImageSlice lpd_reconstruct(const LpdModel& model, const std::vector<Sinogram>& window);

// Checkpoint tags <-> architecture.
CheckpointInfo model_checkpoint_info(const LpdModel& model, std::uint64_t seed);
void save_model(const std::string& path, const LpdModel& model, std::uint64_t seed);
LpdModel load_model(const std::string& path);

}  // namespace logrecon
