#include "logrecon/lpd.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "logrecon/variational.hpp"

namespace logrecon {

void Lpd2dConfig::validate() const {
  if (n_iterations < 1) throw std::invalid_argument("Lpd2dConfig: n_iterations must be >= 1");
  if (memory_channels < 1) throw std::invalid_argument("Lpd2dConfig: memory_channels must be >= 1");
  if (conv_filters < 1) throw std::invalid_argument("Lpd2dConfig: conv_filters must be >= 1");
}

void Lpd25dConfig::validate() const {
  if (n_iterations < 1) throw std::invalid_argument("Lpd25dConfig: n_iterations must be >= 1");
  if (n_slices < 1) throw std::invalid_argument("Lpd25dConfig: n_slices must be >= 1");
  if (strategy == TargetStrategy::Middle && n_slices % 2 == 0)
    throw std::invalid_argument("Lpd25dConfig: the middle strategy needs an odd window");
  if (conv_filters < 1) throw std::invalid_argument("Lpd25dConfig: conv_filters must be >= 1");
}

std::string to_string(LpdKind kind) { return kind == LpdKind::Lpd2d ? "lpd2d" : "lpd25d"; }

LpdKind parse_lpd_kind(const std::string& name) {
  if (name == "lpd2d") return LpdKind::Lpd2d;
  if (name == "lpd25d") return LpdKind::Lpd25d;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

Lpd2dConfig LpdModel::config_2d() const { return {n_iterations, channels, conv_filters}; }
Lpd25dConfig LpdModel::config_25d() const { return {n_iterations, channels, strategy, conv_filters}; }

int LpdModel::output_channel() const {
  return kind == LpdKind::Lpd2d ? 0 : target_index(channels, strategy);
}

void LpdModel::check_geometry(const FanBeamGeometry& geom) const {
  if (!(geom.grid() == grid) || geom.n_sources() != n_sources || geom.n_detector_bins() != n_detector_bins)
    throw std::invalid_argument("model was built for a " + std::to_string(grid.n_x) + "x" + std::to_string(grid.n_y) +
                                " grid with " + std::to_string(n_sources) + " sources and " +
                                std::to_string(n_detector_bins) + " detector bins; geometry does not match");
}

StackChannels stack_channels(const Lpd2dConfig& c) {
  return {c.memory_channels + 2, c.memory_channels, c.memory_channels + 1, c.memory_channels};
}

StackChannels stack_channels(const Lpd25dConfig& c) { return {3 * c.n_slices, c.n_slices, 2 * c.n_slices, c.n_slices}; }

double lpd_operator_norm(const FanBeamGeometry& geom) { return opnorm_power_iteration(geom, 50, 0); }

namespace {

std::string stack_name(const char* domain, int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s.%02d", domain, k);
  return buf;
}

void add_stack(ParameterSet& params, const std::string& prefix, int in, int filters, int out, std::mt19937_64& rng) {
  auto conv = [&](const std::string& name, int cin, int cout) {
    const double sd = std::sqrt(2.0 / (cin * kConvKernel * kConvKernel));
    std::normal_distribution<double> normal(0.0, sd);
    Tensor w({cout, cin, kConvKernel, kConvKernel});
    for (Real& v : w.data) v = static_cast<Real>(normal(rng));
    params.add(prefix + "." + name + ".weight", std::move(w));
    params.add(prefix + "." + name + ".bias", Tensor({cout}));
  };
  conv("conv0", in, filters);
  params.add(prefix + ".prelu0.slope", Tensor({filters}, 0.25f));
  conv("conv1", filters, filters);
  params.add(prefix + ".prelu1.slope", Tensor({filters}, 0.25f));
  conv("conv2", filters, out);
}

ParameterSet init_stacks(int iterations, const StackChannels& ch, int filters, std::uint64_t seed) {
  ParameterSet params;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < iterations; ++k) {
    add_stack(params, stack_name("dual", k), ch.dual_in, filters, ch.dual_out, rng);
    add_stack(params, stack_name("primal", k), ch.primal_in, filters, ch.primal_out, rng);
  }
  return params;
}

Var apply_stack(const std::map<std::string, Var>& p, const std::string& prefix, Var input) {
  auto get = [&](const std::string& name) -> Var {
    auto it = p.find(prefix + "." + name);
    if (it == p.end()) throw std::invalid_argument("missing parameter '" + prefix + "." + name + "'");
    return it->second;
  };
  Var h = prelu(conv2d(input, get("conv0.weight"), get("conv0.bias")), get("prelu0.slope"));
  h = prelu(conv2d(h, get("conv1.weight"), get("conv1.bias")), get("prelu1.slope"));
  return conv2d(h, get("conv2.weight"), get("conv2.bias"));
}

LpdModel make_model(LpdKind kind, int iterations, int channels, TargetStrategy strategy, int filters,
                    const FanBeamGeometry& geom) {
  LpdModel m;
  m.kind = kind;
  m.n_iterations = iterations;
  m.channels = channels;
  m.strategy = strategy;
  m.conv_filters = filters;
  m.operator_norm = lpd_operator_norm(geom);
  m.grid = geom.grid();
  m.n_sources = geom.n_sources();
  m.n_detector_bins = geom.n_detector_bins();
  return m;
}

}  // namespace

ParameterSet init_lpd2d(const Lpd2dConfig& config, const FanBeamGeometry& /*geom*/, std::uint64_t seed) {
  config.validate();
  return init_stacks(config.n_iterations, stack_channels(config), config.conv_filters, seed);
}

ParameterSet init_lpd25d(const Lpd25dConfig& config, const std::vector<FanBeamGeometry>& geoms, std::uint64_t seed) {
  config.validate();
  if (!geoms.empty() && static_cast<int>(geoms.size()) != config.n_slices)
    throw std::invalid_argument("init_lpd25d: expected one geometry per window slice");
  return init_stacks(config.n_iterations, stack_channels(config), config.conv_filters, seed);
}

LpdModel make_lpd2d(const Lpd2dConfig& config, const FanBeamGeometry& geom, std::uint64_t seed) {
  LpdModel m = make_model(LpdKind::Lpd2d, config.n_iterations, config.memory_channels, TargetStrategy::Last,
                          config.conv_filters, geom);
  m.params = init_lpd2d(config, geom, seed);
  return m;
}

LpdModel make_lpd25d(const Lpd25dConfig& config, const FanBeamGeometry& geom, std::uint64_t seed) {
  LpdModel m = make_model(LpdKind::Lpd25d, config.n_iterations, config.n_slices, config.strategy,
                          config.conv_filters, geom);
  m.params = init_lpd25d(config, {}, seed);
  return m;
}

Var lpd_unrolled(const LpdModel& model, const std::map<std::string, Var>& params, Var sino,
                 const std::vector<GeometryPtr>& geoms) {
  const Tensor& y = sino.value();
  if (y.ndim() != 4) throw std::invalid_argument("lpd: sinogram batch must be [B, C, n_src, n_det]");
  const int batch = y.dim(0);
  const int n = model.channels;
  const int data_channels = model.kind == LpdKind::Lpd2d ? 1 : n;
  if (y.dim(1) != data_channels)
    throw std::invalid_argument("lpd: expected " + std::to_string(data_channels) + " sinogram channels, got " +
                                std::to_string(y.dim(1)));
  if (geoms.size() != static_cast<std::size_t>(batch * data_channels))
    throw std::invalid_argument("lpd: need one geometry per sinogram plane");
  for (const auto& g : geoms) model.check_geometry(*g);
  if (y.dim(2) != model.n_sources || y.dim(3) != model.n_detector_bins)
    throw std::invalid_argument("lpd: sinogram shape does not match the model geometry");

  Tape& tape = *sino.tape();
  const Real inv_norm = static_cast<Real>(1.0 / model.operator_norm);
  const int h = model.grid.n_y, w = model.grid.n_x;
  Var data = scale(sino, inv_norm);
  Var dual = tape.constant(Tensor({batch, n, model.n_sources, model.n_detector_bins}));
  Var primal = tape.constant(Tensor({batch, n, h, w}));

  for (int k = 0; k < model.n_iterations; ++k) {
    if (model.kind == LpdKind::Lpd2d) {
      Var x2 = slice_channels(primal, std::min(1, n - 1), 1);
      Var ax = scale(project_node(x2, geoms, ProjectDirection::Forward), inv_norm);
      dual = add(dual, apply_stack(params, stack_name("dual", k), concat_channels({dual, ax, data})));
      Var h1 = slice_channels(dual, 0, 1);
      Var ath = scale(project_node(h1, geoms, ProjectDirection::Adjoint), inv_norm);
      primal = add(primal, apply_stack(params, stack_name("primal", k), concat_channels({primal, ath})));
    } else {
      Var ax = scale(project_node(primal, geoms, ProjectDirection::Forward), inv_norm);
      dual = add(dual, apply_stack(params, stack_name("dual", k), concat_channels({dual, ax, data})));
      Var ath = scale(project_node(dual, geoms, ProjectDirection::Adjoint), inv_norm);
      primal = add(primal, apply_stack(params, stack_name("primal", k), concat_channels({primal, ath})));
    }
  }
  return primal;
}

Var lpd_output(const LpdModel& model, const std::map<std::string, Var>& params, Var sino,
               const std::vector<GeometryPtr>& geoms) {
  return slice_channels(lpd_unrolled(model, params, sino, geoms), model.output_channel(), 1);
}

namespace {

ImageSlice run_single(const LpdModel& model, const std::vector<Sinogram>& window) {
  if (static_cast<int>(window.size()) != model.window())
    throw std::invalid_argument("lpd: expected a window of " + std::to_string(model.window()) + " sinograms, got " +
                                std::to_string(window.size()));
  const int ns = model.n_sources, nd = model.n_detector_bins;
  Tensor y({1, static_cast<int>(window.size()), ns, nd});
  std::vector<GeometryPtr> geoms;
  for (std::size_t i = 0; i < window.size(); ++i) {
    model.check_geometry(window[i].geometry);
    std::copy(window[i].values.begin(), window[i].values.end(), y.data.begin() + static_cast<std::ptrdiff_t>(i * ns * nd));
    geoms.push_back(std::make_shared<FanBeamGeometry>(window[i].geometry));
  }
  Tape tape;
  const auto bound = [&] {
    std::map<std::string, Var> b;
    for (const auto& [name, t] : model.params) b.emplace(name, tape.constant(t));
    return b;
  }();
  Var out = lpd_output(model, bound, tape.constant(std::move(y)), geoms);
  const RealBuffer& v = out.value().data;
  return ImageSlice(model.grid, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

ImageSlice lpd2d_forward(const ParameterSet& params, const Sinogram& sino, const FanBeamGeometry& geom,
                         const Lpd2dConfig& config, double operator_norm) {
  config.validate();
  LpdModel m;
  m.kind = LpdKind::Lpd2d;
  m.n_iterations = config.n_iterations;
  m.channels = config.memory_channels;
  m.conv_filters = config.conv_filters;
  m.operator_norm = operator_norm;
  m.grid = geom.grid();
  m.n_sources = geom.n_sources();
  m.n_detector_bins = geom.n_detector_bins();
  m.params = params;
  if (!(sino.geometry == geom)) throw std::invalid_argument("lpd2d_forward: sinogram geometry differs from geom");
  return run_single(m, {sino});
}

ImageSlice lpd25d_forward(const ParameterSet& params, const std::vector<Sinogram>& sinos, const Lpd25dConfig& config,
                          double operator_norm) {
  config.validate();
  if (static_cast<int>(sinos.size()) != config.n_slices)
    throw std::invalid_argument("lpd25d_forward: expected " + std::to_string(config.n_slices) + " sinograms, got " +
                                std::to_string(sinos.size()));
  LpdModel m;
  m.kind = LpdKind::Lpd25d;
  m.n_iterations = config.n_iterations;
  m.channels = config.n_slices;
  m.strategy = config.strategy;
  m.conv_filters = config.conv_filters;
  m.operator_norm = operator_norm;
  m.grid = sinos.front().geometry.grid();
  m.n_sources = sinos.front().geometry.n_sources();
  m.n_detector_bins = sinos.front().geometry.n_detector_bins();
  m.params = params;
  return run_single(m, sinos);
}

ImageSlice lpd_reconstruct(const LpdModel& model, const std::vector<Sinogram>& window) { return run_single(model, window); }

CheckpointInfo model_checkpoint_info(const LpdModel& m, std::uint64_t seed) {
  CheckpointInfo info;
  info.seed = seed;
  char norm[64];
  std::snprintf(norm, sizeof(norm), "%.17g", m.operator_norm);
  char pixel[64];
  std::snprintf(pixel, sizeof(pixel), "%.17g", m.grid.pixel_size);
  info.tags = {{"kind", to_string(m.kind)},
               {"n_iterations", std::to_string(m.n_iterations)},
               {"channels", std::to_string(m.channels)},
               {"strategy", to_string(m.strategy)},
               {"conv_filters", std::to_string(m.conv_filters)},
               {"operator_norm", norm},
               {"grid_nx", std::to_string(m.grid.n_x)},
               {"grid_ny", std::to_string(m.grid.n_y)},
               {"pixel_size", pixel},
               {"n_sources", std::to_string(m.n_sources)},
               {"n_det", std::to_string(m.n_detector_bins)}};
  std::string text;
  for (const auto& [k, v] : info.tags) text += k + "=" + v + "\n";
  info.spec_hash = fnv1a(text);
  return info;
}

void save_model(const std::string& path, const LpdModel& model, std::uint64_t seed) {
  save_checkpoint(path, model.params, model_checkpoint_info(model, seed));
}

LpdModel load_model(const std::string& path) {
  CheckpointInfo info;
  LpdModel m;
  m.params = load_checkpoint(path, &info);
  auto tag = [&](const char* k) -> const std::string& {
    auto it = info.tags.find(k);
    if (it == info.tags.end()) throw std::runtime_error("checkpoint '" + path + "' lacks model tag '" + k + "'");
    return it->second;
  };
  m.kind = parse_lpd_kind(tag("kind"));
  m.n_iterations = std::stoi(tag("n_iterations"));
  m.channels = std::stoi(tag("channels"));
  m.strategy = parse_strategy(tag("strategy"));
  m.conv_filters = std::stoi(tag("conv_filters"));
  m.operator_norm = std::stod(tag("operator_norm"));
  m.grid = ImageGrid(std::stoi(tag("grid_nx")), std::stoi(tag("grid_ny")), std::stod(tag("pixel_size")));
  m.n_sources = std::stoi(tag("n_sources"));
  m.n_detector_bins = std::stoi(tag("n_det"));
  return m;
}

}  // namespace logrecon
