#include "logrecon/trainer.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "logrecon/io.hpp"
#include "logrecon/metrics.hpp"

namespace logrecon {

void TrainConfig::validate() const {
  if (total_iterations < 1) throw std::invalid_argument("TrainConfig: total_iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (checkpoint_every < 1) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
  if (validation_every < 1) throw std::invalid_argument("TrainConfig: validation_every must be >= 1");
  if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
  if (!(lr_min >= 0.0) || !(lr0 > lr_min)) throw std::invalid_argument("TrainConfig: need lr0 > lr_min >= 0");
}

namespace {

struct Pick {
  std::size_t set;
  std::size_t entry;
};

struct Batch {
  Tensor sino;
  Tensor target;
  std::vector<GeometryPtr> geoms;
};

Batch make_batch(const LpdModel& model, const std::vector<SliceDataset>& sets, std::span<const Pick> picks) {
  const int b = static_cast<int>(picks.size());
  const int w = model.window();
  const int ns = model.n_sources, nd = model.n_detector_bins;
  const int h = model.grid.n_y, wd = model.grid.n_x;
  Batch out{Tensor({b, w, ns, nd}), Tensor({b, 1, h, wd}), {}};
  const std::size_t plane = static_cast<std::size_t>(ns) * nd;
  for (int i = 0; i < b; ++i) {
    const SliceDataset& d = sets[picks[i].set];
    const auto sinos = d.sinogram_window(picks[i].entry);
    for (int c = 0; c < w; ++c) {
      const Sinogram& s = sinos[static_cast<std::size_t>(c)];
      std::copy(s.values.begin(), s.values.end(), out.sino.data.begin() + static_cast<std::ptrdiff_t>((i * w + c) * plane));
      out.geoms.push_back(std::make_shared<FanBeamGeometry>(s.geometry));
    }
    const ImageSlice& t = d.slice(d.target_slice(picks[i].entry));
    std::copy(t.values.begin(), t.values.end(), out.target.data.begin() + static_cast<std::ptrdiff_t>(i * t.values.size()));
  }
  return out;
}

LpdModel with_params(const LpdModel& m, const ParameterSet& p) {
  LpdModel out = m;
  out.params = p;
  return out;
}

}  // namespace

TrainResult train(const LpdModel& init, const std::vector<SliceDataset>& train_sets,
                  const std::vector<SliceDataset>& val_sets, const TrainConfig& tc) {
  tc.validate();
  if (train_sets.empty()) throw std::invalid_argument("train: no training data");
  std::set<std::string> train_ids;
  for (const auto& d : train_sets) {
    if (d.window() != init.window())
      throw std::invalid_argument("train: dataset '" + d.log_id() + "' has window " + std::to_string(d.window()) +
                                  " but the model expects " + std::to_string(init.window()));
    if (init.kind == LpdKind::Lpd25d && d.strategy() != init.strategy)
      throw std::invalid_argument("train: dataset '" + d.log_id() + "' uses a different target strategy");
    train_ids.insert(d.log_id());
  }
  for (const auto& d : val_sets)
    if (train_ids.count(d.log_id()))
      throw std::invalid_argument("train: log '" + d.log_id() + "' is in both the training and validation sets");

  std::vector<Pick> pool;
  for (std::size_t s = 0; s < train_sets.size(); ++s)
    for (std::size_t e = 0; e < train_sets[s].size(); ++e) pool.push_back({s, e});
  if (pool.empty()) throw std::invalid_argument("train: training sets contain no windows");

  std::mt19937_64 rng(tc.seed);
  std::vector<Pick> order;
  std::size_t cursor = 0;
  auto next_batch = [&] {
    std::vector<Pick> picks;
    while (static_cast<int>(picks.size()) < tc.batch_size) {
      if (cursor == order.size()) {
        order = pool;
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      picks.push_back(order[cursor++]);
    }
    return picks;
  };

  ParameterSet params = init.params;
  AdamState adam;
  TrainResult result;
  result.model = init;
  result.history.best_psnr = -std::numeric_limits<double>::infinity();
  const std::string last_path = tc.checkpoint_path.empty() ? "" : tc.checkpoint_path + ".last";

  for (std::int64_t it = 0; it < tc.total_iterations; ++it) {
    const std::vector<Pick> picks = next_batch();
    Batch batch = make_batch(init, train_sets, picks);
    Tape tape;
    auto bound = bind_parameters(tape, params);
    Var out = lpd_output(init, bound, tape.constant(std::move(batch.sino)), batch.geoms);
    Var loss = mse_loss(out, tape.constant(std::move(batch.target)));
    const double loss_value = loss.value().data[0];
    if (!std::isfinite(loss_value))
      throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it + 1));
    tape.backward(loss);
    const double lr = cosine_lr(it, tc.total_iterations, tc.lr0, tc.lr_min);
    adam_step(params, collect_gradients(bound), adam, {lr, 0.9, 0.999, 1e-8});

    const std::int64_t done = it + 1;
    const bool last = done == tc.total_iterations;
    if (it == 0 || done % tc.log_every == 0 || last) result.history.steps.push_back({done, loss_value, lr});
    if (!val_sets.empty() && (done % tc.validation_every == 0 || last)) {
      const double v = mean_validation_psnr(with_params(init, params), val_sets);
      result.history.validation.push_back({done, v});
      if (v > result.history.best_psnr) {
        result.history.best_psnr = v;
        result.history.best_iteration = done;
        result.model.params = params;
        if (!tc.checkpoint_path.empty()) save_model(tc.checkpoint_path, result.model, tc.seed);
      }
    }
    if (!last_path.empty() && (done % tc.checkpoint_every == 0 || last))
      save_model(last_path, with_params(init, params), tc.seed);
  }
  if (val_sets.empty()) {
    result.model.params = params;
    result.history.best_iteration = tc.total_iterations;
    result.history.best_psnr = 0.0;
    if (!tc.checkpoint_path.empty()) save_model(tc.checkpoint_path, result.model, tc.seed);
  }
  return result;
}

std::pair<double, double> loss_head_tail(const TrainHistory& h, std::size_t k) {
  if (k == 0 || h.steps.size() < k) throw std::invalid_argument("loss_head_tail: not enough logged steps");
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    head += h.steps[i].loss;
    tail += h.steps[h.steps.size() - k + i].loss;
  }
  return {head / static_cast<double>(k), tail / static_cast<double>(k)};
}

void write_history_csv(const std::string& path, const TrainHistory& h) {
  CsvTable t;
  t.header = {"iteration", "train_loss", "lr", "val_psnr"};
  std::map<std::int64_t, CsvRow> rows;
  for (const auto& s : h.steps) rows[s.iteration] = {std::to_string(s.iteration), format_double(s.loss), format_double(s.lr), ""};
  for (const auto& v : h.validation) {
    auto& r = rows[v.iteration];
    if (r.empty()) r = {std::to_string(v.iteration), "", "", ""};
    r[3] = format_double(v.mean_psnr);
  }
  for (auto& [it, r] : rows) t.rows.push_back(std::move(r));
  write_csv(path, t);
}

std::vector<Sinogram> clamped_window(const SliceDataset& data, int z, int length, TargetStrategy strategy) {
  if (z < 0 || z >= data.n_slices()) throw std::out_of_range("clamped_window: slice index out of range");
  const int t = target_index(length, strategy);
  std::vector<Sinogram> out;
  for (int i = 0; i < length; ++i) out.push_back(data.sinogram(std::clamp(z - t + i, 0, data.n_slices() - 1)));
  return out;
}

double mean_validation_psnr(const LpdModel& model, const std::vector<SliceDataset>& sets) {
  double total = 0.0;
  int n = 0;
  for (const auto& d : sets)
    for (int z = 0; z < d.n_slices(); ++z) {
      total += psnr(lpd_reconstruct(model, clamped_window(d, z, model.window(), model.strategy)), d.slice(z));
      ++n;
    }
  if (n == 0) throw std::invalid_argument("mean_validation_psnr: no slices");
  return total / n;
}

std::vector<ImageSlice> reconstruct_log(const std::string& method, const SliceDataset& data, const LpdModel* model,
                                        const SweepConfig& cfg) {
  std::vector<ImageSlice> out;
  out.reserve(static_cast<std::size_t>(data.n_slices()));
  if (method == "fbp" || method == "tv") {
    for (int z = 0; z < data.n_slices(); ++z) {
      const Sinogram& s = data.sinogram(z);
      out.push_back(method == "fbp" ? fbp_reconstruct(s, s.geometry, cfg.fbp_filter, cfg.fbp_cutoff)
                                    : tv_pdhg(s, s.geometry, cfg.tv).image);
    }
    return out;
  }
  if (!model) throw std::invalid_argument("reconstruct_log: method '" + method + "' needs a model");
  if (to_string(model->kind) != method)
    throw std::invalid_argument("reconstruct_log: model is " + to_string(model->kind) + ", not " + method);
  for (int z = 0; z < data.n_slices(); ++z)
    out.push_back(lpd_reconstruct(*model, clamped_window(data, z, model->window(), model->strategy)));
  return out;
}

std::vector<SweepRow> evaluate_sweep(const std::vector<std::string>& checkpoints, const std::vector<LogPhantom>& volumes,
                                     const SweepConfig& cfg) {
  if (volumes.empty()) throw std::invalid_argument("evaluate_sweep: no test volumes");
  std::vector<LpdModel> models;
  for (const auto& path : checkpoints) models.push_back(load_model(path));

  std::vector<SweepRow> rows;
  for (int n_src : cfg.source_counts) {
    std::vector<SliceDataset> data;
    for (std::size_t v = 0; v < volumes.size(); ++v) {
      const LogPhantom& vol = volumes[v];
      const ScanPlan plan = sample_scan_plan(vol.n_slices, n_src, cfg.plan_seed + v);
      const FanBeamGeometry tmpl = default_fanbeam(vol.grid, equispaced_source_angles(n_src, 0.0));
      data.push_back(simulate_dataset(vol, plan, tmpl, 1, TargetStrategy::Last, cfg.noise_sigma, "test" + std::to_string(v)));
    }
    auto accumulate = [&](SweepRow row, const LpdModel* model) {
      double p = 0.0, s = 0.0;
      int n = 0;
      for (const auto& d : data) {
        const std::vector<ImageSlice> recon = reconstruct_log(row.method, d, model, cfg);
        for (int z = 0; z < d.n_slices(); ++z) {
          p += psnr(recon[static_cast<std::size_t>(z)], d.slice(z));
          s += ssim(recon[static_cast<std::size_t>(z)], d.slice(z));
          ++n;
        }
      }
      row.present = true;
      row.psnr = p / n;
      row.ssim = s / n;
      row.n_slices = n;
      rows.push_back(row);
    };
    auto find_model = [&](LpdKind kind, int window, TargetStrategy strategy) -> const LpdModel* {
      for (const auto& m : models) {
        if (m.kind != kind || m.n_sources != n_src || !(m.grid == volumes.front().grid)) continue;
        if (kind == LpdKind::Lpd25d && (m.channels != window || m.strategy != strategy)) continue;
        return &m;
      }
      return nullptr;
    };
    auto lpd_cell = [&](LpdKind kind, int window, TargetStrategy strategy) {
      SweepRow row{n_src, window, strategy, to_string(kind)};
      const LpdModel* m = find_model(kind, window, strategy);
      if (m)
        accumulate(row, m);
      else
        rows.push_back(row);
    };

    accumulate({n_src, 1, TargetStrategy::Last, "fbp"}, nullptr);
    if (cfg.include_tv) accumulate({n_src, 1, TargetStrategy::Last, "tv"}, nullptr);
    lpd_cell(LpdKind::Lpd2d, 1, TargetStrategy::Last);
    for (int w : cfg.window_sizes)
      for (TargetStrategy s : cfg.strategies) lpd_cell(LpdKind::Lpd25d, w, s);
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  CsvTable t;
  t.header = {"n_sources", "window", "strategy", "method", "psnr", "ssim", "n_slices"};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.n_sources), std::to_string(r.window), to_string(r.strategy), r.method,
                      r.present ? format_double(r.psnr) : "", r.present ? format_double(r.ssim) : "",
                      std::to_string(r.n_slices)});
  write_csv(path, t);
}

}  // namespace logrecon
