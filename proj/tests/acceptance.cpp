// Acceptance checks, one PASS/FAIL line per criterion.
//   logrecon_acceptance            all criteria
//   logrecon_acceptance 2 7 11     selected ones
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "logrecon/cli.hpp"
#include "logrecon/io.hpp"
#include "logrecon/lpd.hpp"
#include "logrecon/metrics.hpp"
#include "logrecon/trainer.hpp"
#include "logrecon/variational.hpp"
#include "test_support.hpp"

using namespace logrecon;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Kind { Pass, Fail, Report } kind;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

// ---- 1

Outcome angles() {
  const bool a = equispaced_source_angles(5, 0.0) == std::vector<double>{0, 72, 144, 216, 288};
  const bool b = equispaced_source_angles(5, 7.0) == std::vector<double>{7, 79, 151, 223, 295};
  return verdict(a && b, "5 sources, offsets 0 and 7");
}

// ---- 2

Outcome adjoint() {
  const ImageGrid g(32, 32, 1.0);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const FanBeamGeometry geom = default_fanbeam(g, equispaced_source_angles(8, static_cast<double>(seed * 7 % 45)));
    const ImageSlice x(g, random_vector(g.size(), seed));
    const Sinogram y(geom, random_vector(geom.sinogram_size(), seed + 1000));
    const double lhs = dot(forward_project(x, geom).values, y.values);
    const double rhs = dot(x.values, back_project(y, geom).values);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  double dense_err = 0.0;
  for (int n : {8, 12, 16}) {
    const ImageGrid gd(n, n, 1.0);
    const FanBeamGeometry geom = default_fanbeam(gd, equispaced_source_angles(6, 11.0));
    const DenseMatrix m = dense_system_matrix(geom);
    std::vector<double> x(gd.size()), y(m.rows), ax(m.rows), aty(gd.size());
    const auto xf = random_vector(x.size(), 3 * n), yf = random_vector(y.size(), 3 * n + 1);
    std::copy(xf.begin(), xf.end(), x.begin());
    std::copy(yf.begin(), yf.end(), y.begin());
    forward_project(std::span<const double>(x), geom, std::span<double>(ax));
    back_project(std::span<const double>(y), geom, std::span<double>(aty));
    for (std::size_t r = 0; r < m.rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) s += m(r, c) * x[c];
      dense_err = std::max(dense_err, std::abs(s - ax[r]));
    }
    for (std::size_t c = 0; c < m.cols; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) s += m(r, c) * y[r];
      dense_err = std::max(dense_err, std::abs(s - aty[c]));
    }
  }
  return verdict(worst <= 1e-5 && dense_err <= 1e-10,
                 "worst dot-test error " + fmt("%.2e", worst) + ", dense oracle " + fmt("%.2e", dense_err));
}

// ---- 3

Outcome chords() {
  // Rays grazing the rim cross partial-volume pixels; they are held to the
  // zero/nonzero pattern instead of the 1% bound.
  const ImageGrid g(128, 128, 1.0);
  const FanBeamGeometry geom = default_fanbeam(g, equispaced_source_angles(12, 5.0));
  const double cx = 6.0, cy = -4.0, r = 40.0;
  const Sinogram s = forward_project(disk_image(g, cx, cy, r, 1.0f), geom);
  double worst = 0.0;
  int checked = 0, leaks = 0;
  for (int a = 0; a < geom.n_sources(); ++a)
    for (int k = 0; k < geom.n_detector_bins(); ++k) {
      const double chord = disk_chord(geom, a, k, cx, cy, r);
      if (disk_chord(geom, a, k, cx, cy, r + 2.0) == 0.0 && s.at(a, k) != 0.0f) ++leaks;
      if (chord < 2.0 * std::sqrt(r * r - (r - 5.0) * (r - 5.0))) continue;
      worst = std::max(worst, std::abs(s.at(a, k) - chord) / chord);
      ++checked;
    }
  return verdict(worst <= 0.01 && leaks == 0 && checked > 500,
                 std::to_string(checked) + " rays, worst relative error " + fmt("%.2e", worst));
}

// ---- 4

Outcome fbp_sanity() {
  const ImageGrid g(128, 128, 1.0);
  const ImageSlice disk = disk_image(g, 5.0, -3.0, 35.0, 1.0f);
  const FanBeamGeometry dense = default_fanbeam(g, equispaced_source_angles(360, 0.0));
  const FanBeamGeometry sparse = default_fanbeam(g, equispaced_source_angles(5, 0.0));
  const double pd = psnr(fbp_reconstruct(forward_project(disk, dense), dense), disk);
  const double ps = psnr(fbp_reconstruct(forward_project(disk, sparse), sparse), disk);
  return verdict(pd >= 30.0 && ps < pd, "360 views " + fmt("%.2f", pd) + " dB, 5 views " + fmt("%.2f", ps) + " dB");
}

// ---- 5

Outcome gradcheck() {
  // The finite-difference suite runs in a double-precision build of the library,
  // which cannot share a process with the float build.
  const std::string cmd = std::string("\"") + LOGRECON_GRADCHECK_PATH + "\" --minimal";
  const int rc = std::system(cmd.c_str());
  return verdict(rc == 0, "double-precision gradcheck, 20 seeds per case");
}

// ---- 6

std::size_t stack_params(int in, int f, int out) {
  const std::size_t k = kConvKernel * kConvKernel;
  return (in * f * k + f) + f + (f * f * k + f) + f + (f * out * k + out);
}

Outcome architecture() {
  bool ok = true;
  for (int c : {1, 3, 5}) {
    const StackChannels ch = stack_channels(Lpd2dConfig{10, c, 32});
    ok = ok && ch.dual_in == c + 2 && ch.dual_out == c && ch.primal_in == c + 1 && ch.primal_out == c;
  }
  for (int n : {1, 3, 5}) {
    const StackChannels ch = stack_channels(Lpd25dConfig{10, n, TargetStrategy::Middle, 32});
    ok = ok && ch.dual_in == 3 * n && ch.dual_out == n && ch.primal_in == 2 * n && ch.primal_out == n;
  }
  const FanBeamGeometry geom = default_fanbeam(ImageGrid(16, 16, 1.0), equispaced_source_angles(5, 0.0));
  ok = ok && init_lpd2d({10, 5, 32}, geom, 0).total_count() == 10 * (stack_params(7, 32, 5) + stack_params(6, 32, 5));
  ok = ok && init_lpd25d({3, 3, TargetStrategy::Last, 16}, {}, 0).total_count() ==
                 3 * (stack_params(9, 16, 3) + stack_params(6, 16, 3));
  return verdict(ok, "2D C+2/C+1 -> C, 2.5D 3n/2n -> n, parameter totals");
}

// ---- 7, 8, 9: desk-scale training

const ImageGrid kDesk(64, 64, 1.0);
constexpr int kDeskSlices = 32;
constexpr int kDeskFilters = 16;

struct DeskData {
  std::vector<SliceDataset> train, val, test;
  std::vector<LogPhantom> test_volumes;
};

// Seven simulated logs: four train, one validation, two test.
DeskData desk_data(int n_src, int window, TargetStrategy strategy) {
  const FanBeamGeometry geom = default_fanbeam(kDesk, equispaced_source_angles(n_src, 0.0));
  DeskData d;
  for (int i = 0; i < 7; ++i) {
    const LogPhantom ph = generate_log_phantom(random_log_spec(kDesk, kDeskSlices, 100 + i));
    SliceDataset ds = simulate_dataset(ph, sample_scan_plan(kDeskSlices, n_src, 200 + i), geom, window, strategy, 0.0,
                                       "log" + std::to_string(i));
    if (i < 4) d.train.push_back(std::move(ds));
    else if (i == 4) d.val.push_back(std::move(ds));
    else {
      d.test.push_back(std::move(ds));
      d.test_volumes.push_back(ph);
    }
  }
  return d;
}

struct DeskRun {
  TrainResult result;
  double head = 0.0, tail = 0.0;
  double test_psnr = 0.0;
  double whorl_psnr = 0.0;  // slices [s, s + 5) for every whorl start s
  double fbp_psnr = 0.0;
  double seconds = 0.0;
};

DeskRun desk_train(const LpdModel& init, const DeskData& d, double lr0, int iters, std::uint64_t seed) {
  TrainConfig tc;
  tc.total_iterations = iters;
  tc.batch_size = 1;
  tc.lr0 = lr0;
  tc.seed = seed;
  tc.validation_every = iters / 4;
  tc.log_every = 10;
  const auto t0 = std::chrono::steady_clock::now();
  DeskRun run{train(init, d.train, d.val, tc)};
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::tie(run.head, run.tail) = loss_head_tail(run.result.history, 10);
  const LpdModel& m = run.result.model;
  int n = 0, nw = 0;
  for (std::size_t v = 0; v < d.test.size(); ++v) {
    const SliceDataset& ds = d.test[v];
    for (int z = 0; z < ds.n_slices(); ++z) {
      const double p = psnr(lpd_reconstruct(m, clamped_window(ds, z, m.window(), m.strategy)), ds.slice(z));
      run.test_psnr += p;
      run.fbp_psnr += psnr(fbp_reconstruct(ds.sinogram(z), ds.sinogram(z).geometry, FbpFilter::Hann, 1.0), ds.slice(z));
      ++n;
      for (int s : d.test_volumes[v].whorl_starts)
        if (z >= s && z < s + 5) {
          run.whorl_psnr += p;
          ++nw;
        }
    }
  }
  run.test_psnr /= n;
  run.fbp_psnr /= n;
  run.whorl_psnr = nw ? run.whorl_psnr / nw : 0.0;
  return run;
}

FanBeamGeometry desk_geom(int n_src) { return default_fanbeam(kDesk, equispaced_source_angles(n_src, 0.0)); }

Outcome desk_training() {
  const DeskData d = desk_data(9, 1, TargetStrategy::Last);
  const DeskRun r = desk_train(make_lpd2d({3, 5, kDeskFilters}, desk_geom(9), 1), d, 1e-5, 5000, 1);
  const double ratio = r.tail / r.head;
  const double gain = r.test_psnr - r.fbp_psnr;
  return verdict(ratio < 0.5 && gain >= 3.0 && r.seconds <= 1800.0,
                 "loss ratio " + fmt("%.3f", ratio) + ", lpd2d " + fmt("%.2f", r.test_psnr) + " dB vs FBP " +
                     fmt("%.2f", r.fbp_psnr) + " dB, " + fmt("%.0f", r.seconds) + " s");
}

constexpr double kLr25 = 1e-4;
constexpr int kIters25 = 3000;

Outcome directional_25d() {
  const DeskData d2 = desk_data(5, 1, TargetStrategy::Last);
  const DeskData d3 = desk_data(5, 3, TargetStrategy::Last);
  std::vector<double> p2, p3;
  double seconds = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const DeskRun a = desk_train(make_lpd2d({3, 5, kDeskFilters}, desk_geom(5), seed), d2, kLr25, kIters25, seed);
    const DeskRun b = desk_train(make_lpd25d({3, 3, TargetStrategy::Last, kDeskFilters}, desk_geom(5), seed), d3,
                                 kLr25, kIters25, seed);
    p2.push_back(a.test_psnr);
    p3.push_back(b.test_psnr);
    seconds += a.seconds + b.seconds;
    per_seed += " " + fmt("%+.2f", b.test_psnr - a.test_psnr);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  double worst = 1e9;
  for (int i = 0; i < 3; ++i) worst = std::min(worst, p3[i] - p2[i]);
  const double m2 = median(p2), m3 = median(p3);
  return verdict(m3 > m2 && worst >= -0.2 && seconds <= 5400.0,
                 "median lpd25d " + fmt("%.2f", m3) + " dB vs lpd2d " + fmt("%.2f", m2) + " dB, per-seed gaps" +
                     per_seed + ", " + fmt("%.0f", seconds) + " s");
}

Outcome strategy_switch() {
  const LpdModel mid = make_lpd25d({3, 5, TargetStrategy::Middle, kDeskFilters}, desk_geom(5), 1);
  const LpdModel last = make_lpd25d({3, 5, TargetStrategy::Last, kDeskFilters}, desk_geom(5), 1);
  if (mid.output_channel() != 2 || target_index(5, TargetStrategy::Middle) != 2)
    return {Outcome::Fail, "middle does not select channel 2"};
  const DeskRun a = desk_train(mid, desk_data(5, 5, TargetStrategy::Middle), kLr25, kIters25, 1);
  const DeskRun b = desk_train(last, desk_data(5, 5, TargetStrategy::Last), kLr25, kIters25, 1);
  const double margin = a.whorl_psnr - b.whorl_psnr;
  const std::string detail = "channel 2; whorl-start PSNR middle " + fmt("%.3f", a.whorl_psnr) + " dB vs last " +
                             fmt("%.3f", b.whorl_psnr) + " dB (margin " + fmt("%+.3f", margin) + "), " +
                             fmt("%.0f", a.seconds + b.seconds) + " s";
  if (std::abs(margin) < 0.1) return {Outcome::Report, detail};
  return verdict(margin > 0.0 && a.seconds + b.seconds <= 1800.0, detail);
}

// ---- 10

Outcome metric_identities() {
  bool ok = true;
  const ImageGrid g(10, 10, 1.0);
  ImageSlice ref(g), x(g);
  for (std::size_t i = 0; i < g.size(); ++i) x.values[i] = (i % 2 ? 0.1f : -0.1f);
  ok = ok && std::abs(psnr(x, ref, 1.0) - 20.0) < 1e-5;
  for (std::size_t i = 0; i < g.size(); ++i) x.values[i] = (i % 2 ? 0.01f : -0.01f);
  ok = ok && std::abs(psnr(x, ref, 1.0) - 40.0) < 1e-5;

  const ImageGrid g32(32, 32, 1.0);
  double oracle_err = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ImageSlice a(g32, random_vector(g32.size(), s, 0.0, 1.0));
    const ImageSlice b(g32, random_vector(g32.size(), s + 50, 0.0, 1.0));
    ok = ok && ssim(a, a) == 1.0;
    oracle_err = std::max(oracle_err, std::abs(ssim(a, b, {11, 1.5, 0.01, 0.03, 1.0}) - ssim_oracle(a, b, 1.0)));
  }
  ok = ok && oracle_err <= 1e-10;

  const std::vector<std::uint8_t> m1{1, 1, 0, 0}, m2{0, 0, 1, 1}, m3{1, 0, 1, 0};
  ok = ok && dice(m1, m1) == 1.0 && dice(m1, m2) == 0.0 && dice(m1, m3) == 0.5;
  const KnotGroup k{0, 10};
  ok = ok && k.start_count() == 2 && k.mid_count() == 6 && k.end_count() == 2;
  return verdict(ok, "PSNR 20/40 dB, SSIM oracle error " + fmt("%.1e", oracle_err) + ", Dice 1/0/0.5, split 2/6/2");
}

// ---- 11

Outcome tv() {
  const LogPhantom ph = generate_log_phantom(random_log_spec(kDesk, 8, 21));
  const ImageSlice truth = ph.slice(4);
  const FanBeamGeometry geom = default_fanbeam(kDesk, equispaced_source_angles(9, 17.0));
  const Sinogram y = forward_project(truth, geom);
  TVConfig cfg;
  cfg.lambda = 0.01;
  cfg.n_iter = 300;
  const TVResult r = tv_pdhg(y, geom, cfg);
  const std::size_t burn_in = 10;
  int rises = 0;
  for (std::size_t i = burn_in + 1; i < r.energy.size(); ++i) rises += r.energy[i] > r.energy[i - 1];
  const double pt = psnr(r.image, truth), pf = psnr(fbp_reconstruct(y, geom, FbpFilter::Hann), truth);
  return verdict(rises == 0 && pt > pf, std::to_string(rises) + " energy increases after iteration 10, TV " +
                                            fmt("%.2f", pt) + " dB vs FBP " + fmt("%.2f", pf) + " dB");
}

// ---- 12

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "logrecon %s failed: %s\n", args.front().c_str(), err.str().c_str());
  return code;
}

bool pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& name) { return (dir / name).string(); };
  const std::vector<std::string> ph{"--phantom.n_x=32", "--phantom.n_y=32", "--phantom.n_slices=12"};
  for (const auto& [log, seed] : {std::pair{"a", "1"}, {"b", "2"}, {"c", "3"}}) {
    std::vector<std::string> args{"phantom", "--seed", seed, "--out", p(std::string(log) + ".rvf")};
    args.insert(args.end(), ph.begin(), ph.end());
    if (cli(args)) return false;
  }
  for (const char* log : {"a", "b"})
    if (cli({"simulate", "--in", p(std::string(log) + ".rvf"), "--sources", "5", "--seed", "7", "--noise", "0.01",
             "--out", p(std::string("sim_") + log)}))
      return false;
  if (cli({"train", "--data", p("sim_a"), "--val", p("sim_b"), "--model", "lpd2d", "--seed", "5", "--iterations", "60",
           "--batch", "2", "--lr0", "1e-4", "--lpd.n_iterations=2", "--lpd.conv_filters=8", "--lpd.memory_channels=3",
           "--out", p("model.ckpt")}))
    return false;
  return cli({"eval", "--volumes", p("c.rvf"), "--models", p("model.ckpt"), "--sources", "5", "--plan-seed", "3",
              "--out", p("sweep.csv")}) == 0;
}

std::map<std::string, std::string> artifact_hashes(const fs::path& dir) {
  std::map<std::string, std::string> h;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".rvf" || ext == ".csv"))
      h[fs::relative(e.path(), dir).string()] = file_hash(e.path().string());
  }
  return h;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "logrecon_acceptance_cli";
  const auto t0 = std::chrono::steady_clock::now();
  if (!pipeline(root / "run1") || !pipeline(root / "run2")) return {Outcome::Fail, "pipeline command failed"};
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto h1 = artifact_hashes(root / "run1"), h2 = artifact_hashes(root / "run2");
  return verdict(h1 == h2 && h1.size() > 10 && secs <= 2100.0,
                 std::to_string(h1.size()) + " RVF/CSV artifacts compared, " + fmt("%.0f", secs) + " s");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> all{
      {1, angles},        {2, adjoint},       {3, chords},           {4, fbp_sanity},
      {5, gradcheck},     {6, architecture},  {7, desk_training},    {8, directional_25d},
      {9, strategy_switch}, {10, metric_identities}, {11, tv},       {12, reproducibility}};
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool failed = false;
  for (const auto& [id, fn] : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Fail ? "FAIL" : "REPORT";
    std::printf("criterion %2d: %s  %s\n", id, tag, o.detail.c_str());
    std::fflush(stdout);
    failed = failed || o.kind == Outcome::Fail;
  }
  return failed ? 1 : 0;
}
