#include "logrecon/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <regex>
#include <stdexcept>

#include "logrecon/io.hpp"
#include "logrecon/lpd.hpp"
#include "logrecon/metrics.hpp"
#include "logrecon/trainer.hpp"
#include "logrecon/variational.hpp"

namespace fs = std::filesystem;

namespace logrecon {

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension("");
  return p.string() + suffix;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("input file not found: " + path);
}

std::string slice_file(const std::string& kind, int z) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.rvf", kind.c_str(), z);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ", ") + format_double(x);
  return out;
}

// Records what a command read and wrote; saved next to the outputs at the end.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const std::string& path) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["args"] = args;
    j["seeds"] = seeds;
    auto files = [](const std::vector<std::string>& paths) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& p : paths) arr.push_back({{"path", p}, {"fnv1a", fs::exists(p) ? file_hash(p) : ""}});
      return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_file_atomic(path, j.dump(2) + "\n");
  }
};

FanBeamGeometry geometry_template(const Config& cfg, const ImageGrid& grid, int n_src) {
  const std::vector<double> angles = equispaced_source_angles(n_src, 0.0);
  if (!cfg.has("geometry", "source_radius_mm")) return default_fanbeam(grid, angles);
  return build_fanbeam(grid, cfg.get_double("geometry", "source_radius_mm"),
                       cfg.get_double("geometry", "detector_radius_mm"), static_cast<int>(cfg.get_int("geometry", "n_det")),
                       cfg.get_double("geometry", "det_width_mm"), angles);
}

TVConfig tv_config(const Config& cfg) {
  TVConfig tv;
  tv.lambda = cfg.get_double_or("tv", "lambda", tv.lambda);
  tv.n_iter = static_cast<int>(cfg.get_int_or("tv", "n_iter", tv.n_iter));
  tv.tau = cfg.get_double_or("tv", "tau", tv.tau);
  tv.sigma = cfg.get_double_or("tv", "sigma", tv.sigma);
  tv.theta = cfg.get_double_or("tv", "theta", tv.theta);
  tv.power_iterations = static_cast<int>(cfg.get_int_or("tv", "power_iterations", tv.power_iterations));
  tv.seed = static_cast<std::uint64_t>(cfg.get_int_or("tv", "seed", 0));
  return tv;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

void save_log(const std::string& volume_path, const LogPhantom& ph, const LogPhantomSpec& spec) {
  const auto nz = static_cast<std::uint32_t>(ph.n_slices), ny = static_cast<std::uint32_t>(ph.grid.n_y),
             nx = static_cast<std::uint32_t>(ph.grid.n_x);
  write_rvf(volume_path, {nz, ny, nx}, std::span<const float>(ph.volume));
  write_rvf(sibling(volume_path, ".labels.rvf"), {nz, ny, nx}, std::span<const std::uint8_t>(ph.knot_labels));
  Config c;
  c.set("phantom", "n_slices", std::to_string(ph.n_slices));
  c.set("phantom", "n_x", std::to_string(ph.grid.n_x));
  c.set("phantom", "n_y", std::to_string(ph.grid.n_y));
  c.set("phantom", "pixel_mm", format_double(ph.grid.pixel_size));
  c.set("phantom", "slice_spacing_mm", format_double(spec.slice_spacing_mm));
  c.set("phantom", "seed", std::to_string(spec.seed));
  std::string groups;
  for (const auto& [a, b] : ph.knot_groups) groups += (groups.empty() ? "" : ", ") + std::to_string(a) + ":" + std::to_string(b);
  c.set("knots", "groups", groups);
  write_file_atomic(sibling(volume_path, ".phantom.cfg"), c.to_text());
}

LogPhantom load_log(const std::string& volume_path) {
  require_file(volume_path);
  const std::string labels = sibling(volume_path, ".labels.rvf"), info = sibling(volume_path, ".phantom.cfg");
  require_file(labels);
  require_file(info);
  const Config c = Config::load(info);
  LogPhantom ph;
  ph.n_slices = static_cast<int>(c.get_int("phantom", "n_slices"));
  ph.grid = ImageGrid(static_cast<int>(c.get_int("phantom", "n_x")), static_cast<int>(c.get_int("phantom", "n_y")),
                      c.get_double("phantom", "pixel_mm"));
  const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(ph.n_slices), static_cast<std::uint32_t>(ph.grid.n_y),
                                        static_cast<std::uint32_t>(ph.grid.n_x)};
  RvfArray vol = read_rvf(volume_path);
  if (vol.dtype != RvfType::Float32 || vol.dims != dims)
    throw std::runtime_error("'" + volume_path + "' does not match '" + info + "'");
  RvfArray lab = read_rvf(labels);
  if (lab.dtype != RvfType::UInt8 || lab.dims != dims)
    throw std::runtime_error("'" + labels + "' does not match '" + info + "'");
  ph.volume = std::move(vol.f32);
  ph.knot_labels = std::move(lab.u8);
  for (const auto& g : split_list(c.get_or("knots", "groups", ""))) {
    const auto colon = g.find(':');
    if (colon == std::string::npos) throw std::runtime_error("'" + info + "': bad knot group '" + g + "'");
    const int a = std::stoi(g.substr(0, colon)), b = std::stoi(g.substr(colon + 1));
    ph.knot_groups.emplace_back(a, b);
    ph.whorl_starts.push_back(a);
  }
  return ph;
}

void save_dataset(const std::string& dir, const SliceDataset& data, const LogPhantom& ph, double noise_sigma) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "sinograms");
  fs::create_directories(fs::path(dir) / "labels");
  const ImageGrid& g = ph.grid;
  for (int z = 0; z < data.n_slices(); ++z) {
    write_image((fs::path(dir) / "images" / slice_file("slice", z)).string(), data.slice(z));
    write_sinogram((fs::path(dir) / "sinograms" / slice_file("sino", z)).string(), data.sinogram(z));
    const auto lab = ph.label_slice(z);
    write_rvf((fs::path(dir) / "labels" / slice_file("label", z)).string(),
              {static_cast<std::uint32_t>(g.n_y), static_cast<std::uint32_t>(g.n_x)}, std::span<const std::uint8_t>(lab));
  }
  CsvTable t;
  t.header = {"log_id", "slice_index", "window_start", "target_index", "offsets_deg", "sinogram_path", "image_path",
              "label_path"};
  for (std::size_t e = 0; e < data.size(); ++e) {
    const auto& entry = data.entries()[e];
    const int z = data.target_slice(e);
    std::string offsets;
    for (int i = 0; i < data.window(); ++i)
      offsets += (i ? ";" : "") + format_double(data.plan().per_slice_offsets_deg[static_cast<std::size_t>(entry.window_start + i)]);
    t.rows.push_back({data.log_id(), std::to_string(z), std::to_string(entry.window_start),
                      std::to_string(entry.target_index), offsets, "sinograms/" + slice_file("sino", z),
                      "images/" + slice_file("slice", z), "labels/" + slice_file("label", z)});
  }
  write_csv((fs::path(dir) / "manifest.csv").string(), t);

  Config c;
  c.set("dataset", "log_id", data.log_id());
  c.set("dataset", "n_slices", std::to_string(data.n_slices()));
  c.set("dataset", "n_sources", std::to_string(data.plan().n_sources));
  c.set("dataset", "window", std::to_string(data.window()));
  c.set("dataset", "strategy", to_string(data.strategy()));
  c.set("dataset", "seed", std::to_string(data.plan().seed));
  c.set("dataset", "noise_sigma", format_double(noise_sigma));
  c.set("dataset", "offsets_deg", join(data.plan().per_slice_offsets_deg));
  c.set("grid", "n_x", std::to_string(g.n_x));
  c.set("grid", "n_y", std::to_string(g.n_y));
  c.set("grid", "pixel_mm", format_double(g.pixel_size));
  write_file_atomic((fs::path(dir) / "dataset.cfg").string(), c.to_text());
}

SliceDataset load_dataset(const std::string& dir, int window, const TargetStrategy* strategy) {
  const std::string cfg_path = (fs::path(dir) / "dataset.cfg").string();
  require_file(cfg_path);
  const Config c = Config::load(cfg_path);
  const ImageGrid grid(static_cast<int>(c.get_int("grid", "n_x")), static_cast<int>(c.get_int("grid", "n_y")),
                       c.get_double("grid", "pixel_mm"));
  ScanPlan plan;
  plan.n_slices = static_cast<int>(c.get_int("dataset", "n_slices"));
  plan.n_sources = static_cast<int>(c.get_int("dataset", "n_sources"));
  plan.seed = static_cast<std::uint64_t>(c.get_int("dataset", "seed"));
  plan.per_slice_offsets_deg = c.get_doubles("dataset", "offsets_deg");
  std::vector<ImageSlice> slices;
  std::vector<Sinogram> sinos;
  for (int z = 0; z < plan.n_slices; ++z) {
    const std::string img = (fs::path(dir) / "images" / slice_file("slice", z)).string();
    const std::string sino = (fs::path(dir) / "sinograms" / slice_file("sino", z)).string();
    require_file(img);
    require_file(sino);
    slices.push_back(read_image(img, grid));
    sinos.push_back(read_sinogram(sino));
  }
  return SliceDataset(c.get("dataset", "log_id"), std::move(slices), std::move(sinos), std::move(plan),
                      window > 0 ? window : static_cast<int>(c.get_int("dataset", "window")),
                      strategy ? *strategy : parse_strategy(c.get("dataset", "strategy")));
}

namespace {

int cmd_phantom(const Config& cfg, const std::string& spec_path, std::uint64_t seed, const std::string& out,
                RunManifest& man) {
  Config c = cfg;
  if (!spec_path.empty()) {
    require_file(spec_path);
    man.inputs.push_back(spec_path);
    Config file = Config::load(spec_path);
    for (const auto& [s, kv] : file.sections())
      for (const auto& [k, v] : kv)
        if (!cfg.has(s, k)) c.set(s, k, v);
  }
  const int nx = static_cast<int>(c.get_int_or("phantom", "n_x", 64));
  const ImageGrid grid(nx, static_cast<int>(c.get_int_or("phantom", "n_y", nx)), c.get_double_or("phantom", "pixel_mm", 1.0));
  const int n_slices = static_cast<int>(c.get_int_or("phantom", "n_slices", 64));
  LogPhantomSpec spec = random_log_spec(grid, n_slices, seed);
  spec.slice_spacing_mm = c.get_double_or("phantom", "slice_spacing_mm", spec.slice_spacing_mm);
  spec.heartwood_fraction = c.get_double_or("phantom", "heartwood_fraction", spec.heartwood_fraction);
  spec.growth_ring_period_mm = c.get_double_or("phantom", "ring_period_mm", spec.growth_ring_period_mm);
  spec.growth_ring_amplitude = c.get_double_or("phantom", "ring_amplitude", spec.growth_ring_amplitude);
  spec.outer_radius.base_mm = c.get_double_or("phantom", "base_radius_mm", spec.outer_radius.base_mm);
  spec.outer_radius.taper_mm_per_slice = c.get_double_or("phantom", "taper_mm_per_slice", spec.outer_radius.taper_mm_per_slice);
  spec.outer_radius.roughness = c.get_double_or("phantom", "roughness", spec.outer_radius.roughness);
  spec.attenuations.heartwood = c.get_double_or("phantom", "attenuation_heartwood", spec.attenuations.heartwood);
  spec.attenuations.sapwood = c.get_double_or("phantom", "attenuation_sapwood", spec.attenuations.sapwood);
  spec.attenuations.knot = c.get_double_or("phantom", "attenuation_knot", spec.attenuations.knot);
  spec.validate();
  const LogPhantom ph = generate_log_phantom(spec);
  save_log(out, ph, spec);
  man.seeds["phantom"] = seed;
  man.outputs = {out, sibling(out, ".labels.rvf"), sibling(out, ".phantom.cfg")};
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  // --section.key=value flags override configuration entries.
  static const std::regex override_re(R"(--([A-Za-z_]\w*)\.([A-Za-z_]\w*)=(.*))");
  Config overrides;
  std::vector<std::string> args;
  for (const auto& a : raw_args) {
    std::smatch m;
    if (std::regex_match(a, m, override_re))
      overrides.set(m[1].str(), m[2].str(), m[3].str());
    else
      args.push_back(a);
  }

  CLI::App app{"Sparse-view fan-beam CT of logs: phantoms, simulation, FBP/TV/LPD reconstruction, training, evaluation",
               "logrecon"};
  app.require_subcommand(1);
  app.footer("Any configuration key can be overridden with --section.key=value.");
  std::string config_path;
  app.add_option("--config", config_path, "sectioned key = value configuration file");

  // phantom
  auto* ph = app.add_subcommand("phantom", "generate a synthetic log volume with knot labels");
  std::string ph_spec, ph_out;
  std::uint64_t ph_seed = 0;
  ph->add_option("--spec", ph_spec, "phantom configuration ([phantom] section)");
  ph->add_option("--seed", ph_seed, "phantom seed");
  ph->add_option("--out", ph_out, "output volume (.rvf); labels and info are written beside it")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate sparse-view sinograms for every slice of a log");
  std::string sim_in, sim_out, sim_strategy = "last", sim_id;
  int sim_sources = 0, sim_window = 1;
  std::uint64_t sim_seed = 0;
  double sim_noise = 0.0;
  sim->add_option("--in", sim_in, "log volume (.rvf)")->required();
  sim->add_option("--sources", sim_sources, "source positions per slice")->required();
  sim->add_option("--window", sim_window, "slices per training window");
  sim->add_option("--strategy", sim_strategy, "target slice within the window: last | middle");
  sim->add_option("--seed", sim_seed, "scan plan and noise seed");
  sim->add_option("--noise", sim_noise, "Gaussian noise sigma added to line integrals");
  sim->add_option("--log-id", sim_id, "log identifier (default: volume file stem)");
  sim->add_option("--out", sim_out, "output directory")->required();

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "reconstruct one slice");
  std::string rec_method, rec_geom, rec_out, rec_model, rec_strategy, rec_filter = "hann";
  std::vector<std::string> rec_sinos;
  double rec_cutoff = 1.0;
  rec->add_option("--method", rec_method, "fbp | tv | lpd2d | lpd25d")->required();
  rec->add_option("--sino", rec_sinos, "sinogram(s) (.rvf); a window of them for lpd25d")->required();
  rec->add_option("--geom", rec_geom, "geometry file (default: the sinogram's .geom.cfg sidecar)");
  rec->add_option("--model", rec_model, "checkpoint for lpd2d / lpd25d");
  rec->add_option("--strategy", rec_strategy, "last | middle (must match the checkpoint)");
  rec->add_option("--filter", rec_filter, "FBP filter: ram-lak | hann");
  rec->add_option("--cutoff", rec_cutoff, "FBP cutoff as a fraction of Nyquist");
  rec->add_option("--out", rec_out, "output image (.rvf)")->required();

  // train
  auto* tr = app.add_subcommand("train", "train an LPD network");
  std::vector<std::string> tr_data, tr_val;
  std::string tr_model, tr_out, tr_history, tr_strategy;
  std::uint64_t tr_seed = 0;
  std::int64_t tr_iters = 0;
  int tr_batch = 0, tr_window = 0;
  double tr_lr0 = 0.0;
  tr->add_option("--data", tr_data, "training dataset directories")->required();
  tr->add_option("--val", tr_val, "validation dataset directories");
  tr->add_option("--model", tr_model, "lpd2d | lpd25d")->required();
  tr->add_option("--window", tr_window, "lpd25d window (default: the dataset's)");
  tr->add_option("--strategy", tr_strategy, "lpd25d target strategy (default: the dataset's)");
  tr->add_option("--seed", tr_seed, "initialisation and shuffling seed");
  tr->add_option("--iterations", tr_iters, "total training iterations");
  tr->add_option("--batch", tr_batch, "minibatch size");
  tr->add_option("--lr0", tr_lr0, "initial learning rate");
  tr->add_option("--history", tr_history, "history CSV (default: beside the checkpoint)");
  tr->add_option("--out", tr_out, "checkpoint path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "metrics for one reconstruction or a method sweep");
  std::string ev_recon, ev_ref, ev_out, ev_knots, ev_profiles, ev_strategies = "last";
  std::vector<std::string> ev_volumes, ev_models;
  std::string ev_sources = "5,9", ev_windows = "3";
  std::uint64_t ev_plan_seed = 0;
  double ev_noise = 0.0;
  bool ev_no_tv = false;
  ev->add_option("--recon", ev_recon, "reconstruction (.rvf)");
  ev->add_option("--ref", ev_ref, "reference image (.rvf)");
  ev->add_option("--volumes", ev_volumes, "test log volumes (.rvf) for a sweep");
  ev->add_option("--models", ev_models, "checkpoints to place in the sweep");
  ev->add_option("--sources", ev_sources, "comma-separated source counts");
  ev->add_option("--windows", ev_windows, "comma-separated lpd25d windows");
  ev->add_option("--strategies", ev_strategies, "comma-separated lpd25d strategies");
  ev->add_option("--plan-seed", ev_plan_seed, "scan plan seed for the test logs");
  ev->add_option("--noise", ev_noise, "noise sigma for the test sinograms");
  ev->add_flag("--no-tv", ev_no_tv, "skip the TV baseline");
  ev->add_option("--knots", ev_knots, "knot Dice table CSV (sweep mode)");
  ev->add_option("--profiles", ev_profiles, "directory for Dice profile CSVs (sweep mode)");
  ev->add_option("--out", ev_out, "metrics CSV");

  // export
  auto* ex = app.add_subcommand("export", "export slices as 16-bit PGM images and montages");
  std::string ex_in, ex_out, ex_slices;
  int ex_cols = 0;
  ex->add_option("--in", ex_in, "image or volume (.rvf)")->required();
  ex->add_option("--slices", ex_slices, "comma-separated slice indices (default: all)");
  ex->add_option("--montage", ex_cols, "also write a montage with this many columns");
  ex->add_option("--out", ex_out, "output directory")->required();

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunManifest man;
  man.command = sub->get_name();
  man.args = raw_args;
  try {
    Config cfg;
    if (!config_path.empty()) {
      require_file(config_path);
      cfg = Config::load(config_path);
      man.inputs.push_back(config_path);
    }
    for (const auto& [s, kv] : overrides.sections())
      for (const auto& [k, v] : kv) cfg.set(s, k, v);

    std::string manifest_path;
    if (sub == ph) {
      cmd_phantom(cfg, ph_spec, ph_seed, ph_out, man);
      manifest_path = sibling(ph_out, ".run.json");
    } else if (sub == sim) {
      if (sim_sources < 1) throw UsageError("--sources must be >= 1");
      if (sim_window < 1) throw UsageError("--window must be >= 1");
      if (sim_noise < 0.0) throw UsageError("--noise must be >= 0");
      TargetStrategy strategy;
      try {
        strategy = parse_strategy(sim_strategy);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const LogPhantom log = load_log(sim_in);
      man.inputs = {sim_in, sibling(sim_in, ".labels.rvf"), sibling(sim_in, ".phantom.cfg")};
      const ScanPlan plan = sample_scan_plan(log.n_slices, sim_sources, sim_seed);
      const FanBeamGeometry tmpl = geometry_template(cfg, log.grid, sim_sources);
      const std::string id = sim_id.empty() ? fs::path(sim_in).stem().string() : sim_id;
      const SliceDataset data = simulate_dataset(log, plan, tmpl, sim_window, strategy, sim_noise, id);
      save_dataset(sim_out, data, log, sim_noise);
      man.seeds["plan"] = sim_seed;
      for (const auto& entry : fs::recursive_directory_iterator(sim_out))
        if (entry.is_regular_file() && entry.path().filename() != "run.json") man.outputs.push_back(entry.path().string());
      std::sort(man.outputs.begin(), man.outputs.end());
      manifest_path = (fs::path(sim_out) / "run.json").string();
      out << "simulated " << data.n_slices() << " slices, " << data.size() << " windows -> " << sim_out << "\n";
    } else if (sub == rec) {
      for (const auto& s : rec_sinos) require_file(s);
      man.inputs = rec_sinos;
      std::vector<Sinogram> sinos;
      for (const auto& s : rec_sinos) {
        Sinogram sino = read_sinogram(s);
        if (!rec_geom.empty()) {
          if (rec_sinos.size() != 1) throw UsageError("--geom applies to a single --sino");
          require_file(rec_geom);
          man.inputs.push_back(rec_geom);
          const FanBeamGeometry g = geometry_from_config(Config::load(rec_geom));
          if (g.sinogram_size() != sino.values.size())
            throw std::runtime_error("'" + rec_geom + "' does not match the shape of '" + s + "'");
          sino = Sinogram(g, std::move(sino.values));
        }
        sinos.push_back(std::move(sino));
      }
      ImageSlice image;
      if (rec_method == "fbp" || rec_method == "tv") {
        if (sinos.size() != 1) throw UsageError("--method " + rec_method + " takes one --sino");
        if (rec_method == "fbp") {
          FbpFilter filter;
          try {
            filter = parse_fbp_filter(rec_filter);
          } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
          }
          image = fbp_reconstruct(sinos[0], sinos[0].geometry, filter, rec_cutoff);
        } else {
          image = tv_pdhg(sinos[0], sinos[0].geometry, tv_config(cfg)).image;
        }
      } else if (rec_method == "lpd2d" || rec_method == "lpd25d") {
        if (rec_model.empty()) throw UsageError("--method " + rec_method + " needs --model");
        require_file(rec_model);
        man.inputs.push_back(rec_model);
        const LpdModel model = load_model(rec_model);
        if (to_string(model.kind) != rec_method)
          throw std::runtime_error("checkpoint '" + rec_model + "' holds an " + to_string(model.kind) + " model");
        if (!rec_strategy.empty()) {
          TargetStrategy s;
          try {
            s = parse_strategy(rec_strategy);
          } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
          }
          if (model.kind == LpdKind::Lpd25d && s != model.strategy)
            throw std::runtime_error("checkpoint '" + rec_model + "' was trained with the " + to_string(model.strategy) +
                                     " strategy");
        }
        image = lpd_reconstruct(model, sinos);
      } else {
        throw UsageError("unknown --method '" + rec_method + "' (fbp | tv | lpd2d | lpd25d)");
      }
      write_image(rec_out, image);
      man.outputs = {rec_out};
      manifest_path = rec_out + ".run.json";
    } else if (sub == tr) {
      LpdKind kind;
      try {
        kind = parse_lpd_kind(tr_model);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::optional<TargetStrategy> strategy;
      if (!tr_strategy.empty()) {
        try {
          strategy = parse_strategy(tr_strategy);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      const TargetStrategy last = TargetStrategy::Last;
      auto load = [&](const std::string& dir) {
        man.inputs.push_back((fs::path(dir) / "dataset.cfg").string());
        if (kind == LpdKind::Lpd2d) return load_dataset(dir, 1, &last);
        return load_dataset(dir, tr_window, strategy ? &*strategy : nullptr);
      };
      std::vector<SliceDataset> train_sets, val_sets;
      for (const auto& d : tr_data) train_sets.push_back(load(d));
      for (const auto& d : tr_val) val_sets.push_back(load(d));

      TrainConfig tc;
      tc.total_iterations = tr_iters > 0 ? tr_iters : cfg.get_int_or("train", "total_iterations", tc.total_iterations);
      tc.batch_size = tr_batch > 0 ? tr_batch : static_cast<int>(cfg.get_int_or("train", "batch_size", tc.batch_size));
      tc.lr0 = tr_lr0 > 0.0 ? tr_lr0 : cfg.get_double_or("train", "lr0", tc.lr0);
      tc.lr_min = cfg.get_double_or("train", "lr_min", tc.lr_min);
      tc.seed = tr_seed;
      tc.checkpoint_every = cfg.get_int_or("train", "checkpoint_every", tc.checkpoint_every);
      tc.validation_every = cfg.get_int_or("train", "validation_every", tc.validation_every);
      tc.log_every = cfg.get_int_or("train", "log_every", tc.log_every);
      tc.checkpoint_path = tr_out;
      try {
        tc.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const int unrolls = static_cast<int>(cfg.get_int_or("lpd", "n_iterations", 3));
      const int filters = static_cast<int>(cfg.get_int_or("lpd", "conv_filters", 32));
      const FanBeamGeometry& g0 = train_sets.front().sinogram(0).geometry;
      LpdModel model;
      if (kind == LpdKind::Lpd2d) {
        const Lpd2dConfig c{unrolls, static_cast<int>(cfg.get_int_or("lpd", "memory_channels", 5)), filters};
        model = make_lpd2d(c, g0, tc.seed);
      } else {
        const SliceDataset& d0 = train_sets.front();
        model = make_lpd25d(Lpd25dConfig{unrolls, d0.window(), d0.strategy(), filters}, g0, tc.seed);
      }
      const TrainResult res = train(model, train_sets, val_sets, tc);
      const std::string history = tr_history.empty() ? sibling(tr_out, ".history.csv") : tr_history;
      write_history_csv(history, res.history);
      man.seeds["train"] = tc.seed;
      man.outputs = {tr_out, tr_out + ".last", history};
      manifest_path = tr_out + ".run.json";
      const auto& steps = res.history.steps;
      out << "trained " << tc.total_iterations << " iterations, loss " << steps.front().loss << " -> " << steps.back().loss;
      if (!val_sets.empty())
        out << ", best validation PSNR " << res.history.best_psnr << " dB at iteration " << res.history.best_iteration;
      out << "\n";
    } else if (sub == ev) {
      if (!ev_recon.empty() || !ev_ref.empty()) {
        if (ev_recon.empty() || ev_ref.empty()) throw UsageError("--recon and --ref go together");
        require_file(ev_recon);
        require_file(ev_ref);
        man.inputs = {ev_recon, ev_ref};
        const RvfArray ref = read_rvf(ev_ref);
        if (ref.dtype != RvfType::Float32 || ref.dims.size() != 2)
          throw std::runtime_error("'" + ev_ref + "' is not a float32 image");
        const ImageGrid grid(static_cast<int>(ref.dims[1]), static_cast<int>(ref.dims[0]), 1.0);
        const ImageSlice r = read_image(ev_recon, grid), x = ImageSlice(grid, ref.f32);
        const double p = psnr(r, x), s = ssim(r, x);
        out << "psnr " << format_double(p) << "\nssim " << format_double(s) << "\n";
        if (!ev_out.empty()) {
          write_csv(ev_out, {{"metric", "value"}, {{"psnr", format_double(p)}, {"ssim", format_double(s)}}});
          man.outputs = {ev_out};
          manifest_path = ev_out + ".run.json";
        }
      } else {
        if (ev_volumes.empty()) throw UsageError("eval needs --recon/--ref or --volumes");
        if (ev_out.empty()) throw UsageError("sweep evaluation needs --out");
        std::vector<LogPhantom> volumes;
        for (const auto& v : ev_volumes) {
          volumes.push_back(load_log(v));
          man.inputs.push_back(v);
        }
        for (const auto& m : ev_models) {
          require_file(m);
          man.inputs.push_back(m);
        }
        SweepConfig sc;
        try {
          sc.source_counts.clear();
          for (const auto& s : split_list(ev_sources)) sc.source_counts.push_back(std::stoi(s));
          sc.window_sizes.clear();
          for (const auto& s : split_list(ev_windows)) sc.window_sizes.push_back(std::stoi(s));
          sc.strategies.clear();
          for (const auto& s : split_list(ev_strategies)) sc.strategies.push_back(parse_strategy(s));
        } catch (const std::exception& e) {
          throw UsageError(std::string("bad sweep list: ") + e.what());
        }
        sc.plan_seed = ev_plan_seed;
        sc.noise_sigma = ev_noise;
        sc.include_tv = !ev_no_tv;
        sc.tv = tv_config(cfg);
        const auto rows = evaluate_sweep(ev_models, volumes, sc);
        write_sweep_csv(ev_out, rows);
        man.outputs.push_back(ev_out);
        for (const auto& r : rows)
          out << r.n_sources << " " << r.method << (r.method == "lpd25d" ? "(w" + std::to_string(r.window) + "," + to_string(r.strategy) + ")" : "")
              << ": " << (r.present ? format_double(r.psnr) + " dB, SSIM " + format_double(r.ssim) : "absent") << "\n";

        if (!ev_knots.empty() || !ev_profiles.empty()) {
          const double threshold = cfg.get_double_or("eval", "threshold", 0.65);
          const int min_px = static_cast<int>(cfg.get_int_or("eval", "min_component_px", 4));
          std::vector<LpdModel> models;
          for (const auto& m : ev_models) models.push_back(load_model(m));
          CsvTable knots;
          knots.header = {"n_sources", "method", "start", "mid", "end", "total", "bulk"};
          for (int n_src : sc.source_counts) {
            std::vector<std::pair<std::string, const LpdModel*>> methods{{"fbp", nullptr}};
            if (sc.include_tv) methods.push_back({"tv", nullptr});
            for (const auto& m : models)
              if (m.n_sources == n_src) methods.push_back({to_string(m.kind), &m});
            for (const auto& [method, model] : methods) {
              std::vector<std::uint8_t> pred, gt;
              std::vector<KnotGroup> groups;
              int z_offset = 0;
              for (std::size_t v = 0; v < volumes.size(); ++v) {
                const LogPhantom& vol = volumes[v];
                const ScanPlan plan = sample_scan_plan(vol.n_slices, n_src, sc.plan_seed + v);
                const SliceDataset d = simulate_dataset(vol, plan, default_fanbeam(vol.grid, equispaced_source_angles(n_src, 0.0)),
                                                        1, TargetStrategy::Last, sc.noise_sigma, "test");
                for (const ImageSlice& r : reconstruct_log(method, d, model, sc)) {
                  const Mask m = threshold_segment(r, threshold, min_px);
                  pred.insert(pred.end(), m.begin(), m.end());
                }
                gt.insert(gt.end(), vol.knot_labels.begin(), vol.knot_labels.end());
                for (const auto& [a, b] : vol.knot_groups) groups.push_back({a + z_offset, b + z_offset});
                z_offset += vol.n_slices;
              }
              if (groups.empty()) throw std::runtime_error("test volumes contain no knot groups");
              const KnotGroupReport rep = knot_group_analysis(pred, gt, volumes.front().slice_size(), groups);
              std::string label = method;
              if (model && model->kind == LpdKind::Lpd25d)
                label += "_w" + std::to_string(model->channels) + "_" + to_string(model->strategy);
              knots.rows.push_back({std::to_string(n_src), label, format_double(rep.start), format_double(rep.mid),
                                    format_double(rep.end), format_double(rep.total), format_double(rep.bulk)});
              if (!ev_profiles.empty()) {
                CsvTable prof;
                prof.header = {"r", "mean", "std"};
                for (std::size_t i = 0; i < rep.profile.r.size(); ++i)
                  prof.rows.push_back({format_double(rep.profile.r[i]), format_double(rep.profile.mean[i]),
                                       format_double(rep.profile.std[i])});
                const std::string p = (fs::path(ev_profiles) / ("profile_" + label + "_" + std::to_string(n_src) + ".csv")).string();
                write_csv(p, prof);
                man.outputs.push_back(p);
              }
            }
          }
          if (!ev_knots.empty()) {
            write_csv(ev_knots, knots);
            man.outputs.push_back(ev_knots);
          }
        }
        manifest_path = ev_out + ".run.json";
      }
    } else if (sub == ex) {
      require_file(ex_in);
      man.inputs = {ex_in};
      const RvfArray a = read_rvf(ex_in);
      if (a.dims.size() != 2 && a.dims.size() != 3) throw std::runtime_error("'" + ex_in + "' is neither an image nor a volume");
      const int nz = a.dims.size() == 3 ? static_cast<int>(a.dims[0]) : 1;
      const int ny = static_cast<int>(a.dims[a.dims.size() - 2]), nx = static_cast<int>(a.dims.back());
      std::vector<float> values = a.f32;
      if (a.dtype == RvfType::UInt8) values.assign(a.u8.begin(), a.u8.end());
      std::vector<int> slices;
      if (ex_slices.empty()) {
        for (int z = 0; z < nz; ++z) slices.push_back(z);
      } else {
        for (const auto& s : split_list(ex_slices)) {
          int z = 0;
          try {
            z = std::stoi(s);
          } catch (const std::exception&) {
            throw UsageError("bad --slices entry '" + s + "'");
          }
          if (z < 0 || z >= nz) throw UsageError("slice " + s + " outside [0, " + std::to_string(nz) + ")");
          slices.push_back(z);
        }
      }
      if (ex_cols < 0) throw UsageError("--montage must be >= 0");
      const std::string stem = fs::path(ex_in).stem().string();
      const std::size_t plane = static_cast<std::size_t>(nx) * ny;
      CsvTable t;
      t.header = {"file", "slice", "min", "max"};
      for (int z : slices) {
        char name[64];
        std::snprintf(name, sizeof(name), "_%03d.pgm", z);
        const std::string p = (fs::path(ex_out) / (stem + name)).string();
        const auto [lo, hi] = write_pgm16(p, std::span<const float>(values).subspan(z * plane, plane), nx, ny);
        t.rows.push_back({fs::path(p).filename().string(), std::to_string(z), format_double(lo), format_double(hi)});
        man.outputs.push_back(p);
      }
      if (ex_cols > 0 && !slices.empty()) {
        const int cols = std::min<int>(ex_cols, static_cast<int>(slices.size()));
        const int rows = (static_cast<int>(slices.size()) + cols - 1) / cols;
        std::vector<float> montage(plane * static_cast<std::size_t>(rows * cols), 0.0f);
        float lo = values[slices[0] * plane];
        for (int z : slices)
          for (std::size_t i = 0; i < plane; ++i) lo = std::min(lo, values[z * plane + i]);
        std::fill(montage.begin(), montage.end(), lo);
        for (std::size_t k = 0; k < slices.size(); ++k) {
          const int r0 = static_cast<int>(k) / cols * ny, c0 = static_cast<int>(k) % cols * nx;
          for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
              montage[static_cast<std::size_t>(r0 + y) * cols * nx + c0 + x] =
                  values[static_cast<std::size_t>(slices[k]) * plane + static_cast<std::size_t>(y) * nx + x];
        }
        const std::string p = (fs::path(ex_out) / (stem + "_montage.pgm")).string();
        const auto [mlo, mhi] = write_pgm16(p, montage, cols * nx, rows * ny);
        t.rows.push_back({fs::path(p).filename().string(), "montage", format_double(mlo), format_double(mhi)});
        man.outputs.push_back(p);
      }
      const std::string csv = (fs::path(ex_out) / "export.csv").string();
      write_csv(csv, t);
      man.outputs.push_back(csv);
      manifest_path = (fs::path(ex_out) / "run.json").string();
    }
    if (!manifest_path.empty()) man.write(manifest_path);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << sub->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace logrecon
