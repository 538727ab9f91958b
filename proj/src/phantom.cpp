#include "logrecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace logrecon {

namespace {

constexpr double kPi = std::numbers::pi;

// Smoothly interpolated Fourier coefficients of the bark perturbation.
class BoundaryModel {
 public:
  explicit BoundaryModel(const LogPhantomSpec& spec) : spec_(spec) {
    const RadiusProfile& rp = spec.outer_radius;
    const int orders = std::max(0, rp.roughness_order - 1);
    const double corr = std::max(1.0, rp.axial_correlation);
    const int n_ctrl = static_cast<int>(std::ceil(spec.n_slices / corr)) + 2;
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> normal(0.0, 1.0);
    cos_.assign(static_cast<std::size_t>(n_ctrl * orders), 0.0);
    sin_.assign(static_cast<std::size_t>(n_ctrl * orders), 0.0);
    for (int c = 0; c < n_ctrl; ++c)
      for (int m = 0; m < orders; ++m) {
        const double sd = rp.roughness / (m + 1);
        cos_[static_cast<std::size_t>(c * orders + m)] = sd * normal(rng);
        sin_[static_cast<std::size_t>(c * orders + m)] = sd * normal(rng);
      }
    orders_ = orders;
    corr_ = corr;
  }

  double radius(int z, double phi) const {
    const RadiusProfile& rp = spec_.outer_radius;
    const double base = rp.base_mm + rp.taper_mm_per_slice * z;
    if (orders_ == 0) return base;
    const double u = z / corr_;
    const int c0 = static_cast<int>(std::floor(u));
    const double t = u - c0;
    const double w = t * t * (3.0 - 2.0 * t);
    double pert = 0.0;
    for (int m = 0; m < orders_; ++m) {
      const auto i0 = static_cast<std::size_t>(c0 * orders_ + m), i1 = static_cast<std::size_t>((c0 + 1) * orders_ + m);
      const double a = (1.0 - w) * cos_[i0] + w * cos_[i1];
      const double b = (1.0 - w) * sin_[i0] + w * sin_[i1];
      pert += a * std::cos((m + 2) * phi) + b * std::sin((m + 2) * phi);
    }
    return base * (1.0 + std::clamp(pert, -0.25, 0.25));
  }

  double mean_radius(int z) const {
    const RadiusProfile& rp = spec_.outer_radius;
    return rp.base_mm + rp.taper_mm_per_slice * z;
  }

 private:
  const LogPhantomSpec& spec_;
  std::vector<double> cos_, sin_;
  int orders_ = 0;
  double corr_ = 1.0;
};

}  // namespace

void LogPhantomSpec::validate() const {
  if (n_slices < 1) throw std::invalid_argument("LogPhantomSpec: n_slices must be >= 1");
  if (grid.n_x < 1 || grid.n_y < 1 || !(grid.pixel_size > 0.0)) throw std::invalid_argument("LogPhantomSpec: invalid grid");
  if (!(slice_spacing_mm > 0.0)) throw std::invalid_argument("LogPhantomSpec: slice spacing must be > 0");
  if (!(heartwood_fraction > 0.0 && heartwood_fraction < 1.0))
    throw std::invalid_argument("LogPhantomSpec: heartwood_fraction must lie in (0, 1)");
  const Attenuations& a = attenuations;
  if (!(a.knot > a.sapwood && a.sapwood >= a.heartwood && a.heartwood > 0.0))
    throw std::invalid_argument("LogPhantomSpec: attenuations must satisfy knot > sapwood >= heartwood > 0");
  if (growth_ring_amplitude < 0.0 || !(growth_ring_period_mm > 0.0))
    throw std::invalid_argument("LogPhantomSpec: invalid growth ring parameters");
  if (!(outer_radius.base_mm > 0.0)) throw std::invalid_argument("LogPhantomSpec: outer radius must be > 0");
  for (const auto& w : whorls) {
    if (w.z_extent < 1) throw std::invalid_argument("KnotWhorl: z_extent must be >= 1");
    if (w.z_start < 0 || w.z_start + w.z_extent > n_slices)
      throw std::invalid_argument("KnotWhorl: slices [" + std::to_string(w.z_start) + ", " +
                                  std::to_string(w.z_start + w.z_extent) + ") outside the volume of " +
                                  std::to_string(n_slices) + " slices");
    if (!(w.cone_half_angle_deg > 0.0 && w.cone_half_angle_deg < 45.0))
      throw std::invalid_argument("KnotWhorl: cone half angle must lie in (0, 45) degrees");
    if (!(w.max_radial_reach > 0.0 && w.max_radial_reach <= 1.0))
      throw std::invalid_argument("KnotWhorl: max_radial_reach must lie in (0, 1]");
  }
}

double LogPhantomSpec::outer_radius_mm(int z, double phi) const { return BoundaryModel(*this).radius(z, phi); }

double LogPhantomSpec::mean_radius_mm(int z) const { return BoundaryModel(*this).mean_radius(z); }

LogPhantomSpec random_log_spec(const ImageGrid& grid, int n_slices, std::uint64_t seed) {
  LogPhantomSpec spec;
  spec.grid = grid;
  spec.n_slices = n_slices;
  spec.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const double extent = std::min(grid.extent_x(), grid.extent_y());
  spec.outer_radius.base_mm = extent * uniform(0.36, 0.42);
  spec.outer_radius.taper_mm_per_slice = -spec.outer_radius.base_mm * uniform(0.0, 0.002);
  spec.outer_radius.roughness = uniform(0.02, 0.05);
  const double pith_r = spec.outer_radius.base_mm * uniform(0.0, 0.1);
  const double pith_phi = uniform(0.0, 2.0 * kPi);
  spec.pith_offset_mm = {pith_r * std::cos(pith_phi), pith_r * std::sin(pith_phi)};
  spec.heartwood_fraction = uniform(0.55, 0.7);
  spec.growth_ring_period_mm = extent * uniform(0.04, 0.06);
  spec.slice_spacing_mm = grid.pixel_size * 2.0;

  int z = static_cast<int>(uniform(2.0, 8.0));
  while (true) {
    KnotWhorl w;
    w.z_start = z;
    w.z_extent = static_cast<int>(uniform(7.0, 12.0));
    if (w.z_start + w.z_extent > n_slices) break;
    const int n_knots = static_cast<int>(uniform(3.0, 6.0));
    const double phase = uniform(0.0, 360.0);
    for (int k = 0; k < n_knots; ++k) {
      double a = phase + 360.0 * k / n_knots + uniform(-15.0, 15.0);
      a = std::fmod(a + 720.0, 360.0);
      w.azimuths_deg.push_back(a);
    }
    w.cone_half_angle_deg = uniform(6.0, 10.0);
    w.max_radial_reach = uniform(0.7, 0.95);
    spec.whorls.push_back(w);
    z += w.z_extent + static_cast<int>(uniform(4.0, 10.0));
  }
  return spec;
}

ImageSlice LogPhantom::slice(int z) const {
  if (z < 0 || z >= n_slices) throw std::out_of_range("LogPhantom: slice index out of range");
  const std::size_t n = grid.size();
  return ImageSlice(grid, std::vector<float>(volume.begin() + static_cast<std::ptrdiff_t>(z * n),
                                             volume.begin() + static_cast<std::ptrdiff_t>((z + 1) * n)));
}

std::vector<std::uint8_t> LogPhantom::label_slice(int z) const {
  if (z < 0 || z >= n_slices) throw std::out_of_range("LogPhantom: slice index out of range");
  const std::size_t n = grid.size();
  return {knot_labels.begin() + static_cast<std::ptrdiff_t>(z * n),
          knot_labels.begin() + static_cast<std::ptrdiff_t>((z + 1) * n)};
}

LogPhantom generate_log_phantom(const LogPhantomSpec& spec) {
  spec.validate();
  const BoundaryModel boundary(spec);
  const ImageGrid& grid = spec.grid;
  LogPhantom ph;
  ph.grid = grid;
  ph.n_slices = spec.n_slices;
  ph.volume.assign(grid.size() * spec.n_slices, 0.0f);
  ph.knot_labels.assign(grid.size() * spec.n_slices, 0);
  for (const auto& w : spec.whorls) {
    ph.whorl_starts.push_back(w.z_start);
    ph.knot_groups.emplace_back(w.z_start, w.z_start + w.z_extent);
  }

  const Attenuations& att = spec.attenuations;
  const double px = spec.pith_offset_mm[0], py = spec.pith_offset_mm[1];

  struct KnotAxis {
    double dx, dy, dz;  // unit axis direction
    double tan_half;
    double reach;  // maximal axial distance
    int z0, z1;
  };

  for (int z = 0; z < spec.n_slices; ++z) {
    const double r_mean = boundary.mean_radius(z);
    std::vector<KnotAxis> knots;
    for (const auto& w : spec.whorls) {
      if (z < w.z_start || z >= w.z_start + w.z_extent) continue;
      const double reach_r = w.max_radial_reach * r_mean;
      const double rise = w.z_extent * spec.slice_spacing_mm;
      const double elev = std::atan2(rise, reach_r);
      for (double az : w.azimuths_deg) {
        const double psi = az * kPi / 180.0;
        knots.push_back({std::cos(psi) * std::cos(elev), std::sin(psi) * std::cos(elev), std::sin(elev),
                         std::tan(w.cone_half_angle_deg * kPi / 180.0), reach_r / std::cos(elev), w.z_start,
                         w.z_start + w.z_extent});
      }
    }

    float* vol = ph.volume.data() + static_cast<std::size_t>(z) * grid.size();
    std::uint8_t* lab = ph.knot_labels.data() + static_cast<std::size_t>(z) * grid.size();
    for (int iy = 0; iy < grid.n_y; ++iy) {
      const double y = grid.y_center(iy);
      for (int ix = 0; ix < grid.n_x; ++ix) {
        const double x = grid.x_center(ix);
        const double r_out = boundary.radius(z, std::atan2(y, x));
        if (std::hypot(x, y) >= r_out) continue;  // air stays exactly zero
        const double rx = x - px, ry = y - py;
        const double r_pith = std::hypot(rx, ry);

        bool is_knot = false;
        for (const auto& k : knots) {
          const double h = (z - k.z0 + 0.5) * spec.slice_spacing_mm;
          const double along = rx * k.dx + ry * k.dy + h * k.dz;
          if (along <= 0.0 || along > k.reach) continue;
          const double dist2 = rx * rx + ry * ry + h * h - along * along;
          const double radius = along * k.tan_half;
          if (dist2 <= radius * radius) {
            is_knot = true;
            break;
          }
        }
        const std::size_t p = static_cast<std::size_t>(iy) * grid.n_x + ix;
        if (is_knot) {
          vol[p] = static_cast<float>(att.knot);
          lab[p] = 1;
          continue;
        }
        const double base = r_pith < spec.heartwood_fraction * r_mean ? att.heartwood : att.sapwood;
        const double ring = spec.growth_ring_amplitude * std::sin(2.0 * kPi * r_pith / spec.growth_ring_period_mm);
        vol[p] = static_cast<float>(base + ring);
      }
    }
  }
  return ph;
}

TargetStrategy parse_strategy(const std::string& name) {
  if (name == "last") return TargetStrategy::Last;
  if (name == "middle") return TargetStrategy::Middle;
  throw std::invalid_argument("unknown strategy '" + name + "' (expected last or middle)");
}

std::string to_string(TargetStrategy s) { return s == TargetStrategy::Last ? "last" : "middle"; }

int target_index(int window, TargetStrategy s) {
  if (window < 1) throw std::invalid_argument("target_index: window must be >= 1");
  return s == TargetStrategy::Last ? window - 1 : window / 2;
}

SliceDataset::SliceDataset(std::string log_id, std::vector<ImageSlice> slices, std::vector<Sinogram> sinograms,
                           ScanPlan plan, int window, TargetStrategy strategy)
    : log_id_(std::move(log_id)),
      slices_(std::move(slices)),
      sinograms_(std::move(sinograms)),
      plan_(std::move(plan)),
      window_(window),
      strategy_(strategy) {
  if (slices_.size() != sinograms_.size()) throw std::invalid_argument("SliceDataset: slice/sinogram count mismatch");
  if (window_ < 1) throw std::invalid_argument("SliceDataset: window must be >= 1");
  if (window_ > static_cast<int>(slices_.size()))
    throw std::invalid_argument("SliceDataset: window " + std::to_string(window_) + " exceeds " +
                                std::to_string(slices_.size()) + " slices");
  const int target = target_index(window_, strategy_);
  for (int s = 0; s + window_ <= static_cast<int>(slices_.size()); ++s) entries_.push_back({s, target});
}

std::vector<ImageSlice> SliceDataset::slice_window(std::size_t entry) const {
  const Entry& e = entries_.at(entry);
  return {slices_.begin() + e.window_start, slices_.begin() + e.window_start + window_};
}

std::vector<Sinogram> SliceDataset::sinogram_window(std::size_t entry) const {
  const Entry& e = entries_.at(entry);
  return {sinograms_.begin() + e.window_start, sinograms_.begin() + e.window_start + window_};
}

int SliceDataset::target_slice(std::size_t entry) const {
  const Entry& e = entries_.at(entry);
  return e.window_start + e.target_index;
}

SliceDataset simulate_dataset(const LogPhantom& phantom, const ScanPlan& plan, const FanBeamGeometry& geom_template,
                              int window, TargetStrategy strategy, double noise_sigma, std::string log_id) {
  if (plan.n_slices != phantom.n_slices)
    throw std::invalid_argument("simulate_dataset: plan has " + std::to_string(plan.n_slices) + " slices, phantom " +
                                std::to_string(phantom.n_slices));
  if (window < 1 || window > phantom.n_slices)
    throw std::invalid_argument("simulate_dataset: window must lie in [1, n_slices]");
  if (!(geom_template.grid() == phantom.grid)) throw std::invalid_argument("simulate_dataset: geometry grid mismatch");
  if (noise_sigma < 0.0) throw std::invalid_argument("simulate_dataset: noise_sigma must be >= 0");

  std::vector<ImageSlice> slices;
  std::vector<Sinogram> sinos;
  std::mt19937_64 rng(plan.seed ^ 0xa0761d6478bd642full);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  for (int z = 0; z < phantom.n_slices; ++z) {
    slices.push_back(phantom.slice(z));
    const FanBeamGeometry geom = geom_template.with_angles(plan.slice_angles(z));
    Sinogram s = forward_project(slices.back(), geom);
    if (noise_sigma > 0.0)
      for (float& v : s.values) v = static_cast<float>(v + noise(rng));
    sinos.push_back(std::move(s));
  }
  return SliceDataset(std::move(log_id), std::move(slices), std::move(sinos), plan, window, strategy);
}

LogSplit split_logs(const std::vector<std::string>& log_ids, std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  int nonzero = 0;
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split_logs: ratios must be non-negative");
    total += r;
    nonzero += r > 0.0;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split_logs: ratios must sum to 1");
  const int n = static_cast<int>(log_ids.size());
  if (n < nonzero)
    throw std::invalid_argument("split_logs: " + std::to_string(n) + " logs cannot fill " + std::to_string(nonzero) +
                                " nonempty buckets");

  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int b = 0; b < 3; ++b) {
    const double exact = ratios[static_cast<std::size_t>(b)] * n;
    counts[static_cast<std::size_t>(b)] = static_cast<int>(std::floor(exact + 1e-9));
    rem[static_cast<std::size_t>(b)] = exact - counts[static_cast<std::size_t>(b)];
    assigned += counts[static_cast<std::size_t>(b)];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[static_cast<std::size_t>(a)] > rem[static_cast<std::size_t>(b)]; });
  for (int i = 0; assigned < n; ++i, ++assigned) ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(i % 3)])];
  for (int b = 0; b < 3; ++b) {
    if (ratios[static_cast<std::size_t>(b)] > 0.0 && counts[static_cast<std::size_t>(b)] == 0) {
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      counts[static_cast<std::size_t>(b)] = 1;
    }
  }

  std::vector<std::string> shuffled = log_ids;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  LogSplit split;
  auto it = shuffled.begin();
  split.train.assign(it, it + counts[0]);
  it += counts[0];
  split.validation.assign(it, it + counts[1]);
  it += counts[1];
  split.test.assign(it, it + counts[2]);
  return split;
}

}  // namespace logrecon
