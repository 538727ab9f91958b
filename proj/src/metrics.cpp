#include "logrecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace logrecon {

double psnr(std::span<const float> x, std::span<const float> ref, std::optional<double> data_range) {
  if (x.size() != ref.size()) throw std::invalid_argument("psnr: shape mismatch");
  if (ref.empty()) throw std::invalid_argument("psnr: empty images");
  double range;
  if (data_range) {
    range = *data_range;
  } else {
    const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
    range = static_cast<double>(*hi) - *lo;
  }
  if (!(range > 0.0)) throw std::invalid_argument("psnr: data_range must be > 0");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - ref[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

double psnr(const ImageSlice& x, const ImageSlice& ref, std::optional<double> data_range) {
  if (!(x.grid == ref.grid)) throw std::invalid_argument("psnr: grid mismatch");
  return psnr(x.values, ref.values, data_range);
}

namespace {

// Valid-mode separable filtering of an h x w image with a 1D kernel.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const ImageSlice& x, const ImageSlice& ref, const SsimOptions& opts) {
  if (!(x.grid == ref.grid)) throw std::invalid_argument("ssim: grid mismatch");
  const int h = ref.grid.n_y, w = ref.grid.n_x, n = opts.window;
  if (n < 1 || h < n || w < n)
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
  double range;
  if (opts.data_range) {
    range = *opts.data_range;
  } else {
    const auto [lo, hi] = std::minmax_element(ref.values.begin(), ref.values.end());
    range = static_cast<double>(*hi) - *lo;
  }
  if (!(range > 0.0)) throw std::invalid_argument("ssim: data_range must be > 0");

  std::vector<double> k(static_cast<std::size_t>(n));
  double ksum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - 0.5 * (n - 1);
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * opts.sigma * opts.sigma));
    ksum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= ksum;

  const std::size_t size = x.values.size();
  std::vector<double> a(size), b(size), aa(size), bb(size), ab(size);
  for (std::size_t i = 0; i < size; ++i) {
    a[i] = x.values[i];
    b[i] = ref.values[i];
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, k), mu_b = filter_valid(b, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k), e_ab = filter_valid(ab, h, w, k);
  const double c1 = (opts.k1 * range) * (opts.k1 * range);
  const double c2 = (opts.k2 * range) * (opts.k2 * range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dice: shape mismatch");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

int KnotGroup::start_count() const { return (2 * length() + 5) / 10; }
int KnotGroup::end_count() const { return (2 * length() + 5) / 10; }

KnotGroupReport knot_group_analysis(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                    std::size_t slice_size, const std::vector<KnotGroup>& groups) {
  if (pred.size() != gt.size()) throw std::invalid_argument("knot_group_analysis: shape mismatch");
  if (groups.empty()) throw std::invalid_argument("knot_group_analysis: empty group list");
  if (slice_size == 0 || gt.size() % slice_size != 0)
    throw std::invalid_argument("knot_group_analysis: volume size is not a multiple of the slice size");
  const int n_slices = static_cast<int>(gt.size() / slice_size);

  KnotGroupReport rep;
  double sum_start = 0, sum_mid = 0, sum_end = 0;
  int n_start = 0, n_mid = 0, n_end = 0;
  for (const auto& g : groups) {
    if (g.z_start < 0 || g.z_end > n_slices || g.z_end <= g.z_start)
      throw std::invalid_argument("knot_group_analysis: group [" + std::to_string(g.z_start) + ", " +
                                  std::to_string(g.z_end) + ") outside the volume");
    std::vector<double> scores;
    for (int z = g.z_start; z < g.z_end; ++z)
      scores.push_back(dice(pred.subspan(static_cast<std::size_t>(z) * slice_size, slice_size),
                            gt.subspan(static_cast<std::size_t>(z) * slice_size, slice_size)));
    const int ns = g.start_count(), ne = g.end_count(), len = g.length();
    for (int i = 0; i < len; ++i) {
      const double s = scores[static_cast<std::size_t>(i)];
      if (i < ns) {
        sum_start += s;
        ++n_start;
      } else if (i >= len - ne) {
        sum_end += s;
        ++n_end;
      } else {
        sum_mid += s;
        ++n_mid;
      }
    }
    rep.slice_scores.push_back(std::move(scores));
  }
  rep.start = n_start ? sum_start / n_start : 0.0;
  rep.mid = n_mid ? sum_mid / n_mid : 0.0;
  rep.end = n_end ? sum_end / n_end : 0.0;
  rep.total = (sum_start + sum_mid + sum_end) / (n_start + n_mid + n_end);
  rep.bulk = dice(pred, gt);

  DiceProfile& prof = rep.profile;
  prof.r.resize(kProfilePoints);
  prof.mean.assign(kProfilePoints, 0.0);
  prof.std.assign(kProfilePoints, 0.0);
  std::vector<std::vector<double>> curves;
  for (const auto& scores : rep.slice_scores) {
    std::vector<double> curve(kProfilePoints);
    const int len = static_cast<int>(scores.size());
    for (int p = 0; p < kProfilePoints; ++p) {
      const double r = static_cast<double>(p) / (kProfilePoints - 1);
      if (len == 1) {
        curve[static_cast<std::size_t>(p)] = scores[0];
        continue;
      }
      const double pos = r * (len - 1);
      const int i0 = std::min(static_cast<int>(std::floor(pos)), len - 2);
      const double t = pos - i0;
      curve[static_cast<std::size_t>(p)] =
          (1.0 - t) * scores[static_cast<std::size_t>(i0)] + t * scores[static_cast<std::size_t>(i0 + 1)];
    }
    curves.push_back(std::move(curve));
  }
  for (int p = 0; p < kProfilePoints; ++p) {
    prof.r[static_cast<std::size_t>(p)] = static_cast<double>(p) / (kProfilePoints - 1);
    double m = 0.0;
    for (const auto& c : curves) m += c[static_cast<std::size_t>(p)];
    m /= static_cast<double>(curves.size());
    double v = 0.0;
    for (const auto& c : curves) v += (c[static_cast<std::size_t>(p)] - m) * (c[static_cast<std::size_t>(p)] - m);
    prof.mean[static_cast<std::size_t>(p)] = m;
    prof.std[static_cast<std::size_t>(p)] = std::sqrt(v / static_cast<double>(curves.size()));
  }
  return rep;
}

Mask threshold_segment(const ImageSlice& image, double threshold, int min_component_px) {
  const int h = image.grid.n_y, w = image.grid.n_x;
  Mask mask(image.values.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = image.values[i] > threshold ? 1 : 0;
  if (min_component_px <= 1) return mask;

  std::vector<int> label(mask.size(), -1);
  std::vector<std::size_t> stack, component;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || label[seed] >= 0) continue;
    component.clear();
    stack.assign(1, seed);
    label[seed] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const int y = static_cast<int>(p / static_cast<std::size_t>(w)), x = static_cast<int>(p % static_cast<std::size_t>(w));
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
        const std::size_t qi = static_cast<std::size_t>(q[0]) * w + q[1];
        if (mask[qi] && label[qi] < 0) {
          label[qi] = 1;
          stack.push_back(qi);
        }
      }
    }
    if (static_cast<int>(component.size()) < min_component_px)
      for (std::size_t p : component) mask[p] = 0;
  }
  return mask;
}

}  // namespace logrecon
