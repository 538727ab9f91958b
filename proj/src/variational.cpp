#include "logrecon/variational.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>

namespace logrecon {

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Upper bound of |grad|^2 for unit-spaced forward differences in 2D.
constexpr double kGradNormSq = 8.0;

// Rounds up to three significant digits so tiny seed-dependent differences in
// the estimate do not leak into the step sizes.
double round_up_3(double v) {
  if (!(v > 0.0)) return v;
  const double p = std::pow(10.0, std::floor(std::log10(v)) - 2.0);
  return std::ceil(v / p * (1.0 - 1e-12)) * p;
}

void gradient(const std::vector<double>& x, int h, int w, std::vector<double>& gx, std::vector<double>& gy) {
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * w + j;
      gx[p] = j + 1 < w ? x[p + 1] - x[p] : 0.0;
      gy[p] = i + 1 < h ? x[p + static_cast<std::size_t>(w)] - x[p] : 0.0;
    }
}

// Adjoint of gradient (i.e. minus the divergence), accumulated into out.
void gradient_adjoint_add(const std::vector<double>& gx, const std::vector<double>& gy, int h, int w, double scale,
                          std::vector<double>& out) {
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * w + j;
      double v = 0.0;
      if (j + 1 < w) v -= gx[p];
      if (j > 0) v += gx[p - 1];
      if (i + 1 < h) v -= gy[p];
      if (i > 0) v += gy[p - static_cast<std::size_t>(w)];
      out[p] += scale * v;
    }
}

}  // namespace

std::vector<double> opnorm_power_history(const FanBeamGeometry& geom, int n_iter, std::uint64_t seed) {
  if (n_iter < 1) throw std::invalid_argument("opnorm_power_iteration: n_iter must be >= 1");
  const std::size_t n = geom.grid().size();
  std::vector<double> v(n), sino(geom.sinogram_size()), w(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : v) x = normal(rng);
  std::vector<double> history;
  double nv = norm2(v);
  for (double& x : v) x /= nv;
  for (int k = 0; k < n_iter; ++k) {
    forward_project(v, geom, sino);
    back_project(sino, geom, w);
    const double nw = norm2(w);
    const double est = std::sqrt(nw);
    history.push_back(history.empty() ? est : std::max(est, history.back()));
    if (nw == 0.0) break;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
  }
  return history;
}

double opnorm_power_iteration(const FanBeamGeometry& geom, int n_iter, std::uint64_t seed) {
  return opnorm_power_history(geom, n_iter, seed).back();
}

static double tv_energy_impl(const std::vector<double>& xd, int h, int w, const Sinogram& sino, const FanBeamGeometry& geom,
                      double lambda, std::vector<double>& gx, std::vector<double>& gy);

double tv_energy(const ImageSlice& x, const Sinogram& sino, const FanBeamGeometry& geom, double lambda) {
  const int h = geom.grid().n_y, w = geom.grid().n_x;
  std::vector<double> xd(x.values.begin(), x.values.end()), gx(xd.size()), gy(xd.size());
  return tv_energy_impl(xd, h, w, sino, geom, lambda, gx, gy);
}

static double tv_energy_impl(const std::vector<double>& xd, int h, int w, const Sinogram& sino, const FanBeamGeometry& geom,
                      double lambda, std::vector<double>& gx, std::vector<double>& gy) {
  std::vector<double> ax(geom.sinogram_size());
  forward_project(std::span<const double>(xd), geom, std::span<double>(ax));
  double fid = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double d = ax[i] - sino.values[i];
    fid += d * d;
  }
  gradient(xd, h, w, gx, gy);
  double tv = 0.0;
  for (std::size_t i = 0; i < xd.size(); ++i) tv += std::hypot(gx[i], gy[i]);
  return 0.5 * fid + lambda * tv;
}

TVResult tv_pdhg(const Sinogram& sino, const FanBeamGeometry& geom, const TVConfig& config) {
  if (sino.values.size() != geom.sinogram_size()) throw std::invalid_argument("tv_pdhg: sinogram shape mismatch");
  if (config.lambda < 0.0) throw std::invalid_argument("tv_pdhg: lambda must be >= 0");
  if (config.n_iter < 1) throw std::invalid_argument("tv_pdhg: n_iter must be >= 1");
  if (config.theta < 0.0 || config.theta > 1.0) throw std::invalid_argument("tv_pdhg: theta must lie in [0, 1]");

  const double a_norm = round_up_3(opnorm_power_iteration(geom, config.power_iterations, config.seed));
  if (!(a_norm > 0.0)) throw std::invalid_argument("tv_pdhg: forward operator is zero");
  // TV block scaled by mu so that |mu grad| matches |A|.
  const double mu = a_norm / std::sqrt(kGradNormSq);
  const double lam = config.lambda / mu;
  const double l2 = a_norm * a_norm;
  const double tau = config.tau > 0.0 ? config.tau : 0.99 / l2;
  const double sigma = config.sigma > 0.0 ? config.sigma : 0.49;
  // The data term takes an explicit gradient step (Lipschitz constant |A|^2).
  if (!(1.0 / tau - sigma * l2 > 0.5 * l2))
    throw std::invalid_argument("tv_pdhg: step sizes violate 1/tau - sigma |A|^2 > |A|^2 / 2");

  const int h = geom.grid().n_y, w = geom.grid().n_x;
  const std::size_t n = geom.grid().size(), m = geom.sinogram_size();
  std::vector<double> x(n, 0.0), x_old(n), qx(n, 0.0), qy(n, 0.0), gx(n), gy(n), kt(n), ext(n);
  std::vector<double> ax(m), r(m);

  TVResult res;
  res.operator_norm = std::sqrt(2.0) * a_norm;
  res.energy.reserve(static_cast<std::size_t>(config.n_iter));
  ImageSlice current(geom.grid());
  for (int it = 0; it < config.n_iter; ++it) {
    // Primal: gradient of the data term plus the adjoint of the TV dual.
    forward_project(std::span<const double>(x), geom, std::span<double>(ax));
    for (std::size_t i = 0; i < m; ++i) r[i] = ax[i] - static_cast<double>(sino.values[i]);
    back_project(std::span<const double>(r), geom, std::span<double>(kt));
    gradient_adjoint_add(qx, qy, h, w, mu, kt);
    x_old = x;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = x_old[i] - tau * kt[i];
      ext[i] = x[i] + config.theta * (x[i] - x_old[i]);
    }

    // Dual: projection onto the lambda ball.
    gradient(ext, h, w, gx, gy);
    for (std::size_t i = 0; i < n; ++i) {
      const double ux = qx[i] + sigma * mu * gx[i];
      const double uy = qy[i] + sigma * mu * gy[i];
      const double mag = std::hypot(ux, uy);
      if (lam == 0.0) {
        qx[i] = qy[i] = 0.0;
      } else {
        const double shrink = std::max(1.0, mag / lam);
        qx[i] = ux / shrink;
        qy[i] = uy / shrink;
      }
    }
    res.energy.push_back(tv_energy_impl(x, h, w, sino, geom, config.lambda, gx, gy));
  }
  for (std::size_t i = 0; i < n; ++i) current.values[i] = static_cast<float>(x[i]);
  res.image = std::move(current);
  return res;
}

}  // namespace logrecon
