#include <doctest.h>

#include <algorithm>
#include <memory>
#include <stdexcept>

#include "fd_check.hpp"
#include "logrecon/autodiff.hpp"
#include "logrecon/lpd.hpp"

// Built against the double-precision copy of the library.
static_assert(sizeof(logrecon::Real) == sizeof(double));

using namespace logrecon;
using namespace testing;

namespace {
constexpr int kSeeds = 20;
constexpr double kH = 1e-3;
constexpr double kOpTol = 1e-4;
constexpr double kLpdTol = 1e-3;
// Smaller step for the deep composition so no perturbation crosses a PReLU kink.
constexpr double kLpdH = 1e-6;
}  // namespace

TEST_SUITE("gradcheck") {
  TEST_CASE("conv2d gradients") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      std::vector<Tensor> leaves{random_tensor({2, 3, 9, 8}, s), random_tensor({4, 3, 7, 7}, s + 100, -0.2, 0.2),
                                 random_tensor({4}, s + 200)};
      const double err = directional_gradient_error(
          leaves, [](Tape&, const std::vector<Var>& v) { return conv2d(v[0], v[1], v[2]); }, s, kH);
      CHECK(err <= kOpTol);
    }
  }

  TEST_CASE("prelu gradients") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      std::vector<Tensor> leaves{away_from_zero({2, 3, 5, 4}, s), random_tensor({3}, s + 1, 0.0, 0.5)};
      const double err = directional_gradient_error(
          leaves, [](Tape&, const std::vector<Var>& v) { return prelu(v[0], v[1]); }, s, kH);
      CHECK(err <= kOpTol);
    }
  }

  TEST_CASE("add, scale, concat and slice gradients") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      std::vector<Tensor> leaves{random_tensor({2, 2, 4, 5}, s), random_tensor({2, 2, 4, 5}, s + 1),
                                 random_tensor({2, 1, 4, 5}, s + 2)};
      CHECK(directional_gradient_error(
                leaves, [](Tape&, const std::vector<Var>& v) { return add(v[0], scale(v[1], -1.7f)); }, s, kH) <=
            kOpTol);
      CHECK(directional_gradient_error(
                leaves,
                [](Tape&, const std::vector<Var>& v) { return slice_channels(concat_channels({v[0], v[2], v[1]}), 1, 3); },
                s, kH) <= kOpTol);
    }
  }

  TEST_CASE("sum and mse gradients") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      std::vector<Tensor> leaves{random_tensor({1, 2, 3, 3}, s), random_tensor({1, 2, 3, 3}, s + 1)};
      CHECK(directional_gradient_error(
                leaves, [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }, s, kH) <= kOpTol);
      CHECK(directional_gradient_error(
                leaves, [](Tape&, const std::vector<Var>& v) { return mse_loss(v[0], v[1]); }, s, kH) <= kOpTol);
    }
  }

  TEST_CASE("projection node gradients in both directions") {
    const ImageGrid g(8, 8, 1.0);
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      auto g1 = std::make_shared<const FanBeamGeometry>(default_fanbeam(g, equispaced_source_angles(3, double(s))));
      auto g2 = std::make_shared<const FanBeamGeometry>(default_fanbeam(g, equispaced_source_angles(3, double(s) + 40)));
      const std::vector<std::shared_ptr<const FanBeamGeometry>> geoms{g1, g2};
      std::vector<Tensor> img{random_tensor({1, 2, 8, 8}, s)};
      CHECK(directional_gradient_error(
                img, [&](Tape&, const std::vector<Var>& v) { return project_node(v[0], geoms, ProjectDirection::Forward); },
                s, kH) <= kOpTol);
      std::vector<Tensor> sino{random_tensor({1, 2, 3, g1->n_detector_bins()}, s)};
      CHECK(directional_gradient_error(
                sino, [&](Tape&, const std::vector<Var>& v) { return project_node(v[0], geoms, ProjectDirection::Adjoint); },
                s, kH) <= kOpTol);
    }
  }

  TEST_CASE("conv2d weight gradient of sum, elementwise") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      const Tensor x = random_tensor({1, 2, 8, 8}, s);
      const Tensor w = random_tensor({3, 2, 7, 7}, s + 7, -0.3, 0.3);
      const Tensor b = random_tensor({3}, s + 9);
      auto f = [&](const Tensor& wt) {
        Tape tape;
        return static_cast<double>(sum(conv2d(tape.constant(x), tape.constant(wt), tape.constant(b))).value().data[0]);
      };
      Tape tape;
      Var wv = tape.variable(w);
      tape.backward(sum(conv2d(tape.constant(x), wv, tape.constant(b))));
      double worst = 0.0;
      for (std::size_t i = 0; i < w.numel(); i += 7) {
        Tensor up = w, down = w;
        up.data[i] += kH;
        down.data[i] -= kH;
        const double numeric = (f(up) - f(down)) / (2 * kH);
        const double analytic = wv.grad().data[i];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12}));
      }
      CHECK(worst <= kOpTol);
    }
  }

  TEST_CASE("sum(prelu(conv2d(x))) composite at non-kink points") {
    // Coordinates whose perturbation moves a PReLU input across zero are skipped.
    int checked = 0;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      const Tensor x = random_tensor({1, 2, 8, 8}, s), w = random_tensor({3, 2, 7, 7}, s + 3, -0.3, 0.3);
      const Tensor b = random_tensor({3}, s + 4), a = random_tensor({3}, s + 5, 0.0, 0.5);
      auto conv = [&](const Tensor& xi) {
        Tape tape;
        return conv2d(tape.constant(xi), tape.constant(w), tape.constant(b)).value();
      };
      auto f = [&](const Tensor& xi) {
        Tape tape;
        return double(sum(prelu(conv2d(tape.constant(xi), tape.constant(w), tape.constant(b)), tape.constant(a))).value().data[0]);
      };
      Tape tape;
      Var xv = tape.variable(x);
      tape.backward(sum(prelu(conv2d(xv, tape.constant(w), tape.constant(b)), tape.constant(a))));
      for (std::size_t i = 0; i < x.numel(); i += 3) {
        Tensor up = x, down = x;
        up.data[i] += kH;
        down.data[i] -= kH;
        const Tensor cu = conv(up), cd = conv(down);
        bool kink = false;
        for (std::size_t j = 0; j < cu.numel(); ++j) kink |= (cu.data[j] > 0) != (cd.data[j] > 0);
        if (kink) continue;
        const double numeric = (f(up) - f(down)) / (2 * kH);
        const double analytic = xv.grad().data[i];
        CHECK(std::abs(analytic - numeric) <= kOpTol * std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
        ++checked;
      }
    }
    CHECK(checked > 200);
  }

  TEST_CASE("mse gradient is 2 (pred - target) / N") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      const Tensor p = random_tensor({2, 1, 3, 4}, s), t = random_tensor({2, 1, 3, 4}, s + 50);
      Tape tape;
      Var pv = tape.variable(p);
      tape.backward(mse_loss(pv, tape.constant(t)));
      const double n = static_cast<double>(p.numel());
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double closed = 2.0 * (p.data[i] - t.data[i]) / n;
        Tensor up = p, down = p;
        up.data[i] += kH;
        down.data[i] -= kH;
        Tape a, b;
        const double numeric = (mse_loss(a.constant(up), a.constant(t)).value().data[0] -
                                mse_loss(b.constant(down), b.constant(t)).value().data[0]) / (2 * kH);
        CHECK(std::abs(pv.grad().data[i] - closed) <= 1e-12);
        CHECK(std::abs(numeric - closed) <= 1e-5 * std::max(1.0, std::abs(closed)));
      }
    }
  }

  TEST_CASE("composed LPD forward passes finite differences") {
    const ImageGrid g(8, 8, 1.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const FanBeamGeometry geom = default_fanbeam(g, equispaced_source_angles(3, double(s)));
      LpdModel m = make_lpd2d({2, 2, 4}, geom, s);
      // Zero biases put PReLU inputs exactly on the kink wherever the stack input
      // vanishes; random biases move the check to a differentiable point.
      for (auto& [name, t] : m.params)
        if (name.ends_with("bias")) t = away_from_zero(t.shape, s + 991);
      const std::vector<GeometryPtr> geoms{std::make_shared<const FanBeamGeometry>(geom)};
      std::vector<std::string> names;
      std::vector<Tensor> leaves{random_tensor({1, 1, 3, geom.n_detector_bins()}, s, 0.0, 5.0)};
      for (const auto& [name, t] : m.params) {
        names.push_back(name);
        leaves.push_back(t);
      }
      const double err = directional_gradient_error(
          leaves,
          [&](Tape&, const std::vector<Var>& v) {
            std::map<std::string, Var> bound;
            for (std::size_t i = 0; i < names.size(); ++i) bound.emplace(names[i], v[i + 1]);
            return lpd_output(m, bound, v[0], geoms);
          },
          s, kLpdH);
      CHECK(err <= kLpdTol);
    }
  }

  TEST_CASE("composed 2.5D LPD with per-slice geometries passes finite differences") {
    const ImageGrid g(8, 8, 1.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const FanBeamGeometry base = default_fanbeam(g, equispaced_source_angles(3, 0.0));
      LpdModel m = make_lpd25d({2, 3, s % 2 ? TargetStrategy::Middle : TargetStrategy::Last, 4}, base, s);
      for (auto& [name, t] : m.params)
        if (name.ends_with("bias")) t = away_from_zero(t.shape, s + 991);
      std::vector<GeometryPtr> geoms;
      for (int i = 0; i < 3; ++i)
        geoms.push_back(std::make_shared<const FanBeamGeometry>(base.with_angles(equispaced_source_angles(3, 7.0 * i + s))));
      std::vector<std::string> names;
      std::vector<Tensor> leaves{random_tensor({1, 3, 3, base.n_detector_bins()}, s, 0.0, 5.0)};
      for (const auto& [name, t] : m.params) {
        names.push_back(name);
        leaves.push_back(t);
      }
      const double err = directional_gradient_error(
          leaves,
          [&](Tape&, const std::vector<Var>& v) {
            std::map<std::string, Var> bound;
            for (std::size_t i = 0; i < names.size(); ++i) bound.emplace(names[i], v[i + 1]);
            return lpd_output(m, bound, v[0], geoms);
          },
          s, kLpdH);
      CHECK(err <= kLpdTol);
    }
  }
}
