#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "logrecon/metrics.hpp"
#include "logrecon/phantom.hpp"
#include "test_support.hpp"

using namespace logrecon;
using namespace testing;

TEST_SUITE("metrics") {
  TEST_CASE("psnr closed forms") {
    const ImageGrid g(10, 10, 1.0);
    ImageSlice ref(g), x(g);
    for (std::size_t i = 0; i < g.size(); ++i) x.values[i] = (i % 2 ? 0.1f : -0.1f);
    CHECK(psnr(x, ref, 1.0) == doctest::Approx(20.0).epsilon(1e-6));
    for (std::size_t i = 0; i < g.size(); ++i) x.values[i] = (i % 2 ? 0.01f : -0.01f);
    CHECK(psnr(x, ref, 1.0) == doctest::Approx(40.0).epsilon(1e-6));
    CHECK(psnr(ref, ref, 1.0) == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(psnr(x, ImageSlice(ImageGrid(5, 5, 1.0)), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(psnr(x, ref, 0.0), std::invalid_argument);
  }

  TEST_CASE("psnr is symmetric and decreasing in MSE") {
    const ImageGrid g(16, 16, 1.0);
    const ImageSlice a(g, random_vector(g.size(), 1)), b(g, random_vector(g.size(), 2));
    CHECK(psnr(a, b, 2.0) == doctest::Approx(psnr(b, a, 2.0)));
    ImageSlice c = a;
    for (std::size_t i = 0; i < g.size(); ++i) c.values[i] = 0.5f * (a.values[i] + b.values[i]);
    CHECK(psnr(c, b, 2.0) > psnr(a, b, 2.0));
    // Default range comes from the reference.
    CHECK(psnr(a, b) == doctest::Approx(psnr(a, b, 1.0 * (*std::max_element(b.values.begin(), b.values.end()) -
                                                         *std::min_element(b.values.begin(), b.values.end())))));
  }

  TEST_CASE("ssim identities and oracle") {
    const ImageGrid g(32, 32, 1.0);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const ImageSlice a(g, random_vector(g.size(), s, 0.0, 1.0)), b(g, random_vector(g.size(), s + 50, 0.0, 1.0));
      CHECK(ssim(a, a) == 1.0);
      CHECK(ssim(a, b, {11, 1.5, 0.01, 0.03, 1.0}) == doctest::Approx(ssim(b, a, {11, 1.5, 0.01, 0.03, 1.0})));
      CHECK(std::abs(ssim(a, b, {11, 1.5, 0.01, 0.03, 1.0}) - ssim_oracle(a, b, 1.0)) <= 1e-10);
    }
    ImageSlice flat(g), noisy(g);
    const auto noise = random_vector(g.size(), 9, -0.5, 0.5);
    for (std::size_t i = 0; i < g.size(); ++i) {
      flat.values[i] = 0.5f;
      noisy.values[i] = 0.5f + noise[i];
    }
    CHECK(ssim(noisy, flat, {11, 1.5, 0.01, 0.03, 1.0}) < 0.5);
    CHECK_THROWS_AS(ssim(ImageSlice(ImageGrid(8, 8, 1.0)), ImageSlice(ImageGrid(8, 8, 1.0))), std::invalid_argument);
  }

  TEST_CASE("dice identities") {
    const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{0, 0, 1, 1}, c{1, 0, 1, 0}, e{0, 0, 0, 0};
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, b) == 0.0);
    CHECK(dice(a, c) == 0.5);
    CHECK(dice(e, e) == 1.0);
    CHECK(dice(e, a) == 0.0);
    CHECK(dice(a, c) == dice(c, a));
    CHECK_THROWS_AS(dice(a, std::vector<std::uint8_t>{1}), std::invalid_argument);
  }

  TEST_CASE("knot group regions split 20/60/20 with half-up rounding") {
    const KnotGroup g10{0, 10};
    CHECK(g10.start_count() == 2);
    CHECK(g10.mid_count() == 6);
    CHECK(g10.end_count() == 2);
    const KnotGroup g7{3, 10};  // 1.4 -> 1
    CHECK(g7.start_count() == 1);
    const KnotGroup g8{0, 8};  // 1.6 -> 2
    CHECK(g8.start_count() == 2);
    const KnotGroup g5{0, 5};  // 1.0
    CHECK(g5.start_count() == 1);
    CHECK(g5.mid_count() == 3);
  }

  TEST_CASE("knot group analysis") {
    const std::size_t ss = 4;
    const int nz = 12;
    std::vector<std::uint8_t> gt(ss * nz, 0);
    for (int z = 1; z < 11; ++z) gt[z * ss] = gt[z * ss + 1] = 1;
    const std::vector<KnotGroup> groups{{1, 11}};

    SUBCASE("perfect prediction") {
      const KnotGroupReport r = knot_group_analysis(gt, gt, ss, groups);
      CHECK(r.start == 1.0);
      CHECK(r.mid == 1.0);
      CHECK(r.end == 1.0);
      CHECK(r.total == 1.0);
      CHECK(r.bulk == 1.0);
      REQUIRE(r.profile.r.size() == kProfilePoints);
      for (int p = 0; p < kProfilePoints; ++p) {
        CHECK(r.profile.mean[p] == 1.0);
        CHECK(r.profile.std[p] == 0.0);
      }
    }
    SUBCASE("perfect middle, empty ends") {
      std::vector<std::uint8_t> pred = gt;
      for (int z : {1, 2, 9, 10}) pred[z * ss] = pred[z * ss + 1] = 0;
      const KnotGroupReport r = knot_group_analysis(pred, gt, ss, groups);
      CHECK(r.mid == 1.0);
      CHECK(r.start == 0.0);
      CHECK(r.end == 0.0);
      CHECK(r.total == doctest::Approx(0.6));
      // Brute-force slice loop.
      double acc = 0.0;
      for (int z = 1; z < 11; ++z)
        acc += dice(std::span(pred).subspan(z * ss, ss), std::span(gt).subspan(z * ss, ss));
      CHECK(r.total == doctest::Approx(acc / 10));
      CHECK(r.profile.mean.front() == 0.0);
      CHECK(r.profile.mean[50] == 1.0);
    }
    CHECK_THROWS_AS(knot_group_analysis(gt, gt, ss, {}), std::invalid_argument);
    CHECK_THROWS_AS(knot_group_analysis(gt, gt, ss, {{5, 20}}), std::invalid_argument);
  }

  TEST_CASE("threshold segmentation") {
    const ImageGrid g(8, 8, 1.0);
    ImageSlice img(g);
    const Mask empty = threshold_segment(img, 0.5, 0);
    CHECK(std::count(empty.begin(), empty.end(), 1) == 0);
    img.at(1, 1) = 1.0f;
    for (int x = 4; x < 8; ++x) img.at(5, x) = 1.0f;
    const Mask raw = threshold_segment(img, 0.5, 0);
    CHECK(std::count(raw.begin(), raw.end(), 1) == 5);
    const Mask cleaned = threshold_segment(img, 0.5, 2);
    CHECK(std::count(cleaned.begin(), cleaned.end(), 1) == 4);
    CHECK(cleaned[1 * 8 + 1] == 0);
  }

  TEST_CASE("thresholding recovers knots on a phantom slice") {
    const LogPhantom ph = generate_log_phantom(random_log_spec(ImageGrid(64, 64, 1.0), 48, 3));
    REQUIRE_FALSE(ph.knot_groups.empty());
    const int z = (ph.knot_groups[0].first + ph.knot_groups[0].second) / 2;
    const Mask m = threshold_segment(ph.slice(z), 0.65, 0);
    CHECK(dice(m, ph.label_slice(z)) >= 0.8);
  }
}
