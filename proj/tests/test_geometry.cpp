#include <doctest.h>

#include <stdexcept>

#include "logrecon/geometry.hpp"

using namespace logrecon;

TEST_SUITE("geometry") {
  TEST_CASE("equispaced angles follow the offset rule") {
    CHECK(equispaced_source_angles(5, 0.0) == std::vector<double>{0, 72, 144, 216, 288});
    CHECK(equispaced_source_angles(5, 7.0) == std::vector<double>{7, 79, 151, 223, 295});
    CHECK(equispaced_source_angles(1, 123.0) == std::vector<double>{123});
    // Wrapped angles come back sorted.
    const auto a = equispaced_source_angles(4, 300.0);
    CHECK(a == std::vector<double>{30, 120, 210, 300});
  }

  TEST_CASE("angle arguments are validated") {
    CHECK_THROWS_AS(equispaced_source_angles(0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(equispaced_source_angles(3, 360.0), std::invalid_argument);
    CHECK_THROWS_AS(equispaced_source_angles(3, -1.0), std::invalid_argument);
  }

  TEST_CASE("scan plans are reproducible and in range") {
    const ScanPlan a = sample_scan_plan(20, 5, 42), b = sample_scan_plan(20, 5, 42), c = sample_scan_plan(20, 5, 43);
    CHECK(a.per_slice_offsets_deg == b.per_slice_offsets_deg);
    CHECK(a.per_slice_offsets_deg != c.per_slice_offsets_deg);
    REQUIRE(a.per_slice_offsets_deg.size() == 20);
    for (double o : a.per_slice_offsets_deg) {
      CHECK(o >= 0.0);
      CHECK(o < 360.0);
    }
    const auto angles = a.slice_angles(3);
    CHECK(angles.size() == 5);
    CHECK(angles == equispaced_source_angles(5, a.per_slice_offsets_deg[3]));
  }

  TEST_CASE("grid coordinates are centred") {
    const ImageGrid g(4, 2, 0.5);
    CHECK(g.x_center(0) == doctest::Approx(-0.75));
    CHECK(g.x_center(3) == doctest::Approx(0.75));
    CHECK(g.y_center(0) == doctest::Approx(-0.25));
    CHECK(g.extent_x() == doctest::Approx(2.0));
    CHECK(g.size() == 8u);
  }

  TEST_CASE("default geometry covers the grid at every angle") {
    const ImageGrid g(64, 64, 1.0);
    for (int n : {1, 5, 9, 360}) {
      const FanBeamGeometry geom = default_fanbeam(g, equispaced_source_angles(n, 13.0));
      for (int a = 0; a < geom.n_sources(); ++a)
        for (double x : {-32.0, 32.0})
          for (double y : {-32.0, 32.0}) CHECK(std::abs(detector_coordinate(geom, a, x, y)) <= geom.detector_width() / 2);
    }
  }

  TEST_CASE("coverage violations name the corner and the angle") {
    const ImageGrid g(64, 64, 1.0);
    try {
      build_fanbeam(g, 128, 128, 64, 40.0, {0.0, 45.0});
      FAIL("expected a coverage error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("corner") != std::string::npos);
      CHECK(msg.find("angle") != std::string::npos);
    }
    CHECK_THROWS_AS(build_fanbeam(g, 20, 128, 64, 400.0, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(build_fanbeam(g, 128, 128, 0, 400.0, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(build_fanbeam(g, 128, 128, 64, 400.0, {}), std::invalid_argument);
  }

  TEST_CASE("with_angles keeps the detector") {
    const FanBeamGeometry a = default_fanbeam(ImageGrid(32, 32, 1.0), {0.0, 90.0});
    const FanBeamGeometry b = a.with_angles({10.0, 100.0, 200.0});
    CHECK(b.n_sources() == 3);
    CHECK(b.detector_width() == a.detector_width());
    CHECK(b.n_detector_bins() == a.n_detector_bins());
    CHECK_FALSE(a == b);
    CHECK(a == a.with_angles({0.0, 90.0}));
  }
}
