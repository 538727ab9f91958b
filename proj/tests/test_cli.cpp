#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "logrecon/cli.hpp"
#include "logrecon/io.hpp"

using namespace logrecon;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "logrecon_test_cli";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"phantom"}).code == 2);
    CHECK(cli({"nonsense"}).code == 2);
    CHECK(cli({"phantom", "--out", scratch("p.rvf"), "--seed", "abc"}).code == 2);
    const Run missing = cli({"simulate", "--in", scratch("nope.rvf"), "--sources", "5", "--out", scratch("d")});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("input file not found") != std::string::npos);
    CHECK(cli({"--help"}).code == 0);
  }

  TEST_CASE("phantom and simulate are reproducible") {
    const std::string vol = scratch("log.rvf");
    REQUIRE(cli({"phantom", "--seed", "3", "--out", vol, "--phantom.n_slices=5", "--phantom.n_x=32"}).code == 0);
    const std::string h1 = file_hash(vol);
    REQUIRE(cli({"phantom", "--seed", "3", "--out", vol, "--phantom.n_slices=5", "--phantom.n_x=32"}).code == 0);
    CHECK(file_hash(vol) == h1);
    CHECK(fs::exists(scratch("log.labels.rvf")));
    CHECK(fs::exists(scratch("log.run.json")));
    const LogPhantom ph = load_log(vol);
    CHECK(ph.n_slices == 5);
    CHECK(ph.grid.n_x == 32);

    const std::string d1 = scratch("sim1"), d2 = scratch("sim2");
    fs::remove_all(d1);
    fs::remove_all(d2);
    for (const auto& d : {d1, d2})
      REQUIRE(cli({"simulate", "--in", vol, "--sources", "7", "--window", "3", "--seed", "4", "--noise", "0.01", "--out", d})
                  .code == 0);
    CHECK(file_hash(d1 + "/sinograms/sino_002.rvf") == file_hash(d2 + "/sinograms/sino_002.rvf"));
    CHECK(fs::exists(d1 + "/sinograms/sino_002.geom.cfg"));
    CHECK(read_csv(d1 + "/manifest.csv").rows.size() == 3u);  // one row per window
    const SliceDataset ds = load_dataset(d1);
    CHECK(ds.window() == 3);
    CHECK(ds.size() == 3u);
    CHECK(ds.sinogram(1).geometry.n_sources() == 7);
  }

  TEST_CASE("fbp reconstruction through the command line") {
    const std::string vol = scratch("dense.rvf");
    REQUIRE(cli({"phantom", "--seed", "1", "--out", vol, "--phantom.n_slices=2"}).code == 0);
    const std::string d = scratch("dense_sim");
    fs::remove_all(d);
    REQUIRE(cli({"simulate", "--in", vol, "--sources", "180", "--out", d}).code == 0);
    const std::string rec = scratch("rec.rvf");
    REQUIRE(cli({"reconstruct", "--method", "fbp", "--sino", d + "/sinograms/sino_001.rvf", "--out", rec}).code == 0);
    const Run ev = cli({"eval", "--recon", rec, "--ref", d + "/images/slice_001.rvf", "--out", scratch("m.csv")});
    REQUIRE(ev.code == 0);
    const CsvTable t = read_csv(scratch("m.csv"));
    const double p = std::stod(t.rows.at(0).at(1));
    CHECK(p > 20.0);
    CHECK(cli({"reconstruct", "--method", "lpd2d", "--sino", d + "/sinograms/sino_001.rvf", "--out", rec}).code == 2);
  }

  TEST_CASE("export writes pgm slices") {
    const std::string vol = scratch("ex.rvf");
    REQUIRE(cli({"phantom", "--seed", "2", "--out", vol, "--phantom.n_slices=3", "--phantom.n_x=16"}).code == 0);
    const std::string d = scratch("export");
    fs::remove_all(d);
    REQUIRE(cli({"export", "--in", vol, "--slices", "0,2", "--montage", "2", "--out", d}).code == 0);
    CHECK(read_csv(d + "/export.csv").rows.size() >= 2u);
  }
}
