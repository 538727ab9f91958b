#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "logrecon/cli.hpp"
#include "logrecon/lpd.hpp"
#include "logrecon/metrics.hpp"
#include "logrecon/phantom.hpp"
#include "logrecon/projector.hpp"
#include "logrecon/variational.hpp"

namespace py = pybind11;
using namespace logrecon;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray to_array(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
  FloatArray out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<float> from_array(const FloatArray& a, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(a.size()) != expected)
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(expected) + " values, got " +
                                std::to_string(a.size()));
  return {a.data(), a.data() + a.size()};
}

ImageSlice image_from(const FloatArray& a, const FanBeamGeometry& g) {
  if (a.ndim() != 2 || a.shape(0) != g.grid().n_y || a.shape(1) != g.grid().n_x)
    throw std::invalid_argument("image shape does not match the geometry grid");
  return ImageSlice(g.grid(), from_array(a, g.grid().size(), "image"));
}

Sinogram sino_from(const FloatArray& a, const FanBeamGeometry& g) {
  if (a.ndim() != 2 || a.shape(0) != g.n_sources() || a.shape(1) != g.n_detector_bins())
    throw std::invalid_argument("sinogram shape does not match the geometry");
  Sinogram s(g);
  s.values = from_array(a, g.sinogram_size(), "sinogram");
  return s;
}

FloatArray image_array(const ImageSlice& img) { return to_array(img.values, {img.grid.n_y, img.grid.n_x}); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sparse-view fan-beam reconstruction of sequentially scanned logs.";

  py::register_exception<std::invalid_argument>(m, "InvalidArgument", PyExc_ValueError);

  py::class_<ImageGrid>(m, "ImageGrid")
      .def(py::init<int, int, double, double, double>(), py::arg("n_x"), py::arg("n_y"), py::arg("pixel_size") = 1.0,
           py::arg("origin_x") = 0.0, py::arg("origin_y") = 0.0)
      .def_readonly("n_x", &ImageGrid::n_x)
      .def_readonly("n_y", &ImageGrid::n_y)
      .def_readonly("pixel_size", &ImageGrid::pixel_size);

  py::class_<FanBeamGeometry>(m, "FanBeamGeometry")
      .def_property_readonly("grid", &FanBeamGeometry::grid)
      .def_property_readonly("source_angles_deg", &FanBeamGeometry::source_angles_deg)
      .def_property_readonly("n_sources", &FanBeamGeometry::n_sources)
      .def_property_readonly("n_detector_bins", &FanBeamGeometry::n_detector_bins)
      .def_property_readonly("source_radius", &FanBeamGeometry::source_radius)
      .def_property_readonly("detector_radius", &FanBeamGeometry::detector_radius)
      .def("with_angles", &FanBeamGeometry::with_angles);

  m.def("equispaced_source_angles", &equispaced_source_angles, py::arg("n_sources"), py::arg("offset_deg") = 0.0);
  m.def("scan_plan_offsets", [](int n_slices, int n_src, std::uint64_t seed) {
    return sample_scan_plan(n_slices, n_src, seed).per_slice_offsets_deg;
  }, py::arg("n_slices"), py::arg("n_sources"), py::arg("seed"));
  m.def("default_fanbeam", &default_fanbeam, py::arg("grid"), py::arg("angles_deg"));
  m.def("build_fanbeam", &build_fanbeam, py::arg("grid"), py::arg("source_radius"), py::arg("detector_radius"),
        py::arg("n_det"), py::arg("det_width"), py::arg("angles_deg"));

  m.def("forward_project", [](const FloatArray& image, const FanBeamGeometry& g) {
    const Sinogram s = forward_project(image_from(image, g), g);
    return to_array(s.values, {g.n_sources(), g.n_detector_bins()});
  }, py::arg("image"), py::arg("geometry"));
  m.def("back_project", [](const FloatArray& sino, const FanBeamGeometry& g) {
    return image_array(back_project(sino_from(sino, g), g));
  }, py::arg("sinogram"), py::arg("geometry"));
  m.def("fbp", [](const FloatArray& sino, const FanBeamGeometry& g, const std::string& filter, double cutoff) {
    return image_array(fbp_reconstruct(sino_from(sino, g), g, parse_fbp_filter(filter), cutoff));
  }, py::arg("sinogram"), py::arg("geometry"), py::arg("filter") = "ram-lak", py::arg("cutoff") = 1.0);
  m.def("tv_reconstruct", [](const FloatArray& sino, const FanBeamGeometry& g, double lambda, int n_iter) {
    TVConfig cfg;
    cfg.lambda = lambda;
    cfg.n_iter = n_iter;
    TVResult r = tv_pdhg(sino_from(sino, g), g, cfg);
    return py::make_tuple(image_array(r.image), r.energy);
  }, py::arg("sinogram"), py::arg("geometry"), py::arg("lam") = 0.01, py::arg("n_iter") = 300);
  m.def("operator_norm", &opnorm_power_iteration, py::arg("geometry"), py::arg("n_iter") = 100, py::arg("seed") = 0);

  m.def("log_phantom", [](const ImageGrid& grid, int n_slices, std::uint64_t seed) {
    const LogPhantom ph = generate_log_phantom(random_log_spec(grid, n_slices, seed));
    std::vector<py::ssize_t> shape{ph.n_slices, grid.n_y, grid.n_x};
    py::array_t<std::uint8_t> labels(shape);
    std::copy(ph.knot_labels.begin(), ph.knot_labels.end(), labels.mutable_data());
    return py::make_tuple(to_array(ph.volume, shape), labels, ph.knot_groups);
  }, py::arg("grid"), py::arg("n_slices"), py::arg("seed"),
        "Returns (volume, knot_labels, knot_groups) with volumes indexed [slice, y, x].");

  m.def("psnr", [](const FloatArray& x, const FloatArray& ref, std::optional<double> data_range) {
    return psnr(std::span<const float>(x.data(), x.size()), std::span<const float>(ref.data(), ref.size()), data_range);
  }, py::arg("x"), py::arg("ref"), py::arg("data_range") = py::none());
  m.def("ssim", [](const FloatArray& x, const FloatArray& ref) {
    if (x.ndim() != 2) throw std::invalid_argument("ssim: expected 2D images");
    const ImageGrid g(static_cast<int>(x.shape(1)), static_cast<int>(x.shape(0)), 1.0);
    return ssim(ImageSlice(g, from_array(x, g.size(), "x")), ImageSlice(g, from_array(ref, g.size(), "ref")));
  }, py::arg("x"), py::arg("ref"));
  m.def("dice", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                   const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
    return dice(std::span<const std::uint8_t>(a.data(), a.size()), std::span<const std::uint8_t>(b.data(), b.size()));
  }, py::arg("a"), py::arg("b"));

  m.def("lpd_reconstruct", [](const std::string& checkpoint, const std::vector<FloatArray>& sinos,
                              const std::vector<FanBeamGeometry>& geoms) {
    if (sinos.size() != geoms.size()) throw std::invalid_argument("need one geometry per sinogram");
    const LpdModel model = load_model(checkpoint);
    std::vector<Sinogram> window;
    for (std::size_t i = 0; i < sinos.size(); ++i) window.push_back(sino_from(sinos[i], geoms[i]));
    return image_array(lpd_reconstruct(model, window));
  }, py::arg("checkpoint"), py::arg("sinograms"), py::arg("geometries"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a logrecon subcommand; returns (exit_code, stdout, stderr).");
}
