#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "cyclereg/errors.hpp"
#include "cyclereg/evaluation.hpp"
#include "cyclereg/gradcheck.hpp"
#include "cyclereg/io.hpp"
#include "cyclereg/objective.hpp"
#include "cyclereg/optimizer.hpp"
#include "cyclereg/phantom.hpp"
#include "cyclereg/transfer.hpp"
#include "cyclereg/warp.hpp"

namespace py = pybind11;
using namespace cyclereg;

namespace {

// Arrays are indexed [z, y, x] (fields [z, y, x, 3]) so C order matches x-fastest storage.
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U16 = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

GridShape grid_of(const py::buffer_info& b, int extra_dims) {
  if (b.ndim != 3 + extra_dims) {
    throw ShapeError("expected a " + std::to_string(3 + extra_dims) + "-d array, got " +
                     std::to_string(b.ndim) + "-d");
  }
  if (extra_dims == 1 && b.shape[3] != 3) throw ShapeError("field arrays must end in a length-3 axis");
  return GridShape(static_cast<int>(b.shape[2]), static_cast<int>(b.shape[1]),
                   static_cast<int>(b.shape[0]));
}

ScalarVolume to_scalar(const F64& a) {
  const py::buffer_info b = a.request();
  const double* p = static_cast<const double*>(b.ptr);
  return ScalarVolume(grid_of(b, 0), std::vector<double>(p, p + b.size));
}

LabelVolume to_labels(const U16& a, int classes) {
  const py::buffer_info b = a.request();
  const auto* p = static_cast<const std::uint16_t*>(b.ptr);
  std::vector<std::uint16_t> ids(p, p + b.size);
  if (classes <= 0) classes = ids.empty() ? 1 : *std::max_element(ids.begin(), ids.end()) + 1;
  return LabelVolume(grid_of(b, 0), std::max(classes, 2), std::move(ids));
}

DisplacementField to_field(const F64& a) {
  const py::buffer_info b = a.request();
  const double* p = static_cast<const double*>(b.ptr);
  return DisplacementField(grid_of(b, 1), std::vector<double>(p, p + b.size));
}

std::vector<py::ssize_t> dims(const GridShape& s) { return {s.nz, s.ny, s.nx}; }

F64 from_scalar(const ScalarVolume& v) {
  F64 out(dims(v.shape()));
  std::copy(v.values().begin(), v.values().end(), out.mutable_data());
  return out;
}

U16 from_labels(const LabelVolume& v) {
  U16 out(dims(v.shape()));
  std::copy(v.ids().begin(), v.ids().end(), out.mutable_data());
  return out;
}

F64 from_field(const DisplacementField& f) {
  std::vector<py::ssize_t> d = dims(f.shape());
  d.push_back(3);
  F64 out(d);
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

SolveConfig config_of(const std::string& json) { return io::parse_run_config(json); }

py::dict terms_dict(const TermValues& t) {
  py::dict d;
  d["sim"] = t.sim;
  d["smooth_f"] = t.smooth_f;
  d["smooth_b"] = t.smooth_b;
  d["cyc"] = t.cyc;
  d["trans"] = t.trans;
  d["anatomy_cyc"] = t.anatomy_cyc;
  d["diff_cyc"] = t.diff_cyc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cyclereg, m) {
  m.doc() = "Cycle-consistent atlas label transfer by direct displacement-field optimization";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericsError>(m, "NumericsError", PyExc_ArithmeticError);

  m.def("warp_scalar", [](const F64& src, const F64& field) {
    return from_scalar(warp_scalar(to_scalar(src), to_field(field)));
  }, py::arg("src"), py::arg("field"));

  m.def("inverse_consistency_error", [](const F64& forward, const F64& backward) {
    const InverseConsistency e = inverse_consistency_error(to_field(forward), to_field(backward));
    return py::make_tuple(e.mean, e.max, from_scalar(e.error));
  }, py::arg("forward"), py::arg("backward"));

  m.def("charbonnier", [](double x, double epsilon, double gamma) {
    return charbonnier(x, CharbonnierParams{epsilon, gamma});
  }, py::arg("x"), py::arg("epsilon") = 0.001, py::arg("gamma") = 0.45);

  m.def("dice_score", [](const U16& pred, const U16& gt, int k) {
    const int classes = std::max({k + 1, to_labels(pred, 0).classes(), to_labels(gt, 0).classes()});
    return dice_score(to_labels(pred, classes), to_labels(gt, classes), k);
  }, py::arg("pred"), py::arg("gt"), py::arg("k"));

  m.def("foreground_dice", [](const U16& pred, const U16& gt, int classes) {
    return foreground_dice(to_labels(pred, classes), to_labels(gt, classes));
  }, py::arg("pred"), py::arg("gt"), py::arg("classes"));

  m.def("gen_phantom", [](std::array<int, 3> shape, std::uint64_t seed, double noise_sigma) {
    PhantomSpec spec;
    spec.shape = GridShape(shape[2], shape[1], shape[0]);
    spec.seed = seed;
    spec.noise_sigma = noise_sigma;
    const Phantom p = gen_phantom(spec);
    return py::make_tuple(from_scalar(p.image), from_labels(p.labels));
  }, py::arg("shape") = std::array<int, 3>{64, 64, 64}, py::arg("seed") = 1,
     py::arg("noise_sigma") = 0.02);

  m.def("gen_smooth_field", [](std::array<int, 3> shape, double max_magnitude,
                               double smoothness_sigma, std::uint64_t seed) {
    return from_field(gen_smooth_field(GridShape(shape[2], shape[1], shape[0]),
                                       DeformSpec{max_magnitude, smoothness_sigma, seed}));
  }, py::arg("shape"), py::arg("max_magnitude") = 3.0, py::arg("smoothness_sigma") = 6.0,
     py::arg("seed") = 1);

  m.def("make_pair", [](const F64& image, const U16& labels, const F64& field, double noise_sigma,
                        std::uint64_t noise_seed) {
    const PhantomPair p = make_pair(to_scalar(image), to_labels(labels, 0), to_field(field),
                                    noise_sigma, noise_seed);
    return py::make_tuple(from_scalar(p.target), from_labels(p.labels));
  }, py::arg("image"), py::arg("labels"), py::arg("field"), py::arg("noise_sigma") = 0.0,
     py::arg("noise_seed") = 0);

  m.def("default_config", [] { return io::run_config_json(SolveConfig{}); });

  m.def("optimize_pair", [](const F64& atlas, const U16& atlas_labels, const F64& target,
                            const std::string& config) {
    const SolveConfig cfg = config_of(config);
    SolveResult r;
    {
      py::gil_scoped_release release;
      r = optimize_pair(to_scalar(atlas), to_labels(atlas_labels, 0), to_scalar(target), cfg);
    }
    py::list trace;
    for (const TraceEntry& e : r.trace.entries) {
      py::dict d = terms_dict(e.terms);
      d["level"] = e.level;
      d["iteration"] = e.iteration;
      d["total"] = e.total;
      trace.append(d);
    }
    return py::make_tuple(from_field(r.forward), from_field(r.backward), trace);
  }, py::arg("atlas"), py::arg("atlas_labels"), py::arg("target"), py::arg("config") = "{}");

  m.def("transfer_labels", [](const F64& atlas, const U16& atlas_labels, const F64& target,
                              const std::string& config) {
    const SolveConfig cfg = config_of(config);
    TransferResult r;
    {
      py::gil_scoped_release release;
      r = transfer_labels(to_scalar(atlas), to_labels(atlas_labels, 0), to_scalar(target), cfg);
    }
    py::dict out;
    out["segmentation"] = from_labels(r.segmentation);
    out["forward"] = from_field(r.forward);
    out["backward"] = from_field(r.backward);
    out["terms"] = terms_dict(r.report.terms);
    out["total"] = r.report.total;
    out["ice_mean"] = r.report.inverse_consistency.mean;
    out["ice_max"] = r.report.inverse_consistency.max;
    return out;
  }, py::arg("atlas"), py::arg("atlas_labels"), py::arg("target"), py::arg("config") = "{}");

  m.def("gradient_suite", [](int size, std::uint64_t seed, int samples) {
    GradCheckOptions o;
    o.size = size;
    o.seed = seed;
    o.samples_per_field = samples;
    py::dict out;
    for (const GradCheckResult& r : run_gradient_suite(o)) out[py::str(r.term)] = r.max_rel_error();
    return out;
  }, py::arg("size") = 6, py::arg("seed") = 1, py::arg("samples") = 30);
}
