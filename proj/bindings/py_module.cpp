// Python bindings for the core operations: prior construction, topology
// checks, metrics, deformation-field math, and model inference. Arrays cross
// the boundary as numpy float64 (tensors) / bool (masks).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <sstream>

#include "topowarp/config.hpp"
#include "topowarp/fields.hpp"
#include "topowarp/losses.hpp"
#include "topowarp/network.hpp"
#include "topowarp/synthdata.hpp"
#include "topowarp/tensor.hpp"
#include "topowarp/topology.hpp"
#include "topowarp/trainer.hpp"

namespace py = pybind11;
using namespace topowarp;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::memcpy(out.mutable_data(), t.data(), t.numel() * sizeof(double));
    return out;
}

Tensor to_tensor(const DoubleArray& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor to_field(const DoubleArray& a) {
    if (a.ndim() != 3 || a.shape(0) != 2)
        throw ValueError("displacement field must have shape (2, h, w)");
    return to_tensor(a);
}

BinaryMask to_mask(const py::array& a) {
    if (a.ndim() != 2) throw ValueError("mask must be 2-d");
    const auto cast = py::array_t<bool, py::array::c_style | py::array::forcecast>::ensure(a);
    if (!cast) throw ValueError("mask must be convertible to bool");
    BinaryMask m;
    m.h = static_cast<std::size_t>(cast.shape(0));
    m.w = static_cast<std::size_t>(cast.shape(1));
    m.v.resize(m.h * m.w);
    const bool* src = cast.data();
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = src[i] ? 1 : 0;
    return m;
}

py::array mask_to_array(const BinaryMask& m) {
    py::array_t<bool> out({static_cast<py::ssize_t>(m.h), static_cast<py::ssize_t>(m.w)});
    bool* dst = out.mutable_data();
    for (std::size_t i = 0; i < m.v.size(); ++i) dst[i] = m.v[i] != 0;
    return out;
}

Tensor image_to_tensor(const DoubleArray& a) {
    if (a.ndim() == 2) {
        Tensor t = to_tensor(a);
        return t;  // rank-2 image
    }
    if (a.ndim() == 3 && a.shape(0) == 1) return to_tensor(a);
    throw ValueError("image must have shape (h, w) or (1, h, w)");
}

RunConfig config_from_text(const std::string& text) {
    RunConfig cfg = parse_config_text(text, "<python>");
    cfg.validate();
    return cfg;
}

// Inference-only handle around a built network and its resolved config.
struct Model {
    WarpNet net;
    RunConfig cfg;
    Tensor prior;

    py::dict predict(const DoubleArray& image_arr) {
        Tensor image = image_to_tensor(image_arr);
        if (image.rank() == 2) image = Tensor::from_data(Shape{1, image.extent(0), image.extent(1)}, image.vec());
        Rng rng(0);
        NetOutput out = network::forward(net, image, prior, false, rng);
        const JacobianReport jb = fields::jacobian_report(out.phi_bulk);
        const JacobianReport jf = fields::jacobian_report(out.phi_ft);
        py::dict d;
        d["y_soft"] = to_array(out.y_soft);
        d["y_bulk"] = to_array(out.y_bulk);
        d["phi_bulk"] = to_array(out.phi_bulk);
        d["phi_ft"] = to_array(out.phi_ft);
        d["min_det_bulk"] = jb.min_det;
        d["min_det_ft"] = jf.min_det;
        d["frac_nonpos_bulk"] = jb.frac_nonpositive;
        d["frac_nonpos_ft"] = jf.frac_nonpositive;
        return d;
    }

    std::pair<std::size_t, std::size_t> input_extents() const {
        return {cfg.model.h, cfg.model.w};
    }

    std::string config_text() const {
        std::ostringstream os;
        write_resolved_config(os, cfg);
        return os.str();
    }
};

Model fresh_model(const std::string& config_text) {
    Model m;
    m.cfg = config_from_text(config_text);
    Rng rng(m.cfg.model.seed);
    m.net = network::build(m.cfg.model, rng);
    m.prior = network::make_prior_tensor(m.cfg.model);
    return m;
}

Model load_model(const std::string& path) {
    Model m;
    auto [net, cfg] = trainer::load_model(path);
    m.net = std::move(net);
    m.cfg = std::move(cfg);
    m.prior = network::make_prior_tensor(m.cfg.model);
    return m;
}

py::dict sample_to_dict(const SynthSample& s) {
    py::dict d;
    d["image"] = to_array(Tensor::from_data(Shape{s.image.extent(1), s.image.extent(2)},
                                            s.image.vec()));
    d["label"] = mask_to_array(s.label);
    d["center"] = py::make_tuple(s.center_r, s.center_c);
    d["radius"] = s.radius;
    d["thickness"] = s.thickness;
    d["seed"] = s.seed;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "topology-preserving annulus segmentation: core operations";

    m.def("make_prior", [](std::size_t h, std::size_t w, double radius, double thickness) {
              return mask_to_array(synthdata::make_prior(h, w, radius, thickness));
          },
          py::arg("h"), py::arg("w"), py::arg("radius"), py::arg("thickness"),
          "centered binary annulus (radius/thickness in voxels of this frame)");

    m.def("generate_sample", [](std::uint64_t seed, const std::string& config_text) {
              return sample_to_dict(
                  synthdata::generate_sample(seed, config_from_text(config_text).data));
          },
          py::arg("seed"), py::arg("config_text") = std::string(),
          "one synthetic annulus sample from an RNG stream seed");

    m.def("betti_numbers", [](const py::array& mask) {
              const auto [b0, b1] = topology::betti_numbers(to_mask(mask));
              return py::make_tuple(b0, b1);
          },
          py::arg("mask"), "(components, holes) under 4/8 dual connectivity");

    m.def("topology_ok", [](const py::array& mask) {
              return topology::topology_correct(to_mask(mask)).correct;
          },
          py::arg("mask"), "true when the mask is a single ring: betti (1, 1)");

    m.def("threshold", [](const DoubleArray& y, double t) {
              return mask_to_array(topology::threshold(to_tensor(y), t));
          },
          py::arg("y_soft"), py::arg("t") = 0.5);

    m.def("dice", [](const py::array& a, const py::array& b) {
              return losses::dice_metric(to_mask(a), to_mask(b));
          },
          py::arg("a"), py::arg("b"));

    m.def("hausdorff", [](const py::array& a, const py::array& b) {
              return losses::hausdorff(to_mask(a), to_mask(b));
          },
          py::arg("a"), py::arg("b"), "symmetric Hausdorff distance in voxels");

    m.def("diffeo_activation", [](const DoubleArray& u) {
              return to_array(fields::diffeo_activation(to_field(u)));
          },
          py::arg("u"), "0.5*tanh(u): components squashed into (-0.5, 0.5)");

    m.def("compose", [](const DoubleArray& d1, const DoubleArray& d2) {
              return to_array(fields::compose(to_field(d1), to_field(d2)));
          },
          py::arg("d1"), py::arg("d2"), "apply d1 then d2 (displacement composition)");

    m.def("gaussian_smooth", [](const DoubleArray& d, int kernel_size, double sigma) {
              SmoothingConfig cfg;
              cfg.kernel_size = kernel_size;
              cfg.sigma = sigma;
              return to_array(fields::gaussian_smooth(to_field(d), cfg));
          },
          py::arg("d"), py::arg("kernel_size") = 5, py::arg("sigma") = 2.0);

    m.def("integrate", [](const DoubleArray& v, int t, bool smoothing) {
              SmoothingConfig cfg;
              cfg.enabled = smoothing;
              return to_array(fields::integrate_ss(to_field(v), t, cfg));
          },
          py::arg("v"), py::arg("t"), py::arg("smoothing") = true,
          "scaling-and-squaring integration with optional smoothing per step");

    m.def("super_upsample", [](const DoubleArray& d, std::size_t h_out, std::size_t w_out) {
              return to_array(fields::super_upsample(to_field(d), h_out, w_out));
          },
          py::arg("d"), py::arg("h_out"), py::arg("w_out"),
          "resample to a finer grid, rescaling displacements to its voxel units");

    m.def("warp", [](const DoubleArray& img, const DoubleArray& d) {
              return to_array(fields::warp(to_tensor(img), to_field(d)));
          },
          py::arg("image"), py::arg("d"), "out(x) = image(x + d(x)), bilinear");

    m.def("jacobian_report", [](const DoubleArray& d) {
              const JacobianReport r = fields::jacobian_report(to_field(d));
              py::dict out;
              out["det_grid"] = to_array(r.det_grid);
              out["min_det"] = r.min_det;
              out["frac_nonpositive"] = r.frac_nonpositive;
              return out;
          },
          py::arg("d"), "forward-difference Jacobian determinants of x + d(x)");

    py::class_<Model>(m, "Model", "inference handle: warps the annulus prior by predicted fields")
        .def("predict", &Model::predict, py::arg("image"),
             "y_soft / y_bulk / both fields / jacobian summary for one image")
        .def_property_readonly("input_extents", &Model::input_extents)
        .def_property_readonly("config_text", &Model::config_text);

    m.def("fresh_model", &fresh_model, py::arg("config_text") = std::string(),
          "identity-initialized model (zero fields) from config text");
    m.def("load_model", &load_model, py::arg("path"), "model from a .ckpt file");
}
