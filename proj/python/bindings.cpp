#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cvnn/cli.hpp"
#include "cvnn/cs.hpp"
#include "cvnn/error.hpp"
#include "cvnn/gradcheck_suite.hpp"
#include "cvnn/io.hpp"
#include "cvnn/models.hpp"
#include "cvnn/mri.hpp"
#include "cvnn/nn.hpp"
#include "cvnn/ops.hpp"
#include "cvnn/train.hpp"

namespace py = pybind11;
using namespace cvnn;

namespace {

using CArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using RArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ComplexTensor from_numpy(const CArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  ComplexTensor t(shape);
  const auto* p = a.data();
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, p[i]);
  return t;
}

py::array_t<std::complex<double>> to_numpy(const ComplexTensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<std::complex<double>> a(shape);
  auto* p = a.mutable_data();
  for (std::size_t i = 0; i < t.numel(); ++i) p[i] = t.at(i);
  return a;
}

py::array_t<double> to_numpy_real(const ComplexTensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.re().begin(), t.re().end(), a.mutable_data());
  return a;
}

ComplexTensor real_from_numpy(const RArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  std::vector<double> v(a.data(), a.data() + a.size());
  return ComplexTensor::real(shape, std::move(v));
}

py::dict metrics_dict(const ExampleMetrics& m) {
  py::dict d;
  d["nrmse"] = m.nrmse;
  d["psnr"] = m.psnr;
  d["ssim"] = m.ssim;
  d["phase_rmse"] = m.phase_rmse;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Complex-valued CNN layers, SENSE operators and reconstruction baselines";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  // layers
  m.def(
      "conv2d_complex",
      [](const CArray& x, const CArray& weights, std::optional<CArray> bias) {
        auto w = from_numpy(weights);
        auto b = bias ? from_numpy(*bias) : ComplexTensor({w.dim(0)});
        const ConvKernel k{std::move(w), std::move(b)};
        return to_numpy(conv2d_complex(from_numpy(x), k));
      },
      py::arg("x"), py::arg("weights"), py::arg("bias") = py::none(),
      "Same-padded complex convolution. x [Cin,H,W], weights [Cout,Cin,k,k], bias [Cout].");
  m.def(
      "conv2d_real",
      [](const RArray& x, const RArray& weights, std::optional<RArray> bias) {
        const auto w = real_from_numpy(weights);
        const auto b = bias ? real_from_numpy(*bias) : ComplexTensor({w.dim(0)});
        return to_numpy_real(conv2d_real(real_from_numpy(x), w, b));
      },
      py::arg("x"), py::arg("weights"), py::arg("bias") = py::none());
  m.def("crelu", [](const CArray& d) { return to_numpy(crelu(from_numpy(d))); });
  m.def("zrelu", [](const CArray& d) { return to_numpy(zrelu(from_numpy(d))); });
  m.def("cardioid", [](const CArray& d) { return to_numpy(cardioid(from_numpy(d))); });
  m.def(
      "modrelu", [](const CArray& d, const RArray& b) { return to_numpy(modrelu(from_numpy(d), real_from_numpy(b))); },
      py::arg("d"), py::arg("bias"), "bias: one value, or one per entry of axis 0");
  m.def("fft2c", [](const CArray& x) { return to_numpy(fft2c(from_numpy(x))); },
        "Centred orthonormal 2-D FFT over the last two axes");
  m.def("ifft2c", [](const CArray& x) { return to_numpy(ifft2c(from_numpy(x))); });

  // parity
  m.def(
      "parity_feature_maps",
      [](const std::string& model, std::size_t width, std::size_t depth) {
        ModelSpec spec;
        spec.kind = parse_model_kind(model);
        spec.unrolled.iterations = depth;
        spec.unet.levels = depth;
        const auto p = parity_feature_maps(spec.network_template(), width);
        py::dict d;
        d["real_channels"] = p.real_channels;
        d["complex_param_count"] = p.complex_param_count;
        d["real_param_count"] = p.real_param_count;
        d["relative_gap"] = p.relative_gap();
        return d;
      },
      py::arg("model"), py::arg("width"), py::arg("depth"),
      "depth is the unrolled iteration count or the U-Net level count");

  // simulation and operators
  m.def("generate_phantom",
        [](std::size_t size, std::uint64_t seed, std::size_t phase_detail) {
          return to_numpy(generate_phantom(size, size, seed, phase_detail));
        },
        py::arg("size") = 64, py::arg("seed") = 0, py::arg("phase_detail") = 4);
  m.def("generate_maps",
        [](std::size_t size, std::size_t coils, std::uint64_t seed) {
          return to_numpy(generate_maps(size, size, coils, seed));
        },
        py::arg("size") = 64, py::arg("coils") = 8, py::arg("seed") = 0);
  m.def(
      "poisson_mask",
      [](std::size_t size, double accel, std::size_t calib, double density_power, std::uint64_t seed) {
        MaskSpec s;
        s.height = s.width = size;
        s.accel_target = accel;
        s.calib = calib;
        s.density_power = density_power;
        s.seed = seed;
        return to_numpy_real(poisson_mask(s));
      },
      py::arg("size") = 64, py::arg("accel") = 4.0, py::arg("calib") = 12, py::arg("density_power") = 2.0,
      py::arg("seed") = 0);
  m.def("mask_acceleration", [](const RArray& mask) { return mask_acceleration(real_from_numpy(mask)); });
  m.def("sense_forward", [](const CArray& image, const CArray& maps, const RArray& mask) {
    return to_numpy(sense_forward(from_numpy(image), from_numpy(maps), real_from_numpy(mask)));
  });
  m.def("sense_adjoint", [](const CArray& kspace, const CArray& maps, const RArray& mask) {
    return to_numpy(sense_adjoint(from_numpy(kspace), from_numpy(maps), real_from_numpy(mask)));
  });
  m.def(
      "synthesize_example",
      [](std::size_t size, std::size_t coils, std::uint64_t seed, double accel, std::size_t calib) {
        ExampleSpec s;
        s.size = size;
        s.coils = coils;
        s.seed = seed;
        s.accel_min = s.accel_max = accel;
        s.calib = calib;
        const auto ex = synthesize_example(s);
        py::dict d;
        d["image"] = to_numpy(ex.image);
        d["maps"] = to_numpy(ex.maps);
        d["mask"] = to_numpy_real(ex.mask);
        d["kspace"] = to_numpy(ex.kspace);
        d["acceleration"] = ex.acceleration;
        return d;
      },
      py::arg("size") = 64, py::arg("coils") = 8, py::arg("seed") = 0, py::arg("accel") = 4.0,
      py::arg("calib") = 12);

  // metrics and baselines
  m.def("nrmse", [](const CArray& p, const CArray& t) { return nrmse(from_numpy(p), from_numpy(t)); });
  m.def("psnr", [](const CArray& p, const CArray& t) { return psnr(from_numpy(p), from_numpy(t)); });
  m.def("ssim", [](const CArray& p, const CArray& t) { return ssim(from_numpy(p), from_numpy(t)); });
  m.def(
      "phase_rmse",
      [](const CArray& p, const CArray& t, double threshold) {
        return phase_rmse(from_numpy(p), from_numpy(t), threshold);
      },
      py::arg("pred"), py::arg("target"), py::arg("threshold") = 0.1);
  m.def("measure", [](const CArray& p, const CArray& t) { return metrics_dict(measure(from_numpy(p), from_numpy(t))); });
  m.def(
      "ista_wavelet_recon",
      [](const CArray& kspace, const CArray& maps, const RArray& mask, double lam, std::size_t iterations) {
        CsConfig c;
        c.lambda = lam;
        c.iterations = iterations;
        const auto r = ista_wavelet_recon(from_numpy(kspace), from_numpy(maps), real_from_numpy(mask), c);
        return py::make_tuple(to_numpy(r.image), r.objective);
      },
      py::arg("kspace"), py::arg("maps"), py::arg("mask"), py::arg("lam") = 1e-3, py::arg("iterations") = 100,
      "Returns (image, objective per iteration)");

  // containers
  m.def("read_cxt", [](const std::string& path) { return to_numpy(read_cxt(path)); });
  m.def("write_cxt", [](const std::string& path, const CArray& a) { write_cxt(path, from_numpy(a)); });

  m.def("gradcheck", [](std::uint64_t seed) {
    py::list out;
    for (const auto& c : run_gradcheck_suite(seed)) {
      py::dict d;
      d["name"] = c.name;
      d["kind"] = c.kind;
      d["max_relative_error"] = c.max_relative_error;
      out.append(d);
    }
    return out;
  }, py::arg("seed") = 7);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all = {"cvnn"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a cvnn subcommand in-process. Returns (exit_code, stdout, stderr).");
}
