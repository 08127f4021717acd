#include <doctest.h>

#include <cmath>

#include "cvnn/models.hpp"
#include "cvnn/mri.hpp"
#include "helpers.hpp"

using namespace cvnn;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

struct Instance {
  ComplexTensor image, maps, mask, kspace;
};

Instance small_instance(std::size_t n, std::size_t coils, std::uint64_t seed, double accel = 2.0) {
  Instance in;
  in.image = generate_phantom(n, n, seed, 2);
  in.maps = generate_maps(n, n, coils, seed);
  MaskSpec ms;
  ms.height = ms.width = n;
  ms.calib = n / 4;
  ms.accel_target = accel;
  ms.seed = seed;
  in.mask = poisson_mask(ms);
  in.kspace = sense_forward(in.image, in.maps, in.mask);
  return in;
}

ModelParams zero_conv_weights(ModelParams p) {
  for (auto& [name, param] : p) {
    if (param.kind != ParamKind::Scalar) param.value = ComplexTensor(param.value.shape());
  }
  return p;
}

}  // namespace

TEST_CASE("dc_step examples") {
  const auto x = random_tensor({8, 8}, 1);
  const auto s1 = ComplexTensor::filled({1, 8, 8}, 1.0);
  const auto full = ComplexTensor::filled({8, 8}, 1.0);
  const auto k = sense_forward(x, s1, full);
  const auto y = sense_adjoint(k, s1, full);
  CHECK(max_abs_diff(dc_step(y, k, s1, full, 1.0), y) <= 1e-12);

  const auto in = small_instance(8, 3, 2);
  const auto z = random_tensor({8, 8}, 3);
  CHECK(dc_step(z, in.kspace, in.maps, in.mask, 0.0) == z);
  CHECK_THROWS_AS(dc_step(random_tensor({4, 8}, 1), in.kspace, in.maps, in.mask, 1.0), ShapeError);
}

TEST_CASE("data consistency is non-expansive for t in (0, 2)") {
  const auto in = small_instance(16, 4, 5, 3.0);
  const ComplexTensor zero_k(in.kspace.shape());
  for (double t : {0.25, 1.0, 1.5, 1.99}) {
    auto v = random_tensor({16, 16}, 6);
    double est = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double n = std::sqrt(norm2(v));
      v = scale_add(1.0 / n, v, ComplexTensor(v.shape()));
      v = dc_step(v, zero_k, in.maps, in.mask, t);
      est = std::sqrt(norm2(v));
    }
    CHECK_MESSAGE(est <= 1.0 + 1e-6, "t = " << t);
  }
}

TEST_CASE("unrolled network with zero iterations is the zero-filled image") {
  const auto in = small_instance(16, 4, 7);
  UnrolledConfig cfg;
  cfg.iterations = 0;
  const auto params = init_unrolled(cfg, 1);
  CHECK(params.size() == 0);
  CHECK(unrolled_forward(in.kspace, in.maps, in.mask, params, cfg) == sense_adjoint(in.kspace, in.maps, in.mask));
}

TEST_CASE("unrolled network with zero denoisers is a fixed point on full single-coil data") {
  const auto image = generate_phantom(16, 16, 3, 2);
  const auto s1 = generate_maps(16, 16, 1, 2);
  const auto full = ComplexTensor::filled({16, 16}, 1.0);
  const auto k = sense_forward(image, s1, full);
  for (auto mode : {ConvMode::Complex, ConvMode::Real}) {
    UnrolledConfig cfg;
    cfg.iterations = 3;
    cfg.feature_maps = 4;
    cfg.conv_mode = mode;
    cfg.activation = mode == ConvMode::Real ? ActivationKind::Relu2Ch : ActivationKind::ModRelu;
    const auto params = zero_conv_weights(init_unrolled(cfg, 2));
    CHECK(max_abs_diff(unrolled_forward(k, s1, full, params, cfg), image) <= 1e-10);
  }
}

TEST_CASE("unrolled network passes gradcheck at 8x8") {
  const auto in = small_instance(8, 2, 9);
  UnrolledConfig cfg;
  cfg.iterations = 2;
  cfg.feature_maps = 4;
  ModelSpec spec;
  spec.unrolled = cfg;
  auto params = spec.init(3);
  Rng rng(4);
  for (auto& [name, p] : params) {
    if (p.kind == ParamKind::Bias)
      for (std::size_t i = 0; i < p.value.numel(); ++i) p.value.set(i, {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)});
  }
  const auto f = [&](Tape& tape, const std::map<std::string, Var>& vars) {
    const auto pred = spec.forward(vars, tape.constant(in.kspace), tape.constant(in.maps), tape.constant(in.mask));
    return ad::sum_sq(ad::sub(pred, tape.constant(in.image)));
  };
  CHECK(gradcheck_params(f, params.tensors(), 1e-5, 3).max_relative_error <= 1e-4);
}

TEST_CASE("unet output shape and divisibility") {
  for (std::size_t levels : {1, 2, 3}) {
    UNetConfig cfg;
    cfg.levels = levels;
    cfg.base_features = 2;
    cfg.convs_per_level = 1;
    const auto p = init_unet(cfg, 1);
    CHECK(unet_forward(random_tensor({16, 8}, levels), p, cfg).shape() == Shape{16, 8});
  }
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_features = 2;
  CHECK_THROWS_AS(unet_forward(random_tensor({12, 10}, 1), init_unet(cfg, 1), cfg), ShapeError);
}

TEST_CASE("unet with one level is a plain conv stack") {
  UNetConfig cfg;
  cfg.levels = 1;
  cfg.base_features = 3;
  cfg.convs_per_level = 2;
  cfg.activation = ActivationKind::Cardioid;
  auto params = init_unet(cfg, 5);
  Rng rng(6);
  for (auto& [name, p] : params)
    if (p.kind == ParamKind::Bias)
      for (std::size_t i = 0; i < p.value.numel(); ++i) p.value.set(i, {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)});
  const auto x = random_tensor({8, 8}, 7);
  const auto kernel = [&](const std::string& prefix) {
    return ConvKernel{params.at(prefix + ".weight").value, params.at(prefix + ".bias").value};
  };
  auto h = x.reshaped({1, 8, 8});
  h = cardioid(conv2d_complex(h, kernel("enc0.conv0")));
  h = cardioid(conv2d_complex(h, kernel("enc0.conv1")));
  h = conv2d_complex(h, kernel("out.conv"));
  CHECK(max_abs_diff(unet_forward(x, params, cfg), h.reshaped({8, 8})) <= 1e-12);
}

TEST_CASE("unet passes gradcheck at 16x16, two levels, base 4") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_features = 4;
  cfg.convs_per_level = 1;
  cfg.activation = ActivationKind::Cardioid;
  auto params = init_unet(cfg, 2);
  Rng rng(3);
  for (auto& [name, p] : params)
    if (p.kind == ParamKind::Bias)
      for (std::size_t i = 0; i < p.value.numel(); ++i) p.value.set(i, {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)});
  const auto x = random_tensor({16, 16}, 4);
  const auto target = random_tensor({16, 16}, 5);
  const auto f = [&](Tape& tape, const std::map<std::string, Var>& vars) {
    return ad::sum_sq(ad::sub(ad::unet_forward(vars, tape.constant(x), cfg), tape.constant(target)));
  };
  CHECK(gradcheck_params(f, params.tensors(), 1e-5, 7).max_relative_error <= 1e-4);
}

TEST_CASE("param_count examples") {
  ModelParams p;
  p.add("w", Param{ParamKind::Kernel, true, ComplexTensor({1, 1, 1, 1})});
  p.add("b", Param{ParamKind::Bias, true, ComplexTensor({1})});
  CHECK(param_count(p) == 4);
  CHECK_THROWS_AS(p.add("w", Param{}), UsageError);
  CHECK_THROWS_AS(p.at("missing"), UsageError);

  UnrolledConfig c;
  c.iterations = 2;
  c.feature_maps = 16;
  const auto pc = parity_feature_maps(unrolled_template(c), 16);
  UnrolledConfig r = c;
  r.conv_mode = ConvMode::Real;
  r.activation = ActivationKind::Relu2Ch;
  r.feature_maps = pc.real_channels;
  const double nc = static_cast<double>(param_count(init_unrolled(c, 0)));
  const double nr = static_cast<double>(param_count(init_unrolled(r, 0)));
  CHECK(std::abs(nc - nr) / nc <= 0.02);
  CHECK(nc == static_cast<double>(pc.complex_param_count + c.iterations));

  UnrolledConfig c3 = c;
  c3.iterations = 3;
  UnrolledConfig c1 = c;
  c1.iterations = 1;
  const auto block = param_count(init_unrolled(c1, 0));
  CHECK(param_count(init_unrolled(c3, 0)) - param_count(init_unrolled(c, 0)) == block);
  c1.activation = ActivationKind::ModRelu;
  c3.activation = ActivationKind::ModRelu;
  c.activation = ActivationKind::ModRelu;
  CHECK(param_count(init_unrolled(c3, 0)) - param_count(init_unrolled(c, 0)) == param_count(init_unrolled(c1, 0)));
}

TEST_CASE("activation and conv mode compatibility") {
  CHECK_THROWS_AS(validate_activation(ConvMode::Real, ActivationKind::ModRelu), UsageError);
  CHECK_THROWS_AS(validate_activation(ConvMode::Complex, ActivationKind::Relu2Ch), UsageError);
  CHECK_NOTHROW(validate_activation(ConvMode::Real, ActivationKind::Relu2Ch));
  try {
    validate_activation(ConvMode::Real, ActivationKind::Cardioid);
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("complex activations require conv=complex") != std::string::npos);
  }
  UnrolledConfig bad;
  bad.conv_mode = ConvMode::Real;
  bad.activation = ActivationKind::ZRelu;
  CHECK_THROWS_AS(init_unrolled(bad, 0), UsageError);
}

TEST_CASE("config and params mismatch is reported") {
  const auto in = small_instance(8, 2, 1);
  UnrolledConfig cfg;
  cfg.iterations = 2;
  cfg.feature_maps = 2;
  const auto params = init_unrolled(cfg, 0);
  UnrolledConfig more = cfg;
  more.iterations = 3;
  CHECK_THROWS_AS(unrolled_forward(in.kspace, in.maps, in.mask, params, more), UsageError);
}

TEST_CASE("real and complex networks share tensor shapes") {
  const auto in = small_instance(16, 2, 3);
  for (auto kind : {ModelKind::Unrolled, ModelKind::UNet}) {
    for (auto mode : {ConvMode::Real, ConvMode::Complex}) {
      ModelSpec s;
      s.kind = kind;
      s.unrolled.iterations = 1;
      s.unrolled.feature_maps = s.unet.base_features = 2;
      s.unet.levels = 2;
      s.unrolled.conv_mode = s.unet.conv_mode = mode;
      s.unrolled.activation = s.unet.activation =
          mode == ConvMode::Real ? ActivationKind::Relu2Ch : ActivationKind::CRelu;
      CHECK(s.predict(s.init(1), in.kspace, in.maps, in.mask).shape() == Shape{16, 16});
    }
  }
}

TEST_CASE("phase equivariance of the unrolled network under global rotation") {
  const auto in = small_instance(16, 3, 4);
  const Complex rot = std::polar(1.0, 1.1);
  const auto k_rot = scale_add(rot, in.kspace, ComplexTensor(in.kspace.shape()));
  UnrolledConfig cfg;
  cfg.iterations = 2;
  cfg.feature_maps = 4;
  cfg.activation = ActivationKind::ModRelu;
  const auto rotated = [&](ModelParams params) {
    const auto y = unrolled_forward(in.kspace, in.maps, in.mask, params, cfg);
    const auto y_rot = unrolled_forward(k_rot, in.maps, in.mask, params, cfg);
    return max_abs_diff(y_rot, scale_add(rot, y, ComplexTensor(y.shape())));
  };
  // b = 0 at init; modReLU depends on |d| only, so a negative b keeps the property
  auto params = init_unrolled(cfg, 8);
  CHECK(rotated(params) <= 1e-8);
  for (auto& [name, p] : params)
    if (name.ends_with(".modrelu")) p.value = ComplexTensor::filled(p.value.shape(), -0.05);
  CHECK(rotated(params) <= 1e-8);

  // cardioid's gain (1 + cos theta)/2 depends on the absolute phase
  cfg.activation = ActivationKind::Cardioid;
  CHECK(rotated(init_unrolled(cfg, 8)) > 1e-3);
}

TEST_CASE("init is deterministic per seed") {
  UnrolledConfig cfg;
  cfg.iterations = 2;
  CHECK(init_unrolled(cfg, 4) == init_unrolled(cfg, 4));
  CHECK(!(init_unrolled(cfg, 4) == init_unrolled(cfg, 5)));
  const auto p = init_unrolled(cfg, 4);
  CHECK(p.at("iter1.step").value.at(0) == Complex(1.0, 0.0));
}
