#include "cvnn/gradcheck_suite.hpp"

#include <cmath>
#include <numbers>

#include "cvnn/autodiff.hpp"
#include "cvnn/models.hpp"
#include "cvnn/mri.hpp"
#include "cvnn/nn.hpp"
#include "cvnn/random.hpp"
#include "cvnn/train.hpp"

namespace cvnn {

namespace {

constexpr double kStep = 1e-5;

ComplexTensor random_tensor(Rng& rng, Shape shape, bool complex = true, double scale = 1.0) {
  ComplexTensor t(std::move(shape));
  for (auto& v : t.re()) v = scale * rng.uniform(-1.0, 1.0);
  if (complex) {
    for (auto& v : t.im()) v = scale * rng.uniform(-1.0, 1.0);
  }
  return t;
}

// Points whose components and phase keep a margin from every kink: the axes,
// the origin and, for modReLU, the threshold circle r = -bias.
ComplexTensor activation_points(Rng& rng, Shape shape, double bias) {
  ComplexTensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    double a = 0.0;
    double b = 0.0;
    for (;;) {
      const double r = rng.uniform(0.2, 1.5);
      const double th = rng.uniform(-std::numbers::pi, std::numbers::pi);
      a = r * std::cos(th);
      b = r * std::sin(th);
      if (std::abs(a) > 1e-2 && std::abs(b) > 1e-2 && std::abs(r + bias) > 1e-2) break;
    }
    t.re()[i] = a;
    t.im()[i] = b;
  }
  return t;
}

Var quadratic_readout(Tape& tape, Var out, const ComplexTensor& target) {
  return ad::sum_sq(ad::sub(out, tape.constant(target)));
}

struct Instance {
  ComplexTensor maps;
  ComplexTensor mask;
  ComplexTensor kspace;
};

Instance small_instance(Rng& rng, std::size_t n, std::size_t coils) {
  Instance in;
  in.maps = normalize_maps(random_tensor(rng, {coils, n, n}));
  in.mask = ComplexTensor({n, n});
  for (auto& v : in.mask.re()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  in.kspace = sense_forward(random_tensor(rng, {n, n}), in.maps, in.mask);
  return in;
}

// Zero biases put every all-zero receptive field exactly on the origin, a kink
// of every activation. modReLU thresholds get a small negative offset.
void jitter_biases(Rng& rng, std::map<std::string, ComplexTensor>& params, ConvMode mode) {
  for (auto& [name, t] : params) {
    if (name.ends_with(".bias")) {
      for (auto& v : t.re()) v = rng.uniform(-0.1, 0.1);
      if (mode == ConvMode::Complex) {
        for (auto& v : t.im()) v = rng.uniform(-0.1, 0.1);
      }
    } else if (name.ends_with(".modrelu")) {
      for (auto& v : t.re()) v = rng.uniform(-0.1, -0.02);
    }
  }
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradcheckCase> cases;
  const auto record = [&](std::string name, std::string kind, double err) {
    cases.push_back({std::move(name), std::move(kind), err});
  };

  {
    const auto target = random_tensor(rng, {3, 5, 5}, false);
    const std::map<std::string, ComplexTensor> p = {{"x", random_tensor(rng, {2, 5, 5}, false)},
                                                    {"w", random_tensor(rng, {3, 2, 3, 3}, false)},
                                                    {"b", random_tensor(rng, {3}, false)}};
    const auto rep = gradcheck_params(
        [&](Tape& t, const std::map<std::string, Var>& v) {
          return quadratic_readout(t, ad::conv2d_real(v.at("x"), v.at("w"), v.at("b")), target);
        },
        p, kStep);
    record("conv2d_real", "conv", rep.max_relative_error);
  }
  {
    const auto target = random_tensor(rng, {3, 5, 5});
    const std::map<std::string, ComplexTensor> p = {{"x", random_tensor(rng, {2, 5, 5})},
                                                    {"w", random_tensor(rng, {3, 2, 3, 3})},
                                                    {"b", random_tensor(rng, {3})}};
    const auto rep = gradcheck_params(
        [&](Tape& t, const std::map<std::string, Var>& v) {
          return quadratic_readout(t, ad::conv2d_complex(v.at("x"), v.at("w"), v.at("b")), target);
        },
        p, kStep);
    record("conv2d_complex", "conv", rep.max_relative_error);
  }

  for (const auto kind : {ActivationKind::Relu2Ch, ActivationKind::CRelu, ActivationKind::ZRelu,
                          ActivationKind::ModRelu, ActivationKind::Cardioid}) {
    const double bias = -0.4;
    const auto target = random_tensor(rng, {2, 4, 4});
    std::map<std::string, ComplexTensor> p = {{"x", activation_points(rng, {2, 4, 4}, bias)}};
    if (kind == ActivationKind::ModRelu) p.emplace("bias", ComplexTensor::real({2}, {bias, bias}));
    const auto rep = gradcheck_params(
        [&](Tape& t, const std::map<std::string, Var>& v) {
          const auto it = v.find("bias");
          const std::optional<Var> b = it == v.end() ? std::nullopt : std::optional<Var>(it->second);
          return quadratic_readout(t, ad::activate(v.at("x"), kind, b), target);
        },
        p, kStep);
    record(to_string(kind), "activation", rep.max_relative_error);
  }

  {
    const auto target = random_tensor(rng, {2, 8, 8});
    record("fft2c", "operator", gradcheck([&](Tape& t, Var x) {
             return quadratic_readout(t, ad::fft2c(x), target);
           }, random_tensor(rng, {2, 8, 8}), kStep));
    record("ifft2c", "operator", gradcheck([&](Tape& t, Var x) {
             return quadratic_readout(t, ad::fft2c(x, true), target);
           }, random_tensor(rng, {2, 8, 8}), kStep));
  }
  {
    const auto inst = small_instance(rng, 8, 3);
    const auto target = random_tensor(rng, {8, 8});
    const std::map<std::string, ComplexTensor> p = {{"y", random_tensor(rng, {8, 8})},
                                                    {"t", ComplexTensor::real({1}, {0.7})}};
    const auto rep = gradcheck_params(
        [&](Tape& t, const std::map<std::string, Var>& v) {
          const auto y = ad::dc_step(v.at("y"), t.constant(inst.kspace), t.constant(inst.maps),
                                     t.constant(inst.mask), v.at("t"));
          return quadratic_readout(t, y, target);
        },
        p, kStep);
    record("dc_step", "operator", rep.max_relative_error);
  }
  {
    const auto x = random_tensor(rng, {1, 8, 8});
    const auto ch_target = random_tensor(rng, {2, 8, 8}, false);
    record("to_channels", "operator", gradcheck([&](Tape& t, Var v) {
             return quadratic_readout(t, ad::to_channels(v), ch_target);
           }, x, kStep));
    const auto cat_target = random_tensor(rng, {3, 4, 4});
    const std::map<std::string, ComplexTensor> cat = {{"a", random_tensor(rng, {1, 4, 4})},
                                                      {"b", random_tensor(rng, {2, 4, 4})}};
    record("concat_channels", "operator",
           gradcheck_params([&](Tape& t, const std::map<std::string, Var>& v) {
             return quadratic_readout(t, ad::concat_channels(v.at("a"), v.at("b")), cat_target);
           }, cat, kStep).max_relative_error);
    const auto target = random_tensor(rng, {2, 4, 4});
    record("avgpool2", "operator", gradcheck([&](Tape& t, Var v) {
             return quadratic_readout(t, ad::avgpool2(v), target);
           }, random_tensor(rng, {2, 8, 8}), kStep));
    const auto up_target = random_tensor(rng, {2, 8, 8});
    record("upsample2", "operator", gradcheck([&](Tape& t, Var v) {
             return quadratic_readout(t, ad::upsample2(v), up_target);
           }, random_tensor(rng, {2, 4, 4}), kStep));
  }

  // Full networks at toy size, every activation, trained with the l1 loss.
  const auto inst = small_instance(rng, 8, 2);
  const auto truth = random_tensor(rng, {8, 8});
  for (const auto mode : {ConvMode::Complex, ConvMode::Real}) {
    const auto acts = mode == ConvMode::Real
                          ? std::vector<ActivationKind>{ActivationKind::Relu2Ch}
                          : std::vector<ActivationKind>{ActivationKind::CRelu, ActivationKind::ZRelu,
                                                        ActivationKind::ModRelu, ActivationKind::Cardioid};
    for (const auto act : acts) {
      UnrolledConfig cfg;
      cfg.iterations = 2;
      cfg.feature_maps = 3;
      cfg.conv_mode = mode;
      cfg.activation = act;
      auto params = init_unrolled(cfg, derive_seed(seed, 100)).tensors();
      jitter_biases(rng, params, mode);
      const auto rep = gradcheck_params(
          [&](Tape& t, const std::map<std::string, Var>& v) {
            const auto y = ad::unrolled_forward(v, t.constant(inst.kspace), t.constant(inst.maps),
                                                t.constant(inst.mask), cfg);
            return ad::l1_loss(y, t.constant(truth));
          },
          params, kStep);
      record("unrolled/" + to_string(mode) + "/" + to_string(act), "network", rep.max_relative_error);
    }

    UNetConfig ucfg;
    ucfg.levels = 2;
    ucfg.base_features = 2;
    ucfg.convs_per_level = 1;
    ucfg.conv_mode = mode;
    ucfg.activation = mode == ConvMode::Real ? ActivationKind::Relu2Ch : ActivationKind::Cardioid;
    const auto zf = random_tensor(rng, {8, 8});
    const auto target = random_tensor(rng, {8, 8});
    auto uparams = init_unet(ucfg, derive_seed(seed, 200)).tensors();
    jitter_biases(rng, uparams, mode);
    const auto rep = gradcheck_params(
        [&](Tape& t, const std::map<std::string, Var>& v) {
          return quadratic_readout(t, ad::unet_forward(v, t.constant(zf), ucfg), target);
        },
        uparams, kStep);
    record("unet/" + to_string(mode) + "/" + to_string(ucfg.activation), "network", rep.max_relative_error);
  }

  {
    const auto target = random_tensor(rng, {6, 6});
    record("l1_loss", "loss", gradcheck([&](Tape& t, Var x) {
             return ad::l1_loss(x, t.constant(target));
           }, random_tensor(rng, {6, 6}), kStep));
    record("nrmse", "metric", gradcheck([&](Tape&, Var x) { return ad::nrmse(x, target); },
                                        random_tensor(rng, {6, 6}), kStep));
    record("psnr", "metric", gradcheck([&](Tape&, Var x) { return ad::psnr(x, target); },
                                       random_tensor(rng, {6, 6}), kStep));
  }
  return cases;
}

}  // namespace cvnn
