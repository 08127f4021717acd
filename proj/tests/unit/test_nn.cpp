#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "cvnn/io.hpp"
#include "cvnn/models.hpp"
#include "cvnn/nn.hpp"
#include "helpers.hpp"

using namespace cvnn;
using testutil::random_tensor;

namespace {

ComplexTensor one(Complex z) { return ComplexTensor::filled({1}, z); }
Complex apply(ComplexTensor (*f)(const ComplexTensor&), Complex z) { return f(one(z)).at(0); }

}  // namespace

TEST_CASE("relu_two_channel and crelu examples") {
  CHECK(apply(relu_two_channel, {3, -2}) == Complex(3, 0));
  CHECK(apply(relu_two_channel, {-1, -1}) == Complex(0, 0));
  CHECK(apply(relu_two_channel, {2, 5}) == Complex(2, 5));
  CHECK(apply(crelu, {0, 0}) == Complex(0, 0));
  CHECK(apply(crelu, {-4, 7}) == Complex(0, 7));
  const auto x = random_tensor({4, 9, 9}, 1);
  CHECK(crelu(x) == relu_two_channel(x));
}

TEST_CASE("zrelu passes the closed first quadrant") {
  CHECK(apply(zrelu, {1, 1}) == Complex(1, 1));
  CHECK(apply(zrelu, {-1, 1}) == Complex(0, 0));
  CHECK(apply(zrelu, {3, 0}) == Complex(3, 0));
  CHECK(apply(zrelu, {0, 2}) == Complex(0, 2));
  CHECK(apply(zrelu, {1, -1e-300}) == Complex(0, 0));
}

TEST_CASE("modrelu examples") {
  const auto x = random_tensor({3, 5, 5}, 2);
  CHECK(modrelu(x, ComplexTensor({3})) == x);
  CHECK(modrelu(one({1, 0}), one(-2.0)).at(0) == Complex(0, 0));
  const auto y = modrelu(one({3, 4}), one(1.0)).at(0);
  CHECK(std::abs(y - Complex(3.6, 4.8)) <= 1e-15);
  CHECK(modrelu(one({0, 0}), one(1.0)).at(0) == Complex(0, 0));
  CHECK_THROWS_AS(modrelu(x, ComplexTensor({2})), ShapeError);
}

TEST_CASE("cardioid examples") {
  CHECK(apply(cardioid, {2.5, 0}) == Complex(2.5, 0));
  CHECK(apply(cardioid, {-2.5, 0}) == Complex(0, 0));
  CHECK(std::abs(apply(cardioid, {0, 1}) - Complex(0, 0.5)) <= 1e-16);
  CHECK(apply(cardioid, {0, 0}) == Complex(0, 0));
}

TEST_CASE("phase preservation, homogeneity and the cardioid bound") {
  const auto x = random_tensor({2000}, 3);
  const auto bias = one(-0.3);
  const auto m = modrelu(x, bias);
  const auto c = cardioid(x);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double th = std::arg(x.at(i));
    if (std::abs(m.at(i)) > 0) CHECK(std::abs(std::remainder(std::arg(m.at(i)) - th, 2 * std::numbers::pi)) <= 1e-12);
    if (std::abs(c.at(i)) > 0) CHECK(std::abs(std::remainder(std::arg(c.at(i)) - th, 2 * std::numbers::pi)) <= 1e-12);
    CHECK(std::abs(c.at(i)) <= std::abs(x.at(i)));
  }
  const double k = 2.75;
  const auto xs = scale_add(k, x, ComplexTensor(x.shape()));
  for (auto f : {&zrelu, &crelu}) {
    const auto a = f(xs), b = f(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(a.at(i) - k * b.at(i)) <= 1e-15);
  }
}

TEST_CASE("activation parsing") {
  CHECK(parse_activation("crelu") == ActivationKind::CRelu);
  CHECK(parse_activation("relu") == ActivationKind::Relu2Ch);
  CHECK(parse_activation("cardioid") == ActivationKind::Cardioid);
  CHECK_THROWS_AS(parse_activation("gelu"), UsageError);
  CHECK_THROWS_AS(parse_conv_mode("quaternion"), UsageError);
  for (auto k : {ActivationKind::Relu2Ch, ActivationKind::CRelu, ActivationKind::ZRelu, ActivationKind::ModRelu,
                 ActivationKind::Cardioid}) {
    CHECK(parse_activation(to_string(k)) == k);
  }
}

TEST_CASE("init_conv_weights determinism, zero bias, variance") {
  const LayerTemplate layer{100, 100, 1, std::nullopt};
  const auto a = init_conv_weights(layer, ConvMode::Complex, 9);
  const auto b = init_conv_weights(layer, ConvMode::Complex, 9);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == ComplexTensor({100}));
  CHECK(!(a.weights == init_conv_weights(layer, ConvMode::Complex, 10).weights));

  const double s = std::sqrt(6.0 / (200.0 + 200.0));
  for (auto plane : {a.weights.re(), a.weights.im()}) {
    double mean = 0, sq = 0;
    for (double v : plane) {
      mean += v;
      sq += v * v;
      CHECK(std::abs(v) <= s);
    }
    mean /= plane.size();
    const double var = sq / plane.size() - mean * mean;
    CHECK(std::abs(var - s * s / 3.0) <= 0.1 * s * s / 3.0);
  }
  const auto r = init_conv_weights(LayerTemplate{4, 4, 3, std::nullopt}, ConvMode::Real, 1);
  CHECK(r.weights.is_real());
  CHECK_THROWS_AS(init_conv_weights(LayerTemplate{4, 4, 2, std::nullopt}, ConvMode::Real, 1), UsageError);
}

TEST_CASE("parity of a single 1x1 layer") {
  NetworkTemplate net{{LayerShape{{0, 1}, {0, 1}, 1}}};
  CHECK(template_param_count(net, ConvMode::Complex, 1) == 4);
  const auto p = parity_feature_maps(net, 1);
  CHECK(p.real_channels == 2);
  CHECK(p.complex_param_count == 4);
  CHECK(p.real_param_count == 6);
}

TEST_CASE("parity of a deep template approaches sqrt(2) times the width") {
  UnrolledConfig cfg;
  cfg.iterations = 4;
  cfg.denoiser_layers = 8;
  const auto p = parity_feature_maps(unrolled_template(cfg), 128);
  CHECK(p.real_channels >= 179);
  CHECK(p.real_channels <= 182);
  CHECK(p.relative_gap() <= 0.02);
}

TEST_CASE("parity gap is within 2% for the shipped configurations") {
  const fs::path dir = CVNN_CONFIG_DIR;
  std::size_t pairs = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const auto pos = name.find("_complex.cfg");
    if (pos == std::string::npos) continue;
    const auto complex_cfg = parse_config(read_text(entry.path()));
    const auto real_cfg = parse_config(read_text(dir / (name.substr(0, pos) + "_real.cfg")));
    const auto width = complex_cfg.model.kind == ModelKind::Unrolled ? complex_cfg.model.unrolled.feature_maps
                                                                      : complex_cfg.model.unet.base_features;
    const auto real_width = real_cfg.model.kind == ModelKind::Unrolled ? real_cfg.model.unrolled.feature_maps
                                                                        : real_cfg.model.unet.base_features;
    const auto parity = parity_feature_maps(complex_cfg.model.network_template(), width);
    CHECK_MESSAGE(parity.real_channels == real_width, name);
    CHECK_MESSAGE(parity.relative_gap() <= 0.02, name);
    const double nc = double(param_count(complex_cfg.model.init(0)));
    const double nr = double(param_count(real_cfg.model.init(0)));
    CHECK_MESSAGE(std::abs(nc - nr) / nc <= 0.02, name);
    ++pairs;
  }
  CHECK(pairs >= 2);

  // width and depth sweep grid used by the comparison runs
  for (std::size_t w : {16, 32, 64, 128}) {
    for (std::size_t m : {1, 2, 4, 8, 12}) {
      UnrolledConfig u;
      u.iterations = m;
      CHECK_MESSAGE(parity_feature_maps(unrolled_template(u), w).relative_gap() <= 0.02, "width " << w << " iterations " << m);
    }
  }
}

TEST_CASE("activation backward rules pass gradcheck") {
  // One point per check: a summed loss adds finite-difference noise that
  // swamps the vanishing cardioid Jacobian near the negative real axis.
  const double pi = std::numbers::pi;
  // distance from the non-differentiable set of each kind
  const auto crelu_dist = [](Complex z) { return std::min(std::abs(z.real()), std::abs(z.imag())); };
  const auto zrelu_dist = [](Complex z) {
    const double to_pos_re = z.real() >= 0 ? std::abs(z.imag()) : std::abs(z);
    const double to_pos_im = z.imag() >= 0 ? std::abs(z.real()) : std::abs(z);
    return std::min(to_pos_re, to_pos_im);
  };
  const double b = -0.4;
  const auto modrelu_dist = [b](Complex z) { return std::min(std::abs(z), std::abs(std::abs(z) + b)); };
  const auto cardioid_dist = [](Complex z) { return std::abs(z); };

  struct Case {
    const char* name;
    std::function<Var(Tape&, Var)> act;
    std::function<double(Complex)> dist;
  };
  const std::vector<Case> cases = {
      {"relu", [](Tape&, Var v) { return ad::relu_two_channel(v); }, crelu_dist},
      {"crelu", [](Tape&, Var v) { return ad::crelu(v); }, crelu_dist},
      {"zrelu", [](Tape&, Var v) { return ad::zrelu(v); }, zrelu_dist},
      {"modrelu", [b](Tape& t, Var v) { return ad::modrelu(v, t.constant(ComplexTensor::real({1}, {b}))); }, modrelu_dist},
      {"cardioid", [](Tape&, Var v) { return ad::cardioid(v); }, cardioid_dist},
  };
  Rng rng(5);
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int n = 0; n < 300; ++n) {
      Complex z;
      do {
        z = std::polar(rng.uniform(0.0, 1.5), rng.uniform(-pi, pi));
      } while (c.dist(z) < 1e-2);
      const Complex w = std::polar(1.0, rng.uniform(-pi, pi));
      const auto readout = ComplexTensor::filled({1, 1, 1, 1}, w);
      const auto f = [&](Tape& t, Var v) {
        const auto y = ad::reshape(c.act(t, v), {1, 1, 1});
        return ad::add(ad::sum_re(ad::conv2d_complex(y, t.constant(readout), t.constant(ComplexTensor({1})))),
                       ad::sum_sq(y));
      };
      worst = std::max(worst, gradcheck(f, ComplexTensor::filled({1}, z)));
    }
    CHECK_MESSAGE(worst <= 1e-4, c.name << " worst " << worst);
  }
}
