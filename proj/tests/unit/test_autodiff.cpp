#include <doctest.h>

#include "cvnn/autodiff.hpp"
#include "cvnn/mri.hpp"
#include "cvnn/nn.hpp"
#include "helpers.hpp"

using namespace cvnn;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("backward of sum of real parts") {
  const auto x = random_tensor({3, 4}, 1);
  Tape tape;
  const auto v = tape.parameter("x", x);
  const auto g = tape.backward(ad::sum_re(v)).at("x");
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(g.re()[i] == 1.0);
    CHECK(g.im()[i] == 0.0);
  }
}

TEST_CASE("backward of squared norm") {
  const auto x = random_tensor({3, 4}, 2);
  Tape tape;
  const auto v = tape.parameter("x", x);
  const auto g = tape.backward(ad::sum_sq(v)).at("x");
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(g.re()[i] == 2.0 * x.re()[i]);
    CHECK(g.im()[i] == 2.0 * x.im()[i]);
  }
}

TEST_CASE("backward rejects non-scalar or complex losses") {
  Tape tape;
  const auto v = tape.parameter("x", random_tensor({2}, 3));
  CHECK_THROWS_AS(tape.backward(v), ShapeError);
  const auto c = tape.parameter("c", ComplexTensor::filled({1}, {1.0, 1.0}));
  CHECK_THROWS_AS(tape.backward(c), ShapeError);
}

TEST_CASE("disconnected parameters get zero gradients") {
  Tape tape;
  const auto a = tape.parameter("a", random_tensor({2, 2}, 4));
  tape.parameter("b", random_tensor({3}, 5));
  const auto g = tape.backward(ad::sum_sq(a));
  REQUIRE(g.contains("b"));
  CHECK(g.at("b") == ComplexTensor({3}));
}

TEST_CASE("duplicate parameter names are rejected") {
  Tape tape;
  tape.parameter("a", ComplexTensor({1}));
  CHECK_THROWS_AS(tape.parameter("a", ComplexTensor({1})), UsageError);
}

TEST_CASE("backward twice gives identical gradients; gradient of a sum is the sum") {
  const auto x = random_tensor({1, 6, 6}, 6);
  const auto w = random_tensor({2, 1, 3, 3}, 7);
  Tape tape;
  const auto xv = tape.parameter("x", x);
  const auto wv = tape.parameter("w", w);
  const auto y = ad::conv2d_complex(xv, wv, tape.constant(ComplexTensor({2})));
  const auto l1 = ad::sum_sq(y);
  const auto l2 = ad::sum_re(ad::crelu(y));
  const auto both = ad::add(l1, l2);
  const auto g1 = tape.backward(l1), g2 = tape.backward(l2), g = tape.backward(both);
  CHECK(tape.backward(both) == g);
  for (const auto* name : {"x", "w"}) {
    const auto sum = scale_add(1.0, g1.at(name), g2.at(name));
    CHECK(max_abs_diff(sum, g.at(name)) <= 1e-12);
  }
}

TEST_CASE("gradcheck on linear and quadratic functions") {
  const auto x = random_tensor({2, 3}, 8);
  const double lin = gradcheck([](Tape&, Var v) { return ad::sum_re(ad::scale(v, 3.0)); }, x);
  CHECK(lin <= 1e-10);
  const double quad = gradcheck([](Tape&, Var v) { return ad::sum_sq(v); }, x);
  CHECK(quad <= 1e-8);
}

TEST_CASE("gradcheck reports non-finite values with the coordinate") {
  const auto x = ComplexTensor::filled({2}, {1.0, 0.0});
  const auto f = [](Tape& tape, Var v) {
    const double s = v.value().re()[1] > 1.0 + 1e-7 ? std::numeric_limits<double>::infinity() : 0.0;
    return ad::add(ad::sum_sq(v), tape.constant(ComplexTensor::filled({1}, {s, 0.0})));
  };
  try {
    gradcheck(f, x);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("[1]") != std::string::npos);
  }
}

TEST_CASE("three-layer complex conv net gradients match finite differences") {
  std::map<std::string, ComplexTensor> params;
  const std::size_t ch[] = {1, 3, 3, 1};
  for (int l = 0; l < 3; ++l) {
    params["w" + std::to_string(l)] = random_tensor({ch[l + 1], ch[l], 3, 3}, 20 + l);
    params["b" + std::to_string(l)] = random_tensor({ch[l + 1]}, 30 + l);
  }
  const auto x = random_tensor({1, 6, 6}, 9);
  const auto f = [&](Tape& tape, const std::map<std::string, Var>& p) {
    auto h = tape.constant(x);
    for (int l = 0; l < 3; ++l) {
      h = ad::conv2d_complex(h, p.at("w" + std::to_string(l)), p.at("b" + std::to_string(l)));
      if (l < 2) h = ad::cardioid(h);
    }
    return ad::sum_sq(h);
  };
  const auto report = gradcheck_params(f, params);
  CHECK(report.per_parameter.size() == params.size());
  CHECK(report.max_relative_error <= 1e-4);
}

TEST_CASE("complex conv Jacobian has Cauchy-Riemann structure") {
  const auto x = random_tensor({1, 4, 4}, 40);
  const auto w = random_tensor({1, 1, 3, 3}, 41);
  const ConvKernel k{w, ComplexTensor({1})};

  // Per output pixel, by central differences.
  const double h = 1e-6;
  for (std::size_t j : {0u, 5u, 15u}) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
      ComplexTensor ap = x, am = x, bp = x, bm = x;
      ap.re()[i] += h;
      am.re()[i] -= h;
      bp.im()[i] += h;
      bm.im()[i] -= h;
      const auto dA = scale_add(-1.0, conv2d_complex(am, k), conv2d_complex(ap, k));
      const auto dB = scale_add(-1.0, conv2d_complex(bm, k), conv2d_complex(bp, k));
      CHECK(std::abs(dA.re()[j] - dB.im()[j]) / (2 * h) <= 1e-8);
      CHECK(std::abs(dB.re()[j] + dA.im()[j]) / (2 * h) <= 1e-8);
    }
  }

  // Same structure in the analytic backward of the summed read-outs.
  Tape tape;
  const auto xv = tape.parameter("x", x);
  const auto y = ad::conv2d_complex(xv, tape.constant(w), tape.constant(ComplexTensor({1})));
  const auto minus_i = tape.constant(ComplexTensor::filled({1, 1, 1, 1}, {0.0, -1.0}));
  const auto g_re = tape.backward(ad::sum_re(y)).at("x");
  const auto g_im = tape.backward(ad::sum_re(ad::conv2d_complex(y, minus_i, tape.constant(ComplexTensor({1}))))).at("x");
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(g_re.re()[i] - g_im.im()[i]) <= 1e-12);
    CHECK(std::abs(g_re.im()[i] + g_im.re()[i]) <= 1e-12);
  }
}
