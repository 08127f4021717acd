#include "cvnn/nn.hpp"

#include <cmath>
#include <numbers>

#include "cvnn/random.hpp"

namespace cvnn {

std::string to_string(ConvMode mode) { return mode == ConvMode::Real ? "real" : "complex"; }

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Relu2Ch: return "relu";
    case ActivationKind::CRelu: return "crelu";
    case ActivationKind::ZRelu: return "zrelu";
    case ActivationKind::ModRelu: return "modrelu";
    case ActivationKind::Cardioid: return "cardioid";
  }
  return "unknown";
}

ConvMode parse_conv_mode(std::string_view text) {
  if (text == "real") return ConvMode::Real;
  if (text == "complex") return ConvMode::Complex;
  throw UsageError("unknown conv mode '" + std::string(text) + "' (expected real or complex)");
}

ActivationKind parse_activation(std::string_view text) {
  if (text == "relu") return ActivationKind::Relu2Ch;
  if (text == "crelu") return ActivationKind::CRelu;
  if (text == "zrelu") return ActivationKind::ZRelu;
  if (text == "modrelu") return ActivationKind::ModRelu;
  if (text == "cardioid") return ActivationKind::Cardioid;
  throw UsageError("unknown activation '" + std::string(text) +
                   "' (expected relu, crelu, zrelu, modrelu or cardioid)");
}

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

bool in_first_quadrant(double a, double b) {
  const double theta = std::atan2(b, a);
  return theta >= 0.0 && theta <= kHalfPi;
}

// Bias for entry i of a tensor whose leading axis indexes channels.
struct BiasLookup {
  const ComplexTensor& bias;
  std::size_t per_channel;

  BiasLookup(const ComplexTensor& d, const ComplexTensor& b) : bias(b), per_channel(0) {
    if (b.numel() == 1) return;
    if (b.numel() != d.dim(0)) {
      throw ShapeError("modrelu: bias length " + std::to_string(b.numel()) +
                       " does not match axis 0 (" + std::to_string(d.dim(0)) + ")");
    }
    per_channel = d.numel() / d.dim(0);
  }
  std::size_t channel(std::size_t i) const { return per_channel == 0 ? 0 : i / per_channel; }
  double operator()(std::size_t i) const { return bias.re()[channel(i)]; }
};

}  // namespace

ComplexTensor relu_two_channel(const ComplexTensor& d) {
  ComplexTensor out(d.shape());
  for (std::size_t i = 0; i < d.numel(); ++i) {
    out.re()[i] = d.re()[i] > 0.0 ? d.re()[i] : 0.0;
    out.im()[i] = d.im()[i] > 0.0 ? d.im()[i] : 0.0;
  }
  return out;
}

ComplexTensor crelu(const ComplexTensor& d) { return relu_two_channel(d); }

ComplexTensor zrelu(const ComplexTensor& d) {
  ComplexTensor out(d.shape());
  for (std::size_t i = 0; i < d.numel(); ++i) {
    if (in_first_quadrant(d.re()[i], d.im()[i])) {
      out.re()[i] = d.re()[i];
      out.im()[i] = d.im()[i];
    }
  }
  return out;
}

ComplexTensor modrelu(const ComplexTensor& d, const ComplexTensor& bias) {
  const BiasLookup b(d, bias);
  ComplexTensor out(d.shape());
  for (std::size_t i = 0; i < d.numel(); ++i) {
    const double r = std::hypot(d.re()[i], d.im()[i]);
    const double shifted = r + b(i);
    if (r > 0.0 && shifted > 0.0) {
      const double s = shifted / r;
      out.re()[i] = s * d.re()[i];
      out.im()[i] = s * d.im()[i];
    }
  }
  return out;
}

ComplexTensor cardioid(const ComplexTensor& d) {
  ComplexTensor out(d.shape());
  for (std::size_t i = 0; i < d.numel(); ++i) {
    const double a = d.re()[i];
    const double b = d.im()[i];
    const double r = std::hypot(a, b);
    if (r == 0.0) continue;
    const double s = 0.5 * (1.0 + a / r);
    out.re()[i] = s * a;
    out.im()[i] = s * b;
  }
  return out;
}

ConvKernel init_conv_weights(const LayerTemplate& layer, ConvMode mode, std::uint64_t seed) {
  if (layer.out_ch < 1) throw UsageError("init_conv_weights: out_ch must be >= 1");
  if (layer.kernel % 2 == 0) throw UsageError("init_conv_weights: kernel must be odd");
  const double k2 = static_cast<double>(layer.kernel * layer.kernel);
  const double parts = mode == ConvMode::Complex ? 2.0 : 1.0;
  const double fan_in = parts * static_cast<double>(layer.in_ch) * k2;
  const double fan_out = parts * static_cast<double>(layer.out_ch) * k2;
  const double s = std::sqrt(6.0 / (fan_in + fan_out));

  ConvKernel kernel{ComplexTensor({layer.out_ch, layer.in_ch, layer.kernel, layer.kernel}),
                    ComplexTensor({layer.out_ch})};
  Rng rng(seed);
  for (auto& v : kernel.weights.re()) v = rng.uniform(-s, s);
  if (mode == ConvMode::Complex) {
    for (auto& v : kernel.weights.im()) v = rng.uniform(-s, s);
  }
  return kernel;
}

std::size_t template_param_count(const NetworkTemplate& net, ConvMode mode, std::size_t width) {
  const std::size_t io = mode == ConvMode::Complex ? 1 : 2;
  std::size_t total = 0;
  for (const auto& layer : net.layers) {
    const auto cin = layer.in.eval(width, io);
    const auto cout = layer.out.eval(width, io);
    const auto k2 = layer.kernel * layer.kernel;
    if (mode == ConvMode::Complex) {
      total += 2 * k2 * cin * cout + 2 * cout;
    } else {
      total += k2 * cin * cout + cout;
    }
  }
  return total;
}

double ParityResult::relative_gap() const {
  if (complex_param_count == 0) return 0.0;
  const double diff = std::abs(static_cast<double>(complex_param_count) -
                               static_cast<double>(real_param_count));
  return diff / static_cast<double>(complex_param_count);
}

ParityResult parity_feature_maps(const NetworkTemplate& net, std::size_t complex_maps) {
  ParityResult result;
  result.complex_param_count = template_param_count(net, ConvMode::Complex, complex_maps);

  bool width_dependent = false;
  for (const auto& layer : net.layers) {
    width_dependent = width_dependent || layer.in.width_mult > 0 || layer.out.width_mult > 0;
  }
  if (!width_dependent) {
    result.real_channels = 2;
    result.real_param_count = template_param_count(net, ConvMode::Real, 0);
    return result;
  }

  // Real totals grow monotonically with width: find the first width reaching
  // the complex total, then keep whichever neighbour is closer.
  std::size_t n = 1;
  while (template_param_count(net, ConvMode::Real, n) < result.complex_param_count) ++n;
  const auto above = template_param_count(net, ConvMode::Real, n);
  if (n > 1) {
    const auto below = template_param_count(net, ConvMode::Real, n - 1);
    if (result.complex_param_count - below < above - result.complex_param_count) {
      result.real_channels = n - 1;
      result.real_param_count = below;
      return result;
    }
  }
  result.real_channels = n;
  result.real_param_count = above;
  return result;
}

namespace ad {

namespace {

Tape& tape_of(Var v) { return *v.tape(); }

}  // namespace

Var relu_two_channel(Var d) {
  const ComplexTensor& x = d.value();
  return tape_of(d).record(cvnn::relu_two_channel(x), {d},
                           [&x](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             for (std::size_t i = 0; i < x.numel(); ++i) {
                               if (x.re()[i] > 0.0) in[0]->re()[i] += g.re()[i];
                               if (x.im()[i] > 0.0) in[0]->im()[i] += g.im()[i];
                             }
                           });
}

Var crelu(Var d) { return relu_two_channel(d); }

Var zrelu(Var d) {
  const ComplexTensor& x = d.value();
  return tape_of(d).record(cvnn::zrelu(x), {d},
                           [&x](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             for (std::size_t i = 0; i < x.numel(); ++i) {
                               const double theta = std::atan2(x.im()[i], x.re()[i]);
                               // boundary rays pass values but carry no gradient
                               if (theta > 0.0 && theta < kHalfPi) {
                                 in[0]->re()[i] += g.re()[i];
                                 in[0]->im()[i] += g.im()[i];
                               }
                             }
                           });
}

Var modrelu(Var d, Var bias) {
  const ComplexTensor& x = d.value();
  const ComplexTensor& b = bias.value();
  return tape_of(d).record(
      cvnn::modrelu(x, b), {d, bias},
      [&x, &b](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        const BiasLookup lookup(x, b);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          const double a = x.re()[i];
          const double c = x.im()[i];
          const double r = std::hypot(a, c);
          const double beta = lookup(i);
          if (!(r > 0.0 && r + beta > 0.0)) continue;
          const double gr = g.re()[i];
          const double gi = g.im()[i];
          const double dot = a * gr + c * gi;
          // out = (1 + beta/r) d; J = (1 + beta/r) I - (beta/r^3) d d^T
          if (in[0] != nullptr) {
            const double s = 1.0 + beta / r;
            const double k = beta / (r * r * r);
            in[0]->re()[i] += s * gr - k * a * dot;
            in[0]->im()[i] += s * gi - k * c * dot;
          }
          if (in[1] != nullptr) in[1]->re()[lookup.channel(i)] += dot / r;
        }
      });
}

Var cardioid(Var d) {
  const ComplexTensor& x = d.value();
  return tape_of(d).record(cvnn::cardioid(x), {d},
                           [&x](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             for (std::size_t i = 0; i < x.numel(); ++i) {
                               const double a = x.re()[i];
                               const double b = x.im()[i];
                               const double gr = g.re()[i];
                               const double gi = g.im()[i];
                               const double r = std::hypot(a, b);
                               if (r == 0.0) {
                                 in[0]->re()[i] += 0.5 * gr;
                                 in[0]->im()[i] += 0.5 * gi;
                                 continue;
                               }
                               const double r3 = r * r * r;
                               const double dre_da = 0.5 + 0.5 * a * (r * r + b * b) / r3;
                               const double dre_db = -0.5 * a * a * b / r3;
                               const double dim_da = 0.5 * b * b * b / r3;
                               const double dim_db = 0.5 + 0.5 * a * a * a / r3;
                               in[0]->re()[i] += gr * dre_da + gi * dim_da;
                               in[0]->im()[i] += gr * dre_db + gi * dim_db;
                             }
                           });
}

Var activate(Var d, ActivationKind kind, std::optional<Var> bias) {
  switch (kind) {
    case ActivationKind::Relu2Ch: return relu_two_channel(d);
    case ActivationKind::CRelu: return crelu(d);
    case ActivationKind::ZRelu: return zrelu(d);
    case ActivationKind::ModRelu:
      if (!bias) throw UsageError("modrelu activation needs a bias parameter");
      return modrelu(d, *bias);
    case ActivationKind::Cardioid: return cardioid(d);
  }
  throw UsageError("unknown activation kind");
}

}  // namespace ad

}  // namespace cvnn
