#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvnn/autodiff.hpp"
#include "cvnn/ops.hpp"

namespace cvnn {

enum class ConvMode { Real, Complex };

/// Relu2Ch labels the two-channel real network; the others act on complex
/// feature maps. ModRelu carries one learnable real bias per feature map.
enum class ActivationKind { Relu2Ch, CRelu, ZRelu, ModRelu, Cardioid };

std::string to_string(ConvMode mode);
std::string to_string(ActivationKind kind);
ConvMode parse_conv_mode(std::string_view text);
/// Accepts relu, crelu, zrelu, modrelu, cardioid.
ActivationKind parse_activation(std::string_view text);

// Activations. modrelu's bias is either one value per leading-axis channel or
// a single value shared by every entry.
ComplexTensor relu_two_channel(const ComplexTensor& d);
ComplexTensor crelu(const ComplexTensor& d);
ComplexTensor zrelu(const ComplexTensor& d);
ComplexTensor modrelu(const ComplexTensor& d, const ComplexTensor& bias);
ComplexTensor cardioid(const ComplexTensor& d);

struct LayerTemplate {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t kernel = 3;
  std::optional<ActivationKind> activation;
};

/// Uniform Glorot draw with fans counted in real parameters: a complex layer
/// has fan_in = 2 * in_ch * k^2. Real mode leaves the imaginary plane zero.
/// Bias is zero.
ConvKernel init_conv_weights(const LayerTemplate& layer, ConvMode mode, std::uint64_t seed);

/// Channel count as a function of the hidden width w and the image channel
/// count io (1 for complex networks, 2 for real ones): width_mult*w + io_mult*io.
struct ChannelExpr {
  std::size_t width_mult = 0;
  std::size_t io_mult = 0;

  std::size_t eval(std::size_t width, std::size_t io) const { return width_mult * width + io_mult * io; }
};

struct LayerShape {
  ChannelExpr in;
  ChannelExpr out;
  std::size_t kernel = 3;
};

/// Conv layers of a network with every hidden width scaling together.
struct NetworkTemplate {
  std::vector<LayerShape> layers;
};

/// Real degrees of freedom of the template's conv layers: a complex layer
/// holds 2*k^2*Cin*Cout + 2*Cout, a real layer k^2*Nin*Nout + Nout.
std::size_t template_param_count(const NetworkTemplate& net, ConvMode mode, std::size_t width);

struct ParityResult {
  std::size_t real_channels = 0;
  std::size_t complex_param_count = 0;
  std::size_t real_param_count = 0;

  double relative_gap() const;
};

/// Real hidden width whose parameter total is closest to the complex network's
/// at `complex_maps` (ties go to the larger width). Templates without a
/// width-dependent layer report the fixed two-channel real width.
ParityResult parity_feature_maps(const NetworkTemplate& net, std::size_t complex_maps);

namespace ad {

Var relu_two_channel(Var d);
Var crelu(Var d);
Var zrelu(Var d);
Var modrelu(Var d, Var bias);
Var cardioid(Var d);
/// Dispatches on kind; `bias` is required for ModRelu and ignored otherwise.
Var activate(Var d, ActivationKind kind, std::optional<Var> bias = std::nullopt);

}  // namespace ad

}  // namespace cvnn
