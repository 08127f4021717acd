#include "cvnn/models.hpp"

#include "cvnn/mri.hpp"

namespace cvnn {

std::string to_string(ModelKind kind) { return kind == ModelKind::Unrolled ? "unrolled" : "unet"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "unrolled") return ModelKind::Unrolled;
  if (text == "unet") return ModelKind::UNet;
  throw UsageError("unknown model '" + std::string(text) + "' (expected unrolled or unet)");
}

void validate_activation(ConvMode mode, ActivationKind activation) {
  if (mode == ConvMode::Real && activation != ActivationKind::Relu2Ch) {
    throw UsageError("complex activations require conv=complex (real convolution uses relu)");
  }
  if (mode == ConvMode::Complex && activation == ActivationKind::Relu2Ch) {
    throw UsageError("activation=relu labels the real two-channel network; use conv=real or crelu");
  }
}

void ModelParams::add(std::string name, Param param) {
  if (entries_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
  entries_.emplace(std::move(name), std::move(param));
}

const Param& ModelParams::at(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("config/params mismatch: missing parameter '" + name + "'");
  return it->second;
}

Param& ModelParams::at(const std::string& name) {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("config/params mismatch: missing parameter '" + name + "'");
  return it->second;
}

std::map<std::string, ComplexTensor> ModelParams::tensors() const {
  std::map<std::string, ComplexTensor> out;
  for (const auto& [name, p] : entries_) out.emplace(name, p.value);
  return out;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, p] : entries_) {
    const auto it = other.entries_.find(name);
    if (it == other.entries_.end()) return false;
    const auto& q = it->second;
    if (p.kind != q.kind || p.complex != q.complex || !(p.value == q.value)) return false;
  }
  return true;
}

std::size_t param_count(const ModelParams& params) {
  std::size_t total = 0;
  for (const auto& [name, p] : params) total += p.value.numel() * (p.complex ? 2 : 1);
  return total;
}

namespace {

std::size_t io_channels(ConvMode mode) { return mode == ConvMode::Complex ? 1 : 2; }

struct ConvLayer {
  std::string prefix;
  ChannelExpr in;
  ChannelExpr out;
  std::size_t kernel;
  bool activated;
};

std::vector<ConvLayer> unrolled_layers(const UnrolledConfig& c) {
  if (c.denoiser_layers < 1) throw UsageError("denoiser_layers must be >= 1");
  std::vector<ConvLayer> layers;
  for (std::size_t m = 0; m < c.iterations; ++m) {
    for (std::size_t l = 0; l < c.denoiser_layers; ++l) {
      const bool first = l == 0;
      const bool last = l + 1 == c.denoiser_layers;
      const ChannelExpr in = first ? ChannelExpr{0, 1} : ChannelExpr{1, 0};
      const ChannelExpr out = last ? ChannelExpr{0, 1} : ChannelExpr{1, 0};
      layers.push_back({"iter" + std::to_string(m) + ".conv" + std::to_string(l), in, out, c.kernel, !last});
    }
  }
  return layers;
}

std::vector<ConvLayer> unet_layers(const UNetConfig& c) {
  if (c.levels < 1) throw UsageError("unet levels must be >= 1");
  if (c.convs_per_level < 1) throw UsageError("unet convs_per_level must be >= 1");
  std::vector<ConvLayer> layers;
  const auto width = [](std::size_t level) { return ChannelExpr{std::size_t{1} << level, 0}; };
  for (std::size_t l = 0; l < c.levels; ++l) {
    for (std::size_t j = 0; j < c.convs_per_level; ++j) {
      ChannelExpr in = width(l);
      if (j == 0) in = l == 0 ? ChannelExpr{0, 1} : width(l - 1);
      layers.push_back({"enc" + std::to_string(l) + ".conv" + std::to_string(j), in, width(l), c.kernel, true});
    }
  }
  for (std::size_t l = c.levels - 1; l-- > 0;) {
    layers.push_back({"up" + std::to_string(l) + ".conv", width(l + 1), width(l), c.kernel, true});
    for (std::size_t j = 0; j < c.convs_per_level; ++j) {
      const ChannelExpr in = j == 0 ? ChannelExpr{std::size_t{2} << l, 0} : width(l);
      layers.push_back({"dec" + std::to_string(l) + ".conv" + std::to_string(j), in, width(l), c.kernel, true});
    }
  }
  layers.push_back({"out.conv", width(0), ChannelExpr{0, 1}, 1, false});
  return layers;
}

NetworkTemplate to_template(const std::vector<ConvLayer>& layers) {
  NetworkTemplate net;
  for (const auto& l : layers) net.layers.push_back({l.in, l.out, l.kernel});
  return net;
}

void add_layers(ModelParams& params, const std::vector<ConvLayer>& layers, ConvMode mode,
                ActivationKind activation, std::size_t width, std::uint64_t seed) {
  const auto io = io_channels(mode);
  const bool complex = mode == ConvMode::Complex;
  std::uint64_t stream = 0;
  for (const auto& layer : layers) {
    LayerTemplate t;
    t.in_ch = layer.in.eval(width, io);
    t.out_ch = layer.out.eval(width, io);
    t.kernel = layer.kernel;
    if (layer.activated) t.activation = activation;
    auto kernel = init_conv_weights(t, mode, derive_seed(seed, stream++));
    params.add(layer.prefix + ".weight", {ParamKind::Kernel, complex, std::move(kernel.weights)});
    params.add(layer.prefix + ".bias", {ParamKind::Bias, complex, std::move(kernel.bias)});
    if (layer.activated && activation == ActivationKind::ModRelu) {
      params.add(layer.prefix + ".modrelu", {ParamKind::Scalar, false, ComplexTensor({t.out_ch})});
    }
  }
}

const Var& lookup(const ParamVars& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw UsageError("config/params mismatch: missing parameter '" + name + "'");
  return it->second;
}

Var apply_layer(const ParamVars& params, Var x, const std::string& prefix, ConvMode mode,
                bool activated, ActivationKind activation) {
  const auto& w = lookup(params, prefix + ".weight");
  const auto& b = lookup(params, prefix + ".bias");
  Var h = mode == ConvMode::Complex ? ad::conv2d_complex(x, w, b) : ad::conv2d_real(x, w, b);
  if (!activated) return h;
  if (activation == ActivationKind::ModRelu) {
    return ad::activate(h, activation, lookup(params, prefix + ".modrelu"));
  }
  return ad::activate(h, activation);
}

}  // namespace

NetworkTemplate unrolled_template(const UnrolledConfig& config) {
  return to_template(unrolled_layers(config));
}

NetworkTemplate unet_template(const UNetConfig& config) { return to_template(unet_layers(config)); }

ModelParams init_unrolled(const UnrolledConfig& config, std::uint64_t seed) {
  validate_activation(config.conv_mode, config.activation);
  if (config.iterations > 16) throw UsageError("unrolled iterations must be in 0..16");
  ModelParams params;
  add_layers(params, unrolled_layers(config), config.conv_mode, config.activation,
             config.feature_maps, seed);
  for (std::size_t m = 0; m < config.iterations; ++m) {
    params.add("iter" + std::to_string(m) + ".step",
               {ParamKind::Scalar, false, ComplexTensor::real({1}, {1.0})});
  }
  return params;
}

ModelParams init_unet(const UNetConfig& config, std::uint64_t seed) {
  validate_activation(config.conv_mode, config.activation);
  ModelParams params;
  add_layers(params, unet_layers(config), config.conv_mode, config.activation,
             config.base_features, seed);
  return params;
}

ParamVars bind_parameters(Tape& tape, const ModelParams& params) {
  ParamVars vars;
  for (const auto& [name, p] : params) vars.emplace(name, tape.parameter(name, p.value));
  return vars;
}

namespace {

ParamVars bind_constants(Tape& tape, const ModelParams& params) {
  ParamVars vars;
  for (const auto& [name, p] : params) vars.emplace(name, tape.constant(p.value));
  return vars;
}

}  // namespace

ComplexTensor dc_step(const ComplexTensor& y, const ComplexTensor& kspace_u,
                      const ComplexTensor& maps, const ComplexTensor& mask, double t) {
  const auto residual = scale_add({-1.0, 0.0}, kspace_u, sense_forward(y, maps, mask));
  return scale_add({-t, 0.0}, sense_adjoint(residual, maps, mask), y);
}

namespace ad {

Var dc_step(Var y, Var kspace_u, Var maps, Var mask, Var t) {
  const Var residual = sub(sense_forward(y, maps, mask), kspace_u);
  return sub(y, scale_by(sense_adjoint(residual, maps, mask), t));
}

Var unrolled_forward(const ParamVars& params, Var kspace_u, Var maps, Var mask,
                     const UnrolledConfig& config) {
  const auto layers = unrolled_layers(config);
  Var y = sense_adjoint(kspace_u, maps, mask);
  const Shape image_shape = y.shape();
  const Shape chw{1, image_shape[0], image_shape[1]};
  for (std::size_t m = 0; m < config.iterations; ++m) {
    y = dc_step(y, kspace_u, maps, mask, lookup(params, "iter" + std::to_string(m) + ".step"));
    Var h = reshape(y, chw);
    if (config.conv_mode == ConvMode::Real) h = to_channels(h);
    for (std::size_t l = 0; l < config.denoiser_layers; ++l) {
      const auto& layer = layers[m * config.denoiser_layers + l];
      h = apply_layer(params, h, layer.prefix, config.conv_mode, layer.activated, config.activation);
    }
    if (config.conv_mode == ConvMode::Real) h = from_channels(h);
    y = add(y, reshape(h, image_shape));
  }
  return y;
}

Var unet_forward(const ParamVars& params, Var zero_filled, const UNetConfig& config) {
  const Shape image_shape = zero_filled.shape();
  if (image_shape.size() != 2) throw ShapeError("unet_forward: expected an [H,W] image");
  const std::size_t factor = std::size_t{1} << (config.levels - 1);
  if (image_shape[0] % factor != 0 || image_shape[1] % factor != 0) {
    throw ShapeError("unet_forward: spatial axes " + shape_string(image_shape) +
                     " not divisible by " + std::to_string(factor));
  }
  const auto mode = config.conv_mode;
  const auto act = config.activation;
  const auto level = [](const char* stage, std::size_t l) { return stage + std::to_string(l); };

  Var h = reshape(zero_filled, {1, image_shape[0], image_shape[1]});
  if (mode == ConvMode::Real) h = to_channels(h);
  std::vector<Var> skips;
  for (std::size_t l = 0; l < config.levels; ++l) {
    for (std::size_t j = 0; j < config.convs_per_level; ++j) {
      h = apply_layer(params, h, level("enc", l) + ".conv" + std::to_string(j), mode, true, act);
    }
    if (l + 1 < config.levels) {
      skips.push_back(h);
      h = avgpool2(h);
    }
  }
  for (std::size_t l = config.levels - 1; l-- > 0;) {
    h = upsample2(h);
    h = apply_layer(params, h, level("up", l) + ".conv", mode, true, act);
    h = concat_channels(skips[l], h);
    for (std::size_t j = 0; j < config.convs_per_level; ++j) {
      h = apply_layer(params, h, level("dec", l) + ".conv" + std::to_string(j), mode, true, act);
    }
  }
  h = apply_layer(params, h, "out.conv", mode, false, act);
  if (mode == ConvMode::Real) h = from_channels(h);
  return reshape(h, image_shape);
}

}  // namespace ad

ComplexTensor unrolled_forward(const ComplexTensor& kspace_u, const ComplexTensor& maps,
                               const ComplexTensor& mask, const ModelParams& params,
                               const UnrolledConfig& config) {
  Tape tape;
  const auto vars = bind_constants(tape, params);
  return ad::unrolled_forward(vars, tape.constant(kspace_u), tape.constant(maps),
                              tape.constant(mask), config)
      .value();
}

ComplexTensor unet_forward(const ComplexTensor& zero_filled, const ModelParams& params,
                           const UNetConfig& config) {
  Tape tape;
  const auto vars = bind_constants(tape, params);
  return ad::unet_forward(vars, tape.constant(zero_filled), config).value();
}

ConvMode ModelSpec::conv_mode() const {
  return kind == ModelKind::Unrolled ? unrolled.conv_mode : unet.conv_mode;
}

ModelParams ModelSpec::init(std::uint64_t seed) const {
  return kind == ModelKind::Unrolled ? init_unrolled(unrolled, seed) : init_unet(unet, seed);
}

NetworkTemplate ModelSpec::network_template() const {
  return kind == ModelKind::Unrolled ? unrolled_template(unrolled) : unet_template(unet);
}

Var ModelSpec::forward(const ParamVars& params, Var kspace_u, Var maps, Var mask) const {
  if (kind == ModelKind::Unrolled) return ad::unrolled_forward(params, kspace_u, maps, mask, unrolled);
  return ad::unet_forward(params, ad::sense_adjoint(kspace_u, maps, mask), unet);
}

ComplexTensor ModelSpec::predict(const ModelParams& params, const ComplexTensor& kspace_u,
                                 const ComplexTensor& maps, const ComplexTensor& mask) const {
  Tape tape;
  const auto vars = bind_constants(tape, params);
  return forward(vars, tape.constant(kspace_u), tape.constant(maps), tape.constant(mask)).value();
}

}  // namespace cvnn
