#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cvnn/autodiff.hpp"
#include "cvnn/nn.hpp"

namespace cvnn {

struct UnrolledConfig {
  std::size_t iterations = 4;
  std::size_t feature_maps = 16;
  ConvMode conv_mode = ConvMode::Complex;
  ActivationKind activation = ActivationKind::CRelu;
  std::size_t denoiser_layers = 3;
  std::size_t kernel = 3;
};

struct UNetConfig {
  std::size_t levels = 4;
  std::size_t base_features = 32;
  std::size_t convs_per_level = 2;
  ConvMode conv_mode = ConvMode::Complex;
  ActivationKind activation = ActivationKind::CRelu;
  std::size_t kernel = 3;
};

enum class ModelKind { Unrolled, UNet };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Real conv mode must use ReLU; complex mode must use a complex activation.
void validate_activation(ConvMode mode, ActivationKind activation);

enum class ParamKind { Kernel, Bias, Scalar };

struct Param {
  ParamKind kind = ParamKind::Scalar;
  /// Complex parameters carry two real degrees of freedom per entry.
  bool complex = false;
  ComplexTensor value;
};

/// Learnable tensors keyed by unique name.
class ModelParams {
 public:
  using Map = std::map<std::string, Param>;

  void add(std::string name, Param param);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);
  std::size_t size() const noexcept { return entries_.size(); }

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

  std::map<std::string, ComplexTensor> tensors() const;

  bool operator==(const ModelParams& other) const;

 private:
  Map entries_;
};

/// Total real degrees of freedom.
std::size_t param_count(const ModelParams& params);

NetworkTemplate unrolled_template(const UnrolledConfig& config);
NetworkTemplate unet_template(const UNetConfig& config);

ModelParams init_unrolled(const UnrolledConfig& config, std::uint64_t seed);
ModelParams init_unet(const UNetConfig& config, std::uint64_t seed);

using ParamVars = std::map<std::string, Var>;

/// Registers every parameter on the tape under its name.
ParamVars bind_parameters(Tape& tape, const ModelParams& params);

/// y - t * A^H (A y - kspace_u) for the SENSE operator A.
ComplexTensor dc_step(const ComplexTensor& y, const ComplexTensor& kspace_u,
                      const ComplexTensor& maps, const ComplexTensor& mask, double t);

/// Zero-filled start followed by `iterations` blocks of data consistency and
/// a residual conv denoiser. Returns the image [H,W].
ComplexTensor unrolled_forward(const ComplexTensor& kspace_u, const ComplexTensor& maps,
                               const ComplexTensor& mask, const ModelParams& params,
                               const UnrolledConfig& config);

/// Contracting/expanding network with skip connections on the zero-filled image [H,W].
ComplexTensor unet_forward(const ComplexTensor& zero_filled, const ModelParams& params,
                           const UNetConfig& config);

namespace ad {

Var dc_step(Var y, Var kspace_u, Var maps, Var mask, Var t);
Var unrolled_forward(const ParamVars& params, Var kspace_u, Var maps, Var mask,
                     const UnrolledConfig& config);
Var unet_forward(const ParamVars& params, Var zero_filled, const UNetConfig& config);

}  // namespace ad

/// Either network behind one interface, for training and evaluation.
struct ModelSpec {
  ModelKind kind = ModelKind::Unrolled;
  UnrolledConfig unrolled;
  UNetConfig unet;

  ConvMode conv_mode() const;
  ModelParams init(std::uint64_t seed) const;
  NetworkTemplate network_template() const;
  /// Image prediction [H,W] from measured data.
  Var forward(const ParamVars& params, Var kspace_u, Var maps, Var mask) const;
  ComplexTensor predict(const ModelParams& params, const ComplexTensor& kspace_u,
                        const ComplexTensor& maps, const ComplexTensor& mask) const;
};

}  // namespace cvnn
