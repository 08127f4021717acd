#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cvnn/autodiff.hpp"
#include "cvnn/models.hpp"
#include "cvnn/mri.hpp"

namespace cvnn {

/// Mean over entries of |d re| + |d im|.
double l1_loss(const ComplexTensor& pred, const ComplexTensor& target);

/// ||pred - target|| / ||target|| over complex entries.
double nrmse(const ComplexTensor& pred, const ComplexTensor& target);
/// 20 log10(max|target| / rmse); +inf when pred == target.
double psnr(const ComplexTensor& pred, const ComplexTensor& target);
/// Gaussian-window SSIM (11x11, sigma 1.5, valid positions only) on the
/// magnitudes of [H,W] images, dynamic range max|target|.
double ssim(const ComplexTensor& pred, const ComplexTensor& target);
/// RMS of the wrapped phase difference over pixels with |target| > threshold.
double phase_rmse(const ComplexTensor& pred, const ComplexTensor& target,
                  double threshold = 0.1);

namespace ad {

Var l1_loss(Var pred, Var target);
Var nrmse(Var pred, const ComplexTensor& target);
Var psnr(Var pred, const ComplexTensor& target);

}  // namespace ad

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, ComplexTensor> m;
  std::map<std::string, ComplexTensor> v;
  std::size_t step = 0;
};

/// Bias-corrected Adam on every real coordinate. Real-only parameters keep
/// their imaginary plane at zero.
void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  ModelSpec model;
  AdamConfig adam;
  std::size_t batch = 2;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;
  std::string data;
  std::string out;

  void validate() const;
};

/// Shortest round-trip decimal form of v.
std::string format_double(double v);

/// Valid keys of the key=value config format, in canonical order.
const std::vector<std::string>& config_keys();
/// Parses `key=value` lines; `#` starts a comment. Unknown keys throw UsageError.
TrainConfig parse_config(const std::string& text);
/// Canonical text; parse_config(format_config(c)) reproduces c.
std::string format_config(const TrainConfig& config);
/// FNV-1a digest of the canonical model and optimiser settings, as 16 hex digits.
std::string config_digest(const TrainConfig& config);

struct ExampleMetrics {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double acceleration = 1.0;
  double nrmse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double phase_rmse = 0.0;
};

ExampleMetrics measure(const ComplexTensor& pred, const ComplexTensor& target);

struct MetricSummary {
  double nrmse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double phase_rmse = 0.0;
};

struct MetricReport {
  std::string method;
  std::string config_digest;
  std::vector<ExampleMetrics> rows;

  MetricSummary mean() const;
  /// Population standard deviation across rows.
  MetricSummary stddev() const;
};

using Reconstructor = std::function<ComplexTensor(const AcquisitionExample&)>;

/// Applies `recon` to every example, in order.
MetricReport evaluate(const std::vector<AcquisitionExample>& examples, const Reconstructor& recon,
                      std::string method = {}, std::string digest = {});

ComplexTensor zero_filled(const AcquisitionExample& ex);

struct TrainData {
  std::vector<AcquisitionExample> train;
  std::vector<AcquisitionExample> val;
  std::vector<AcquisitionExample> test;
};

struct TrainResult {
  ModelParams initial;
  ModelParams final_params;
  /// Lowest validation NRMSE among checkpoints; the final params without a validation split.
  ModelParams best;
  std::size_t best_step = 0;
  double best_val_nrmse = std::numeric_limits<double>::infinity();
  /// Batch loss before each update.
  std::vector<double> loss_log;
  MetricReport test_report;
};

/// Called after every checkpoint_every updates and after the last one.
using CheckpointFn = std::function<void(std::size_t step, const ModelParams& params)>;

/// Deterministic given the config: initialisation, data order and batching
/// all derive from config.seed.
TrainResult train(const TrainConfig& config, const TrainData& data,
                  const CheckpointFn& on_checkpoint = {});

/// Mean l1 loss of the model over examples.
double dataset_loss(const ModelSpec& model, const ModelParams& params,
                    const std::vector<AcquisitionExample>& examples);

}  // namespace cvnn
