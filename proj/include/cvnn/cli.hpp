#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvnn/cs.hpp"
#include "cvnn/io.hpp"
#include "cvnn/train.hpp"

namespace cvnn {

struct PhantomArgs {
  std::size_t n = 250;
  std::size_t size = 64;
  std::size_t coils = 8;
  std::uint64_t seed = 0;
  double accel = 4.0;
  /// Upper end of a uniform acceleration range; 0 means fixed `accel`.
  double accel_max = 0.0;
  std::size_t calib = 12;
  double density_power = 2.0;
  std::size_t phase_detail = 4;
  double snr_db = 30.0;
  fs::path out;
};

void cmd_phantom(const PhantomArgs& args);

/// Trains from a key=value config. Writes config.txt, loss.csv, metrics.csv,
/// checkpoints/step_NNNNNN/ every checkpoint_every steps and best/.
TrainResult cmd_train(const fs::path& config_path, std::ostream& log);
TrainResult run_training(const TrainConfig& config, std::ostream& log);

/// Lambda with the lowest mean NRMSE on `examples`; the default when empty.
double select_cs_lambda(const std::vector<AcquisitionExample>& examples, const CsConfig& base);

struct CompareArgs {
  fs::path data;
  fs::path out;
  ModelKind model = ModelKind::Unrolled;
  std::vector<std::string> modes = {"real", "complex"};
  std::vector<std::string> activations = {"crelu", "modrelu", "zrelu", "cardioid"};
  std::vector<std::size_t> widths = {16};
  /// Unrolled iterations, or U-Net levels.
  std::vector<std::size_t> depths = {2};
  std::size_t steps = 2000;
  std::size_t batch = 2;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t checkpoint_every = 500;
  double diff_scale = 40.0;
  std::size_t panels = 4;
  std::size_t cs_iterations = 100;
};

struct CompareRow {
  std::string method;
  std::string conv;
  std::string activation;
  /// Activation cell this row belongs to; real rows reuse one relu network.
  std::string cell_activation;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t depth = 0;
  std::size_t params = 0;
  std::string status = "ok";
  MetricSummary mean;
  std::string note;
};

std::string compare_csv(const std::vector<CompareRow>& rows);

/// Full cross product of modes x activations x widths x depths with
/// parameter parity, plus zero-filled and CS rows. Writes compare.csv,
/// per-cell outputs under cells/ and PNG panels under panels/.
std::vector<CompareRow> cmd_compare(const CompareArgs& args, std::ostream& log);

/// Prints every check and the worst error per kind. Returns the worst error.
double cmd_gradcheck(std::ostream& out, std::uint64_t seed = 7);

std::vector<std::string> cmd_verify(const fs::path& data);

struct ReconArgs {
  fs::path checkpoint;
  fs::path example;
  fs::path out;
  /// model, zero-filled, cs or truth.
  std::string method = "model";
  double lambda = 1e-3;
};

/// Writes magnitude.png, phase.png and metrics.csv for one example.
MetricReport cmd_recon(const ReconArgs& args);

/// Exit codes: 0 success, 1 usage, 2 data or invariant, 3 numerical.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cvnn
