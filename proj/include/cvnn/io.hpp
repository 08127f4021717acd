#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvnn/models.hpp"
#include "cvnn/mri.hpp"
#include "cvnn/train.hpp"

namespace cvnn {

namespace fs = std::filesystem;

// CXT1 container: "CXT1", dtype u8 (0 real, 1 complex), ndim u8, ndim x u64
// LE dims, then f32 LE payload (real plane, then imaginary plane if complex).

std::vector<std::uint8_t> encode_cxt(const ComplexTensor& t, bool complex);
ComplexTensor decode_cxt(const std::vector<std::uint8_t>& bytes, const std::string& what = "cxt");
/// Stores as complex unless every imaginary entry is zero.
void write_cxt(const fs::path& path, const ComplexTensor& t);
void write_cxt(const fs::path& path, const ComplexTensor& t, bool complex);
ComplexTensor read_cxt(const fs::path& path);
/// dtype code of a stored container without decoding the payload.
bool cxt_is_complex(const fs::path& path);

std::string read_text(const fs::path& path);
/// Writes through a temporary file so readers never see a partial file.
void write_text(const fs::path& path, const std::string& text);

// Checkpoints: a directory holding manifest.txt, config.txt and one container
// per tensor. Complex kernels are split into kernel-X and kernel-Y files.

void save_checkpoint(const fs::path& dir, const ModelParams& params, const TrainConfig& config);

struct Checkpoint {
  TrainConfig config;
  std::string digest;
  ModelParams params;
};

/// Validates that every manifest entry resolves to a shape-matching file and
/// that the tensors match the layout of the recorded config.
Checkpoint load_checkpoint(const fs::path& dir);

// Datasets: exNNNNN/{image,maps,mask,kspace}.cxt plus meta.txt per example,
// and train.txt / val.txt / test.txt listing example directories.

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// 80/10/10, rounding the train and validation shares to nearest.
SplitCounts split_counts(std::size_t n);

std::string example_dir_name(std::size_t index);
void write_example(const fs::path& dir, const AcquisitionExample& ex);
/// Maps are renormalised after loading to undo f32 rounding.
AcquisitionExample read_example(const fs::path& dir);

struct DatasetSpec {
  std::size_t n = 250;
  ExampleSpec example;
};

/// Example i uses seed derive_seed(spec.example.seed, i).
std::vector<AcquisitionExample> synthesize_dataset(const DatasetSpec& spec);
void write_dataset(const fs::path& root, const std::vector<AcquisitionExample>& examples);

std::vector<std::string> read_manifest(const fs::path& root, const std::string& split);
std::vector<AcquisitionExample> load_split(const fs::path& root, const std::string& split);
TrainData load_dataset(const fs::path& root);

/// Every dataset invariant violation found under root: manifests, mask rules,
/// map normalisation and k-space consistency with the recorded seeds.
std::vector<std::string> verify_dataset(const fs::path& root);

// CSV

std::string loss_log_csv(const std::vector<double>& losses);
std::string metric_report_csv(const MetricReport& report);

// PNG (8-bit grayscale)

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> encode_png(const GrayImage& image);
void write_png(const fs::path& path, const GrayImage& image);

/// q-quantile (nearest rank) of the magnitudes of t.
double magnitude_percentile(const ComplexTensor& t, double q);
/// |t| windowed to [0, window_max] of an [H,W] image.
GrayImage magnitude_gray(const ComplexTensor& t, double window_max);
/// Phase mapped linearly from [-pi, pi] to [0, 255].
GrayImage phase_gray(const ComplexTensor& t);
/// scale * |pred - target| windowed to [0, window_max].
GrayImage difference_gray(const ComplexTensor& pred, const ComplexTensor& target, double scale,
                          double window_max);
/// Side-by-side panels of equal height.
GrayImage hconcat(const std::vector<GrayImage>& panels);

}  // namespace cvnn
