#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvnn/autodiff.hpp"
#include "cvnn/tensor.hpp"

namespace cvnn {

/// splitmix64 mix of a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct PhantomSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;
  /// Number of Gaussian phase bumps.
  std::size_t phase_detail = 4;
  /// Multiplies the quadratic phase coefficients; 0 removes the smooth phase.
  double phase_poly_scale = 1.0;
  /// Relative random perturbation of the ellipse geometry and intensities.
  double geometry_jitter = 0.05;
};

/// Shepp-Logan magnitude in [0, 1] times a smooth quadratic phase plus small
/// Gaussian phase bumps. Shape [H,W].
ComplexTensor generate_phantom(const PhantomSpec& spec);
ComplexTensor generate_phantom(std::size_t height, std::size_t width, std::uint64_t seed,
                               std::size_t phase_detail);

/// Smooth analytic coil sensitivities [C,H,W] normalised so that
/// sum_c |S_c|^2 = 1 at every pixel.
ComplexTensor generate_maps(std::size_t height, std::size_t width, std::size_t coils,
                            std::uint64_t seed);

/// Rescales maps pixelwise to sum_c |S_c|^2 = 1.
ComplexTensor normalize_maps(const ComplexTensor& maps);

struct MaskSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  double accel_target = 4.0;
  std::size_t calib = 12;
  double density_power = 2.0;
  std::uint64_t seed = 0;
};

struct PoissonMask {
  ComplexTensor mask;  // real-only [H,W] of 0/1
  double r0 = 0.0;     // base exclusion radius found by bisection
  double acceleration = 1.0;
};

/// Variable-density exclusion radius r0 * (1 + rho/rho_max)^power at k-space
/// location (ky, kx), rho measured from the centre (H/2, W/2).
double mask_radius(const MaskSpec& spec, double r0, std::size_t ky, std::size_t kx);

bool in_calibration(const MaskSpec& spec, std::size_t ky, std::size_t kx);

/// Poisson-disc mask with a fully sampled centre square. Outside the square
/// no two samples are closer than the larger of their local radii. r0 is
/// bisected until the acceleration is within 5% of the target.
PoissonMask poisson_mask_detailed(const MaskSpec& spec);
inline ComplexTensor poisson_mask(const MaskSpec& spec) { return poisson_mask_detailed(spec).mask; }

double mask_acceleration(const ComplexTensor& mask);

/// Empty when the mask honours calibration, spacing and acceleration rules.
std::vector<std::string> audit_mask(const MaskSpec& spec, const ComplexTensor& mask, double r0);

/// mask * fft2c(maps_c * image) per coil. image [H,W], maps [C,H,W], mask [H,W].
ComplexTensor sense_forward(const ComplexTensor& image, const ComplexTensor& maps,
                            const ComplexTensor& mask);
/// sum_c conj(maps_c) * ifft2c(mask * kspace_c).
ComplexTensor sense_adjoint(const ComplexTensor& kspace, const ComplexTensor& maps,
                            const ComplexTensor& mask);

/// sense_forward plus i.i.d. complex Gaussian noise (std noise_sigma per real
/// component) at sampled locations only.
ComplexTensor simulate_acquisition(const ComplexTensor& image, const ComplexTensor& maps,
                                   const ComplexTensor& mask, double noise_sigma,
                                   std::uint64_t seed);

/// Largest eigenvalue of A^H A by power iteration.
double sense_normal_norm(const ComplexTensor& maps, const ComplexTensor& mask,
                         std::size_t iterations = 100, std::uint64_t seed = 0);

struct AcquisitionExample {
  ComplexTensor image;   // [H,W]
  ComplexTensor maps;    // [C,H,W]
  ComplexTensor mask;    // [H,W]
  ComplexTensor kspace;  // [C,H,W]
  std::uint64_t seed = 0;
  double acceleration = 1.0;
  double r0 = 0.0;
  double noise_sigma = 0.0;
  /// Generator settings of the mask, for auditing.
  MaskSpec mask_spec;
};

struct ExampleSpec {
  std::size_t size = 64;
  std::size_t coils = 8;
  std::uint64_t seed = 0;
  double accel_min = 4.0;
  double accel_max = 4.0;
  std::size_t calib = 12;
  double density_power = 2.0;
  std::size_t phase_detail = 4;
  double snr_db = 30.0;
};

/// Seeds of the individual pieces of an example.
struct ExampleSeeds {
  std::uint64_t phantom, maps, mask, noise, accel;
  static ExampleSeeds from(std::uint64_t seed);
};

/// Noise std for the requested SNR relative to the rms k-space sample.
double noise_sigma_for_snr(const ComplexTensor& image, std::size_t coils, double snr_db);

/// Full synthetic acquisition: phantom, maps, mask and noisy undersampled k-space.
AcquisitionExample synthesize_example(const ExampleSpec& spec);

/// Re-simulates k-space from the example's own image, maps, mask, seed and sigma.
ComplexTensor resimulate(const AcquisitionExample& ex);

namespace ad {

/// Differentiable SENSE operators. maps and mask must be constants.
Var sense_forward(Var image, Var maps, Var mask);
Var sense_adjoint(Var kspace, Var maps, Var mask);

}  // namespace ad

}  // namespace cvnn
