#pragma once

#include <vector>

#include "cvnn/tensor.hpp"

namespace cvnn {

struct CsConfig {
  double lambda = 1e-3;
  std::size_t iterations = 100;
  double step = 1.0;
  std::size_t wavelet_levels = 2;

  void validate() const;
};

/// Separable orthonormal Haar transform of an [H,W] image, applied to re and
/// im independently. Coefficients use the usual in-place Mallat layout.
ComplexTensor haar2(const ComplexTensor& x, std::size_t levels, bool inverse = false);

/// w * max(1 - tau/|w|, 0) per entry.
ComplexTensor soft_threshold(const ComplexTensor& w, double tau);

struct CsResult {
  ComplexTensor image;
  /// 0.5 ||Ax - k||^2 + lambda ||haar2(x)||_1 after each iteration.
  std::vector<double> objective;
};

double cs_objective(const ComplexTensor& x, const ComplexTensor& kspace_u, const ComplexTensor& maps,
                    const ComplexTensor& mask, const CsConfig& config);

/// ISTA with Haar soft-thresholding, started from the zero-filled image.
/// Throws NumericalError after 10 consecutive objective increases.
CsResult ista_wavelet_recon(const ComplexTensor& kspace_u, const ComplexTensor& maps,
                            const ComplexTensor& mask, const CsConfig& config);

/// Lambda values tried by the validation grid search.
const std::vector<double>& cs_lambda_grid();

}  // namespace cvnn
