#pragma once

#include <vector>

#include "cvnn/tensor.hpp"

namespace cvnn {

/// Complex filter bank W = X + iY shaped [out_ch, in_ch, k, k]. The real plane
/// of `weights` holds X and the imaginary plane holds Y. `bias` is a complex
/// vector of length out_ch.
struct ConvKernel {
  ComplexTensor weights;
  ComplexTensor bias;

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t size() const { return weights.dim(2); }
};

/// Cross-correlation with "same" zero padding over the real planes of
/// `input` [in_ch,H,W], `weights` [out_ch,in_ch,k,k] and `bias` [out_ch].
/// Imaginary planes are ignored; the result is real-only.
ComplexTensor conv2d_real(const ComplexTensor& input, const ComplexTensor& weights,
                          const ComplexTensor& bias);

/// Re(out) = X*a - Y*b, Im(out) = Y*a + X*b, plus the complex bias.
ComplexTensor conv2d_complex(const ComplexTensor& input, const ConvKernel& kernel);

/// Centered, orthonormal 2-D DFT over the last two axes. Both axes must be
/// powers of two.
ComplexTensor fft2c(const ComplexTensor& x, bool inverse = false);
inline ComplexTensor ifft2c(const ComplexTensor& x) { return fft2c(x, true); }

// Elementwise operations. No broadcasting.
ComplexTensor mul(const ComplexTensor& x, const ComplexTensor& y);
ComplexTensor conj(const ComplexTensor& x);
ComplexTensor magnitude(const ComplexTensor& x);
/// atan2(b, a) in (-pi, pi]; real-only output.
ComplexTensor phase(const ComplexTensor& x);
/// alpha * x + y
ComplexTensor scale_add(Complex alpha, const ComplexTensor& x, const ComplexTensor& y);

/// Sum over entries of conj(x) * y.
Complex inner(const ComplexTensor& x, const ComplexTensor& y);
double norm2(const ComplexTensor& x);

namespace kernels {

/// Square odd-sized sliding-window layout shared by the forward and backward
/// convolution passes.
struct ConvGeometry {
  std::size_t in_ch, out_ch, height, width, k;
  std::size_t rows() const { return in_ch * k * k; }
  std::size_t cols() const { return height * width; }
};

ConvGeometry conv_geometry(const ComplexTensor& input, const ComplexTensor& weights,
                           const ComplexTensor& bias);

/// Unfolds one real plane set [in_ch,H,W] into a [in_ch*k*k, H*W] matrix.
/// `cols` is resized and fully overwritten, so buffers can be reused.
void im2col(std::span<const double> plane, const ConvGeometry& g, std::vector<double>& cols);
/// Adjoint of im2col: folds a column matrix into [in_ch,H,W], adding onto `plane`.
void col2im_add(std::span<const double> cols, const ConvGeometry& g, std::span<double> plane);

/// Per-thread scratch matrices for the column layout.
struct ConvScratch {
  std::vector<double> a, b, da, db;
};
ConvScratch& conv_scratch();

/// out[out_ch, HW] (+)= sign * W[out_ch, rows] * cols[rows, HW]
void gemm_forward(std::span<const double> w, std::span<const double> cols, std::span<double> out,
                  const ConvGeometry& g, double sign, bool accumulate);
/// dW[out_ch, rows] += sign * grad[out_ch, HW] * cols^T
void gemm_weight_grad(std::span<const double> grad, std::span<const double> cols,
                      std::span<double> dw, const ConvGeometry& g, double sign);
/// dcols[rows, HW] += sign * W^T * grad
void gemm_input_grad(std::span<const double> w, std::span<const double> grad,
                     std::span<double> dcols, const ConvGeometry& g, double sign);

// Complex variants on stacked columns C = [cols(re); cols(im)] of shape
// [2*rows, HW]. Each runs as one real GEMM on the block form [X -Y; Y X].

/// Fills cols with [im2col(re); im2col(im)].
void stack_cols(const ComplexTensor& input, const ConvGeometry& g, std::vector<double>& cols);
/// out = [X -Y; Y X] C, split into the real and imaginary planes.
void complex_forward(std::span<const double> X, std::span<const double> Y,
                     std::span<const double> stacked_cols, std::span<double> out_re,
                     std::span<double> out_im, const ConvGeometry& g);
/// dC = [X -Y; Y X]^T [gr; gi], overwriting dcols ([2*rows, HW]).
void complex_input_grad(std::span<const double> X, std::span<const double> Y,
                        std::span<const double> gr, std::span<const double> gi,
                        std::vector<double>& dcols, const ConvGeometry& g);
/// dX += gr ca^T + gi cb^T, dY += gi ca^T - gr cb^T.
void complex_weight_grad(std::span<const double> gr, std::span<const double> gi,
                         std::span<const double> stacked_cols, std::span<double> dX,
                         std::span<double> dY, const ConvGeometry& g);

}  // namespace kernels

}  // namespace cvnn
