#include "cvnn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cvnn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 transform. Complex products are written out by hand:
// std::complex multiplication takes a slow path for inf/nan handling.
class Fft1d {
 public:
  explicit Fft1d(std::size_t n) : n_(n), wr_(n / 2), wi_(n / 2), rev_(n) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      rev_[i] = r;
    }
    for (std::size_t i = 0; i < n / 2; ++i) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      wr_[i] = std::cos(a);
      wi_[i] = std::sin(a);
    }
  }

  // Transforms `n` vectors of `width` contiguous samples each: element j of
  // the transform is the vector starting at re/im + j * width.
  void run(double* re, double* im, std::size_t width, bool inverse) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t r = rev_[i];
      if (i < r) {
        std::swap_ranges(re + i * width, re + (i + 1) * width, re + r * width);
        std::swap_ranges(im + i * width, im + (i + 1) * width, im + r * width);
      }
    }
    const double sgn = inverse ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const double cr = wr_[j * step];
          const double ci = sgn * wi_[j * step];
          double* ur = re + (start + j) * width;
          double* ui = im + (start + j) * width;
          double* vr = re + (start + j + half) * width;
          double* vi = im + (start + j + half) * width;
          for (std::size_t k = 0; k < width; ++k) {
            const double tr = vr[k] * cr - vi[k] * ci;
            const double ti = vr[k] * ci + vi[k] * cr;
            vr[k] = ur[k] - tr;
            vi[k] = ui[k] - ti;
            ur[k] += tr;
            ui[k] += ti;
          }
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<double> wr_, wi_;
  std::vector<std::size_t> rev_;
};

}  // namespace

namespace kernels {

ConvGeometry conv_geometry(const ComplexTensor& input, const ComplexTensor& weights,
                           const ComplexTensor& bias) {
  require_ndim(input, 3, "conv2d input");
  require_ndim(weights, 4, "conv2d weights");
  require_ndim(bias, 1, "conv2d bias");
  const auto k = weights.dim(2);
  if (weights.dim(3) != k) {
    throw ShapeError("conv2d weights: axis 3 (" + std::to_string(weights.dim(3)) +
                     ") must equal axis 2 (" + std::to_string(k) + ")");
  }
  if (k % 2 == 0) throw ShapeError("conv2d weights: axis 2 kernel size must be odd");
  if (weights.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weights axis 1 (" + std::to_string(weights.dim(1)) +
                     ") does not match input axis 0 (" + std::to_string(input.dim(0)) + ")");
  }
  if (bias.dim(0) != weights.dim(0)) {
    throw ShapeError("conv2d: bias axis 0 (" + std::to_string(bias.dim(0)) +
                     ") does not match weights axis 0 (" + std::to_string(weights.dim(0)) + ")");
  }
  return {input.dim(0), weights.dim(0), input.dim(1), input.dim(2), k};
}

namespace {

void im2col_into(std::span<const double> plane, const ConvGeometry& g, double* cols) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.k);
  const auto pad = k / 2;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const double* src = plane.data() + c * g.height * g.width;
    for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < k; ++kx, ++row) {
        double* dst = cols + row * g.cols();
        const auto dy = ky - pad;
        const auto dx = kx - pad;
        const auto x0 = std::max<std::ptrdiff_t>(0, -dx);
        const auto x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const auto sy = y + dy;
          double* d = dst + y * W;
          if (sy < 0 || sy >= H) {
            std::fill(d, d + W, 0.0);
            continue;
          }
          const double* s = src + sy * W + dx;
          std::fill(d, d + x0, 0.0);
          for (auto x = x0; x < x1; ++x) d[x] = s[x];
          std::fill(d + x1, d + W, 0.0);
        }
      }
    }
  }
}

}  // namespace

void im2col(std::span<const double> plane, const ConvGeometry& g, std::vector<double>& cols) {
  cols.resize(g.rows() * g.cols());
  im2col_into(plane, g, cols.data());
}

void col2im_add(std::span<const double> cols, const ConvGeometry& g, std::span<double> plane) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.k);
  const auto pad = k / 2;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    double* dst = plane.data() + c * g.height * g.width;
    for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < k; ++kx, ++row) {
        const double* src = cols.data() + row * g.cols();
        const auto dy = ky - pad;
        const auto dx = kx - pad;
        const auto x0 = std::max<std::ptrdiff_t>(0, -dx);
        const auto x1 = std::min<std::ptrdiff_t>(W, W - dx);
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const auto sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          double* d = dst + sy * W + dx;
          const double* s = src + y * W;
          for (auto x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
}

void complex_forward(std::span<const double> X, std::span<const double> Y,
                     std::span<const double> stacked_cols, std::span<double> out_re,
                     std::span<double> out_im, const ConvGeometry& g) {
  const auto O = static_cast<Eigen::Index>(g.out_ch);
  const auto R = static_cast<Eigen::Index>(g.rows());
  const auto N = static_cast<Eigen::Index>(g.cols());
  ConstMap xm(X.data(), O, R);
  ConstMap ym(Y.data(), O, R);
  RowMat block(2 * O, 2 * R);
  block << xm, -ym, ym, xm;
  ConstMap cm(stacked_cols.data(), 2 * R, N);
  MutMap(out_re.data(), O, N).noalias() = block.topRows(O) * cm;
  MutMap(out_im.data(), O, N).noalias() = block.bottomRows(O) * cm;
}

void complex_input_grad(std::span<const double> X, std::span<const double> Y,
                        std::span<const double> gr, std::span<const double> gi,
                        std::vector<double>& dcols, const ConvGeometry& g) {
  const auto O = static_cast<Eigen::Index>(g.out_ch);
  const auto R = static_cast<Eigen::Index>(g.rows());
  const auto N = static_cast<Eigen::Index>(g.cols());
  ConstMap xm(X.data(), O, R);
  ConstMap ym(Y.data(), O, R);
  RowMat block_t(2 * R, 2 * O);
  block_t << xm.transpose(), ym.transpose(), -ym.transpose(), xm.transpose();
  RowMat grads(2 * O, N);
  grads.topRows(O) = ConstMap(gr.data(), O, N);
  grads.bottomRows(O) = ConstMap(gi.data(), O, N);
  dcols.resize(static_cast<std::size_t>(2 * R * N));
  MutMap(dcols.data(), 2 * R, N).noalias() = block_t * grads;
}

void complex_weight_grad(std::span<const double> gr, std::span<const double> gi,
                         std::span<const double> stacked_cols, std::span<double> dX,
                         std::span<double> dY, const ConvGeometry& g) {
  const auto O = static_cast<Eigen::Index>(g.out_ch);
  const auto R = static_cast<Eigen::Index>(g.rows());
  const auto N = static_cast<Eigen::Index>(g.cols());
  RowMat grads(2 * O, N);
  grads.topRows(O) = ConstMap(gr.data(), O, N);
  grads.bottomRows(O) = ConstMap(gi.data(), O, N);
  const RowMat p = grads * ConstMap(stacked_cols.data(), 2 * R, N).transpose();
  MutMap(dX.data(), O, R) += p.topLeftCorner(O, R) + p.bottomRightCorner(O, R);
  MutMap(dY.data(), O, R) += p.bottomLeftCorner(O, R) - p.topRightCorner(O, R);
}

void stack_cols(const ComplexTensor& input, const ConvGeometry& g, std::vector<double>& cols) {
  const std::size_t n = g.rows() * g.cols();
  cols.resize(2 * n);
  im2col_into(input.re(), g, cols.data());
  im2col_into(input.im(), g, cols.data() + n);
}

ConvScratch& conv_scratch() {
  thread_local ConvScratch scratch;
  return scratch;
}

void gemm_forward(std::span<const double> w, std::span<const double> cols, std::span<double> out,
                  const ConvGeometry& g, double sign, bool accumulate) {
  const auto O = static_cast<Eigen::Index>(g.out_ch);
  const auto R = static_cast<Eigen::Index>(g.rows());
  const auto N = static_cast<Eigen::Index>(g.cols());
  ConstMap wm(w.data(), O, R);
  ConstMap cm(cols.data(), R, N);
  MutMap om(out.data(), O, N);
  if (!accumulate) om.setZero();
  if (sign >= 0) {
    om.noalias() += wm * cm;
  } else {
    om.noalias() -= wm * cm;
  }
}

void gemm_weight_grad(std::span<const double> grad, std::span<const double> cols,
                      std::span<double> dw, const ConvGeometry& g, double sign) {
  const auto O = static_cast<Eigen::Index>(g.out_ch);
  const auto R = static_cast<Eigen::Index>(g.rows());
  const auto N = static_cast<Eigen::Index>(g.cols());
  ConstMap gm(grad.data(), O, N);
  ConstMap cm(cols.data(), R, N);
  MutMap dm(dw.data(), O, R);
  if (sign >= 0) {
    dm.noalias() += gm * cm.transpose();
  } else {
    dm.noalias() -= gm * cm.transpose();
  }
}

void gemm_input_grad(std::span<const double> w, std::span<const double> grad,
                     std::span<double> dcols, const ConvGeometry& g, double sign) {
  const auto O = static_cast<Eigen::Index>(g.out_ch);
  const auto R = static_cast<Eigen::Index>(g.rows());
  const auto N = static_cast<Eigen::Index>(g.cols());
  ConstMap wm(w.data(), O, R);
  ConstMap gm(grad.data(), O, N);
  MutMap dm(dcols.data(), R, N);
  if (sign >= 0) {
    dm.noalias() += wm.transpose() * gm;
  } else {
    dm.noalias() -= wm.transpose() * gm;
  }
}

}  // namespace kernels

ComplexTensor conv2d_real(const ComplexTensor& input, const ComplexTensor& weights,
                          const ComplexTensor& bias) {
  const auto g = kernels::conv_geometry(input, weights, bias);
  auto& cols = kernels::conv_scratch().a;
  kernels::im2col(input.re(), g, cols);
  ComplexTensor out({g.out_ch, g.height, g.width});
  kernels::gemm_forward(weights.re(), cols, out.re(), g, 1.0, false);
  auto re = out.re();
  for (std::size_t o = 0; o < g.out_ch; ++o) {
    const double b = bias.re()[o];
    for (std::size_t i = 0; i < g.cols(); ++i) re[o * g.cols() + i] += b;
  }
  return out;
}

ComplexTensor conv2d_complex(const ComplexTensor& input, const ConvKernel& kernel) {
  const auto g = kernels::conv_geometry(input, kernel.weights, kernel.bias);
  auto& cols = kernels::conv_scratch().a;
  kernels::stack_cols(input, g, cols);
  ComplexTensor out({g.out_ch, g.height, g.width});
  kernels::complex_forward(kernel.weights.re(), kernel.weights.im(), cols, out.re(), out.im(), g);
  auto re = out.re();
  auto im = out.im();
  for (std::size_t o = 0; o < g.out_ch; ++o) {
    const double br = kernel.bias.re()[o];
    const double bi = kernel.bias.im()[o];
    for (std::size_t i = 0; i < g.cols(); ++i) {
      re[o * g.cols() + i] += br;
      im[o * g.cols() + i] += bi;
    }
  }
  return out;
}

ComplexTensor fft2c(const ComplexTensor& x, bool inverse) {
  if (x.ndim() < 2) throw ShapeError("fft2c: input needs at least two axes");
  const auto H = x.dim(x.ndim() - 2);
  const auto W = x.dim(x.ndim() - 1);
  if (!is_pow2(H)) throw ShapeError("fft2c: axis " + std::to_string(x.ndim() - 2) + " size " +
                                    std::to_string(H) + " is not a power of two");
  if (!is_pow2(W)) throw ShapeError("fft2c: axis " + std::to_string(x.ndim() - 1) + " size " +
                                    std::to_string(W) + " is not a power of two");
  const std::size_t planes = x.numel() / (H * W);
  const Fft1d fft_rows(W);
  const Fft1d fft_cols(H);
  const double scale = 1.0 / std::sqrt(static_cast<double>(H * W));

  ComplexTensor out(x.shape());
  std::vector<double> br(H * W), bi(H * W), tr(W * H), ti(W * H);
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * H * W;
    const double* xr = x.re().data() + base;
    const double* xi = x.im().data() + base;
    // ifftshift by half (sizes are even or 1), transposed so each row
    // transform runs over contiguous vectors
    for (std::size_t y = 0; y < H; ++y) {
      const std::size_t sy = (y + H / 2) % H;
      for (std::size_t xx = 0; xx < W; ++xx) {
        const std::size_t sx = (xx + W / 2) % W;
        tr[xx * H + y] = xr[sy * W + sx];
        ti[xx * H + y] = xi[sy * W + sx];
      }
    }
    fft_rows.run(tr.data(), ti.data(), H, inverse);
    for (std::size_t xx = 0; xx < W; ++xx) {
      for (std::size_t y = 0; y < H; ++y) {
        br[y * W + xx] = tr[xx * H + y];
        bi[y * W + xx] = ti[xx * H + y];
      }
    }
    fft_cols.run(br.data(), bi.data(), W, inverse);
    double* orr = out.re().data() + base;
    double* oi = out.im().data() + base;
    for (std::size_t y = 0; y < H; ++y) {
      const std::size_t sy = (y + H / 2) % H;
      for (std::size_t xx = 0; xx < W; ++xx) {
        const std::size_t sx = (xx + W / 2) % W;
        orr[sy * W + sx] = br[y * W + xx] * scale;
        oi[sy * W + sx] = bi[y * W + xx] * scale;
      }
    }
  }
  return out;
}

ComplexTensor mul(const ComplexTensor& x, const ComplexTensor& y) {
  require_same_shape(x, y, "mul");
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.set(i, x.at(i) * y.at(i));
  return out;
}

ComplexTensor conj(const ComplexTensor& x) {
  ComplexTensor out = x;
  for (auto& v : out.im()) v = -v;
  return out;
}

ComplexTensor magnitude(const ComplexTensor& x) {
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.re()[i] = std::hypot(x.re()[i], x.im()[i]);
  return out;
}

ComplexTensor phase(const ComplexTensor& x) {
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double p = std::atan2(x.im()[i], x.re()[i]);
    if (p == -std::numbers::pi) p = std::numbers::pi;
    out.re()[i] = p;
  }
  return out;
}

ComplexTensor scale_add(Complex alpha, const ComplexTensor& x, const ComplexTensor& y) {
  require_same_shape(x, y, "scale_add");
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.set(i, alpha * x.at(i) + y.at(i));
  return out;
}

Complex inner(const ComplexTensor& x, const ComplexTensor& y) {
  require_same_shape(x, y, "inner");
  Complex acc{0.0, 0.0};
  for (std::size_t i = 0; i < x.numel(); ++i) acc += std::conj(x.at(i)) * y.at(i);
  return acc;
}

double norm2(const ComplexTensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.re()[i] * x.re()[i] + x.im()[i] * x.im()[i];
  return std::sqrt(acc);
}

}  // namespace cvnn
