#include "cvnn/cs.hpp"

#include <cmath>

#include "cvnn/error.hpp"
#include "cvnn/mri.hpp"
#include "cvnn/ops.hpp"

namespace cvnn {

void CsConfig::validate() const {
  if (!(lambda >= 0.0)) throw UsageError("cs: lambda must be >= 0");
  if (!(step > 0.0 && step < 2.0)) throw UsageError("cs: step must lie in (0, 2)");
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// One analysis or synthesis level on the top-left h x w block of a plane
// with row stride `stride`.
void haar_rows(std::span<double> p, std::size_t stride, std::size_t h, std::size_t w, bool inverse,
               std::vector<double>& tmp) {
  const std::size_t half = w / 2;
  for (std::size_t y = 0; y < h; ++y) {
    double* row = p.data() + y * stride;
    tmp.assign(row, row + w);
    for (std::size_t i = 0; i < half; ++i) {
      if (!inverse) {
        row[i] = (tmp[2 * i] + tmp[2 * i + 1]) * kInvSqrt2;
        row[half + i] = (tmp[2 * i] - tmp[2 * i + 1]) * kInvSqrt2;
      } else {
        row[2 * i] = (tmp[i] + tmp[half + i]) * kInvSqrt2;
        row[2 * i + 1] = (tmp[i] - tmp[half + i]) * kInvSqrt2;
      }
    }
  }
}

void haar_cols(std::span<double> p, std::size_t stride, std::size_t h, std::size_t w, bool inverse,
               std::vector<double>& tmp) {
  const std::size_t half = h / 2;
  for (std::size_t x = 0; x < w; ++x) {
    tmp.resize(h);
    for (std::size_t y = 0; y < h; ++y) tmp[y] = p[y * stride + x];
    for (std::size_t i = 0; i < half; ++i) {
      if (!inverse) {
        p[i * stride + x] = (tmp[2 * i] + tmp[2 * i + 1]) * kInvSqrt2;
        p[(half + i) * stride + x] = (tmp[2 * i] - tmp[2 * i + 1]) * kInvSqrt2;
      } else {
        p[2 * i * stride + x] = (tmp[i] + tmp[half + i]) * kInvSqrt2;
        p[(2 * i + 1) * stride + x] = (tmp[i] - tmp[half + i]) * kInvSqrt2;
      }
    }
  }
}

void haar_plane(std::span<double> p, std::size_t h, std::size_t w, std::size_t levels, bool inverse) {
  std::vector<double> tmp;
  if (!inverse) {
    for (std::size_t l = 0; l < levels; ++l) {
      haar_rows(p, w, h >> l, w >> l, false, tmp);
      haar_cols(p, w, h >> l, w >> l, false, tmp);
    }
  } else {
    for (std::size_t l = levels; l-- > 0;) {
      haar_cols(p, w, h >> l, w >> l, true, tmp);
      haar_rows(p, w, h >> l, w >> l, true, tmp);
    }
  }
}

double l1_norm(const ComplexTensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.numel(); ++i) acc += std::hypot(w.re()[i], w.im()[i]);
  return acc;
}

}  // namespace

ComplexTensor haar2(const ComplexTensor& x, std::size_t levels, bool inverse) {
  require_ndim(x, 2, "haar2");
  const std::size_t h = x.dim(0);
  const std::size_t w = x.dim(1);
  const std::size_t f = std::size_t{1} << levels;
  if (h % f != 0) throw ShapeError("haar2: axis 0 (" + std::to_string(h) + ") not divisible by " + std::to_string(f));
  if (w % f != 0) throw ShapeError("haar2: axis 1 (" + std::to_string(w) + ") not divisible by " + std::to_string(f));
  ComplexTensor out = x;
  haar_plane(out.re(), h, w, levels, inverse);
  haar_plane(out.im(), h, w, levels, inverse);
  return out;
}

ComplexTensor soft_threshold(const ComplexTensor& w, double tau) {
  if (!(tau >= 0.0)) throw UsageError("soft_threshold: tau must be >= 0");
  ComplexTensor out(w.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) {
    const double mag = std::hypot(w.re()[i], w.im()[i]);
    if (mag <= tau) continue;
    const double s = 1.0 - tau / mag;
    out.re()[i] = s * w.re()[i];
    out.im()[i] = s * w.im()[i];
  }
  return out;
}

double cs_objective(const ComplexTensor& x, const ComplexTensor& kspace_u, const ComplexTensor& maps,
                    const ComplexTensor& mask, const CsConfig& config) {
  const auto r = scale_add({-1.0, 0.0}, kspace_u, sense_forward(x, maps, mask));
  const double fit = norm2(r);
  return 0.5 * fit * fit + config.lambda * l1_norm(haar2(x, config.wavelet_levels));
}

CsResult ista_wavelet_recon(const ComplexTensor& kspace_u, const ComplexTensor& maps,
                            const ComplexTensor& mask, const CsConfig& config) {
  config.validate();
  CsResult result;
  ComplexTensor x = sense_adjoint(kspace_u, maps, mask);
  std::size_t increases = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto residual = scale_add({-1.0, 0.0}, kspace_u, sense_forward(x, maps, mask));
    const auto z = scale_add({-config.step, 0.0}, sense_adjoint(residual, maps, mask), x);
    x = haar2(soft_threshold(haar2(z, config.wavelet_levels), config.step * config.lambda),
              config.wavelet_levels, true);
    const double obj = cs_objective(x, kspace_u, maps, mask, config);
    if (!std::isfinite(obj)) throw NumericalError("ista: non-finite objective at iteration " + std::to_string(it));
    if (!result.objective.empty() && obj > result.objective.back()) {
      if (++increases >= 10) {
        throw NumericalError("ista: objective increased for 10 consecutive iterations (iteration " +
                             std::to_string(it) + ")");
      }
    } else {
      increases = 0;
    }
    result.objective.push_back(obj);
  }
  result.image = std::move(x);
  return result;
}

const std::vector<double>& cs_lambda_grid() {
  static const std::vector<double> grid = {3e-4, 1e-3, 3e-3, 1e-2, 3e-2};
  return grid;
}

}  // namespace cvnn
