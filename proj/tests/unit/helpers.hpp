#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cvnn/ops.hpp"
#include "cvnn/random.hpp"
#include "cvnn/tensor.hpp"

namespace testutil {

inline cvnn::ComplexTensor random_tensor(cvnn::Shape shape, std::uint64_t seed, bool complex = true) {
  cvnn::Rng rng(seed);
  cvnn::ComplexTensor t(std::move(shape));
  for (auto& v : t.re()) v = rng.uniform(-1.0, 1.0);
  if (complex) {
    for (auto& v : t.im()) v = rng.uniform(-1.0, 1.0);
  }
  return t;
}

inline double max_abs_diff(const cvnn::ComplexTensor& a, const cvnn::ComplexTensor& b) {
  cvnn::require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

/// Sliding-window complex multiply-accumulate with zero padding.
inline cvnn::ComplexTensor conv_complex_oracle(const cvnn::ComplexTensor& x, const cvnn::ConvKernel& kernel) {
  const auto& w = kernel.weights;
  const std::size_t ci = x.dim(0), H = x.dim(1), W = x.dim(2), co = w.dim(0), k = w.dim(2);
  const long p = static_cast<long>(k / 2);
  cvnn::ComplexTensor out({co, H, W});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        cvnn::Complex s = kernel.bias.at(o);
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long rr = static_cast<long>(r + u) - p, cc = static_cast<long>(c + v) - p;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
              s += w.at(((o * ci + i) * k + u) * k + v) * x.at((i * H + rr) * W + cc);
            }
        out.set((o * H + r) * W + c, s);
      }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cvnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
