#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "cvnn/error.hpp"

namespace cvnn {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// N-dimensional complex array with planar storage: a full real plane and a
/// full imaginary plane, both row-major. A real-only tensor keeps im == 0.
class ComplexTensor {
 public:
  ComplexTensor();
  explicit ComplexTensor(Shape shape);
  ComplexTensor(Shape shape, std::vector<double> re, std::vector<double> im);

  static ComplexTensor zeros(Shape shape) { return ComplexTensor(std::move(shape)); }
  static ComplexTensor real(Shape shape, std::vector<double> re);
  static ComplexTensor filled(Shape shape, Complex value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return re_.size(); }

  std::span<const double> re() const noexcept { return re_; }
  std::span<const double> im() const noexcept { return im_; }
  std::span<double> re() noexcept { return re_; }
  std::span<double> im() noexcept { return im_; }

  Complex at(std::size_t i) const { return {re_[i], im_[i]}; }
  void set(std::size_t i, Complex v) {
    re_[i] = v.real();
    im_[i] = v.imag();
  }

  /// Same data under a new shape with equal element count.
  ComplexTensor reshaped(Shape shape) const;

  /// True when every imaginary entry is exactly zero.
  bool is_real() const noexcept;

  bool operator==(const ComplexTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> re_;
  std::vector<double> im_;
};

/// Throws ShapeError naming the first disagreeing axis.
void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* what);
void require_ndim(const ComplexTensor& t, std::size_t ndim, const char* what);

}  // namespace cvnn
