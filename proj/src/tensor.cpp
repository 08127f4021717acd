#include "cvnn/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace cvnn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) throw ShapeError("tensor axis " + std::to_string(i) + " has size 0");
  }
}

}  // namespace

ComplexTensor::ComplexTensor() : ComplexTensor(Shape{1}) {}

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  const auto n = shape_numel(shape_);
  re_.assign(n, 0.0);
  im_.assign(n, 0.0);
}

ComplexTensor::ComplexTensor(Shape shape, std::vector<double> re, std::vector<double> im)
    : shape_(std::move(shape)), re_(std::move(re)), im_(std::move(im)) {
  validate_shape(shape_);
  const auto n = shape_numel(shape_);
  if (re_.size() != n || im_.size() != n) {
    throw ShapeError("planes of length " + std::to_string(re_.size()) + "/" +
                     std::to_string(im_.size()) + " do not match shape " + shape_string(shape_));
  }
}

ComplexTensor ComplexTensor::real(Shape shape, std::vector<double> re) {
  std::vector<double> im(re.size(), 0.0);
  return ComplexTensor(std::move(shape), std::move(re), std::move(im));
}

ComplexTensor ComplexTensor::filled(Shape shape, Complex value) {
  ComplexTensor t(std::move(shape));
  std::fill(t.re_.begin(), t.re_.end(), value.real());
  std::fill(t.im_.begin(), t.im_.end(), value.imag());
  return t;
}

ComplexTensor ComplexTensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return ComplexTensor(std::move(shape), re_, im_);
}

bool ComplexTensor::is_real() const noexcept {
  return std::all_of(im_.begin(), im_.end(), [](double v) { return v == 0.0; });
}

void require_same_shape(const ComplexTensor& a, const ComplexTensor& b, const char* what) {
  if (a.ndim() != b.ndim()) {
    throw ShapeError(std::string(what) + ": rank mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  for (std::size_t i = 0; i < a.ndim(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError(std::string(what) + ": axis " + std::to_string(i) + " mismatch (" +
                       std::to_string(a.dim(i)) + " vs " + std::to_string(b.dim(i)) + ")");
    }
  }
}

void require_ndim(const ComplexTensor& t, std::size_t ndim, const char* what) {
  if (t.ndim() != ndim) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(ndim) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace cvnn
