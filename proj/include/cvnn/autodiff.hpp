#pragma once

#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cvnn/ops.hpp"
#include "cvnn/tensor.hpp"

namespace cvnn {

class Tape;

/// Handle to a node recorded on a Tape. Valid for the tape's lifetime.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const ComplexTensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a real scalar loss per named parameter. The real plane holds
/// dL/d(re) and the imaginary plane dL/d(im).
using GradientSet = std::map<std::string, ComplexTensor>;

/// Define-by-run record of a computation over ComplexTensors, differentiated
/// over the real pair (re, im) of every entry.
class Tape {
 public:
  /// Accumulates into the gradient buffers of the inputs. A null entry means
  /// that input does not need a gradient.
  using Backward =
      std::function<void(const ComplexTensor& grad_out, std::span<ComplexTensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A named leaf whose gradient backward() reports.
  Var parameter(std::string name, ComplexTensor value);
  /// A leaf that never receives a gradient.
  Var constant(ComplexTensor value);
  /// Appends a node. The backward rule is dropped when no input needs a gradient.
  Var record(ComplexTensor value, std::vector<Var> inputs, Backward backward);

  const ComplexTensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a real scalar loss node. Parameters not connected to
  /// the loss get zero gradients.
  GradientSet backward(Var loss) const;

 private:
  struct Node {
    ComplexTensor value;
    std::vector<std::size_t> inputs;
    Backward backward;
    std::string name;
    bool is_parameter = false;
    bool requires_grad = false;
  };

  std::size_t check(Var v) const;

  std::deque<Node> nodes_;  // stable addresses: backward rules keep references to values
  std::map<std::string, std::size_t> parameter_ids_;
};

using ScalarFn = std::function<Var(Tape&, Var)>;
using ParamScalarFn = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

/// Worst relative error between backward() and central differences over
/// every real coordinate of x. Denominator: max(|analytic|, |numeric|, 1e-8).
double gradcheck(const ScalarFn& f, const ComplexTensor& x, double step = 1e-5);

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_parameter;
};

/// gradcheck over several named tensors at once. `stride` > 1 checks every
/// stride-th real coordinate of each tensor.
GradcheckReport gradcheck_params(const ParamScalarFn& f,
                                 const std::map<std::string, ComplexTensor>& params,
                                 double step = 1e-5, std::size_t stride = 1);

/// Differentiable primitives. Every input Var must come from the same tape.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// c * a for a fixed real c.
Var scale(Var a, double c);
/// t * a where t is a learnable real scalar of shape [1].
Var scale_by(Var a, Var t);
Var reshape(Var a, Shape shape);

Var conv2d_real(Var input, Var weights, Var bias);
Var conv2d_complex(Var input, Var weights, Var bias);
Var fft2c(Var a, bool inverse = false);

/// Complex [1,H,W] -> real [2,H,W] with re in channel 0 and im in channel 1.
Var to_channels(Var a);
/// Inverse of to_channels.
Var from_channels(Var a);
Var concat_channels(Var a, Var b);
/// 2x2 average pooling over the last two axes of [C,H,W].
Var avgpool2(Var a);
/// 2x nearest-neighbour upsampling over the last two axes of [C,H,W].
Var upsample2(Var a);

/// Sum of real parts, as a real scalar.
Var sum_re(Var a);
/// Sum of re^2 + im^2, as a real scalar.
Var sum_sq(Var a);

}  // namespace ad

}  // namespace cvnn
