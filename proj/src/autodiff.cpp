#include "cvnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

namespace cvnn {

const ComplexTensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var is not attached to a tape");
  return tape_->value(*this);
}

std::size_t Tape::check(Var v) const {
  if (v.tape() != this) throw std::logic_error("Var belongs to a different tape");
  if (v.id() >= nodes_.size()) throw std::logic_error("Var id out of range");
  return v.id();
}

Var Tape::parameter(std::string name, ComplexTensor value) {
  if (parameter_ids_.contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  const auto id = nodes_.size();
  parameter_ids_.emplace(name, id);
  nodes_.push_back({std::move(value), {}, {}, std::move(name), true, true});
  return Var(this, id);
}

Var Tape::constant(ComplexTensor value) {
  const auto id = nodes_.size();
  nodes_.push_back({std::move(value), {}, {}, {}, false, false});
  return Var(this, id);
}

Var Tape::record(ComplexTensor value, std::vector<Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (auto v : inputs) {
    const auto id = check(v);
    node.inputs.push_back(id);
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  const auto id = nodes_.size();
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

const ComplexTensor& Tape::value(Var v) const { return nodes_[check(v)].value; }

bool Tape::requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

GradientSet Tape::backward(Var loss) const {
  const auto root = check(loss);
  const auto& lv = nodes_[root].value;
  if (lv.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(lv.shape()));
  }
  if (lv.im()[0] != 0.0) throw ShapeError("backward: loss must be real-valued");

  std::vector<std::optional<ComplexTensor>> grads(root + 1);
  grads[root] = ComplexTensor::filled(lv.shape(), {1.0, 0.0});
  std::vector<ComplexTensor*> in;
  for (std::size_t i = root + 1; i-- > 0;) {
    const auto& node = nodes_[i];
    if (!grads[i] || !node.backward) continue;
    in.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const auto src = node.inputs[j];
      if (!nodes_[src].requires_grad) continue;
      if (!grads[src]) grads[src] = ComplexTensor::zeros(nodes_[src].value.shape());
      in[j] = &*grads[src];
    }
    node.backward(*grads[i], in);
    grads[i].reset();
  }

  GradientSet out;
  for (const auto& [name, id] : parameter_ids_) {
    if (id <= root && grads[id]) {
      out.emplace(name, std::move(*grads[id]));
    } else {
      out.emplace(name, ComplexTensor::zeros(nodes_[id].value.shape()));
    }
  }
  return out;
}

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double evaluate(const ParamScalarFn& f, const std::map<std::string, ComplexTensor>& params) {
  Tape tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
  const auto& v = f(tape, vars).value();
  if (v.numel() != 1) throw ShapeError("gradcheck: function must return a scalar");
  return v.re()[0];
}

}  // namespace

GradcheckReport gradcheck_params(const ParamScalarFn& f,
                                 const std::map<std::string, ComplexTensor>& params, double step,
                                 std::size_t stride) {
  GradcheckReport report;
  GradientSet analytic;
  {
    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
    analytic = tape.backward(f(tape, vars));
  }
  auto work = params;
  stride = std::max<std::size_t>(stride, 1);
  for (const auto& [name, value] : params) {
    double worst = 0.0;
    auto& t = work.at(name);
    const auto& g = analytic.at(name);
    for (std::size_t coord = 0; coord < 2 * value.numel(); coord += stride) {
      const bool imag = coord >= value.numel();
      const std::size_t i = imag ? coord - value.numel() : coord;
      auto plane = imag ? t.im() : t.re();
      const double orig = plane[i];
      plane[i] = orig + step;
      const double fp = evaluate(f, work);
      plane[i] = orig - step;
      const double fm = evaluate(f, work);
      plane[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double an = imag ? g.im()[i] : g.re()[i];
      if (!std::isfinite(numeric) || !std::isfinite(an)) {
        throw NumericalError("gradcheck: non-finite value at " + name + (imag ? ".im[" : ".re[") +
                             std::to_string(i) + "]");
      }
      worst = std::max(worst, relative_error(an, numeric));
    }
    report.per_parameter[name] = worst;
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  return report;
}

double gradcheck(const ScalarFn& f, const ComplexTensor& x, double step) {
  const ParamScalarFn wrapped = [&f](Tape& tape, const std::map<std::string, Var>& vars) {
    return f(tape, vars.at("x"));
  };
  return gradcheck_params(wrapped, {{"x", x}}, step).max_relative_error;
}

namespace ad {

namespace {

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw std::logic_error("Var is not attached to a tape");
  return *a.tape();
}

void accumulate(ComplexTensor* dst, const ComplexTensor& src, double c = 1.0) {
  if (dst == nullptr) return;
  auto dr = dst->re();
  auto di = dst->im();
  const auto sr = src.re();
  const auto si = src.im();
  for (std::size_t i = 0; i < src.numel(); ++i) {
    dr[i] += c * sr[i];
    di[i] += c * si[i];
  }
}

void require_chw(const ComplexTensor& t, const char* what) { require_ndim(t, 3, what); }

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  auto out = scale_add({1.0, 0.0}, a.value(), b.value());
  return tape_of(a).record(std::move(out), {a, b},
                           [](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             accumulate(in[0], g);
                             accumulate(in[1], g);
                           });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  auto out = scale_add({-1.0, 0.0}, b.value(), a.value());
  return tape_of(a).record(std::move(out), {a, b},
                           [](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             accumulate(in[0], g);
                             accumulate(in[1], g, -1.0);
                           });
}

Var scale(Var a, double c) {
  ComplexTensor out = a.value();
  for (auto& v : out.re()) v *= c;
  for (auto& v : out.im()) v *= c;
  return tape_of(a).record(std::move(out), {a},
                           [c](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             accumulate(in[0], g, c);
                           });
}

Var scale_by(Var a, Var t) {
  if (t.value().numel() != 1) throw ShapeError("scale_by: step must be a scalar");
  const double s = t.value().re()[0];
  ComplexTensor out = a.value();
  for (auto& v : out.re()) v *= s;
  for (auto& v : out.im()) v *= s;
  const ComplexTensor& x = a.value();
  return tape_of(a).record(std::move(out), {a, t},
                           [s, &x](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             accumulate(in[0], g, s);
                             if (in[1] != nullptr) {
                               double acc = 0.0;
                               for (std::size_t i = 0; i < g.numel(); ++i) {
                                 acc += g.re()[i] * x.re()[i] + g.im()[i] * x.im()[i];
                               }
                               in[1]->re()[0] += acc;
                             }
                           });
}

Var reshape(Var a, Shape shape) {
  auto out = a.value().reshaped(std::move(shape));
  return tape_of(a).record(std::move(out), {a},
                           [](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             accumulate(in[0], g);
                           });
}

Var conv2d_real(Var input, Var weights, Var bias) {
  const auto& x = input.value();
  const auto& w = weights.value();
  const auto& b = bias.value();
  const auto geom = kernels::conv_geometry(x, w, b);
  auto out = cvnn::conv2d_real(x, w, b);
  // Column matrices are rebuilt in backward rather than kept per node.
  return tape_of(input).record(
      std::move(out), {input, weights, bias},
      [geom, &x, &w](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        auto& s = kernels::conv_scratch();
        if (in[0] != nullptr) {
          s.da.assign(geom.rows() * geom.cols(), 0.0);
          kernels::gemm_input_grad(w.re(), g.re(), s.da, geom, 1.0);
          kernels::col2im_add(s.da, geom, in[0]->re());
        }
        if (in[1] != nullptr) {
          kernels::im2col(x.re(), geom, s.a);
          kernels::gemm_weight_grad(g.re(), s.a, in[1]->re(), geom, 1.0);
        }
        if (in[2] != nullptr) {
          for (std::size_t o = 0; o < geom.out_ch; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < geom.cols(); ++i) acc += g.re()[o * geom.cols() + i];
            in[2]->re()[o] += acc;
          }
        }
      });
}

Var conv2d_complex(Var input, Var weights, Var bias) {
  const auto& x = input.value();
  const auto& w = weights.value();
  const auto& b = bias.value();
  const auto geom = kernels::conv_geometry(x, w, b);
  auto out = cvnn::conv2d_complex(x, ConvKernel{w, b});
  return tape_of(input).record(
      std::move(out), {input, weights, bias},
      [geom, &x, &w](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        auto& s = kernels::conv_scratch();
        const auto n = geom.rows() * geom.cols();
        if (in[0] != nullptr) {
          kernels::complex_input_grad(w.re(), w.im(), g.re(), g.im(), s.da, geom);
          const std::span<const double> dc(s.da);
          kernels::col2im_add(dc.first(n), geom, in[0]->re());
          kernels::col2im_add(dc.subspan(n), geom, in[0]->im());
        }
        if (in[1] != nullptr) {
          kernels::stack_cols(x, geom, s.a);
          kernels::complex_weight_grad(g.re(), g.im(), s.a, in[1]->re(), in[1]->im(), geom);
        }
        const auto gr = g.re();
        const auto gi = g.im();
        if (in[2] != nullptr) {
          for (std::size_t o = 0; o < geom.out_ch; ++o) {
            double ar = 0.0, ai = 0.0;
            for (std::size_t i = 0; i < geom.cols(); ++i) {
              ar += gr[o * geom.cols() + i];
              ai += gi[o * geom.cols() + i];
            }
            in[2]->re()[o] += ar;
            in[2]->im()[o] += ai;
          }
        }
      });
}

Var fft2c(Var a, bool inverse) {
  auto out = cvnn::fft2c(a.value(), inverse);
  // A unitary linear map's real-pair VJP is its adjoint, i.e. the opposite transform.
  return tape_of(a).record(std::move(out), {a},
                           [inverse](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] != nullptr) accumulate(in[0], cvnn::fft2c(g, !inverse));
                           });
}

Var to_channels(Var a) {
  const auto& x = a.value();
  require_chw(x, "to_channels");
  if (x.dim(0) != 1) throw ShapeError("to_channels: axis 0 must be 1");
  const auto n = x.dim(1) * x.dim(2);
  ComplexTensor out({2, x.dim(1), x.dim(2)});
  std::copy(x.re().begin(), x.re().end(), out.re().begin());
  std::copy(x.im().begin(), x.im().end(), out.re().begin() + static_cast<std::ptrdiff_t>(n));
  return tape_of(a).record(std::move(out), {a},
                           [n](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             for (std::size_t i = 0; i < n; ++i) {
                               in[0]->re()[i] += g.re()[i];
                               in[0]->im()[i] += g.re()[n + i];
                             }
                           });
}

Var from_channels(Var a) {
  const auto& x = a.value();
  require_chw(x, "from_channels");
  if (x.dim(0) != 2) throw ShapeError("from_channels: axis 0 must be 2");
  const auto n = x.dim(1) * x.dim(2);
  ComplexTensor out({1, x.dim(1), x.dim(2)});
  std::copy(x.re().begin(), x.re().begin() + static_cast<std::ptrdiff_t>(n), out.re().begin());
  std::copy(x.re().begin() + static_cast<std::ptrdiff_t>(n), x.re().end(), out.im().begin());
  return tape_of(a).record(std::move(out), {a},
                           [n](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             for (std::size_t i = 0; i < n; ++i) {
                               in[0]->re()[i] += g.re()[i];
                               in[0]->re()[n + i] += g.im()[i];
                             }
                           });
}

Var concat_channels(Var a, Var b) {
  const auto& x = a.value();
  const auto& y = b.value();
  require_chw(x, "concat_channels");
  require_chw(y, "concat_channels");
  if (x.dim(1) != y.dim(1)) throw ShapeError("concat_channels: axis 1 mismatch");
  if (x.dim(2) != y.dim(2)) throw ShapeError("concat_channels: axis 2 mismatch");
  const auto nx = x.numel();
  ComplexTensor out({x.dim(0) + y.dim(0), x.dim(1), x.dim(2)});
  std::copy(x.re().begin(), x.re().end(), out.re().begin());
  std::copy(x.im().begin(), x.im().end(), out.im().begin());
  std::copy(y.re().begin(), y.re().end(), out.re().begin() + static_cast<std::ptrdiff_t>(nx));
  std::copy(y.im().begin(), y.im().end(), out.im().begin() + static_cast<std::ptrdiff_t>(nx));
  return tape_of(a).record(std::move(out), {a, b},
                           [nx](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] != nullptr) {
                               for (std::size_t i = 0; i < nx; ++i) {
                                 in[0]->re()[i] += g.re()[i];
                                 in[0]->im()[i] += g.im()[i];
                               }
                             }
                             if (in[1] != nullptr) {
                               for (std::size_t i = 0; i < in[1]->numel(); ++i) {
                                 in[1]->re()[i] += g.re()[nx + i];
                                 in[1]->im()[i] += g.im()[nx + i];
                               }
                             }
                           });
}

Var avgpool2(Var a) {
  const auto& x = a.value();
  require_chw(x, "avgpool2");
  const auto C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0) throw ShapeError("avgpool2: spatial axes must be even");
  const auto h = H / 2, w = W / 2;
  ComplexTensor out({C, h, w});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const auto o = (c * h + y) * w + xx;
        const auto i0 = (c * H + 2 * y) * W + 2 * xx;
        const auto i1 = i0 + W;
        out.re()[o] = 0.25 * (x.re()[i0] + x.re()[i0 + 1] + x.re()[i1] + x.re()[i1 + 1]);
        out.im()[o] = 0.25 * (x.im()[i0] + x.im()[i0 + 1] + x.im()[i1] + x.im()[i1 + 1]);
      }
    }
  }
  return tape_of(a).record(
      std::move(out), {a}, [C, H, W, h, w](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        if (in[0] == nullptr) return;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t xx = 0; xx < W; ++xx) {
              const auto o = (c * h + y / 2) * w + xx / 2;
              const auto i = (c * H + y) * W + xx;
              in[0]->re()[i] += 0.25 * g.re()[o];
              in[0]->im()[i] += 0.25 * g.im()[o];
            }
          }
        }
      });
}

Var upsample2(Var a) {
  const auto& x = a.value();
  require_chw(x, "upsample2");
  const auto C = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto H = 2 * h, W = 2 * w;
  ComplexTensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        const auto i = (c * h + y / 2) * w + xx / 2;
        const auto o = (c * H + y) * W + xx;
        out.re()[o] = x.re()[i];
        out.im()[o] = x.im()[i];
      }
    }
  }
  return tape_of(a).record(
      std::move(out), {a}, [C, H, W, h, w](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        if (in[0] == nullptr) return;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t xx = 0; xx < W; ++xx) {
              const auto i = (c * h + y / 2) * w + xx / 2;
              const auto o = (c * H + y) * W + xx;
              in[0]->re()[i] += g.re()[o];
              in[0]->im()[i] += g.im()[o];
            }
          }
        }
      });
}

Var sum_re(Var a) {
  double acc = 0.0;
  for (double v : a.value().re()) acc += v;
  return tape_of(a).record(ComplexTensor::real({1}, {acc}), {a},
                           [](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             const double s = g.re()[0];
                             for (auto& v : in[0]->re()) v += s;
                           });
}

Var sum_sq(Var a) {
  const auto& x = a.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.re()[i] * x.re()[i] + x.im()[i] * x.im()[i];
  return tape_of(a).record(ComplexTensor::real({1}, {acc}), {a},
                           [&x](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                             if (in[0] == nullptr) return;
                             const double s = 2.0 * g.re()[0];
                             for (std::size_t i = 0; i < x.numel(); ++i) {
                               in[0]->re()[i] += s * x.re()[i];
                               in[0]->im()[i] += s * x.im()[i];
                             }
                           });
}

}  // namespace ad

}  // namespace cvnn
