#include "cvnn/train.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cvnn/random.hpp"

namespace cvnn {

namespace {

bool finite(double v) { return std::isfinite(v); }

double max_magnitude(const ComplexTensor& t) {
  double peak = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) peak = std::max(peak, std::hypot(t.re()[i], t.im()[i]));
  return peak;
}

double diff_norm(const ComplexTensor& p, const ComplexTensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double dr = p.re()[i] - t.re()[i];
    const double di = p.im()[i] - t.im()[i];
    acc += dr * dr + di * di;
  }
  return std::sqrt(acc);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double l1_loss(const ComplexTensor& pred, const ComplexTensor& target) {
  require_same_shape(pred, target, "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    acc += std::abs(pred.re()[i] - target.re()[i]) + std::abs(pred.im()[i] - target.im()[i]);
  }
  return acc / static_cast<double>(pred.numel());
}

double nrmse(const ComplexTensor& pred, const ComplexTensor& target) {
  require_same_shape(pred, target, "nrmse");
  const double denom = norm2(target);
  if (denom == 0.0) throw NumericalError("nrmse: target has zero norm");
  return diff_norm(pred, target) / denom;
}

double psnr(const ComplexTensor& pred, const ComplexTensor& target) {
  require_same_shape(pred, target, "psnr");
  const double peak = max_magnitude(target);
  if (peak == 0.0) throw NumericalError("psnr: target is identically zero");
  const double rmse = diff_norm(pred, target) / std::sqrt(static_cast<double>(pred.numel()));
  if (rmse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / rmse);
}

namespace {

constexpr std::size_t kSsimWindow = 11;

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-position separable Gaussian filter of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w) {
  static const auto g = gaussian_window();
  const std::size_t ow = w - kSsimWindow + 1;
  const std::size_t oh = h - kSsimWindow + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xo = 0; xo < ow; ++xo) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * x[y * w + xo + k];
      rows[y * ow + xo] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t yo = 0; yo < oh; ++yo) {
    for (std::size_t xo = 0; xo < ow; ++xo) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * rows[(yo + k) * ow + xo];
      out[yo * ow + xo] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const ComplexTensor& pred, const ComplexTensor& target) {
  require_same_shape(pred, target, "ssim");
  require_ndim(target, 2, "ssim");
  const std::size_t h = target.dim(0);
  const std::size_t w = target.dim(1);
  if (h < kSsimWindow || w < kSsimWindow) {
    throw ShapeError("ssim: image " + shape_string(target.shape()) + " smaller than the 11x11 window");
  }
  const double range = max_magnitude(target);
  if (range == 0.0) throw NumericalError("ssim: target is identically zero");
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  const std::size_t n = h * w;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::hypot(pred.re()[i], pred.im()[i]);
    y[i] = std::hypot(target.re()[i], target.im()[i]);
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w);
  const auto my = filter_valid(y, h, w);
  const auto sxx = filter_valid(xx, h, w);
  const auto syy = filter_valid(yy, h, w);
  const auto sxy = filter_valid(xy, h, w);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double phase_rmse(const ComplexTensor& pred, const ComplexTensor& target, double threshold) {
  require_same_shape(pred, target, "phase_rmse");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const Complex t = target.at(i);
    if (std::abs(t) <= threshold) continue;
    const double d = std::arg(pred.at(i) * std::conj(t));
    acc += d * d;
    ++count;
  }
  if (count == 0) throw NumericalError("phase_rmse: no pixel above the magnitude threshold");
  return std::sqrt(acc / static_cast<double>(count));
}

namespace ad {

Var l1_loss(Var pred, Var target) {
  const ComplexTensor& p = pred.value();
  const ComplexTensor& t = target.value();
  const double value = cvnn::l1_loss(p, t);
  return pred.tape()->record(
      ComplexTensor::real({1}, {value}), {pred, target},
      [&p, &t](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        const double s = g.re()[0] / static_cast<double>(p.numel());
        for (std::size_t i = 0; i < p.numel(); ++i) {
          const double dr = sign(p.re()[i] - t.re()[i]) * s;
          const double di = sign(p.im()[i] - t.im()[i]) * s;
          if (in[0] != nullptr) {
            in[0]->re()[i] += dr;
            in[0]->im()[i] += di;
          }
          if (in[1] != nullptr) {
            in[1]->re()[i] -= dr;
            in[1]->im()[i] -= di;
          }
        }
      });
}

Var nrmse(Var pred, const ComplexTensor& target) {
  const ComplexTensor& p = pred.value();
  const double value = cvnn::nrmse(p, target);
  const double tnorm = norm2(target);
  return pred.tape()->record(
      ComplexTensor::real({1}, {value}), {pred},
      [&p, target, tnorm](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        if (in[0] == nullptr) return;
        const double dn = diff_norm(p, target);
        if (dn == 0.0) return;
        const double s = g.re()[0] / (dn * tnorm);
        for (std::size_t i = 0; i < p.numel(); ++i) {
          in[0]->re()[i] += s * (p.re()[i] - target.re()[i]);
          in[0]->im()[i] += s * (p.im()[i] - target.im()[i]);
        }
      });
}

Var psnr(Var pred, const ComplexTensor& target) {
  const ComplexTensor& p = pred.value();
  const double value = cvnn::psnr(p, target);
  if (!std::isfinite(value)) throw NumericalError("psnr: not differentiable at pred == target");
  return pred.tape()->record(
      ComplexTensor::real({1}, {value}), {pred},
      [&p, target](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
        if (in[0] == nullptr) return;
        const double dn = diff_norm(p, target);
        // d/dp of -20 log10 ||p - t||
        const double s = -g.re()[0] * 20.0 / (std::log(10.0) * dn * dn);
        for (std::size_t i = 0; i < p.numel(); ++i) {
          in[0]->re()[i] += s * (p.re()[i] - target.re()[i]);
          in[0]->im()[i] += s * (p.im()[i] - target.im()[i]);
        }
      });
}

}  // namespace ad

void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size()) {
    throw UsageError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (const auto& [name, p] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw UsageError("adam_step: no gradient for parameter '" + name + "'");
    require_same_shape(p.value, it->second, name.c_str());
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      if (!finite(it->second.re()[i]) || !finite(it->second.im()[i])) {
        throw NumericalError("adam_step: non-finite gradient for parameter '" + name + "' at entry " +
                             std::to_string(i));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const auto update = [&](std::span<double> w, std::span<const double> g, std::span<double> m,
                          std::span<double> v) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      w[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
    }
  };
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& m = state.m.try_emplace(name, p.value.shape()).first->second;
    auto& v = state.v.try_emplace(name, p.value.shape()).first->second;
    update(p.value.re(), g.re(), m.re(), v.re());
    if (p.complex) update(p.value.im(), g.im(), m.im(), v.im());
  }
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw UsageError("lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw UsageError("beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw UsageError("beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw UsageError("eps must be > 0");
  if (batch < 1) throw UsageError("batch must be >= 1");
  if (checkpoint_every < 1) throw UsageError("checkpoint_every must be >= 1");
  validate_activation(model.conv_mode(), model.kind == ModelKind::Unrolled
                                             ? model.unrolled.activation
                                             : model.unet.activation);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model", "conv", "activation", "iterations", "feature_maps", "lr", "beta1", "beta2",
      "batch", "steps", "seed", "data", "out", "denoiser_layers", "kernel", "levels",
      "convs_per_level", "eps", "checkpoint_every"};
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("config: invalid value '" + value + "' for key '" + key + "'");
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::string conv = "complex";
  std::string activation;
  std::size_t width = 16;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      std::string valid;
      for (const auto& k : keys) valid += (valid.empty() ? "" : ", ") + k;
      throw UsageError("config: unknown key '" + key + "' (valid keys: " + valid + ")");
    }
    if (key == "model") c.model.kind = parse_model_kind(value);
    else if (key == "conv") conv = value;
    else if (key == "activation") activation = value;
    else if (key == "iterations") c.model.unrolled.iterations = parse_number<std::size_t>(key, value);
    else if (key == "feature_maps") width = parse_number<std::size_t>(key, value);
    else if (key == "lr") c.adam.lr = parse_number<double>(key, value);
    else if (key == "beta1") c.adam.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") c.adam.beta2 = parse_number<double>(key, value);
    else if (key == "eps") c.adam.eps = parse_number<double>(key, value);
    else if (key == "batch") c.batch = parse_number<std::size_t>(key, value);
    else if (key == "steps") c.steps = parse_number<std::size_t>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "data") c.data = value;
    else if (key == "out") c.out = value;
    else if (key == "denoiser_layers") c.model.unrolled.denoiser_layers = parse_number<std::size_t>(key, value);
    else if (key == "kernel") c.model.unrolled.kernel = c.model.unet.kernel = parse_number<std::size_t>(key, value);
    else if (key == "levels") c.model.unet.levels = parse_number<std::size_t>(key, value);
    else if (key == "convs_per_level") c.model.unet.convs_per_level = parse_number<std::size_t>(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_number<std::size_t>(key, value);
  }
  const ConvMode mode = parse_conv_mode(conv);
  if (activation.empty()) activation = mode == ConvMode::Real ? "relu" : "crelu";
  const ActivationKind act = parse_activation(activation);
  c.model.unrolled.conv_mode = c.model.unet.conv_mode = mode;
  c.model.unrolled.activation = c.model.unet.activation = act;
  c.model.unrolled.feature_maps = c.model.unet.base_features = width;
  c.validate();
  return c;
}

std::string format_config(const TrainConfig& c) {
  const auto& u = c.model.unrolled;
  const auto& n = c.model.unet;
  const bool unrolled = c.model.kind == ModelKind::Unrolled;
  std::ostringstream out;
  out << "model=" << to_string(c.model.kind) << '\n'
      << "conv=" << to_string(c.model.conv_mode()) << '\n'
      << "activation=" << to_string(unrolled ? u.activation : n.activation) << '\n'
      << "iterations=" << u.iterations << '\n'
      << "feature_maps=" << (unrolled ? u.feature_maps : n.base_features) << '\n'
      << "lr=" << format_double(c.adam.lr) << '\n'
      << "beta1=" << format_double(c.adam.beta1) << '\n'
      << "beta2=" << format_double(c.adam.beta2) << '\n'
      << "batch=" << c.batch << '\n'
      << "steps=" << c.steps << '\n'
      << "seed=" << c.seed << '\n'
      << "data=" << c.data << '\n'
      << "out=" << c.out << '\n'
      << "denoiser_layers=" << u.denoiser_layers << '\n'
      << "kernel=" << (unrolled ? u.kernel : n.kernel) << '\n'
      << "levels=" << n.levels << '\n'
      << "convs_per_level=" << n.convs_per_level << '\n'
      << "eps=" << format_double(c.adam.eps) << '\n'
      << "checkpoint_every=" << c.checkpoint_every << '\n';
  return out.str();
}

std::string config_digest(const TrainConfig& config) {
  TrainConfig canonical = config;
  canonical.data.clear();
  canonical.out.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : format_config(canonical)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExampleMetrics measure(const ComplexTensor& pred, const ComplexTensor& target) {
  ExampleMetrics m;
  m.nrmse = nrmse(pred, target);
  m.psnr = psnr(pred, target);
  m.ssim = ssim(pred, target);
  m.phase_rmse = phase_rmse(pred, target);
  return m;
}

MetricSummary MetricReport::mean() const {
  MetricSummary s;
  if (rows.empty()) return s;
  for (const auto& r : rows) {
    s.nrmse += r.nrmse;
    s.psnr += r.psnr;
    s.ssim += r.ssim;
    s.phase_rmse += r.phase_rmse;
  }
  const double n = static_cast<double>(rows.size());
  return {s.nrmse / n, s.psnr / n, s.ssim / n, s.phase_rmse / n};
}

MetricSummary MetricReport::stddev() const {
  MetricSummary s;
  if (rows.empty()) return s;
  const auto mu = mean();
  for (const auto& r : rows) {
    s.nrmse += (r.nrmse - mu.nrmse) * (r.nrmse - mu.nrmse);
    s.psnr += (r.psnr - mu.psnr) * (r.psnr - mu.psnr);
    s.ssim += (r.ssim - mu.ssim) * (r.ssim - mu.ssim);
    s.phase_rmse += (r.phase_rmse - mu.phase_rmse) * (r.phase_rmse - mu.phase_rmse);
  }
  const double n = static_cast<double>(rows.size());
  return {std::sqrt(s.nrmse / n), std::sqrt(s.psnr / n), std::sqrt(s.ssim / n),
          std::sqrt(s.phase_rmse / n)};
}

MetricReport evaluate(const std::vector<AcquisitionExample>& examples, const Reconstructor& recon,
                      std::string method, std::string digest) {
  MetricReport report;
  report.method = std::move(method);
  report.config_digest = std::move(digest);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    auto m = measure(recon(ex), ex.image);
    m.index = i;
    m.seed = ex.seed;
    m.acceleration = ex.acceleration;
    report.rows.push_back(m);
  }
  return report;
}

ComplexTensor zero_filled(const AcquisitionExample& ex) {
  return sense_adjoint(ex.kspace, ex.maps, ex.mask);
}

double dataset_loss(const ModelSpec& model, const ModelParams& params,
                    const std::vector<AcquisitionExample>& examples) {
  if (examples.empty()) throw DataError("dataset_loss: no examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    total += l1_loss(model.predict(params, ex.kspace, ex.maps, ex.mask), ex.image);
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train(const TrainConfig& config, const TrainData& data, const CheckpointFn& on_checkpoint) {
  config.validate();
  const auto& model = config.model;
  if (config.steps > 0 && data.train.empty()) throw DataError("train: the training split is empty");

  TrainResult result;
  result.initial = model.init(derive_seed(config.seed, 1));
  ModelParams params = result.initial;
  AdamState state;
  const std::string digest = config_digest(config);

  Rng order_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(data.train.size());
  std::size_t cursor = order.size();
  const auto next_index = [&] {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      order_rng.shuffle(order.begin(), order.end());
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto validation_nrmse = [&](const ModelParams& p) {
    const auto report = evaluate(data.val, [&](const AcquisitionExample& ex) {
      return model.predict(p, ex.kspace, ex.maps, ex.mask);
    });
    return report.mean().nrmse;
  };

  const auto checkpoint = [&](std::size_t step) {
    if (!data.val.empty()) {
      const double v = validation_nrmse(params);
      if (v < result.best_val_nrmse) {
        result.best_val_nrmse = v;
        result.best_step = step;
        result.best = params;
      }
    }
    if (on_checkpoint) on_checkpoint(step, params);
  };

  const double inv_batch = 1.0 / static_cast<double>(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    GradientSet total;
    double loss = 0.0;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto& ex = data.train[next_index()];
      Tape tape;
      const auto vars = bind_parameters(tape, params);
      const Var pred = model.forward(vars, tape.constant(ex.kspace), tape.constant(ex.maps),
                                     tape.constant(ex.mask));
      const Var l = ad::l1_loss(pred, tape.constant(ex.image));
      loss += l.value().re()[0] * inv_batch;
      auto grads = tape.backward(l);
      for (auto& [name, g] : grads) {
        auto [it, inserted] = total.try_emplace(name, g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) {
          it->second.re()[i] += inv_batch * g.re()[i];
          it->second.im()[i] += inv_batch * g.im()[i];
        }
      }
    }
    if (!std::isfinite(loss)) throw NumericalError("train: non-finite loss at step " + std::to_string(step));
    result.loss_log.push_back(loss);
    adam_step(params, total, state, config.adam);
    if ((step + 1) % config.checkpoint_every == 0 || step + 1 == config.steps) checkpoint(step + 1);
  }
  if (config.steps == 0) checkpoint(0);

  result.final_params = params;
  if (data.val.empty() || result.best.size() == 0) {
    result.best = params;
    result.best_step = config.steps;
  }
  result.test_report = evaluate(
      data.test,
      [&](const AcquisitionExample& ex) {
        return model.predict(result.best, ex.kspace, ex.maps, ex.mask);
      },
      to_string(model.kind) + "-" + to_string(model.conv_mode()), digest);
  return result;
}

}  // namespace cvnn
