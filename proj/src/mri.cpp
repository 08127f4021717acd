#include "cvnn/mri.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cvnn/ops.hpp"
#include "cvnn/random.hpp"

namespace cvnn {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Ellipse {
  double intensity, a, b, x0, y0, phi_deg;
};

// Modified Shepp-Logan (Toft) with non-negative composite intensities.
constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

// Pixel centres mapped to [-1, 1], y pointing up.
double coord_x(std::size_t j, std::size_t W) {
  return (2.0 * static_cast<double>(j) + 1.0 - static_cast<double>(W)) / static_cast<double>(W);
}
double coord_y(std::size_t i, std::size_t H) {
  return -(2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(H)) / static_cast<double>(H);
}

}  // namespace

ComplexTensor generate_phantom(const PhantomSpec& spec) {
  const auto H = spec.height;
  const auto W = spec.width;
  Rng rng(derive_seed(spec.seed, 0));

  auto ellipses = kSheppLogan;
  const double j = spec.geometry_jitter;
  for (std::size_t e = 0; e < ellipses.size(); ++e) {
    auto& el = ellipses[e];
    // The two outer ellipses share a scale so the skull ring stays closed.
    const double scale = 1.0 + j * rng.uniform(-1.0, 1.0);
    el.a *= scale;
    el.b *= e < 2 ? scale : 1.0 + j * rng.uniform(-1.0, 1.0);
    el.x0 += e < 2 ? 0.0 : j * rng.uniform(-1.0, 1.0);
    el.y0 += e < 2 ? 0.0 : j * rng.uniform(-1.0, 1.0);
    el.phi_deg += 60.0 * j * rng.uniform(-1.0, 1.0);
    if (e >= 2) el.intensity *= 1.0 + 4.0 * j * rng.uniform(-1.0, 1.0);
  }
  if (ellipses[1].b >= ellipses[0].b) ellipses[1].b = 0.95 * ellipses[0].b;
  if (ellipses[1].a >= ellipses[0].a) ellipses[1].a = 0.95 * ellipses[0].a;

  std::vector<double> mag(H * W, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t jj = 0; jj < W; ++jj) {
      const double x = coord_x(jj, W);
      const double y = coord_y(i, H);
      double v = 0.0;
      for (const auto& el : ellipses) {
        const double phi = el.phi_deg * kPi / 180.0;
        const double dx = x - el.x0;
        const double dy = y - el.y0;
        const double u = (dx * std::cos(phi) + dy * std::sin(phi)) / el.a;
        const double w = (-dx * std::sin(phi) + dy * std::cos(phi)) / el.b;
        if (u * u + w * w <= 1.0) v += el.intensity;
      }
      mag[i * W + jj] = std::max(v, 0.0);
    }
  }
  const double peak = *std::max_element(mag.begin(), mag.end());
  if (peak > 0.0) {
    for (auto& v : mag) v = std::min(v / peak, 1.0);
  }

  // Quadratic phase bounded by pi/2 on [-1,1]^2.
  std::array<double, 6> coef{};
  for (auto& c : coef) c = spec.phase_poly_scale * rng.uniform(-kPi / 12.0, kPi / 12.0);
  struct Bump {
    double cx, cy, sigma, amp;
  };
  std::vector<Bump> bumps(spec.phase_detail);
  for (auto& bump : bumps) {
    bump.cx = rng.uniform(-0.5, 0.5);
    bump.cy = rng.uniform(-0.6, 0.6);
    bump.sigma = rng.uniform(2.0, 5.0);  // pixels
    bump.amp = rng.uniform(-kPi / 2.0, kPi / 2.0);
  }

  ComplexTensor out({H, W});
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t jj = 0; jj < W; ++jj) {
      const double x = coord_x(jj, W);
      const double y = coord_y(i, H);
      double ph = coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * x + coef[4] * x * y +
                  coef[5] * y * y;
      for (const auto& bump : bumps) {
        const double px = (x - bump.cx) * static_cast<double>(W) / 2.0;
        const double py = (y - bump.cy) * static_cast<double>(H) / 2.0;
        ph += bump.amp * std::exp(-(px * px + py * py) / (2.0 * bump.sigma * bump.sigma));
      }
      const double m = mag[i * W + jj];
      if (ph == 0.0) {
        out.set(i * W + jj, {m, 0.0});
      } else {
        out.set(i * W + jj, std::polar(m, ph));
      }
    }
  }
  return out;
}

ComplexTensor generate_phantom(std::size_t height, std::size_t width, std::uint64_t seed,
                               std::size_t phase_detail) {
  PhantomSpec spec;
  spec.height = height;
  spec.width = width;
  spec.seed = seed;
  spec.phase_detail = phase_detail;
  return generate_phantom(spec);
}

ComplexTensor normalize_maps(const ComplexTensor& maps) {
  require_ndim(maps, 3, "normalize_maps");
  const auto C = maps.dim(0);
  const auto n = maps.dim(1) * maps.dim(2);
  ComplexTensor out = maps;
  for (std::size_t p = 0; p < n; ++p) {
    double ss = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const auto i = c * n + p;
      ss += maps.re()[i] * maps.re()[i] + maps.im()[i] * maps.im()[i];
    }
    if (ss <= 0.0) throw NumericalError("normalize_maps: zero sensitivity at pixel " + std::to_string(p));
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < C; ++c) {
      out.re()[c * n + p] *= inv;
      out.im()[c * n + p] *= inv;
    }
  }
  return out;
}

ComplexTensor generate_maps(std::size_t height, std::size_t width, std::size_t coils,
                            std::uint64_t seed) {
  if (coils < 1) throw UsageError("generate_maps: coils must be >= 1");
  constexpr double ring_radius = 1.5;
  constexpr double falloff = 1.0;
  Rng rng(derive_seed(seed, 1));
  ComplexTensor maps({coils, height, width});
  for (std::size_t c = 0; c < coils; ++c) {
    const double angle = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(coils);
    const double cx = ring_radius * std::cos(angle);
    const double cy = ring_radius * std::sin(angle);
    const double p0 = rng.uniform(-kPi, kPi);
    const double px = rng.uniform(-kPi / 4.0, kPi / 4.0);
    const double py = rng.uniform(-kPi / 4.0, kPi / 4.0);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double x = coord_x(j, width);
        const double y = coord_y(i, height);
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double m = std::exp(-d2 / (2.0 * falloff * falloff));
        maps.set((c * height + i) * width + j, std::polar(m, p0 + px * x + py * y));
      }
    }
  }
  return normalize_maps(maps);
}

double mask_radius(const MaskSpec& spec, double r0, std::size_t ky, std::size_t kx) {
  const double cy = static_cast<double>(spec.height / 2);
  const double cx = static_cast<double>(spec.width / 2);
  const double rho = std::hypot(static_cast<double>(ky) - cy, static_cast<double>(kx) - cx);
  const double rho_max = std::hypot(cy, cx);
  return r0 * std::pow(1.0 + rho / rho_max, spec.density_power);
}

bool in_calibration(const MaskSpec& spec, std::size_t ky, std::size_t kx) {
  const auto y0 = spec.height / 2 - spec.calib / 2;
  const auto x0 = spec.width / 2 - spec.calib / 2;
  return ky >= y0 && ky < y0 + spec.calib && kx >= x0 && kx < x0 + spec.calib;
}

double mask_acceleration(const ComplexTensor& mask) {
  std::size_t n = 0;
  for (double v : mask.re()) n += v != 0.0 ? 1 : 0;
  if (n == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(mask.numel()) / static_cast<double>(n);
}

namespace {

void validate_mask_spec(const MaskSpec& spec) {
  if (spec.height == 0 || spec.width == 0) throw UsageError("mask: empty grid");
  if (spec.calib > std::min(spec.height, spec.width)) {
    throw UsageError("mask: calib " + std::to_string(spec.calib) + " exceeds grid size");
  }
  if (!(spec.accel_target >= 1.0)) throw UsageError("mask: accel_target must be >= 1");
}

bool within_tolerance(double achieved, double target) {
  return std::abs(achieved - target) <= 0.05 * target;
}

class PoissonSampler {
 public:
  explicit PoissonSampler(const MaskSpec& spec) : spec_(spec) {
    const auto H = spec.height, W = spec.width;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        if (in_calibration(spec, y, x)) {
          ++calib_count_;
        } else {
          order_.push_back(y * W + x);
        }
      }
    }
    Rng rng(derive_seed(spec.seed, 2));
    rng.shuffle(order_.begin(), order_.end());
  }

  std::size_t calib_count() const { return calib_count_; }

  // Greedy dart throwing over the fixed candidate order.
  std::vector<std::uint8_t> sample(double r0) const {
    const auto H = spec_.height, W = spec_.width;
    std::vector<double> radius(H * W, 0.0);
    double max_r = 0.0;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        radius[y * W + x] = mask_radius(spec_, r0, y, x);
        max_r = std::max(max_r, radius[y * W + x]);
      }
    }
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(max_r));
    std::vector<std::uint8_t> accepted(H * W, 0);
    for (const auto p : order_) {
      const auto py = static_cast<std::ptrdiff_t>(p / W);
      const auto px = static_cast<std::ptrdiff_t>(p % W);
      const double rp = radius[p];
      bool ok = true;
      for (auto y = std::max<std::ptrdiff_t>(0, py - reach);
           ok && y <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H) - 1, py + reach); ++y) {
        for (auto x = std::max<std::ptrdiff_t>(0, px - reach);
             x <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W) - 1, px + reach); ++x) {
          const auto q = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
          if (!accepted[q]) continue;
          const double r = std::max(rp, radius[q]);
          const double dy = static_cast<double>(y - py);
          const double dx = static_cast<double>(x - px);
          if (dx * dx + dy * dy < r * r) {
            ok = false;
            break;
          }
        }
      }
      if (ok) accepted[p] = 1;
    }
    return accepted;
  }

 private:
  const MaskSpec& spec_;
  std::size_t calib_count_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace

PoissonMask poisson_mask_detailed(const MaskSpec& spec) {
  validate_mask_spec(spec);
  const auto H = spec.height, W = spec.width;
  const double total = static_cast<double>(H * W);
  PoissonMask result{ComplexTensor({H, W}), 0.0, 1.0};
  if (spec.accel_target <= 1.0) {
    for (auto& v : result.mask.re()) v = 1.0;
    return result;
  }

  const PoissonSampler sampler(spec);
  double lo = 0.0;
  double hi = static_cast<double>(std::max(H, W));
  for (int step = 0; step < 50; ++step) {
    const double mid = 0.5 * (lo + hi);
    const auto accepted = sampler.sample(mid);
    const auto n = static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), 1));
    const double achieved = total / static_cast<double>(sampler.calib_count() + n);
    if (within_tolerance(achieved, spec.accel_target)) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const bool on = in_calibration(spec, y, x) || accepted[y * W + x];
          result.mask.re()[y * W + x] = on ? 1.0 : 0.0;
        }
      }
      result.r0 = mid;
      result.acceleration = achieved;
      return result;
    }
    if (achieved < spec.accel_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  std::ostringstream os;
  os << "poisson_mask: acceleration " << spec.accel_target << " unreachable on " << H << "x" << W
     << " with calib " << spec.calib << " after 50 bisection steps";
  throw NumericalError(os.str());
}

std::vector<std::string> audit_mask(const MaskSpec& spec, const ComplexTensor& mask, double r0) {
  std::vector<std::string> problems;
  if (mask.ndim() != 2 || mask.dim(0) != spec.height || mask.dim(1) != spec.width) {
    problems.push_back("mask shape " + shape_string(mask.shape()) + " does not match spec");
    return problems;
  }
  const auto H = spec.height, W = spec.width;
  std::vector<std::pair<std::size_t, std::size_t>> outside;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double v = mask.re()[y * W + x];
      if (v != 0.0 && v != 1.0) {
        problems.push_back("non-binary mask value at (" + std::to_string(y) + "," + std::to_string(x) + ")");
      }
      if (mask.im()[y * W + x] != 0.0) problems.push_back("mask has an imaginary part");
      if (in_calibration(spec, y, x)) {
        if (v != 1.0) {
          problems.push_back("calibration sample missing at (" + std::to_string(y) + "," +
                             std::to_string(x) + ")");
        }
      } else if (v != 0.0) {
        outside.emplace_back(y, x);
      }
    }
  }
  for (std::size_t a = 0; a < outside.size(); ++a) {
    const double ra = mask_radius(spec, r0, outside[a].first, outside[a].second);
    for (std::size_t b = a + 1; b < outside.size(); ++b) {
      const double rb = mask_radius(spec, r0, outside[b].first, outside[b].second);
      const double dy = static_cast<double>(outside[a].first) - static_cast<double>(outside[b].first);
      const double dx = static_cast<double>(outside[a].second) - static_cast<double>(outside[b].second);
      const double r = std::max(ra, rb);
      if (dx * dx + dy * dy < r * r) {
        std::ostringstream os;
        os << "samples (" << outside[a].first << "," << outside[a].second << ") and ("
           << outside[b].first << "," << outside[b].second << ") closer than radius " << r;
        problems.push_back(os.str());
      }
    }
  }
  if (spec.accel_target > 1.0) {
    const double achieved = mask_acceleration(mask);
    if (!within_tolerance(achieved, spec.accel_target)) {
      std::ostringstream os;
      os << "acceleration " << achieved << " outside 5% of target " << spec.accel_target;
      problems.push_back(os.str());
    }
  }
  return problems;
}

namespace {

void check_sense_shapes(const ComplexTensor& image_like, const ComplexTensor& maps,
                        const ComplexTensor& mask, bool image_is_kspace) {
  require_ndim(maps, 3, "sense maps");
  require_ndim(mask, 2, "sense mask");
  if (mask.dim(0) != maps.dim(1)) throw ShapeError("sense: mask axis 0 does not match maps axis 1");
  if (mask.dim(1) != maps.dim(2)) throw ShapeError("sense: mask axis 1 does not match maps axis 2");
  if (image_is_kspace) {
    require_same_shape(image_like, maps, "sense_adjoint kspace vs maps");
  } else {
    require_ndim(image_like, 2, "sense image");
    if (image_like.dim(0) != maps.dim(1)) throw ShapeError("sense: image axis 0 does not match maps axis 1");
    if (image_like.dim(1) != maps.dim(2)) throw ShapeError("sense: image axis 1 does not match maps axis 2");
  }
}

}  // namespace

ComplexTensor sense_forward(const ComplexTensor& image, const ComplexTensor& maps,
                            const ComplexTensor& mask) {
  check_sense_shapes(image, maps, mask, false);
  const auto C = maps.dim(0);
  const auto n = image.numel();
  ComplexTensor coil_images(maps.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < n; ++p) coil_images.set(c * n + p, maps.at(c * n + p) * image.at(p));
  }
  ComplexTensor k = fft2c(coil_images);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      const double m = mask.re()[p];
      k.re()[c * n + p] *= m;
      k.im()[c * n + p] *= m;
    }
  }
  return k;
}

ComplexTensor sense_adjoint(const ComplexTensor& kspace, const ComplexTensor& maps,
                            const ComplexTensor& mask) {
  check_sense_shapes(kspace, maps, mask, true);
  const auto C = maps.dim(0);
  const auto n = mask.numel();
  ComplexTensor masked = kspace;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      const double m = mask.re()[p];
      masked.re()[c * n + p] *= m;
      masked.im()[c * n + p] *= m;
    }
  }
  const ComplexTensor coil_images = ifft2c(masked);
  ComplexTensor image({mask.dim(0), mask.dim(1)});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      image.set(p, image.at(p) + std::conj(maps.at(c * n + p)) * coil_images.at(c * n + p));
    }
  }
  return image;
}

ComplexTensor simulate_acquisition(const ComplexTensor& image, const ComplexTensor& maps,
                                   const ComplexTensor& mask, double noise_sigma,
                                   std::uint64_t seed) {
  if (noise_sigma < 0.0) throw UsageError("simulate_acquisition: noise_sigma must be >= 0");
  ComplexTensor k = sense_forward(image, maps, mask);
  if (noise_sigma == 0.0) return k;
  Rng rng(derive_seed(seed, 3));
  const auto n = mask.numel();
  for (std::size_t i = 0; i < k.numel(); ++i) {
    const double nr = rng.normal();
    const double ni = rng.normal();
    if (mask.re()[i % n] == 0.0) continue;
    k.re()[i] += noise_sigma * nr;
    k.im()[i] += noise_sigma * ni;
  }
  return k;
}

double sense_normal_norm(const ComplexTensor& maps, const ComplexTensor& mask,
                         std::size_t iterations, std::uint64_t seed) {
  Rng rng(seed);
  ComplexTensor x({mask.dim(0), mask.dim(1)});
  for (auto& v : x.re()) v = rng.normal();
  for (auto& v : x.im()) v = rng.normal();
  double estimate = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const double nx = norm2(x);
    for (auto& v : x.re()) v /= nx;
    for (auto& v : x.im()) v /= nx;
    const ComplexTensor y = sense_adjoint(sense_forward(x, maps, mask), maps, mask);
    estimate = inner(x, y).real();
    x = y;
    if (norm2(x) == 0.0) return 0.0;
  }
  return estimate;
}

ExampleSeeds ExampleSeeds::from(std::uint64_t seed) {
  return {derive_seed(seed, 10), derive_seed(seed, 11), derive_seed(seed, 12),
          derive_seed(seed, 13), derive_seed(seed, 14)};
}

double noise_sigma_for_snr(const ComplexTensor& image, std::size_t coils, double snr_db) {
  const double energy = norm2(image);
  const double rms = energy / std::sqrt(static_cast<double>(coils * image.numel()));
  return rms * std::pow(10.0, -snr_db / 20.0) / std::sqrt(2.0);
}

AcquisitionExample synthesize_example(const ExampleSpec& spec) {
  const auto seeds = ExampleSeeds::from(spec.seed);
  AcquisitionExample ex;
  ex.seed = spec.seed;

  PhantomSpec ps;
  ps.height = spec.size;
  ps.width = spec.size;
  ps.seed = seeds.phantom;
  ps.phase_detail = spec.phase_detail;
  ex.image = generate_phantom(ps);
  ex.maps = generate_maps(spec.size, spec.size, spec.coils, seeds.maps);

  MaskSpec ms;
  ms.height = spec.size;
  ms.width = spec.size;
  ms.calib = spec.calib;
  ms.density_power = spec.density_power;
  ms.seed = seeds.mask;
  Rng accel_rng(seeds.accel);
  ms.accel_target = spec.accel_max > spec.accel_min ? accel_rng.uniform(spec.accel_min, spec.accel_max)
                                                    : spec.accel_min;
  const auto pm = poisson_mask_detailed(ms);
  ex.mask = pm.mask;
  ex.mask_spec = ms;
  ex.r0 = pm.r0;
  ex.acceleration = pm.acceleration;

  ex.noise_sigma = std::isfinite(spec.snr_db) ? noise_sigma_for_snr(ex.image, spec.coils, spec.snr_db) : 0.0;
  ex.kspace = simulate_acquisition(ex.image, ex.maps, ex.mask, ex.noise_sigma, seeds.noise);
  return ex;
}

ComplexTensor resimulate(const AcquisitionExample& ex) {
  return simulate_acquisition(ex.image, ex.maps, ex.mask, ex.noise_sigma,
                              ExampleSeeds::from(ex.seed).noise);
}

namespace ad {

namespace {

void require_constant(Var v, const char* what) {
  if (v.tape()->requires_grad(v)) {
    throw UsageError(std::string(what) + " must be a constant (no gradient support)");
  }
}

void accumulate(ComplexTensor* dst, const ComplexTensor& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.numel(); ++i) {
    dst->re()[i] += src.re()[i];
    dst->im()[i] += src.im()[i];
  }
}

}  // namespace

Var sense_forward(Var image, Var maps, Var mask) {
  require_constant(maps, "sense maps");
  require_constant(mask, "sense mask");
  const ComplexTensor& s = maps.value();
  const ComplexTensor& m = mask.value();
  return image.tape()->record(cvnn::sense_forward(image.value(), s, m), {image},
                              [&s, &m](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                                if (in[0] != nullptr) accumulate(in[0], cvnn::sense_adjoint(g, s, m));
                              });
}

Var sense_adjoint(Var kspace, Var maps, Var mask) {
  require_constant(maps, "sense maps");
  require_constant(mask, "sense mask");
  const ComplexTensor& s = maps.value();
  const ComplexTensor& m = mask.value();
  return kspace.tape()->record(cvnn::sense_adjoint(kspace.value(), s, m), {kspace},
                               [&s, &m](const ComplexTensor& g, std::span<ComplexTensor* const> in) {
                                 if (in[0] != nullptr) accumulate(in[0], cvnn::sense_forward(g, s, m));
                               });
}

}  // namespace ad

}  // namespace cvnn
