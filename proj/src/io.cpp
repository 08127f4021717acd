#include "cvnn/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

namespace cvnn {

namespace {

constexpr char kMagic[4] = {'C', 'X', 'T', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw DataError("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape_token(const std::string& token, const std::string& what) {
  Shape s;
  std::size_t start = 0;
  while (start <= token.size()) {
    const auto end = std::min(token.find('x', start), token.size());
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data() + start, token.data() + end, v);
    if (ec != std::errc() || ptr != token.data() + end) throw DataError(what + ": bad shape '" + token + "'");
    s.push_back(v);
    start = end + 1;
  }
  return s;
}

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& what) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(what + ": malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

template <class T>
T kv_number(const KeyValues& kv, const std::string& key, const std::string& what) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw DataError(what + ": missing key '" + key + "'");
  T out{};
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(what + ": bad value '" + s + "' for '" + key + "'");
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_cxt(const ComplexTensor& t, bool complex) {
  if (t.ndim() > 255) throw ShapeError("cxt: more than 255 axes");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(complex ? 1 : 0);
  out.push_back(static_cast<std::uint8_t>(t.ndim()));
  for (const auto d : t.shape()) put_u64(out, d);
  out.reserve(out.size() + (complex ? 8 : 4) * t.numel());
  for (const double v : t.re()) put_f32(out, v);
  if (complex) {
    for (const double v : t.im()) put_f32(out, v);
  }
  return out;
}

ComplexTensor decode_cxt(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError(what + ": bad magic (expected CXT1)");
  }
  const auto dtype = bytes[4];
  if (dtype > 1) throw DataError(what + ": unknown dtype code " + std::to_string(dtype));
  const std::size_t ndim = bytes[5];
  if (ndim == 0) throw DataError(what + ": zero axes");
  if (bytes.size() < 6 + 8 * ndim) throw DataError(what + ": truncated header");
  Shape shape(ndim);
  std::size_t n = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    shape[i] = get_u64(bytes.data() + 6 + 8 * i);
    if (shape[i] == 0) throw DataError(what + ": axis " + std::to_string(i) + " has size 0");
    n *= shape[i];
  }
  const std::size_t header = 6 + 8 * ndim;
  const std::size_t planes = dtype == 1 ? 2 : 1;
  if (bytes.size() != header + planes * 4 * n) {
    throw DataError(what + ": payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                    std::to_string(planes * 4 * n));
  }
  ComplexTensor t(shape);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < n; ++i) t.re()[i] = get_f32(p + 4 * i);
  if (dtype == 1) {
    for (std::size_t i = 0; i < n; ++i) t.im()[i] = get_f32(p + 4 * (n + i));
  }
  return t;
}

void write_cxt(const fs::path& path, const ComplexTensor& t) { write_cxt(path, t, !t.is_real()); }

void write_cxt(const fs::path& path, const ComplexTensor& t, bool complex) {
  const auto bytes = encode_cxt(t, complex);
  write_bytes(path, bytes.data(), bytes.size());
}

ComplexTensor read_cxt(const fs::path& path) { return decode_cxt(read_bytes(path), path.string()); }

bool cxt_is_complex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char head[5] = {};
  if (!in.read(head, 5) || std::memcmp(head, kMagic, 4) != 0) throw DataError(path.string() + ": bad magic");
  return head[4] == 1;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) { write_bytes(path, text.data(), text.size()); }

// --- checkpoints ----------------------------------------------------------

namespace {

std::string kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::Kernel: return "kernel";
    case ParamKind::Bias: return "bias";
    case ParamKind::Scalar: return "scalar";
  }
  return "scalar";
}

}  // namespace

void save_checkpoint(const fs::path& dir, const ModelParams& params, const TrainConfig& config) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "# name file shape kind\n";
  manifest << "digest " << config_digest(config) << '\n';
  for (const auto& [name, p] : params) {
    const std::string shape = shape_token(p.value.shape());
    if (p.kind == ParamKind::Kernel) {
      write_cxt(dir / (name + ".X.cxt"), ComplexTensor(p.value.shape(), {p.value.re().begin(), p.value.re().end()},
                                                       std::vector<double>(p.value.numel(), 0.0)),
                false);
      manifest << "param " << name << ' ' << name << ".X.cxt " << shape << " kernel-X\n";
      if (p.complex) {
        write_cxt(dir / (name + ".Y.cxt"),
                  ComplexTensor::real(p.value.shape(), {p.value.im().begin(), p.value.im().end()}), false);
        manifest << "param " << name << ' ' << name << ".Y.cxt " << shape << " kernel-Y\n";
      }
    } else {
      write_cxt(dir / (name + ".cxt"), p.value, p.complex);
      manifest << "param " << name << ' ' << name << ".cxt " << shape << ' ' << kind_name(p.kind) << '\n';
    }
  }
  write_text(dir / "config.txt", format_config(config));
  write_text(dir / "manifest.txt", manifest.str());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) throw DataError("checkpoint: missing " + manifest_path.string());
  Checkpoint ck;
  try {
    ck.config = parse_config(read_text(dir / "config.txt"));
  } catch (const UsageError& e) {
    throw DataError("checkpoint: bad config.txt: " + std::string(e.what()));
  }

  struct Entry {
    std::optional<ComplexTensor> x, y, other;
    ParamKind kind = ParamKind::Scalar;
    bool complex = false;
  };
  std::map<std::string, Entry> entries;
  std::istringstream in(read_text(manifest_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "digest") {
      ls >> ck.digest;
      continue;
    }
    std::string name, file, shape, kind;
    if (tag != "param" || !(ls >> name >> file >> shape >> kind)) {
      throw DataError("checkpoint manifest: malformed line '" + line + "'");
    }
    const auto path = dir / file;
    if (!fs::exists(path)) throw DataError("checkpoint: manifest entry '" + name + "' points to missing " + file);
    auto t = read_cxt(path);
    if (t.shape() != parse_shape_token(shape, "checkpoint manifest")) {
      throw DataError("checkpoint: " + file + " has shape " + shape_string(t.shape()) + ", manifest says " + shape);
    }
    auto& e = entries[name];
    if (kind == "kernel-X") {
      e.kind = ParamKind::Kernel;
      e.x = std::move(t);
    } else if (kind == "kernel-Y") {
      e.kind = ParamKind::Kernel;
      e.complex = true;
      e.y = std::move(t);
    } else if (kind == "bias" || kind == "scalar") {
      e.kind = kind == "bias" ? ParamKind::Bias : ParamKind::Scalar;
      e.complex = cxt_is_complex(path);
      e.other = std::move(t);
    } else {
      throw DataError("checkpoint manifest: unknown kind '" + kind + "'");
    }
  }
  if (ck.digest != config_digest(ck.config)) {
    throw DataError("checkpoint: manifest digest " + ck.digest + " does not match config.txt");
  }
  for (auto& [name, e] : entries) {
    Param p;
    p.kind = e.kind;
    p.complex = e.complex;
    if (e.kind == ParamKind::Kernel) {
      if (!e.x) throw DataError("checkpoint: kernel '" + name + "' lacks its kernel-X file");
      p.value = *e.x;
      if (e.y) {
        if (e.y->shape() != e.x->shape()) throw DataError("checkpoint: kernel '" + name + "' X/Y shapes differ");
        std::copy(e.y->re().begin(), e.y->re().end(), p.value.im().begin());
      }
    } else {
      p.value = *e.other;
    }
    ck.params.add(name, std::move(p));
  }

  const auto layout = ck.config.model.init(0);
  for (const auto& [name, p] : layout) {
    if (!ck.params.contains(name)) throw DataError("checkpoint: missing parameter '" + name + "' for its config");
    const auto& q = ck.params.at(name);
    if (q.value.shape() != p.value.shape() || q.kind != p.kind || q.complex != p.complex) {
      throw DataError("checkpoint: parameter '" + name + "' does not match its config");
    }
  }
  if (ck.params.size() != layout.size()) throw DataError("checkpoint: extra parameters beyond its config");
  return ck;
}

// --- datasets -------------------------------------------------------------

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.train = (8 * n + 5) / 10;
  c.val = std::min((n + 5) / 10, n - c.train);
  c.test = n - c.train - c.val;
  return c;
}

std::string example_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ex%05zu", index);
  return buf;
}

void write_example(const fs::path& dir, const AcquisitionExample& ex) {
  fs::create_directories(dir);
  write_cxt(dir / "image.cxt", ex.image, true);
  write_cxt(dir / "maps.cxt", ex.maps, true);
  write_cxt(dir / "mask.cxt", ex.mask, false);
  write_cxt(dir / "kspace.cxt", ex.kspace, true);
  const auto& m = ex.mask_spec;
  std::ostringstream meta;
  meta << "seed=" << ex.seed << '\n'
       << "acceleration=" << format_double(ex.acceleration) << '\n'
       << "r0=" << format_double(ex.r0) << '\n'
       << "noise_sigma=" << format_double(ex.noise_sigma) << '\n'
       << "mask_height=" << m.height << '\n'
       << "mask_width=" << m.width << '\n'
       << "accel_target=" << format_double(m.accel_target) << '\n'
       << "calib=" << m.calib << '\n'
       << "density_power=" << format_double(m.density_power) << '\n'
       << "mask_seed=" << m.seed << '\n';
  write_text(dir / "meta.txt", meta.str());
}

namespace {

AcquisitionExample read_example_raw(const fs::path& dir) {
  const std::string what = (dir / "meta.txt").string();
  const auto kv = parse_key_values(read_text(dir / "meta.txt"), what);
  AcquisitionExample ex;
  ex.seed = kv_number<std::uint64_t>(kv, "seed", what);
  ex.acceleration = kv_number<double>(kv, "acceleration", what);
  ex.r0 = kv_number<double>(kv, "r0", what);
  ex.noise_sigma = kv_number<double>(kv, "noise_sigma", what);
  ex.mask_spec.height = kv_number<std::size_t>(kv, "mask_height", what);
  ex.mask_spec.width = kv_number<std::size_t>(kv, "mask_width", what);
  ex.mask_spec.accel_target = kv_number<double>(kv, "accel_target", what);
  ex.mask_spec.calib = kv_number<std::size_t>(kv, "calib", what);
  ex.mask_spec.density_power = kv_number<double>(kv, "density_power", what);
  ex.mask_spec.seed = kv_number<std::uint64_t>(kv, "mask_seed", what);
  ex.image = read_cxt(dir / "image.cxt");
  ex.maps = read_cxt(dir / "maps.cxt");
  ex.mask = read_cxt(dir / "mask.cxt");
  ex.kspace = read_cxt(dir / "kspace.cxt");
  const auto& s = ex.image.shape();
  if (ex.image.ndim() != 2 || ex.maps.ndim() != 3 || ex.kspace.shape() != ex.maps.shape() ||
      ex.mask.shape() != s || ex.maps.dim(1) != s[0] || ex.maps.dim(2) != s[1]) {
    throw DataError(dir.string() + ": inconsistent tensor shapes");
  }
  return ex;
}

}  // namespace

AcquisitionExample read_example(const fs::path& dir) {
  auto ex = read_example_raw(dir);
  ex.maps = normalize_maps(ex.maps);
  return ex;
}

std::vector<AcquisitionExample> synthesize_dataset(const DatasetSpec& spec) {
  std::vector<AcquisitionExample> out;
  out.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    ExampleSpec es = spec.example;
    es.seed = derive_seed(spec.example.seed, i);
    out.push_back(synthesize_example(es));
  }
  return out;
}

void write_dataset(const fs::path& root, const std::vector<AcquisitionExample>& examples) {
  fs::create_directories(root);
  for (std::size_t i = 0; i < examples.size(); ++i) write_example(root / example_dir_name(i), examples[i]);
  const auto counts = split_counts(examples.size());
  std::string lists[3];
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int split = i < counts.train ? 0 : (i < counts.train + counts.val ? 1 : 2);
    lists[split] += example_dir_name(i) + '\n';
  }
  write_text(root / "train.txt", lists[0]);
  write_text(root / "val.txt", lists[1]);
  write_text(root / "test.txt", lists[2]);
}

std::vector<std::string> read_manifest(const fs::path& root, const std::string& split) {
  const auto path = root / (split + ".txt");
  if (!fs::exists(path)) throw DataError("dataset: missing manifest " + path.string());
  std::vector<std::string> names;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

std::vector<AcquisitionExample> load_split(const fs::path& root, const std::string& split) {
  std::vector<AcquisitionExample> out;
  for (const auto& name : read_manifest(root, split)) out.push_back(read_example(root / name));
  return out;
}

TrainData load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset: no directory at " + root.string());
  return {load_split(root, "train"), load_split(root, "val"), load_split(root, "test")};
}

std::vector<std::string> verify_dataset(const fs::path& root) {
  std::vector<std::string> problems;
  if (!fs::is_directory(root)) return {"dataset directory " + root.string() + " does not exist"};
  std::set<std::string> seen;
  for (const char* split : {"train", "val", "test"}) {
    std::vector<std::string> names;
    try {
      names = read_manifest(root, split);
    } catch (const DataError& e) {
      problems.emplace_back(e.what());
      continue;
    }
    for (const auto& name : names) {
      const std::string where = std::string(split) + "/" + name;
      if (!seen.insert(name).second) {
        problems.push_back(where + ": listed in more than one split");
        continue;
      }
      AcquisitionExample ex;
      try {
        ex = read_example_raw(root / name);
      } catch (const std::exception& e) {
        problems.push_back(where + ": " + e.what());
        continue;
      }
      for (const auto& v : audit_mask(ex.mask_spec, ex.mask, ex.r0)) problems.push_back(where + ": mask: " + v);
      if (std::abs(mask_acceleration(ex.mask) - ex.acceleration) > 1e-9 * ex.acceleration) {
        problems.push_back(where + ": recorded acceleration does not match the mask");
      }

      const std::size_t coils = ex.maps.dim(0);
      const std::size_t plane = ex.image.numel();
      double worst = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < coils; ++c) s += std::norm(ex.maps.at(c * plane + i));
        worst = std::max(worst, std::abs(s - 1.0));
      }
      // f32 storage bounds the achievable accuracy
      if (worst > 1e-5) {
        problems.push_back(where + ": maps not normalised (max |sum|S|^2 - 1| = " + format_double(worst) + ")");
      }

      ex.maps = normalize_maps(ex.maps);
      const auto expected = resimulate(ex);
      double peak = 0.0;
      double err = 0.0;
      bool outside = false;
      for (std::size_t c = 0; c < coils; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
          const auto k = ex.kspace.at(c * plane + i);
          peak = std::max(peak, std::abs(expected.at(c * plane + i)));
          err = std::max(err, std::abs(k - expected.at(c * plane + i)));
          if (ex.mask.re()[i] == 0.0 && k != Complex{}) outside = true;
        }
      }
      if (outside) problems.push_back(where + ": k-space has samples outside the mask");
      if (err > 1e-5 * std::max(peak, 1e-30)) {
        problems.push_back(where + ": k-space inconsistent with image, maps, mask and noise seed (max error " +
                           format_double(err) + ")");
      }
    }
  }
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("ex", 0) == 0 && !seen.contains(name)) {
      problems.push_back(name + ": not listed in any split manifest");
    }
  }
  return problems;
}

// --- CSV ------------------------------------------------------------------

std::string loss_log_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + format_double(losses[i]) + "\n";
  return out;
}

std::string metric_report_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "example,seed,acceleration,nrmse,psnr,ssim,phase_rmse,method,config_digest\n";
  for (const auto& r : report.rows) {
    out << r.index << ',' << r.seed << ',' << format_double(r.acceleration) << ',' << format_double(r.nrmse) << ','
        << format_double(r.psnr) << ',' << format_double(r.ssim) << ',' << format_double(r.phase_rmse) << ','
        << report.method << ',' << report.config_digest << '\n';
  }
  const auto row = [&](const char* label, const MetricSummary& s) {
    out << label << ",,," << format_double(s.nrmse) << ',' << format_double(s.psnr) << ',' << format_double(s.ssim)
        << ',' << format_double(s.phase_rmse) << ',' << report.method << ',' << report.config_digest << '\n';
  };
  row("mean", report.mean());
  row("std", report.stddev());
  return out.str();
}

// --- PNG ------------------------------------------------------------------

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

std::uint8_t to_byte(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.width == 0 || image.height == 0) {
    throw ShapeError("png: pixel buffer does not match " + std::to_string(image.height) + "x" +
                     std::to_string(image.width));
  }
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit grayscale
  put_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(image.height * (image.width + 1));
  for (std::size_t y = 0; y < image.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), image.pixels.begin() + static_cast<std::ptrdiff_t>(y * image.width),
               image.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * image.width));
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(size);
  if (compress2(packed.data(), &size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw DataError("png: zlib compression failed");
  }
  packed.resize(size);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

void write_png(const fs::path& path, const GrayImage& image) {
  const auto bytes = encode_png(image);
  write_bytes(path, bytes.data(), bytes.size());
}

double magnitude_percentile(const ComplexTensor& t, double q) {
  std::vector<double> mags(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) mags[i] = std::hypot(t.re()[i], t.im()[i]);
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(mags.size()))) ;
  const std::size_t idx = std::min(mags.size() - 1, k == 0 ? 0 : k - 1);
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(idx), mags.end());
  return mags[idx];
}

namespace {

GrayImage gray_from(const ComplexTensor& t, const std::function<double(Complex)>& f) {
  require_ndim(t, 2, "png image");
  GrayImage g{t.dim(1), t.dim(0), std::vector<std::uint8_t>(t.numel())};
  for (std::size_t i = 0; i < t.numel(); ++i) g.pixels[i] = to_byte(f(t.at(i)));
  return g;
}

}  // namespace

GrayImage magnitude_gray(const ComplexTensor& t, double window_max) {
  const double s = window_max > 0.0 ? 255.0 / window_max : 0.0;
  return gray_from(t, [s](Complex z) { return std::abs(z) * s; });
}

GrayImage phase_gray(const ComplexTensor& t) {
  return gray_from(t, [](Complex z) { return (std::arg(z) + std::numbers::pi) * 255.0 / (2.0 * std::numbers::pi); });
}

GrayImage difference_gray(const ComplexTensor& pred, const ComplexTensor& target, double scale, double window_max) {
  require_same_shape(pred, target, "difference image");
  return magnitude_gray(scale_add({-1.0, 0.0}, target, pred), window_max / scale);
}

GrayImage hconcat(const std::vector<GrayImage>& panels) {
  if (panels.empty()) throw ShapeError("hconcat: no panels");
  GrayImage out{0, panels[0].height, {}};
  for (const auto& p : panels) {
    if (p.height != out.height) throw ShapeError("hconcat: panel heights differ");
    out.width += p.width;
  }
  out.pixels.resize(out.width * out.height);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t y = 0; y < p.height; ++y) {
      std::copy_n(p.pixels.begin() + static_cast<std::ptrdiff_t>(y * p.width), p.width,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(y * out.width + x0));
    }
    x0 += p.width;
  }
  return out;
}

}  // namespace cvnn
