#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "cvnn/io.hpp"
#include "helpers.hpp"

using namespace cvnn;
using testutil::random_tensor;
using testutil::temp_dir;

namespace {

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ComplexTensor f32_rounded(const ComplexTensor& t) {
  ComplexTensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    out.re()[i] = static_cast<float>(t.re()[i]);
    out.im()[i] = static_cast<float>(t.im()[i]);
  }
  return out;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

DatasetSpec tiny_dataset(std::size_t n) {
  DatasetSpec spec;
  spec.n = n;
  spec.example.size = 16;
  spec.example.coils = 2;
  spec.example.calib = 4;
  spec.example.seed = 5;
  return spec;
}

}  // namespace

TEST_CASE("cxt byte layout") {
  const auto t = ComplexTensor({1, 2}, {1.0, -2.0}, {0.5, 0.0});
  const auto bytes = encode_cxt(t, true);
  const std::size_t header = 4 + 1 + 1 + 2 * 8;
  REQUIRE(bytes.size() == header + 2 * 2 * 4);
  CHECK(std::memcmp(bytes.data(), "CXT1", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);
  CHECK(bytes[6] == 1);
  for (int i = 7; i < 14; ++i) CHECK(bytes[i] == 0);
  CHECK(bytes[14] == 2);
  // 1.0f = 0x3f800000 little-endian
  CHECK(bytes[header + 0] == 0x00);
  CHECK(bytes[header + 3] == 0x3f);
  // -2.0f = 0xc0000000
  CHECK(bytes[header + 7] == 0xc0);
  // imaginary plane follows: 0.5f = 0x3f000000
  CHECK(bytes[header + 11] == 0x3f);
  CHECK(encode_cxt(t.reshaped({2}), false).size() == 4 + 1 + 1 + 8 + 2 * 4);
}

TEST_CASE("cxt round trip is bit-exact for f32 payloads") {
  const auto t = f32_rounded(random_tensor({3, 4, 5}, 1));
  CHECK(decode_cxt(encode_cxt(t, true)) == t);
  const auto r = f32_rounded(random_tensor({7}, 2, false));
  CHECK(decode_cxt(encode_cxt(r, false)) == r);
  const auto dir = temp_dir("cxt");
  write_cxt(dir / "a.cxt", t);
  CHECK(read_cxt(dir / "a.cxt") == t);
  CHECK(cxt_is_complex(dir / "a.cxt"));
  write_cxt(dir / "b.cxt", r);
  CHECK(!cxt_is_complex(dir / "b.cxt"));
}

TEST_CASE("cxt readers reject malformed containers") {
  const auto good = encode_cxt(random_tensor({2, 2}, 3), true);
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_cxt(bad), DataError);
  bad = good;
  bad[4] = 7;
  CHECK_THROWS_AS(decode_cxt(bad), DataError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(decode_cxt(bad), DataError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_cxt(bad), DataError);
  CHECK_THROWS_AS(decode_cxt({'C', 'X'}), DataError);
  CHECK_THROWS_AS(read_cxt(temp_dir("nofile") / "missing.cxt"), DataError);
}

TEST_CASE("checkpoint round trip and validation") {
  TrainConfig cfg;
  cfg.model.unrolled.iterations = 2;
  cfg.model.unrolled.feature_maps = 3;
  cfg.model.unrolled.activation = ActivationKind::ModRelu;
  const auto params = cfg.model.init(1);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(dir, params, cfg);
  CHECK(fs::exists(dir / "iter0.conv0.weight.X.cxt"));
  CHECK(fs::exists(dir / "iter0.conv0.weight.Y.cxt"));
  const auto manifest = read_text(dir / "manifest.txt");
  CHECK(manifest.find("kernel-X") != std::string::npos);
  CHECK(manifest.find("kernel-Y") != std::string::npos);
  CHECK(manifest.find("digest " + config_digest(cfg)) != std::string::npos);

  const auto ck = load_checkpoint(dir);
  CHECK(ck.digest == config_digest(cfg));
  CHECK(format_config(ck.config) == format_config(cfg));
  for (const auto& [name, p] : params) {
    CHECK(ck.params.at(name).value == f32_rounded(p.value));
    CHECK(ck.params.at(name).kind == p.kind);
    CHECK(ck.params.at(name).complex == p.complex);
  }

  SUBCASE("missing tensor file") {
    fs::remove(dir / "iter1.step.cxt");
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
  SUBCASE("shape mismatch") {
    write_cxt(dir / "iter1.step.cxt", ComplexTensor({2}), false);
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
  SUBCASE("digest mismatch") {
    auto other = cfg;
    other.adam.lr = 0.5;
    write_text(dir / "config.txt", format_config(other));
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir / "manifest.txt");
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  }
}

TEST_CASE("real checkpoints store real kernels only") {
  TrainConfig cfg;
  cfg.model.unrolled.iterations = 1;
  cfg.model.unrolled.feature_maps = 2;
  cfg.model.unrolled.conv_mode = ConvMode::Real;
  cfg.model.unrolled.activation = ActivationKind::Relu2Ch;
  const auto dir = temp_dir("ckpt_real");
  save_checkpoint(dir, cfg.model.init(0), cfg);
  CHECK(fs::exists(dir / "iter0.conv0.weight.X.cxt"));
  CHECK(!fs::exists(dir / "iter0.conv0.weight.Y.cxt"));
  CHECK(!cxt_is_complex(dir / "iter0.conv0.bias.cxt"));
  CHECK(load_checkpoint(dir).params.size() == cfg.model.init(0).size());
}

TEST_CASE("split counts") {
  const auto s = split_counts(250);
  CHECK(s.train == 200);
  CHECK(s.val == 25);
  CHECK(s.test == 25);
  const auto z = split_counts(0);
  CHECK(z.train + z.val + z.test == 0);
  for (std::size_t n = 0; n < 40; ++n) {
    const auto c = split_counts(n);
    CHECK(c.train + c.val + c.test == n);
  }
}

TEST_CASE("dataset write, load, verify and determinism") {
  const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
  const auto spec = tiny_dataset(10);
  write_dataset(a, synthesize_dataset(spec));
  write_dataset(b, synthesize_dataset(spec));
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    CHECK_MESSAGE(file_bytes(entry.path()) == file_bytes(b / rel), rel.string());
  }
  CHECK(verify_dataset(a).empty());
  const auto data = load_dataset(a);
  CHECK(data.train.size() == 8);
  CHECK(data.val.size() == 1);
  CHECK(data.test.size() == 1);
  CHECK(read_manifest(a, "train").front() == "ex00000");
  const auto ex = read_example(a / "ex00000");
  CHECK(ex.seed == derive_seed(spec.example.seed, 0));
  CHECK(ex.image.shape() == Shape{16, 16});

  SUBCASE("tampered k-space is reported") {
    auto k = read_cxt(a / "ex00003" / "kspace.cxt");
    k.re()[0] += 1.0;
    write_cxt(a / "ex00003" / "kspace.cxt", k, true);
    CHECK(!verify_dataset(a).empty());
  }
  SUBCASE("broken calibration is reported") {
    auto m = read_cxt(a / "ex00002" / "mask.cxt");
    m.re()[8 * 16 + 8] = 0.0;
    write_cxt(a / "ex00002" / "mask.cxt", m, false);
    CHECK(!verify_dataset(a).empty());
  }
  SUBCASE("unlisted example directory is reported") {
    fs::create_directories(a / "ex00099");
    CHECK(!verify_dataset(a).empty());
  }
  SUBCASE("missing manifest") {
    fs::remove(a / "val.txt");
    CHECK_THROWS_AS(load_dataset(a), DataError);
    CHECK(!verify_dataset(a).empty());
  }
}

TEST_CASE("empty dataset has valid empty manifests") {
  const auto d = temp_dir("ds_empty");
  write_dataset(d, synthesize_dataset(tiny_dataset(0)));
  for (const char* s : {"train.txt", "val.txt", "test.txt"}) CHECK(fs::exists(d / s));
  CHECK(verify_dataset(d).empty());
  CHECK(load_dataset(d).train.empty());
}

TEST_CASE("csv formats") {
  CHECK(loss_log_csv({0.5, 0.25}) == "step,loss\n0,0.5\n1,0.25\n");
  MetricReport r;
  r.method = "m";
  r.config_digest = "abc";
  r.rows.push_back(ExampleMetrics{0, 7, 4.0, 0.1, 20.0, 0.9, 0.05});
  const auto csv = metric_report_csv(r);
  CHECK(csv.rfind("example,seed,acceleration,nrmse,psnr,ssim,phase_rmse,method,config_digest\n", 0) == 0);
  CHECK(csv.find("\n0,7,4,0.1,20,0.9,0.05,m,abc\n") != std::string::npos);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(csv.find("\nstd,") != std::string::npos);
}

TEST_CASE("png encoding") {
  GrayImage img{3, 2, {0, 64, 128, 192, 255, 7}};
  const auto png = encode_png(img);
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(png.size() > 8 + 25);
  CHECK(std::memcmp(png.data(), sig, 8) == 0);
  CHECK(std::memcmp(png.data() + 12, "IHDR", 4) == 0);
  CHECK(be32(png.data() + 16) == 3);
  CHECK(be32(png.data() + 20) == 2);
  CHECK(png[24] == 8);  // bit depth
  CHECK(png[25] == 0);  // grayscale
  // walk the chunks, checking CRCs and inflating IDAT
  std::size_t pos = 8;
  std::vector<std::uint8_t> idat;
  bool saw_end = false;
  while (pos + 12 <= png.size()) {
    const std::uint32_t len = be32(png.data() + pos);
    const std::uint8_t* type = png.data() + pos + 4;
    const std::uint32_t crc = static_cast<std::uint32_t>(::crc32(0, type, len + 4));
    CHECK(crc == be32(png.data() + pos + 8 + len));
    if (std::memcmp(type, "IDAT", 4) == 0) idat.insert(idat.end(), type + 4, type + 4 + len);
    if (std::memcmp(type, "IEND", 4) == 0) saw_end = true;
    pos += 12 + len;
  }
  CHECK(saw_end);
  std::vector<std::uint8_t> raw(2 * (1 + 3));
  uLongf raw_len = raw.size();
  REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), idat.size()) == Z_OK);
  CHECK(raw_len == raw.size());
  CHECK(raw == std::vector<std::uint8_t>{0, 0, 64, 128, 0, 192, 255, 7});
  CHECK_THROWS(encode_png(GrayImage{3, 2, {1, 2}}));
}

TEST_CASE("grayscale mappings") {
  const auto t = ComplexTensor({2, 2}, {0.0, 1.0, -1.0, 0.0}, {0.0, 0.0, 0.0, -2.0});
  const auto mag = magnitude_gray(t, 1.0);
  CHECK(mag.pixels == std::vector<std::uint8_t>{0, 255, 255, 255});
  const auto ph = phase_gray(t);
  CHECK(ph.pixels[1] == 128);  // phase 0
  CHECK(ph.pixels[2] == 255);  // phase pi
  CHECK(ph.pixels[3] == 64);   // phase -pi/2
  CHECK(magnitude_percentile(t, 1.0) == 2.0);
  CHECK(magnitude_percentile(t, 0.0) == 0.0);
  const auto d = difference_gray(t, t, 40.0, 1.0);
  CHECK(d.pixels == std::vector<std::uint8_t>(4, 0));
  const auto wide = hconcat({mag, ph});
  CHECK(wide.width == 4);
  CHECK(wide.height == 2);
  CHECK(wide.pixels[2] == ph.pixels[0]);
  CHECK(wide.pixels[4] == mag.pixels[2]);
  CHECK_THROWS(hconcat({mag, GrayImage{1, 1, {0}}}));
}
