#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "cvnn/cli.hpp"
#include "helpers.hpp"

using namespace cvnn;
using testutil::temp_dir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cvnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Byte comparison of two trees; files named `skip` are compared for presence only.
bool same_tree(const fs::path& a, const fs::path& b, const std::string& skip = {}) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (e.path().filename() == skip) {
      if (!fs::exists(b / rel)) return false;
      ++n;
      continue;
    }
    if (!fs::exists(b / rel) || bytes_of(e.path()) != bytes_of(b / rel)) return false;
    ++n;
  }
  std::size_t m = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) m += e.is_regular_file() ? 1 : 0;
  return n == m;
}

std::string small_phantoms(const fs::path& dir, const std::string& n = "10") {
  const auto data = (dir / "data").string();
  const auto r = cli({"phantom", "--n", n, "--size", "16", "--coils", "2", "--calib", "4", "--seed", "3", "--out", data});
  REQUIRE(r.code == 0);
  return data;
}

std::string write_config(const fs::path& path, const std::string& body) {
  std::ofstream(path) << body;
  return path.string();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"phantom"}).code == 1);
  CHECK(cli({"phantom", "--n", "x", "--out", "o"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("phantom is byte-identical on re-run and verifies clean") {
  const auto dir = temp_dir("cli_phantom");
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  for (const auto& out : {a, b}) {
    CHECK(cli({"phantom", "--n", "1", "--size", "64", "--coils", "8", "--seed", "1", "--out", out}).code == 0);
  }
  CHECK(same_tree(a, b));
  const auto v = cli({"verify", "--data", a});
  CHECK(v.code == 0);
  CHECK(v.out.find("no violations") != std::string::npos);

  const auto e = (dir / "empty").string();
  CHECK(cli({"phantom", "--n", "0", "--out", e}).code == 0);
  CHECK(cli({"verify", "--data", e}).code == 0);
}

TEST_CASE("verify lists violations and exits with 2") {
  const auto dir = temp_dir("cli_verify");
  const auto data = small_phantoms(dir, "4");
  auto k = read_cxt(fs::path(data) / "ex00001" / "kspace.cxt");
  k.im()[3] += 0.5;
  write_cxt(fs::path(data) / "ex00001" / "kspace.cxt", k, true);
  const auto r = cli({"verify", "--data", data});
  CHECK(r.code == 2);
  CHECK(r.err.find("ex00001") != std::string::npos);
  CHECK(cli({"verify", "--data", (dir / "nowhere").string()}).code == 2);
}

TEST_CASE("train: config errors and outputs") {
  const auto dir = temp_dir("cli_train");
  const auto data = small_phantoms(dir);
  CHECK(cli({"train", "--config", write_config(dir / "bad.cfg", "colour=red\n")}).code == 1);
  const auto bad = cli({"train", "--config", write_config(dir / "mode.cfg", "conv=real\nactivation=modrelu\n")});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("complex activations require conv=complex") != std::string::npos);
  const auto missing = write_config(dir / "missing.cfg", "data=" + (dir / "nodata").string() + "\nout=" +
                                                             (dir / "o").string() + "\n");
  CHECK(cli({"train", "--config", missing}).code == 2);
  CHECK(cli({"train", "--config", (dir / "absent.cfg").string()}).code == 2);

  const std::string body = "model=unrolled\nconv=complex\nactivation=crelu\niterations=1\nfeature_maps=2\n"
                           "steps=4\ncheckpoint_every=2\nbatch=2\nseed=1\ndata=" + data + "\n";
  const auto r1 = cli({"train", "--config", write_config(dir / "a.cfg", body + "out=" + (dir / "run_a").string() + "\n")});
  REQUIRE(r1.code == 0);
  const auto r2 = cli({"train", "--config", write_config(dir / "b.cfg", body + "out=" + (dir / "run_b").string() + "\n")});
  REQUIRE(r2.code == 0);
  for (const char* f : {"config.txt", "loss.csv", "metrics.csv", "best/manifest.txt",
                        "checkpoints/step_000002/manifest.txt", "checkpoints/step_000004/manifest.txt"}) {
    CHECK_MESSAGE(fs::exists(dir / "run_a" / f), f);
  }
  // config.txt records the out path, so it differs by design
  CHECK(same_tree(dir / "run_a" / "checkpoints", dir / "run_b" / "checkpoints", "config.txt"));
  CHECK(same_tree(dir / "run_a" / "best", dir / "run_b" / "best", "config.txt"));
  fs::remove_all(dir / "run_a");
  REQUIRE(cli({"train", "--config", (dir / "a.cfg").string()}).code == 0);
  const auto first = dir / "run_a_first";
  fs::rename(dir / "run_a", first);
  REQUIRE(cli({"train", "--config", (dir / "a.cfg").string()}).code == 0);
  CHECK(same_tree(first, dir / "run_a"));
  CHECK(bytes_of(dir / "run_a" / "loss.csv") == bytes_of(dir / "run_b" / "loss.csv"));
  CHECK(bytes_of(dir / "run_a" / "metrics.csv") == bytes_of(dir / "run_b" / "metrics.csv"));

  SUBCASE("steps=0 writes the initialisation") {
    const auto r = cli({"train", "--config", write_config(dir / "z.cfg", body + "steps=0\nout=" + (dir / "run_z").string() + "\n")});
    REQUIRE(r.code == 0);
    const auto ck = load_checkpoint(dir / "run_z" / "best");
    const auto init = ck.config.model.init(derive_seed(1, 1));
    for (const auto& [name, p] : init) {
      for (std::size_t i = 0; i < p.value.numel(); ++i) {
        CHECK(ck.params.at(name).value.re()[i] == static_cast<float>(p.value.re()[i]));
        CHECK(ck.params.at(name).value.im()[i] == static_cast<float>(p.value.im()[i]));
      }
    }
  }

  SUBCASE("recon from the checkpoint and of the truth") {
    const auto ex = (fs::path(data) / "ex00009").string();
    const auto m = cli({"recon", "--checkpoint", (dir / "run_a" / "best").string(), "--example", ex, "--out",
                        (dir / "rec").string()});
    CHECK(m.code == 0);
    for (const char* f : {"magnitude.png", "phase.png", "metrics.csv"}) CHECK(fs::exists(dir / "rec" / f));
    const auto t = cli({"recon", "--method", "truth", "--example", ex, "--out", (dir / "truth").string()});
    CHECK(t.code == 0);
    CHECK(t.out.find("nrmse 0 ") != std::string::npos);
    CHECK(t.out.find("ssim 1") != std::string::npos);
    CHECK(cli({"recon", "--method", "model", "--example", ex, "--out", (dir / "x").string()}).code == 1);
    CHECK(cli({"recon", "--method", "magic", "--example", ex, "--out", (dir / "x").string()}).code == 1);
    CHECK(cli({"recon", "--method", "zero-filled", "--example", ex, "--out", (dir / "zf").string()}).code == 0);
  }
}

TEST_CASE("compare: row count, failed cells, parity and composition with train") {
  const auto dir = temp_dir("cli_compare");
  const auto data = small_phantoms(dir);
  const auto r = cli({"compare", "--data", data, "--out", (dir / "cmp").string(), "--modes", "real,complex",
                      "--activations", "crelu,cardioid", "--widths", "2,3", "--depths", "1", "--steps", "3",
                      "--panels", "1", "--cs-iterations", "10"});
  REQUIRE(r.code == 0);
  const auto csv = bytes_of(dir / "cmp" / "compare.csv");
  const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == 1 + 2 * 2 * 2 * 1 + 2);
  CHECK(csv.find("\nzero-filled,") != std::string::npos);
  CHECK(csv.find("\ncs-wavelet,") != std::string::npos);
  CHECK(csv.find("failed") == std::string::npos);
  CHECK(fs::exists(dir / "cmp" / "panels" / "test0_magnitude.png"));
  CHECK(fs::exists(dir / "cmp" / "panels" / "test0_phase.png"));
  CHECK(fs::exists(dir / "cmp" / "panels" / "test0_difference.png"));

  CompareArgs args;
  args.data = data;
  args.out = dir / "single";
  args.modes = {"complex"};
  args.activations = {"zrelu"};
  args.widths = {2};
  args.depths = {1};
  args.steps = 3;
  args.panels = 0;
  args.cs_iterations = 5;
  std::ostringstream log;
  const auto rows = cmd_compare(args, log);
  REQUIRE(rows.size() == 3);
  TrainConfig tc;
  tc.model.unrolled.iterations = 1;
  tc.model.unrolled.feature_maps = 2;
  tc.model.unrolled.activation = ActivationKind::ZRelu;
  tc.steps = 3;
  tc.data = data;
  tc.out = (dir / "single_train").string();
  const auto trained = run_training(tc, log);
  const auto m = trained.test_report.mean();
  CHECK(rows[0].mean.nrmse == m.nrmse);
  CHECK(rows[0].mean.psnr == m.psnr);
  CHECK(rows[0].mean.ssim == m.ssim);

  // a cell that cannot run is recorded and the sweep continues
  args.out = dir / "failing";
  args.model = ModelKind::UNet;
  args.depths = {6};  // 16 px images are not divisible by 2^5
  const auto failed = cmd_compare(args, log);
  REQUIRE(failed.size() == 3);
  CHECK(failed[0].status.rfind("failed", 0) == 0);
  CHECK(failed[1].status == "ok");

  // real rows use the parity width
  const auto pos = csv.find("\nunrolled-real-relu-w3-d1,");
  REQUIRE(pos != std::string::npos);
  CHECK(csv.find(",3,4,1,", pos) != std::string::npos);
}

TEST_CASE("gradcheck command passes") {
  const auto r = cli({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("worst per kind") != std::string::npos);
  CHECK(r.out.find("activation") != std::string::npos);
}
