#include "cvnn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "cvnn/gradcheck_suite.hpp"

namespace cvnn {

void cmd_phantom(const PhantomArgs& args) {
  if (args.out.empty()) throw UsageError("phantom: --out is required");
  if (args.accel_max != 0.0 && args.accel_max < args.accel) {
    throw UsageError("phantom: --accel-max must be >= --accel");
  }
  DatasetSpec spec;
  spec.n = args.n;
  spec.example.size = args.size;
  spec.example.coils = args.coils;
  spec.example.seed = args.seed;
  spec.example.accel_min = args.accel;
  spec.example.accel_max = args.accel_max == 0.0 ? args.accel : args.accel_max;
  spec.example.calib = args.calib;
  spec.example.density_power = args.density_power;
  spec.example.phase_detail = args.phase_detail;
  spec.example.snr_db = args.snr_db;
  write_dataset(args.out, synthesize_dataset(spec));
}

namespace {

std::string step_dir(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu", step);
  return buf;
}

}  // namespace

TrainResult run_training(const TrainConfig& config, std::ostream& log) {
  if (config.out.empty()) throw UsageError("train: config key 'out' is required");
  if (config.data.empty()) throw UsageError("train: config key 'data' is required");
  const fs::path out = config.out;
  const auto data = load_dataset(config.data);
  fs::create_directories(out);
  write_text(out / "config.txt", format_config(config));
  log << "train: " << data.train.size() << " train / " << data.val.size() << " val / " << data.test.size()
      << " test examples, " << config.steps << " steps\n";
  auto result = train(config, data, [&](std::size_t step, const ModelParams& params) {
    save_checkpoint(out / "checkpoints" / step_dir(step), params, config);
    log << "train: checkpoint at step " << step << '\n';
  });
  save_checkpoint(out / "best", result.best, config);
  write_text(out / "loss.csv", loss_log_csv(result.loss_log));
  write_text(out / "metrics.csv", metric_report_csv(result.test_report));
  if (!result.test_report.rows.empty()) {
    const auto m = result.test_report.mean();
    log << "train: best step " << result.best_step << ", test nrmse " << m.nrmse << ", psnr " << m.psnr
        << ", ssim " << m.ssim << '\n';
  }
  return result;
}

TrainResult cmd_train(const fs::path& config_path, std::ostream& log) {
  if (!fs::exists(config_path)) throw DataError("train: config file " + config_path.string() + " not found");
  return run_training(parse_config(read_text(config_path)), log);
}

double select_cs_lambda(const std::vector<AcquisitionExample>& examples, const CsConfig& base) {
  if (examples.empty()) return base.lambda;
  double best = base.lambda;
  double best_err = std::numeric_limits<double>::infinity();
  for (const double lambda : cs_lambda_grid()) {
    CsConfig c = base;
    c.lambda = lambda;
    const auto report = evaluate(examples, [&](const AcquisitionExample& ex) {
      return ista_wavelet_recon(ex.kspace, ex.maps, ex.mask, c).image;
    });
    const double err = report.mean().nrmse;
    if (err < best_err) {
      best_err = err;
      best = lambda;
    }
  }
  return best;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "method,conv,activation,cell_activation,width,channels,depth,params,status,nrmse,psnr,ssim,"
         "phase_rmse,note\n";
  for (const auto& r : rows) {
    const bool ok = r.status == "ok";
    const auto num = [&](double v) { return ok ? format_double(v) : std::string(); };
    out << r.method << ',' << r.conv << ',' << r.activation << ',' << r.cell_activation << ',' << r.width << ','
        << r.channels << ',' << r.depth << ',' << r.params << ',' << r.status << ',' << num(r.mean.nrmse) << ','
        << num(r.mean.psnr) << ',' << num(r.mean.ssim) << ',' << num(r.mean.phase_rmse) << ',' << r.note << '\n';
  }
  return out.str();
}

namespace {

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

struct Cell {
  ModelSpec spec;
  ModelParams params;
  bool ok = false;
};

ModelSpec make_spec(ModelKind kind, ConvMode mode, ActivationKind act, std::size_t width, std::size_t depth) {
  ModelSpec s;
  s.kind = kind;
  s.unrolled.conv_mode = s.unet.conv_mode = mode;
  s.unrolled.activation = s.unet.activation = act;
  s.unrolled.feature_maps = s.unet.base_features = width;
  s.unrolled.iterations = depth;
  s.unet.levels = depth;
  return s;
}

}  // namespace

std::vector<CompareRow> cmd_compare(const CompareArgs& args, std::ostream& log) {
  if (args.out.empty()) throw UsageError("compare: --out is required");
  for (const auto& m : args.modes) parse_conv_mode(m);
  std::vector<ActivationKind> acts;
  for (const auto& a : args.activations) {
    const auto k = parse_activation(a);
    if (k == ActivationKind::Relu2Ch) throw UsageError("compare: --activations lists complex activations only");
    acts.push_back(k);
  }
  const auto data = load_dataset(args.data);
  if (data.test.empty()) throw DataError("compare: the test split is empty");
  fs::create_directories(args.out);

  std::vector<CompareRow> rows;
  std::map<std::string, Cell> cells;
  std::string first_real;
  std::string first_complex;

  for (const auto depth : args.depths) {
    for (const auto width : args.widths) {
      for (const auto& mode_name : args.modes) {
        const ConvMode mode = parse_conv_mode(mode_name);
        for (const auto act : acts) {
          CompareRow row;
          row.conv = mode_name;
          row.cell_activation = to_string(act);
          row.width = width;
          row.depth = depth;
          const ActivationKind used = mode == ConvMode::Real ? ActivationKind::Relu2Ch : act;
          row.activation = to_string(used);
          std::string label;
          try {
            const auto complex_spec = make_spec(args.model, ConvMode::Complex, ActivationKind::CRelu, width, depth);
            const auto parity = parity_feature_maps(complex_spec.network_template(), width);
            row.channels = mode == ConvMode::Real ? parity.real_channels : width;
            const auto spec = make_spec(args.model, mode, used, row.channels, depth);
            label = to_string(args.model) + "-" + mode_name + "-" + to_string(used) + "-w" + std::to_string(width) +
                    "-d" + std::to_string(depth);
            row.method = label;
            row.params = param_count(spec.init(0));
            if (mode == ConvMode::Real) {
              row.note = "real network shared by all activation cells; parity gap " +
                         format_double(parity.relative_gap());
            }
            auto it = cells.find(label);
            if (it == cells.end()) {
              TrainConfig tc;
              tc.model = spec;
              tc.adam.lr = args.lr;
              tc.batch = args.batch;
              tc.steps = args.steps;
              tc.seed = args.seed;
              tc.checkpoint_every = args.checkpoint_every;
              tc.data = args.data.string();
              tc.out = (args.out / "cells" / label).string();
              log << "compare: training " << label << " (" << row.params << " params)\n";
              Cell cell;
              cell.spec = spec;
              try {
                cell.params = run_training(tc, log).best;
                cell.ok = true;
              } catch (const std::exception& e) {
                row.status = "failed: " + csv_safe(e.what());
              }
              it = cells.emplace(label, std::move(cell)).first;
            }
            if (!it->second.ok && row.status == "ok") row.status = "failed: see first row of " + label;
            if (it->second.ok) {
              const auto& cell = it->second;
              row.mean = evaluate(data.test, [&](const AcquisitionExample& ex) {
                           return cell.spec.predict(cell.params, ex.kspace, ex.maps, ex.mask);
                         }).mean();
              if (mode == ConvMode::Real && first_real.empty()) first_real = label;
              // panels prefer the crelu cell
              if (mode == ConvMode::Complex &&
                  (first_complex.empty() ||
                   (act == ActivationKind::CRelu && cells.at(first_complex).spec.unrolled.activation != act))) {
                first_complex = label;
              }
            }
          } catch (const std::exception& e) {
            row.status = "failed: " + csv_safe(e.what());
            if (row.method.empty()) row.method = to_string(args.model) + "-" + mode_name + "-" + to_string(used);
          }
          rows.push_back(row);
        }
      }
    }
  }

  CompareRow zf;
  zf.method = "zero-filled";
  zf.conv = zf.activation = zf.cell_activation = "-";
  zf.mean = evaluate(data.test, zero_filled).mean();
  rows.push_back(zf);

  CsConfig cs;
  cs.iterations = args.cs_iterations;
  CompareRow csrow;
  csrow.method = "cs-wavelet";
  csrow.conv = csrow.activation = csrow.cell_activation = "-";
  try {
    cs.lambda = select_cs_lambda(data.val, cs);
    csrow.note = "lambda=" + format_double(cs.lambda) + " (validation grid)";
    csrow.mean = evaluate(data.test, [&](const AcquisitionExample& ex) {
                   return ista_wavelet_recon(ex.kspace, ex.maps, ex.mask, cs).image;
                 }).mean();
  } catch (const std::exception& e) {
    csrow.status = "failed: " + csv_safe(e.what());
  }
  rows.push_back(csrow);
  write_text(args.out / "compare.csv", compare_csv(rows));

  // Panels: input | real | complex | CS | truth
  const fs::path panel_dir = args.out / "panels";
  const std::size_t count = std::min(args.panels, data.test.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& ex = data.test[i];
    std::vector<ComplexTensor> images = {zero_filled(ex)};
    for (const auto* label : {&first_real, &first_complex}) {
      if (label->empty()) continue;
      const auto& cell = cells.at(*label);
      images.push_back(cell.spec.predict(cell.params, ex.kspace, ex.maps, ex.mask));
    }
    if (csrow.status == "ok") images.push_back(ista_wavelet_recon(ex.kspace, ex.maps, ex.mask, cs).image);
    const double window = magnitude_percentile(ex.image, 0.995);
    std::vector<GrayImage> mag, phs, diff;
    for (const auto& im : images) {
      mag.push_back(magnitude_gray(im, window));
      phs.push_back(phase_gray(im));
      diff.push_back(difference_gray(im, ex.image, args.diff_scale, window));
    }
    mag.push_back(magnitude_gray(ex.image, window));
    phs.push_back(phase_gray(ex.image));
    const std::string stem = "test" + std::to_string(i);
    write_png(panel_dir / (stem + "_magnitude.png"), hconcat(mag));
    write_png(panel_dir / (stem + "_phase.png"), hconcat(phs));
    write_png(panel_dir / (stem + "_difference.png"), hconcat(diff));
  }
  return rows;
}

double cmd_gradcheck(std::ostream& out, std::uint64_t seed) {
  std::map<std::string, double> worst;
  double overall = 0.0;
  for (const auto& c : run_gradcheck_suite(seed)) {
    char line[160];
    std::snprintf(line, sizeof line, "%-32s %-10s %.3e\n", c.name.c_str(), c.kind.c_str(), c.max_relative_error);
    out << line;
    worst[c.kind] = std::max(worst[c.kind], c.max_relative_error);
    overall = std::max(overall, c.max_relative_error);
  }
  out << "worst per kind:\n";
  for (const auto& [kind, err] : worst) {
    char line[96];
    std::snprintf(line, sizeof line, "  %-10s %.3e\n", kind.c_str(), err);
    out << line;
  }
  return overall;
}

std::vector<std::string> cmd_verify(const fs::path& data) { return verify_dataset(data); }

MetricReport cmd_recon(const ReconArgs& args) {
  if (args.out.empty()) throw UsageError("recon: --out is required");
  const auto ex = read_example(args.example);
  ComplexTensor pred;
  std::string method = args.method;
  std::string digest;
  if (args.method == "model") {
    if (args.checkpoint.empty()) throw UsageError("recon: --checkpoint is required for method=model");
    const auto ck = load_checkpoint(args.checkpoint);
    pred = ck.config.model.predict(ck.params, ex.kspace, ex.maps, ex.mask);
    method = to_string(ck.config.model.kind) + "-" + to_string(ck.config.model.conv_mode());
    digest = ck.digest;
  } else if (args.method == "zero-filled") {
    pred = zero_filled(ex);
  } else if (args.method == "cs") {
    CsConfig cs;
    cs.lambda = args.lambda;
    pred = ista_wavelet_recon(ex.kspace, ex.maps, ex.mask, cs).image;
  } else if (args.method == "truth") {
    pred = ex.image;
  } else {
    throw UsageError("recon: unknown method '" + args.method + "' (expected model, zero-filled, cs or truth)");
  }
  fs::create_directories(args.out);
  write_cxt(args.out / "recon.cxt", pred, true);
  write_png(args.out / "magnitude.png", magnitude_gray(pred, magnitude_percentile(pred, 0.995)));
  write_png(args.out / "phase.png", phase_gray(pred));
  const auto report = evaluate({ex}, [&](const AcquisitionExample&) { return pred; }, method, digest);
  write_text(args.out / "metrics.csv", metric_report_csv(report));
  return report;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::vector<T> split_numbers(const std::string& s, const char* flag) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(static_cast<T>(std::stoull(item)));
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not a count");
    }
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complex-valued CNN toolkit for undersampled MRI reconstruction", "cvnn"};
  app.require_subcommand(1);

  PhantomArgs ph;
  std::string ph_out;
  auto* phantom = app.add_subcommand("phantom", "Synthesize a phantom dataset");
  phantom->add_option("--n", ph.n, "Number of examples")->capture_default_str();
  phantom->add_option("--size", ph.size, "Image size (power of two)")->capture_default_str();
  phantom->add_option("--coils", ph.coils, "Receive coils")->capture_default_str();
  phantom->add_option("--seed", ph.seed, "Base seed")->capture_default_str();
  phantom->add_option("--accel", ph.accel, "Target acceleration")->capture_default_str();
  phantom->add_option("--accel-max", ph.accel_max, "Upper acceleration for a random range");
  phantom->add_option("--calib", ph.calib, "Calibration square size")->capture_default_str();
  phantom->add_option("--density-power", ph.density_power, "Variable-density exponent")->capture_default_str();
  phantom->add_option("--phase-detail", ph.phase_detail, "Number of phase bumps")->capture_default_str();
  phantom->add_option("--snr", ph.snr_db, "k-space SNR in dB")->capture_default_str();
  phantom->add_option("--out", ph_out, "Output directory")->required();

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train a network from a key=value config");
  train_cmd->add_option("--config", train_config, "Config file")->required();

  CompareArgs cmp;
  std::string cmp_data, cmp_out, cmp_model = "unrolled", cmp_modes = "real,complex",
                                 cmp_acts = "crelu,modrelu,zrelu,cardioid", cmp_widths = "16", cmp_depths = "2";
  auto* compare = app.add_subcommand("compare", "Real vs complex sweep at parameter parity");
  compare->add_option("--data", cmp_data, "Dataset directory")->required();
  compare->add_option("--out", cmp_out, "Output directory")->required();
  compare->add_option("--model", cmp_model, "unrolled or unet")->capture_default_str();
  compare->add_option("--modes", cmp_modes, "Comma-separated conv modes")->capture_default_str();
  compare->add_option("--activations", cmp_acts, "Comma-separated complex activations")->capture_default_str();
  compare->add_option("--widths", cmp_widths, "Comma-separated complex feature maps")->capture_default_str();
  compare->add_option("--depths", cmp_depths, "Comma-separated iterations (U-Net: levels)")->capture_default_str();
  compare->add_option("--steps", cmp.steps, "Training steps per cell")->capture_default_str();
  compare->add_option("--batch", cmp.batch, "Batch size")->capture_default_str();
  compare->add_option("--seed", cmp.seed, "Training seed")->capture_default_str();
  compare->add_option("--lr", cmp.lr, "Adam learning rate")->capture_default_str();
  compare->add_option("--diff-scale", cmp.diff_scale, "Difference map gain")->capture_default_str();
  compare->add_option("--panels", cmp.panels, "Test examples rendered as PNG panels")->capture_default_str();
  compare->add_option("--cs-iterations", cmp.cs_iterations, "ISTA iterations of the CS baseline")
      ->capture_default_str();

  std::uint64_t gc_seed = 7;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck_cmd->add_option("--seed", gc_seed, "Seed of the random instances")->capture_default_str();

  std::string verify_data;
  auto* verify = app.add_subcommand("verify", "Audit every dataset invariant");
  verify->add_option("--data", verify_data, "Dataset directory")->required();

  ReconArgs rc;
  std::string rc_ck, rc_ex, rc_out;
  auto* recon = app.add_subcommand("recon", "Reconstruct one example and write PNGs and metrics");
  recon->add_option("--checkpoint", rc_ck, "Checkpoint directory");
  recon->add_option("--example", rc_ex, "Example directory")->required();
  recon->add_option("--out", rc_out, "Output directory")->required();
  recon->add_option("--method", rc.method, "model, zero-filled, cs or truth")->capture_default_str();
  recon->add_option("--lambda", rc.lambda, "CS regularisation weight")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (*phantom) {
      ph.out = ph_out;
      cmd_phantom(ph);
      out << "wrote " << ph.n << " examples to " << ph_out << '\n';
    } else if (*train_cmd) {
      cmd_train(train_config, err);
    } else if (*compare) {
      cmp.data = cmp_data;
      cmp.out = cmp_out;
      cmp.model = parse_model_kind(cmp_model);
      cmp.modes = split_list(cmp_modes);
      cmp.activations = split_list(cmp_acts);
      cmp.widths = split_numbers<std::size_t>(cmp_widths, "--widths");
      cmp.depths = split_numbers<std::size_t>(cmp_depths, "--depths");
      const auto rows = cmd_compare(cmp, err);
      out << compare_csv(rows);
    } else if (*gradcheck_cmd) {
      const double worst = cmd_gradcheck(out, gc_seed);
      if (worst > 1e-4) {
        err << "gradcheck: worst relative error " << worst << " exceeds 1e-4\n";
        return 3;
      }
    } else if (*verify) {
      const auto problems = cmd_verify(verify_data);
      for (const auto& p : problems) err << p << '\n';
      if (!problems.empty()) {
        err << problems.size() << " violation(s)\n";
        return 2;
      }
      out << "ok: no violations\n";
    } else if (*recon) {
      rc.checkpoint = rc_ck;
      rc.example = rc_ex;
      rc.out = rc_out;
      const auto report = cmd_recon(rc);
      const auto& m = report.rows.at(0);
      out << "nrmse " << format_double(m.nrmse) << " psnr " << format_double(m.psnr) << " ssim "
          << format_double(m.ssim) << '\n';
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace cvnn
