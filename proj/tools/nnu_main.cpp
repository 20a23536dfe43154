// nnu: reactor perturbation synthesis, training and evaluation toolkit.
//
// Subcommands: gen-freq, gen-time, train-cnn, train-lstm, eval, grid-lambda,
// gradcheck, route-demo. Every subcommand honors --seed; identical
// invocations produce byte-identical file outputs. Exit codes: 0 success,
// 1 runtime/data error, 2 usage error.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nnu/checkpoint.hpp"
#include "nnu/dataset_io.hpp"
#include "nnu/gradcheck.hpp"
#include "nnu/harness.hpp"

namespace fs = std::filesystem;
using namespace nnu;

namespace {

struct Options {
  std::uint64_t seed = 42;
  std::string out;
  std::string data;
  std::size_t count = 512;
  double fraction = 0.20;
  std::vector<double> freqs = {0.1, 1.0, 10.0};
  bool combined = false;
  std::string scenarios = "1..13";
  std::string snr = "inf";
  std::string split = "60/15/25";
  std::size_t epochs = 0;  // 0 = per-command default
  std::size_t batch_size = 32;
  double lambda1 = 0.3;
  double lambda2 = 0.7;
  int precision = 32;
  std::size_t runs = 10;
  std::size_t width_scale = 1;
  std::size_t class_units = 0;  // 0 = auto (7 when --combined, else 3)
  std::size_t windows_per_detector = 10;
  double input_gain = 100.0;
  std::string grid = "0.1/0.9,0.3/0.7,0.5/0.5,0.7/0.3,0.9/0.1";
  std::string checkpoint;
  std::string cnn_checkpoint, lstm_checkpoint;
  std::string freq_sample, time_sample;
};

double parse_snr(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "10") return 10.0;
  if (s == "5") return 5.0;
  throw CLI::ValidationError("--snr", "must be one of inf|10|5");
}

std::pair<int, int> parse_scenarios(const std::string& s) {
  // "a..b" or single "a"
  const auto dots = s.find("..");
  int lo, hi;
  if (dots == std::string::npos) {
    lo = hi = std::stoi(s);
  } else {
    lo = std::stoi(s.substr(0, dots));
    hi = std::stoi(s.substr(dots + 2));
  }
  if (lo < 1 || hi > 13 || lo > hi)
    throw CLI::ValidationError("--scenarios", "range must lie within 1..13");
  return {lo, hi};
}

std::array<double, 3> parse_split(const std::string& s) {
  double a, b, c;
  if (std::sscanf(s.c_str(), "%lf/%lf/%lf", &a, &b, &c) != 3)
    throw CLI::ValidationError("--split", "expected a/b/c");
  return {a / 100.0, b / 100.0, c / 100.0};
}

TrainConfig make_train_config(const Options& o, std::size_t default_epochs) {
  TrainConfig cfg;
  cfg.seed = o.seed;
  const auto fr = parse_split(o.split);
  cfg.train_frac = fr[0];
  cfg.valid_frac = fr[1];
  cfg.test_frac = fr[2];
  cfg.batch_size = o.batch_size;
  cfg.epochs = o.epochs ? o.epochs : default_epochs;
  cfg.lambda1 = o.lambda1;
  cfg.lambda2 = o.lambda2;
  cfg.sensor_fraction = o.fraction;
  cfg.snr_db = parse_snr(o.snr);
  cfg.runs = o.runs;
  cfg.precision = o.precision;
  cfg.width_scale = o.width_scale;
  cfg.validate();
  return cfg;
}

FreqGenConfig make_gen_config(const Options& o) {
  FreqGenConfig gen;
  gen.count_per_type = o.count;
  gen.fraction = o.fraction;
  gen.frequencies = o.freqs;
  gen.combined = o.combined;
  return gen;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

std::uint64_t run_seed_of(std::uint64_t base, std::size_t run) {
  return Rng(base).derive(1000 + run).origin();
}

// ---------------------------------------------------------------------------
// gen-freq
// ---------------------------------------------------------------------------
template <typename T>
int cmd_gen_freq(const Options& o) {
  const CoreGeometry geom;
  auto ds = gen_freq_dataset<T>(geom, make_gen_config(o), o.seed);
  write_freq_dataset(o.out, ds);
  std::printf("wrote %zu samples to %s\n", ds.size(), o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// gen-time
// ---------------------------------------------------------------------------
template <typename T>
int cmd_gen_time(const Options& o) {
  const auto [lo, hi] = parse_scenarios(o.scenarios);
  const double snr_db = parse_snr(o.snr);
  const auto layout = DetectorLayout::standard();
  fs::create_directories(fs::path(o.out) / "windows");
  std::ofstream manifest(fs::path(o.out) / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + o.out);
  manifest << "id\tscenario\tlabel\tdetector\tstart\tpath\trow\n";
  long next_id = 0;
  std::size_t skipped = 0;
  Rng noise_root = Rng(o.seed).derive(0xAE);
  for (int sid = lo; sid <= hi; ++sid) {
    const auto& spec = scenario_by_id(sid);
    auto matrix = detrend(synth_scenario(spec, layout, o.seed));
    if (!std::isinf(snr_db)) {
      // per-window AWGN happens at window level below
    }
    auto windows = make_windows<T>(matrix, spec);
    if (!std::isinf(snr_db)) {
      for (std::size_t w = 0; w < windows.size(); ++w) {
        Rng wr = noise_root.derive(std::uint64_t(sid) * 1000000 + w);
        windows[w].signal = add_awgn(windows[w].signal, snr_db, wr, &skipped);
      }
    }
    const std::size_t per_det = window_count(SignalMatrix::kSamples);
    char buf[64];
    for (std::size_t d = 0; d < matrix.detectors; ++d) {
      std::snprintf(buf, sizeof(buf), "windows/s%02d_d%02zu.nnt", sid, d);
      Tensor<T> batch({per_det, kWindowLen});
      for (std::size_t w = 0; w < per_det; ++w)
        std::copy(windows[d * per_det + w].signal.data(),
                  windows[d * per_det + w].signal.data() + kWindowLen,
                  batch.data() + w * kWindowLen);
      write_nnt((fs::path(o.out) / buf).string(), batch);
      for (std::size_t w = 0; w < per_det; ++w) {
        const auto& win = windows[d * per_det + w];
        manifest << next_id++ << '\t' << sid << '\t' << win.label[0]
                 << win.label[1] << win.label[2] << win.label[3] << '\t'
                 << layout.detectors[d].id << '\t' << win.start << '\t' << buf
                 << '\t' << w << '\n';
      }
    }
  }
  if (skipped)
    std::printf("warning: %zu zero-power windows left unchanged\n", skipped);
  std::printf("wrote %ld windows to %s\n", next_id, o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-cnn
// ---------------------------------------------------------------------------
template <typename T>
int cmd_train_cnn(const Options& o) {
  const CoreGeometry geom;
  TrainConfig cfg = make_train_config(o, 30);
  std::vector<VolumeSample<T>> ds;
  if (!o.data.empty())
    ds = load_freq_dataset<T>(o.data, geom);
  else
    ds = gen_freq_dataset<T>(geom, make_gen_config(o), o.seed);
  auto split = split_freq(ds, cfg);

  CnnConfig mc;
  mc.class_units = o.class_units ? o.class_units : (o.combined ? 7u : 3u);
  mc.width_scale = cfg.width_scale;

  fs::create_directories(o.out);
  MetricsReport report;
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    TrainConfig rcfg = cfg;
    rcfg.seed = run_seed_of(cfg.seed, run);
    Rng init(Rng(rcfg.seed).derive(7).origin());
    Cnn3dModel<T> model(mc, init);
    auto result = train_cnn(model, ds, split.train, split.valid, rcfg, geom);
    auto ev = evaluate_cnn(model, ds, split.test, geom);
    report.run_results.push_back(ev);
    char name[64];
    std::snprintf(name, sizeof(name), "history_run%02zu.csv", run);
    write_file((fs::path(o.out) / name).string(), history_csv(result.history));
    if (run == 0) {
      std::map<std::string, std::string> meta = {
          {"kind", "cnn"},
          {"class-units", std::to_string(mc.class_units)},
          {"width-scale", std::to_string(mc.width_scale)},
          {"precision", std::to_string(cfg.precision)},
          {"seed", std::to_string(cfg.seed)},
          {"epoch", std::to_string(result.best_epoch)},
          {"config-hash", config_hash(cfg)},
      };
      save_checkpoint((fs::path(o.out) / "checkpoint").string(),
                      model.named_params(), model.named_state(), meta);
    }
    std::printf("run %zu: acc %.2f%% mae %.4f mse %.4f\n", run, ev.exact_acc,
                ev.mae, ev.mse);
  }
  report.aggregate();
  const std::string table =
      report.table("3D-CNN", o.fraction * 100.0, o.split);
  write_file((fs::path(o.out) / "report.txt").string(), table);
  std::fputs(table.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// time-domain window assembly shared by train-lstm and eval
// ---------------------------------------------------------------------------
template <typename T>
struct TimeData {
  std::vector<WindowSample<T>> windows;
  std::vector<std::size_t> train, valid, test;
};

template <typename T>
TimeData<T> build_time_data(const Options& o) {
  const auto [lo, hi] = parse_scenarios(o.scenarios);
  const double snr_db = parse_snr(o.snr);
  const auto layout = DetectorLayout::standard();
  TimeData<T> data;
  const std::size_t per_det = window_count(SignalMatrix::kSamples);
  const std::size_t take = std::min(o.windows_per_detector, per_det);
  Rng noise_root = Rng(o.seed).derive(0xAE);
  for (int sid = lo; sid <= hi; ++sid) {
    const auto& spec = scenario_by_id(sid);
    auto matrix = detrend(synth_scenario(spec, layout, o.seed));
    auto windows = make_windows<T>(matrix, spec);
    for (std::size_t d = 0; d < matrix.detectors; ++d) {
      for (std::size_t i = 0; i < take; ++i) {
        // evenly strided subset keeps full record coverage
        const std::size_t w = (i * per_det) / take;
        auto win = windows[d * per_det + w];
        if (!std::isinf(snr_db)) {
          Rng wr = noise_root.derive(std::uint64_t(sid) * 1000000 +
                                     d * per_det + w);
          win.signal = add_awgn(win.signal, snr_db, wr);
        }
        data.windows.push_back(std::move(win));
      }
    }
  }
  Rng srng = Rng(o.seed).derive(0xDE7);
  auto dsplit = default_detector_split(layout, srng);
  std::vector<int> part_of(layout.detectors.size(), 0);
  for (int d : dsplit.valid) part_of[std::size_t(d)] = 1;
  for (int d : dsplit.test) part_of[std::size_t(d)] = 2;
  for (std::size_t i = 0; i < data.windows.size(); ++i) {
    const int p = part_of[std::size_t(data.windows[i].detector_index)];
    (p == 0 ? data.train : p == 1 ? data.valid : data.test).push_back(i);
  }
  return data;
}

template <typename T>
int cmd_train_lstm(const Options& o) {
  TrainConfig cfg = make_train_config(o, 20);
  auto data = build_time_data<T>(o);
  LstmConfig mc;
  mc.hidden = scaled_width(512, cfg.width_scale);
  mc.input_gain = o.input_gain;

  fs::create_directories(o.out);
  MetricsReport report;
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    TrainConfig rcfg = cfg;
    rcfg.seed = run_seed_of(cfg.seed, run);
    Rng init(Rng(rcfg.seed).derive(7).origin());
    LstmModel<T> model(mc, init);
    auto result = train_lstm(model, data.windows, data.train, data.valid, rcfg);
    auto ev = evaluate_lstm(model, data.windows, data.test);
    report.run_results.push_back(ev);
    char name[64];
    std::snprintf(name, sizeof(name), "history_run%02zu.csv", run);
    write_file((fs::path(o.out) / name).string(), history_csv(result.history));
    if (run == 0) {
      std::map<std::string, std::string> meta = {
          {"kind", "lstm"},
          {"hidden", std::to_string(mc.hidden)},
          {"width-scale", std::to_string(cfg.width_scale)},
          {"input-gain", std::to_string(mc.input_gain)},
          {"precision", std::to_string(cfg.precision)},
          {"seed", std::to_string(cfg.seed)},
          {"epoch", std::to_string(result.best_epoch)},
          {"config-hash", config_hash(cfg)},
      };
      save_checkpoint((fs::path(o.out) / "checkpoint").string(),
                      model.named_params(), {}, meta);
    }
    std::printf("run %zu: acc %.2f%%\n", run, ev.exact_acc);
  }
  report.aggregate();
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "LSTM classification\nsnr=%s accuracy %.2f +- %.2f %%\n",
                o.snr.c_str(), report.acc_mean, report.acc_std);
  write_file((fs::path(o.out) / "report.txt").string(), buf);
  std::fputs(buf, stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
template <typename T>
int cmd_eval(const Options& o) {
  auto meta = read_checkpoint_meta(o.checkpoint);
  const std::string kind = meta.at("kind");
  if (kind == "cnn") {
    const CoreGeometry geom;
    CnnConfig mc;
    mc.class_units = std::stoul(meta.at("class-units"));
    mc.width_scale = std::stoul(meta.at("width-scale"));
    Rng init(1);
    Cnn3dModel<T> model(mc, init);
    load_checkpoint(o.checkpoint, model.named_params(), model.named_state());
    std::vector<VolumeSample<T>> ds;
    if (!o.data.empty())
      ds = load_freq_dataset<T>(o.data, geom);
    else
      ds = gen_freq_dataset<T>(geom, make_gen_config(o), o.seed);
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto ev = evaluate_cnn(model, ds, idx, geom);
    std::printf("samples %zu exact-match %.2f%% mae %.4f mse %.4f\n",
                ev.count, ev.exact_acc, ev.mae, ev.mse);
    for (std::size_t j = 0; j < ev.per_label_acc.size(); ++j)
      std::printf("label %zu accuracy %.2f%%\n", j, ev.per_label_acc[j]);
  } else {
    LstmConfig mc;
    mc.hidden = std::stoul(meta.at("hidden"));
    mc.input_gain = std::stod(meta.at("input-gain"));
    Rng init(1);
    LstmModel<T> model(mc, init);
    load_checkpoint(o.checkpoint, model.named_params(), {});
    auto data = build_time_data<T>(o);
    std::vector<std::size_t> idx = data.test;
    auto ev = evaluate_lstm(model, data.windows, idx);
    std::printf("windows %zu exact-match %.2f%%\n", ev.count, ev.exact_acc);
    for (std::size_t j = 0; j < 4; ++j)
      std::printf("label %zu accuracy %.2f%%\n", j, ev.per_label_acc[j]);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// grid-lambda
// ---------------------------------------------------------------------------
template <typename T>
int cmd_grid_lambda(const Options& o) {
  std::vector<std::pair<double, double>> grid;
  std::istringstream is(o.grid);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    double l1, l2;
    if (std::sscanf(tok.c_str(), "%lf/%lf", &l1, &l2) != 2)
      throw UsageError("grid entry '" + tok + "' is not l1/l2");
    if (std::abs(l1 + l2 - 1.0) > 1e-9)
      throw ValidationError("grid entry '" + tok + "' violates l1+l2=1");
    grid.emplace_back(l1, l2);
  }
  if (grid.empty()) throw UsageError("empty lambda grid");

  const CoreGeometry geom;
  TrainConfig cfg = make_train_config(o, 6);  // reduced epochs per point
  std::vector<VolumeSample<T>> ds;
  if (!o.data.empty())
    ds = load_freq_dataset<T>(o.data, geom);
  else
    ds = gen_freq_dataset<T>(geom, make_gen_config(o), o.seed);
  auto split = split_freq(ds, cfg);
  CnnConfig mc;
  mc.class_units = o.class_units ? o.class_units : (o.combined ? 7u : 3u);
  mc.width_scale = cfg.width_scale;

  struct Row {
    double l1, l2, acc, mae, mse;
  };
  std::vector<Row> rows;
  for (const auto& [l1, l2] : grid) {
    TrainConfig rcfg = cfg;
    rcfg.lambda1 = l1;
    rcfg.lambda2 = l2;
    Rng init(Rng(cfg.seed).derive(7).origin());
    Cnn3dModel<T> model(mc, init);
    train_cnn(model, ds, split.train, split.valid, rcfg, geom);
    auto ev = evaluate_cnn(model, ds, split.valid, geom);
    rows.push_back({l1, l2, ev.exact_acc, ev.mae, ev.mse});
    std::printf("lambda %.2f/%.2f -> acc %.2f%% mae %.4f mse %.4f\n", l1, l2,
                ev.exact_acc, ev.mae, ev.mse);
  }
  std::size_t best_acc = 0, best_mae = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].acc > rows[best_acc].acc) best_acc = i;
    if (rows[i].mae < rows[best_mae].mae) best_mae = i;
  }
  std::string table =
      "lambda1\tlambda2\tvalid_acc\tvalid_mae\tvalid_mse\tmark\n";
  char buf[160];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.2f\t%.2f\t%.4f\t%.6f\t%.6f\t%s%s\n",
                  rows[i].l1, rows[i].l2, rows[i].acc, rows[i].mae,
                  rows[i].mse, i == best_acc ? "best-acc " : "",
                  i == best_mae ? "best-mae" : "");
    table += buf;
  }
  std::fputs(table.c_str(), stdout);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file((fs::path(o.out) / "grid.tsv").string(), table);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// route-demo
// ---------------------------------------------------------------------------
template <typename T>
int cmd_route_demo(const Options& o) {
  auto cnn_meta = read_checkpoint_meta(o.cnn_checkpoint);
  CnnConfig cc;
  cc.class_units = std::stoul(cnn_meta.at("class-units"));
  cc.width_scale = std::stoul(cnn_meta.at("width-scale"));
  Rng r1(1);
  Cnn3dModel<T> cnn(cc, r1);
  load_checkpoint(o.cnn_checkpoint, cnn.named_params(), cnn.named_state());

  auto lstm_meta = read_checkpoint_meta(o.lstm_checkpoint);
  LstmConfig lc;
  lc.hidden = std::stoul(lstm_meta.at("hidden"));
  lc.input_gain = std::stod(lstm_meta.at("input-gain"));
  Rng r2(1);
  LstmModel<T> lstm(lc, r2);
  load_checkpoint(o.lstm_checkpoint, lstm.named_params(), {});

  const CoreGeometry geom;
  auto print_prediction = [&](const char* tag, const RoutedPrediction& p) {
    std::printf("%s class bits:", tag);
    for (int b : p.class_bits) std::printf(" %d", b);
    std::printf("\n%s class probs:", tag);
    for (double v : p.class_probs) std::printf(" %.4f", v);
    std::printf("\n");
    if (p.has_coords) {
      std::printf("%s regression (i,j,k) x3:", tag);
      const std::array<std::size_t, 3> extent = {geom.nx, geom.ny, geom.nz};
      for (int t = 0; t < 3; ++t) {
        std::printf(" (");
        for (int a = 0; a < 3; ++a)
          std::printf("%s%.4f", a ? "," : "",
                      denormalize_coord(p.coords[std::size_t(t * 3 + a)],
                                        extent[std::size_t(a)]));
        std::printf(")");
      }
      std::printf("\n");
    } else {
      std::printf("%s regression: n/a\n", tag);
    }
  };

  {
    auto t = read_nnt<T>(o.freq_sample);
    if (t.rank() == 4)
      t = Tensor<T>({1, t.dim(0), t.dim(1), t.dim(2), t.dim(3)}, t.values());
    auto p = fused_route(cnn, lstm, t, Domain::Frequency);
    print_prediction("freq", p);
  }
  {
    auto t = read_nnt<T>(o.time_sample);
    if (t.rank() == 2)
      t = Tensor<T>({1, t.dim(0), t.dim(1)}, t.values());
    auto p = fused_route(cnn, lstm, t, Domain::Time);
    print_prediction("time", p);
  }
  return 0;
}

int cmd_gradcheck(const Options& o) {
  if (o.precision != 64)
    throw UsageError("gradcheck requires --precision 64");
  auto rep = run_gradcheck(o.seed);
  std::fputs(rep.text().c_str(), stdout);
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nnu: reactor perturbation synthesis and unfolding toolkit"};
  app.require_subcommand(1);
  app.set_config("--config");

  Options o;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "rng seed")->capture_default_str();
    cmd->add_option("--precision", o.precision, "float width: 32 or 64")
        ->check(CLI::IsMember({32, 64}))
        ->capture_default_str();
  };
  auto add_gen_freq_flags = [&](CLI::App* cmd) {
    cmd->add_option("--count", o.count, "samples per type (or total when --combined)")
        ->capture_default_str();
    cmd->add_option("--fraction", o.fraction, "sensor retention fraction")
        ->capture_default_str();
    cmd->add_option("--freqs", o.freqs, "perturbation frequencies, Hz")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_flag("--combined", o.combined, "combined-perturbation mode");
  };
  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--split", o.split, "train/valid/test percentages")
        ->capture_default_str();
    cmd->add_option("--epochs", o.epochs, "training epochs (0 = default)");
    cmd->add_option("--batch-size", o.batch_size, "minibatch size")
        ->capture_default_str();
    cmd->add_option("--lambda1", o.lambda1, "classification loss weight")
        ->capture_default_str();
    cmd->add_option("--lambda2", o.lambda2, "regression loss weight")
        ->capture_default_str();
    cmd->add_option("--runs", o.runs, "training repetitions to aggregate")
        ->capture_default_str();
    cmd->add_option("--width-scale", o.width_scale,
                    "divide channel/hidden widths (desk-scale runs)")
        ->capture_default_str();
  };

  auto* gen_freq = app.add_subcommand("gen-freq", "generate frequency-domain volumes");
  add_common(gen_freq);
  add_gen_freq_flags(gen_freq);
  gen_freq->add_option("--out", o.out, "output dataset directory")->required();

  auto* gen_time = app.add_subcommand("gen-time", "generate time-domain windows");
  add_common(gen_time);
  gen_time->add_option("--scenarios", o.scenarios, "scenario range, e.g. 1..13")
      ->capture_default_str();
  gen_time->add_option("--snr", o.snr, "inf|10|5")->capture_default_str();
  gen_time->add_option("--out", o.out, "output dataset directory")->required();

  auto* train_cnn_cmd = app.add_subcommand("train-cnn", "train the 3D-CNN");
  add_common(train_cnn_cmd);
  add_gen_freq_flags(train_cnn_cmd);
  add_train_flags(train_cnn_cmd);
  train_cnn_cmd->add_option("--data", o.data, "dataset dir (else generated in-memory)");
  train_cnn_cmd->add_option("--class-units", o.class_units,
                            "class head width: 3 or 7 (0 = auto)");
  train_cnn_cmd->add_option("--out", o.out, "output directory")->required();

  auto* train_lstm_cmd = app.add_subcommand("train-lstm", "train the stacked LSTM");
  add_common(train_lstm_cmd);
  add_train_flags(train_lstm_cmd);
  train_lstm_cmd->add_option("--scenarios", o.scenarios, "scenario range")
      ->capture_default_str();
  train_lstm_cmd->add_option("--snr", o.snr, "inf|10|5")->capture_default_str();
  train_lstm_cmd
      ->add_option("--windows-per-detector", o.windows_per_detector,
                   "windows sampled per (scenario, detector)")
      ->capture_default_str();
  train_lstm_cmd->add_option("--input-gain", o.input_gain,
                             "fixed input scaling at the lstm input")
      ->capture_default_str();
  train_lstm_cmd->add_option("--out", o.out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd);
  add_gen_freq_flags(eval_cmd);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory")
      ->required();
  eval_cmd->add_option("--data", o.data, "dataset dir (else generated)");
  eval_cmd->add_option("--scenarios", o.scenarios, "scenario range (lstm)")
      ->capture_default_str();
  eval_cmd->add_option("--snr", o.snr, "inf|10|5 (lstm)")->capture_default_str();
  eval_cmd->add_option("--windows-per-detector", o.windows_per_detector,
                       "windows per (scenario, detector) (lstm)")
      ->capture_default_str();

  auto* grid_cmd = app.add_subcommand("grid-lambda", "loss weight grid search");
  add_common(grid_cmd);
  add_gen_freq_flags(grid_cmd);
  add_train_flags(grid_cmd);
  grid_cmd->add_option("--grid", o.grid, "comma list of l1/l2 pairs")
      ->capture_default_str();
  grid_cmd->add_option("--data", o.data, "dataset dir (else generated)");
  grid_cmd->add_option("--out", o.out, "output directory (optional)");

  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  add_common(gradcheck_cmd);
  gradcheck_cmd->get_option("--precision")->default_val(64);

  auto* route_cmd = app.add_subcommand("route-demo",
                                       "route one sample per domain through "
                                       "the unified framework");
  add_common(route_cmd);
  route_cmd->add_option("--freq-sample", o.freq_sample, "NNT1 volume path")
      ->required();
  route_cmd->add_option("--time-sample", o.time_sample, "NNT1 window path")
      ->required();
  route_cmd->add_option("--cnn-checkpoint", o.cnn_checkpoint, "cnn checkpoint dir")
      ->required();
  route_cmd->add_option("--lstm-checkpoint", o.lstm_checkpoint,
                        "lstm checkpoint dir")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto dispatch = [&](auto&& fn) {
      return o.precision == 64 ? fn(double{}) : fn(float{});
    };
    if (gen_freq->parsed())
      return dispatch([&]<typename T>(T) { return cmd_gen_freq<T>(o); });
    if (gen_time->parsed())
      return dispatch([&]<typename T>(T) { return cmd_gen_time<T>(o); });
    if (train_cnn_cmd->parsed())
      return dispatch([&]<typename T>(T) { return cmd_train_cnn<T>(o); });
    if (train_lstm_cmd->parsed())
      return dispatch([&]<typename T>(T) { return cmd_train_lstm<T>(o); });
    if (eval_cmd->parsed())
      return dispatch([&]<typename T>(T) { return cmd_eval<T>(o); });
    if (grid_cmd->parsed())
      return dispatch([&]<typename T>(T) { return cmd_grid_lambda<T>(o); });
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(o);
    if (route_cmd->parsed())
      return dispatch([&]<typename T>(T) { return cmd_route_demo<T>(o); });
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
