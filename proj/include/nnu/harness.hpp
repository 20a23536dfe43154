#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nnu/adam.hpp"
#include "nnu/freq_synth.hpp"
#include "nnu/losses.hpp"
#include "nnu/models.hpp"
#include "nnu/time_synth.hpp"

namespace nnu {

struct TrainConfig {
  std::uint64_t seed = 42;
  double train_frac = 0.60, valid_frac = 0.15, test_frac = 0.25;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;  // desk-scale default; LSTM runs use 20
  double lambda1 = 0.3, lambda2 = 0.7;
  double sensor_fraction = 0.20;
  double snr_db = std::numeric_limits<double>::infinity();
  double alpha = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t runs = 10;
  int precision = 32;
  std::size_t width_scale = 1;

  void validate() const {
    if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
      throw ValidationError("split fractions must sum to 1");
    if (batch_size < 2)
      throw ValidationError("batch size must be >= 2 (batchnorm)");
    if (precision != 32 && precision != 64)
      throw ValidationError("precision must be 32 or 64");
  }
};

std::string canonical_config_text(const TrainConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Sample-level stratified split
// ---------------------------------------------------------------------------
struct SampleSplit {
  std::vector<std::size_t> train, valid, test;
};

// Random split stratified by class key: per-class counts stay within one
// sample of the class's proportional share, and global partition sizes hit
// the largest-remainder rounding of N * fraction exactly.
SampleSplit split_stratified(const std::vector<int>& class_keys,
                             double train_frac, double valid_frac,
                             double test_frac, Rng& rng);

template <typename T>
std::vector<int> class_keys_of(const std::vector<VolumeSample<T>>& ds) {
  std::vector<int> keys;
  keys.reserve(ds.size());
  for (const auto& s : ds)
    keys.push_back(s.class_bits[0] * 4 + s.class_bits[1] * 2 + s.class_bits[2]);
  return keys;
}

template <typename T>
SampleSplit split_freq(const std::vector<VolumeSample<T>>& ds,
                       const TrainConfig& cfg) {
  Rng rng = Rng(cfg.seed).derive(0x5B11);
  return split_stratified(class_keys_of(ds), cfg.train_frac, cfg.valid_frac,
                          cfg.test_frac, rng);
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------
template <typename T>
struct FreqBatch {
  Tensor<T> input;       // [B,64,64,32,1]
  Tensor<T> class_true;  // [B,P]
  Tensor<T> coord_true;  // [B,9] normalized
  Tensor<T> coord_mask;  // [B,9] 0/1
};

template <typename T>
FreqBatch<T> make_freq_batch(const std::vector<VolumeSample<T>>& ds,
                             const std::vector<std::size_t>& idx,
                             std::size_t b0, std::size_t b1,
                             std::size_t class_units) {
  const std::size_t n = b1 - b0;
  FreqBatch<T> batch;
  const auto& vshape = ds[idx[b0]].input.shape();
  batch.input = Tensor<T>({n, vshape[0], vshape[1], vshape[2], vshape[3]});
  batch.class_true = Tensor<T>({n, class_units});
  batch.coord_true = Tensor<T>({n, 9});
  batch.coord_mask = Tensor<T>({n, 9});
  const std::size_t vol = numel(vshape);
  for (std::size_t b = 0; b < n; ++b) {
    const auto& s = ds[idx[b0 + b]];
    std::copy(s.input.data(), s.input.data() + vol,
              batch.input.data() + b * vol);
    if (class_units == 3) {
      for (std::size_t j = 0; j < 3; ++j)
        batch.class_true[b * 3 + j] = static_cast<T>(s.class_bits[j]);
    } else if (class_units == 7) {
      batch.class_true[b * 7 + std::size_t(combination_index(s.class_bits))] =
          T(1);
    } else {
      throw UsageError("class head width must be 3 or 7");
    }
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t a = 0; a < 3; ++a) {
        batch.coord_true[b * 9 + t * 3 + a] =
            static_cast<T>(s.coords[t * 3 + a]);
        batch.coord_mask[b * 9 + t * 3 + a] =
            static_cast<T>(s.coord_mask[t]);
      }
  }
  return batch;
}

template <typename T>
struct TimeBatch {
  Tensor<T> input;  // [B,100,1]
  Tensor<T> label;  // [B,4]
};

template <typename T>
TimeBatch<T> make_time_batch(const std::vector<WindowSample<T>>& ds,
                             const std::vector<std::size_t>& idx,
                             std::size_t b0, std::size_t b1) {
  const std::size_t n = b1 - b0;
  const std::size_t len = ds[idx[b0]].signal.size();
  TimeBatch<T> batch;
  batch.input = Tensor<T>({n, len, 1});
  batch.label = Tensor<T>({n, 4});
  for (std::size_t b = 0; b < n; ++b) {
    const auto& s = ds[idx[b0 + b]];
    std::copy(s.signal.data(), s.signal.data() + len,
              batch.input.data() + b * len);
    for (std::size_t j = 0; j < 4; ++j)
      batch.label[b * 4 + j] = static_cast<T>(s.label[j]);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
struct EvalResult {
  double exact_acc = 0.0;              // percent
  std::vector<double> per_label_acc;   // percent
  double mae = 0.0, mse = 0.0;         // voxel units, live units only
  std::size_t count = 0;
};

template <typename T>
EvalResult evaluate_cnn(Cnn3dModel<T>& model,
                        const std::vector<VolumeSample<T>>& ds,
                        const std::vector<std::size_t>& idx,
                        const CoreGeometry& geom,
                        std::size_t eval_batch = 16) {
  if (idx.empty()) throw ValidationError("evaluate on empty sample set");
  const std::size_t p = model.config().class_units;
  EvalResult r;
  r.per_label_acc.assign(p, 0.0);
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t live_units = 0, exact = 0;
  std::vector<double> label_hits(p, 0.0);
  const std::array<std::size_t, 3> extent = {geom.nx, geom.ny, geom.nz};
  for (std::size_t b0 = 0; b0 < idx.size(); b0 += eval_batch) {
    const std::size_t b1 = std::min(idx.size(), b0 + eval_batch);
    auto batch = make_freq_batch(ds, idx, b0, b1, p);
    auto out = model.forward(nullptr, batch.input, BnMode::Infer);
    const std::size_t n = b1 - b0;
    for (std::size_t b = 0; b < n; ++b) {
      bool all = true;
      for (std::size_t j = 0; j < p; ++j) {
        const int bit = double(out.class_probs[b * p + j]) > 0.5 ? 1 : 0;
        const int truth = batch.class_true[b * p + j] > T(0.5) ? 1 : 0;
        if (bit == truth)
          label_hits[j] += 1;
        else
          all = false;
      }
      if (all) ++exact;
      for (std::size_t t = 0; t < 3; ++t) {
        if (batch.coord_mask[b * 9 + t * 3] <= T(0)) continue;
        for (std::size_t a = 0; a < 3; ++a) {
          const double pred = denormalize_coord(
              double(out.coords[b * 9 + t * 3 + a]), extent[a]);
          const double truth = denormalize_coord(
              double(batch.coord_true[b * 9 + t * 3 + a]), extent[a]);
          const double err = pred - truth;
          abs_sum += std::abs(err);
          sq_sum += err * err;
          ++live_units;
        }
      }
    }
  }
  r.count = idx.size();
  r.exact_acc = 100.0 * double(exact) / double(idx.size());
  for (std::size_t j = 0; j < p; ++j)
    r.per_label_acc[j] = 100.0 * label_hits[j] / double(idx.size());
  if (live_units > 0) {
    r.mae = abs_sum / double(live_units);
    r.mse = sq_sum / double(live_units);
  }
  return r;
}

template <typename T>
EvalResult evaluate_lstm(LstmModel<T>& model,
                         const std::vector<WindowSample<T>>& ds,
                         const std::vector<std::size_t>& idx,
                         std::size_t eval_batch = 64) {
  if (idx.empty()) throw ValidationError("evaluate on empty sample set");
  EvalResult r;
  r.per_label_acc.assign(4, 0.0);
  std::size_t exact = 0;
  std::vector<double> label_hits(4, 0.0);
  for (std::size_t b0 = 0; b0 < idx.size(); b0 += eval_batch) {
    const std::size_t b1 = std::min(idx.size(), b0 + eval_batch);
    auto batch = make_time_batch(ds, idx, b0, b1);
    auto out = model.forward(nullptr, batch.input);
    for (std::size_t b = 0; b < b1 - b0; ++b) {
      bool all = true;
      for (std::size_t j = 0; j < 4; ++j) {
        const int bit = double(out.class_probs[b * 4 + j]) > 0.5 ? 1 : 0;
        const int truth = batch.label[b * 4 + j] > T(0.5) ? 1 : 0;
        if (bit == truth)
          label_hits[j] += 1;
        else
          all = false;
      }
      if (all) ++exact;
    }
  }
  r.count = idx.size();
  r.exact_acc = 100.0 * double(exact) / double(idx.size());
  for (std::size_t j = 0; j < 4; ++j)
    r.per_label_acc[j] = 100.0 * label_hits[j] / double(idx.size());
  return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------
struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0, valid_loss = 0.0;
  double accuracy = 0.0, mae = 0.0, mse = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
};

std::string history_csv(const std::vector<HistoryRow>& rows);

namespace detail {

// Seeded Fisher-Yates permutation; every sample visited exactly once.
inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
}

[[noreturn]] void nan_abort(std::size_t epoch, std::size_t batch,
                            const std::string& op);

}  // namespace detail

template <typename T>
TrainResult train_cnn(Cnn3dModel<T>& model,
                      const std::vector<VolumeSample<T>>& ds,
                      const std::vector<std::size_t>& train_idx,
                      const std::vector<std::size_t>& valid_idx,
                      const TrainConfig& cfg, const CoreGeometry& geom = {}) {
  cfg.validate();
  if (train_idx.empty()) throw ValidationError("empty training set");
  model.set_trainable(true);
  auto params = model.params();
  AdamState<T> adam;
  adam.alpha = cfg.alpha;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;
  adam.init(params);

  const std::size_t p_units = model.config().class_units;
  Rng shuffle_root = Rng(cfg.seed).derive(0x5487);
  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> best;
  auto snapshot = [&]() {
    best.clear();
    for (auto& p : params) best.push_back(p.clone());
  };

  std::vector<std::size_t> order(train_idx);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng er = shuffle_root.derive(epoch);
    detail::shuffle_indices(order, er);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      if (b1 - b0 < 2) break;  // batchnorm cannot run on a single sample
      auto batch = make_freq_batch(ds, order, b0, b1, p_units);
      for (auto& p : params) p.zero_grad();
      GradTape<T> tape;
      auto out = model.forward(&tape, batch.input, BnMode::Train);
      auto loss = multitask_loss(&tape, out.class_probs, batch.class_true,
                                 out.coords, batch.coord_true, batch.coord_mask,
                                 static_cast<T>(cfg.lambda1),
                                 static_cast<T>(cfg.lambda2));
      const double lval = double(loss[0]);
      if (!std::isfinite(lval)) {
        // rerun with per-op checks to name the first bad layer
        GradTape<T> probe;
        probe.check_finite = true;
        std::string op = "loss";
        try {
          auto out2 = model.forward(&probe, batch.input, BnMode::Train);
          multitask_loss(&probe, out2.class_probs, batch.class_true,
                         out2.coords, batch.coord_true, batch.coord_mask,
                         static_cast<T>(cfg.lambda1),
                         static_cast<T>(cfg.lambda2));
        } catch (const NumericError& e) {
          op = e.what();
        }
        detail::nan_abort(epoch, batches, op);
      }
      tape.backward(loss);
      adam_step(params, adam);
      loss_sum += lval;
      ++batches;
    }

    HistoryRow row;
    row.epoch = epoch;
    row.train_loss = batches ? loss_sum / double(batches) : 0.0;
    if (!valid_idx.empty()) {
      double vloss = 0.0;
      std::size_t vbatches = 0;
      for (std::size_t b0 = 0; b0 < valid_idx.size(); b0 += cfg.batch_size) {
        const std::size_t b1 =
            std::min(valid_idx.size(), b0 + cfg.batch_size);
        auto vb = make_freq_batch(ds, valid_idx, b0, b1, p_units);
        auto vout = model.forward(nullptr, vb.input, BnMode::Infer);
        auto vl = multitask_loss<T>(nullptr, vout.class_probs, vb.class_true,
                                    vout.coords, vb.coord_true, vb.coord_mask,
                                    static_cast<T>(cfg.lambda1),
                                    static_cast<T>(cfg.lambda2));
        vloss += double(vl[0]);
        ++vbatches;
      }
      row.valid_loss = vloss / double(vbatches);
      auto ev = evaluate_cnn(model, ds, valid_idx, geom);
      row.accuracy = ev.exact_acc;
      row.mae = ev.mae;
      row.mse = ev.mse;
    } else {
      row.valid_loss = row.train_loss;
      auto ev = evaluate_cnn(model, ds, train_idx, geom);
      row.accuracy = ev.exact_acc;
      row.mae = ev.mae;
      row.mse = ev.mse;
    }
    result.history.push_back(row);
    if (row.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = row.valid_loss;
      result.best_epoch = epoch;
      snapshot();
    }
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i)
      std::copy(best[i].data(), best[i].data() + best[i].size(),
                params[i].data());
  return result;
}

template <typename T>
TrainResult train_lstm(LstmModel<T>& model,
                       const std::vector<WindowSample<T>>& ds,
                       const std::vector<std::size_t>& train_idx,
                       const std::vector<std::size_t>& valid_idx,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (train_idx.empty()) throw ValidationError("empty training set");
  model.set_trainable(true);
  auto params = model.params();
  AdamState<T> adam;
  adam.alpha = cfg.alpha;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;
  adam.init(params);

  Rng shuffle_root = Rng(cfg.seed).derive(0x5487);
  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> best;

  std::vector<std::size_t> order(train_idx);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng er = shuffle_root.derive(epoch);
    detail::shuffle_indices(order, er);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      if (b1 == b0) break;
      auto batch = make_time_batch(ds, order, b0, b1);
      for (auto& p : params) p.zero_grad();
      GradTape<T> tape;
      auto out = model.forward(&tape, batch.input);
      auto loss = bce_loss(&tape, out.class_probs, batch.label);
      const double lval = double(loss[0]);
      if (!std::isfinite(lval)) {
        GradTape<T> probe;
        probe.check_finite = true;
        std::string op = "loss";
        try {
          auto out2 = model.forward(&probe, batch.input);
          bce_loss(&probe, out2.class_probs, batch.label);
        } catch (const NumericError& e) {
          op = e.what();
        }
        detail::nan_abort(epoch, batches, op);
      }
      tape.backward(loss);
      adam_step(params, adam);
      loss_sum += lval;
      ++batches;
    }

    HistoryRow row;
    row.epoch = epoch;
    row.train_loss = batches ? loss_sum / double(batches) : 0.0;
    if (!valid_idx.empty()) {
      double vloss = 0.0;
      std::size_t vb = 0;
      for (std::size_t b0 = 0; b0 < valid_idx.size(); b0 += cfg.batch_size) {
        const std::size_t b1 = std::min(valid_idx.size(), b0 + cfg.batch_size);
        auto vbt = make_time_batch(ds, valid_idx, b0, b1);
        auto vout = model.forward(nullptr, vbt.input);
        auto vl = bce_loss<T>(nullptr, vout.class_probs, vbt.label);
        vloss += double(vl[0]);
        ++vb;
      }
      row.valid_loss = vloss / double(vb);
      auto ev = evaluate_lstm(model, ds, valid_idx);
      row.accuracy = ev.exact_acc;
    } else {
      row.valid_loss = row.train_loss;
      auto ev = evaluate_lstm(model, ds, train_idx);
      row.accuracy = ev.exact_acc;
    }
    result.history.push_back(row);
    if (row.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = row.valid_loss;
      result.best_epoch = epoch;
      best.clear();
      for (auto& p : params) best.push_back(p.clone());
    }
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i)
      std::copy(best[i].data(), best[i].data() + best[i].size(),
                params[i].data());
  return result;
}

// ---------------------------------------------------------------------------
// Run aggregation (train N times, report mean +- std)
// ---------------------------------------------------------------------------
struct MetricsReport {
  std::vector<EvalResult> run_results;
  double acc_mean = 0, acc_std = 0;
  double mae_mean = 0, mae_std = 0;
  double mse_mean = 0, mse_std = 0;

  void aggregate();
  std::string table(const std::string& label, double sensors_pct,
                    const std::string& split) const;
};

}  // namespace nnu
