#include "nnu/harness.hpp"

#include <cinttypes>
#include <map>
#include <numeric>
#include <sstream>

namespace nnu {

namespace detail {

[[noreturn]] void nan_abort(std::size_t epoch, std::size_t batch,
                            const std::string& op) {
  throw NumericError("NaN loss at epoch " + std::to_string(epoch) +
                     ", batch " + std::to_string(batch) + ": " + op);
}

}  // namespace detail

std::string canonical_config_text(const TrainConfig& cfg) {
  char buf[640];
  std::snprintf(
      buf, sizeof(buf),
      "seed=%" PRIu64
      "\nsplit=%.6f/%.6f/%.6f\nbatch-size=%zu\nepochs=%zu\nlambda1=%.6f\n"
      "lambda2=%.6f\nfraction=%.6f\nsnr=%g\nalpha=%g\nbeta1=%g\nbeta2=%g\n"
      "adam-eps=%g\nruns=%zu\nprecision=%d\nwidth-scale=%zu\n",
      cfg.seed, cfg.train_frac, cfg.valid_frac, cfg.test_frac, cfg.batch_size,
      cfg.epochs, cfg.lambda1, cfg.lambda2, cfg.sensor_fraction, cfg.snr_db,
      cfg.alpha, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.runs, cfg.precision,
      cfg.width_scale);
  return buf;
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string text = canonical_config_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

SampleSplit split_stratified(const std::vector<int>& class_keys,
                             double train_frac, double valid_frac,
                             double test_frac, Rng& rng) {
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
    throw ValidationError("split fractions must sum to 1");
  const std::size_t n = class_keys.size();
  if (n == 0) throw ValidationError("cannot split an empty dataset");
  const double fracs[3] = {train_frac, valid_frac, test_frac};

  // global targets via largest remainder
  std::size_t target[3];
  {
    double exact[3];
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
      exact[p] = fracs[p] * double(n);
      target[p] = std::size_t(exact[p]);
      assigned += target[p];
    }
    std::vector<int> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double ra = exact[a] - double(target[a]);
      const double rb = exact[b] - double(target[b]);
      if (ra != rb) return ra > rb;
      return a < b;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned)
      ++target[order[i % 3]];
  }
  for (int p = 0; p < 3; ++p)
    if (target[p] == 0)
      throw ValidationError("split fractions leave a partition empty");

  // group samples by class key, deterministic key order
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[class_keys[i]].push_back(i);

  // per-class floor allocation
  struct Alloc {
    int key;
    std::size_t count[3];
    double frac[3];
  };
  std::vector<Alloc> allocs;
  std::size_t filled[3] = {0, 0, 0};
  for (auto& [key, members] : groups) {
    Alloc a;
    a.key = key;
    for (int p = 0; p < 3; ++p) {
      const double exact = fracs[p] * double(members.size());
      a.count[p] = std::size_t(exact);
      a.frac[p] = exact - double(a.count[p]);
      filled[p] += a.count[p];
    }
    allocs.push_back(a);
  }

  // distribute the remaining slots by descending fractional part, bounded by
  // each class's unassigned members and each partition's remaining capacity
  struct Cand {
    double frac;
    std::size_t alloc_idx;
    int part;
  };
  for (int round = 0; round < 4; ++round) {
    bool deficit = false;
    for (int p = 0; p < 3; ++p)
      if (filled[p] < target[p]) deficit = true;
    if (!deficit) break;
    std::vector<Cand> cands;
    for (std::size_t ai = 0; ai < allocs.size(); ++ai) {
      const auto& members = groups[allocs[ai].key];
      const std::size_t used =
          allocs[ai].count[0] + allocs[ai].count[1] + allocs[ai].count[2];
      if (used >= members.size()) continue;
      for (int p = 0; p < 3; ++p)
        cands.push_back({allocs[ai].frac[p], ai, p});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.frac != b.frac) return a.frac > b.frac;
      if (a.alloc_idx != b.alloc_idx) return a.alloc_idx < b.alloc_idx;
      return a.part < b.part;
    });
    for (const auto& c : cands) {
      if (filled[c.part] >= target[c.part]) continue;
      auto& a = allocs[c.alloc_idx];
      const auto& members = groups[a.key];
      const std::size_t used = a.count[0] + a.count[1] + a.count[2];
      if (used >= members.size()) continue;
      ++a.count[c.part];
      ++filled[c.part];
      a.frac[c.part] = -1.0;  // at most one bump per (class, partition, round)
    }
  }

  SampleSplit split;
  for (auto& a : allocs) {
    auto members = groups[a.key];
    detail::shuffle_indices(members, rng);
    std::size_t off = 0;
    for (int p = 0; p < 3; ++p) {
      auto* dst = (p == 0) ? &split.train : (p == 1) ? &split.valid : &split.test;
      for (std::size_t i = 0; i < a.count[p]; ++i)
        dst->push_back(members[off++]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.test.begin(), split.test.end());
  if (split.train.empty() || split.valid.empty() || split.test.empty())
    throw ValidationError("split produced an empty partition");
  return split;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "epoch,train_loss,valid_loss,accuracy,mae,mse\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch,
                  r.train_loss, r.valid_loss, r.accuracy, r.mae, r.mse);
    out += buf;
  }
  return out;
}

void MetricsReport::aggregate() {
  const std::size_t n = run_results.size();
  if (n == 0) return;
  auto mean_of = [&](auto get) {
    double s = 0;
    for (const auto& r : run_results) s += get(r);
    return s / double(n);
  };
  auto std_of = [&](auto get, double mean) {
    if (n < 2) return 0.0;
    double s = 0;
    for (const auto& r : run_results) {
      const double d = get(r) - mean;
      s += d * d;
    }
    return std::sqrt(s / double(n - 1));
  };
  auto acc = [](const EvalResult& r) { return r.exact_acc; };
  auto mae = [](const EvalResult& r) { return r.mae; };
  auto mse = [](const EvalResult& r) { return r.mse; };
  acc_mean = mean_of(acc);
  acc_std = std_of(acc, acc_mean);
  mae_mean = mean_of(mae);
  mae_std = std_of(mae, mae_mean);
  mse_mean = mean_of(mse);
  mse_std = std_of(mse, mse_mean);
}

std::string MetricsReport::table(const std::string& label, double sensors_pct,
                                 const std::string& split) const {
  std::ostringstream os;
  char buf[256];
  os << label << " classification & localisation\n";
  os << "Sensors(%) | Train/Valid/Test(%) | Accuracy(%)      | MAE           "
        "  | MSE\n";
  std::snprintf(buf, sizeof(buf),
                "%10.4g | %19s | %7.2f +- %5.2f | %7.4f +- %5.4f | %7.4f +- "
                "%5.4f\n",
                sensors_pct, split.c_str(), acc_mean, acc_std, mae_mean,
                mae_std, mse_mean, mse_std);
  os << buf;
  os << "runs:";
  for (const auto& r : run_results) {
    std::snprintf(buf, sizeof(buf), " (acc=%.2f mae=%.4f mse=%.4f)",
                  r.exact_acc, r.mae, r.mse);
    os << buf;
  }
  os << "\n";
  return os.str();
}

}  // namespace nnu
