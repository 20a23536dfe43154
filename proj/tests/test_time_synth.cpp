#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "nnu/time_synth.hpp"

using namespace nnu;

namespace {

double correlation(const double* a, const double* b, std::size_t n) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

// magnitude of the DFT at one frequency
double dft_mag(const double* x, std::size_t n, double freq_hz, double dt) {
  double re = 0, im = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * std::numbers::pi * freq_hz * double(i) * dt;
    re += x[i] * std::cos(w);
    im -= x[i] * std::sin(w);
  }
  return std::sqrt(re * re + im * im);
}

}  // namespace

TEST_CASE("layout: 56 detectors, 48 in-core across 6 levels, 8 ex-core") {
  auto layout = DetectorLayout::standard();
  REQUIRE(layout.detectors.size() == 56);
  std::size_t in_core = 0, ex_core = 0;
  std::map<int, int> in_core_levels;
  std::set<std::string> ids;
  for (const auto& d : layout.detectors) {
    CHECK(d.level >= 1);
    CHECK(d.level <= 6);
    CHECK(ids.insert(d.id).second);  // unique ids
    if (d.ex_core) {
      ++ex_core;
      CHECK((d.level == 1 || d.level == 6));
    } else {
      ++in_core;
      ++in_core_levels[d.level];
    }
  }
  CHECK(in_core == 48);
  CHECK(ex_core == 8);
  for (int lvl = 1; lvl <= 6; ++lvl) CHECK(in_core_levels[lvl] == 8);
}

TEST_CASE("scenario table: ID bits match the thirteen rows") {
  const auto& t = scenario_table();
  REQUIRE(t.size() == 13);
  const std::array<std::array<int, 4>, 13> expect = {{
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0, 0, 1, 1},
      {1, 0, 1, 0}, {1, 0, 1, 0}, {0, 1, 1, 0}, {0, 1, 1, 0}, {1, 0, 0, 1},
      {1, 0, 0, 1}, {0, 1, 0, 1}, {0, 1, 0, 1},
  }};
  std::set<std::array<int, 4>> distinct;
  for (std::size_t i = 0; i < 13; ++i) {
    CHECK(t[i].id == int(i) + 1);
    CHECK(t[i].id_bits == expect[i]);
    distinct.insert(t[i].id_bits);
  }
  CHECK(distinct.size() == 9);  // amplitude variants share labels
  CHECK_THROWS_AS(scenario_by_id(0), ValidationError);
  CHECK_THROWS_AS(scenario_by_id(14), ValidationError);
}

TEST_CASE("synth: same seed gives bit-identical matrices") {
  auto layout = DetectorLayout::standard();
  auto a = synth_scenario(scenario_by_id(6), layout, 31);
  auto b = synth_scenario(scenario_by_id(6), layout, 31);
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("synth scenario 3: same-level perturbation components are identical") {
  auto layout = DetectorLayout::standard();
  TimeSurrogateConstants tc;
  tc.intrinsic_noise_std = 0.0;  // isolate the shared component
  auto m = synth_scenario(scenario_by_id(3), layout, 17, tc);
  auto d = detrend(m);
  // all in-core detectors at level 2
  std::vector<std::size_t> level2;
  for (std::size_t i = 0; i < layout.detectors.size(); ++i)
    if (!layout.detectors[i].ex_core && layout.detectors[i].level == 2)
      level2.push_back(i);
  REQUIRE(level2.size() == 8);
  for (std::size_t i = 1; i < level2.size(); ++i) {
    // identical coefficients -> identical signals
    for (std::size_t s = 0; s < SignalMatrix::kSamples; s += 7)
      CHECK(d.row(level2[i])[s] == doctest::Approx(d.row(level2[0])[s]));
    CHECK(correlation(d.row(level2[0]), d.row(level2[i]),
                      SignalMatrix::kSamples) == doctest::Approx(1.0));
  }
  // ex-core at matching level: scaled copy, still correlation 1
  for (std::size_t i = 0; i < layout.detectors.size(); ++i)
    if (layout.detectors[i].ex_core && layout.detectors[i].level == 1) {
      std::vector<std::size_t> level1;
      for (std::size_t j = 0; j < layout.detectors.size(); ++j)
        if (!layout.detectors[j].ex_core && layout.detectors[j].level == 1)
          level1.push_back(j);
      CHECK(correlation(d.row(level1[0]), d.row(i), SignalMatrix::kSamples) ==
            doctest::Approx(1.0));
      break;
    }
}

TEST_CASE("synth scenario 2: dominant spectral peak at the table frequency") {
  auto layout = DetectorLayout::standard();
  auto m = detrend(synth_scenario(scenario_by_id(2), layout, 23));
  // detector closest to the cluster center
  std::size_t best = 0;
  double best_rho = 1e18;
  for (std::size_t i = 0; i < layout.detectors.size(); ++i) {
    const auto& det = layout.detectors[i];
    const double rho = std::hypot(det.x - 7.0, det.y - 7.0);
    if (!det.ex_core && rho < best_rho) {
      best_rho = rho;
      best = i;
    }
  }
  double peak_freq = 0, peak_mag = 0;
  for (int k = 1; k <= 500; ++k) {  // 0.01 .. 5 Hz on the 0.01 Hz grid
    const double freq = double(k) * 0.01;
    const double mag =
        dft_mag(m.row(best), SignalMatrix::kSamples, freq, SignalMatrix::kDt);
    if (mag > peak_mag) {
      peak_mag = mag;
      peak_freq = freq;
    }
  }
  CHECK(peak_freq == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("synth scenario 5: additive composition of scenarios 3 and 4") {
  auto layout = DetectorLayout::standard();
  TimeSurrogateConstants tc;
  tc.intrinsic_noise_std = 0.0;
  const std::uint64_t seed = 77;
  auto m3 = synth_scenario(scenario_by_id(3), layout, seed, tc);
  auto m4 = synth_scenario(scenario_by_id(4), layout, seed, tc);
  auto m5 = synth_scenario(scenario_by_id(5), layout, seed, tc);
  for (std::size_t i = 0; i < m5.data.size(); i += 11)
    CHECK(std::abs(m5.data[i] - (m3.data[i] + m4.data[i] - tc.baseline)) <
          1e-12);
}

TEST_CASE("detrend: constant zeroed, zero-mean sine unchanged, mean tiny") {
  SignalMatrix m;
  m.detectors = 2;
  m.data.assign(2 * SignalMatrix::kSamples, 0.0);
  for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i) {
    m.row(0)[i] = 3.25;
    m.row(1)[i] = std::sin(2.0 * std::numbers::pi * 0.37 * double(i));
  }
  {  // make row 1 zero-mean by construction
    double mean = 0;
    for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
      mean += m.row(1)[i];
    mean /= double(SignalMatrix::kSamples);
    for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
      m.row(1)[i] -= mean;
  }
  auto d = detrend(m);
  for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
    CHECK(d.row(0)[i] == 0.0);
  double mean1 = 0;
  for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i) {
    CHECK(std::abs(d.row(1)[i] - m.row(1)[i]) < 1e-12);
    mean1 += d.row(1)[i];
  }
  mean1 /= double(SignalMatrix::kSamples);
  double std1 = 0;
  for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
    std1 += d.row(1)[i] * d.row(1)[i];
  std1 = std::sqrt(std1 / double(SignalMatrix::kSamples));
  CHECK(std::abs(mean1) < 1e-12 * std1);
}

TEST_CASE("detrend: linear offset removed, slope untouched") {
  SignalMatrix m;
  m.detectors = 1;
  m.data.assign(SignalMatrix::kSamples, 0.0);
  Rng rng(3);
  std::vector<double> base(SignalMatrix::kSamples);
  for (auto& v : base) v = rng.normal();
  for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
    m.row(0)[i] = base[i] + 42.0;
  auto d = detrend(m);
  SignalMatrix mb;
  mb.detectors = 1;
  mb.data = base;
  auto db = detrend(mb);
  for (std::size_t i = 0; i < SignalMatrix::kSamples; i += 13)
    CHECK(d.row(0)[i] == doctest::Approx(db.row(0)[i]).epsilon(1e-12));
}

TEST_CASE("make_windows: counts, starts and lossless slices") {
  CHECK(window_count(10001) == 1981);
  auto layout = DetectorLayout::standard();
  TimeSurrogateConstants tc;
  auto m = detrend(synth_scenario(scenario_by_id(1), layout, 5, tc));
  auto windows = make_windows<double>(m, scenario_by_id(1));
  CHECK(windows.size() == 56 * 1981);
  CHECK(windows[0].start == 0);
  CHECK(windows[1].start == 5);
  for (std::size_t i = 0; i < kWindowLen; ++i) {
    CHECK(windows[0].signal[i] == m.row(0)[i]);
    CHECK(windows[1].signal[i] == m.row(0)[5 + i]);
  }
  const auto& last = windows[1980];
  CHECK(last.start == 9900);
  CHECK(last.label == std::array<int, 4>{1, 0, 0, 0});
  CHECK(windows[1981].detector_index == 1);
}

TEST_CASE("add_awgn: snr inf is identity, noise variance is calibrated") {
  Rng src(9);
  Tensor<double> w({kWindowLen, 1});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = src.normal();
  // normalize to unit power
  double p = 0;
  for (std::size_t i = 0; i < w.size(); ++i) p += w[i] * w[i];
  p /= double(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] /= std::sqrt(p);

  Rng rng(10);
  auto same = add_awgn(w, std::numeric_limits<double>::infinity(), rng);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(same[i] == w[i]);

  double noise_sq = 0;
  std::size_t count = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    Rng tr = rng.derive(std::uint64_t(trial));
    auto noisy = add_awgn(w, 10.0, tr);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double n = noisy[i] - w[i];
      noise_sq += n * n;
      ++count;
    }
  }
  const double var = noise_sq / double(count);
  CHECK(std::abs(var - 0.1) / 0.1 < 0.05);
}

TEST_CASE("add_awgn: empirical SNR within half a dB, clean recoverable") {
  Rng src(11);
  Rng rng(12);
  double snr_sum = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Tensor<double> w({kWindowLen, 1});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = src.normal(0.0, 2.0);
    Rng tr = rng.derive(std::uint64_t(t));
    auto noisy = add_awgn(w, 5.0, tr);
    double ps = 0, pn = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      ps += w[i] * w[i];
      const double n = noisy[i] - w[i];  // stored-noise recovery
      pn += n * n;
    }
    snr_sum += 10.0 * std::log10(ps / pn);
  }
  CHECK(std::abs(snr_sum / trials - 5.0) < 0.5);

  // deterministic given the stream
  Tensor<double> w({kWindowLen, 1});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = src.normal();
  Rng r1(77), r2(77);
  auto n1 = add_awgn(w, 10.0, r1);
  auto n2 = add_awgn(w, 10.0, r2);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(n1[i] == n2[i]);
}

TEST_CASE("add_awgn: zero-power window skipped with a warning count") {
  Tensor<double> w({kWindowLen, 1});
  Rng rng(13);
  std::size_t skipped = 0;
  auto out = add_awgn(w, 10.0, rng, &skipped);
  CHECK(skipped == 1);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("split_by_detector: default 28/14/14, disjoint cover") {
  auto layout = DetectorLayout::standard();
  Rng rng(14);
  auto split = default_detector_split(layout, rng);
  CHECK(split.train.size() == 28);
  CHECK(split.valid.size() == 14);
  CHECK(split.test.size() == 14);
  std::set<int> all;
  for (const auto* part : {&split.train, &split.valid, &split.test})
    for (int d : *part) CHECK(all.insert(d).second);
  CHECK(all.size() == 56);
}

TEST_CASE("split_by_detector: overlap and gaps rejected") {
  auto layout = DetectorLayout::standard();
  DetectorSplit bad;
  for (int i = 0; i < 28; ++i) bad.train.push_back(i);
  for (int i = 27; i < 42; ++i) bad.valid.push_back(i);  // 27 overlaps
  for (int i = 42; i < 56; ++i) bad.test.push_back(i);
  CHECK_THROWS_AS(validate_detector_split(layout, bad), ValidationError);
  DetectorSplit gap;
  for (int i = 0; i < 28; ++i) gap.train.push_back(i);
  for (int i = 28; i < 42; ++i) gap.valid.push_back(i);
  for (int i = 42; i < 55; ++i) gap.test.push_back(i);  // 55 missing
  CHECK_THROWS_AS(validate_detector_split(layout, gap), ValidationError);
}
