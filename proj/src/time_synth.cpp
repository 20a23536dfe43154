#include "nnu/time_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace nnu {

DetectorLayout DetectorLayout::standard() {
  // 8 in-core radial sites: four corner-region and four mid-cross positions
  // on the 15x15 grid (column letter A..O, row number 01..15).
  struct Site {
    double x, y;
  };
  const Site in_core[8] = {{2, 2},  {2, 12},  {12, 2}, {12, 12},
                           {7, 4},  {7, 10},  {4, 7},  {10, 7}};
  const Site ex_core[4] = {{-2, 7}, {16, 7}, {7, -2}, {7, 16}};

  auto site_name = [](double x, double y) {
    const char col = char('A' + int(x));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%02d", col, int(y) + 1);
    return std::string(buf);
  };

  DetectorLayout layout;
  for (const auto& s : in_core) {
    for (int level = 1; level <= 6; ++level) {
      Detector d;
      d.x = s.x;
      d.y = s.y;
      d.level = level;
      d.ex_core = false;
      d.id = site_name(s.x, s.y) + "-L" + std::to_string(level);
      layout.detectors.push_back(d);
    }
  }
  int xi = 1;
  for (const auto& s : ex_core) {
    for (int level : {1, 6}) {
      Detector d;
      d.x = s.x;
      d.y = s.y;
      d.level = level;
      d.ex_core = true;
      d.id = "X" + std::to_string(xi) + "-L" + std::to_string(level);
      layout.detectors.push_back(d);
    }
    ++xi;
  }
  return layout;
}

const std::vector<ScenarioSpec>& scenario_table() {
  static const std::vector<ScenarioSpec> table = [] {
    using K = ComponentKind;
    auto fa_wn = [](double mm) { return ScenarioComponent{K::FaWhiteNoise, mm}; };
    auto fa_sine = [](double mm) { return ScenarioComponent{K::FaSine, mm}; };
    const ScenarioComponent temp{K::Temperature, 1.0};  // +-1 degC
    const ScenarioComponent flow{K::Flow, 1.0};         // +-1 %
    std::vector<ScenarioSpec> t;
    t.push_back({1, {1, 0, 0, 0}, {fa_wn(1.0)}});
    t.push_back({2, {0, 1, 0, 0}, {fa_sine(1.0)}});
    t.push_back({3, {0, 0, 1, 0}, {temp}});
    t.push_back({4, {0, 0, 0, 1}, {flow}});
    t.push_back({5, {0, 0, 1, 1}, {temp, flow}});
    t.push_back({6, {1, 0, 1, 0}, {fa_wn(1.0), temp}});
    t.push_back({7, {1, 0, 1, 0}, {fa_wn(0.5), temp}});
    t.push_back({8, {0, 1, 1, 0}, {fa_sine(1.0), temp}});
    t.push_back({9, {0, 1, 1, 0}, {fa_sine(0.5), temp}});
    t.push_back({10, {1, 0, 0, 1}, {fa_wn(1.0), flow}});
    t.push_back({11, {1, 0, 0, 1}, {fa_wn(0.5), flow}});
    t.push_back({12, {0, 1, 0, 1}, {fa_sine(1.0), flow}});
    t.push_back({13, {0, 1, 0, 1}, {fa_sine(0.5), flow}});
    return t;
  }();
  return table;
}

const ScenarioSpec& scenario_by_id(int id) {
  const auto& t = scenario_table();
  if (id < 1 || id > int(t.size()))
    throw ValidationError("unknown scenario id " + std::to_string(id));
  return t[std::size_t(id - 1)];
}

namespace {

// Component waveforms are sampled on a buffer covering t in [-1s, 100s] so
// delayed reads s(t - tau) stay in range (max delay 5 * 0.2s = 1s).
constexpr std::size_t kLeadSamples = 100;
constexpr std::size_t kBufSamples = SignalMatrix::kSamples + kLeadSamples;

// Windowed-sinc FIR low-pass, Hamming window. Long enough that the 0.5 Hz
// and 2 Hz bands stay clearly separated at fs = 100 Hz.
std::vector<double> lowpass_taps(double cutoff_hz, double fs, std::size_t ntaps) {
  std::vector<double> h(ntaps);
  const double fc = cutoff_hz / fs;
  const double mid = double(ntaps - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t n = 0; n < ntaps; ++n) {
    const double m = double(n) - mid;
    const double sinc = (m == 0.0)
                            ? 2.0 * fc
                            : std::sin(2.0 * std::numbers::pi * fc * m) /
                                  (std::numbers::pi * m);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * double(n) /
                                            double(ntaps - 1));
    h[n] = sinc * w;
    sum += h[n];
  }
  for (auto& v : h) v /= sum;  // unit DC gain
  return h;
}

// "same" convolution with zero-padded edges
std::vector<double> fir_filter(const std::vector<double>& x,
                               const std::vector<double>& h) {
  const std::ptrdiff_t n = std::ptrdiff_t(x.size());
  const std::ptrdiff_t m = std::ptrdiff_t(h.size());
  const std::ptrdiff_t half = m / 2;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const std::ptrdiff_t k0 = std::max<std::ptrdiff_t>(0, i + half - n + 1);
    const std::ptrdiff_t k1 = std::min<std::ptrdiff_t>(m - 1, i + half);
    for (std::ptrdiff_t k = k0; k <= k1; ++k) acc += h[std::size_t(k)] * x[std::size_t(i + half - k)];
    y[std::size_t(i)] = acc;
  }
  return y;
}

void normalize_unit_var(std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(x.size());
  const double inv = 1.0 / std::sqrt(var);
  for (auto& v : x) v = (v - mean) * inv;
}

// Unit-variance noise band-limited to [0, cutoff].
std::vector<double> band_limited_noise(Rng& rng, double cutoff_hz, double fs) {
  std::vector<double> x(kBufSamples);
  for (auto& v : x) v = rng.normal();
  auto y = fir_filter(x, lowpass_taps(cutoff_hz, fs, 1001));
  normalize_unit_var(y);
  return y;
}

std::vector<double> sine_wave(double freq_hz) {
  std::vector<double> x(kBufSamples);
  for (std::size_t i = 0; i < kBufSamples; ++i) {
    const double t = (double(i) - double(kLeadSamples)) * SignalMatrix::kDt;
    x[i] = std::sin(2.0 * std::numbers::pi * freq_hz * t);
  }
  return x;
}

}  // namespace

SignalMatrix synth_scenario(const ScenarioSpec& spec,
                            const DetectorLayout& layout, std::uint64_t seed,
                            const TimeSurrogateConstants& tc) {
  if (spec.id < 1) throw ValidationError("invalid scenario spec");
  const double fs = 1.0 / SignalMatrix::kDt;
  const Rng root(seed);

  // One waveform per component kind, shared across scenarios for a given
  // seed (combined scenarios sum exactly the single-scenario components).
  std::vector<std::vector<double>> waves;
  for (const auto& comp : spec.components) {
    Rng stream = root.derive(std::uint64_t(comp.kind));
    switch (comp.kind) {
      case ComponentKind::FaWhiteNoise:
        waves.push_back(band_limited_noise(stream, tc.fa_cutoff_hz, fs));
        break;
      case ComponentKind::FaSine:
        waves.push_back(sine_wave(tc.fa_sine_freq_hz));
        break;
      case ComponentKind::Temperature:
        waves.push_back(band_limited_noise(stream, tc.temp_cutoff_hz, fs));
        break;
      case ComponentKind::Flow:
        waves.push_back(band_limited_noise(stream, tc.flow_cutoff_hz, fs));
        break;
    }
  }

  SignalMatrix m;
  m.detectors = layout.detectors.size();
  m.data.assign(m.detectors * SignalMatrix::kSamples, tc.baseline);

  const std::size_t delay_samples_per_level =
      std::size_t(std::llround(tc.level_delay_s / SignalMatrix::kDt));

  for (std::size_t d = 0; d < m.detectors; ++d) {
    const Detector& det = layout.detectors[d];
    double* sig = m.row(d);

    for (std::size_t p = 0; p < spec.components.size(); ++p) {
      const auto& comp = spec.components[p];
      double a = 0.0;
      std::size_t shift = 0;  // in samples
      switch (comp.kind) {
        case ComponentKind::FaWhiteNoise:
        case ComponentKind::FaSine: {
          const double dx = det.x - tc.cluster_x, dy = det.y - tc.cluster_y;
          const double rho = std::sqrt(dx * dx + dy * dy);
          a = tc.fa_coeff * comp.amplitude * std::exp(-rho / tc.fa_decay);
          shift = 0;
          break;
        }
        case ComponentKind::Temperature:
        case ComponentKind::Flow:
          a = tc.th_coeff * comp.amplitude;
          shift = std::size_t(det.level - 1) * delay_samples_per_level;
          break;
      }
      if (det.ex_core) a *= tc.ex_core_atten;
      const std::vector<double>& s = waves[p];
      for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
        sig[i] += a * s[i + kLeadSamples - shift];
    }

    if (tc.intrinsic_noise_std > 0.0) {
      Rng noise = root.derive(0x10000 + std::uint64_t(spec.id) * 64 + d);
      const double std = tc.intrinsic_noise_std * tc.baseline;
      for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i)
        sig[i] += noise.normal(0.0, std);
    }
  }
  return m;
}

SignalMatrix detrend(const SignalMatrix& m) {
  SignalMatrix out = m;
  for (std::size_t d = 0; d < m.detectors; ++d) {
    double* sig = out.row(d);
    // two passes nail the residual mean to the eps level
    for (int pass = 0; pass < 2; ++pass) {
      double mean = 0.0;
      for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i) mean += sig[i];
      mean /= double(SignalMatrix::kSamples);
      for (std::size_t i = 0; i < SignalMatrix::kSamples; ++i) sig[i] -= mean;
    }
  }
  return out;
}

DetectorSplit default_detector_split(const DetectorLayout& layout, Rng& rng) {
  std::vector<int> idx(layout.detectors.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  DetectorSplit s;
  const std::size_t n = idx.size();
  const std::size_t ntrain = n / 2, nvalid = n / 4;
  s.train.assign(idx.begin(), idx.begin() + std::ptrdiff_t(ntrain));
  s.valid.assign(idx.begin() + std::ptrdiff_t(ntrain),
                 idx.begin() + std::ptrdiff_t(ntrain + nvalid));
  s.test.assign(idx.begin() + std::ptrdiff_t(ntrain + nvalid), idx.end());
  validate_detector_split(layout, s);
  return s;
}

void validate_detector_split(const DetectorLayout& layout,
                             const DetectorSplit& split) {
  std::set<int> seen;
  auto check = [&](const std::vector<int>& part) {
    for (int d : part) {
      if (d < 0 || d >= int(layout.detectors.size()))
        throw ValidationError("detector index " + std::to_string(d) +
                              " out of range");
      if (!seen.insert(d).second)
        throw ValidationError("detector " + std::to_string(d) +
                              " assigned to more than one partition");
    }
  };
  check(split.train);
  check(split.valid);
  check(split.test);
  if (seen.size() != layout.detectors.size())
    throw ValidationError("split covers " + std::to_string(seen.size()) +
                          " of " + std::to_string(layout.detectors.size()) +
                          " detectors");
}

}  // namespace nnu
