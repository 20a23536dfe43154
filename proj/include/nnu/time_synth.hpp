#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nnu/rng.hpp"
#include "nnu/tensor.hpp"

namespace nnu {

// ---------------------------------------------------------------------------
// Detector layout: 48 in-core (8 radial sites x 6 axial levels) plus 8
// ex-core (4 sites x levels {1,6}), 56 total. Radial positions are in
// fuel-assembly units on the 15x15 grid; ex-core sites sit outside it.
// ---------------------------------------------------------------------------
struct Detector {
  std::string id;  // e.g. "C03-L2"
  double x = 0.0, y = 0.0;
  int level = 1;  // 1..6
  bool ex_core = false;
};

struct DetectorLayout {
  std::vector<Detector> detectors;
  static DetectorLayout standard();
};

enum class ComponentKind { FaWhiteNoise = 0, FaSine = 1, Temperature = 2, Flow = 3 };

struct ScenarioComponent {
  ComponentKind kind;
  double amplitude;  // mm for FA vibration, degC for temperature, % for flow
};

// id_bits order: (FA-WN, FA-sine, temperature, flow)
struct ScenarioSpec {
  int id = 0;
  std::array<int, 4> id_bits{};
  std::vector<ScenarioComponent> components;
};

// The 13 scenarios. Combined entries follow the ID bit columns; the two
// FA rows pair amplitudes 1.0 mm / 0.5 mm.
const std::vector<ScenarioSpec>& scenario_table();
const ScenarioSpec& scenario_by_id(int id);

struct TimeSurrogateConstants {
  double baseline = 1.0;             // normalized flux
  double intrinsic_noise_std = 0.002;  // relative to baseline
  double fa_coeff = 0.01;            // per mm of vibration amplitude
  double fa_decay = 4.0;             // radial decay length, FA units
  double th_coeff = 0.005;           // temperature / flow coefficient
  double level_delay_s = 0.2;        // axial transport delay per level
  double ex_core_atten = 0.5;
  double fa_cutoff_hz = 5.0;
  double temp_cutoff_hz = 0.5;
  double flow_cutoff_hz = 2.0;
  double fa_sine_freq_hz = 1.0;      // table value; 0.1 Hz selectable
  double cluster_x = 7.0, cluster_y = 7.0;  // 5x5 cluster center
};

// 56 x 10001 record, dt = 0.01 s, 100 s duration.
struct SignalMatrix {
  static constexpr double kDt = 0.01;
  static constexpr std::size_t kSamples = 10001;
  std::size_t detectors = 0;
  std::vector<double> data;  // row-major [detector][sample]

  double* row(std::size_t d) { return data.data() + d * kSamples; }
  const double* row(std::size_t d) const { return data.data() + d * kSamples; }
};

// Detector d: x_d(t) = B + sum_p a_{p,d} s_p(t - tau_{p,d}) + eps_d(t).
// Component waveforms are drawn from streams keyed by (seed, component kind)
// so shared-seed scenarios share component signals exactly; intrinsic noise
// is keyed by (seed, scenario, detector).
SignalMatrix synth_scenario(const ScenarioSpec& spec,
                            const DetectorLayout& layout, std::uint64_t seed,
                            const TimeSurrogateConstants& tc = {});

// Removes the per-detector trend, estimated as the full-record mean.
SignalMatrix detrend(const SignalMatrix& m);

// ---------------------------------------------------------------------------
// Window sampling: 100-step windows, stride 5, starts 0,5,10,...
// ---------------------------------------------------------------------------
inline constexpr std::size_t kWindowLen = 100;
inline constexpr std::size_t kWindowStride = 5;

inline std::size_t window_count(std::size_t signal_len,
                                std::size_t window = kWindowLen,
                                std::size_t stride = kWindowStride) {
  if (window > signal_len)
    throw ValidationError("window longer than signal");
  return (signal_len - window) / stride + 1;
}

template <typename T>
struct WindowSample {
  Tensor<T> signal;  // [window, 1]
  std::array<int, 4> label{};
  int detector_index = 0;
  int scenario_id = 0;
  int start = 0;
};

template <typename T>
std::vector<WindowSample<T>> make_windows(const SignalMatrix& m,
                                          const ScenarioSpec& spec,
                                          std::size_t window = kWindowLen,
                                          std::size_t stride = kWindowStride) {
  const std::size_t per_det = window_count(SignalMatrix::kSamples, window, stride);
  std::vector<WindowSample<T>> out;
  out.reserve(m.detectors * per_det);
  for (std::size_t d = 0; d < m.detectors; ++d) {
    const double* sig = m.row(d);
    for (std::size_t w = 0; w < per_det; ++w) {
      WindowSample<T> s;
      s.signal = Tensor<T>({window, 1});
      const std::size_t start = w * stride;
      for (std::size_t i = 0; i < window; ++i)
        s.signal[i] = static_cast<T>(sig[start + i]);
      s.label = spec.id_bits;
      s.detector_index = int(d);
      s.scenario_id = spec.id;
      s.start = int(start);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// Adds zero-mean Gaussian noise with variance signal_power / 10^(snr/10),
// signal_power = mean of the squared (detrended) window samples. Zero-power
// windows are returned unchanged and counted in *skipped.
template <typename T>
Tensor<T> add_awgn(const Tensor<T>& window, double snr_db, Rng& rng,
                   std::size_t* skipped = nullptr) {
  if (std::isinf(snr_db)) return window.clone();
  double power = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i)
    power += double(window[i]) * double(window[i]);
  power /= double(window.size());
  if (power <= 0.0) {
    if (skipped) ++*skipped;
    return window.clone();
  }
  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Tensor<T> out(window.shape());
  for (std::size_t i = 0; i < window.size(); ++i)
    out[i] = static_cast<T>(double(window[i]) + rng.normal(0.0, noise_std));
  return out;
}

// ---------------------------------------------------------------------------
// Detector-level partitioning (windows from one detector never split across
// partitions). Default assignment: seeded shuffle, 28/14/14.
// ---------------------------------------------------------------------------
struct DetectorSplit {
  std::vector<int> train, valid, test;
};

DetectorSplit default_detector_split(const DetectorLayout& layout, Rng& rng);

// Validates that the assignment covers every detector exactly once.
void validate_detector_split(const DetectorLayout& layout,
                             const DetectorSplit& split);

}  // namespace nnu
