#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nnu/rng.hpp"
#include "nnu/tensor.hpp"

namespace nnu {

// 32x32x26 voxel mesh over a 15x15 fuel-assembly radial core.
struct CoreGeometry {
  std::size_t nx = 32, ny = 32, nz = 26;
  std::size_t fa_nx = 15, fa_ny = 15;  // metadata only
  std::size_t radial() const { return nx * ny; }
  std::size_t voxels() const { return nx * ny * nz; }
};

enum class PerturbationType { Localised, Propagating1, Propagating2 };

const char* perturbation_name(PerturbationType t);

// Analytic surrogate constants for the two-group response kernel. Distances
// are in voxel units, speeds in voxels per second.
struct SurrogateConstants {
  double c_fast = 1.0;
  double c_thermal = 0.6;
  double len_fast = 8.0;
  double len_thermal = 4.0;
  double v_fast = 60.0;
  double v_thermal = 60.0;
  double u_coolant = 20.0;  // axial transport speed for propagating types
};

struct PerturbationSpec {
  PerturbationType ptype = PerturbationType::Localised;
  int i = 0, j = 0, k = 0;  // source voxel
  double frequency = 1.0;   // Hz
  double strength = 1.0;
};

// Two-group response: per-group amplitude and phase over the core mesh,
// row-major (i, j, k). Amplitudes are nonnegative, phases in (-pi, pi].
struct ComplexField {
  std::vector<double> fast_amp, fast_phase, thermal_amp, thermal_phase;

  static ComplexField zeros(const CoreGeometry& g) {
    ComplexField f;
    f.fast_amp.assign(g.voxels(), 0.0);
    f.fast_phase.assign(g.voxels(), 0.0);
    f.thermal_amp.assign(g.voxels(), 0.0);
    f.thermal_phase.assign(g.voxels(), 0.0);
    return f;
  }
};

// Radial 32x32 keep-mask, replicated across all axial layers.
struct SensorMask {
  std::vector<std::uint8_t> keep;  // row-major (i, j)
  std::size_t true_count() const {
    std::size_t n = 0;
    for (auto b : keep) n += b;
    return n;
  }
};

inline double wrap_phase(double x) {
  double p = std::fmod(x + std::numbers::pi, 2.0 * std::numbers::pi);
  if (p <= 0.0) p += 2.0 * std::numbers::pi;
  return p - std::numbers::pi;
}

// Surrogate of the Green's-function forward problem for one perturbation.
ComplexField green_response(const CoreGeometry& geom,
                            const PerturbationSpec& spec,
                            const SurrogateConstants& sc = {});

// Complex superposition of several responses (amp/phase -> re/im -> back).
ComplexField superpose(const CoreGeometry& geom,
                       const std::vector<ComplexField>& fields);

// Keep-mask with exactly round(fraction * nx * ny) true cells (half-up).
SensorMask make_mask(const CoreGeometry& geom, double fraction, Rng& rng);

// Zeroes all four grids wherever the radial mask is false, on every layer.
ComplexField apply_mask(const CoreGeometry& geom, const ComplexField& field,
                        const SensorMask& mask);

std::size_t mask_cardinality(const CoreGeometry& geom, double fraction);

// ---------------------------------------------------------------------------
// Volume assembly: 2x2 tiling of the four grids (fast-amp top-left,
// fast-phase top-right, thermal-amp bottom-left, thermal-phase bottom-right)
// into 64x64x26, then axial zero-pad 3 leading / 3 trailing -> 64x64x32x1.
// ---------------------------------------------------------------------------
inline constexpr std::size_t kVolumeAxialLead = 3;

template <typename T>
Tensor<T> assemble_volume(const CoreGeometry& g, const ComplexField& f) {
  const std::size_t vd = 2 * g.nx, vh = 2 * g.ny, vw = g.nz + 6;
  Tensor<T> vol({vd, vh, vw, 1});
  auto put = [&](const std::vector<double>& grid, std::size_t oi,
                 std::size_t oj) {
    for (std::size_t i = 0; i < g.nx; ++i)
      for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t k = 0; k < g.nz; ++k)
          vol[((oi + i) * vh + (oj + j)) * vw + (k + kVolumeAxialLead)] =
              static_cast<T>(grid[(i * g.ny + j) * g.nz + k]);
  };
  put(f.fast_amp, 0, 0);
  put(f.fast_phase, 0, g.ny);
  put(f.thermal_amp, g.nx, 0);
  put(f.thermal_phase, g.nx, g.ny);
  return vol;
}

// Inverse of assemble_volume over the non-padding cells.
template <typename T>
ComplexField disassemble_volume(const CoreGeometry& g, const Tensor<T>& vol) {
  if (vol.rank() < 3)
    throw DimensionError("disassemble_volume expects a 64x64x32 volume, got " +
                         shape_str(vol.shape()));
  const std::size_t vh = 2 * g.ny, vw = g.nz + 6;
  ComplexField f = ComplexField::zeros(g);
  auto take = [&](std::vector<double>& grid, std::size_t oi, std::size_t oj) {
    for (std::size_t i = 0; i < g.nx; ++i)
      for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t k = 0; k < g.nz; ++k)
          grid[(i * g.ny + j) * g.nz + k] = static_cast<double>(
              vol[((oi + i) * vh + (oj + j)) * vw + (k + kVolumeAxialLead)]);
  };
  take(f.fast_amp, 0, 0);
  take(f.fast_phase, 0, g.ny);
  take(f.thermal_amp, g.nx, 0);
  take(f.thermal_phase, g.nx, g.ny);
  return f;
}

// ---------------------------------------------------------------------------
// Labeled samples
// ---------------------------------------------------------------------------

// class_bits order: (Localised, Propagating1, Propagating2). coords hold the
// three (i,j,k) triplets normalized to [0,1] per axis; absent triplets are
// zero-filled with their coord_mask bit clear.
template <typename T>
struct VolumeSample {
  int id = 0;
  std::string family;  // Localised | Propagating1 | Propagating2 | Combined
  double frequency = 0.0;
  std::array<int, 3> class_bits{};
  std::array<std::array<int, 3>, 3> voxel_coords{};  // raw integer sources
  std::array<double, 9> coords{};                    // normalized targets
  std::array<int, 3> coord_mask{};
  Tensor<T> input;  // [64,64,32,1]
};

struct FreqGenConfig {
  std::size_t count_per_type = 512;  // per type (single) / total (combined)
  double fraction = 0.20;
  std::vector<double> frequencies = {0.1, 1.0, 10.0};
  bool combined = false;
  double strength = 1.0;
  SurrogateConstants surrogate;
};

inline double normalize_coord(int v, std::size_t extent) {
  return double(v) / double(extent - 1);
}
inline double denormalize_coord(double v, std::size_t extent) {
  return v * double(extent - 1);
}

// Per-sample details shared by the generator and the manifest writer.
struct FreqSampleMeta {
  std::string family;
  double frequency;
  std::array<int, 3> class_bits;
  std::array<std::array<int, 3>, 3> voxel_coords;
  std::array<int, 3> coord_mask;
  std::vector<PerturbationSpec> perturbations;
};

// Draws the perturbation set, sources and frequency for sample `index` from
// its derived stream. Pure given (config, seed, index).
FreqSampleMeta draw_freq_sample(const CoreGeometry& geom,
                                const FreqGenConfig& cfg, std::uint64_t seed,
                                std::size_t index, std::size_t total);

std::size_t freq_dataset_size(const FreqGenConfig& cfg);

// Full sample: draw, superpose responses, mask, assemble.
template <typename T>
VolumeSample<T> gen_freq_sample(const CoreGeometry& geom,
                                const FreqGenConfig& cfg, std::uint64_t seed,
                                std::size_t index) {
  const std::size_t total = freq_dataset_size(cfg);
  FreqSampleMeta meta = draw_freq_sample(geom, cfg, seed, index, total);
  std::vector<ComplexField> parts;
  for (const auto& p : meta.perturbations)
    parts.push_back(green_response(geom, p, cfg.surrogate));
  ComplexField field = superpose(geom, parts);
  Rng mask_rng = Rng(seed).derive(index).derive(0xA5A5);
  SensorMask mask = make_mask(geom, cfg.fraction, mask_rng);
  field = apply_mask(geom, field, mask);

  VolumeSample<T> s;
  s.id = static_cast<int>(index);
  s.family = meta.family;
  s.frequency = meta.frequency;
  s.class_bits = meta.class_bits;
  s.voxel_coords = meta.voxel_coords;
  s.coord_mask = meta.coord_mask;
  const std::array<std::size_t, 3> extent = {geom.nx, geom.ny, geom.nz};
  for (int t = 0; t < 3; ++t)
    for (int a = 0; a < 3; ++a)
      s.coords[std::size_t(t) * 3 + std::size_t(a)] =
          meta.coord_mask[std::size_t(t)]
              ? normalize_coord(meta.voxel_coords[std::size_t(t)][std::size_t(a)],
                                extent[std::size_t(a)])
              : 0.0;
  s.input = assemble_volume<T>(geom, field);
  return s;
}

template <typename T>
std::vector<VolumeSample<T>> gen_freq_dataset(const CoreGeometry& geom,
                                              const FreqGenConfig& cfg,
                                              std::uint64_t seed) {
  if (cfg.count_per_type == 0)
    throw ValidationError("gen_freq_dataset needs count > 0");
  const std::size_t total = freq_dataset_size(cfg);
  std::vector<VolumeSample<T>> out;
  out.reserve(total);
  for (std::size_t s = 0; s < total; ++s)
    out.push_back(gen_freq_sample<T>(geom, cfg, seed, s));
  return out;
}

}  // namespace nnu
