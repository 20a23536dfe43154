#include "nnu/freq_synth.hpp"

#include <cmath>
#include <complex>

namespace nnu {

const char* perturbation_name(PerturbationType t) {
  switch (t) {
    case PerturbationType::Localised:
      return "Localised";
    case PerturbationType::Propagating1:
      return "Propagating1";
    case PerturbationType::Propagating2:
      return "Propagating2";
  }
  return "?";
}

namespace {

void validate_spec(const CoreGeometry& g, const PerturbationSpec& s) {
  if (s.i < 0 || s.i >= int(g.nx) || s.j < 0 || s.j >= int(g.ny) || s.k < 0 ||
      s.k >= int(g.nz))
    throw ValidationError("perturbation source (" + std::to_string(s.i) + "," +
                          std::to_string(s.j) + "," + std::to_string(s.k) +
                          ") outside the " + std::to_string(g.nx) + "x" +
                          std::to_string(g.ny) + "x" + std::to_string(g.nz) +
                          " mesh");
  if (s.strength <= 0.0)
    throw ValidationError("perturbation strength must be positive");
}

double dist(int i0, int j0, int k0, int i1, int j1, int k1) {
  const double di = i0 - i1, dj = j0 - j1, dk = k0 - k1;
  return std::sqrt(di * di + dj * dj + dk * dk);
}

}  // namespace

ComplexField green_response(const CoreGeometry& g, const PerturbationSpec& s,
                            const SurrogateConstants& sc) {
  validate_spec(g, s);
  ComplexField f = ComplexField::zeros(g);
  const double two_pi_f = 2.0 * std::numbers::pi * s.frequency;

  struct Group {
    double c, len, v;
    std::vector<double>* amp;
    std::vector<double>* phase;
  };
  const Group groups[2] = {
      {sc.c_fast, sc.len_fast, sc.v_fast, &f.fast_amp, &f.fast_phase},
      {sc.c_thermal, sc.len_thermal, sc.v_thermal, &f.thermal_amp,
       &f.thermal_phase}};

  if (s.ptype == PerturbationType::Localised) {
    for (const auto& grp : groups) {
      for (std::size_t i = 0; i < g.nx; ++i)
        for (std::size_t j = 0; j < g.ny; ++j)
          for (std::size_t k = 0; k < g.nz; ++k) {
            const double d = dist(int(i), int(j), int(k), s.i, s.j, s.k);
            const std::size_t idx = (i * g.ny + j) * g.nz + k;
            (*grp.amp)[idx] = s.strength * grp.c * std::exp(-d / grp.len);
            (*grp.phase)[idx] = wrap_phase(-two_pi_f * d / grp.v);
          }
    }
    return f;
  }

  // Propagating: uniform superposition of the localised kernel over the
  // axial column at (i, j) -- full column above the inlet for type 1,
  // levels >= k for type 2 -- with an extra transport phase -2*pi*f*z/u.
  const int z0 = (s.ptype == PerturbationType::Propagating1) ? 0 : s.k;
  const double weight = 1.0 / double(int(g.nz) - z0);
  for (const auto& grp : groups) {
    for (std::size_t i = 0; i < g.nx; ++i)
      for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t k = 0; k < g.nz; ++k) {
          std::complex<double> acc(0.0, 0.0);
          for (int z = z0; z < int(g.nz); ++z) {
            const double d = dist(int(i), int(j), int(k), s.i, s.j, z);
            const double mag = weight * s.strength * grp.c * std::exp(-d / grp.len);
            const double theta =
                -two_pi_f * d / grp.v - two_pi_f * double(z) / sc.u_coolant;
            acc += std::polar(mag, theta);
          }
          const std::size_t idx = (i * g.ny + j) * g.nz + k;
          (*grp.amp)[idx] = std::abs(acc);
          (*grp.phase)[idx] = wrap_phase(std::arg(acc));
        }
  }
  return f;
}

ComplexField superpose(const CoreGeometry& g,
                       const std::vector<ComplexField>& fields) {
  if (fields.size() == 1) return fields[0];
  ComplexField out = ComplexField::zeros(g);
  if (fields.empty()) return out;
  for (std::size_t idx = 0; idx < g.voxels(); ++idx) {
    std::complex<double> fast(0.0, 0.0), thermal(0.0, 0.0);
    for (const auto& f : fields) {
      fast += std::polar(f.fast_amp[idx], f.fast_phase[idx]);
      thermal += std::polar(f.thermal_amp[idx], f.thermal_phase[idx]);
    }
    out.fast_amp[idx] = std::abs(fast);
    out.fast_phase[idx] = wrap_phase(std::arg(fast));
    out.thermal_amp[idx] = std::abs(thermal);
    out.thermal_phase[idx] = wrap_phase(std::arg(thermal));
  }
  return out;
}

std::size_t mask_cardinality(const CoreGeometry& g, double fraction) {
  return static_cast<std::size_t>(
      std::llround(fraction * double(g.radial())));
}

SensorMask make_mask(const CoreGeometry& g, double fraction, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ValidationError("sensor fraction must lie in [0,1]");
  const std::size_t keep_n = mask_cardinality(g, fraction);
  std::vector<std::uint32_t> idx(g.radial());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = static_cast<std::uint32_t>(i);
  // partial Fisher-Yates: the first keep_n entries are the kept positions
  for (std::size_t i = 0; i < keep_n; ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  SensorMask m;
  m.keep.assign(g.radial(), 0);
  for (std::size_t i = 0; i < keep_n; ++i) m.keep[idx[i]] = 1;
  return m;
}

ComplexField apply_mask(const CoreGeometry& g, const ComplexField& field,
                        const SensorMask& mask) {
  if (mask.keep.size() != g.radial())
    throw ValidationError("mask size " + std::to_string(mask.keep.size()) +
                          " does not match radial grid " +
                          std::to_string(g.radial()));
  ComplexField out = field;
  for (std::size_t i = 0; i < g.nx; ++i)
    for (std::size_t j = 0; j < g.ny; ++j) {
      if (mask.keep[i * g.ny + j]) continue;
      const std::size_t base = (i * g.ny + j) * g.nz;
      for (std::size_t k = 0; k < g.nz; ++k) {
        out.fast_amp[base + k] = 0.0;
        out.fast_phase[base + k] = 0.0;
        out.thermal_amp[base + k] = 0.0;
        out.thermal_phase[base + k] = 0.0;
      }
    }
  return out;
}

std::size_t freq_dataset_size(const FreqGenConfig& cfg) {
  return cfg.combined ? cfg.count_per_type : 3 * cfg.count_per_type;
}

FreqSampleMeta draw_freq_sample(const CoreGeometry& geom,
                                const FreqGenConfig& cfg, std::uint64_t seed,
                                std::size_t index, std::size_t total) {
  if (cfg.frequencies.empty())
    throw ValidationError("frequency list must not be empty");
  if (index >= total) throw ValidationError("sample index out of range");

  Rng rng = Rng(seed).derive(index);
  FreqSampleMeta meta;
  meta.class_bits = {0, 0, 0};
  meta.coord_mask = {0, 0, 0};
  meta.voxel_coords = {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
  meta.frequency =
      cfg.frequencies[rng.uniform_int(cfg.frequencies.size())];

  int present[3] = {0, 0, 0};
  if (cfg.combined) {
    // uniform over the 7 nonempty subsets of {Localised, Prop1, Prop2}
    const std::uint64_t subset = 1 + rng.uniform_int(7);
    present[0] = int(subset & 1);
    present[1] = int((subset >> 1) & 1);
    present[2] = int((subset >> 2) & 1);
    meta.family = "Combined";
  } else {
    const std::size_t per_type = cfg.count_per_type;
    const std::size_t type = index / per_type;  // families contiguous
    present[type] = 1;
    meta.family = perturbation_name(static_cast<PerturbationType>(type));
  }

  auto draw_coord = [&](PerturbationType t) {
    std::array<int, 3> c;
    for (;;) {
      c[0] = int(rng.uniform_int(geom.nx));
      c[1] = int(rng.uniform_int(geom.ny));
      c[2] = (t == PerturbationType::Propagating1)
                 ? 0  // type 1 starts at the inlet
                 : int(rng.uniform_int(geom.nz));
      bool distinct = true;
      for (int p = 0; p < 3; ++p)
        if (meta.coord_mask[std::size_t(p)] &&
            meta.voxel_coords[std::size_t(p)] == c)
          distinct = false;
      if (distinct) return c;
    }
  };

  for (int t = 0; t < 3; ++t) {
    if (!present[t]) continue;
    const auto type = static_cast<PerturbationType>(t);
    const auto c = draw_coord(type);
    meta.class_bits[std::size_t(t)] = 1;
    meta.voxel_coords[std::size_t(t)] = c;
    meta.coord_mask[std::size_t(t)] = 1;
    PerturbationSpec p;
    p.ptype = type;
    p.i = c[0];
    p.j = c[1];
    p.k = c[2];
    p.frequency = meta.frequency;
    p.strength = cfg.strength;
    meta.perturbations.push_back(p);
  }
  return meta;
}

}  // namespace nnu
