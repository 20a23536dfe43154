#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nnu/freq_synth.hpp"
#include "nnu/nnt.hpp"
#include "nnu/time_synth.hpp"

namespace nnu {

// ---------------------------------------------------------------------------
// Frequency-domain dataset directory:
//   manifest.tsv  one row per sample:
//     id  family  freq  class  i0,j0,k0,i1,j1,k1,i2,j2,k2  mask  path
//   tensors/sample_XXXXXX.nnt
// Coordinates are raw voxel integers; normalization happens at batch time.
// ---------------------------------------------------------------------------
template <typename T>
void write_freq_dataset(const std::string& dir,
                        const std::vector<VolumeSample<T>>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "tensors");
  std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + dir);
  manifest << "id\tfamily\tfreq\tclass\tcoords\tmask\tpath\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "sample_%06d.nnt", s.id);
    const std::string file = std::string("tensors/") + buf;
    write_nnt((fs::path(dir) / file).string(), s.input);
    manifest << s.id << '\t' << s.family << '\t';
    std::snprintf(buf, sizeof(buf), "%.6g", s.frequency);
    manifest << buf << '\t' << s.class_bits[0] << s.class_bits[1]
             << s.class_bits[2] << '\t';
    for (int t = 0; t < 3; ++t)
      for (int a = 0; a < 3; ++a) {
        if (t || a) manifest << ',';
        manifest << s.voxel_coords[std::size_t(t)][std::size_t(a)];
      }
    manifest << '\t' << s.coord_mask[0] << s.coord_mask[1] << s.coord_mask[2]
             << '\t' << file << '\n';
  }
}

template <typename T>
std::vector<VolumeSample<T>> load_freq_dataset(const std::string& dir,
                                               const CoreGeometry& geom = {}) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw IoError("cannot read manifest in " + dir);
  std::vector<VolumeSample<T>> out;
  std::string line;
  std::getline(manifest, line);  // header
  const std::array<std::size_t, 3> extent = {geom.nx, geom.ny, geom.nz};
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    VolumeSample<T> s;
    std::string cls, coords, mask, path;
    is >> s.id >> s.family >> s.frequency >> cls >> coords >> mask >> path;
    if (!is || cls.size() != 3 || mask.size() != 3)
      throw IoError("malformed manifest row: " + line);
    for (int b = 0; b < 3; ++b) {
      s.class_bits[std::size_t(b)] = cls[std::size_t(b)] == '1';
      s.coord_mask[std::size_t(b)] = mask[std::size_t(b)] == '1';
    }
    std::istringstream cs(coords);
    for (int t = 0; t < 3; ++t)
      for (int a = 0; a < 3; ++a) {
        int v = 0;
        char comma;
        if (t || a) cs >> comma;
        cs >> v;
        s.voxel_coords[std::size_t(t)][std::size_t(a)] = v;
        s.coords[std::size_t(t) * 3 + std::size_t(a)] =
            s.coord_mask[std::size_t(t)]
                ? normalize_coord(v, extent[std::size_t(a)])
                : 0.0;
      }
    s.input = read_nnt<T>((fs::path(dir) / path).string());
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time-domain dataset directory:
//   manifest.tsv  one row per window:
//     id  scenario  label  detector  start  path  row
//   windows/sNN_dDD.nnt   [window_count, 100] batch per (scenario, detector)
// ---------------------------------------------------------------------------
template <typename T>
void write_time_scenario(const std::string& dir, const SignalMatrix& matrix,
                         const ScenarioSpec& spec, const DetectorLayout& layout,
                         std::ofstream& manifest, long& next_id) {
  namespace fs = std::filesystem;
  auto windows = make_windows<T>(matrix, spec);
  const std::size_t per_det = window_count(SignalMatrix::kSamples);
  char buf[64];
  for (std::size_t d = 0; d < matrix.detectors; ++d) {
    std::snprintf(buf, sizeof(buf), "windows/s%02d_d%02zu.nnt", spec.id, d);
    const std::string file = buf;
    Tensor<T> batch({per_det, kWindowLen});
    for (std::size_t w = 0; w < per_det; ++w) {
      const auto& win = windows[d * per_det + w];
      std::copy(win.signal.data(), win.signal.data() + kWindowLen,
                batch.data() + w * kWindowLen);
    }
    write_nnt((fs::path(dir) / file).string(), batch);
    for (std::size_t w = 0; w < per_det; ++w) {
      const auto& win = windows[d * per_det + w];
      manifest << next_id++ << '\t' << spec.id << '\t' << win.label[0]
               << win.label[1] << win.label[2] << win.label[3] << '\t'
               << layout.detectors[d].id << '\t' << win.start << '\t' << file
               << '\t' << w << '\n';
    }
  }
}

}  // namespace nnu
