#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nnu/models.hpp"
#include "nnu/nnt.hpp"

namespace nnu {

// Checkpoint directory: one NNT1 file per tensor plus an ordered manifest
// (params.tsv: name, shape, file) and meta.txt (sorted key=value lines).
template <typename T>
void save_checkpoint(const std::string& dir,
                     const std::vector<NamedParam<T>>& params,
                     const std::vector<NamedParam<T>>& state,
                     const std::map<std::string, std::string>& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "params.tsv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write checkpoint manifest in " + dir);
  auto dump = [&](const std::vector<NamedParam<T>>& tensors,
                  const char* kind) {
    for (const auto& np : tensors) {
      const std::string file = np.name + ".nnt";
      write_nnt((fs::path(dir) / file).string(), np.tensor);
      manifest << kind << '\t' << np.name << '\t'
               << shape_str(np.tensor.shape()) << '\t' << file << '\n';
    }
  };
  dump(params, "param");
  dump(state, "state");
  std::ofstream mf(fs::path(dir) / "meta.txt", std::ios::trunc);
  for (const auto& [k, v] : meta) mf << k << '=' << v << '\n';
}

template <typename T>
void load_checkpoint(const std::string& dir,
                     const std::vector<NamedParam<T>>& params,
                     const std::vector<NamedParam<T>>& state) {
  namespace fs = std::filesystem;
  auto load = [&](const std::vector<NamedParam<T>>& tensors) {
    for (const auto& np : tensors) {
      const std::string path = (fs::path(dir) / (np.name + ".nnt")).string();
      auto t = read_nnt<T>(path);
      if (t.shape() != np.tensor.shape())
        throw DimensionError("checkpoint tensor " + np.name + " has shape " +
                             shape_str(t.shape()) + ", model expects " +
                             shape_str(np.tensor.shape()));
      std::copy(t.data(), t.data() + t.size(),
                const_cast<Tensor<T>&>(np.tensor).data());
    }
  };
  load(params);
  load(state);
}

inline std::map<std::string, std::string> read_checkpoint_meta(
    const std::string& dir) {
  std::ifstream mf(std::filesystem::path(dir) / "meta.txt");
  if (!mf) throw IoError("cannot read checkpoint meta in " + dir);
  std::map<std::string, std::string> meta;
  std::string line;
  while (std::getline(mf, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos)
      meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

}  // namespace nnu
