#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nnu/tensor.hpp"

// NNT1 tensor file:
//   bytes 0..3   magic "NNT1"
//   byte  4      dtype code, 1 = f32, 2 = f64
//   byte  5      rank R
//   bytes 6..11  zero padding
//   then R little-endian u64 dims, then row-major little-endian payload.

namespace nnu {

static_assert(std::endian::native == std::endian::little,
              "NNT1 writer assumes a little-endian host");

namespace detail {
template <typename T>
constexpr std::uint8_t nnt_dtype_code() {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  return sizeof(T) == 4 ? 1 : 2;
}
}  // namespace detail

struct NntInfo {
  std::uint8_t dtype = 0;  // 1 = f32, 2 = f64
  Shape dims;
};

template <typename T>
void write_nnt(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write("NNT1", 4);
  const std::uint8_t dtype = detail::nnt_dtype_code<T>();
  const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  os.put(static_cast<char>(dtype));
  os.put(static_cast<char>(rank));
  const char pad[6] = {0, 0, 0, 0, 0, 0};
  os.write(pad, 6);
  for (std::size_t i = 0; i < t.rank(); ++i) {
    const std::uint64_t d = t.dim(i);
    os.write(reinterpret_cast<const char*>(&d), 8);
  }
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!os) throw IoError("short write: " + path);
}

inline NntInfo read_nnt_header(std::ifstream& is, const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "NNT1", 4) != 0)
    throw IoError("bad NNT1 magic at byte offset 0 in " + path);
  char dtype_c = 0, rank_c = 0;
  if (!is.get(dtype_c)) throw IoError("truncated header at byte offset 4 in " + path);
  if (!is.get(rank_c)) throw IoError("truncated header at byte offset 5 in " + path);
  const std::uint8_t dtype = static_cast<std::uint8_t>(dtype_c);
  const std::uint8_t rank = static_cast<std::uint8_t>(rank_c);
  if (dtype != 1 && dtype != 2)
    throw IoError("unknown dtype code " + std::to_string(int(dtype)) +
                  " at byte offset 4 in " + path);
  char pad[6];
  if (!is.read(pad, 6)) throw IoError("truncated padding at byte offset 6 in " + path);
  for (int i = 0; i < 6; ++i) {
    if (pad[i] != 0)
      throw IoError("nonzero padding at byte offset " + std::to_string(6 + i) +
                    " in " + path);
  }
  NntInfo info;
  info.dtype = dtype;
  info.dims.resize(rank);
  for (std::uint8_t i = 0; i < rank; ++i) {
    std::uint64_t d = 0;
    if (!is.read(reinterpret_cast<char*>(&d), 8))
      throw IoError("truncated dims at byte offset " +
                    std::to_string(12 + 8 * std::size_t(i)) + " in " + path);
    info.dims[i] = static_cast<std::size_t>(d);
  }
  return info;
}

inline NntInfo read_nnt_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_nnt_header(is, path);
}

// Reads a tensor, converting between f32 and f64 when the stored dtype
// differs from T.
template <typename T>
Tensor<T> read_nnt(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  const NntInfo info = read_nnt_header(is, path);
  const std::size_t n = numel(info.dims);
  const std::size_t payload_off = 12 + 8 * info.dims.size();
  std::vector<T> out(n);
  if (info.dtype == detail::nnt_dtype_code<T>()) {
    if (!is.read(reinterpret_cast<char*>(out.data()),
                 static_cast<std::streamsize>(n * sizeof(T))))
      throw IoError("truncated payload at byte offset " +
                    std::to_string(payload_off + std::size_t(is.gcount())) +
                    " in " + path);
  } else if (info.dtype == 1) {
    std::vector<float> buf(n);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(n * 4)))
      throw IoError("truncated payload at byte offset " +
                    std::to_string(payload_off + std::size_t(is.gcount())) +
                    " in " + path);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(buf[i]);
  } else {
    std::vector<double> buf(n);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(n * 8)))
      throw IoError("truncated payload at byte offset " +
                    std::to_string(payload_off + std::size_t(is.gcount())) +
                    " in " + path);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(buf[i]);
  }
  return Tensor<T>(info.dims, std::move(out));
}

}  // namespace nnu
