#pragma once

// Little-endian primitives for the checkpoint and optimizer-state streams.
// Doubles travel as their IEEE-754 bit patterns.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "gitloss/errors.hpp"
#include "gitloss/matrix.hpp"

namespace gitloss {

namespace binary {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 4);
}
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("unexpected end of stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw IoError("unexpected end of stream");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_matrix(std::ostream& os, const Matrix& m) {
  put_u64(os, m.rows());
  put_u64(os, m.cols());
  for (double v : m.values()) put_f64(os, v);
}

inline Matrix get_matrix(std::istream& is) {
  const auto rows = get_u64(is);
  const auto cols = get_u64(is);
  if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
    throw FormatError("implausible matrix shape in stream");
  }
  Matrix m(rows, cols);
  for (double& v : m.values()) v = get_f64(is);
  return m;
}

}  // namespace binary

}  // namespace gitloss
