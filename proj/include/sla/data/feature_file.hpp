#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/core/hash.hpp"
#include "sla/tensor/tensor.hpp"

namespace sla {

// SLMF layout: "SLMF", u32 version, u32 frames, u32 dim, frames*dim f32; all little-endian, row-major.
inline constexpr std::array<char, 4> kFeatureMagic{'S', 'L', 'M', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

struct FeatureMatrix {
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // frames * dim, row-major

  template <std::floating_point Real>
  Tensor<Real> to_tensor() const {
    return Tensor<Real>(Shape{frames, dim}, std::vector<Real>(values.begin(), values.end()));
  }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  if (m.values.size() != static_cast<std::size_t>(m.frames) * m.dim) {
    throw DimensionError("feature matrix " + std::to_string(m.frames) + "x" + std::to_string(m.dim) + " holds " +
                         std::to_string(m.values.size()) + " values");
  }
  std::vector<std::uint8_t> out(kFeatureMagic.begin(), kFeatureMagic.end());
  out.reserve(kFeatureHeaderBytes + 4 * m.values.size());
  detail::put_u32(out, kFeatureVersion);
  detail::put_u32(out, m.frames);
  detail::put_u32(out, m.dim);
  for (float v : m.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

/// Parses an SLMF buffer. Errors name the byte offset where parsing stopped.
inline FeatureMatrix decode_features(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("truncated SLMF header: " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(kFeatureHeaderBytes),
                      bytes.size());
  }
  if (std::memcmp(bytes.data(), kFeatureMagic.data(), 4) != 0) throw FormatError("bad SLMF magic", 0);
  if (const auto version = detail::get_u32(bytes.data() + 4); version != kFeatureVersion) {
    throw FormatError("unsupported SLMF version " + std::to_string(version), 4);
  }
  FeatureMatrix m;
  m.frames = detail::get_u32(bytes.data() + 8);
  m.dim = detail::get_u32(bytes.data() + 12);
  const std::size_t expected = kFeatureHeaderBytes + 4 * static_cast<std::size_t>(m.frames) * m.dim;
  if (bytes.size() < expected) {
    throw FormatError("truncated SLMF payload: header declares " + std::to_string(m.frames) + "x" +
                          std::to_string(m.dim) + " needing " + std::to_string(expected) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError("SLMF payload larger than header " + std::to_string(m.frames) + "x" + std::to_string(m.dim) +
                          " declares (" + std::to_string(expected) + " bytes expected, " +
                          std::to_string(bytes.size()) + " present)",
                      expected);
  }
  m.values.resize(static_cast<std::size_t>(m.frames) * m.dim);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + kFeatureHeaderBytes + 4 * i));
  }
  return m;
}

inline void write_features(const std::string& path, const FeatureMatrix& m) {
  const auto bytes = encode_features(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for feature file " + path);
}

inline FeatureMatrix read_features(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("cannot open feature file " + path);
  }
  try {
    return decode_features(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.offset());
  }
}

}  // namespace sla
