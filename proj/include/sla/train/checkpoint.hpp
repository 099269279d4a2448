#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/core/hash.hpp"
#include "sla/data/feature_file.hpp"
#include "sla/tensor/tensor.hpp"

namespace sla {

// SLMC layout: "SLMC", u32 version, then records to end of file. Each record:
// u32 name length, UTF-8 name, u32 rank, rank x u32 dims, numel x f64 payload.
// All integers and floats little-endian.
inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'L', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <std::floating_point Real>
struct NamedParameter {
  std::string name;
  Tensor<Real> tensor;
};

template <std::floating_point Real>
using ParameterList = std::vector<NamedParameter<Real>>;

struct ParameterRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<ParameterRecord> records;

  const ParameterRecord* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }

  const ParameterRecord& at(const std::string& name) const {
    if (const auto* r = find(name)) return *r;
    throw FormatError("checkpoint has no parameter '" + name + "'", 0);
  }

  template <std::floating_point Real>
  void add(const std::string& prefix, const ParameterList<Real>& params) {
    for (const auto& p : params) {
      records.push_back({prefix + p.name, p.tensor.shape(),
                         std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())});
    }
  }

  /// Copies stored values into existing tensors; shapes must match exactly.
  template <std::floating_point Real>
  void load_into(const std::string& prefix, ParameterList<Real>& params) const {
    for (auto& p : params) {
      const auto& r = at(prefix + p.name);
      if (r.shape != p.tensor.shape()) {
        throw DimensionError("checkpoint parameter '" + r.name + "' has shape " + shape_str(r.shape) +
                             ", model expects " + shape_str(p.tensor.shape()));
      }
      auto dst = p.tensor.mutable_values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(r.values[i]);
    }
  }
};

/// Sidecar metadata written next to every checkpoint as <path>.json.
struct CheckpointMetadata {
  std::int64_t step = 0;
  std::optional<double> val_loss;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json to_json(const CheckpointMetadata& m) {
  nlohmann::json j{{"step", m.step}, {"config_hash", m.config_hash}, {"seed", m.seed}};
  j["val_loss"] = m.val_loss ? nlohmann::json(*m.val_loss) : nlohmann::json(nullptr);
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  return j;
}

inline CheckpointMetadata metadata_from_json(const nlohmann::json& j) {
  CheckpointMetadata m;
  m.step = j.value("step", std::int64_t{0});
  if (j.contains("val_loss") && !j["val_loss"].is_null()) m.val_loss = j["val_loss"].get<double>();
  m.config_hash = j.value("config_hash", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& [k, v] : j.items()) {
    if (k != "step" && k != "val_loss" && k != "config_hash" && k != "seed") m.extra[k] = v;
  }
  return m;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  for (const auto& r : c.records) {
    if (shape_numel(r.shape) != r.values.size()) {
      throw DimensionError("checkpoint record '" + r.name + "' shape/payload mismatch");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : r.values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("truncated SLMC header", bytes.size());
  if (std::memcmp(bytes.data(), kCheckpointMagic.data(), 4) != 0) throw FormatError("bad SLMC magic", 0);
  if (const auto v = detail::get_u32(bytes.data() + 4); v != kCheckpointVersion) {
    throw FormatError("unsupported SLMC version " + std::to_string(v), 4);
  }
  Checkpoint c;
  std::size_t pos = 8;
  const auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw FormatError("truncated SLMC record", bytes.size());
  };
  while (pos < bytes.size()) {
    ParameterRecord r;
    need(4);
    const auto name_len = detail::get_u32(bytes.data() + pos);
    pos += 4;
    need(name_len);
    r.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    need(4);
    const auto rank = detail::get_u32(bytes.data() + pos);
    pos += 4;
    need(4 * static_cast<std::size_t>(rank));
    for (std::uint32_t i = 0; i < rank; ++i, pos += 4) r.shape.push_back(detail::get_u32(bytes.data() + pos));
    const auto n = shape_numel(r.shape);
    need(8 * n);
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, pos += 8) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(b)]) << (8 * b);
      r.values[i] = std::bit_cast<double>(bits);
    }
    c.records.push_back(std::move(r));
  }
  return c;
}

inline std::string metadata_path(const std::string& checkpoint_path) { return checkpoint_path + ".json"; }

inline void write_checkpoint(const std::string& path, const Checkpoint& c, const CheckpointMetadata& meta) {
  const auto bytes = encode_checkpoint(c);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for checkpoint " + path);
  }
  std::ofstream side(metadata_path(path));
  if (!side) throw std::runtime_error("cannot write checkpoint metadata " + metadata_path(path));
  side << to_json(meta).dump(2) << '\n';
}

inline Checkpoint read_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.offset());
  }
}

inline CheckpointMetadata read_checkpoint_metadata(const std::string& path) {
  std::ifstream in(metadata_path(path));
  if (!in) throw std::runtime_error("cannot open checkpoint metadata " + metadata_path(path));
  return metadata_from_json(nlohmann::json::parse(in));
}

/// Serialized bytes of a parameter list; used to prove frozen weights did not move.
template <std::floating_point Real>
std::vector<std::uint8_t> parameter_blob(const ParameterList<Real>& params) {
  Checkpoint c;
  c.add("", params);
  return encode_checkpoint(c);
}

}  // namespace sla
