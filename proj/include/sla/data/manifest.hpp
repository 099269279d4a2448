#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/data/feature_file.hpp"

namespace sla {

/// One manifest line: an utterance, its transcript, and where its features live.
struct UtteranceRecord {
  std::string id;
  std::string transcript;
  std::optional<std::string> feature_path;  // relative paths resolve against the manifest directory
  std::optional<std::uint64_t> synthetic_seed;
  std::uint32_t num_frames = 0;
  double frame_rate_hz = 0;
  std::uint32_t dim = 0;
};

inline nlohmann::json to_json(const UtteranceRecord& r) {
  nlohmann::json j{{"id", r.id},
                   {"transcript", r.transcript},
                   {"num_frames", r.num_frames},
                   {"frame_rate_hz", r.frame_rate_hz},
                   {"dim", r.dim}};
  if (r.feature_path) j["feature_path"] = *r.feature_path;
  if (r.synthetic_seed) j["synthetic_seed"] = *r.synthetic_seed;
  return j;
}

inline UtteranceRecord record_from_json(const nlohmann::json& j) {
  UtteranceRecord r;
  r.id = j.at("id").get<std::string>();
  r.transcript = j.at("transcript").get<std::string>();
  if (j.contains("feature_path")) r.feature_path = j.at("feature_path").get<std::string>();
  if (j.contains("synthetic_seed")) r.synthetic_seed = j.at("synthetic_seed").get<std::uint64_t>();
  r.num_frames = j.at("num_frames").get<std::uint32_t>();
  r.frame_rate_hz = j.at("frame_rate_hz").get<double>();
  r.dim = j.at("dim").get<std::uint32_t>();
  return r;
}

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<UtteranceRecord> records;

  std::filesystem::path resolve(const UtteranceRecord& r) const {
    if (!r.feature_path) throw ContractError("utterance " + r.id + " has no feature file");
    std::filesystem::path p(*r.feature_path);
    return p.is_absolute() ? p : base_dir / p;
  }

  /// Reads the utterance's features and checks them against the record.
  FeatureMatrix load_features(const UtteranceRecord& r) const {
    auto m = read_features(resolve(r).string());
    if (m.frames != r.num_frames || m.dim != r.dim) {
      throw FormatError("utterance " + r.id + ": manifest says " + std::to_string(r.num_frames) + "x" +
                            std::to_string(r.dim) + " but feature file holds " + std::to_string(m.frames) + "x" +
                            std::to_string(m.dim),
                        8);
    }
    return m;
  }
};

inline void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

/// Parses a JSON Lines manifest. With `validate_files`, every referenced
/// feature header is checked against the record's frame count and dimension.
inline Manifest read_manifest(const std::string& path, bool validate_files = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    UtteranceRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + " line " + std::to_string(lineno) + ": " + e.what(), 0);
    }
    if (r.transcript.empty()) throw FormatError(path + " line " + std::to_string(lineno) + ": empty transcript", 0);
    if (validate_files && r.feature_path) {
      const auto bytes = read_file_bytes(m.resolve(r).string());
      if (bytes.size() < kFeatureHeaderBytes) {
        throw FormatError("feature file for " + r.id + " is truncated", bytes.size());
      }
      const auto frames = detail::get_u32(bytes.data() + 8);
      const auto dim = detail::get_u32(bytes.data() + 12);
      if (frames != r.num_frames || dim != r.dim) {
        throw FormatError("utterance " + r.id + ": manifest/feature header mismatch", 8);
      }
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace sla
