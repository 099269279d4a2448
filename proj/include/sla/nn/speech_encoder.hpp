#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/nn/init.hpp"
#include "sla/tensor/ops.hpp"
#include "sla/train/checkpoint.hpp"

namespace sla {

enum class EncoderMode { kIdentity, kAffine };

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kAffine;
  std::size_t input_dim = 16;
  std::size_t output_dim = 32;
  double frame_rate_hz = 50.0;

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw ConfigError("encoder dimensions must be positive");
    if (mode == EncoderMode::kIdentity && input_dim != output_dim) {
      throw ConfigError("identity encoder needs input_dim == output_dim");
    }
    if (!(frame_rate_hz > 0)) throw ConfigError("encoder.frame_rate_hz must be positive");
  }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"mode", c.mode == EncoderMode::kIdentity ? "identity" : "affine"},
       {"input_dim", c.input_dim},
       {"output_dim", c.output_dim},
       {"frame_rate_hz", c.frame_rate_hz}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  static const std::set<std::string> known{"mode", "input_dim", "output_dim", "frame_rate_hz"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("encoder: unknown key '" + key + "'");
  }
  const auto mode = j.value("mode", std::string(c.mode == EncoderMode::kIdentity ? "identity" : "affine"));
  if (mode == "identity") {
    c.mode = EncoderMode::kIdentity;
  } else if (mode == "affine") {
    c.mode = EncoderMode::kAffine;
  } else {
    throw ConfigError("encoder.mode must be 'identity' or 'affine', got '" + mode + "'");
  }
  c.input_dim = j.value("input_dim", c.input_dim);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.frame_rate_hz = j.value("frame_rate_hz", c.frame_rate_hz);
}

/// Frame-local feature source: the identity, or one fixed random affine map
/// applied to every frame. Frozen unless explicitly made trainable.
template <std::floating_point Real = double>
class SpeechEncoder {
 public:
  explicit SpeechEncoder(const EncoderConfig& config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    if (config_.mode == EncoderMode::kAffine) {
      Rng rng(mix_seed(seed, 0x656e63ULL));
      params_.push_back({"w", fan_in_uniform<Real>({config_.input_dim, config_.output_dim}, config_.input_dim, rng)});
      params_.push_back({"b", fan_in_uniform<Real>({config_.output_dim}, config_.input_dim, rng)});
      for (auto& p : params_) p.tensor.freeze();
    }
  }

  const EncoderConfig& config() const { return config_; }

  /// [T x input_dim] -> [T x output_dim].
  Tensor<Real> encode(const Tensor<Real>& frames) const {
    if (frames.rank() != 2 || frames.cols() != config_.input_dim) {
      throw DimensionError("encoder: expected [T x " + std::to_string(config_.input_dim) + "] frames, got " +
                           shape_str(frames.shape()));
    }
    if (config_.mode == EncoderMode::kIdentity) return frames;
    return affine(frames, params_[0].tensor, params_[1].tensor);
  }

  const ParameterList<Real>& parameters() const { return params_; }

  void set_trainable(bool on) {
    for (auto& p : params_) {
      if (on) {
        p.tensor.unfreeze();
        p.tensor.set_requires_grad(true);
      } else {
        p.tensor.freeze();
      }
    }
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.add("enc.", params_);
    return c;
  }

  void load(const Checkpoint& c) { c.load_into("enc.", params_); }

 private:
  EncoderConfig config_;
  ParameterList<Real> params_;
};

template <std::floating_point Real>
void save_encoder(const std::string& path, const SpeechEncoder<Real>& enc, CheckpointMetadata meta) {
  meta.extra["kind"] = "encoder";
  meta.extra["encoder_config"] = enc.config();
  write_checkpoint(path, enc.to_checkpoint(), meta);
}

template <std::floating_point Real = double>
SpeechEncoder<Real> load_encoder(const std::string& path) {
  const auto meta = read_checkpoint_metadata(path);
  if (!meta.extra.contains("encoder_config")) throw FormatError(path + ": metadata lacks encoder_config", 0);
  SpeechEncoder<Real> enc(meta.extra["encoder_config"].get<EncoderConfig>());
  enc.load(read_checkpoint(path));
  return enc;
}

}  // namespace sla
