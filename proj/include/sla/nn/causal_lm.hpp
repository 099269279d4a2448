#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/core/rng.hpp"
#include "sla/nn/init.hpp"
#include "sla/tensor/attention.hpp"
#include "sla/train/checkpoint.hpp"

namespace sla {

struct LmConfig {
  std::size_t vocab_size = 64;
  std::size_t model_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t max_positions = 256;
  std::size_t mlp_dim = 256;

  void validate() const {
    if (vocab_size < 4) throw ConfigError("lm.vocab_size must cover the special tokens and at least one word");
    if (model_dim == 0 || num_layers == 0 || num_heads == 0 || max_positions == 0 || mlp_dim == 0) {
      throw ConfigError("lm dimensions must be positive");
    }
    if (model_dim % num_heads != 0) {
      throw ConfigError("lm.model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                        std::to_string(num_heads));
    }
  }
};

inline void to_json(nlohmann::json& j, const LmConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"model_dim", c.model_dim},         {"num_layers", c.num_layers},
       {"num_heads", c.num_heads},   {"max_positions", c.max_positions}, {"mlp_dim", c.mlp_dim}};
}

inline void from_json(const nlohmann::json& j, LmConfig& c) {
  static const std::set<std::string> known{"vocab_size", "model_dim",     "num_layers",
                                           "num_heads",  "max_positions", "mlp_dim"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("lm: unknown key '" + key + "'");
  }
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
}

/// Decoder-only transformer: learned token and position tables, pre-norm
/// attention and ReLU MLP blocks, final norm, untied output head.
///
/// forward() takes input embeddings directly, so token embeddings and
/// externally produced vectors can be mixed in one sequence.
template <std::floating_point Real = double>
class CausalLm {
 public:
  explicit CausalLm(const LmConfig& config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    Rng rng(mix_seed(seed, 0x6c6dULL));
    const std::size_t d = config_.model_dim, f = config_.mlp_dim;
    const double resid_std = 0.02 / std::sqrt(2.0 * static_cast<double>(config_.num_layers));
    register_param("tok_emb", normal_tensor<Real>({config_.vocab_size, d}, 0.02, rng));
    register_param("pos_emb", normal_tensor<Real>({config_.max_positions, d}, 0.01, rng));
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      register_param(p + "ln1.g", Tensor<Real>::full({d}, Real{1}));
      register_param(p + "ln1.b", Tensor<Real>::zeros({d}));
      register_param(p + "attn.wq", normal_tensor<Real>({d, d}, 0.02, rng));
      register_param(p + "attn.bq", Tensor<Real>::zeros({d}));
      register_param(p + "attn.wk", normal_tensor<Real>({d, d}, 0.02, rng));
      register_param(p + "attn.bk", Tensor<Real>::zeros({d}));
      register_param(p + "attn.wv", normal_tensor<Real>({d, d}, 0.02, rng));
      register_param(p + "attn.bv", Tensor<Real>::zeros({d}));
      register_param(p + "attn.wo", normal_tensor<Real>({d, d}, resid_std, rng));
      register_param(p + "attn.bo", Tensor<Real>::zeros({d}));
      register_param(p + "ln2.g", Tensor<Real>::full({d}, Real{1}));
      register_param(p + "ln2.b", Tensor<Real>::zeros({d}));
      register_param(p + "mlp.w1", normal_tensor<Real>({d, f}, 0.02, rng));
      register_param(p + "mlp.b1", Tensor<Real>::zeros({f}));
      register_param(p + "mlp.w2", normal_tensor<Real>({f, d}, resid_std, rng));
      register_param(p + "mlp.b2", Tensor<Real>::zeros({d}));
    }
    register_param("ln_f.g", Tensor<Real>::full({d}, Real{1}));
    register_param("ln_f.b", Tensor<Real>::zeros({d}));
    register_param("head.w", normal_tensor<Real>({d, config_.vocab_size}, 0.02, rng));
    register_param("head.b", Tensor<Real>::zeros({config_.vocab_size}));
  }

  const LmConfig& config() const { return config_; }
  std::size_t vocab_size() const { return config_.vocab_size; }
  std::size_t model_dim() const { return config_.model_dim; }
  const Tensor<Real>& token_table() const { return params_[0].tensor; }

  /// Rows of the token table for `ids`, as a differentiable gather.
  Tensor<Real> embed_tokens(std::span<const TokenId> ids) const { return embedding(token_table(), ids); }

  /// Logits [T x vocab] for one sequence of input embeddings [T x dim].
  Tensor<Real> forward(const Tensor<Real>& embeddings) const {
    const std::size_t len = embeddings.rows();
    return forward_packed(embeddings, std::span<const std::size_t>(&len, 1));
  }

  Tensor<Real> forward_tokens(std::span<const TokenId> ids) const { return forward(embed_tokens(ids)); }

  /// Several sequences stacked along time. Each segment gets positions from 0
  /// and attends only within itself, so the result equals running forward()
  /// on each segment separately.
  Tensor<Real> forward_packed(const Tensor<Real>& embeddings, std::span<const std::size_t> lengths) const {
    if (embeddings.rank() != 2 || embeddings.cols() != config_.model_dim) {
      throw DimensionError("lm forward: expected [T x " + std::to_string(config_.model_dim) + "] embeddings, got " +
                           shape_str(embeddings.shape()));
    }
    std::vector<TokenId> positions;
    positions.reserve(embeddings.rows());
    for (auto len : lengths) {
      if (len == 0) throw ContractError("lm forward: empty sequence");
      if (len > config_.max_positions) {
        throw LengthError("sequence of length " + std::to_string(len) + " exceeds max_positions " +
                          std::to_string(config_.max_positions));
      }
      for (std::size_t i = 0; i < len; ++i) positions.push_back(static_cast<TokenId>(i));
    }
    if (positions.size() != embeddings.rows()) {
      throw DimensionError("lm forward: segment lengths sum to " + std::to_string(positions.size()) + ", input has " +
                           std::to_string(embeddings.rows()) + " rows");
    }
    std::size_t at = 2;
    const auto next = [&]() -> const Tensor<Real>& { return params_[at++].tensor; };
    Tensor<Real> x = add(embeddings, embedding(params_[1].tensor, positions));
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
      const auto& ln1g = next();
      const auto& ln1b = next();
      const auto& wq = next();
      const auto& bq = next();
      const auto& wk = next();
      const auto& bk = next();
      const auto& wv = next();
      const auto& bv = next();
      const auto& wo = next();
      const auto& bo = next();
      const auto& ln2g = next();
      const auto& ln2b = next();
      const auto& w1 = next();
      const auto& b1 = next();
      const auto& w2 = next();
      const auto& b2 = next();
      const auto h = layer_norm(x, ln1g, ln1b);
      const auto att = causal_attention(affine(h, wq, bq), affine(h, wk, bk), affine(h, wv, bv), lengths,
                                        config_.num_heads);
      x = add(x, affine(att, wo, bo));
      const auto h2 = layer_norm(x, ln2g, ln2b);
      x = add(x, affine(relu(affine(h2, w1, b1)), w2, b2));
    }
    const auto& lnfg = next();
    const auto& lnfb = next();
    const auto& hw = next();
    const auto& hb = next();
    return affine(layer_norm(x, lnfg, lnfb), hw, hb);
  }

  /// Handles to the live parameters (shared storage).
  const ParameterList<Real>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  /// false freezes every parameter; true unfreezes and enables gradients.
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

  bool trainable() const { return !params_.empty() && params_[0].tensor.requires_grad(); }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.add("lm.", params_);
    return c;
  }

  void load(const Checkpoint& c) { c.load_into("lm.", params_); }

  /// Independent copy with the same values; the copy is frozen.
  CausalLm clone() const {
    CausalLm copy(config_);
    copy.load(to_checkpoint());
    copy.set_trainable(false);
    return copy;
  }

 private:
  void register_param(std::string name, Tensor<Real> t) {
    t.freeze();
    params_.push_back({std::move(name), std::move(t)});
  }

  LmConfig config_;
  ParameterList<Real> params_;
};

inline CheckpointMetadata lm_metadata(const LmConfig& config, const std::string& kind) {
  CheckpointMetadata m;
  m.extra["kind"] = kind;
  m.extra["lm_config"] = config;
  return m;
}

template <std::floating_point Real>
void save_lm(const std::string& path, const CausalLm<Real>& lm, CheckpointMetadata meta) {
  meta.extra["lm_config"] = lm.config();
  if (!meta.extra.contains("kind")) meta.extra["kind"] = "lm";
  write_checkpoint(path, lm.to_checkpoint(), meta);
}

/// Loads an LM checkpoint; its architecture comes from the sidecar metadata.
template <std::floating_point Real = double>
CausalLm<Real> load_lm(const std::string& path) {
  const auto meta = read_checkpoint_metadata(path);
  if (!meta.extra.contains("lm_config")) throw FormatError(path + ": metadata lacks lm_config", 0);
  CausalLm<Real> lm(meta.extra["lm_config"].get<LmConfig>());
  lm.load(read_checkpoint(path));
  return lm;
}

}  // namespace sla
