#pragma once

#include <cstdint>

#include "sla/core/error.hpp"
#include "sla/core/rng.hpp"
#include "sla/nn/init.hpp"
#include "sla/tensor/ops.hpp"
#include "sla/train/checkpoint.hpp"

namespace sla {

/// (k*d_enc)*d_hidden + d_hidden + d_hidden*d_llm + d_llm.
inline std::uint64_t count_projector_params(std::uint64_t d_enc, std::uint64_t k, std::uint64_t d_hidden,
                                            std::uint64_t d_llm) {
  if (d_enc == 0 || k == 0 || d_hidden == 0 || d_llm == 0) {
    throw ContractError("count_projector_params: all dimensions must be positive");
  }
  return k * d_enc * d_hidden + d_hidden + d_hidden * d_llm + d_llm;
}

struct ProjectorShape {
  std::size_t input_dim = 0;   // k * d_enc
  std::size_t hidden_dim = 2048;
  std::size_t output_dim = 0;  // LM embedding width
};

/// Linear -> ReLU -> Linear from stacked speech frames to LM embeddings.
/// Parameters take gradients from construction on.
template <std::floating_point Real = double>
class Projector {
 public:
  Projector(const ProjectorShape& shape, std::uint64_t seed) : shape_(shape) {
    if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.output_dim == 0) {
      throw ConfigError("projector dimensions must be positive");
    }
    Rng rng(mix_seed(seed, 0x70726f6aULL));
    params_.push_back({"w1", fan_in_uniform<Real>({shape.input_dim, shape.hidden_dim}, shape.input_dim, rng)});
    params_.push_back({"b1", fan_in_uniform<Real>({shape.hidden_dim}, shape.input_dim, rng)});
    params_.push_back({"w2", fan_in_uniform<Real>({shape.hidden_dim, shape.output_dim}, shape.hidden_dim, rng)});
    params_.push_back({"b2", fan_in_uniform<Real>({shape.output_dim}, shape.hidden_dim, rng)});
    for (auto& p : params_) p.tensor.set_requires_grad(true);
  }

  const ProjectorShape& shape() const { return shape_; }
  const ParameterList<Real>& parameters() const { return params_; }
  ParameterList<Real>& parameters() { return params_; }
  const Tensor<Real>& w1() const { return params_[0].tensor; }
  const Tensor<Real>& b1() const { return params_[1].tensor; }
  const Tensor<Real>& w2() const { return params_[2].tensor; }
  const Tensor<Real>& b2() const { return params_[3].tensor; }

  std::uint64_t parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  /// Row-wise W2 relu(W1 z + b1) + b2; [N x input_dim] -> [N x output_dim].
  Tensor<Real> project(const Tensor<Real>& z) const {
    if (z.rank() != 2 || z.cols() != shape_.input_dim) {
      throw DimensionError("projector: expected [N x " + std::to_string(shape_.input_dim) + "] input, got " +
                           shape_str(z.shape()));
    }
    return affine(relu(affine(z, w1(), b1())), w2(), b2());
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.add("proj.", params_);
    return c;
  }

  void load(const Checkpoint& c) { c.load_into("proj.", params_); }

 private:
  ProjectorShape shape_;
  ParameterList<Real> params_;
};

}  // namespace sla
