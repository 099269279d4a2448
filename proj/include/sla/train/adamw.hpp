#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/train/checkpoint.hpp"

namespace sla {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with bias correction and decoupled weight decay. Per-parameter first
/// and second moments are shaped like their parameters.
template <std::floating_point Real>
class AdamW {
 public:
  AdamW(ParameterList<Real> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      first_.emplace_back(p.tensor.numel(), 0.0);
      second_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  const ParameterList<Real>& parameters() const { return params_; }
  const AdamWConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// One update at learning rate `lr`:
  ///   theta -= lr * wd * theta; then theta -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(double lr) {
    if (lr < 0) throw ContractError("AdamW: negative learning rate");
    const std::int64_t next = step_ + 1;
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (auto g : p.tensor.grad()) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NumericError("AdamW: non-finite gradient in '" + p.name + "' at step " + std::to_string(next));
        }
      }
    }
    step_ = next;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params_.size(); ++t) {
      auto& p = params_[t];
      if (!p.tensor.has_grad()) continue;
      auto theta = p.tensor.mutable_values();
      const auto grad = p.tensor.grad();
      auto& m = first_[t];
      auto& v = second_[t];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        double th = static_cast<double>(theta[i]);
        th -= lr * config_.weight_decay * th;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        th -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        theta[i] = static_cast<Real>(th);
      }
    }
  }

  /// Moments as checkpoint records named <prefix>m.<param> and <prefix>v.<param>.
  void save_state(Checkpoint& c, const std::string& prefix) const {
    for (std::size_t t = 0; t < params_.size(); ++t) {
      c.records.push_back({prefix + "m." + params_[t].name, params_[t].tensor.shape(), first_[t]});
      c.records.push_back({prefix + "v." + params_[t].name, params_[t].tensor.shape(), second_[t]});
    }
  }

  void load_state(const Checkpoint& c, const std::string& prefix, std::int64_t step) {
    for (std::size_t t = 0; t < params_.size(); ++t) {
      const auto& m = c.at(prefix + "m." + params_[t].name);
      const auto& v = c.at(prefix + "v." + params_[t].name);
      if (m.values.size() != first_[t].size() || v.values.size() != second_[t].size()) {
        throw DimensionError("optimizer state for '" + params_[t].name + "' has the wrong size");
      }
      first_[t] = m.values;
      second_[t] = v.values;
    }
    step_ = step;
  }

 private:
  ParameterList<Real> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::int64_t step_ = 0;
};

}  // namespace sla
