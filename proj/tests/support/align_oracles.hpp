#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sla/align/downsampler.hpp"
#include "sla/core/rng.hpp"
#include "sla/data/tokenizer.hpp"
#include "sla/tensor/tensor.hpp"

namespace sla::testing {

// Independent oracle: truncate to N*k rows, then reinterpret the row-major buffer as [N x k*d].
inline std::vector<double> reshape_oracle(const std::vector<double>& h, std::size_t t_len, std::size_t k, std::size_t d) {
  const std::size_t n = t_len / k;
  return std::vector<double>(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(n * k * d));
}

// Cross-entropy recomputed from raw logits with log-sum-exp, over supervised positions only.
inline double hand_cross_entropy(const Tensor<double>& logits, const std::vector<TokenId>& targets) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (targets[r] == Tokenizer::kIgnore) continue;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits.at(r, c) - mx);
    total += mx + std::log(z) - logits.at(r, static_cast<std::size_t>(targets[r]));
    ++count;
  }
  return total / static_cast<double>(count);
}

struct DownsampleCheck {
  int instances = 0;
  int failures = 0;
  std::string first_failure;
};

// T in [0, 200], k in [1, 10], d in [1, 32]; output must equal the reshape oracle and have floor(T/k) rows.
inline DownsampleCheck check_downsample_against_reshape(int instances, std::uint64_t seed) {
  DownsampleCheck out;
  Rng rng(seed);
  for (int inst = 0; inst < instances; ++inst) {
    const auto t_len = static_cast<std::size_t>(rng.integer(0, 200));
    const auto k = static_cast<std::size_t>(rng.integer(1, 10));
    const auto d = static_cast<std::size_t>(rng.integer(1, 32));
    std::vector<double> h(t_len * d);
    for (auto& x : h) x = rng.normal();
    const auto got = downsample(Tensor<double>(Shape{t_len, d}, h), k);
    const bool ok = got.shape() == Shape{t_len / k, k * d} && downsampled_length(t_len, k) == t_len / k &&
                    std::vector<double>(got.values().begin(), got.values().end()) == reshape_oracle(h, t_len, k, d);
    ++out.instances;
    if (!ok && out.failures++ == 0) {
      out.first_failure = "T " + std::to_string(t_len) + " k " + std::to_string(k) + " d " + std::to_string(d);
    }
  }
  return out;
}

}  // namespace sla::testing
