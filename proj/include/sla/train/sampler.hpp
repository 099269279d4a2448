#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/core/rng.hpp"

namespace sla {

/// Maps a global sample counter to a dataset index: each epoch is a fresh
/// permutation derived from (seed, epoch) alone, so any position in training
/// can be reproduced without replaying earlier draws.
class EpochSampler {
 public:
  EpochSampler(std::size_t size, std::uint64_t seed) : size_(size), seed_(seed) {
    if (size == 0) throw ContractError("cannot sample from an empty dataset");
  }

  std::size_t size() const { return size_; }

  std::size_t index_at(std::uint64_t global) {
    const std::uint64_t epoch = global / size_;
    if (epoch != epoch_ || order_.empty()) {
      order_.resize(size_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      Rng rng(mix_seed(seed_, epoch));
      rng.shuffle(order_);
      epoch_ = epoch;
    }
    return order_[global % size_];
  }

  std::vector<std::size_t> batch(std::uint64_t first, std::size_t count) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(index_at(first + i));
    return out;
  }

 private:
  std::size_t size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace sla
