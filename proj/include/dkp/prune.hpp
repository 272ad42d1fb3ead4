// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_PRUNE_HPP_
#define DKP_PRUNE_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dkp/matrix.hpp"

namespace dkp {

// Alive/dead bit per weight of a rows x cols matrix. Bits only ever go from
// alive to dead; prune_to_sparsity refuses to lower sparsity.
class PruneMask {
 public:
  PruneMask() = default;
  PruneMask(std::size_t rows, std::size_t cols, bool alive = true)
      : rows_(rows), cols_(cols), bits_(rows * cols, alive ? 1 : 0),
        alive_(alive ? rows * cols : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }
  std::size_t alive_count() const { return alive_; }

  bool alive(std::size_t r, std::size_t c) const {
    return bits_[r * cols_ + c] != 0;
  }
  bool alive_flat(std::size_t i) const { return bits_[i] != 0; }

  void kill_flat(std::size_t i) {
    if (bits_[i]) {
      bits_[i] = 0;
      --alive_;
    }
  }

  double sparsity() const {
    return bits_.empty() ? 0.0
                         : 1.0 - static_cast<double>(alive_) /
                                     static_cast<double>(bits_.size());
  }

  bool operator==(const PruneMask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t alive_ = 0;
};

// Kills the smallest-magnitude alive weights of w until the mask reaches
// target_sparsity (rounded to the nearest whole count). Ties go to the lowest
// flat index. Throws ConfigError if target is below the current sparsity.
PruneMask prune_to_sparsity(const DenseMatrix& w, const PruneMask& current,
                            double target_sparsity);

// Zeroes every entry of w whose mask bit is dead.
void apply_mask(DenseMatrix& w, const PruneMask& mask);

}  // namespace dkp

#endif  // DKP_PRUNE_HPP_
