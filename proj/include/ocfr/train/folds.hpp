#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/rng.hpp"

namespace ocfr::train {

/// k disjoint folds covering [0, n). Fold k is the test set of round k, the rest train.
struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;

  std::size_t fold_count() const noexcept { return folds.size(); }
  const std::vector<std::size_t>& test(std::size_t k) const { return folds.at(k); }
  std::vector<std::size_t> train(std::size_t k) const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (f != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
    return out;
  }
};

/// Seeded shuffle, then round-robin assignment (the first n % k folds get one extra item).
inline FoldPlan make_folds(std::size_t n, std::size_t fold_count, std::uint64_t seed) {
  if (fold_count < 2) throw InvalidArgument("make_folds: fold_count must be >= 2");
  if (fold_count > n)
    throw InvalidArgument("make_folds: " + std::to_string(fold_count) + " folds requested for " + std::to_string(n) + " items");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xF01D));
  rng.shuffle(order);
  FoldPlan plan;
  plan.folds.resize(fold_count);
  for (std::size_t i = 0; i < n; ++i) plan.folds[i % fold_count].push_back(order[i]);
  return plan;
}

}  // namespace ocfr::train
