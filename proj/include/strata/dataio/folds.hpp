#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "strata/core/rng.hpp"
#include "strata/dataio/dataset.hpp"

namespace strata::dataio {

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified k-fold split on a label vector. Each class is shuffled with the
/// seed and dealt round-robin into folds, continuing the deal across classes
/// so fold sizes differ by at most one.
inline std::vector<Fold> kfold_split(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("dataio", "k-fold split needs k >= 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, idx] : by_class)
    if (static_cast<int>(idx.size()) < k)
      throw StratificationError("dataio", "class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                              " windows, fewer than k = " + std::to_string(k));
  Rng rng(derive_seed(seed, "kfold"));
  std::vector<std::vector<std::size_t>> test(k);
  std::size_t deal = 0;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    for (auto i : idx) test[deal++ % k].push_back(i);
  }
  std::vector<Fold> folds(k);
  for (int f = 0; f < k; ++f) {
    std::sort(test[f].begin(), test[f].end());
    folds[f].test = test[f];
    for (int g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), test[g].begin(), test[g].end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

/// Folds stratified by activity label.
inline std::vector<Fold> kfold_split(const Dataset& ds, int k, std::uint64_t seed) {
  return kfold_split(ds.activity_labels(), k, seed);
}

}  // namespace strata::dataio
