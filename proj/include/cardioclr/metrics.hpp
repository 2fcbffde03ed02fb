#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cardioclr/errors.hpp"

namespace cardioclr {

// P(score_pos > score_neg) + 0.5 P(tie), via midranks. Ranks are kept doubled
// so the Mann-Whitney count is an exact integer.
inline double binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("binary_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::uint64_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InputError("binary_auc: labels must be 0 or 1");
    n_pos += static_cast<std::uint64_t>(l);
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedAucError("binary_auc: both label values must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t rank2_sum = 0;  // sum over positives of 2*midrank (1-based)
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t rank2 = static_cast<std::uint64_t>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank2_sum += rank2;
    }
    i = j + 1;
  }
  const std::uint64_t u2 = rank2_sum - n_pos * (n_pos + 1);  // 2 * Mann-Whitney U
  return static_cast<double>(u2) / static_cast<double>(2 * n_pos * n_neg);
}

// probas is row-major N x K.
inline std::vector<double> per_class_auc(std::span<const double> probas, std::span<const std::size_t> labels,
                                         std::size_t K) {
  const std::size_t N = labels.size();
  if (probas.size() != N * K) throw InputError("macro_auc: probability matrix must be N x K");
  std::vector<double> out(K);
  std::vector<double> scores(N);
  std::vector<int> onehot(N);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t present = 0;
    for (std::size_t i = 0; i < N; ++i) {
      if (labels[i] >= K) throw InputError("macro_auc: label out of range");
      scores[i] = probas[i * K + k];
      onehot[i] = labels[i] == k ? 1 : 0;
      present += static_cast<std::size_t>(onehot[i]);
    }
    if (present == 0) throw UndefinedAucError("macro_auc: class " + std::to_string(k) + " has no samples");
    if (present == N) throw UndefinedAucError("macro_auc: class " + std::to_string(k) + " has no negatives");
    out[k] = binary_auc(scores, onehot);
  }
  return out;
}

// Unweighted mean of one-vs-rest AUCs.
inline double macro_auc(std::span<const double> probas, std::span<const std::size_t> labels, std::size_t K) {
  const auto aucs = per_class_auc(probas, labels, K);
  double s = 0.0;
  for (double a : aucs) s += a;
  return s / static_cast<double>(K);
}

}  // namespace cardioclr
