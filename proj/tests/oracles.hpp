#pragma once

// Test-only brute-force scorers, independent of the library implementation:
// rankings are produced by materializing and sorting full candidate lists
// per query rather than by rank counting.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "raea/metrics.hpp"

namespace oracle {

// 1-based rank of the gold column via explicit sort; nullopt when the gold
// target is not a column.
inline std::optional<std::size_t> brute_rank(const raea::SimilarityMatrix& sim,
                                             const raea::SeedPair& gold) {
  std::size_t row = sim.row_ids.size();
  for (std::size_t i = 0; i < sim.row_ids.size(); ++i)
    if (sim.row_ids[i] == gold.source) row = i;
  std::size_t col = sim.col_ids.size();
  for (std::size_t j = 0; j < sim.col_ids.size(); ++j)
    if (sim.col_ids[j] == gold.target) col = j;
  if (row == sim.row_ids.size() || col == sim.col_ids.size()) return std::nullopt;

  std::vector<std::size_t> order(sim.col_ids.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = sim.scores.at(row, a), sb = sim.scores.at(row, b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (order[pos] == col) return pos + 1;
  return std::nullopt;
}

inline double brute_hits_at_k(const raea::SimilarityMatrix& sim, const raea::GoldPairs& gold,
                              std::size_t k) {
  double hits = 0;
  for (const auto& g : gold) {
    const auto r = brute_rank(sim, g);
    if (r && *r <= k) hits += 1;
  }
  return gold.empty() ? 0.0 : hits / static_cast<double>(gold.size());
}

inline double brute_mrr(const raea::SimilarityMatrix& sim, const raea::GoldPairs& gold) {
  double sum = 0;
  for (const auto& g : gold) {
    const auto r = brute_rank(sim, g);
    if (r) sum += 1.0 / static_cast<double>(*r);
  }
  return gold.empty() ? 0.0 : sum / static_cast<double>(gold.size());
}

inline double brute_ndcg_at_k(const raea::SimilarityMatrix& sim, const raea::GoldPairs& gold,
                              std::size_t k) {
  double sum = 0;
  for (const auto& g : gold) {
    const auto r = brute_rank(sim, g);
    if (r && *r <= k) sum += 1.0 / std::log2(1.0 + static_cast<double>(*r));
  }
  return gold.empty() ? 0.0 : sum / static_cast<double>(gold.size());
}

inline std::pair<double, double> brute_precision_recall_at_k(const raea::SimilarityMatrix& sim,
                                                             const raea::GoldPairs& gold,
                                                             std::size_t k) {
  const double recall = brute_hits_at_k(sim, gold, k);
  return {recall / static_cast<double>(k), recall};
}

// Percentile bootstrap recomputed from scratch with the same seed and the
// same resampling scheme as the implementation.
inline raea::ConfidenceInterval brute_bootstrap(const raea::MetricFn& metric,
                                                const raea::SimilarityMatrix& sim,
                                                const raea::GoldPairs& gold,
                                                std::size_t n_resamples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dist(0, gold.size() - 1);
  std::vector<double> values;
  for (std::size_t i = 0; i < n_resamples; ++i) {
    raea::GoldPairs resampled(gold.size());
    for (std::size_t j = 0; j < gold.size(); ++j) resampled[j] = gold[dist(rng)];
    values.push_back(metric(sim, resampled));
  }
  std::sort(values.begin(), values.end());
  auto pick = [&](double q) {
    const double pos = std::ceil(q * static_cast<double>(n_resamples)) - 1.0;
    const auto idx = static_cast<std::size_t>(std::max(0.0, pos));
    return values[std::min(idx, n_resamples - 1)];
  };
  return {pick(0.025), pick(0.975)};
}

}  // namespace oracle
