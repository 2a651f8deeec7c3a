#pragma once

// Similarity matrices, channel ensembles (average / pre-weighted / linear
// max-margin classifier) and ranking metrics with bootstrap confidence
// intervals.
//
// Ranking convention everywhere: candidates sorted by descending score,
// ties broken toward the smaller column index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "raea/common.hpp"
#include "raea/kg.hpp"
#include "raea/tensor.hpp"

namespace raea {

struct SimilarityMatrix {
  std::vector<std::int32_t> row_ids;  // source/query entity ids
  std::vector<std::int32_t> col_ids;  // target/candidate entity ids
  Tensor scores;                      // [rows x cols]
  std::string channel = "ensemble";

  std::size_t row_of(std::int32_t id) const {
    for (std::size_t i = 0; i < row_ids.size(); ++i)
      if (row_ids[i] == id) return i;
    throw ContractViolation("entity id not present as a similarity row");
  }
};

// Cosine similarity of row-normalized embedding matrices: entry (i, j) is
// the dot product of source row i and target row j.
inline SimilarityMatrix similarity_matrix(const Tensor& emb_src, const Tensor& emb_tgt,
                                          std::vector<std::int32_t> row_ids,
                                          std::vector<std::int32_t> col_ids,
                                          std::string channel = "ensemble") {
  contract(emb_src.rank() == 2 && emb_tgt.rank() == 2 && emb_src.cols() == emb_tgt.cols(),
           "similarity_matrix dimension mismatch: " + shape_string(emb_src) + " vs " +
               shape_string(emb_tgt));
  contract(row_ids.size() == emb_src.rows() && col_ids.size() == emb_tgt.rows(),
           "similarity_matrix id lists must match embedding rows");
  SimilarityMatrix sim;
  sim.row_ids = std::move(row_ids);
  sim.col_ids = std::move(col_ids);
  sim.channel = std::move(channel);
  sim.scores = Tensor::zeros({emb_src.rows(), emb_tgt.rows()});
  for (std::size_t i = 0; i < emb_src.rows(); ++i)
    for (std::size_t j = 0; j < emb_tgt.rows(); ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < emb_src.cols(); ++c) dot += emb_src.at(i, c) * emb_tgt.at(j, c);
      sim.scores.at(i, j) = dot;
    }
  return sim;
}

namespace detail {

inline void check_same_frame(const std::vector<SimilarityMatrix>& mats) {
  contract(!mats.empty(), "ensemble of zero matrices");
  for (const auto& m : mats)
    contract(m.row_ids == mats[0].row_ids && m.col_ids == mats[0].col_ids,
             "ensemble inputs must share rows and columns");
}

}  // namespace detail

inline SimilarityMatrix ensemble_average(const std::vector<SimilarityMatrix>& mats) {
  detail::check_same_frame(mats);
  SimilarityMatrix out = mats[0];
  out.channel = "ensemble";
  const double inv = 1.0 / static_cast<double>(mats.size());
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    double s = 0;
    for (const auto& m : mats) s += m.scores.data[i];
    out.scores.data[i] = s * inv;
  }
  return out;
}

struct ChannelWeights {
  std::vector<double> weights;  // nonnegative, sums to 1
};

// Gold pairs as (row id, col id) entity pairs.
using GoldPairs = std::vector<SeedPair>;

// Rank of the gold column for each query: 1-based, ties to smaller column
// index; 0 encodes a miss (gold target absent from the columns).
inline std::vector<std::size_t> gold_ranks(const SimilarityMatrix& sim, const GoldPairs& gold) {
  std::map<std::int32_t, std::size_t> row_index, col_index;
  for (std::size_t i = 0; i < sim.row_ids.size(); ++i) row_index[sim.row_ids[i]] = i;
  for (std::size_t j = 0; j < sim.col_ids.size(); ++j) col_index[sim.col_ids[j]] = j;
  std::vector<std::size_t> ranks;
  ranks.reserve(gold.size());
  for (const SeedPair& p : gold) {
    auto ri = row_index.find(p.source);
    contract(ri != row_index.end(), "gold source entity missing from similarity rows");
    auto ci = col_index.find(p.target);
    if (ci == col_index.end()) {
      ranks.push_back(0);  // miss
      continue;
    }
    const std::size_t r = ri->second;
    const std::size_t c = ci->second;
    const double s = sim.scores.at(r, c);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < sim.col_ids.size(); ++j) {
      const double v = sim.scores.at(r, j);
      if (v > s || (v == s && j < c)) ++rank;
    }
    ranks.push_back(rank);
  }
  return ranks;
}

inline double hits_at_k(const SimilarityMatrix& sim, const GoldPairs& gold, std::size_t k) {
  contract(k >= 1, "hits_at_k requires k >= 1");
  if (gold.empty()) return 0.0;
  const auto ranks = gold_ranks(sim, gold);
  std::size_t hits = 0;
  for (std::size_t r : ranks)
    if (r >= 1 && r <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

inline double mrr(const SimilarityMatrix& sim, const GoldPairs& gold) {
  if (gold.empty()) return 0.0;
  const auto ranks = gold_ranks(sim, gold);
  double sum = 0;
  for (std::size_t r : ranks)
    if (r >= 1) sum += 1.0 / static_cast<double>(r);
  return sum / static_cast<double>(gold.size());
}

// Binary relevance, 1/log2(1+rank) discount, ideal DCG = 1 per query.
inline double ndcg_at_k(const SimilarityMatrix& sim, const GoldPairs& gold, std::size_t k) {
  contract(k >= 1, "ndcg_at_k requires k >= 1");
  if (gold.empty()) return 0.0;
  const auto ranks = gold_ranks(sim, gold);
  double sum = 0;
  for (std::size_t r : ranks)
    if (r >= 1 && r <= k) sum += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return sum / static_cast<double>(gold.size());
}

struct PrecisionRecall {
  double precision;
  double recall;
};

// precision@K = (#gold in top-K) / (K * #queries), recall@K = fraction of
// queries whose gold lands in the top K.
inline PrecisionRecall precision_recall_at_k(const SimilarityMatrix& sim, const GoldPairs& gold,
                                             std::size_t k) {
  contract(k >= 1, "precision_recall_at_k requires k >= 1");
  if (gold.empty()) return {0.0, 0.0};
  const double recall = hits_at_k(sim, gold, k);
  return {recall / static_cast<double>(k), recall};
}

// Per-query misses (gold target absent from the candidate columns).
inline std::size_t count_misses(const SimilarityMatrix& sim, const GoldPairs& gold) {
  std::size_t misses = 0;
  for (std::size_t r : gold_ranks(sim, gold))
    if (r == 0) ++misses;
  return misses;
}

// ---------------------------------------------------------------------------
// Ensembles beyond averaging.

// Channel weights proportional to validation Hits@1; all-zero scores fall
// back to uniform weights.
inline std::pair<SimilarityMatrix, ChannelWeights> ensemble_preweighted(
    const std::vector<SimilarityMatrix>& mats, const GoldPairs& validation_pairs) {
  detail::check_same_frame(mats);
  ChannelWeights w;
  w.weights.resize(mats.size());
  double total = 0;
  for (std::size_t c = 0; c < mats.size(); ++c) {
    w.weights[c] = validation_pairs.empty() ? 0.0 : hits_at_k(mats[c], validation_pairs, 1);
    total += w.weights[c];
  }
  if (total == 0) {
    std::fill(w.weights.begin(), w.weights.end(), 1.0 / static_cast<double>(mats.size()));
  } else {
    for (double& v : w.weights) v /= total;
  }
  SimilarityMatrix out = mats[0];
  out.channel = "ensemble";
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    double s = 0;
    for (std::size_t c = 0; c < mats.size(); ++c) s += w.weights[c] * mats[c].scores.data[i];
    out.scores.data[i] = s;
  }
  return {std::move(out), std::move(w)};
}

struct ClassifierEnsembleConfig {
  std::size_t negatives_per_positive = 1;
  std::size_t iterations = 2000;
  double learning_rate = 0.05;
  double l2 = 1e-4;
  std::uint64_t rng_seed = 0;
};

struct LinearDecision {
  std::vector<double> weights;  // one per channel
  double bias = 0.0;
};

// Linear max-margin classifier over the per-channel score vector of each
// cell, trained by subgradient descent on the hinge loss. Positives are the
// aligned training pairs; negatives are random non-aligned cells. The
// ensemble score of a cell is the signed decision value w . s + b.
inline SimilarityMatrix ensemble_classifier(const std::vector<SimilarityMatrix>& mats,
                                            const GoldPairs& train_pairs,
                                            const ClassifierEnsembleConfig& cfg = {},
                                            LinearDecision* decision_out = nullptr) {
  detail::check_same_frame(mats);
  const std::size_t n_channels = mats.size();
  std::map<std::int32_t, std::size_t> row_index, col_index;
  for (std::size_t i = 0; i < mats[0].row_ids.size(); ++i) row_index[mats[0].row_ids[i]] = i;
  for (std::size_t j = 0; j < mats[0].col_ids.size(); ++j) col_index[mats[0].col_ids[j]] = j;

  std::vector<std::pair<std::size_t, std::size_t>> pos_cells;
  std::set<std::pair<std::size_t, std::size_t>> aligned;
  for (const SeedPair& p : train_pairs) {
    auto ri = row_index.find(p.source);
    auto ci = col_index.find(p.target);
    if (ri == row_index.end() || ci == col_index.end()) continue;
    pos_cells.push_back({ri->second, ci->second});
    aligned.insert({ri->second, ci->second});
  }
  if (pos_cells.empty()) throw ContractViolation("classifier ensemble: no positive cells");

  std::mt19937_64 rng(cfg.rng_seed);
  const std::size_t n_rows = mats[0].scores.rows();
  const std::size_t n_cols = mats[0].scores.cols();
  if (n_rows * n_cols <= pos_cells.size())
    throw ContractViolation("classifier ensemble: no non-aligned cells to sample");
  std::vector<std::pair<std::size_t, std::size_t>> neg_cells;
  std::uniform_int_distribution<std::size_t> row_dist(0, n_rows - 1), col_dist(0, n_cols - 1);
  while (neg_cells.size() < pos_cells.size() * cfg.negatives_per_positive) {
    const std::pair<std::size_t, std::size_t> cell{row_dist(rng), col_dist(rng)};
    if (aligned.count(cell)) continue;
    neg_cells.push_back(cell);
  }

  auto features = [&](std::size_t r, std::size_t c) {
    std::vector<double> f(n_channels);
    for (std::size_t k = 0; k < n_channels; ++k) f[k] = mats[k].scores.at(r, c);
    return f;
  };

  std::vector<double> w(n_channels, 0.0);
  double b = 0.0;
  const std::size_t n_samples = pos_cells.size() + neg_cells.size();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<double> gw(n_channels, 0.0);
    double gb = 0.0;
    auto accumulate = [&](const std::pair<std::size_t, std::size_t>& cell, double y) {
      const auto f = features(cell.first, cell.second);
      double margin = b;
      for (std::size_t k = 0; k < n_channels; ++k) margin += w[k] * f[k];
      if (y * margin < 1.0) {
        for (std::size_t k = 0; k < n_channels; ++k) gw[k] -= y * f[k];
        gb -= y;
      }
    };
    for (const auto& cell : pos_cells) accumulate(cell, +1.0);
    for (const auto& cell : neg_cells) accumulate(cell, -1.0);
    for (std::size_t k = 0; k < n_channels; ++k)
      w[k] -= cfg.learning_rate * (gw[k] / static_cast<double>(n_samples) + cfg.l2 * w[k]);
    b -= cfg.learning_rate * gb / static_cast<double>(n_samples);
  }

  if (decision_out) *decision_out = LinearDecision{w, b};
  SimilarityMatrix out = mats[0];
  out.channel = "ensemble";
  for (std::size_t r = 0; r < n_rows; ++r)
    for (std::size_t c = 0; c < n_cols; ++c) {
      double score = b;
      for (std::size_t k = 0; k < n_channels; ++k) score += w[k] * mats[k].scores.at(r, c);
      out.scores.at(r, c) = score;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Top-K extraction and bootstrap intervals.

struct RankedCandidate {
  std::int32_t candidate;
  double score;
};

// Per query row: the K highest-scoring candidate columns, descending score,
// ties toward the smaller candidate index. K above the column count returns
// every column.
inline std::vector<std::vector<RankedCandidate>> top_k(const SimilarityMatrix& sim,
                                                       std::size_t k) {
  contract(k >= 1, "top_k requires k >= 1");
  const std::size_t n_cols = sim.col_ids.size();
  const std::size_t take = std::min(k, n_cols);
  std::vector<std::vector<RankedCandidate>> out(sim.row_ids.size());
  std::vector<std::size_t> order(n_cols);
  for (std::size_t r = 0; r < sim.row_ids.size(); ++r) {
    for (std::size_t j = 0; j < n_cols; ++j) order[j] = j;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = sim.scores.at(r, a), sb = sim.scores.at(r, b);
                        if (sa != sb) return sa > sb;
                        return a < b;
                      });
    out[r].reserve(take);
    for (std::size_t j = 0; j < take; ++j)
      out[r].push_back({sim.col_ids[order[j]], sim.scores.at(r, order[j])});
  }
  return out;
}

struct ConfidenceInterval {
  double lo;
  double hi;
};

using MetricFn = std::function<double(const SimilarityMatrix&, const GoldPairs&)>;

// Percentile bootstrap over queries: resamples the gold pairs with
// replacement n_resamples times and takes the [2.5%, 97.5%] empirical
// quantiles (nearest-rank: index ceil(q*n)-1 of the sorted resample values).
inline ConfidenceInterval bootstrap_ci(const MetricFn& metric, const SimilarityMatrix& sim,
                                       const GoldPairs& gold, std::size_t n_resamples,
                                       std::uint64_t rng_seed) {
  contract(n_resamples >= 1, "bootstrap_ci requires n_resamples >= 1");
  contract(!gold.empty(), "bootstrap_ci requires at least one gold pair");
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> dist(0, gold.size() - 1);
  std::vector<double> values;
  values.reserve(n_resamples);
  GoldPairs resampled(gold.size());
  for (std::size_t i = 0; i < n_resamples; ++i) {
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

struct MetricValue {
  double point = 0.0;
  ConfidenceInterval ci{0.0, 0.0};
};

struct MetricReport {
  std::size_t queries = 0;
  std::size_t misses = 0;
  std::size_t k = 10;
  MetricValue hits1, hits10, mrr_value, ndcg, precision, recall;
};

inline MetricReport compute_metric_report(const SimilarityMatrix& sim, const GoldPairs& gold,
                                          std::size_t k, std::size_t n_resamples,
                                          std::uint64_t rng_seed) {
  MetricReport rep;
  rep.queries = gold.size();
  rep.misses = count_misses(sim, gold);
  rep.k = k;
  auto with_ci = [&](const MetricFn& fn) {
    MetricValue v;
    v.point = fn(sim, gold);
    v.ci = bootstrap_ci(fn, sim, gold, n_resamples, rng_seed);
    return v;
  };
  rep.hits1 = with_ci([](const SimilarityMatrix& s, const GoldPairs& g) { return hits_at_k(s, g, 1); });
  rep.hits10 =
      with_ci([](const SimilarityMatrix& s, const GoldPairs& g) { return hits_at_k(s, g, 10); });
  rep.mrr_value = with_ci([](const SimilarityMatrix& s, const GoldPairs& g) { return mrr(s, g); });
  rep.ndcg = with_ci(
      [k](const SimilarityMatrix& s, const GoldPairs& g) { return ndcg_at_k(s, g, k); });
  rep.precision = with_ci([k](const SimilarityMatrix& s, const GoldPairs& g) {
    return precision_recall_at_k(s, g, k).precision;
  });
  rep.recall = with_ci([k](const SimilarityMatrix& s, const GoldPairs& g) {
    return precision_recall_at_k(s, g, k).recall;
  });
  return rep;
}

inline std::string format_metric_report(const MetricReport& rep) {
  std::string out;
  out += str_printf("queries: %zu\n", rep.queries);
  out += str_printf("misses: %zu\n", rep.misses);
  auto emit = [&](const std::string& name, const MetricValue& v) {
    out += str_printf("%s: %.6f\n", name.c_str(), v.point);
    out += str_printf("%s.ci_lo: %.6f\n", name.c_str(), v.ci.lo);
    out += str_printf("%s.ci_hi: %.6f\n", name.c_str(), v.ci.hi);
  };
  emit("hits@1", rep.hits1);
  emit("hits@10", rep.hits10);
  emit("mrr", rep.mrr_value);
  emit(str_printf("ndcg@%zu", rep.k), rep.ndcg);
  emit(str_printf("precision@%zu", rep.k), rep.precision);
  emit(str_printf("recall@%zu", rep.k), rep.recall);
  return out;
}

}  // namespace raea
