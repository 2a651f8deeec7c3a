#pragma once

// Margin-based alignment training for one channel: nearest-neighbor negative
// sampling, the hinge objective over seed pairs, an adaptive-gradient
// optimizer (accumulated squared gradients), early stopping on validation
// Hits@1, grid search over (learning rate, L2) and the closed-form training
// cost estimate.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "raea/autodiff.hpp"
#include "raea/common.hpp"
#include "raea/metrics.hpp"
#include "raea/network.hpp"

namespace raea {

enum class Distance : std::uint8_t { L1, L2 };

struct TrainConfig {
  double margin = 3.0;
  std::size_t n_neg = 15;
  std::size_t resample_every = 50;  // epochs between negative refreshes
  std::size_t max_epochs = 1500;
  std::size_t patience = 50;  // epochs without a new best validation Hits@1
  std::vector<double> lr_grid = {1e-3, 4e-3, 7e-3};
  std::vector<double> l2_grid = {0.0, 1e-4, 1e-3};
  Distance distance = Distance::L1;
  std::uint64_t rng_seed = 0;

  void validate() const {
    contract(margin > 0, "margin must be positive");
    contract(resample_every >= 1 && max_epochs >= 1, "epoch settings must be positive");
    contract(patience <= max_epochs, "patience must not exceed max_epochs");
    contract(!lr_grid.empty() && !l2_grid.empty(), "grids must be non-empty");
  }
};

struct NegativeSampleSet {
  // Per training pair: candidate replacements for the source entity and for
  // the target entity, nearest-first.
  std::vector<std::vector<std::int32_t>> source_negatives;
  std::vector<std::vector<std::int32_t>> target_negatives;
  std::size_t epoch_stamp = 0;
};

namespace detail {

inline double row_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j,
                           Distance d) {
  double acc = 0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double diff = a.at(i, c) - b.at(j, c);
    acc += d == Distance::L1 ? std::fabs(diff) : diff * diff;
  }
  return d == Distance::L1 ? acc : std::sqrt(acc);
}

// n_neg nearest same-graph entities to row `anchor`, excluding the anchor
// and anything in `excluded`; ties broken toward the smaller entity id.
inline std::vector<std::int32_t> nearest_entities(const Tensor& emb, std::int32_t anchor,
                                                  const std::set<std::int32_t>& excluded,
                                                  std::size_t n_neg, Distance d) {
  std::vector<std::pair<double, std::int32_t>> scored;
  scored.reserve(emb.rows());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (id == anchor || excluded.count(id)) continue;
    scored.push_back({row_distance(emb, i, emb, anchor, d), id});
  }
  const std::size_t take = std::min(n_neg, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end());
  std::vector<std::int32_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace detail

// Nearest-neighbor negatives in the current embedding space. For a pair
// (e, e'): NS(e) holds source-graph entities near e, NS(e') target-graph
// entities near e'. The anchor itself and any entity seed-aligned to the
// pair's counterpart are excluded. Graphs with fewer than n_neg usable
// entities yield shorter lists (sets `truncated`).
inline NegativeSampleSet sample_negatives(const Tensor& emb_src, const Tensor& emb_tgt,
                                          const std::vector<SeedPair>& train_pairs,
                                          const TrainConfig& cfg, std::size_t epoch,
                                          bool* truncated = nullptr) {
  NegativeSampleSet out;
  out.epoch_stamp = epoch;
  out.source_negatives.reserve(train_pairs.size());
  out.target_negatives.reserve(train_pairs.size());
  std::map<std::int32_t, std::int32_t> src_of_tgt, tgt_of_src;
  for (const SeedPair& p : train_pairs) {
    src_of_tgt[p.target] = p.source;
    tgt_of_src[p.source] = p.target;
  }
  if (truncated) *truncated = false;
  for (const SeedPair& p : train_pairs) {
    std::set<std::int32_t> excl_src, excl_tgt;
    if (auto it = src_of_tgt.find(p.target); it != src_of_tgt.end()) excl_src.insert(it->second);
    if (auto it = tgt_of_src.find(p.source); it != tgt_of_src.end()) excl_tgt.insert(it->second);
    auto src = detail::nearest_entities(emb_src, p.source, excl_src, cfg.n_neg, cfg.distance);
    auto tgt = detail::nearest_entities(emb_tgt, p.target, excl_tgt, cfg.n_neg, cfg.distance);
    if (truncated && (src.size() < cfg.n_neg || tgt.size() < cfg.n_neg)) *truncated = true;
    out.source_negatives.push_back(std::move(src));
    out.target_negatives.push_back(std::move(tgt));
  }
  return out;
}

// Distance between paired embedding rows, as a [#pairs x 1] tape node.
inline ad::Tape::Id pair_distances(ad::Tape& tape, ad::Tape::Id emb_a, ad::Tape::Id emb_b,
                                   std::vector<std::int32_t> rows_a,
                                   std::vector<std::int32_t> rows_b, Distance d) {
  ad::Tape::Id a = tape.gather_rows(emb_a, std::move(rows_a));
  ad::Tape::Id b = tape.gather_rows(emb_b, std::move(rows_b));
  ad::Tape::Id diff = tape.sub(a, b);
  if (d == Distance::L1) return tape.row_sum(tape.abs(diff));
  return tape.sqrt(tape.row_sum(tape.mul(diff, diff)));
}

// Hinge alignment objective: for every training pair, each source-side
// negative contributes [d(e,e') - d(e-,e') + margin]+ and each target-side
// negative [d(e,e') - d(e,e'-) + margin]+. Returns a scalar node (0 when
// there are no pairs or no negatives).
inline ad::Tape::Id margin_loss(ad::Tape& tape, ad::Tape::Id emb_src, ad::Tape::Id emb_tgt,
                                const std::vector<SeedPair>& pairs, const NegativeSampleSet& negs,
                                const TrainConfig& cfg) {
  contract(negs.source_negatives.size() == pairs.size() &&
               negs.target_negatives.size() == pairs.size(),
           "negative sample set does not cover the training pairs");
  if (pairs.empty()) return tape.constant(Tensor::scalar(0.0));

  std::vector<std::int32_t> pos_src, pos_tgt;
  for (const SeedPair& p : pairs) {
    pos_src.push_back(p.source);
    pos_tgt.push_back(p.target);
  }
  ad::Tape::Id d_pos = pair_distances(tape, emb_src, emb_tgt, pos_src, pos_tgt, cfg.distance);

  ad::Tape::Id loss = tape.constant(Tensor::scalar(0.0));
  auto hinge_side = [&](bool source_side) {
    std::vector<std::int32_t> neg_rows, other_rows, pair_of_term;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& negs_i = source_side ? negs.source_negatives[i] : negs.target_negatives[i];
      for (std::int32_t n : negs_i) {
        neg_rows.push_back(n);
        other_rows.push_back(source_side ? pairs[i].target : pairs[i].source);
        pair_of_term.push_back(static_cast<std::int32_t>(i));
      }
    }
    if (neg_rows.empty()) return;
    ad::Tape::Id d_neg =
        source_side ? pair_distances(tape, emb_src, emb_tgt, neg_rows, other_rows, cfg.distance)
                    : pair_distances(tape, emb_src, emb_tgt, other_rows, neg_rows, cfg.distance);
    ad::Tape::Id d_pos_terms = tape.gather_rows(d_pos, pair_of_term);
    ad::Tape::Id hinge =
        tape.relu(tape.add_scalar(tape.sub(d_pos_terms, d_neg), cfg.margin));
    loss = tape.add(loss, tape.sum(hinge));
  };
  hinge_side(true);
  hinge_side(false);
  return loss;
}

// ---------------------------------------------------------------------------
// Optimizer: per-parameter accumulated squared gradients,
// theta <- theta - lr * g / (sqrt(acc) + eps), with L2 added to the raw
// gradient first.

struct OptimizerState {
  double learning_rate = 1e-3;
  double l2 = 0.0;
  double epsilon = 1e-8;
  std::vector<Tensor> accumulators;  // parallel to the parameter list

  void init(const std::vector<ad::Parameter*>& params) {
    accumulators.clear();
    for (ad::Parameter* p : params) accumulators.push_back(Tensor::zeros(p->value.shape));
  }

  void step(const std::vector<ad::Parameter*>& params) {
    contract(accumulators.size() == params.size(), "optimizer not initialized for these params");
    for (std::size_t k = 0; k < params.size(); ++k) {
      ad::Parameter& p = *params[k];
      Tensor& acc = accumulators[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.data[i] + l2 * p.value.data[i];
        acc.data[i] += g * g;
        p.value.data[i] -= learning_rate * g / (std::sqrt(acc.data[i]) + epsilon);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Channel training.

struct EpochRecord {
  std::size_t epoch;
  double loss;
  double val_hits1;
  double seconds;  // wall clock since training start
};

struct TrainResult {
  std::size_t best_epoch = 0;
  double best_hits1 = -1.0;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  bool negatives_truncated = false;
};

// Everything channel training needs for one graph pair.
struct ChannelTask {
  GraphTensors source;
  GraphTensors target;
  std::vector<SeedPair> train_pairs;
  std::vector<SeedPair> val_pairs;  // monitored for early stopping
};

namespace detail {

inline double validation_hits1(const Tensor& emb_src, const Tensor& emb_tgt,
                               const std::vector<SeedPair>& val_pairs) {
  if (val_pairs.empty()) return 0.0;
  std::vector<std::int32_t> rows, cols;
  for (const SeedPair& p : val_pairs) rows.push_back(p.source);
  for (const SeedPair& p : val_pairs) cols.push_back(p.target);
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  Tensor src = Tensor::zeros({rows.size(), emb_src.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < emb_src.cols(); ++c) src.at(i, c) = emb_src.at(rows[i], c);
  Tensor tgt = Tensor::zeros({cols.size(), emb_tgt.cols()});
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t c = 0; c < emb_tgt.cols(); ++c) tgt.at(j, c) = emb_tgt.at(cols[j], c);
  const SimilarityMatrix sim = similarity_matrix(src, tgt, rows, cols);
  return hits_at_k(sim, val_pairs, 1);
}

inline std::vector<Tensor> snapshot_values(const std::vector<ad::Parameter*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (ad::Parameter* p : params) out.push_back(p->value);
  return out;
}

inline void restore_values(const std::vector<ad::Parameter*>& params,
                           const std::vector<Tensor>& snapshot) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
}

}  // namespace detail

// Full-batch training with negative resampling every `resample_every`
// epochs. Validation Hits@1 (over the monitoring pairs, computed from the
// same forward pass the loss uses) drives early stopping; the returned model
// carries the best-Hits@1 parameter snapshot.
inline TrainResult train_channel(ChannelModel& model, const ChannelTask& task,
                                 const TrainConfig& cfg, double learning_rate, double l2) {
  cfg.validate();
  const auto params = model.parameters();
  OptimizerState opt;
  opt.learning_rate = learning_rate;
  opt.l2 = l2;
  opt.init(params);

  TrainResult result;
  std::vector<Tensor> best_snapshot = detail::snapshot_values(params);
  NegativeSampleSet negatives;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (epoch == 1 || (epoch - 1) % cfg.resample_every == 0) {
      try {
        const Tensor emb_src = evaluate_embeddings(model, task.source, GraphSide::Source);
        const Tensor emb_tgt = evaluate_embeddings(model, task.target, GraphSide::Target);
        bool truncated = false;
        negatives = sample_negatives(emb_src, emb_tgt, task.train_pairs, cfg, epoch, &truncated);
        result.negatives_truncated = result.negatives_truncated || truncated;
      } catch (const ad::NonFiniteValue& e) {
        throw NumericError(str_printf("%s at epoch %zu (channel %s, lr=%g, l2=%g)", e.what(),
                                      epoch, channel_name(model.kind), learning_rate, l2));
      }
    }

    ad::Tape tape;
    ChannelForward fwd_src, fwd_tgt;
    ad::Tape::Id loss_node = -1;
    try {
      fwd_src = channel_forward(tape, model, task.source, GraphSide::Source);
      fwd_tgt = channel_forward(tape, model, task.target, GraphSide::Target);
      loss_node = margin_loss(tape, fwd_src.normalized, fwd_tgt.normalized, task.train_pairs,
                              negatives, cfg);
    } catch (const ad::NonFiniteValue& e) {
      throw NumericError(str_printf("%s at epoch %zu (channel %s, lr=%g, l2=%g)", e.what(), epoch,
                                    channel_name(model.kind), learning_rate, l2));
    }
    const double loss = tape.value(loss_node).data[0];
    if (!std::isfinite(loss))
      throw NumericError(str_printf("non-finite loss %g at epoch %zu (channel %s, lr=%g, l2=%g)",
                                    loss, epoch, channel_name(model.kind), learning_rate, l2));

    const double hits1 = detail::validation_hits1(tape.value(fwd_src.normalized),
                                                  tape.value(fwd_tgt.normalized), task.val_pairs);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back({epoch, loss, hits1, seconds});

    if (hits1 > result.best_hits1) {
      result.best_hits1 = hits1;
      result.best_epoch = epoch;
      best_snapshot = detail::snapshot_values(params);
    } else if (epoch >= result.best_epoch + cfg.patience) {
      result.early_stopped = true;
      break;
    }

    tape.backward(loss_node);
    opt.step(params);
  }

  detail::restore_values(params, best_snapshot);
  return result;
}

struct GridCell {
  double learning_rate;
  double l2;
  double val_hits1;
  std::size_t best_epoch;
};

struct GridSearchResult {
  double best_learning_rate = 0.0;
  double best_l2 = 0.0;
  TrainResult best_run;
  std::vector<GridCell> table;
};

// Trains every (lr, l2) cell from identical initial parameters (the model's
// construction seed) and keeps the best validation Hits@1; ties go to the
// smaller learning rate, then the smaller L2. The model is left holding the
// winning snapshot.
inline GridSearchResult grid_search(ChannelModel& model, const ChannelTask& task,
                                    const TrainConfig& cfg) {
  cfg.validate();
  std::vector<double> lrs = cfg.lr_grid, l2s = cfg.l2_grid;
  std::sort(lrs.begin(), lrs.end());
  std::sort(l2s.begin(), l2s.end());

  const auto params = model.parameters();
  const std::vector<Tensor> init = detail::snapshot_values(params);

  GridSearchResult result;
  std::vector<Tensor> best_values = init;
  bool have_best = false;
  for (double lr : lrs)
    for (double l2 : l2s) {
      detail::restore_values(params, init);
      TrainResult run = train_channel(model, task, cfg, lr, l2);
      result.table.push_back({lr, l2, run.best_hits1, run.best_epoch});
      if (!have_best || run.best_hits1 > result.best_run.best_hits1) {
        have_best = true;
        result.best_learning_rate = lr;
        result.best_l2 = l2;
        best_values = detail::snapshot_values(params);
        result.best_run = std::move(run);
      }
    }
  detail::restore_values(params, best_values);
  return result;
}

// ---------------------------------------------------------------------------
// Theoretical training cost per channel:
//   T = P1 * P2 * (e + e/F_neg * N_neg) * N_s * N_t * T_s * T_t.

struct CostParams {
  std::uint64_t grid_size_1 = 1;  // P1
  std::uint64_t grid_size_2 = 1;  // P2
  std::uint64_t epochs = 1;       // e
  std::uint64_t resample_every = 1;  // F_neg
  std::uint64_t n_negatives = 0;     // N_neg
  std::uint64_t source_nodes = 1;    // N_s
  std::uint64_t source_triples = 1;  // T_s
  std::uint64_t target_nodes = 1;    // N_t
  std::uint64_t target_triples = 1;  // T_t
};

// Evaluated with 128-bit integer arithmetic, dividing by F_neg last so the
// result is exact whenever F_neg divides e * (F_neg + N_neg).
inline double estimate_training_cost(const CostParams& p) {
  contract(p.grid_size_1 > 0 && p.grid_size_2 > 0 && p.epochs > 0 && p.resample_every > 0 &&
               p.source_nodes > 0 && p.source_triples > 0 && p.target_nodes > 0 &&
               p.target_triples > 0,
           "cost parameters must be positive");
  using u128 = unsigned __int128;
  u128 num = static_cast<u128>(p.epochs) * (p.resample_every + p.n_negatives);
  num *= p.grid_size_1;
  num *= p.grid_size_2;
  num *= p.source_nodes;
  num *= p.target_nodes;
  num *= p.source_triples;
  num *= p.target_triples;
  const u128 q = num / p.resample_every;
  const u128 r = num % p.resample_every;
  double value = static_cast<double>(static_cast<long double>(q));
  if (r != 0)
    value += static_cast<double>(static_cast<long double>(r) /
                                 static_cast<long double>(p.resample_every));
  return value;
}

}  // namespace raea
