#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "raea/synth.hpp"
#include "raea/trainer.hpp"

using namespace raea;
namespace ad = raea::ad;

namespace {

Tensor rows1d(std::initializer_list<double> values) {
  Tensor t = Tensor::zeros({values.size(), 1});
  std::size_t i = 0;
  for (double v : values) t.data[i++] = v;
  return t;
}

double loss_value(const Tensor& emb_src, const Tensor& emb_tgt,
                  const std::vector<SeedPair>& pairs, const NegativeSampleSet& negs,
                  const TrainConfig& cfg) {
  ad::Tape tape;
  auto loss = margin_loss(tape, tape.constant(emb_src), tape.constant(emb_tgt), pairs, negs, cfg);
  return tape.value(loss).data[0];
}

// A fully assembled training setup over a synthetic pair's literal channel
// (or structure channel), shared by several tests.
struct Setup {
  GeneratedPair pair;
  Embedder embedder{nullptr, {12, 2, 3, 0}};
  DimensionsConfig dims;
  ChannelTask task;

  Setup(ChannelKind kind, std::size_t n_entities, double attr_noise, std::uint64_t seed,
        std::size_t n_train) {
    SynthConfig scfg;
    scfg.n_entities = n_entities;
    scfg.n_relations = 5;
    scfg.rel_density = 4.0;
    scfg.attr_per_entity = 3;
    scfg.attr_noise = attr_noise;
    scfg.rng_seed = seed;
    pair = generate_aligned_pair(scfg);
    dims.d_entity = dims.d_attr = dims.d_value = dims.d_relation = 12;
    dims.d_hidden = {12, 12};

    const auto preds_src = resolve_name_predicates(pair.source, {kSynthNamePredicate});
    const auto preds_tgt = resolve_name_predicates(pair.target, {kSynthNamePredicate});
    const ChannelPartition parts_src = partition_channels(pair.source, preds_src);
    const ChannelPartition parts_tgt = partition_channels(pair.target, preds_tgt);
    const bool structure = kind == ChannelKind::Structure;
    const Tensor h0s = structure ? Tensor::zeros({n_entities, 12})
                                 : embed_entity_names(pair.source, preds_src, embedder);
    const Tensor h0t = structure ? Tensor::zeros({n_entities, 12})
                                 : embed_entity_names(pair.target, preds_tgt, embedder);
    task.source = build_graph_tensors(parts_src.of(kind), embedder, h0s);
    task.target = build_graph_tensors(parts_tgt.of(kind), embedder, h0t);
    for (std::size_t i = 0; i < n_train; ++i) task.train_pairs.push_back(pair.gold.pairs[i]);
    for (std::size_t i = n_train; i < n_train + 5; ++i) task.val_pairs.push_back(pair.gold.pairs[i]);
  }

  ChannelModel model(ChannelKind kind, std::uint64_t seed) const {
    return make_channel_model(kind, dims, {}, pair.source.entities.size(),
                              pair.target.entities.size(), seed);
  }
};

}  // namespace

TEST_CASE("hinge terms follow the margin arithmetic") {
  TrainConfig cfg;
  cfg.margin = 3.0;
  std::vector<SeedPair> pairs = {{0, 0}};

  SUBCASE("negative farther than margin contributes zero") {
    // d(e,e') = 1, d(e_-,e') = 5: [1 - 5 + 3]+ = 0.
    NegativeSampleSet negs;
    negs.source_negatives = {{1}};
    negs.target_negatives = {{}};
    CHECK(loss_value(rows1d({0.0, 6.0}), rows1d({1.0}), pairs, negs, cfg) == 0.0);
  }
  SUBCASE("close negative contributes d_pos - d_neg + margin") {
    // d(e,e') = 2, d(e_-,e') = 1: [2 - 1 + 3]+ = 4.
    NegativeSampleSet negs;
    negs.source_negatives = {{1}};
    negs.target_negatives = {{}};
    CHECK(loss_value(rows1d({0.0, 1.0}), rows1d({2.0}), pairs, negs, cfg) == 4.0);
  }
  SUBCASE("zero seed pairs give zero loss") {
    NegativeSampleSet negs;
    CHECK(loss_value(rows1d({0.0}), rows1d({1.0}), {}, negs, cfg) == 0.0);
  }
  SUBCASE("target-side negatives use d(e, e'_-)") {
    // d(e,e') = 2, d(e,e'_-) = 1: [2 - 1 + 3]+ = 4.
    NegativeSampleSet negs;
    negs.source_negatives = {{}};
    negs.target_negatives = {{1}};
    CHECK(loss_value(rows1d({0.0}), rows1d({2.0, 1.0}), pairs, negs, cfg) == 4.0);
  }
}

TEST_CASE("margin loss is nonnegative and zero only without active hinges") {
  std::mt19937_64 rng(17);
  TrainConfig cfg;
  cfg.margin = 0.7;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6;
    Tensor src = Tensor::zeros({n, 3}), tgt = Tensor::zeros({n, 3});
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : src.data) v = dist(rng);
    for (double& v : tgt.data) v = dist(rng);
    std::vector<SeedPair> pairs = {{0, 0}, {1, 1}};
    NegativeSampleSet negs;
    negs.source_negatives = {{2, 3}, {4}};
    negs.target_negatives = {{5}, {2, 3}};
    CHECK(loss_value(src, tgt, pairs, negs, cfg) >= 0.0);
  }
}

TEST_CASE("loss is invariant under seed-pair permutation") {
  std::mt19937_64 rng(19);
  Tensor src = Tensor::zeros({8, 4}), tgt = Tensor::zeros({8, 4});
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : src.data) v = dist(rng);
  for (double& v : tgt.data) v = dist(rng);
  TrainConfig cfg;
  std::vector<SeedPair> pairs = {{0, 0}, {1, 1}, {2, 2}};
  NegativeSampleSet negs;
  negs.source_negatives = {{3}, {4}, {5}};
  negs.target_negatives = {{6}, {7}, {3}};
  const double a = loss_value(src, tgt, pairs, negs, cfg);
  std::vector<SeedPair> perm_pairs = {pairs[2], pairs[0], pairs[1]};
  NegativeSampleSet perm_negs;
  perm_negs.source_negatives = {negs.source_negatives[2], negs.source_negatives[0],
                                negs.source_negatives[1]};
  perm_negs.target_negatives = {negs.target_negatives[2], negs.target_negatives[0],
                                negs.target_negatives[1]};
  const double b = loss_value(src, tgt, perm_pairs, perm_negs, cfg);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("negative sampling") {
  TrainConfig cfg;

  SUBCASE("three entities, one negative: the unique nearest non-self") {
    cfg.n_neg = 1;
    const Tensor src = rows1d({0.0, 0.5, 3.0});
    const Tensor tgt = rows1d({0.0, 10.0, 20.0});
    const auto negs = sample_negatives(src, tgt, {{0, 0}}, cfg, 1);
    CHECK(negs.source_negatives[0] == std::vector<std::int32_t>{1});
  }
  SUBCASE("equal distances break toward the smaller id") {
    cfg.n_neg = 1;
    const Tensor src = rows1d({0.0, 1.0, -1.0});  // entities 1 and 2 equidistant from 0
    const Tensor tgt = rows1d({0.0, 5.0, 9.0});
    const auto negs = sample_negatives(src, tgt, {{0, 0}}, cfg, 1);
    CHECK(negs.source_negatives[0] == std::vector<std::int32_t>{1});
  }
  SUBCASE("full-size sample with plenty of entities") {
    cfg.n_neg = 15;
    Tensor src = Tensor::zeros({100, 1}), tgt = Tensor::zeros({100, 1});
    for (std::size_t i = 0; i < 100; ++i) {
      src.data[i] = static_cast<double>(i);
      tgt.data[i] = static_cast<double>(i) + 0.25;
    }
    bool truncated = true;
    const auto negs = sample_negatives(src, tgt, {{50, 50}}, cfg, 1, &truncated);
    CHECK(negs.source_negatives[0].size() == 15);
    CHECK(negs.target_negatives[0].size() == 15);
    CHECK_FALSE(truncated);
  }
  SUBCASE("graphs smaller than the request are truncated with a flag") {
    cfg.n_neg = 5;
    bool truncated = false;
    const auto negs =
        sample_negatives(rows1d({0.0, 1.0, 2.0}), rows1d({0.0, 1.0, 2.0}), {{0, 0}}, cfg, 1,
                         &truncated);
    CHECK(negs.source_negatives[0].size() == 2);
    CHECK(truncated);
  }
  SUBCASE("no sample contains the anchor or its seed counterpart") {
    std::mt19937_64 rng(23);
    cfg.n_neg = 4;
    Tensor src = Tensor::zeros({20, 2}), tgt = Tensor::zeros({20, 2});
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : src.data) v = dist(rng);
    for (double& v : tgt.data) v = dist(rng);
    std::vector<SeedPair> pairs = {{0, 3}, {1, 1}, {7, 0}};
    const auto negs = sample_negatives(src, tgt, pairs, cfg, 1);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      for (std::int32_t n : negs.source_negatives[p]) {
        CHECK(n != pairs[p].source);
        // An entity seed-aligned to the pair's target is excluded too.
        for (const SeedPair& other : pairs)
          if (other.target == pairs[p].target) CHECK(n != other.source);
      }
      for (std::int32_t n : negs.target_negatives[p]) CHECK(n != pairs[p].target);
    }
  }
}

TEST_CASE("training cost formula") {
  SUBCASE("worked instance is exact") {
    CostParams p;
    p.grid_size_1 = 3;
    p.grid_size_2 = 3;
    p.epochs = 100;
    p.resample_every = 50;
    p.n_negatives = 5;
    p.source_nodes = 100;
    p.target_nodes = 100;
    p.source_triples = 500;
    p.target_triples = 500;
    CHECK(estimate_training_cost(p) == 2.475e12);
  }
  SUBCASE("no negatives reduces to the plain epoch product") {
    CostParams p;
    p.grid_size_1 = 3;
    p.grid_size_2 = 3;
    p.epochs = 100;
    p.resample_every = 100;
    p.n_negatives = 0;
    p.source_nodes = 100;
    p.target_nodes = 100;
    p.source_triples = 500;
    p.target_triples = 500;
    CHECK(estimate_training_cost(p) == 2.25e12);
  }
  SUBCASE("cost is linear in the grid size") {
    CostParams p;
    p.grid_size_1 = 2;
    p.grid_size_2 = 3;
    p.epochs = 70;
    p.resample_every = 7;
    p.n_negatives = 4;
    p.source_nodes = 11;
    p.target_nodes = 13;
    p.source_triples = 17;
    p.target_triples = 19;
    const double base = estimate_training_cost(p);
    p.grid_size_1 = 4;
    CHECK(estimate_training_cost(p) == 2.0 * base);
  }
}

TEST_CASE("optimizer accumulators never decrease") {
  ad::Parameter p("p", Tensor({1, 2}, {1.0, -2.0}));
  OptimizerState opt;
  opt.learning_rate = 0.1;
  opt.init({&p});
  double prev = 0.0;
  for (int step = 0; step < 5; ++step) {
    p.grad = Tensor({1, 2}, {0.5, -0.25});
    opt.step({&p});
    CHECK(opt.accumulators[0].data[0] >= prev);
    prev = opt.accumulators[0].data[0];
  }
}

TEST_CASE("training is deterministic given the seed") {
  const Setup setup(ChannelKind::Literal, 30, 0.3, 3, 15);
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.patience = 8;
  cfg.n_neg = 3;
  auto run = [&] {
    ChannelModel model = setup.model(ChannelKind::Literal, 77);
    return train_channel(model, setup.task, cfg, 4e-3, 0.0);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].val_hits1 == b.history[i].val_hits1);
  }
}

TEST_CASE("a frozen metric stops training at exactly best_epoch + patience") {
  const Setup setup(ChannelKind::Literal, 20, 0.3, 4, 10);
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.patience = 5;
  cfg.n_neg = 2;
  ChannelModel model = setup.model(ChannelKind::Literal, 9);
  // lr = 0 freezes the parameters, so validation Hits@1 never changes.
  const TrainResult result = train_channel(model, setup.task, cfg, 0.0, 0.0);
  CHECK(result.early_stopped);
  CHECK(result.best_epoch == 1);
  CHECK(result.history.back().epoch == 1 + cfg.patience);
}

TEST_CASE("returned parameters reproduce the best recorded validation Hits@1") {
  const Setup setup(ChannelKind::Structure, 24, 0.0, 5, 12);
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.patience = 12;
  cfg.n_neg = 3;
  ChannelModel model = setup.model(ChannelKind::Structure, 10);
  const TrainResult result = train_channel(model, setup.task, cfg, 7e-3, 0.0);
  double recorded_best = -1.0;
  for (const EpochRecord& r : result.history) recorded_best = std::max(recorded_best, r.val_hits1);
  CHECK(result.best_hits1 == recorded_best);
  const Tensor emb_src = evaluate_embeddings(model, setup.task.source, GraphSide::Source);
  const Tensor emb_tgt = evaluate_embeddings(model, setup.task.target, GraphSide::Target);
  // Recompute Hits@1 on the restored snapshot.
  std::vector<std::int32_t> rows, cols;
  for (const SeedPair& p : setup.task.val_pairs) rows.push_back(p.source);
  for (const SeedPair& p : setup.task.val_pairs) cols.push_back(p.target);
  std::sort(cols.begin(), cols.end());
  Tensor src = Tensor::zeros({rows.size(), emb_src.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < emb_src.cols(); ++c) src.at(i, c) = emb_src.at(rows[i], c);
  Tensor tgt = Tensor::zeros({cols.size(), emb_tgt.cols()});
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t c = 0; c < emb_tgt.cols(); ++c) tgt.at(j, c) = emb_tgt.at(cols[j], c);
  CHECK(hits_at_k(similarity_matrix(src, tgt, rows, cols), setup.task.val_pairs, 1) ==
        result.best_hits1);
}

TEST_CASE("loss decreases over the first epochs on zero-noise twins") {
  // Structure channel on an isomorphic pair: trainable vectors start random,
  // so the alignment objective has real work to do.
  const Setup setup(ChannelKind::Structure, 200, 0.0, 0, 60);
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.n_neg = 15;
  ChannelModel model = setup.model(ChannelKind::Structure, 11);
  const TrainResult result = train_channel(model, setup.task, cfg, 4e-3, 0.0);
  REQUIRE(result.history.size() == 10);
  for (std::size_t i = 1; i < result.history.size(); ++i)
    CHECK(result.history[i].loss < result.history[i - 1].loss);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  const Setup setup(ChannelKind::Structure, 12, 0.0, 6, 6);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  cfg.n_neg = 2;
  ChannelModel model = setup.model(ChannelKind::Structure, 12);
  // An absurd learning rate overflows the forward pass within a few steps.
  CHECK_THROWS_AS(train_channel(model, setup.task, cfg, 1e200, 0.0), NumericError);
}

TEST_CASE("grid search") {
  const Setup setup(ChannelKind::Literal, 20, 0.3, 7, 10);

  SUBCASE("single cell is trivially best") {
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.n_neg = 2;
    cfg.lr_grid = {4e-3};
    cfg.l2_grid = {0.0};
    ChannelModel model = setup.model(ChannelKind::Literal, 13);
    const GridSearchResult result = grid_search(model, setup.task, cfg);
    CHECK(result.table.size() == 1);
    CHECK(result.best_learning_rate == 4e-3);
  }
  SUBCASE("3x3 grid trains nine cells") {
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.patience = 2;
    cfg.n_neg = 2;
    ChannelModel model = setup.model(ChannelKind::Literal, 14);
    const GridSearchResult result = grid_search(model, setup.task, cfg);
    CHECK(result.table.size() == 9);
  }
  SUBCASE("uniform scores pick the smallest learning rate then smallest l2") {
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.n_neg = 2;
    // lr 0 freezes training; lr 1e-12 moves parameters below any ranking
    // gap. All four cells record the same Hits@1.
    cfg.lr_grid = {1e-12, 0.0};
    cfg.l2_grid = {1e-4, 0.0};
    ChannelModel model = setup.model(ChannelKind::Literal, 15);
    const GridSearchResult result = grid_search(model, setup.task, cfg);
    const double first = result.table[0].val_hits1;
    for (const GridCell& cell : result.table) CHECK(cell.val_hits1 == first);
    CHECK(result.best_learning_rate == 0.0);
    CHECK(result.best_l2 == 0.0);
  }
}
