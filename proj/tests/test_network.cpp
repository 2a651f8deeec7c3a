#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "raea/network.hpp"
#include "raea/synth.hpp"
#include "raea/trainer.hpp"

using namespace raea;
namespace ad = raea::ad;

namespace {

double elu(double x) { return x > 0 ? x : std::exp(x) - 1.0; }

DimensionsConfig small_dims(std::size_t d_entity, std::size_t d_attr, std::size_t d_rel,
                            std::size_t layers = 1) {
  DimensionsConfig dims;
  dims.d_entity = d_entity;
  dims.d_attr = dims.d_value = d_attr;
  dims.d_relation = d_rel;
  dims.d_hidden.assign(layers, d_entity);
  return dims;
}

Tensor random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor t = Tensor::zeros({n, d});
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace

TEST_CASE("single attribute: attention weight 1 and h = ELU(W [a;v])") {
  const DimensionsConfig dims = small_dims(3, 2, 3);
  ChannelModel model = make_channel_model(ChannelKind::Literal, dims, {}, 1, 1, 9);
  GraphTensors g;
  g.n_entities = 1;
  g.attrs.predicate = Tensor({1, 2}, {0.3, -0.4});
  g.attrs.value = Tensor({1, 2}, {0.8, 0.1});
  g.attrs.entity = {0};
  g.h0 = Tensor({1, 3}, {0.5, -0.2, 0.9});

  ad::Tape tape;
  auto h = attr_entity_encode(tape, model, g, tape.constant(g.h0));
  const Tensor& out = tape.value(h);
  const double av[4] = {0.3, -0.4, 0.8, 0.1};
  for (std::size_t c = 0; c < 3; ++c) {
    double pre = 0;
    for (std::size_t k = 0; k < 4; ++k) pre += av[k] * model.attr_W[0].value.at(k, c);
    CHECK(out.at(0, c) == doctest::Approx(elu(pre)).epsilon(1e-12));
  }
}

TEST_CASE("two attributes with identical predicate split attention evenly") {
  const DimensionsConfig dims = small_dims(3, 2, 3);
  ChannelModel model = make_channel_model(ChannelKind::Literal, dims, {}, 1, 1, 10);
  GraphTensors g;
  g.n_entities = 1;
  g.attrs.predicate = Tensor({2, 2}, {0.3, -0.4, 0.3, -0.4});  // same a_j
  g.attrs.value = Tensor({2, 2}, {0.8, 0.1, -0.6, 0.5});
  g.attrs.entity = {0, 0};
  g.h0 = Tensor({1, 3}, {0.5, -0.2, 0.9});

  ad::Tape tape;
  auto h = attr_entity_encode(tape, model, g, tape.constant(g.h0));
  const Tensor& out = tape.value(h);
  const double av1[4] = {0.3, -0.4, 0.8, 0.1};
  const double av2[4] = {0.3, -0.4, -0.6, 0.5};
  for (std::size_t c = 0; c < 3; ++c) {
    double pre = 0;
    for (std::size_t k = 0; k < 4; ++k)
      pre += (0.5 * av1[k] + 0.5 * av2[k]) * model.attr_W[0].value.at(k, c);
    CHECK(out.at(0, c) == doctest::Approx(elu(pre)).epsilon(1e-12));
  }
}

TEST_CASE("entity without attributes falls back to the zero vector") {
  const DimensionsConfig dims = small_dims(3, 2, 3, 2);
  ChannelModel model = make_channel_model(ChannelKind::Literal, dims, {}, 2, 2, 11);
  GraphTensors g;
  g.n_entities = 2;
  g.attrs.predicate = Tensor({1, 2}, {0.3, -0.4});
  g.attrs.value = Tensor({1, 2}, {0.8, 0.1});
  g.attrs.entity = {0};  // entity 1 has none
  g.h0 = random_rows(2, 3, 1);

  ad::Tape tape;
  auto h = attr_entity_encode(tape, model, g, tape.constant(g.h0));
  for (std::size_t c = 0; c < 3; ++c) CHECK(tape.value(h).at(1, c) == 0.0);
}

TEST_CASE("relation with a single triple reduces to ReLU(x_head @ W_head)") {
  const DimensionsConfig dims = small_dims(3, 2, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 2, 2, 12);
  model.W_tail.value.fill(0.0);  // isolate the head view
  GraphTensors g;
  g.n_entities = 2;
  g.n_relations = 1;
  g.trip_head = {0};
  g.trip_rel = {0};
  g.trip_tail = {1};
  const Tensor x = random_rows(2, 3, 2);

  ad::Tape tape;
  auto r = relation_from_entities(tape, model, g, tape.constant(x));
  const Tensor& out = tape.value(r);
  for (std::size_t c = 0; c < 4; ++c) {
    double pre = 0;
    for (std::size_t k = 0; k < 3; ++k) pre += x.at(0, k) * model.W_head.value.at(k, c);
    CHECK(out.at(0, c) == doctest::Approx(std::max(0.0, pre)).epsilon(1e-12));
  }
}

TEST_CASE("two incidences with identical head features split attention evenly") {
  // (A, r, C) and (B, r, C) with x_A == x_B score identically, so each gets
  // weight 0.5 and the relation embedding equals the single-triple case.
  const DimensionsConfig dims = small_dims(3, 2, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 3, 3, 33);
  Tensor x = random_rows(3, 3, 8);
  for (std::size_t c = 0; c < 3; ++c) x.at(1, c) = x.at(0, c);  // x_B = x_A

  GraphTensors two;
  two.n_entities = 3;
  two.n_relations = 1;
  two.trip_head = {0, 1};
  two.trip_rel = {0, 0};
  two.trip_tail = {2, 2};
  GraphTensors one = two;
  one.trip_head = {0};
  one.trip_rel = {0};
  one.trip_tail = {2};

  ad::Tape t2, t1;
  const Tensor& r_two = t2.value(relation_from_entities(t2, model, two, t2.constant(x)));
  const Tensor& r_one = t1.value(relation_from_entities(t1, model, one, t1.constant(x)));
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(r_two.at(0, c) == doctest::Approx(r_one.at(0, c)).epsilon(1e-12));
}

TEST_CASE("all-zero entity embeddings give all-zero relation embeddings") {
  const DimensionsConfig dims = small_dims(3, 2, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 3, 3, 13);
  GraphTensors g;
  g.n_entities = 3;
  g.n_relations = 2;
  g.trip_head = {0, 1, 2};
  g.trip_rel = {0, 0, 1};
  g.trip_tail = {1, 2, 0};

  ad::Tape tape;
  auto r = relation_from_entities(tape, model, g, tape.constant(Tensor::zeros({3, 3})));
  for (double v : tape.value(r).data) CHECK(v == 0.0);
}

TEST_CASE("relation without triples stays the zero vector") {
  const DimensionsConfig dims = small_dims(3, 2, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 2, 2, 14);
  GraphTensors g;
  g.n_entities = 2;
  g.n_relations = 2;  // relation 1 has no incidences
  g.trip_head = {0};
  g.trip_rel = {0};
  g.trip_tail = {1};
  ad::Tape tape;
  auto r = relation_from_entities(tape, model, g, tape.constant(random_rows(2, 3, 3)));
  for (std::size_t c = 0; c < 4; ++c) CHECK(tape.value(r).at(1, c) == 0.0);
}

TEST_CASE("stage dimensions chain: d_e -> d_e + 2 d_r -> double") {
  const DimensionsConfig dims = small_dims(5, 3, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 4, 4, 15);
  CHECK(model.rel_stage_dim() == 5 + 2 * 4);
  CHECK(model.output_dim() == 2 * (5 + 2 * 4));

  GraphTensors g;
  g.n_entities = 4;
  g.n_relations = 2;
  g.trip_head = {0, 1, 2};
  g.trip_rel = {0, 1, 0};
  g.trip_tail = {1, 2, 3};
  for (std::size_t i = 0; i < g.trip_head.size(); ++i) {
    g.enh_center.push_back(g.trip_head[i]);
    g.enh_neighbor.push_back(g.trip_tail[i]);
    g.enh_center.push_back(g.trip_tail[i]);
    g.enh_neighbor.push_back(g.trip_head[i]);
  }
  ad::Tape tape;
  const ChannelForward fwd = channel_forward(tape, model, g, GraphSide::Source);
  CHECK(tape.value(fwd.x).cols() == 5);
  CHECK(tape.value(fwd.x_rel).cols() == 13);
  CHECK(tape.value(fwd.x_out).cols() == 26);
}

TEST_CASE("entity with no outgoing triples gets a zero out-view block") {
  const DimensionsConfig dims = small_dims(3, 2, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 2, 2, 16);
  GraphTensors g;
  g.n_entities = 2;
  g.n_relations = 1;
  g.trip_head = {0};
  g.trip_rel = {0};
  g.trip_tail = {1};
  ad::Tape tape;
  auto x = tape.constant(random_rows(2, 3, 4));
  auto r = relation_from_entities(tape, model, g, x);
  auto x_rel = entity_from_relations(tape, model, g, x, r);
  // Entity 1 has no outgoing triples: columns [3, 7) are its out-view.
  for (std::size_t c = 3; c < 7; ++c) CHECK(tape.value(x_rel).at(1, c) == 0.0);
  // Entity 0 has exactly one outgoing incidence: attention weight 1, so its
  // out-view is ReLU of the relation embedding itself.
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(tape.value(x_rel).at(0, 3 + c) ==
          doctest::Approx(std::max(0.0, tape.value(r).at(0, c))).epsilon(1e-12));
}

TEST_CASE("isolated entity is padded with a zero enhancement block") {
  const DimensionsConfig dims = small_dims(3, 2, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 3, 3, 17);
  GraphTensors g;
  g.n_entities = 3;  // entity 2 isolated
  g.n_relations = 1;
  g.trip_head = {0};
  g.trip_rel = {0};
  g.trip_tail = {1};
  g.enh_center = {0, 1};
  g.enh_neighbor = {1, 0};
  ad::Tape tape;
  const ChannelForward fwd = channel_forward(tape, model, g, GraphSide::Source);
  const Tensor& x_out = tape.value(fwd.x_out);
  const std::size_t half = model.rel_stage_dim();
  for (std::size_t c = half; c < 2 * half; ++c) CHECK(x_out.at(2, c) == 0.0);
  const Tensor& x_rel = tape.value(fwd.x_rel);
  for (std::size_t c = 0; c < half; ++c) CHECK(x_out.at(2, c) == x_rel.at(2, c));
}

TEST_CASE("structure channel runs without attribute triples") {
  const DimensionsConfig dims = small_dims(4, 3, 4);
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, {}, 3, 3, 18);
  GraphTensors g;
  g.n_entities = 3;
  g.n_relations = 1;
  g.trip_head = {0, 1};
  g.trip_rel = {0, 0};
  g.trip_tail = {1, 2};
  g.enh_center = {0, 1, 1, 2};
  g.enh_neighbor = {1, 0, 2, 1};
  const Tensor emb = evaluate_embeddings(model, g, GraphSide::Source);
  CHECK(emb.rows() == 3);
  CHECK(emb.cols() == model.output_dim());
  for (std::size_t r = 0; r < 3; ++r) {
    double sq = 0;
    for (std::size_t c = 0; c < emb.cols(); ++c) sq += emb.at(r, c) * emb.at(r, c);
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("disabling the relation block leaves the attribute-stage output") {
  const DimensionsConfig dims = small_dims(4, 3, 4);
  ModelOptions options;
  options.use_rgat = false;
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, options, 3, 3, 19);
  CHECK(model.output_dim() == 4);
  CHECK(model.parameters().size() == 2);  // only the two h0 blocks
  GraphTensors g;
  g.n_entities = 3;
  const Tensor emb = evaluate_embeddings(model, g, GraphSide::Source);
  CHECK(emb.cols() == 4);
}

TEST_CASE("concat relation combination doubles the relation dimension") {
  const DimensionsConfig dims = small_dims(4, 3, 4);
  ModelOptions options;
  options.rel_combine = RelCombine::Concat;
  ChannelModel model = make_channel_model(ChannelKind::Structure, dims, options, 2, 2, 20);
  CHECK(model.relation_dim() == 8);
  CHECK(model.rel_stage_dim() == 4 + 16);
  GraphTensors g;
  g.n_entities = 2;
  g.n_relations = 1;
  g.trip_head = {0};
  g.trip_rel = {0};
  g.trip_tail = {1};
  g.enh_center = {0, 1};
  g.enh_neighbor = {1, 0};
  const Tensor emb = evaluate_embeddings(model, g, GraphSide::Source);
  CHECK(emb.cols() == 2 * (4 + 16));
}

TEST_CASE("forward is permutation-equivariant, bitwise") {
  // Relabel entities by a permutation, keep every incidence list in its
  // original order, and forward with shared weights: outputs must be the
  // row-permuted originals exactly.
  const DimensionsConfig dims = small_dims(4, 4, 4);
  ChannelModel model = make_channel_model(ChannelKind::Literal, dims, {}, 5, 5, 21);

  GraphTensors g;
  g.n_entities = 5;
  g.n_relations = 2;
  g.trip_head = {0, 1, 2, 3, 0};
  g.trip_rel = {0, 1, 0, 1, 1};
  g.trip_tail = {1, 2, 3, 4, 2};
  for (std::size_t i = 0; i < g.trip_head.size(); ++i) {
    g.enh_center.push_back(g.trip_head[i]);
    g.enh_neighbor.push_back(g.trip_tail[i]);
    g.enh_center.push_back(g.trip_tail[i]);
    g.enh_neighbor.push_back(g.trip_head[i]);
  }
  g.attrs.predicate = random_rows(6, 4, 5);
  g.attrs.value = random_rows(6, 4, 6);
  g.attrs.entity = {0, 0, 1, 2, 3, 4};
  g.h0 = random_rows(5, 4, 7);

  const std::vector<std::int32_t> perm = {2, 0, 4, 1, 3};
  GraphTensors p = g;
  for (auto* v : {&p.trip_head, &p.trip_tail, &p.enh_center, &p.enh_neighbor, &p.attrs.entity})
    for (std::int32_t& id : *v) id = perm[id];
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) p.h0.at(perm[i], c) = g.h0.at(i, c);

  const Tensor out = evaluate_embeddings(model, g, GraphSide::Source);
  const Tensor out_p = evaluate_embeddings(model, p, GraphSide::Source);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < out.cols(); ++c) CHECK(out.at(i, c) == out_p.at(perm[i], c));
}

TEST_CASE("checkpoint round-trips every parameter exactly") {
  const DimensionsConfig dims = small_dims(4, 3, 4);
  ChannelModel model = make_channel_model(ChannelKind::Literal, dims, {}, 3, 3, 22);
  const std::string path =
      (std::filesystem::temp_directory_path() / "raea-ckpt-test.txt").string();
  save_checkpoint(path, model);
  ChannelModel loaded = make_channel_model(ChannelKind::Literal, dims, {}, 3, 3, 999);
  load_checkpoint(path, loaded);
  auto a = model.parameters();
  auto b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.data == b[i]->value.data);
  std::filesystem::remove(path);
}

TEST_CASE("full channel forward plus margin loss passes the gradient check") {
  // Noise keeps the twin graphs from being bit-identical: a zero-noise pair
  // parks every positive-pair L1 term exactly on the |x| kink, where central
  // differences are undefined (kinks are excluded from gradient checks).
  SynthConfig scfg;
  scfg.n_entities = 10;
  scfg.n_relations = 3;
  scfg.rel_density = 2.0;
  scfg.attr_per_entity = 2;
  scfg.attr_noise = 0.3;
  scfg.rel_noise = 0.2;
  scfg.rng_seed = 1;
  const GeneratedPair pair = generate_aligned_pair(scfg);

  const Embedder embedder{nullptr, {6, 2, 3, 0}};
  const auto preds_src = resolve_name_predicates(pair.source, {kSynthNamePredicate});
  const auto preds_tgt = resolve_name_predicates(pair.target, {kSynthNamePredicate});
  const ChannelPartition parts_src = partition_channels(pair.source, preds_src);
  const ChannelPartition parts_tgt = partition_channels(pair.target, preds_tgt);

  const DimensionsConfig dims = small_dims(6, 6, 6);
  ChannelModel model = make_channel_model(ChannelKind::Literal, dims, {}, 10, 10, 23);

  GraphTensors g_src = build_graph_tensors(parts_src.literal, embedder,
                                           embed_entity_names(pair.source, preds_src, embedder));
  GraphTensors g_tgt = build_graph_tensors(parts_tgt.literal, embedder,
                                           embed_entity_names(pair.target, preds_tgt, embedder));

  std::vector<SeedPair> train(pair.gold.pairs.begin(), pair.gold.pairs.begin() + 5);
  TrainConfig tcfg;
  tcfg.n_neg = 2;
  tcfg.margin = 0.5;
  NegativeSampleSet negs;
  {
    const Tensor es = evaluate_embeddings(model, g_src, GraphSide::Source);
    const Tensor et = evaluate_embeddings(model, g_tgt, GraphSide::Target);
    negs = sample_negatives(es, et, train, tcfg, 1);
  }

  auto loss_fn = [&](bool with_grad) {
    ad::Tape tape;
    const ChannelForward fs = channel_forward(tape, model, g_src, GraphSide::Source);
    const ChannelForward ft = channel_forward(tape, model, g_tgt, GraphSide::Target);
    auto loss = margin_loss(tape, fs.normalized, ft.normalized, train, negs, tcfg);
    if (with_grad) tape.backward(loss);
    return tape.value(loss).data[0];
  };

  const auto params = model.parameters();
  const auto report = ad::gradient_check(
      params, [&] { loss_fn(true); }, [&] { return loss_fn(false); }, 1e-5);
  INFO("worst: " << report.worst_param << "[" << report.worst_index
                 << "] analytic=" << report.worst_analytic
                 << " numeric=" << report.worst_numeric);
  CHECK(report.max_rel_error < 1e-4);
}
