#pragma once

// The per-channel alignment network: an attribute-aware entity encoder
// (attention over each entity's attribute triples), relation-aware graph
// attention (entities -> relation embeddings -> relation-aware entities),
// and a final neighborhood attention layer that injects two-hop relation
// information. Output rows are L2-normalized for similarity computation.
//
// One ChannelModel embeds both graphs of an alignment task with shared
// weights; only the structure channel carries trainable per-entity vectors
// (one block per graph).

#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "raea/autodiff.hpp"
#include "raea/kg.hpp"
#include "raea/text_embed.hpp"

namespace raea {

// Slope used by every attention LeakyReLU.
inline constexpr double kAttentionLeakySlope = 0.2;

struct DimensionsConfig {
  std::size_t d_entity = 64;
  std::size_t d_attr = 64;
  std::size_t d_value = 64;
  std::vector<std::size_t> d_hidden = {64, 64};  // last entry must equal d_entity
  std::size_t d_relation = 64;

  std::size_t attr_layers() const { return d_hidden.size(); }

  void validate() const {
    contract(d_entity > 0 && d_attr > 0 && d_value > 0 && d_relation > 0,
             "all dimensions must be positive");
    contract(!d_hidden.empty(), "at least one attribute encoder layer");
    for (std::size_t d : d_hidden) contract(d > 0, "hidden dimensions must be positive");
    contract(d_hidden.back() == d_entity, "final attribute layer must output d_entity");
  }
};

// How the head-view and tail-view relation embeddings are combined.
enum class RelCombine : std::uint8_t { Sum, Concat };

struct ModelOptions {
  RelCombine rel_combine = RelCombine::Sum;
  bool use_rgat = true;  // false: stop after the attribute stage
};

struct ChannelModel {
  ChannelKind kind = ChannelKind::Literal;
  DimensionsConfig dims;
  ModelOptions options;

  // Attribute encoder (absent for the structure channel): per layer, the
  // message weight W_i [D_a+D_v x D_h_i] and attention vector u_i sized to
  // that layer's input [D_in+D_a x 1].
  std::vector<ad::Parameter> attr_W;
  std::vector<ad::Parameter> attr_u;

  // Relation-aware attention block (absent when use_rgat is false).
  ad::Parameter W_head;  // [D_e x D_r]
  ad::Parameter W_tail;  // [D_e x D_r]
  ad::Parameter a_rel;   // [2 D_r x 1]
  ad::Parameter a_ent;   // [D_e + dim(r) x 1]
  ad::Parameter a_enh;   // [2 dim(x_rel) x 1]

  // Structure channel only: trainable initial entity vectors per graph.
  ad::Parameter h0_source;  // [n_src x D_e]
  ad::Parameter h0_target;  // [n_tgt x D_e]

  std::size_t relation_dim() const {
    return options.rel_combine == RelCombine::Sum ? dims.d_relation : 2 * dims.d_relation;
  }
  std::size_t rel_stage_dim() const { return dims.d_entity + 2 * relation_dim(); }
  std::size_t output_dim() const {
    return options.use_rgat ? 2 * rel_stage_dim() : dims.d_entity;
  }

  bool has_attr_encoder() const { return kind != ChannelKind::Structure; }

  // Exact parameter inventory of the enabled sub-blocks, fixed order.
  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& p : attr_W) out.push_back(&p);
    for (auto& p : attr_u) out.push_back(&p);
    if (options.use_rgat) {
      out.push_back(&W_head);
      out.push_back(&W_tail);
      out.push_back(&a_rel);
      out.push_back(&a_ent);
      out.push_back(&a_enh);
    }
    if (kind == ChannelKind::Structure) {
      out.push_back(&h0_source);
      out.push_back(&h0_target);
    }
    return out;
  }
};

namespace detail {

inline Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data) v = dist(rng);
  return t;
}

inline Tensor glorot_tensor(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  return uniform_tensor({in, out}, bound, rng);
}

}  // namespace detail

inline ChannelModel make_channel_model(ChannelKind kind, const DimensionsConfig& dims,
                                       const ModelOptions& options, std::size_t n_source,
                                       std::size_t n_target, std::uint64_t rng_seed) {
  dims.validate();
  ChannelModel m;
  m.kind = kind;
  m.dims = dims;
  m.options = options;
  std::mt19937_64 rng(rng_seed);

  if (m.has_attr_encoder()) {
    std::size_t d_in = dims.d_entity;
    for (std::size_t layer = 0; layer < dims.attr_layers(); ++layer) {
      const std::size_t d_out = dims.d_hidden[layer];
      m.attr_W.emplace_back(str_printf("attr.W%zu", layer + 1),
                            detail::glorot_tensor(dims.d_attr + dims.d_value, d_out, rng));
      m.attr_u.emplace_back(str_printf("attr.u%zu", layer + 1),
                            detail::glorot_tensor(d_in + dims.d_attr, 1, rng));
      d_in = d_out;
    }
  }
  if (options.use_rgat) {
    m.W_head = ad::Parameter("rel.W_head", detail::glorot_tensor(dims.d_entity, dims.d_relation, rng));
    m.W_tail = ad::Parameter("rel.W_tail", detail::glorot_tensor(dims.d_entity, dims.d_relation, rng));
    m.a_rel = ad::Parameter("rel.a_rel", detail::glorot_tensor(2 * dims.d_relation, 1, rng));
    m.a_ent =
        ad::Parameter("rel.a_ent", detail::glorot_tensor(dims.d_entity + m.relation_dim(), 1, rng));
    m.a_enh = ad::Parameter("rel.a_enh", detail::glorot_tensor(2 * m.rel_stage_dim(), 1, rng));
  }
  if (kind == ChannelKind::Structure) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims.d_entity));
    m.h0_source =
        ad::Parameter("h0.source", detail::uniform_tensor({n_source, dims.d_entity}, bound, rng));
    m.h0_target =
        ad::Parameter("h0.target", detail::uniform_tensor({n_target, dims.d_entity}, bound, rng));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Per-graph constant inputs for one channel forward pass.

struct GraphTensors {
  std::int32_t n_entities = 0;
  std::int32_t n_relations = 0;
  std::vector<std::int32_t> trip_head, trip_rel, trip_tail;  // shared relation triples
  std::vector<std::int32_t> enh_center, enh_neighbor;        // flattened undirected N_i pairs
  AttrFeatures attrs;  // empty for the structure channel
  Tensor h0;           // [n x D_e]; ignored by the structure channel
};

// Gathers triple arrays, neighbor pairs (from the incidence index, list
// order preserved) and attribute features for one channel of one graph.
inline GraphTensors build_graph_tensors(const ChannelGraph& channel, const Embedder& embedder,
                                        Tensor h0) {
  const KnowledgeGraph& g = *channel.graph;
  GraphTensors t;
  t.n_entities = static_cast<std::int32_t>(g.entities.size());
  t.n_relations = static_cast<std::int32_t>(g.relations.size());
  t.trip_head.reserve(g.rel_triples.size());
  for (const RelationTriple& rt : g.rel_triples) {
    t.trip_head.push_back(rt.head);
    t.trip_rel.push_back(rt.relation);
    t.trip_tail.push_back(rt.tail);
  }
  contract(g.incidence.neighbors.size() == g.entities.size(),
           "incidence index not built for this graph");
  for (std::int32_t i = 0; i < t.n_entities; ++i)
    for (std::int32_t j : g.incidence.neighbors[i]) {
      t.enh_center.push_back(i);
      t.enh_neighbor.push_back(j);
    }
  if (channel.kind != ChannelKind::Structure) t.attrs = embed_attributes(channel, embedder);
  t.h0 = std::move(h0);
  return t;
}

// ---------------------------------------------------------------------------
// Forward stages. Each returns tape node ids; shapes are asserted as the
// stages chain together.

// Attention over each entity's attribute triples, repeated for every encoder
// layer. Entities without attribute triples in this channel come out as zero
// rows (the empty aggregation falls back to the zero vector).
inline ad::Tape::Id attr_entity_encode(ad::Tape& tape, ChannelModel& model, const GraphTensors& g,
                                       ad::Tape::Id h0) {
  contract(model.has_attr_encoder(), "structure channel has no attribute encoder");
  const auto& feats = g.attrs;
  contract(feats.predicate.cols() == model.dims.d_attr && feats.value.cols() == model.dims.d_value,
           "attribute feature dims disagree with model dims");
  ad::Tape::Id a = tape.constant(feats.predicate);
  ad::Tape::Id v = tape.constant(feats.value);
  ad::Tape::Id av = tape.concat_cols({a, v});  // [m x D_a+D_v]
  ad::Tape::Id h = h0;
  for (std::size_t layer = 0; layer < model.dims.attr_layers(); ++layer) {
    ad::Tape::Id h_per_triple = tape.gather_rows(h, feats.entity);     // [m x D_in]
    ad::Tape::Id score_in = tape.concat_cols({h_per_triple, a});       // [m x D_in+D_a]
    ad::Tape::Id logits = tape.flatten(
        tape.leaky_relu(tape.matmul(score_in, tape.param(model.attr_u[layer])),
                        kAttentionLeakySlope));                        // [m]
    ad::Tape::Id alpha = tape.segment_softmax(logits, feats.entity, g.n_entities);
    ad::Tape::Id msg = tape.matmul(av, tape.param(model.attr_W[layer]));  // [m x D_h]
    h = tape.elu(tape.weighted_segment_sum(alpha, msg, feats.entity, g.n_entities));
  }
  return h;  // [n x D_e]
}

// Entity -> relation: attention over each relation's (head, tail) incidences
// gives a head-view and a tail-view embedding, combined by sum (or concat).
inline ad::Tape::Id relation_from_entities(ad::Tape& tape, ChannelModel& model,
                                           const GraphTensors& g, ad::Tape::Id x) {
  ad::Tape::Id xh = tape.matmul(x, tape.param(model.W_head));  // [n x D_r]
  ad::Tape::Id xt = tape.matmul(x, tape.param(model.W_tail));
  ad::Tape::Id hh = tape.gather_rows(xh, g.trip_head);  // [T x D_r]
  ad::Tape::Id tt = tape.gather_rows(xt, g.trip_tail);
  ad::Tape::Id logits = tape.flatten(tape.leaky_relu(
      tape.matmul(tape.concat_cols({hh, tt}), tape.param(model.a_rel)), kAttentionLeakySlope));
  ad::Tape::Id alpha = tape.segment_softmax(logits, g.trip_rel, g.n_relations);
  ad::Tape::Id r_head = tape.relu(tape.weighted_segment_sum(alpha, hh, g.trip_rel, g.n_relations));
  ad::Tape::Id r_tail = tape.relu(tape.weighted_segment_sum(alpha, tt, g.trip_rel, g.n_relations));
  if (model.options.rel_combine == RelCombine::Sum) return tape.add(r_head, r_tail);
  return tape.concat_cols({r_head, r_tail});
}

// Relation -> entity: for each entity, attention over its outgoing
// (tail, relation) incidences aggregates relation embeddings into an
// out-view, symmetrically over incoming ones into an in-view, concatenated
// with the entity's own vector. Entities without triples on a side get a
// zero block there.
inline ad::Tape::Id entity_from_relations(ad::Tape& tape, ChannelModel& model,
                                          const GraphTensors& g, ad::Tape::Id x, ad::Tape::Id r) {
  auto side = [&](const std::vector<std::int32_t>& center) {
    ad::Tape::Id xc = tape.gather_rows(x, center);       // [T x D_e]
    ad::Tape::Id rr = tape.gather_rows(r, g.trip_rel);   // [T x dim(r)]
    ad::Tape::Id logits = tape.flatten(tape.leaky_relu(
        tape.matmul(tape.concat_cols({xc, rr}), tape.param(model.a_ent)), kAttentionLeakySlope));
    ad::Tape::Id alpha = tape.segment_softmax(logits, center, g.n_entities);
    return tape.relu(tape.weighted_segment_sum(alpha, rr, center, g.n_entities));
  };
  ad::Tape::Id out_view = side(g.trip_head);
  ad::Tape::Id in_view = side(g.trip_tail);
  ad::Tape::Id x_rel = tape.concat_cols({x, out_view, in_view});
  contract(tape.value(x_rel).cols() == model.rel_stage_dim(), "x_rel stage dimension mismatch");
  return x_rel;
}

// One ordinary graph-attention layer over the undirected neighborhood,
// concatenated onto x_rel. Isolated entities contribute a zero block.
inline ad::Tape::Id entity_enhance(ad::Tape& tape, ChannelModel& model, const GraphTensors& g,
                                   ad::Tape::Id x_rel) {
  ad::Tape::Id xc = tape.gather_rows(x_rel, g.enh_center);
  ad::Tape::Id xn = tape.gather_rows(x_rel, g.enh_neighbor);
  ad::Tape::Id logits = tape.flatten(tape.leaky_relu(
      tape.matmul(tape.concat_cols({xc, xn}), tape.param(model.a_enh)), kAttentionLeakySlope));
  ad::Tape::Id alpha = tape.segment_softmax(logits, g.enh_center, g.n_entities);
  ad::Tape::Id agg = tape.relu(tape.weighted_segment_sum(alpha, xn, g.enh_center, g.n_entities));
  ad::Tape::Id x_out = tape.concat_cols({x_rel, agg});
  contract(tape.value(x_out).cols() == model.output_dim(), "x_out stage dimension mismatch");
  return x_out;
}

enum class GraphSide : std::uint8_t { Source, Target };

struct ChannelForward {
  ad::Tape::Id x = -1;          // after the attribute stage (or h0 for structure)
  ad::Tape::Id x_rel = -1;      // -1 when the relation block is disabled
  ad::Tape::Id x_out = -1;      // -1 when the relation block is disabled
  ad::Tape::Id normalized = -1; // final L2-normalized embedding rows
};

// Full forward pass of one channel over one graph.
inline ChannelForward channel_forward(ad::Tape& tape, ChannelModel& model, const GraphTensors& g,
                                      GraphSide side) {
  ChannelForward fwd;
  if (model.kind == ChannelKind::Structure) {
    fwd.x = tape.param(side == GraphSide::Source ? model.h0_source : model.h0_target);
  } else {
    contract(g.h0.rank() == 2 && g.h0.cols() == model.dims.d_entity &&
                 g.h0.rows() == static_cast<std::size_t>(g.n_entities),
             "h0 must be [n x d_entity], got " + shape_string(g.h0));
    fwd.x = attr_entity_encode(tape, model, g, tape.constant(g.h0));
  }
  contract(tape.value(fwd.x).cols() == model.dims.d_entity, "attribute stage dimension mismatch");
  if (model.options.use_rgat) {
    ad::Tape::Id r = relation_from_entities(tape, model, g, fwd.x);
    fwd.x_rel = entity_from_relations(tape, model, g, fwd.x, r);
    fwd.x_out = entity_enhance(tape, model, g, fwd.x_rel);
  } else {
    fwd.x_out = fwd.x;
  }
  fwd.normalized = tape.l2_normalize_rows(fwd.x_out);
  return fwd;
}

// Plain forward evaluation without gradient bookkeeping; returns the
// normalized embedding matrix.
inline Tensor evaluate_embeddings(ChannelModel& model, const GraphTensors& g, GraphSide side) {
  ad::Tape tape;
  return tape.value(channel_forward(tape, model, g, side).normalized);
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text file with dims, options and every named
// parameter tensor (shape + row-major values at full precision).

inline void save_checkpoint(const std::string& path, ChannelModel& model) {
  std::string out = "raea-checkpoint v1\n";
  out += str_printf("channel %s\n", channel_name(model.kind));
  out += str_printf("dims d_entity=%zu d_attr=%zu d_value=%zu d_relation=%zu d_hidden=",
                    model.dims.d_entity, model.dims.d_attr, model.dims.d_value,
                    model.dims.d_relation);
  for (std::size_t i = 0; i < model.dims.d_hidden.size(); ++i)
    out += str_printf(i ? ",%zu" : "%zu", model.dims.d_hidden[i]);
  out += str_printf("\noptions rel_combine=%s use_rgat=%d\n",
                    model.options.rel_combine == RelCombine::Sum ? "sum" : "concat",
                    model.options.use_rgat ? 1 : 0);
  for (ad::Parameter* p : model.parameters()) {
    out += str_printf("param %s", p->name.c_str());
    for (std::size_t d : p->value.shape) out += str_printf(" %zu", d);
    out += "\n";
    for (std::size_t i = 0; i < p->value.size(); ++i)
      out += str_printf(i ? " %.17g" : "%.17g", p->value.data[i]);
    out += "\n";
  }
  out += "end\n";
  write_text_file(path, out);
}

// Loads a checkpoint into a model created with the same construction inputs;
// names and shapes must match the model's parameter inventory exactly.
inline void load_checkpoint(const std::string& path, ChannelModel& model) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "raea-checkpoint v1")
    throw ParseError(path + ":1: not a raea-checkpoint v1 file");
  std::map<std::string, ad::Parameter*> by_name;
  for (ad::Parameter* p : model.parameters()) by_name[p->name] = p;
  std::size_t loaded = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ' ');
    if (fields.empty() || fields[0] != "param") continue;
    if (fields.size() < 2) throw ParseError(str_printf("%s:%zu: bad param line", path.c_str(), i + 1));
    auto it = by_name.find(fields[1]);
    if (it == by_name.end())
      throw ParseError(str_printf("%s:%zu: unknown parameter '%s'", path.c_str(), i + 1,
                                  fields[1].c_str()));
    std::vector<std::size_t> shape;
    for (std::size_t f = 2; f < fields.size(); ++f)
      shape.push_back(static_cast<std::size_t>(std::stoull(fields[f])));
    if (shape != it->second->value.shape)
      throw ParseError(str_printf("%s:%zu: shape mismatch for '%s'", path.c_str(), i + 1,
                                  fields[1].c_str()));
    if (i + 1 >= lines.size())
      throw ParseError(str_printf("%s:%zu: missing values for '%s'", path.c_str(), i + 1,
                                  fields[1].c_str()));
    const auto values = split(lines[i + 1], ' ');
    if (values.size() != it->second->value.size())
      throw ParseError(str_printf("%s:%zu: expected %zu values, got %zu", path.c_str(), i + 2,
                                  it->second->value.size(), values.size()));
    for (std::size_t k = 0; k < values.size(); ++k)
      it->second->value.data[k] = std::stod(values[k]);
    ++loaded;
    ++i;
  }
  if (loaded != by_name.size())
    throw ParseError(path + ": checkpoint does not cover every model parameter");
}

}  // namespace raea
