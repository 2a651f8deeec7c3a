#pragma once

// End-to-end orchestration behind the CLI: strict flat key=value config,
// graph loading and channel assembly, per-channel training with checkpoints
// and history logs, similarity/ensemble/top-K computation, metric reports
// and the ablation harness. Every stage is deterministic given the seeds in
// the config.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "raea/common.hpp"
#include "raea/kg.hpp"
#include "raea/metrics.hpp"
#include "raea/network.hpp"
#include "raea/rough_filter.hpp"
#include "raea/synth.hpp"
#include "raea/text_embed.hpp"
#include "raea/trainer.hpp"

namespace raea {

enum class EnsembleStrategy : std::uint8_t { PreWeighted, Average, Svm };

struct AblationFlags {
  bool no_attribute = false;  // drop literal + digital channels
  bool no_relation = false;   // drop the structure channel
  bool no_name = false;       // drop the name channel
  bool no_rgat = false;       // stop every channel after the attribute stage
  bool basic_embedder = false;  // replace the embedder with unigram hashing
};

struct PipelineConfig {
  // Inputs.
  std::string kg1_rel, kg1_attr, kg2_rel, kg2_attr, seed_pairs;
  std::string candidates_file;  // optional rough-filter output for align
  std::string vectors;          // optional precomputed embedding table

  // Splits.
  double train_frac = 0.3;
  double val_frac = 0.0;

  // Model.
  std::vector<std::string> name_predicates = {"name"};
  std::vector<ChannelKind> channels = {ChannelKind::Literal, ChannelKind::Digital,
                                       ChannelKind::Name, ChannelKind::Structure};
  EnsembleStrategy ensemble = EnsembleStrategy::PreWeighted;
  std::size_t dim = 64;
  std::size_t attr_layers = 2;
  RelCombine rel_combine = RelCombine::Sum;

  // Training.
  TrainConfig train;

  // Embedder.
  bool use_precomputed = false;
  int ngram_min = 2;
  int ngram_max = 4;
  std::uint64_t hash_seed = 0;

  // Evaluation / output.
  std::size_t top_k = 10;
  std::size_t ndcg_k = 10;
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t bootstrap_seed = 0;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  std::string out_dir = "out";

  std::vector<ChannelKind> enabled_channels() const {
    std::vector<ChannelKind> out;
    for (ChannelKind kind : channels) {
      if (ablation.no_attribute &&
          (kind == ChannelKind::Literal || kind == ChannelKind::Digital))
        continue;
      if (ablation.no_relation && kind == ChannelKind::Structure) continue;
      if (ablation.no_name && kind == ChannelKind::Name) continue;
      out.push_back(kind);
    }
    return out;
  }

  DimensionsConfig dims() const {
    DimensionsConfig d;
    d.d_entity = d.d_attr = d.d_value = d.d_relation = dim;
    d.d_hidden.assign(attr_layers, dim);
    return d;
  }

  ModelOptions model_options() const { return {rel_combine, !ablation.no_rgat}; }

  HashNGramConfig hash_config() const {
    HashNGramConfig h;
    h.dim = dim;
    if (ablation.basic_embedder) {
      h.ngram_min = 1;
      h.ngram_max = 1;
    } else {
      h.ngram_min = ngram_min;
      h.ngram_max = ngram_max;
    }
    h.hash_seed = hash_seed;
    return h;
  }
};

namespace detail {

inline const std::vector<std::string>& valid_config_keys() {
  static const std::vector<std::string> keys = {
      "kg1_rel",      "kg1_attr",       "kg2_rel",
      "kg2_attr",     "seed_pairs",     "candidates_file",
      "vectors",      "train_frac",     "val_frac",
      "name_predicates", "channels",    "ensemble",
      "dim",          "attr_layers",    "rel_combine",
      "margin",       "n_neg",          "resample_every",
      "max_epochs",   "patience",       "lr_grid",
      "l2_grid",      "distance",       "seed",
      "embedder",     "ngram_min",      "ngram_max",
      "hash_seed",    "top_k",          "ndcg_k",
      "bootstrap_resamples", "bootstrap_seed", "ablation",
      "out_dir"};
  return keys;
}

inline ChannelKind parse_channel(const std::string& name) {
  const std::string s = to_lower(trim(name));
  if (s == "literal") return ChannelKind::Literal;
  if (s == "digital") return ChannelKind::Digital;
  if (s == "name") return ChannelKind::Name;
  if (s == "structure") return ChannelKind::Structure;
  throw ConfigError("unknown channel '" + name + "' (literal, digital, name, structure)");
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a nonnegative integer: '" + value + "'");
  }
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& tok : split(value, ',')) {
    const std::string t = trim(tok);
    if (!t.empty()) out.push_back(parse_double(key, t));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

}  // namespace detail

// Flat `key = value` lines, '#' comments. Unknown keys are fatal and the
// error lists every valid key.
inline PipelineConfig parse_pipeline_config_text(const std::string& text,
                                                 const std::string& source_name) {
  PipelineConfig cfg;
  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(str_printf("%s:%zu: expected 'key = value'", source_name.c_str(), line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "kg1_rel") cfg.kg1_rel = value;
    else if (key == "kg1_attr") cfg.kg1_attr = value;
    else if (key == "kg2_rel") cfg.kg2_rel = value;
    else if (key == "kg2_attr") cfg.kg2_attr = value;
    else if (key == "seed_pairs") cfg.seed_pairs = value;
    else if (key == "candidates_file") cfg.candidates_file = value;
    else if (key == "vectors") cfg.vectors = value;
    else if (key == "train_frac") cfg.train_frac = detail::parse_double(key, value);
    else if (key == "val_frac") cfg.val_frac = detail::parse_double(key, value);
    else if (key == "name_predicates") {
      cfg.name_predicates.clear();
      for (const auto& p : split(value, ','))
        if (!trim(p).empty()) cfg.name_predicates.push_back(trim(p));
    } else if (key == "channels") {
      cfg.channels.clear();
      for (const auto& c : split(value, ','))
        if (!trim(c).empty()) cfg.channels.push_back(detail::parse_channel(c));
      if (cfg.channels.empty()) throw ConfigError("config key 'channels': empty list");
    } else if (key == "ensemble") {
      const std::string s = to_lower(value);
      if (s == "preweighted") cfg.ensemble = EnsembleStrategy::PreWeighted;
      else if (s == "average") cfg.ensemble = EnsembleStrategy::Average;
      else if (s == "svm") cfg.ensemble = EnsembleStrategy::Svm;
      else throw ConfigError("config key 'ensemble': expected preweighted, average or svm");
    } else if (key == "dim") cfg.dim = detail::parse_uint(key, value);
    else if (key == "attr_layers") cfg.attr_layers = detail::parse_uint(key, value);
    else if (key == "rel_combine") {
      const std::string s = to_lower(value);
      if (s == "sum") cfg.rel_combine = RelCombine::Sum;
      else if (s == "concat") cfg.rel_combine = RelCombine::Concat;
      else throw ConfigError("config key 'rel_combine': expected sum or concat");
    } else if (key == "margin") cfg.train.margin = detail::parse_double(key, value);
    else if (key == "n_neg") cfg.train.n_neg = detail::parse_uint(key, value);
    else if (key == "resample_every") cfg.train.resample_every = detail::parse_uint(key, value);
    else if (key == "max_epochs") cfg.train.max_epochs = detail::parse_uint(key, value);
    else if (key == "patience") cfg.train.patience = detail::parse_uint(key, value);
    else if (key == "lr_grid") cfg.train.lr_grid = detail::parse_double_list(key, value);
    else if (key == "l2_grid") cfg.train.l2_grid = detail::parse_double_list(key, value);
    else if (key == "distance") {
      const std::string s = to_lower(value);
      if (s == "l1") cfg.train.distance = Distance::L1;
      else if (s == "l2") cfg.train.distance = Distance::L2;
      else throw ConfigError("config key 'distance': expected l1 or l2");
    } else if (key == "seed") {
      cfg.seed = detail::parse_uint(key, value);
      cfg.train.rng_seed = cfg.seed;
    } else if (key == "embedder") {
      const std::string s = to_lower(value);
      if (s == "hash") cfg.use_precomputed = false;
      else if (s == "precomputed") cfg.use_precomputed = true;
      else throw ConfigError("config key 'embedder': expected hash or precomputed");
    } else if (key == "ngram_min") cfg.ngram_min = static_cast<int>(detail::parse_uint(key, value));
    else if (key == "ngram_max") cfg.ngram_max = static_cast<int>(detail::parse_uint(key, value));
    else if (key == "hash_seed") cfg.hash_seed = detail::parse_uint(key, value);
    else if (key == "top_k") cfg.top_k = detail::parse_uint(key, value);
    else if (key == "ndcg_k") cfg.ndcg_k = detail::parse_uint(key, value);
    else if (key == "bootstrap_resamples") cfg.bootstrap_resamples = detail::parse_uint(key, value);
    else if (key == "bootstrap_seed") cfg.bootstrap_seed = detail::parse_uint(key, value);
    else if (key == "ablation") {
      cfg.ablation = AblationFlags{};
      for (const auto& f : split(value, ',')) {
        const std::string s = to_lower(trim(f));
        if (s.empty() || s == "none") continue;
        else if (s == "no_attribute") cfg.ablation.no_attribute = true;
        else if (s == "no_relation") cfg.ablation.no_relation = true;
        else if (s == "no_name") cfg.ablation.no_name = true;
        else if (s == "no_rgat") cfg.ablation.no_rgat = true;
        else if (s == "basic_embedder") cfg.ablation.basic_embedder = true;
        else
          throw ConfigError("config key 'ablation': unknown flag '" + s +
                            "' (none, no_attribute, no_relation, no_name, no_rgat, "
                            "basic_embedder)");
      }
    } else if (key == "out_dir") cfg.out_dir = value;
    else {
      std::string keys;
      for (const auto& k : detail::valid_config_keys()) keys += (keys.empty() ? "" : ", ") + k;
      throw ConfigError(str_printf("%s:%zu: unknown config key '%s'; valid keys: %s",
                                   source_name.c_str(), line_no, key.c_str(), keys.c_str()));
    }
  }
  if (cfg.train.patience > cfg.train.max_epochs) cfg.train.patience = cfg.train.max_epochs;
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::string text;
  for (const auto& line : read_lines(path)) text += line + "\n";
  return parse_pipeline_config_text(text, path);
}

// ---------------------------------------------------------------------------
// Assembly: everything the train/align stages share, loaded once.

struct PipelineData {
  KnowledgeGraph kg_src, kg_tgt;
  ChannelPartition parts_src, parts_tgt;
  std::set<std::int32_t> name_preds_src, name_preds_tgt;
  SeedAlignment seeds;
  std::vector<SeedPair> train_pairs;    // training split minus the monitor holdout
  std::vector<SeedPair> monitor_pairs;  // validation pairs, or the 10% holdout
  std::vector<SeedPair> test_pairs;
  std::optional<EmbeddingTable> table;
  Embedder embedder;
  Tensor h0_src, h0_tgt;  // embedded entity names, zero rows when absent
};

inline PipelineData load_pipeline_data(const PipelineConfig& cfg) {
  if (cfg.kg1_rel.empty() || cfg.kg2_rel.empty() || cfg.seed_pairs.empty())
    throw ConfigError("config must set kg1_rel, kg2_rel and seed_pairs");
  const auto enabled = cfg.enabled_channels();
  if (enabled.empty()) throw ConfigError("no channels remain enabled after ablation flags");

  PipelineData data;
  load_relation_triples(cfg.kg1_rel, data.kg_src);
  load_relation_triples(cfg.kg2_rel, data.kg_tgt);
  if (!cfg.kg1_attr.empty()) load_attribute_triples(cfg.kg1_attr, data.kg_src);
  if (!cfg.kg2_attr.empty()) load_attribute_triples(cfg.kg2_attr, data.kg_tgt);
  data.kg_src.incidence = build_incidence(data.kg_src);
  data.kg_tgt.incidence = build_incidence(data.kg_tgt);

  data.name_preds_src = resolve_name_predicates(data.kg_src, cfg.name_predicates);
  data.name_preds_tgt = resolve_name_predicates(data.kg_tgt, cfg.name_predicates);
  data.parts_src = partition_channels(data.kg_src, data.name_preds_src);
  data.parts_tgt = partition_channels(data.kg_tgt, data.name_preds_tgt);

  data.seeds = load_seed_alignment(cfg.seed_pairs, data.kg_src, data.kg_tgt, cfg.train_frac,
                                   cfg.val_frac, cfg.seed);
  auto train = data.seeds.of(Split::Train);
  auto val = data.seeds.of(Split::Validation);
  data.test_pairs = data.seeds.of(Split::Test);
  if (!val.empty()) {
    data.train_pairs = std::move(train);
    data.monitor_pairs = std::move(val);
  } else if (train.size() >= 2) {
    // No validation split: hold out 10% of the training pairs (at least one)
    // for Hits@1 monitoring.
    const std::size_t n_mon =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * train.size())));
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x6d6f6e69746f72ull));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < train.size(); ++i)
      (i < n_mon ? data.monitor_pairs : data.train_pairs).push_back(train[order[i]]);
  } else {
    data.train_pairs = train;
    data.monitor_pairs = train;
  }

  if (cfg.use_precomputed) {
    if (cfg.vectors.empty()) throw ConfigError("embedder=precomputed requires 'vectors'");
    data.table = load_precomputed(cfg.vectors);
    if (data.table->duplicate_keys > 0)
      std::cerr << "warning: " << cfg.vectors << ": " << data.table->duplicate_keys
                << " duplicate keys, later entries won\n";
    if (data.table->dim != cfg.dim)
      throw ConfigError(str_printf("precomputed vectors have dim %zu but config dim is %zu",
                                   data.table->dim, cfg.dim));
  }
  data.embedder.table =
      (cfg.use_precomputed && !cfg.ablation.basic_embedder) ? &*data.table : nullptr;
  data.embedder.hash = cfg.hash_config();

  data.h0_src = embed_entity_names(data.kg_src, data.name_preds_src, data.embedder);
  data.h0_tgt = embed_entity_names(data.kg_tgt, data.name_preds_tgt, data.embedder);
  return data;
}

inline ChannelTask make_channel_task(const PipelineConfig& cfg, const PipelineData& data,
                                     ChannelKind kind) {
  ChannelTask task;
  const Tensor zero_src = Tensor::zeros({data.kg_src.entities.size(), cfg.dim});
  const Tensor zero_tgt = Tensor::zeros({data.kg_tgt.entities.size(), cfg.dim});
  const bool structure = kind == ChannelKind::Structure;
  task.source = build_graph_tensors(data.parts_src.of(kind), data.embedder,
                                    structure ? zero_src : data.h0_src);
  task.target = build_graph_tensors(data.parts_tgt.of(kind), data.embedder,
                                    structure ? zero_tgt : data.h0_tgt);
  task.train_pairs = data.train_pairs;
  task.val_pairs = data.monitor_pairs;
  return task;
}

inline ChannelModel make_pipeline_model(const PipelineConfig& cfg, const PipelineData& data,
                                        ChannelKind kind) {
  // Stable per-channel init seed regardless of which channels are enabled.
  const auto stream = static_cast<std::uint64_t>(kind) + 1;
  return make_channel_model(kind, cfg.dims(), cfg.model_options(), data.kg_src.entities.size(),
                            data.kg_tgt.entities.size(), mix_seed(cfg.seed, stream));
}

namespace detail {

inline void ensure_out_dir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

inline std::string channel_path(const PipelineConfig& cfg, const char* prefix, ChannelKind kind,
                                const char* ext) {
  return cfg.out_dir + "/" + prefix + "_" + channel_name(kind) + ext;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// build-kg: load, validate, partition and write the interned bundle.

inline void run_build_kg(const PipelineConfig& cfg) {
  PipelineData data = load_pipeline_data(cfg);
  detail::ensure_out_dir(cfg);
  auto dump = [&](const KnowledgeGraph& g, const ChannelPartition& parts, const std::string& tag) {
    std::string ents, rels, preds, rel_triples, attr_triples;
    for (std::size_t i = 0; i < g.entities.size(); ++i)
      ents += str_printf("%zu\t%s\n", i, g.entities.labels()[i].c_str());
    for (std::size_t i = 0; i < g.relations.size(); ++i)
      rels += str_printf("%zu\t%s\n", i, g.relations.labels()[i].c_str());
    for (std::size_t i = 0; i < g.predicates.size(); ++i)
      preds += str_printf("%zu\t%s\n", i, g.predicates.labels()[i].c_str());
    for (const RelationTriple& t : g.rel_triples)
      rel_triples += str_printf("%d\t%d\t%d\n", t.head, t.relation, t.tail);
    for (const AttributeTriple& t : g.attr_triples)
      attr_triples += str_printf("%d\t%d\t%s\n", t.entity, t.predicate, t.value.c_str());
    write_text_file(cfg.out_dir + "/" + tag + ".entities.tsv", ents);
    write_text_file(cfg.out_dir + "/" + tag + ".relations.tsv", rels);
    write_text_file(cfg.out_dir + "/" + tag + ".predicates.tsv", preds);
    write_text_file(cfg.out_dir + "/" + tag + ".rel_triples.tsv", rel_triples);
    write_text_file(cfg.out_dir + "/" + tag + ".attr_triples.tsv", attr_triples);
    return str_printf(
        "%s.entities: %zu\n%s.relations: %zu\n%s.predicates: %zu\n%s.rel_triples: %zu\n"
        "%s.attr_triples: %zu\n%s.dropped_blank_values: %zu\n%s.channel.literal: %zu\n"
        "%s.channel.digital: %zu\n%s.channel.name: %zu\n",
        tag.c_str(), g.entities.size(), tag.c_str(), g.relations.size(), tag.c_str(),
        g.predicates.size(), tag.c_str(), g.rel_triples.size(), tag.c_str(),
        g.attr_triples.size(), tag.c_str(), g.dropped_blank_values, tag.c_str(),
        parts.literal.attr_indices.size(), tag.c_str(), parts.digital.attr_indices.size(),
        tag.c_str(), parts.name.attr_indices.size());
  };
  std::string stats = dump(data.kg_src, data.parts_src, "kg1") + dump(data.kg_tgt, data.parts_tgt, "kg2");
  stats += str_printf("seeds: %zu\nseeds.train: %zu\nseeds.monitor: %zu\nseeds.test: %zu\n",
                      data.seeds.pairs.size(), data.train_pairs.size(), data.monitor_pairs.size(),
                      data.test_pairs.size());
  write_text_file(cfg.out_dir + "/build_stats.txt", stats);
}

// ---------------------------------------------------------------------------
// rough-filter.

inline CoverageStats run_rough_filter(const std::string& queries_path,
                                      const std::string& candidates_path,
                                      const std::string& rules_path, const std::string& out_path,
                                      const std::string& stats_path = "") {
  const auto queries = load_product_records(queries_path);
  const auto candidates = load_product_records(candidates_path);
  const auto rules = load_rules(rules_path);
  const CandidateSet cands = apply_rules(rules, queries, candidates);
  write_text_file(out_path, format_candidate_set(cands));
  const CoverageStats stats = coverage_stats(cands);
  if (!stats_path.empty()) {
    std::string out;
    out += str_printf("queries: %zu\n", stats.per_query.size());
    out += str_printf("empty_queries: %zu\n", stats.empty_queries);
    out += str_printf("distinct_candidates: %zu\n", stats.distinct_candidates);
    for (const auto& [q, n] : stats.per_query) out += str_printf("count.%s: %zu\n", q.c_str(), n);
    write_text_file(stats_path, out);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// train.

struct TrainedChannel {
  ChannelKind kind;
  ChannelModel model;
  GridSearchResult grid;
};

inline std::string format_history(const std::vector<EpochRecord>& history) {
  std::string out = "epoch\tloss\tval_hits1\tseconds\n";
  for (const EpochRecord& r : history)
    out += str_printf("%zu\t%.9g\t%.6f\t%.3f\n", r.epoch, r.loss, r.val_hits1, r.seconds);
  return out;
}

inline std::vector<TrainedChannel> run_train(const PipelineConfig& cfg, const PipelineData& data,
                                             bool write_outputs = true) {
  if (write_outputs) detail::ensure_out_dir(cfg);
  std::vector<TrainedChannel> out;
  for (ChannelKind kind : cfg.enabled_channels()) {
    TrainedChannel tc{kind, make_pipeline_model(cfg, data, kind), {}};
    const ChannelTask task = make_channel_task(cfg, data, kind);
    tc.grid = grid_search(tc.model, task, cfg.train);
    if (tc.grid.best_run.negatives_truncated)
      std::cerr << "warning: channel " << channel_name(kind)
                << ": fewer entities than requested negatives, samples truncated\n";
    if (write_outputs) {
      save_checkpoint(detail::channel_path(cfg, "checkpoint", kind, ".txt"), tc.model);
      write_text_file(detail::channel_path(cfg, "history", kind, ".tsv"),
                      format_history(tc.grid.best_run.history));
      std::string grid = "learning_rate\tl2\tval_hits1\tbest_epoch\n";
      for (const GridCell& cell : tc.grid.table)
        grid += str_printf("%g\t%g\t%.6f\t%zu\n", cell.learning_rate, cell.l2, cell.val_hits1,
                           cell.best_epoch);
      write_text_file(detail::channel_path(cfg, "grid", kind, ".tsv"), grid);
    }
    out.push_back(std::move(tc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// align + evaluate.

struct AlignResult {
  std::vector<SimilarityMatrix> channel_sims;
  SimilarityMatrix ensemble;
  ChannelWeights weights;  // only for the pre-weighted strategy
};

inline AlignResult compute_alignment(const PipelineConfig& cfg, const PipelineData& data,
                                     std::vector<TrainedChannel>& trained) {
  AlignResult result;
  std::vector<std::int32_t> row_ids(data.kg_src.entities.size());
  for (std::size_t i = 0; i < row_ids.size(); ++i) row_ids[i] = static_cast<std::int32_t>(i);
  std::vector<std::int32_t> col_ids(data.kg_tgt.entities.size());
  for (std::size_t j = 0; j < col_ids.size(); ++j) col_ids[j] = static_cast<std::int32_t>(j);

  for (TrainedChannel& tc : trained) {
    const ChannelTask task = make_channel_task(cfg, data, tc.kind);
    const Tensor emb_src = evaluate_embeddings(tc.model, task.source, GraphSide::Source);
    const Tensor emb_tgt = evaluate_embeddings(tc.model, task.target, GraphSide::Target);
    result.channel_sims.push_back(
        similarity_matrix(emb_src, emb_tgt, row_ids, col_ids, channel_name(tc.kind)));
  }

  switch (cfg.ensemble) {
    case EnsembleStrategy::Average:
      result.ensemble = ensemble_average(result.channel_sims);
      break;
    case EnsembleStrategy::PreWeighted: {
      auto [sim, w] = ensemble_preweighted(result.channel_sims, data.monitor_pairs);
      result.ensemble = std::move(sim);
      result.weights = std::move(w);
      break;
    }
    case EnsembleStrategy::Svm:
      result.ensemble = ensemble_classifier(result.channel_sims, data.train_pairs,
                                            {1, 2000, 0.05, 1e-4, mix_seed(cfg.seed, 0x73766dull)});
      break;
  }
  return result;
}

inline std::string format_similarity(const SimilarityMatrix& sim, const PipelineData& data) {
  std::string out = "raea-similarity v1\ncols";
  for (std::int32_t j : sim.col_ids) out += "\t" + data.kg_tgt.entities.label(j);
  out += "\n";
  for (std::size_t r = 0; r < sim.row_ids.size(); ++r) {
    out += data.kg_src.entities.label(sim.row_ids[r]);
    for (std::size_t j = 0; j < sim.col_ids.size(); ++j)
      out += str_printf("\t%.17g", sim.scores.at(r, j));
    out += "\n";
  }
  return out;
}

// Top-K per query as TSV (query_id, rank, candidate_id, score). When a
// candidate set is supplied, each query's scored candidates are restricted
// to it (queries without an entry emit nothing).
inline std::string format_top_k(const SimilarityMatrix& sim, const PipelineData& data,
                                std::size_t k, const CandidateSet* restrict_to) {
  std::string out;
  std::map<std::string, std::size_t> col_of_label;
  for (std::size_t j = 0; j < sim.col_ids.size(); ++j)
    col_of_label[data.kg_tgt.entities.label(sim.col_ids[j])] = j;
  for (std::size_t r = 0; r < sim.row_ids.size(); ++r) {
    const std::string query = data.kg_src.entities.label(sim.row_ids[r]);
    std::vector<std::size_t> cols;
    if (restrict_to) {
      auto it = restrict_to->candidates.find(query);
      if (it == restrict_to->candidates.end()) continue;
      for (const std::string& cand : it->second) {
        auto cit = col_of_label.find(cand);
        if (cit != col_of_label.end()) cols.push_back(cit->second);
      }
    } else {
      for (std::size_t j = 0; j < sim.col_ids.size(); ++j) cols.push_back(j);
    }
    // Descending score, ties toward the smaller candidate column id.
    std::sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) {
      const double sa = sim.scores.at(r, a), sb = sim.scores.at(r, b);
      if (sa != sb) return sa > sb;
      return sim.col_ids[a] < sim.col_ids[b];
    });
    const std::size_t take = std::min(k, cols.size());
    for (std::size_t i = 0; i < take; ++i)
      out += str_printf("%s\t%zu\t%s\t%.6f\n", query.c_str(), i + 1,
                        data.kg_tgt.entities.label(sim.col_ids[cols[i]]).c_str(),
                        sim.scores.at(r, cols[i]));
  }
  return out;
}

inline AlignResult run_align(const PipelineConfig& cfg, const PipelineData& data,
                             std::vector<TrainedChannel>& trained, bool write_outputs = true) {
  AlignResult result = compute_alignment(cfg, data, trained);
  if (write_outputs) {
    detail::ensure_out_dir(cfg);
    write_text_file(cfg.out_dir + "/sim_ensemble.tsv", format_similarity(result.ensemble, data));
    std::optional<CandidateSet> restrict_to;
    if (!cfg.candidates_file.empty()) restrict_to = parse_candidate_set(cfg.candidates_file);
    write_text_file(cfg.out_dir + "/topk.tsv",
                    format_top_k(result.ensemble, data, cfg.top_k,
                                 restrict_to ? &*restrict_to : nullptr));
    if (cfg.ensemble == EnsembleStrategy::PreWeighted) {
      std::string w;
      for (std::size_t c = 0; c < trained.size(); ++c)
        w += str_printf("%s: %.6f\n", channel_name(trained[c].kind),
                        result.weights.weights[c]);
      write_text_file(cfg.out_dir + "/channel_weights.txt", w);
    }
  }
  return result;
}

// Loads trained channels back from checkpoints (for a standalone align run).
inline std::vector<TrainedChannel> load_trained_channels(const PipelineConfig& cfg,
                                                         const PipelineData& data) {
  std::vector<TrainedChannel> out;
  for (ChannelKind kind : cfg.enabled_channels()) {
    const std::string path = detail::channel_path(cfg, "checkpoint", kind, ".txt");
    if (!std::filesystem::exists(path)) throw InputError("missing checkpoint: " + path);
    TrainedChannel tc{kind, make_pipeline_model(cfg, data, kind), {}};
    load_checkpoint(path, tc.model);
    out.push_back(std::move(tc));
  }
  return out;
}

inline MetricReport run_evaluate(const PipelineConfig& cfg, const PipelineData& data,
                                 const SimilarityMatrix& sim, bool write_outputs = true) {
  if (data.test_pairs.empty()) throw ConfigError("no test pairs to evaluate");
  const MetricReport report = compute_metric_report(sim, data.test_pairs, cfg.ndcg_k,
                                                    cfg.bootstrap_resamples, cfg.bootstrap_seed);
  if (write_outputs) {
    detail::ensure_out_dir(cfg);
    write_text_file(cfg.out_dir + "/metrics.txt", format_metric_report(report));
  }
  return report;
}

// Parses a similarity file written by run_align back into matrix form.
inline SimilarityMatrix load_similarity(const std::string& path, const PipelineData& data) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "raea-similarity v1")
    throw ParseError(path + ":1: not a raea-similarity v1 file");
  if (lines.size() < 2) throw ParseError(path + ": missing column header");
  const auto header = split(lines[1], '\t');
  if (header.empty() || header[0] != "cols") throw ParseError(path + ":2: missing 'cols' header");
  SimilarityMatrix sim;
  for (std::size_t j = 1; j < header.size(); ++j) {
    const auto id = data.kg_tgt.entities.find(header[j]);
    if (!id) throw ParseError(path + ":2: unknown target entity '" + header[j] + "'");
    sim.col_ids.push_back(*id);
  }
  std::vector<double> values;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != sim.col_ids.size() + 1)
      throw ParseError(str_printf("%s:%zu: expected %zu fields", path.c_str(), i + 1,
                                  sim.col_ids.size() + 1));
    const auto id = data.kg_src.entities.find(fields[0]);
    if (!id)
      throw ParseError(str_printf("%s:%zu: unknown source entity '%s'", path.c_str(), i + 1,
                                  fields[0].c_str()));
    sim.row_ids.push_back(*id);
    for (std::size_t j = 1; j < fields.size(); ++j) values.push_back(std::stod(fields[j]));
  }
  sim.scores = Tensor({sim.row_ids.size(), sim.col_ids.size()}, std::move(values));
  return sim;
}

// ---------------------------------------------------------------------------
// Full pipeline and the ablation harness.

inline MetricReport run_pipeline(const PipelineConfig& cfg) {
  PipelineData data = load_pipeline_data(cfg);
  std::vector<TrainedChannel> trained = run_train(cfg, data);
  AlignResult aligned = run_align(cfg, data, trained);
  return run_evaluate(cfg, data, aligned.ensemble);
}

struct AblationRow {
  std::string variant;
  std::vector<ChannelKind> channels;
  std::size_t embedding_dim;
  MetricReport report;
};

// Runs the full model plus the five variants (channel removals, no
// relation-attention stage, unigram embedder) on the same inputs.
inline std::vector<AblationRow> run_ablate(const PipelineConfig& base_cfg) {
  struct Variant {
    const char* name;
    AblationFlags flags;
  };
  const std::vector<Variant> variants = {
      {"full", {}},
      {"no_attribute", {.no_attribute = true}},
      {"no_relation", {.no_relation = true}},
      {"no_name", {.no_name = true}},
      {"no_rgat", {.no_rgat = true}},
      {"basic_embedder", {.basic_embedder = true}},
  };
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    PipelineConfig cfg = base_cfg;
    cfg.ablation = v.flags;
    cfg.out_dir = base_cfg.out_dir + "/ablate_" + v.name;
    PipelineData data = load_pipeline_data(cfg);
    std::vector<TrainedChannel> trained = run_train(cfg, data);
    AlignResult aligned = run_align(cfg, data, trained);
    AblationRow row;
    row.variant = v.name;
    row.channels = cfg.enabled_channels();
    ChannelModel probe = make_pipeline_model(cfg, data, row.channels.front());
    row.embedding_dim = probe.output_dim();
    row.report = run_evaluate(cfg, data, aligned.ensemble);
    rows.push_back(std::move(row));
  }
  std::string table = "variant\tchannels\temb_dim\thits@1\thits@10\tmrr\tndcg\n";
  for (const AblationRow& r : rows) {
    std::string chans;
    for (std::size_t i = 0; i < r.channels.size(); ++i)
      chans += std::string(i ? "," : "") + channel_name(r.channels[i]);
    table += str_printf("%s\t%s\t%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", r.variant.c_str(), chans.c_str(),
                        r.embedding_dim, r.report.hits1.point, r.report.hits10.point,
                        r.report.mrr_value.point, r.report.ndcg.point);
  }
  detail::ensure_out_dir(base_cfg);
  write_text_file(base_cfg.out_dir + "/ablation.tsv", table);
  return rows;
}

inline void run_synth(const SynthConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const GeneratedPair pair = generate_aligned_pair(cfg);
  dump_pair(pair, out_dir);
}

}  // namespace raea
