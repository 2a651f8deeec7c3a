#pragma once

// Synthetic aligned graph pairs for hermetic tests: graph 2 is a relabeled
// copy of graph 1 with a controllable fraction of attribute values replaced
// and relation triples dropped or rewired. The gold alignment covers every
// entity; at zero noise the pair is isomorphic with identical values.

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "raea/common.hpp"
#include "raea/kg.hpp"

namespace raea {

struct SynthConfig {
  std::size_t n_entities = 100;
  std::size_t n_relations = 10;
  std::size_t n_predicates = 5;   // non-name attribute predicates
  double rel_density = 4.0;       // expected relation triples per entity
  std::size_t attr_per_entity = 3;
  double numeric_fraction = 0.3;  // share of digital-looking attribute values
  double attr_noise = 0.0;        // fraction of graph-2 values replaced
  double rel_noise = 0.0;         // fraction of graph-2 triples perturbed
  std::uint64_t rng_seed = 0;

  void validate() const {
    contract(n_entities > 0 && n_relations > 0 && n_predicates > 0 && attr_per_entity > 0,
             "synth counts must be positive");
    contract(rel_density > 0, "rel_density must be positive");
    contract(attr_noise >= 0 && attr_noise <= 1 && rel_noise >= 0 && rel_noise <= 1 &&
                 numeric_fraction >= 0 && numeric_fraction <= 1,
             "fractions must lie in [0, 1]");
  }
};

struct GeneratedPair {
  KnowledgeGraph source;
  KnowledgeGraph target;
  SeedAlignment gold;  // covers every entity; split all-train until re-split
  std::size_t perturbed_values = 0;
  std::size_t perturbed_triples = 0;
};

namespace detail {

inline std::string synth_word(std::mt19937_64& rng, std::size_t syllables = 3) {
  static const char* kSyllables[] = {"ba", "ce", "di", "fo", "gu", "ka", "lo", "mi",
                                     "na", "pe", "qi", "ru", "sa", "te", "vu", "zo"};
  std::uniform_int_distribution<std::size_t> pick(0, 15);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) w += kSyllables[pick(rng)];
  return w;
}

inline std::string synth_value(std::mt19937_64& rng, double numeric_fraction) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (uni(rng) < numeric_fraction) {
    static const char* kUnits[] = {"ounces", "kg", "cm", "inches", "pieces"};
    std::uniform_int_distribution<int> whole(1, 999), frac(0, 9);
    std::uniform_int_distribution<std::size_t> unit(0, 4);
    return str_printf("%d.%d %s", whole(rng), frac(rng), kUnits[unit(rng)]);
  }
  return synth_word(rng) + " " + synth_word(rng, 2);
}

}  // namespace detail

// The name predicate every generated graph carries.
inline constexpr const char* kSynthNamePredicate = "name";

// Deterministic per seed. Graph-1 entities are labeled a0..a{n-1}, graph-2
// entities b0..b{n-1}; gold aligns a_i with b_{perm(i)}. Replacement values
// introduced by attr_noise live in a "zz" namespace no generated value uses,
// so attr_noise=1 shares no values across the pair. rel_noise alternates
// between dropping a triple and rewiring its tail; exactly
// round(noise * total) items are perturbed.
inline GeneratedPair generate_aligned_pair(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  GeneratedPair pair;
  KnowledgeGraph& g1 = pair.source;
  KnowledgeGraph& g2 = pair.target;

  const auto n = static_cast<std::int32_t>(cfg.n_entities);
  for (std::int32_t i = 0; i < n; ++i) g1.entities.intern(str_printf("a%d", i));
  for (std::size_t r = 0; r < cfg.n_relations; ++r) g1.relations.intern(str_printf("r%zu", r));
  g1.predicates.intern(kSynthNamePredicate);
  for (std::size_t p = 0; p < cfg.n_predicates; ++p) g1.predicates.intern(str_printf("p%zu", p));

  // Relation triples: uniform endpoints and relations, deduplicated.
  const auto target_triples =
      static_cast<std::size_t>(cfg.rel_density * static_cast<double>(cfg.n_entities));
  std::uniform_int_distribution<std::int32_t> ent(0, n - 1);
  std::uniform_int_distribution<std::int32_t> rel(0, static_cast<std::int32_t>(cfg.n_relations) - 1);
  std::set<RelationTriple> seen;
  for (std::size_t t = 0; t < target_triples; ++t) {
    const RelationTriple triple{ent(rng), rel(rng), ent(rng)};
    if (seen.insert(triple).second) g1.rel_triples.push_back(triple);
  }

  // Attributes: one unique name per entity plus attr_per_entity values.
  std::uniform_int_distribution<std::int32_t> pred(1, static_cast<std::int32_t>(cfg.n_predicates));
  for (std::int32_t e = 0; e < n; ++e) {
    g1.attr_triples.push_back({e, 0, str_printf("name %d %s", e, detail::synth_word(rng).c_str())});
    for (std::size_t a = 0; a < cfg.attr_per_entity; ++a)
      g1.attr_triples.push_back({e, pred(rng), detail::synth_value(rng, cfg.numeric_fraction)});
  }

  // Graph 2: relabeled copy under a random permutation.
  std::vector<std::int32_t> perm(cfg.n_entities);
  for (std::int32_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);

  for (std::int32_t i = 0; i < n; ++i) g2.entities.intern(str_printf("b%d", i));
  for (std::size_t r = 0; r < cfg.n_relations; ++r) g2.relations.intern(str_printf("r%zu", r));
  g2.predicates.intern(kSynthNamePredicate);
  for (std::size_t p = 0; p < cfg.n_predicates; ++p) g2.predicates.intern(str_printf("p%zu", p));
  for (const RelationTriple& t : g1.rel_triples)
    g2.rel_triples.push_back({perm[t.head], t.relation, perm[t.tail]});
  for (const AttributeTriple& t : g1.attr_triples)
    g2.attr_triples.push_back({perm[t.entity], t.predicate, t.value});

  // Attribute noise: replace exactly round(noise * total) values.
  {
    const auto total = g2.attr_triples.size();
    const auto n_perturb =
        static_cast<std::size_t>(std::llround(cfg.attr_noise * static_cast<double>(total)));
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_perturb; ++i)
      g2.attr_triples[order[i]].value =
          "zz" + detail::synth_word(rng) + str_printf(" %zu", order[i]);
    pair.perturbed_values = n_perturb;
  }

  // Relation noise: drop or rewire exactly round(noise * total) triples.
  {
    const auto total = g2.rel_triples.size();
    const auto n_perturb =
        static_cast<std::size_t>(std::llround(cfg.rel_noise * static_cast<double>(total)));
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::set<std::size_t> dropped;
    for (std::size_t i = 0; i < n_perturb; ++i) {
      if (i % 2 == 0) {
        dropped.insert(order[i]);
      } else {
        g2.rel_triples[order[i]].tail = ent(rng);
      }
    }
    if (!dropped.empty()) {
      std::vector<RelationTriple> kept;
      kept.reserve(total - dropped.size());
      for (std::size_t i = 0; i < total; ++i)
        if (!dropped.count(i)) kept.push_back(g2.rel_triples[i]);
      g2.rel_triples = std::move(kept);
    }
    // Rewiring can collide with an existing triple; restore the no-duplicate
    // invariant while keeping load order.
    std::set<RelationTriple> uniq;
    std::vector<RelationTriple> deduped;
    for (const RelationTriple& t : g2.rel_triples)
      if (uniq.insert(t).second) deduped.push_back(t);
    g2.rel_triples = std::move(deduped);
    pair.perturbed_triples = n_perturb;
  }

  g1.incidence = build_incidence(g1);
  g2.incidence = build_incidence(g2);

  for (std::int32_t i = 0; i < n; ++i) pair.gold.pairs.push_back({i, perm[i]});
  pair.gold.split.assign(cfg.n_entities, Split::Train);
  return pair;
}

// Re-splits a gold alignment with the shared deterministic split rule.
inline SeedAlignment split_seeds(const SeedAlignment& gold, double train_frac, double val_frac,
                                 std::uint64_t rng_seed) {
  SeedAlignment out = gold;
  assign_splits(out, train_frac, val_frac, rng_seed);
  return out;
}

// Writes the pair in the loader file formats (relation triples, attribute
// triples, seeds as label pairs).
struct SynthFiles {
  std::string rel1, attr1, rel2, attr2, seeds;
};

inline SynthFiles dump_pair(const GeneratedPair& pair, const std::string& dir) {
  auto dump_graph = [](const KnowledgeGraph& g, const std::string& rel_path,
                       const std::string& attr_path) {
    std::string rel;
    for (const RelationTriple& t : g.rel_triples)
      rel += g.entities.label(t.head) + "\t" + g.relations.label(t.relation) + "\t" +
             g.entities.label(t.tail) + "\n";
    write_text_file(rel_path, rel);
    std::string attr;
    for (const AttributeTriple& t : g.attr_triples)
      attr += g.entities.label(t.entity) + "\t" + g.predicates.label(t.predicate) + "\t" + t.value +
              "\n";
    write_text_file(attr_path, attr);
  };
  SynthFiles files;
  files.rel1 = dir + "/kg1.rel.tsv";
  files.attr1 = dir + "/kg1.attr.tsv";
  files.rel2 = dir + "/kg2.rel.tsv";
  files.attr2 = dir + "/kg2.attr.tsv";
  files.seeds = dir + "/seeds.tsv";
  dump_graph(pair.source, files.rel1, files.attr1);
  dump_graph(pair.target, files.rel2, files.attr2);
  std::string seeds;
  for (const SeedPair& p : pair.gold.pairs)
    seeds += pair.source.entities.label(p.source) + "\t" + pair.target.entities.label(p.target) +
             "\n";
  write_text_file(files.seeds, seeds);
  return files;
}

}  // namespace raea
