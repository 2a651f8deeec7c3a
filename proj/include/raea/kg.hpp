#pragma once

// Knowledge-graph model: label interning, relation/attribute triple loading,
// incidence indexes, seed alignments with deterministic splits, and the
// four-way channel partition (literal / digital / name / structure).

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "raea/common.hpp"

namespace raea {

// Dense id <-> label table; ids are assigned in first-seen order.
class Vocab {
 public:
  std::int32_t intern(const std::string& label) {
    auto it = index_.find(label);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(labels_.size());
    labels_.push_back(label);
    index_.emplace(label, id);
    return id;
  }

  std::optional<std::int32_t> find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& label(std::int32_t id) const { return labels_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct RelationTriple {
  std::int32_t head;
  std::int32_t relation;
  std::int32_t tail;

  friend auto operator<=>(const RelationTriple&, const RelationTriple&) = default;
};

struct AttributeTriple {
  std::int32_t entity;
  std::int32_t predicate;
  std::string value;  // kept verbatim, unicode preserved

  friend bool operator==(const AttributeTriple&, const AttributeTriple&) = default;
};

// All five incidence maps are derived from rel_triples; "sets" are kept as
// sorted unique vectors so iteration order is deterministic.
struct IncidenceIndex {
  std::vector<std::vector<std::int32_t>> heads_of_relation;   // H_{r}
  std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::int32_t>>
      tails_of_head_relation;                                 // T_{e,r}
  std::vector<std::vector<std::int32_t>> tails_of_head;       // T_{e}
  std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::int32_t>>
      relations_between;                                      // R_{e,e'}
  std::vector<std::vector<std::int32_t>> neighbors;           // N_{e}, undirected

  friend bool operator==(const IncidenceIndex&, const IncidenceIndex&) = default;
};

struct KnowledgeGraph {
  Vocab entities;
  Vocab relations;
  Vocab predicates;
  std::vector<RelationTriple> rel_triples;   // deduplicated, load order
  std::vector<AttributeTriple> attr_triples;
  IncidenceIndex incidence;

  std::size_t dropped_blank_values = 0;  // counter, see load_attribute_triples
};

namespace detail {

inline void sort_unique(std::vector<std::int32_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline std::vector<std::string> tab_fields(const std::string& line) { return split(line, '\t'); }

}  // namespace detail

inline IncidenceIndex build_incidence(const KnowledgeGraph& graph) {
  IncidenceIndex idx;
  idx.heads_of_relation.resize(graph.relations.size());
  idx.tails_of_head.resize(graph.entities.size());
  idx.neighbors.resize(graph.entities.size());
  for (const RelationTriple& t : graph.rel_triples) {
    idx.heads_of_relation[t.relation].push_back(t.head);
    idx.tails_of_head_relation[{t.head, t.relation}].push_back(t.tail);
    idx.tails_of_head[t.head].push_back(t.tail);
    idx.relations_between[{t.head, t.tail}].push_back(t.relation);
    idx.neighbors[t.head].push_back(t.tail);
    idx.neighbors[t.tail].push_back(t.head);
  }
  for (auto& v : idx.heads_of_relation) detail::sort_unique(v);
  for (auto& [k, v] : idx.tails_of_head_relation) detail::sort_unique(v);
  for (auto& v : idx.tails_of_head) detail::sort_unique(v);
  for (auto& [k, v] : idx.relations_between) detail::sort_unique(v);
  for (auto& v : idx.neighbors) detail::sort_unique(v);
  return idx;
}

// One triple per non-empty line, exactly three TAB-separated label fields.
// Duplicate triples are dropped; labels are interned in first-seen order
// (head, relation, tail within each line).
inline std::size_t load_relation_triples(const std::string& path, KnowledgeGraph& graph) {
  const auto lines = read_lines(path);
  std::set<RelationTriple> seen(graph.rel_triples.begin(), graph.rel_triples.end());
  std::size_t added = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = detail::tab_fields(lines[i]);
    if (fields.size() != 3)
      throw ParseError(str_printf("%s:%zu: expected 3 tab-separated fields, got %zu", path.c_str(),
                                  i + 1, fields.size()));
    RelationTriple t{graph.entities.intern(fields[0]), graph.relations.intern(fields[1]),
                     graph.entities.intern(fields[2])};
    if (seen.insert(t).second) {
      graph.rel_triples.push_back(t);
      ++added;
    }
  }
  return added;
}

// One triple per non-empty line: entity TAB predicate TAB value. A tab inside
// the value makes the line have >3 fields and is rejected. Values that are
// blank after trimming are dropped and counted, not stored.
inline std::size_t load_attribute_triples(const std::string& path, KnowledgeGraph& graph) {
  const auto lines = read_lines(path);
  std::size_t added = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = detail::tab_fields(lines[i]);
    if (fields.size() != 3)
      throw ParseError(str_printf("%s:%zu: expected 3 tab-separated fields, got %zu", path.c_str(),
                                  i + 1, fields.size()));
    if (trim(fields[2]).empty()) {
      ++graph.dropped_blank_values;
      continue;
    }
    graph.attr_triples.push_back(
        {graph.entities.intern(fields[0]), graph.predicates.intern(fields[1]), fields[2]});
    ++added;
  }
  return added;
}

// ---------------------------------------------------------------------------
// Seed alignments.

enum class Split : std::uint8_t { Train, Validation, Test };

struct SeedPair {
  std::int32_t source;
  std::int32_t target;

  friend bool operator==(const SeedPair&, const SeedPair&) = default;
};

struct SeedAlignment {
  std::vector<SeedPair> pairs;
  std::vector<Split> split;  // one label per pair

  std::vector<SeedPair> of(Split s) const {
    std::vector<SeedPair> out;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (split[i] == s) out.push_back(pairs[i]);
    return out;
  }
};

// Shuffles pair order with rng_seed and assigns the first round(train_frac*N)
// to train, the next round(val_frac*N) to validation, the rest to test.
inline void assign_splits(SeedAlignment& seeds, double train_frac, double val_frac,
                          std::uint64_t rng_seed) {
  contract(train_frac > 0 && val_frac >= 0 && train_frac + val_frac <= 1.0 + 1e-12,
           "split fractions must satisfy 0 < train, 0 <= val, train+val <= 1");
  const std::size_t n = seeds.pairs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(rng_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  std::size_t n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  seeds.split.assign(n, Split::Test);
  for (std::size_t i = 0; i < n_train; ++i) seeds.split[order[i]] = Split::Train;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) seeds.split[order[i]] = Split::Validation;
}

// Seed file: two TAB-separated entity labels per line (source, target). Every
// label must resolve in its graph and no entity may appear in two pairs.
inline SeedAlignment load_seed_alignment(const std::string& path, const KnowledgeGraph& source,
                                         const KnowledgeGraph& target, double train_frac,
                                         double val_frac, std::uint64_t rng_seed) {
  const auto lines = read_lines(path);
  SeedAlignment seeds;
  std::set<std::int32_t> seen_src, seen_tgt;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = detail::tab_fields(lines[i]);
    if (fields.size() != 2)
      throw ParseError(str_printf("%s:%zu: expected 2 tab-separated fields, got %zu", path.c_str(),
                                  i + 1, fields.size()));
    const auto src = source.entities.find(fields[0]);
    if (!src) throw ParseError(str_printf("%s:%zu: unknown source entity '%s'", path.c_str(), i + 1,
                                          fields[0].c_str()));
    const auto tgt = target.entities.find(fields[1]);
    if (!tgt) throw ParseError(str_printf("%s:%zu: unknown target entity '%s'", path.c_str(), i + 1,
                                          fields[1].c_str()));
    if (!seen_src.insert(*src).second)
      throw ParseError(str_printf("%s:%zu: entity '%s' appears in more than one pair", path.c_str(),
                                  i + 1, fields[0].c_str()));
    if (!seen_tgt.insert(*tgt).second)
      throw ParseError(str_printf("%s:%zu: entity '%s' appears in more than one pair", path.c_str(),
                                  i + 1, fields[1].c_str()));
    seeds.pairs.push_back({*src, *tgt});
  }
  assign_splits(seeds, train_frac, val_frac, rng_seed);
  return seeds;
}

// ---------------------------------------------------------------------------
// Channel partition.

enum class ChannelKind : std::uint8_t { Literal, Digital, Name, Structure };

inline const char* channel_name(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::Literal: return "literal";
    case ChannelKind::Digital: return "digital";
    case ChannelKind::Name: return "name";
    case ChannelKind::Structure: return "structure";
  }
  return "?";
}

// A channel view of one graph: a subset of attribute triples (by index into
// the owning graph) plus the shared relation triples.
struct ChannelGraph {
  ChannelKind kind;
  const KnowledgeGraph* graph = nullptr;
  std::vector<std::size_t> attr_indices;
};

struct DigitalValueRule {
  std::size_t max_unit_chars = 12;
};

// A value is digital iff, after trimming and stripping one leading currency
// symbol, it reads: optional sign, digits with at most one decimal point,
// optionally followed by one alphabetic unit token of bounded length.
// "13.6 ounces" and "$9.79" are digital; "White" and "10.5 x 8.7 x 3.4
// inches" are literal.
inline bool classify_digital(const std::string& raw, const DigitalValueRule& rule = {}) {
  std::string s = trim(raw);
  if (s.empty()) return false;
  // Currency prefixes: ASCII '$' plus UTF-8 encoded euro/pound/yen signs.
  for (const char* sym : {"$", "\xe2\x82\xac", "\xc2\xa3", "\xc2\xa5"}) {
    const std::size_t len = std::char_traits<char>::length(sym);
    if (s.compare(0, len, sym) == 0) {
      s = trim(s.substr(len));
      break;
    }
  }
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  std::size_t digits = 0;
  bool dot = false;
  while (i < s.size()) {
    const char c = s[i];
    if (c >= '0' && c <= '9') {
      ++digits;
      ++i;
    } else if (c == '.' && !dot) {
      dot = true;
      ++i;
    } else {
      break;
    }
  }
  if (digits == 0) return false;
  if (i == s.size()) return true;
  if (s[i] != ' ') return false;
  ++i;
  std::size_t unit = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool alpha = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (!alpha) return false;
    ++unit;
    ++i;
  }
  return unit >= 1 && unit <= rule.max_unit_chars;
}

struct ChannelPartition {
  ChannelGraph literal;
  ChannelGraph digital;
  ChannelGraph name;
  ChannelGraph structure;

  const ChannelGraph& of(ChannelKind kind) const {
    switch (kind) {
      case ChannelKind::Literal: return literal;
      case ChannelKind::Digital: return digital;
      case ChannelKind::Name: return name;
      case ChannelKind::Structure: return structure;
    }
    throw ContractViolation("bad channel kind");
  }
};

// Routes every attribute triple to exactly one of literal/digital/name;
// structure keeps none. All four views share the graph's relation triples.
inline ChannelPartition partition_channels(const KnowledgeGraph& graph,
                                           const std::set<std::int32_t>& name_predicates,
                                           const DigitalValueRule& rule = {}) {
  for (std::int32_t p : name_predicates)
    contract(p >= 0 && static_cast<std::size_t>(p) < graph.predicates.size(),
             "name predicate id outside predicate vocabulary");
  ChannelPartition parts;
  parts.literal = {ChannelKind::Literal, &graph, {}};
  parts.digital = {ChannelKind::Digital, &graph, {}};
  parts.name = {ChannelKind::Name, &graph, {}};
  parts.structure = {ChannelKind::Structure, &graph, {}};
  for (std::size_t i = 0; i < graph.attr_triples.size(); ++i) {
    const AttributeTriple& t = graph.attr_triples[i];
    if (name_predicates.count(t.predicate))
      parts.name.attr_indices.push_back(i);
    else if (classify_digital(t.value, rule))
      parts.digital.attr_indices.push_back(i);
    else
      parts.literal.attr_indices.push_back(i);
  }
  return parts;
}

// Resolves a list of predicate labels against the graph vocabulary; labels
// not present are skipped (the predicate then simply never matches).
inline std::set<std::int32_t> resolve_name_predicates(const KnowledgeGraph& graph,
                                                      const std::vector<std::string>& labels) {
  std::set<std::int32_t> out;
  for (const auto& label : labels)
    if (auto id = graph.predicates.find(label)) out.insert(*id);
  return out;
}

}  // namespace raea
