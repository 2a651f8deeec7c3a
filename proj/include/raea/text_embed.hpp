#pragma once

// Text embedding for attribute predicates, values and entity names. Two
// sources: a table of precomputed vectors loaded from disk, and a hashed
// character-n-gram embedder that is fully deterministic and needs no data.
//
// Hash function (stable across versions and platforms): 64-bit FNV-1a over
// the n-gram bytes, seeded by xor-ing hash_seed into the FNV offset basis.
// The bucket is hash % dim and the sign comes from the hash's top bit;
// accumulated vectors are L2-normalized (the empty string stays all-zero).

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "raea/common.hpp"
#include "raea/kg.hpp"
#include "raea/tensor.hpp"

namespace raea {

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> entries;
  std::size_t duplicate_keys = 0;  // later lines overwrote earlier ones
};

// File format: one entry per line, "string<TAB>v1 v2 ... vd". Keys are
// normalized (lowercase, whitespace collapsed); every vector must have the
// same length. Duplicate keys: last one wins, counted in duplicate_keys.
inline EmbeddingTable load_precomputed(const std::string& path) {
  const auto lines = read_lines(path);
  EmbeddingTable table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != 2)
      throw ParseError(str_printf("%s:%zu: expected 'string<TAB>values'", path.c_str(), i + 1));
    std::vector<double> vec;
    for (const auto& tok : split(fields[1], ' ')) {
      if (tok.empty()) continue;
      try {
        vec.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ParseError(str_printf("%s:%zu: bad float '%s'", path.c_str(), i + 1, tok.c_str()));
      }
    }
    if (table.dim == 0) {
      if (vec.empty())
        throw ParseError(str_printf("%s:%zu: empty vector", path.c_str(), i + 1));
      table.dim = vec.size();
    } else if (vec.size() != table.dim) {
      throw ParseError(str_printf("%s:%zu: vector length %zu, expected %zu", path.c_str(), i + 1,
                                  vec.size(), table.dim));
    }
    const std::string key = normalize_text(fields[0]);
    if (table.entries.count(key)) ++table.duplicate_keys;
    table.entries[key] = std::move(vec);
  }
  return table;
}

struct HashNGramConfig {
  std::size_t dim = 128;
  int ngram_min = 2;
  int ngram_max = 4;
  std::uint64_t hash_seed = 0;
};

namespace detail {

inline std::uint64_t fnv1a64(const char* data, std::size_t len, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// Deterministic hashed embedding of the lowercased string's character
// n-grams with +/-1 bucket signs. Strings shorter than ngram_min contribute
// themselves as a single gram. Result has unit L2 norm; "" embeds to zeros.
inline std::vector<double> embed_string(std::string_view s, const HashNGramConfig& cfg) {
  contract(cfg.dim > 0 && cfg.ngram_min >= 1 && cfg.ngram_max >= cfg.ngram_min,
           "invalid hash n-gram config");
  std::vector<double> vec(cfg.dim, 0.0);
  const std::string lower = to_lower(s);
  if (lower.empty()) return vec;
  auto add_gram = [&](const char* data, std::size_t len) {
    const std::uint64_t h = detail::fnv1a64(data, len, cfg.hash_seed);
    const double sign = (h & (1ull << 63)) ? -1.0 : 1.0;
    vec[h % cfg.dim] += sign;
  };
  const std::size_t n = lower.size();
  if (n < static_cast<std::size_t>(cfg.ngram_min)) {
    add_gram(lower.data(), n);
  } else {
    for (int len = cfg.ngram_min; len <= cfg.ngram_max; ++len) {
      if (static_cast<std::size_t>(len) > n) break;
      for (std::size_t i = 0; i + len <= n; ++i) add_gram(lower.data() + i, len);
    }
  }
  double sq = 0;
  for (double v : vec) sq += v * v;
  if (sq > 0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : vec) v *= inv;
  }
  return vec;
}

// A table-backed embedder that falls back to the hashed n-gram embedder on
// lookup misses, so embedding a string can never fail. Dimensions of table
// and fallback must agree.
struct Embedder {
  const EmbeddingTable* table = nullptr;
  HashNGramConfig hash;

  std::size_t dim() const { return table ? table->dim : hash.dim; }

  std::vector<double> embed(std::string_view s) const {
    const std::string key = normalize_text(s);
    if (table) {
      auto it = table->entries.find(key);
      if (it != table->entries.end()) return it->second;
    }
    HashNGramConfig cfg = hash;
    cfg.dim = dim();
    return embed_string(key, cfg);
  }
};

// Per-triple feature matrices for one channel: row j holds the predicate
// embedding a_j and value embedding v_j of attribute triple j, with the
// owning entity id alongside.
struct AttrFeatures {
  Tensor predicate;              // [m x D_a]
  Tensor value;                  // [m x D_v]
  std::vector<std::int32_t> entity;  // m
};

inline AttrFeatures embed_attributes(const ChannelGraph& channel, const Embedder& embedder) {
  contract(channel.kind != ChannelKind::Structure,
           "structure channel has no attribute triples to embed");
  const std::size_t m = channel.attr_indices.size();
  const std::size_t d = embedder.dim();
  AttrFeatures feats;
  feats.predicate = Tensor::zeros({m, d});
  feats.value = Tensor::zeros({m, d});
  feats.entity.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const AttributeTriple& t = channel.graph->attr_triples[channel.attr_indices[j]];
    const auto a = embedder.embed(channel.graph->predicates.label(t.predicate));
    const auto v = embedder.embed(t.value);
    for (std::size_t c = 0; c < d; ++c) {
      feats.predicate.at(j, c) = a[c];
      feats.value.at(j, c) = v[c];
    }
    feats.entity[j] = t.entity;
  }
  return feats;
}

// Initial entity vectors from name-predicate values: the first name triple
// of each entity (in attribute order) embedded; entities without one get a
// zero row.
inline Tensor embed_entity_names(const KnowledgeGraph& graph,
                                 const std::set<std::int32_t>& name_predicates,
                                 const Embedder& embedder) {
  const std::size_t n = graph.entities.size();
  const std::size_t d = embedder.dim();
  Tensor h0 = Tensor::zeros({n, d});
  std::vector<bool> done(n, false);
  for (const AttributeTriple& t : graph.attr_triples) {
    if (!name_predicates.count(t.predicate)) continue;
    const auto e = static_cast<std::size_t>(t.entity);
    if (done[e]) continue;
    done[e] = true;
    const auto v = embedder.embed(t.value);
    for (std::size_t c = 0; c < d; ++c) h0.at(e, c) = v[c];
  }
  return h0;
}

}  // namespace raea
