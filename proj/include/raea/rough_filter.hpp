#pragma once

// Rule-based blocking: product records are flattened to a lowercase
// "category1, category2, ..., title" string and matched against per-rule
// regular expressions; every rule that accepts a query contributes the
// candidates its pattern accepts, unioned across rules.
//
// Rule file: one rule per line, `query_pattern<TAB>candidate_pattern`,
// '#' starts a comment. Patterns use the portable regex core (literals,
// '.', '*', '+', '?', classes, alternation, anchors) and are matched
// case-insensitively via prior lowercasing, unanchored.

#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "raea/common.hpp"

namespace raea {

struct ProductRecord {
  std::string id;
  std::string title;
  std::vector<std::string> categories;  // hierarchy levels, outermost first
  std::map<std::string, std::string> attrs;
};

struct MatchRule {
  std::string query_pattern;
  std::string candidate_pattern;
  std::regex query_re;
  std::regex candidate_re;
};

// query_id -> sorted candidate ids.
struct CandidateSet {
  std::map<std::string, std::vector<std::string>> candidates;
};

// Lowercase ", "-joined category levels, with the lowercase title appended
// when requested; empty parts are skipped.
inline std::string concat_fields(const ProductRecord& rec, bool include_title) {
  std::string out;
  auto append = [&](const std::string& part) {
    const std::string p = trim(part);
    if (p.empty()) return;
    if (!out.empty()) out += ", ";
    out += to_lower(p);
  };
  for (const auto& c : rec.categories) append(c);
  if (include_title) append(rec.title);
  return out;
}

inline std::regex compile_pattern(const std::string& pattern, const std::string& where) {
  try {
    return std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw ParseError(where + ": bad pattern '" + pattern + "': " + e.what());
  }
}

inline std::vector<MatchRule> load_rules(const std::string& path) {
  const auto lines = read_lines(path);
  std::vector<MatchRule> rules;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != 2)
      throw ParseError(str_printf("%s:%zu: expected 'query_pattern<TAB>candidate_pattern'",
                                  path.c_str(), i + 1));
    MatchRule rule;
    rule.query_pattern = trim(fields[0]);
    rule.candidate_pattern = trim(fields[1]);
    const std::string where = str_printf("%s:%zu", path.c_str(), i + 1);
    rule.query_re = compile_pattern(rule.query_pattern, where);
    rule.candidate_re = compile_pattern(rule.candidate_pattern, where);
    rules.push_back(std::move(rule));
  }
  return rules;
}

// Queries are matched on their concatenated categories (no title);
// candidates on categories plus title. Candidate lists are deduplicated and
// sorted by id, so output is independent of candidate input order.
inline CandidateSet apply_rules(const std::vector<MatchRule>& rules,
                                const std::vector<ProductRecord>& queries,
                                const std::vector<ProductRecord>& candidates) {
  std::vector<std::string> cand_text;
  cand_text.reserve(candidates.size());
  for (const auto& c : candidates) cand_text.push_back(concat_fields(c, true));

  CandidateSet out;
  for (const auto& q : queries) {
    const std::string q_text = concat_fields(q, false);
    std::set<std::string> matched;
    for (const auto& rule : rules) {
      if (!std::regex_search(q_text, rule.query_re)) continue;
      for (std::size_t c = 0; c < candidates.size(); ++c)
        if (std::regex_search(cand_text[c], rule.candidate_re)) matched.insert(candidates[c].id);
    }
    out.candidates[q.id] = std::vector<std::string>(matched.begin(), matched.end());
  }
  return out;
}

struct CoverageStats {
  std::map<std::string, std::size_t> per_query;
  std::size_t empty_queries = 0;
  std::size_t distinct_candidates = 0;
};

inline CoverageStats coverage_stats(const CandidateSet& cands) {
  CoverageStats stats;
  std::set<std::string> distinct;
  for (const auto& [query, list] : cands.candidates) {
    stats.per_query[query] = list.size();
    if (list.empty()) ++stats.empty_queries;
    distinct.insert(list.begin(), list.end());
  }
  stats.distinct_candidates = distinct.size();
  return stats;
}

// ---------------------------------------------------------------------------
// Product record TSV: a header line names the columns. 'id' and 'title' are
// fixed; every column whose name starts with 'category' is a hierarchy level
// in header order; an optional 'attrs' column holds ';'-separated key=value
// pairs; any other column becomes an attribute keyed by its header name.
inline std::vector<ProductRecord> load_product_records(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ":1: missing header line");
  const auto header = split(lines[0], '\t');
  int id_col = -1, title_col = -1, attrs_col = -1;
  std::vector<std::size_t> category_cols;
  std::vector<std::size_t> extra_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = to_lower(trim(header[c]));
    if (name == "id")
      id_col = static_cast<int>(c);
    else if (name == "title")
      title_col = static_cast<int>(c);
    else if (name == "attrs")
      attrs_col = static_cast<int>(c);
    else if (name.rfind("category", 0) == 0)
      category_cols.push_back(c);
    else
      extra_cols.push_back(c);
  }
  if (id_col < 0) throw ParseError(path + ":1: header must include an 'id' column");

  std::vector<ProductRecord> records;
  std::set<std::string> seen_ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != header.size())
      throw ParseError(str_printf("%s:%zu: expected %zu fields, got %zu", path.c_str(), i + 1,
                                  header.size(), fields.size()));
    ProductRecord rec;
    rec.id = trim(fields[static_cast<std::size_t>(id_col)]);
    if (rec.id.empty()) throw ParseError(str_printf("%s:%zu: empty id", path.c_str(), i + 1));
    if (!seen_ids.insert(rec.id).second)
      throw ParseError(str_printf("%s:%zu: duplicate id '%s'", path.c_str(), i + 1, rec.id.c_str()));
    if (title_col >= 0) rec.title = trim(fields[static_cast<std::size_t>(title_col)]);
    for (std::size_t c : category_cols) {
      const std::string level = trim(fields[c]);
      if (!level.empty()) rec.categories.push_back(level);
    }
    if (attrs_col >= 0) {
      for (const auto& kv : split(fields[static_cast<std::size_t>(attrs_col)], ';')) {
        const std::string pair = trim(kv);
        if (pair.empty()) continue;
        const std::size_t eq = pair.find('=');
        if (eq == std::string::npos)
          throw ParseError(str_printf("%s:%zu: attr '%s' is not key=value", path.c_str(), i + 1,
                                      pair.c_str()));
        rec.attrs[trim(pair.substr(0, eq))] = trim(pair.substr(eq + 1));
      }
    }
    for (std::size_t c : extra_cols) {
      const std::string v = trim(fields[c]);
      if (!v.empty()) rec.attrs[to_lower(trim(header[c]))] = v;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// One line per query: query_id TAB comma-separated candidate ids.
inline std::string format_candidate_set(const CandidateSet& cands) {
  std::string out;
  for (const auto& [query, list] : cands.candidates) {
    out += query;
    out += '\t';
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i) out += ',';
      out += list[i];
    }
    out += '\n';
  }
  return out;
}

inline CandidateSet parse_candidate_set(const std::string& path) {
  const auto lines = read_lines(path);
  CandidateSet out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != 2)
      throw ParseError(str_printf("%s:%zu: expected 'query_id<TAB>candidates'", path.c_str(), i + 1));
    std::vector<std::string> list;
    for (const auto& c : split(fields[1], ',')) {
      const std::string id = trim(c);
      if (!id.empty()) list.push_back(id);
    }
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    out.candidates[trim(fields[0])] = std::move(list);
  }
  return out;
}

}  // namespace raea
