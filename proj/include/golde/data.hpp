#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "golde/core.hpp"

namespace golde {

struct Triple {
  std::int32_t h = 0;
  std::int32_t r = 0;
  std::int32_t t = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Which slot of a triple is replaced, during corruption and during ranking.
enum class Side : std::uint8_t { Head, Tail };

struct RawTriple {
  std::string h, r, t;
};

inline bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = (unsigned char)s[i];
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t j = 1; j < len; ++j) {
      const unsigned char cc = (unsigned char)s[i + j];
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if (len == 2 && cp < 0x80) return false;          // overlong
    if (len == 3 && cp < 0x800) return false;
    if (len == 4 && cp < 0x10000) return false;
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += len;
  }
  return true;
}

/// Reads "head<TAB>relation<TAB>tail" lines. Names are opaque UTF-8 byte
/// strings; no quoting or escaping exists in this format.
inline std::vector<RawTriple> load_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<RawTriple> out;
  std::string line;
  std::int64_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) fail("blank line");
    const std::size_t tab1 = line.find('\t');
    if (tab1 == std::string::npos) fail("expected 3 tab-separated fields, found 1");
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) fail("expected 3 tab-separated fields, found 2");
    if (line.find('\t', tab2 + 1) != std::string::npos) {
      fail("expected 3 tab-separated fields, found more");
    }
    RawTriple t;
    t.h = line.substr(0, tab1);
    t.r = line.substr(tab1 + 1, tab2 - tab1 - 1);
    t.t = line.substr(tab2 + 1);
    if (t.h.empty() || t.r.empty() || t.t.empty()) fail("empty field");
    if (!is_valid_utf8(t.h) || !is_valid_utf8(t.r) || !is_valid_utf8(t.t)) {
      fail("invalid UTF-8");
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary: dense ids from 0, assigned by first appearance scanning train,
// then valid, then test. Optional dictionary files override the numbering.
// ---------------------------------------------------------------------------

struct Vocab {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::unordered_map<std::string, std::int32_t> entity_ids;
  std::unordered_map<std::string, std::int32_t> relation_ids;

  std::int64_t num_entities() const { return std::int64_t(entity_names.size()); }
  std::int64_t num_relations() const { return std::int64_t(relation_names.size()); }

  std::int32_t entity_id(const std::string& name) const {
    const auto it = entity_ids.find(name);
    if (it == entity_ids.end()) throw ParseError("unknown entity '" + name + "'");
    return it->second;
  }

  std::int32_t relation_id(const std::string& name) const {
    const auto it = relation_ids.find(name);
    if (it == relation_ids.end()) throw ParseError("unknown relation '" + name + "'");
    return it->second;
  }
};

inline Vocab build_vocab(std::span<const RawTriple> train, std::span<const RawTriple> valid,
                         std::span<const RawTriple> test) {
  Vocab v;
  auto add_entity = [&](const std::string& name) {
    if (v.entity_ids.emplace(name, std::int32_t(v.entity_names.size())).second) {
      v.entity_names.push_back(name);
    }
  };
  auto add_relation = [&](const std::string& name) {
    if (v.relation_ids.emplace(name, std::int32_t(v.relation_names.size())).second) {
      v.relation_names.push_back(name);
    }
  };
  for (const auto* split : {&train, &valid, &test}) {
    for (const auto& t : *split) {
      add_entity(t.h);
      add_relation(t.r);
      add_entity(t.t);
    }
  }
  return v;
}

/// Reads "id<TAB>name" rows; ids must be dense from 0 and names unique.
inline std::vector<std::string> load_dict(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::pair<std::int64_t, std::string>> rows;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t tab = line.find('\t');
    if (line.empty() || tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'id<TAB>name'");
    }
    std::int64_t id;
    try {
      std::size_t pos = 0;
      id = std::stoll(line.substr(0, tab), &pos);
      if (pos != tab) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad id");
    }
    rows.emplace_back(id, line.substr(tab + 1));
  }
  std::vector<std::string> names(rows.size());
  std::vector<bool> seen(rows.size(), false);
  for (auto& [id, name] : rows) {
    if (id < 0 || id >= std::int64_t(rows.size()) || seen[std::size_t(id)]) {
      throw ParseError(path + ": ids must be dense from 0 without repeats");
    }
    seen[std::size_t(id)] = true;
    names[std::size_t(id)] = std::move(name);
  }
  return names;
}

inline std::vector<Triple> encode_triples(const Vocab& v, std::span<const RawTriple> raw) {
  std::vector<Triple> out;
  out.reserve(raw.size());
  for (const auto& t : raw) {
    out.push_back({v.entity_id(t.h), v.relation_id(t.r), v.entity_id(t.t)});
  }
  return out;
}

inline std::string serialize_triples(const Vocab& v, std::span<const Triple> triples) {
  std::string out;
  for (const auto& t : triples) {
    out += v.entity_names[std::size_t(t.h)];
    out += '\t';
    out += v.relation_names[std::size_t(t.r)];
    out += '\t';
    out += v.entity_names[std::size_t(t.t)];
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filter index for the filtered ranking protocol: the union of all known-true
// triples across every split, queryable by (h, r) -> tails and (r, t) -> heads.
// ---------------------------------------------------------------------------

class FilterIndex {
 public:
  static FilterIndex build(std::span<const Triple> train, std::span<const Triple> valid,
                           std::span<const Triple> test) {
    FilterIndex f;
    for (const auto* split : {&train, &valid, &test}) {
      for (const auto& t : *split) {
        f.tails_[key(t.h, t.r)].push_back(t.t);
        f.heads_[key(t.t, t.r)].push_back(t.h);
      }
    }
    for (auto* m : {&f.tails_, &f.heads_}) {
      for (auto& [k, v] : *m) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      }
    }
    return f;
  }

  bool contains_tail(std::int32_t h, std::int32_t r, std::int32_t t) const {
    return member(tails_, key(h, r), t);
  }

  bool contains_head(std::int32_t h, std::int32_t r, std::int32_t t) const {
    return member(heads_, key(t, r), h);
  }

  bool contains(const Triple& tr) const { return contains_tail(tr.h, tr.r, tr.t); }

 private:
  using Map = std::unordered_map<std::uint64_t, std::vector<std::int32_t>>;

  static std::uint64_t key(std::int32_t a, std::int32_t b) {
    return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint64_t(std::uint32_t(b));
  }

  static bool member(const Map& m, std::uint64_t k, std::int32_t x) {
    const auto it = m.find(k);
    if (it == m.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), x);
  }

  Map tails_;
  Map heads_;
};

// ---------------------------------------------------------------------------
// Dataset directory: train.txt / valid.txt / test.txt, optionally
// entities.dict / relations.dict fixing the id assignment.
// ---------------------------------------------------------------------------

struct Dataset {
  Vocab vocab;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;

  static Dataset load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto raw_train = load_tsv((fs::path(dir) / "train.txt").string());
    const auto raw_valid = load_tsv((fs::path(dir) / "valid.txt").string());
    const auto raw_test = load_tsv((fs::path(dir) / "test.txt").string());

    Dataset d;
    const auto ent_dict = fs::path(dir) / "entities.dict";
    const auto rel_dict = fs::path(dir) / "relations.dict";
    if (fs::exists(ent_dict) && fs::exists(rel_dict)) {
      d.vocab.entity_names = load_dict(ent_dict.string());
      d.vocab.relation_names = load_dict(rel_dict.string());
      for (std::size_t i = 0; i < d.vocab.entity_names.size(); ++i) {
        d.vocab.entity_ids[d.vocab.entity_names[i]] = std::int32_t(i);
      }
      for (std::size_t i = 0; i < d.vocab.relation_names.size(); ++i) {
        d.vocab.relation_ids[d.vocab.relation_names[i]] = std::int32_t(i);
      }
    } else {
      d.vocab = build_vocab(raw_train, raw_valid, raw_test);
    }
    d.train = encode_triples(d.vocab, raw_train);
    d.valid = encode_triples(d.vocab, raw_valid);
    d.test = encode_triples(d.vocab, raw_test);
    return d;
  }
};

struct DatasetStats {
  std::int64_t num_entities = 0;
  std::int64_t num_relations = 0;
  std::int64_t train = 0;
  std::int64_t valid = 0;
  std::int64_t test = 0;
};

inline DatasetStats dataset_stats(const Dataset& d) {
  return {d.vocab.num_entities(), d.vocab.num_relations(), std::int64_t(d.train.size()),
          std::int64_t(d.valid.size()), std::int64_t(d.test.size())};
}

}  // namespace golde
