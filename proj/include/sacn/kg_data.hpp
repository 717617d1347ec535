#pragma once

// Triple ingestion: TSV parsing, vocabulary construction, reciprocal relations,
// attribute nodes and the filtered-candidate index.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sacn/error.hpp"

namespace sacn {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "' (expected train|valid|test)");
}

struct RawTriple {
  std::string head;
  std::string relation;
  std::string tail;

  friend bool operator==(const RawTriple&, const RawTriple&) = default;
};

struct Triple {
  EntityId s = 0;
  RelationId r = 0;
  EntityId o = 0;
  Split split = Split::train;
  bool attribute = false;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// A (subject, relation) query whose object slot is to be ranked.
struct Query {
  EntityId s = 0;
  RelationId r = 0;

  friend bool operator==(const Query&, const Query&) = default;
  friend auto operator<=>(const Query&, const Query&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

struct TripleKey {
  std::uint32_t s, r, o;
  friend bool operator==(const TripleKey&, const TripleKey&) = default;
};

struct TripleKeyHash {
  std::size_t operator()(const TripleKey& k) const noexcept {
    std::uint64_t h = pair_key(k.s, k.o) * 0x9E3779B97F4A7C15ull;
    h ^= (static_cast<std::uint64_t>(k.r) + 0x632BE59BD9B4E019ull) + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

using TripleKeySet = std::unordered_set<TripleKey, TripleKeyHash>;

}  // namespace detail

/// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped; CRLF is accepted.
inline std::vector<RawTriple> parse_triples(std::istream& in, const std::string& source = "<stream>") {
  std::vector<RawTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (detail::trim(view).empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = view.find('\t', start);
      fields.push_back(view.substr(start, tab == std::string_view::npos ? view.npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ParseError(source, lineno,
                       "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
    }
    RawTriple t{std::string(detail::trim(fields[0])), std::string(detail::trim(fields[1])),
                std::string(detail::trim(fields[2]))};
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      throw ParseError(source, lineno, "empty field");
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<RawTriple> parse_triples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_triples(in, path.string());
}

/// Dense 0-based name↔id maps for entities and relations.
///
/// Relation ids are laid out in blocks: base relations, then attribute relations, then
/// (once add_reciprocal has run) one reciprocal per forward relation at id + forward count.
class Vocabulary {
 public:
  EntityId add_entity(std::string_view name) {
    auto [it, inserted] = entity_index_.try_emplace(std::string(name), entity_names_.size());
    if (inserted) entity_names_.emplace_back(name);
    return it->second;
  }
  RelationId add_relation(std::string_view name) {
    auto [it, inserted] = relation_index_.try_emplace(std::string(name), relation_names_.size());
    if (inserted) relation_names_.emplace_back(name);
    return it->second;
  }

  std::optional<EntityId> find_entity(std::string_view name) const {
    auto it = entity_index_.find(std::string(name));
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<RelationId> find_relation(std::string_view name) const {
    auto it = relation_index_.find(std::string(name));
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
  }
  EntityId entity_id(std::string_view name) const {
    if (auto id = find_entity(name)) return *id;
    throw ValidationError("unknown entity '" + std::string(name) + "'");
  }
  RelationId relation_id(std::string_view name) const {
    if (auto id = find_relation(name)) return *id;
    throw ValidationError("unknown relation '" + std::string(name) + "'");
  }

  const std::string& entity_name(EntityId id) const { return entity_names_.at(id); }
  const std::string& relation_name(RelationId id) const { return relation_names_.at(id); }
  const std::vector<std::string>& entity_names() const noexcept { return entity_names_; }
  const std::vector<std::string>& relation_names() const noexcept { return relation_names_; }

  std::size_t num_entities() const noexcept { return entity_names_.size(); }
  std::size_t num_relations() const noexcept { return relation_names_.size(); }

  // Block bookkeeping.
  std::size_t num_base_entities = 0;
  std::size_t num_base_relations = 0;
  std::size_t num_attribute_relations = 0;
  bool has_reciprocals = false;

  std::size_t num_attribute_nodes() const noexcept { return num_entities() - num_base_entities; }
  /// Relation types that define graph edges: base + attribute, excluding reciprocals.
  std::size_t num_forward_relations() const noexcept {
    return num_base_relations + num_attribute_relations;
  }
  RelationId inverse(RelationId r) const {
    if (!has_reciprocals) throw ValidationError("vocabulary has no reciprocal relations");
    const auto f = static_cast<RelationId>(num_forward_relations());
    return r < f ? r + f : r - f;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.entity_names_ == b.entity_names_ && a.relation_names_ == b.relation_names_ &&
           a.num_base_entities == b.num_base_entities &&
           a.num_base_relations == b.num_base_relations &&
           a.num_attribute_relations == b.num_attribute_relations &&
           a.has_reciprocals == b.has_reciprocals;
  }

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

struct TripleStore {
  std::vector<Triple> triples;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(triples.begin(), triples.end(), [s](const Triple& t) { return t.split == s; }));
  }
  std::vector<Triple> split(Split s) const {
    std::vector<Triple> out;
    for (const auto& t : triples)
      if (t.split == s) out.push_back(t);
    return out;
  }

  friend bool operator==(const TripleStore&, const TripleStore&) = default;
};

struct Dataset {
  Vocabulary vocab;
  TripleStore store;
};

/// Assigns ids in first-appearance order over train, then valid, then test
/// (head before relation before tail within a line).
inline Vocabulary build_vocab(const std::vector<RawTriple>& train, const std::vector<RawTriple>& valid,
                              const std::vector<RawTriple>& test) {
  if (train.empty()) throw ValidationError("training split is empty");
  Vocabulary v;
  for (const auto* split : {&train, &valid, &test}) {
    for (const auto& t : *split) {
      v.add_entity(t.head);
      v.add_relation(t.relation);
      v.add_entity(t.tail);
    }
  }
  v.num_base_entities = v.num_entities();
  v.num_base_relations = v.num_relations();
  return v;
}

struct EncodeReport {
  std::size_t duplicates_dropped = 0;
};

/// Encodes raw triples into `store`, dropping (s, r, o) duplicates within the split.
inline EncodeReport encode_triples(const Vocabulary& vocab, const std::vector<RawTriple>& raw, Split split,
                                   TripleStore& store) {
  EncodeReport report;
  detail::TripleKeySet seen;
  for (const auto& t : raw) {
    const Triple enc{vocab.entity_id(t.head), vocab.relation_id(t.relation), vocab.entity_id(t.tail), split,
                     false};
    if (!seen.insert({enc.s, enc.r, enc.o}).second) {
      ++report.duplicates_dropped;
      continue;
    }
    store.triples.push_back(enc);
  }
  return report;
}

/// build_vocab followed by encoding of all three splits.
inline Dataset assemble_dataset(const std::vector<RawTriple>& train, const std::vector<RawTriple>& valid,
                                const std::vector<RawTriple>& test, EncodeReport* report = nullptr) {
  Dataset ds{build_vocab(train, valid, test), {}};
  EncodeReport total;
  total.duplicates_dropped += encode_triples(ds.vocab, train, Split::train, ds.store).duplicates_dropped;
  total.duplicates_dropped += encode_triples(ds.vocab, valid, Split::valid, ds.store).duplicates_dropped;
  total.duplicates_dropped += encode_triples(ds.vocab, test, Split::test, ds.store).duplicates_dropped;
  if (report) *report = total;
  return ds;
}

inline constexpr std::string_view kReciprocalSuffix = "_inv";
inline constexpr std::string_view kAttributeNodePrefix = "attr:";

/// Appends r_inv for every relation and (o, r_inv, s) for every triple, keeping split labels.
inline Dataset add_reciprocal(Dataset ds) {
  if (ds.vocab.has_reciprocals) throw ValidationError("reciprocal relations already added");
  const std::size_t forward = ds.vocab.num_relations();
  for (std::size_t r = 0; r < forward; ++r) {
    const std::string name = ds.vocab.relation_name(static_cast<RelationId>(r)) + std::string(kReciprocalSuffix);
    if (ds.vocab.find_relation(name)) {
      throw ValidationError("reciprocal name collides with an existing relation: " + name);
    }
    ds.vocab.add_relation(name);
  }
  ds.vocab.has_reciprocals = true;
  const std::size_t n = ds.store.triples.size();
  ds.store.triples.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple t = ds.store.triples[i];
    ds.store.triples.push_back(
        Triple{t.o, static_cast<RelationId>(t.r + forward), t.s, t.split, t.attribute});
  }
  return ds;
}

struct AttributeMergeReport {
  std::size_t retained = 0;
  std::size_t dropped_unknown_entity = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t new_attribute_nodes = 0;
  std::size_t new_relations = 0;
};

/// Adds one node per distinct attribute type and appends (entity, attr-relation, type-node)
/// to the training split. Attribute triples naming unknown entities are dropped.
/// Must run before add_reciprocal so attribute relations stay in the forward block.
inline Dataset merge_attributes(Dataset ds, const std::vector<RawTriple>& attributes,
                                AttributeMergeReport* report = nullptr) {
  if (ds.vocab.has_reciprocals) {
    throw ValidationError("merge_attributes must run before add_reciprocal");
  }
  if (ds.vocab.num_attribute_relations != 0 || ds.vocab.num_attribute_nodes() != 0) {
    throw ValidationError("attributes already merged");
  }
  AttributeMergeReport rep;
  const std::size_t entities_before = ds.vocab.num_entities();
  const std::size_t relations_before = ds.vocab.num_relations();

  detail::TripleKeySet seen;
  for (const auto& t : ds.store.triples)
    if (t.split == Split::train) seen.insert({t.s, t.r, t.o});

  for (const auto& a : attributes) {
    const auto subject = ds.vocab.find_entity(a.head);
    if (!subject || *subject >= ds.vocab.num_base_entities) {
      ++rep.dropped_unknown_entity;
      continue;
    }
    const RelationId r = ds.vocab.add_relation(a.relation);
    const EntityId node = ds.vocab.add_entity(std::string(kAttributeNodePrefix) + a.tail);
    if (!seen.insert({*subject, r, node}).second) {
      ++rep.duplicates_dropped;
      continue;
    }
    ds.store.triples.push_back(Triple{*subject, r, node, Split::train, true});
    ++rep.retained;
  }
  rep.new_attribute_nodes = ds.vocab.num_entities() - entities_before;
  rep.new_relations = ds.vocab.num_relations() - relations_before;
  ds.vocab.num_attribute_relations = rep.new_relations;
  if (report) *report = rep;
  return ds;
}

/// (s, r) → sorted object ids true in any split.
class FilterIndex {
 public:
  void insert(EntityId s, RelationId r, EntityId o) { map_[detail::pair_key(s, r)].push_back(o); }
  void finalize() {
    for (auto& [k, v] : map_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }

  std::span<const EntityId> objects(EntityId s, RelationId r) const {
    auto it = map_.find(detail::pair_key(s, r));
    if (it == map_.end()) return {};
    return it->second;
  }
  bool contains(EntityId s, RelationId r, EntityId o) const {
    auto objs = objects(s, r);
    return std::binary_search(objs.begin(), objs.end(), o);
  }
  std::size_t num_keys() const noexcept { return map_.size(); }

  /// Keys in ascending (s, r) order.
  std::vector<Query> keys() const {
    std::vector<Query> out;
    out.reserve(map_.size());
    for (const auto& [k, v] : map_)
      out.push_back(Query{static_cast<EntityId>(k >> 32), static_cast<RelationId>(k & 0xffffffffu)});
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::unordered_map<std::uint64_t, std::vector<EntityId>> map_;
};

/// Index over a subset of splits (all three by default).
inline FilterIndex build_filter_index(const TripleStore& store,
                                      std::initializer_list<Split> splits = {Split::train, Split::valid,
                                                                             Split::test}) {
  FilterIndex idx;
  for (const auto& t : store.triples)
    if (std::find(splits.begin(), splits.end(), t.split) != splits.end()) idx.insert(t.s, t.r, t.o);
  idx.finalize();
  return idx;
}

inline FilterIndex build_filter_index(const Dataset& ds) {
  if (!ds.vocab.has_reciprocals) {
    throw ValidationError("filter index requires reciprocal relations (head queries are r_inv queries)");
  }
  return build_filter_index(ds.store);
}

// ---------------------------------------------------------------------------
// Statistics report

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t base_entities = 0;
  std::size_t attribute_nodes = 0;
  std::size_t relations = 0;  // forward relation types (base + attribute)
  std::size_t base_relations = 0;
  std::size_t attribute_relations = 0;
  std::size_t relations_with_reciprocals = 0;
  std::size_t train_edges = 0;  // forward triples only
  std::size_t valid_edges = 0;
  std::size_t test_edges = 0;
  std::size_t attribute_triples = 0;
};

inline DatasetStats compute_stats(const Dataset& ds) {
  DatasetStats s;
  s.entities = ds.vocab.num_entities();
  s.base_entities = ds.vocab.num_base_entities;
  s.attribute_nodes = ds.vocab.num_attribute_nodes();
  s.relations = ds.vocab.num_forward_relations();
  s.base_relations = ds.vocab.num_base_relations;
  s.attribute_relations = ds.vocab.num_attribute_relations;
  s.relations_with_reciprocals = ds.vocab.num_relations();
  const auto forward = ds.vocab.num_forward_relations();
  for (const auto& t : ds.store.triples) {
    if (t.r >= forward) continue;
    switch (t.split) {
      case Split::train: ++s.train_edges; break;
      case Split::valid: ++s.valid_edges; break;
      case Split::test: ++s.test_edges; break;
    }
    if (t.attribute) ++s.attribute_triples;
  }
  return s;
}

inline void write_stats_text(std::ostream& os, const DatasetStats& s) {
  const auto row = [&os](std::string_view k, std::size_t v) {
    os << std::left << std::setw(28) << k << std::right << std::setw(10) << v << '\n';
  };
  row("entities", s.entities);
  row("  base entities", s.base_entities);
  row("  attribute nodes", s.attribute_nodes);
  row("relations", s.relations);
  row("  base relations", s.base_relations);
  row("  attribute relations", s.attribute_relations);
  row("relations incl. reciprocal", s.relations_with_reciprocals);
  row("train edges", s.train_edges);
  row("valid edges", s.valid_edges);
  row("test edges", s.test_edges);
  row("attribute triples", s.attribute_triples);
}

inline void write_stats_csv(std::ostream& os, const DatasetStats& s) {
  os << "entities,base_entities,attribute_nodes,relations,base_relations,attribute_relations,"
        "relations_with_reciprocals,train_edges,valid_edges,test_edges,attribute_triples\n";
  os << s.entities << ',' << s.base_entities << ',' << s.attribute_nodes << ',' << s.relations << ','
     << s.base_relations << ',' << s.attribute_relations << ',' << s.relations_with_reciprocals << ','
     << s.train_edges << ',' << s.valid_edges << ',' << s.test_edges << ',' << s.attribute_triples << '\n';
}

// ---------------------------------------------------------------------------
// Prepared-dataset directory
//
//   entities.txt / relations.txt   one name per line, line number = id
//   triples.tsv                    s r o split attribute(0|1)
//   meta.txt                       key=value block counts
//   filter_index.tsv               s r o1,o2,...
//   stats.txt / stats.csv

namespace detail {

inline void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed: " + p.string());
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace detail

inline void save_prepared(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  detail::write_lines(dir / "entities.txt", ds.vocab.entity_names());
  detail::write_lines(dir / "relations.txt", ds.vocab.relation_names());
  {
    std::ofstream out(dir / "triples.tsv", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "triples.tsv").string());
    for (const auto& t : ds.store.triples)
      out << t.s << '\t' << t.r << '\t' << t.o << '\t' << to_string(t.split) << '\t' << (t.attribute ? 1 : 0)
          << '\n';
  }
  detail::write_lines(dir / "meta.txt",
                      {"num_base_entities=" + std::to_string(ds.vocab.num_base_entities),
                       "num_base_relations=" + std::to_string(ds.vocab.num_base_relations),
                       "num_attribute_relations=" + std::to_string(ds.vocab.num_attribute_relations),
                       "reciprocals=" + std::string(ds.vocab.has_reciprocals ? "1" : "0")});
  {
    std::ofstream out(dir / "filter_index.tsv", std::ios::binary);
    const FilterIndex idx = build_filter_index(ds.store);
    for (const auto& q : idx.keys()) {
      out << q.s << '\t' << q.r << '\t';
      bool first = true;
      for (EntityId o : idx.objects(q.s, q.r)) {
        out << (first ? "" : ",") << o;
        first = false;
      }
      out << '\n';
    }
  }
  const DatasetStats stats = compute_stats(ds);
  {
    std::ofstream out(dir / "stats.txt", std::ios::binary);
    write_stats_text(out, stats);
  }
  {
    std::ofstream out(dir / "stats.csv", std::ios::binary);
    write_stats_csv(out, stats);
  }
}

inline Dataset load_prepared(const std::filesystem::path& dir) {
  Dataset ds;
  for (const auto& name : detail::read_lines(dir / "entities.txt")) ds.vocab.add_entity(name);
  for (const auto& name : detail::read_lines(dir / "relations.txt")) ds.vocab.add_relation(name);

  std::map<std::string, std::string> meta;
  for (const auto& line : detail::read_lines(dir / "meta.txt")) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto get = [&](const std::string& k) -> std::size_t {
    auto it = meta.find(k);
    if (it == meta.end()) throw ValidationError("meta.txt missing key " + k);
    return std::stoull(it->second);
  };
  ds.vocab.num_base_entities = get("num_base_entities");
  ds.vocab.num_base_relations = get("num_base_relations");
  ds.vocab.num_attribute_relations = get("num_attribute_relations");
  ds.vocab.has_reciprocals = get("reciprocals") != 0;

  const auto path = dir / "triples.tsv";
  std::size_t lineno = 0;
  for (const auto& line : detail::read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::uint64_t s, r, o;
    std::string split;
    int attr = 0;
    if (!(ss >> s >> r >> o >> split >> attr)) throw ParseError(path.string(), lineno, "malformed encoded triple");
    if (s >= ds.vocab.num_entities() || o >= ds.vocab.num_entities() || r >= ds.vocab.num_relations()) {
      throw ParseError(path.string(), lineno, "id out of vocabulary range");
    }
    ds.store.triples.push_back(Triple{static_cast<EntityId>(s), static_cast<RelationId>(r),
                                      static_cast<EntityId>(o), parse_split(split), attr != 0});
  }
  return ds;
}

}  // namespace sacn
