#include "cre/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cre/errors.hpp"
#include "cre/rng.hpp"
#include "json.hpp"

namespace cre {

using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split name '" + std::string(s) + "'");
}

bool is_reserved_marker(std::string_view token) {
  return std::find(kReservedMarkers.begin(), kReservedMarkers.end(), token) != kReservedMarkers.end();
}

std::optional<RelId> Dataset::find_relation(std::string_view name) const {
  for (const auto& r : relations) {
    if (r.name == name) return r.id;
  }
  return std::nullopt;
}

Split Dataset::split_of(const Instance& inst) const {
  auto it = splits.find(inst.id);
  if (it == splits.end()) throw DataError("instance '" + inst.id + "' has no split assignment");
  return it->second;
}

std::vector<const Instance*> Dataset::select(Split split, std::optional<RelId> rel) const {
  std::vector<const Instance*> out;
  for (const auto& inst : instances) {
    if (rel && inst.relation != *rel) continue;
    if (split_of(inst) == split) out.push_back(&inst);
  }
  return out;
}

std::vector<const Instance*> Dataset::of_relation(RelId rel) const {
  std::vector<const Instance*> out;
  for (const auto& inst : instances) {
    if (inst.relation == rel) out.push_back(&inst);
  }
  return out;
}

std::vector<std::string> validate_instance(const Instance& inst, int n_tokens_limit) {
  std::vector<std::string> v;
  const int n = static_cast<int>(inst.tokens.size());
  if (n == 0) v.emplace_back("tokens: empty token sequence");
  if (n > n_tokens_limit) {
    v.push_back("tokens: " + std::to_string(n) + " tokens exceeds limit " +
                std::to_string(n_tokens_limit));
  }
  auto check_span = [&](const Span& s, const char* name) {
    if (s.start >= s.end) {
      v.push_back(std::string(name) + ": empty span [" + std::to_string(s.start) + "," +
                  std::to_string(s.end) + ")");
    }
    if (s.start < 0 || s.end > n) {
      v.push_back(std::string(name) + ": span out of bounds for " + std::to_string(n) + " tokens");
    }
  };
  check_span(inst.head, "head");
  check_span(inst.tail, "tail");
  if (inst.head.overlaps(inst.tail)) v.emplace_back("head/tail: overlapping spans");
  for (int i = 0; i < n; ++i) {
    if (is_reserved_marker(inst.tokens[i])) {
      v.push_back("tokens: reserved marker " + inst.tokens[i] +
                  " at position " + std::to_string(i));
    }
  }
  return v;
}

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

void validate_relations(const std::vector<Relation>& rels) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const auto& r = rels[i];
    if (r.id != static_cast<RelId>(i)) throw DataError("relation ids must be dense and 0-based");
    if (!names.insert(r.name).second) throw DataError("duplicate relation name '" + r.name + "'");
    if (r.analog_of) {
      const auto a = *r.analog_of;
      if (a < 0 || a >= static_cast<RelId>(rels.size()) || a == r.id) {
        throw DataError("relation '" + r.name + "' has an invalid analog_of");
      }
      if (rels[a].analog_of != r.id) {
        throw DataError("analog_of of relation '" + r.name + "' is not mutual");
      }
    }
  }
}

Span parse_span(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw DataError("field '" + field + "' must be a [start, end) integer pair");
  }
  return Span{j[0].get<int>(), j[1].get<int>()};
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << content;
    if (!out) throw RuntimeFailure("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void validate_dataset(const Dataset& ds, bool require_splits) {
  validate_relations(ds.relations);
  if (ds.instances.empty()) throw DataError("dataset has no instances");
  std::set<std::string> ids;
  std::vector<std::array<int, 3>> counts(ds.relations.size(), {0, 0, 0});
  for (const auto& inst : ds.instances) {
    if (!ids.insert(inst.id).second) throw DataError("duplicate instance id '" + inst.id + "'");
    if (inst.relation < 0 || inst.relation >= static_cast<RelId>(ds.relations.size())) {
      throw DataError("instance '" + inst.id + "': unknown relation id");
    }
    if (auto v = validate_instance(inst); !v.empty()) {
      throw DataError("instance '" + inst.id + "': " + join(v));
    }
    if (require_splits) {
      counts[inst.relation][static_cast<int>(ds.split_of(inst))]++;
    }
  }
  if (!require_splits) return;
  for (const auto& r : ds.relations) {
    const auto& c = counts[r.id];
    if (c[static_cast<int>(Split::train)] == 0 || c[static_cast<int>(Split::test)] == 0) {
      throw DataError("relation '" + r.name + "' needs at least one train and one test instance");
    }
  }
}

Dataset load_jsonl(const std::filesystem::path& path,
                   const std::optional<std::vector<Relation>>& relations) {
  auto in = open_input(path);
  Dataset ds;
  if (relations) ds.relations = *relations;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("parse error at " + where + ": " + e.what());
    }
    Instance inst;
    try {
      inst.id = j.at("id").get<std::string>();
      inst.tokens = j.at("tokens").get<std::vector<std::string>>();
      inst.head = parse_span(j.at("head"), "head");
      inst.tail = parse_span(j.at("tail"), "tail");
      const auto name = j.at("relation").get<std::string>();
      auto rel = ds.find_relation(name);
      if (!rel) {
        if (relations) throw DataError("unknown relation '" + name + "'");
        rel = static_cast<RelId>(ds.relations.size());
        ds.relations.push_back(Relation{*rel, name, false, std::nullopt});
      }
      inst.relation = *rel;
    } catch (const json::exception& e) {
      throw DataError("schema error at " + where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at " + where);
    }
    if (auto v = validate_instance(inst); !v.empty()) {
      throw DataError("instance '" + inst.id + "' (" + where + "): " + join(v));
    }
    ds.instances.push_back(std::move(inst));
  }
  if (ds.instances.empty()) throw DataError("dataset has no instances: " + path.string());
  validate_dataset(ds, false);
  return ds;
}

std::vector<Relation> load_relations(const std::filesystem::path& path) {
  auto in = open_input(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("parse error in " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw DataError("relation registry must be a JSON array");
  std::vector<Relation> rels;
  std::vector<std::optional<std::string>> analog_names;
  try {
    for (const auto& e : j) {
      Relation r;
      r.id = static_cast<RelId>(rels.size());
      r.name = e.at("name").get<std::string>();
      r.symmetric = e.value("symmetric", false);
      analog_names.push_back(e.contains("analog_of")
                                 ? std::optional(e.at("analog_of").get<std::string>())
                                 : std::nullopt);
      rels.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError("schema error in " + path.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (!analog_names[i]) continue;
    auto it = std::find_if(rels.begin(), rels.end(),
                           [&](const Relation& r) { return r.name == *analog_names[i]; });
    if (it == rels.end()) throw DataError("analog_of names unknown relation '" + *analog_names[i] + "'");
    rels[i].analog_of = it->id;
  }
  validate_relations(rels);
  return rels;
}

std::unordered_map<std::string, Split> load_splits(const std::filesystem::path& path) {
  auto in = open_input(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("parse error in " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("split file must be a JSON object");
  std::unordered_map<std::string, Split> out;
  for (const auto& [id, v] : j.items()) {
    if (!v.is_string()) throw DataError("split of '" + id + "' must be a string");
    out.emplace(id, parse_split(v.get<std::string>()));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& instances, const std::filesystem::path& relations,
                     const std::filesystem::path& splits) {
  auto ds = load_jsonl(instances, load_relations(relations));
  ds.splits = load_splits(splits);
  validate_dataset(ds, true);
  return ds;
}

namespace {

std::string jsonl_text(const Dataset& ds) {
  std::string out;
  for (const auto& inst : ds.instances) {
    json j = {{"id", inst.id},
              {"tokens", inst.tokens},
              {"head", {inst.head.start, inst.head.end}},
              {"tail", {inst.tail.start, inst.tail.end}},
              {"relation", ds.relation(inst.relation).name}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string relations_text(const Dataset& ds) {
  json arr = json::array();
  for (const auto& r : ds.relations) {
    json e = {{"name", r.name}, {"symmetric", r.symmetric}};
    if (r.analog_of) e["analog_of"] = ds.relation(*r.analog_of).name;
    arr.push_back(std::move(e));
  }
  return arr.dump(1) + "\n";
}

// Ordered by instance order so the file is reproducible byte for byte.
std::string splits_text(const Dataset& ds) {
  std::string out = "{";
  bool first = true;
  for (const auto& inst : ds.instances) {
    auto it = ds.splits.find(inst.id);
    if (it == ds.splits.end()) continue;
    out += first ? "\n" : ",\n";
    first = false;
    out += " " + json(inst.id).dump() + ": \"" + std::string(to_string(it->second)) + "\"";
  }
  out += "\n}\n";
  return out;
}

}  // namespace

void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  write_atomic(path, jsonl_text(ds));
}

void write_relations(const Dataset& ds, const std::filesystem::path& path) {
  write_atomic(path, relations_text(ds));
}

void write_splits(const Dataset& ds, const std::filesystem::path& path) {
  write_atomic(path, splits_text(ds));
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(ds, dir / "instances.jsonl");
  write_relations(ds, dir / "relations.json");
  write_splits(ds, dir / "splits.json");
}

std::uint64_t content_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  feed(jsonl_text(ds));
  feed(relations_text(ds));
  feed(splits_text(ds));
  return h;
}

Dataset assign_splits(Dataset ds, std::array<int, 3> ratio, std::uint64_t seed) {
  if (std::any_of(ratio.begin(), ratio.end(), [](int r) { return r <= 0; })) {
    throw ConfigError("split ratio components must be positive");
  }
  const int total = ratio[0] + ratio[1] + ratio[2];
  ds.splits.clear();
  for (const auto& rel : ds.relations) {
    std::vector<const Instance*> members = ds.of_relation(rel.id);
    const int n = static_cast<int>(members.size());
    if (n < 3) {
      throw DataError("relation '" + rel.name + "' has " + std::to_string(n) +
                      " instances; at least 3 are needed for a three-way split");
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rel.id)}));
    rng.shuffle(members);
    const int n_val = std::max(1, n * ratio[1] / total);
    const int n_test = std::max(1, n * ratio[2] / total);
    const int n_train = n - n_val - n_test;
    for (int i = 0; i < n; ++i) {
      const Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::validation : Split::test);
      ds.splits[members[i]->id] = s;
    }
  }
  return ds;
}

TaskStream split_tasks(const Dataset& ds, int k, std::uint64_t seed) {
  const int n = static_cast<int>(ds.relations.size());
  if (k <= 0) throw ConfigError("task count must be positive");
  if (k > n) {
    throw ConfigError("task count " + std::to_string(k) + " exceeds relation count " +
                      std::to_string(n));
  }
  std::vector<RelId> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  TaskStream stream;
  stream.tasks.resize(k);
  for (int i = 0; i < n; ++i) {
    stream.tasks[i % k].relation_ids.push_back(order[i]);
  }
  std::vector<int> task_of(n);
  for (int t = 0; t < k; ++t) {
    for (RelId r : stream.tasks[t].relation_ids) task_of[r] = t;
  }
  for (const auto& inst : ds.instances) {
    auto& task = stream.tasks[task_of[static_cast<std::size_t>(inst.relation)]];
    switch (ds.split_of(inst)) {
      case Split::train:
        task.train.push_back(&inst);
        break;
      case Split::test:
        task.test.push_back(&inst);
        break;
      case Split::validation:
        break;
    }
  }
  return stream;
}

}  // namespace cre
