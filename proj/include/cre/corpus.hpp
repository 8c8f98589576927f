#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cre {

using RelId = int;

/// Half-open token interval [start, end).
struct Span {
  int start = 0;
  int end = 0;

  int size() const { return end - start; }
  bool contains(int i) const { return i >= start && i < end; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  bool operator==(const Span&) const = default;
};

struct Relation {
  RelId id = 0;
  std::string name;
  bool symmetric = false;
  std::optional<RelId> analog_of;

  bool operator==(const Relation&) const = default;
};

struct Instance {
  std::string id;
  std::vector<std::string> tokens;
  Span head;
  Span tail;
  RelId relation = 0;

  bool operator==(const Instance&) const = default;
};

enum class Split { train, validation, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

/// Marker tokens reserved by the encoder; corpus text may not contain them.
inline constexpr std::array<std::string_view, 4> kReservedMarkers = {"[E11]", "[E12]", "[E21]",
                                                                     "[E22]"};
bool is_reserved_marker(std::string_view token);

struct Dataset {
  std::vector<Relation> relations;
  std::vector<Instance> instances;
  std::unordered_map<std::string, Split> splits;

  const Relation& relation(RelId id) const { return relations.at(static_cast<std::size_t>(id)); }
  std::optional<RelId> find_relation(std::string_view name) const;
  /// Instances of `split` in dataset order, optionally restricted to one relation.
  std::vector<const Instance*> select(Split split, std::optional<RelId> rel = std::nullopt) const;
  std::vector<const Instance*> of_relation(RelId rel) const;
  Split split_of(const Instance& inst) const;

  bool operator==(const Dataset&) const = default;
};

struct Task {
  std::vector<RelId> relation_ids;
  std::vector<const Instance*> train;
  std::vector<const Instance*> test;
};

/// Ordered tasks over a dataset. Holds pointers into the dataset it was built
/// from, which must outlive it.
struct TaskStream {
  std::vector<Task> tasks;
};

/// Violations reported by validate_instance; empty means valid.
std::vector<std::string> validate_instance(const Instance& inst, int n_tokens_limit = 512);

/// Checks every Dataset invariant; throws DataError naming the first offending item.
void validate_dataset(const Dataset& ds, bool require_splits = true);

/// Parses the JSONL instance file. When `relations` is given, instance relation
/// names must resolve against it; otherwise relations are created in order of
/// first appearance.
Dataset load_jsonl(const std::filesystem::path& path,
                   const std::optional<std::vector<Relation>>& relations = std::nullopt);

std::vector<Relation> load_relations(const std::filesystem::path& path);
std::unordered_map<std::string, Split> load_splits(const std::filesystem::path& path);

/// Loads instances + relation registry + split map and validates the result.
Dataset load_dataset(const std::filesystem::path& instances, const std::filesystem::path& relations,
                     const std::filesystem::path& splits);

void write_jsonl(const Dataset& ds, const std::filesystem::path& path);
void write_relations(const Dataset& ds, const std::filesystem::path& path);
void write_splits(const Dataset& ds, const std::filesystem::path& path);
/// Writes instances.jsonl, relations.json and splits.json into `dir`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Stable 64-bit FNV-1a digest of the canonical serialization.
std::uint64_t content_hash(const Dataset& ds);

/// Stratified per-relation split assignment at ratio train:validation:test.
Dataset assign_splits(Dataset ds, std::array<int, 3> ratio, std::uint64_t seed);

/// Shuffles relations with `seed` and deals them round-robin into k tasks.
TaskStream split_tasks(const Dataset& ds, int k, std::uint64_t seed);

}  // namespace cre
