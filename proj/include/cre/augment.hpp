#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cre/corpus.hpp"

namespace cre {

/// Relation name -> symmetric flag. Relations missing from the map are asymmetric.
class SymmetricRegistry {
 public:
  SymmetricRegistry() = default;
  static SymmetricRegistry from_dataset(const Dataset& ds);

  void set(const std::string& name, bool symmetric) { flags_[name] = symmetric; }
  bool is_symmetric(const std::string& name) const;

 private:
  std::unordered_map<std::string, bool> flags_;
};

enum class AugmentKind { hybrid, reversed };

/// A synthetic hard-negative class built from the current task's training data.
struct AugmentedClass {
  int synth_id = 0;
  AugmentKind kind = AugmentKind::hybrid;
  RelId rel_a = 0;  // hybrid: head-side relation; reversed: source relation
  RelId rel_b = 0;  // hybrid: tail-side relation; reversed: equals rel_a
  std::vector<Instance> instances;
};

/// Which augmentations build_augmented_classes emits.
struct AugmentOptions {
  bool hybrid = true;
  bool reversed = true;
};

/// floor(N/2) disjoint random pairs; with odd N one relation is left out.
std::vector<std::pair<RelId, RelId>> pair_relations(std::vector<RelId> rel_ids, std::uint64_t seed);

/// [s_i; s_j]: the part of x_i holding its head but not its tail, followed by the
/// part of x_j holding its tail but not its head.
Instance hybrid_instance(const Instance& x_i, const Instance& x_j, int synth_id);

/// Same tokens with head and tail spans exchanged.
Instance reversed_instance(const Instance& x, int synth_id);

/// Hybrid classes for every pair and reversed classes for every asymmetric
/// relation of `task`. Synthetic ids start at `first_synth_id` and are dense.
std::vector<AugmentedClass> build_augmented_classes(const Task& task, const Dataset& ds,
                                                    const SymmetricRegistry& registry, std::uint64_t seed,
                                                    int first_synth_id, AugmentOptions options = {});

/// Debug export name: "HYB:<a>+<b>" or "REV:<r>".
std::string augmented_class_name(const AugmentedClass& cls, const Dataset& ds);

/// Writes augmented instances in the corpus JSONL schema.
void write_augmented_jsonl(const std::vector<AugmentedClass>& classes, const Dataset& ds,
                           const std::filesystem::path& path);

}  // namespace cre
