#include "cre/augment.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>

#include "cre/errors.hpp"
#include "cre/rng.hpp"
#include "json.hpp"

namespace cre {

SymmetricRegistry SymmetricRegistry::from_dataset(const Dataset& ds) {
  SymmetricRegistry reg;
  for (const auto& r : ds.relations) reg.set(r.name, r.symmetric);
  return reg;
}

bool SymmetricRegistry::is_symmetric(const std::string& name) const {
  auto it = flags_.find(name);
  return it != flags_.end() && it->second;
}

std::vector<std::pair<RelId, RelId>> pair_relations(std::vector<RelId> rel_ids, std::uint64_t seed) {
  std::vector<std::pair<RelId, RelId>> pairs;
  if (rel_ids.size() < 2) return pairs;
  Rng rng(seed);
  rng.shuffle(rel_ids);
  for (std::size_t i = 0; i + 1 < rel_ids.size(); i += 2) pairs.emplace_back(rel_ids[i], rel_ids[i + 1]);
  return pairs;
}

namespace {

// Maximal contiguous run of `x` that holds `keep` and stops short of `drop`.
Span keep_side(const Instance& x, const Span& keep, const Span& drop) {
  const int n = static_cast<int>(x.tokens.size());
  return keep.start < drop.start ? Span{0, drop.start} : Span{drop.end, n};
}

}  // namespace

Instance hybrid_instance(const Instance& x_i, const Instance& x_j, int synth_id) {
  const Span si = keep_side(x_i, x_i.head, x_i.tail);
  const Span sj = keep_side(x_j, x_j.tail, x_j.head);
  assert(si.size() > 0 && sj.size() > 0);

  Instance out;
  out.id = "HYB:" + x_i.id + "+" + x_j.id;
  out.relation = synth_id;
  out.tokens.reserve(static_cast<std::size_t>(si.size() + sj.size()));
  out.tokens.insert(out.tokens.end(), x_i.tokens.begin() + si.start, x_i.tokens.begin() + si.end);
  out.tokens.insert(out.tokens.end(), x_j.tokens.begin() + sj.start, x_j.tokens.begin() + sj.end);
  out.head = {x_i.head.start - si.start, x_i.head.end - si.start};
  const int offset = si.size() - sj.start;
  out.tail = {x_j.tail.start + offset, x_j.tail.end + offset};
  return out;
}

Instance reversed_instance(const Instance& x, int synth_id) {
  Instance out = x;
  out.id = "REV:" + x.id;
  out.relation = synth_id;
  std::swap(out.head, out.tail);
  return out;
}

std::vector<AugmentedClass> build_augmented_classes(const Task& task, const Dataset& ds,
                                                    const SymmetricRegistry& registry, std::uint64_t seed,
                                                    int first_synth_id, AugmentOptions options) {
  auto train_of = [&](RelId r) {
    std::vector<const Instance*> out;
    for (const Instance* x : task.train) {
      if (x->relation == r) out.push_back(x);
    }
    return out;
  };

  std::vector<AugmentedClass> classes;
  int next_id = first_synth_id;

  if (options.hybrid) {
    const auto pairs = pair_relations(task.relation_ids, derive_seed(seed, {1}));
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [a, b] = pairs[p];
      auto xs = train_of(a);
      auto ys = train_of(b);
      Rng rng(derive_seed(seed, {2, p}));
      rng.shuffle(xs);
      rng.shuffle(ys);
      AugmentedClass cls{next_id++, AugmentKind::hybrid, a, b, {}};
      const std::size_t count = std::min(xs.size(), ys.size());
      for (std::size_t k = 0; k < count; ++k) cls.instances.push_back(hybrid_instance(*xs[k], *ys[k], cls.synth_id));
      classes.push_back(std::move(cls));
    }
  }

  if (options.reversed) {
    for (RelId r : task.relation_ids) {
      if (registry.is_symmetric(ds.relation(r).name)) continue;
      AugmentedClass cls{next_id++, AugmentKind::reversed, r, r, {}};
      for (const Instance* x : train_of(r)) cls.instances.push_back(reversed_instance(*x, cls.synth_id));
      classes.push_back(std::move(cls));
    }
  }
  return classes;
}

std::string augmented_class_name(const AugmentedClass& cls, const Dataset& ds) {
  if (cls.kind == AugmentKind::hybrid) {
    return "HYB:" + ds.relation(cls.rel_a).name + "+" + ds.relation(cls.rel_b).name;
  }
  return "REV:" + ds.relation(cls.rel_a).name;
}

void write_augmented_jsonl(const std::vector<AugmentedClass>& classes, const Dataset& ds,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  for (const auto& cls : classes) {
    const auto name = augmented_class_name(cls, ds);
    for (const auto& x : cls.instances) {
      nlohmann::json j = {{"id", x.id},
                          {"tokens", x.tokens},
                          {"head", {x.head.start, x.head.end}},
                          {"tail", {x.tail.start, x.tail.end}},
                          {"relation", name}};
      out << j.dump() << '\n';
    }
  }
}

}  // namespace cre
