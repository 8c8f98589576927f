#include <algorithm>
#include <set>

#include "cre/augment.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cre;
using testutil::make_instance;

namespace {

std::vector<std::string> slice(const Instance& x, Span s) {
  return {x.tokens.begin() + s.start, x.tokens.begin() + s.end};
}

bool contains_any(const std::vector<std::string>& hay, const std::vector<std::string>& needles) {
  return std::any_of(needles.begin(), needles.end(),
                     [&](const auto& n) { return std::find(hay.begin(), hay.end(), n) != hay.end(); });
}

// Task over the first n relations of `ds`, every train instance included.
Task task_of(const Dataset& ds, int n) {
  Task t;
  for (int r = 0; r < n; ++r) t.relation_ids.push_back(r);
  for (const auto* x : ds.select(Split::train)) {
    if (x->relation < n) t.train.push_back(x);
  }
  return t;
}

}  // namespace

TEST_CASE("pair_relations sizes") {
  auto p4 = pair_relations({0, 1, 2, 3}, 5);
  REQUIRE(p4.size() == 2);
  std::set<RelId> covered;
  for (auto [a, b] : p4) covered.insert({a, b});
  CHECK(covered == std::set<RelId>{0, 1, 2, 3});

  auto p5 = pair_relations({0, 1, 2, 3, 4}, 5);
  CHECK(p5.size() == 2);
  covered.clear();
  for (auto [a, b] : p5) covered.insert({a, b});
  CHECK(covered.size() == 4);

  CHECK(pair_relations({3}, 5).empty());
  CHECK(pair_relations({}, 5).empty());
  CHECK(pair_relations({0, 1, 2, 3, 4, 5}, 9) == pair_relations({0, 1, 2, 3, 4, 5}, 9));
}

TEST_CASE("hybrid of the worked example") {
  auto xi = make_instance("i", {"alice", "was", "born", "to", "mary"}, {0, 1}, {4, 5}, 0);
  auto xj = make_instance("j", {"acme", "is", "based", "in", "paris"}, {0, 1}, {4, 5}, 1);
  auto h = hybrid_instance(xi, xj, 9);
  CHECK(h.tokens == std::vector<std::string>{"alice", "was", "born", "to", "is", "based", "in", "paris"});
  CHECK(h.head == Span{0, 1});
  CHECK(h.tail == Span{7, 8});
  CHECK(h.relation == 9);
}

TEST_CASE("hybrid with tail before head takes the right side") {
  auto xi = make_instance("i", {"t0", "t1", "t2", "t3", "t4"}, {4, 5}, {0, 1}, 0);
  auto xj = make_instance("j", {"u0", "u1", "u2"}, {0, 1}, {2, 3}, 1);
  auto h = hybrid_instance(xi, xj, 5);
  // s_i = t1..t4, s_j = u1 u2
  CHECK(h.tokens == std::vector<std::string>{"t1", "t2", "t3", "t4", "u1", "u2"});
  CHECK(h.head == Span{3, 4});
  CHECK(h.tail == Span{5, 6});
}

TEST_CASE("hybrid of an instance with itself stays valid") {
  auto x = make_instance("x", {"a", "b", "c", "d"}, {0, 1}, {3, 4}, 0);
  auto h = hybrid_instance(x, x, 2);
  CHECK(validate_instance(h).empty());
  CHECK(h.tokens == std::vector<std::string>{"a", "b", "c", "b", "c", "d"});
}

TEST_CASE("hybrid and reversal properties on random pairs") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    auto xi = testutil::random_instance(rng, "i" + std::to_string(trial));
    auto xj = testutil::random_instance(rng, "j" + std::to_string(trial));
    auto h = hybrid_instance(xi, xj, 7);
    REQUIRE(validate_instance(h).empty());
    CHECK(slice(h, h.head) == slice(xi, xi.head));
    CHECK(slice(h, h.tail) == slice(xj, xj.tail));
    CHECK_FALSE(contains_any(h.tokens, slice(xi, xi.tail)));
    CHECK_FALSE(contains_any(h.tokens, slice(xj, xj.head)));

    // lengths: s_i runs up to the dropped span or from it to the end
    const int si = xi.head.start < xi.tail.start ? xi.tail.start
                                                 : static_cast<int>(xi.tokens.size()) - xi.tail.end;
    const int sj = xj.tail.start < xj.head.start ? xj.head.start
                                                 : static_cast<int>(xj.tokens.size()) - xj.head.end;
    CHECK(static_cast<int>(h.tokens.size()) == si + sj);

    auto r = reversed_instance(xi, 8);
    CHECK(r.tokens == xi.tokens);
    CHECK(r.head == xi.tail);
    CHECK(r.tail == xi.head);
    auto rr = reversed_instance(r, 9);
    CHECK(rr.head == xi.head);
    CHECK(rr.tail == xi.tail);
  }
}

TEST_CASE("augmented class counts") {
  auto ds = testutil::toy_dataset(4, 10);
  SymmetricRegistry reg = SymmetricRegistry::from_dataset(ds);

  auto four = build_augmented_classes(task_of(ds, 4), ds, reg, 1, 4);
  CHECK(four.size() == 6);  // 2 hybrid + 4 reversed
  CHECK(std::count_if(four.begin(), four.end(), [](const auto& c) { return c.kind == AugmentKind::hybrid; }) == 2);
  std::set<int> ids;
  for (const auto& c : four) {
    ids.insert(c.synth_id);
    for (const auto& x : c.instances) CHECK(x.relation == c.synth_id);
    if (c.kind == AugmentKind::hybrid) {
      CHECK(c.rel_a != c.rel_b);
      CHECK(c.instances.size() == 6);  // min of both train sizes
    } else {
      CHECK(c.instances.size() == 6);
    }
  }
  CHECK(ids == std::set<int>{4, 5, 6, 7, 8, 9});

  SymmetricRegistry both_sym;
  both_sym.set("r0", true);
  both_sym.set("r1", true);
  CHECK(build_augmented_classes(task_of(ds, 2), ds, both_sym, 1, 4).size() == 1);

  SymmetricRegistry one_sym;
  one_sym.set("r2", true);
  auto three = build_augmented_classes(task_of(ds, 3), ds, one_sym, 1, 4);
  CHECK(three.size() == 3);
  for (const auto& c : three) {
    if (c.kind == AugmentKind::reversed) CHECK(c.rel_a != 2);
  }

  AugmentOptions no_hybrid{false, true};
  CHECK(build_augmented_classes(task_of(ds, 4), ds, reg, 1, 4, no_hybrid).size() == 4);
  AugmentOptions no_reversed{true, false};
  CHECK(build_augmented_classes(task_of(ds, 4), ds, reg, 1, 4, no_reversed).size() == 2);
}

TEST_CASE("augmentation is deterministic") {
  auto ds = testutil::toy_dataset(5, 10);
  auto reg = SymmetricRegistry::from_dataset(ds);
  auto a = build_augmented_classes(task_of(ds, 5), ds, reg, 33, 5);
  auto b = build_augmented_classes(task_of(ds, 5), ds, reg, 33, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].synth_id == b[i].synth_id);
    CHECK(a[i].instances == b[i].instances);
  }
}

TEST_CASE("export names") {
  auto ds = testutil::toy_dataset(2, 5);
  auto reg = SymmetricRegistry::from_dataset(ds);
  auto cls = build_augmented_classes(task_of(ds, 2), ds, reg, 1, 2);
  REQUIRE(cls.size() == 3);
  CHECK(augmented_class_name(cls[0], ds).rfind("HYB:", 0) == 0);
  CHECK(augmented_class_name(cls[1], ds) == "REV:r0");

  testutil::TempDir dir;
  write_augmented_jsonl(cls, ds, dir.path() / "aug.jsonl");
  auto back = load_jsonl(dir.path() / "aug.jsonl");
  CHECK(back.instances.size() == cls[0].instances.size() + cls[1].instances.size() + cls[2].instances.size());
}
