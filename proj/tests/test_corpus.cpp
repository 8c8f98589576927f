#include <algorithm>
#include <set>

#include "cre/corpus.hpp"
#include "cre/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cre;
using testutil::make_instance;
using testutil::TempDir;
using testutil::write_text;

namespace {

Dataset one_relation(int n) {
  Dataset ds;
  ds.relations.push_back({0, "only", false, std::nullopt});
  for (int i = 0; i < n; ++i) {
    ds.instances.push_back(make_instance("i" + std::to_string(i), {"a", "b", "c"}, {0, 1}, {2, 3}, 0));
  }
  return ds;
}

std::array<int, 3> split_counts(const Dataset& ds) {
  std::array<int, 3> c{};
  for (const auto& [id, s] : ds.splits) ++c[static_cast<int>(s)];
  return c;
}

}  // namespace

TEST_CASE("validate_instance reports every violation") {
  auto ok = make_instance("a", {"x", "loves", "y"}, {0, 1}, {2, 3}, 0);
  CHECK(validate_instance(ok).empty());

  auto empty = ok;
  empty.head = {5, 5};
  auto v = validate_instance(empty);
  REQUIRE(v.size() == 2);  // empty and out of bounds
  CHECK(v[0].find("empty span") != std::string::npos);

  auto oob = ok;
  oob.tail = {2, 4};
  v = validate_instance(oob);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("out of bounds") != std::string::npos);

  auto many = make_instance("b", {"[E11]", "x"}, {0, 2}, {1, 2}, 0);
  v = validate_instance(many, 1);
  // too long, overlap, reserved marker
  CHECK(v.size() == 3);
}

TEST_CASE("load_jsonl maps fields and keeps file order") {
  TempDir dir;
  const auto p = dir.path() / "x.jsonl";
  write_text(p,
             "{\"id\":\"a\",\"tokens\":[\"x\",\"loves\",\"y\"],\"head\":[0,1],\"tail\":[2,3],\"relation\":\"spouse\"}\n"
             "{\"id\":\"b\",\"tokens\":[\"p\",\"q\",\"r\"],\"head\":[2,3],\"tail\":[0,1],\"relation\":\"child\"}\n");
  auto ds = load_jsonl(p);
  REQUIRE(ds.instances.size() == 2);
  CHECK(ds.instances[0].id == "a");
  CHECK(ds.instances[0].head == Span{0, 1});
  CHECK(ds.instances[0].tail == Span{2, 3});
  CHECK(ds.relations[ds.instances[0].relation].name == "spouse");
  CHECK(ds.relations[ds.instances[1].relation].name == "child");
}

TEST_CASE("load_jsonl errors") {
  TempDir dir;
  const auto p = dir.path() / "x.jsonl";

  write_text(p, "{\"id\":\"a\",\"tokens\":[\"x\",\"y\",\"z\"],\"head\":[0,2],\"tail\":[1,3],\"relation\":\"r\"}\n");
  try {
    load_jsonl(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("overlapping") != std::string::npos);
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }

  write_text(p, "");
  CHECK_THROWS_AS(load_jsonl(p), DataError);

  write_text(p, "{\"id\":\"a\",\"tokens\":[\"x\",\"y\"],\"head\":[0,1],\"tail\":[1,2],\"relation\":\"r\"}\n{oops\n");
  try {
    load_jsonl(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  write_text(p, "{\"id\":\"a\",\"tokens\":[\"x\",\"y\"],\"head\":[0,1],\"tail\":[1,2],\"relation\":\"r\"}\n");
  std::vector<Relation> known{{0, "other", false, std::nullopt}};
  CHECK_THROWS_AS(load_jsonl(p, known), DataError);

  CHECK_THROWS_AS(load_jsonl(dir.path() / "missing.jsonl"), DataError);
}

TEST_CASE("assign_splits is stratified 3:1:1") {
  CHECK(split_counts(assign_splits(one_relation(5), {3, 1, 1}, 1)) == std::array<int, 3>{3, 1, 1});
  CHECK(split_counts(assign_splits(one_relation(700), {3, 1, 1}, 1)) == std::array<int, 3>{420, 140, 140});
  CHECK_THROWS_AS(assign_splits(one_relation(2), {3, 1, 1}, 1), DataError);
  CHECK_THROWS_AS(assign_splits(one_relation(5), {3, 0, 1}, 1), ConfigError);

  auto a = assign_splits(one_relation(50), {3, 1, 1}, 9);
  auto b = assign_splits(one_relation(50), {3, 1, 1}, 9);
  CHECK(a.splits == b.splits);

  // every relation lands in every split
  auto ds = testutil::toy_dataset(6, 10);
  for (const auto& r : ds.relations) {
    for (Split s : {Split::train, Split::validation, Split::test}) CHECK(!ds.select(s, r.id).empty());
  }
}

TEST_CASE("split_tasks deals round-robin") {
  auto ds7 = testutil::toy_dataset(7, 5);
  auto stream = split_tasks(ds7, 3, 4);
  std::vector<std::size_t> sizes;
  for (const auto& t : stream.tasks) sizes.push_back(t.relation_ids.size());
  CHECK(sizes == std::vector<std::size_t>{3, 2, 2});

  auto ds80 = testutil::toy_dataset(80, 5);
  auto s80 = split_tasks(ds80, 10, 2);
  REQUIRE(s80.tasks.size() == 10);
  std::multiset<RelId> all;
  for (const auto& t : s80.tasks) {
    CHECK(t.relation_ids.size() == 8);
    all.insert(t.relation_ids.begin(), t.relation_ids.end());
    for (const auto* x : t.train) {
      CHECK(std::count(t.relation_ids.begin(), t.relation_ids.end(), x->relation) == 1);
      CHECK(ds80.split_of(*x) == Split::train);
    }
    for (const auto* x : t.test) CHECK(ds80.split_of(*x) == Split::test);
  }
  // partition: each relation exactly once
  CHECK(all.size() == 80);
  CHECK(std::set<RelId>(all.begin(), all.end()).size() == 80);

  auto again = split_tasks(ds80, 10, 2);
  for (int t = 0; t < 10; ++t) {
    CHECK(again.tasks[t].relation_ids == s80.tasks[t].relation_ids);
    CHECK(again.tasks[t].train == s80.tasks[t].train);
  }

  CHECK_THROWS_AS(split_tasks(ds7, 8, 0), ConfigError);
  CHECK_THROWS_AS(split_tasks(ds7, 0, 0), ConfigError);
}

TEST_CASE("write then load round-trips") {
  TempDir dir;
  auto ds = testutil::toy_dataset(4, 6, 3);
  ds.relations[1].symmetric = true;
  ds.relations[2].analog_of = 3;
  ds.relations[3].analog_of = 2;
  write_dataset(ds, dir.path());
  auto back = load_dataset(dir.path() / "instances.jsonl", dir.path() / "relations.json", dir.path() / "splits.json");
  CHECK(back == ds);
  CHECK(content_hash(back) == content_hash(ds));

  // re-splitting the loaded copy with the same seed matches too
  CHECK(assign_splits(back, {3, 1, 1}, 11) == assign_splits(ds, {3, 1, 1}, 11));

  auto changed = ds;
  changed.instances[0].tokens[0] = "zzz";
  CHECK(content_hash(changed) != content_hash(ds));
}

TEST_CASE("validate_dataset catches broken registries") {
  auto ds = testutil::toy_dataset(3, 5);
  CHECK_NOTHROW(validate_dataset(ds));

  auto one_sided = ds;
  one_sided.relations[0].analog_of = 1;
  CHECK_THROWS_AS(validate_dataset(one_sided), DataError);

  auto dup = ds;
  dup.instances[1].id = dup.instances[0].id;
  CHECK_THROWS_AS(validate_dataset(dup), DataError);

  auto no_split = ds;
  no_split.splits.erase(no_split.instances[0].id);
  CHECK_THROWS_AS(validate_dataset(no_split), DataError);
}
