#include "cre/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cre/errors.hpp"
#include "cre/metrics.hpp"
#include "cre/rng.hpp"

namespace cre {

using nlohmann::json;

std::string_view to_string(CutoffRule r) { return r == CutoffRule::fixed_k ? "fixed-k" : "per-relation"; }

CutoffRule parse_cutoff_rule(std::string_view s) {
  if (s == "fixed-k") return CutoffRule::fixed_k;
  if (s == "per-relation") return CutoffRule::per_relation;
  throw ConfigError("unknown retrieval cutoff '" + std::string(s) + "' (fixed-k or per-relation)");
}

void RetrievalConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("retrieval threshold must be in (0, 1]");
  if (m < 1) throw ConfigError("retrieval m must be at least 1");
  if (cutoff == CutoffRule::fixed_k && k < 1) throw ConfigError("retrieval k must be positive");
}

json to_json(const RetrievalConfig& c) {
  return {{"threshold", c.threshold}, {"m", c.m}, {"cutoff", std::string(to_string(c.cutoff))}, {"k", c.k}};
}

RetrievalConfig retrieval_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("retrieval config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "threshold" && key != "m" && key != "cutoff" && key != "k") {
      throw ConfigError("retrieval config: unknown key '" + key + "'");
    }
  }
  RetrievalConfig c;
  try {
    c.threshold = j.value("threshold", c.threshold);
    c.m = j.value("m", c.m);
    c.cutoff = parse_cutoff_rule(j.value("cutoff", std::string(to_string(c.cutoff))));
    c.k = j.value("k", c.k);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("retrieval config: ") + e.what());
  }
  c.validate();
  return c;
}

int retrieval_cutoff(RelId rel, const Dataset& ds, const RetrievalConfig& cfg) {
  if (cfg.cutoff == CutoffRule::fixed_k) return cfg.k;
  return static_cast<int>(ds.select(Split::test, rel).size());
}

RetrievalResult retrieval_precision(RelId rel, const Dataset& ds, const ModelState& model, const RetrievalConfig& cfg) {
  const auto train = ds.select(Split::train, rel);
  if (train.empty()) throw DataError("retrieval: relation " + std::to_string(rel) + " has no training instances");
  const auto proto = prototype(train, model);

  const auto test = ds.select(Split::test);
  std::vector<std::vector<double>> enc;
  enc.reserve(test.size());
  for (const Instance* x : test) enc.push_back(encode(model.encoder, model.vocab, *x));
  const auto order = rank_by_cosine(proto, enc);
  std::vector<int> labels;
  labels.reserve(order.size());
  for (int i : order) labels.push_back(test[static_cast<std::size_t>(i)]->relation);

  RetrievalResult out;
  out.relation = rel;
  out.k = retrieval_cutoff(rel, ds, cfg);
  if (out.k < 1) throw DataError("retrieval: relation " + std::to_string(rel) + " has no test instances");
  out.precision = precision_at_k(labels, rel, out.k);
  return out;
}

RetrievalResult retrieval_test(RelId rel, const Dataset& ds, const RetrievalConfig& cfg, const TrainConfig& train_cfg,
                               std::span<const RelId> candidates, std::uint64_t seed) {
  cfg.validate();
  std::vector<RelId> pool;
  for (RelId r : candidates) {
    if (r != rel) pool.push_back(r);
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (static_cast<int>(pool.size()) < cfg.m) {
    throw DataError("retrieval: only " + std::to_string(pool.size()) + " distractor candidates for m=" +
                    std::to_string(cfg.m));
  }
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rel)}));
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(cfg.m));

  Task task;
  task.relation_ids.push_back(rel);
  task.relation_ids.insert(task.relation_ids.end(), pool.begin(), pool.end());
  const std::set<RelId> members(task.relation_ids.begin(), task.relation_ids.end());
  for (const Instance* x : ds.select(Split::train)) {
    if (members.count(x->relation)) task.train.push_back(x);
  }
  for (const Instance* x : ds.select(Split::test)) {
    if (members.count(x->relation)) task.test.push_back(x);
  }

  TrainConfig tc = train_cfg;
  tc.seed = derive_seed(seed, {0x7e7, static_cast<std::uint64_t>(rel)});
  const auto ctx = TrainContext::make(ds, tc);
  ModelState model = init_model(training_vocab(ds), tc.model, derive_seed(tc.seed, {10}));
  FeatureCache features(model.vocab, model.encoder.context_window);
  initial_training(model, task, 0, ctx, features);

  auto out = retrieval_precision(rel, ds, model, cfg);
  out.distractors = std::move(pool);
  return out;
}

}  // namespace cre
