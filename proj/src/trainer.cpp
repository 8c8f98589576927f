#include "cre/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>

#include "cre/errors.hpp"
#include "cre/metrics.hpp"
#include "cre/rng.hpp"

namespace cre {

using nlohmann::json;

namespace {

// Sub-seed stream tags.
enum : std::uint64_t {
  kSeedInit = 10,
  kSeedExpandReal = 11,
  kSeedExpandSynth = 12,
  kSeedInitialEpochs = 13,
  kSeedReplayEpochs = 14,
  kSeedAugment = 15,
  kSeedSupervised = 16,
};

}  // namespace

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::none:
      return "none";
    case Ablation::no_hybrid:
      return "no_hybrid";
    case Ablation::no_reversed:
      return "no_reversed";
    case Ablation::no_both:
      return "no_both";
  }
  return "none";
}

Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::none;
  if (s == "no_hybrid") return Ablation::no_hybrid;
  if (s == "no_reversed") return Ablation::no_reversed;
  if (s == "no_both") return Ablation::no_both;
  throw ConfigError("unknown ablation '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs_initial <= 0 || epochs_replay <= 0 || batch_size <= 0 || memory_size <= 0) {
    throw ConfigError("train config: epoch counts, batch_size and memory_size must be positive");
  }
  if (epochs_supervised < 0) throw ConfigError("train config: epochs_supervised must be non-negative");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train config: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be non-negative");
  if (model.embedding_dim <= 0 || model.hidden_dim <= 0 || model.context_window < 0 || model.init_scale < 0.0) {
    throw ConfigError("train config: invalid model dimensions");
  }
}

AugmentOptions TrainConfig::augment_options() const {
  return {ablate != Ablation::no_hybrid && ablate != Ablation::no_both,
          ablate != Ablation::no_reversed && ablate != Ablation::no_both};
}

json to_json(const TrainConfig& c) {
  return {{"epochs_initial", c.epochs_initial},
          {"epochs_replay", c.epochs_replay},
          {"epochs_supervised", c.epochs_supervised},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"memory_size", c.memory_size},
          {"aca_enabled", c.aca_enabled},
          {"ablate", std::string(to_string(c.ablate))},
          {"seed", c.seed},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"embedding_dim", c.model.embedding_dim},
          {"hidden_dim", c.model.hidden_dim},
          {"context_window", c.model.context_window},
          {"init_scale", c.model.init_scale},
          {"record_wall_time", c.record_wall_time}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  static const std::set<std::string> known = {
      "epochs_initial", "epochs_replay", "epochs_supervised", "lr",         "batch_size",
      "memory_size",    "aca_enabled",   "ablate",            "seed",       "momentum",
      "weight_decay",   "embedding_dim", "hidden_dim",        "context_window", "init_scale",
      "record_wall_time"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError("train config: unknown key '" + k + "'");
  }
  try {
    c.epochs_initial = j.value("epochs_initial", c.epochs_initial);
    c.epochs_replay = j.value("epochs_replay", c.epochs_replay);
    c.epochs_supervised = j.value("epochs_supervised", c.epochs_supervised);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.memory_size = j.value("memory_size", c.memory_size);
    c.aca_enabled = j.value("aca_enabled", c.aca_enabled);
    c.ablate = parse_ablation(j.value("ablate", std::string("none")));
    c.seed = j.value("seed", c.seed);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.model.embedding_dim = j.value("embedding_dim", c.model.embedding_dim);
    c.model.hidden_dim = j.value("hidden_dim", c.model.hidden_dim);
    c.model.context_window = j.value("context_window", c.model.context_window);
    c.model.init_scale = j.value("init_scale", c.model.init_scale);
    c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t MemoryBank::total() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries) n += v.size();
  return n;
}

const Featurized& FeatureCache::get(const Instance& x) {
  auto it = cache_.find(&x);
  if (it == cache_.end()) it = cache_.emplace(&x, featurize(*vocab_, x, window_)).first;
  return it->second;
}

TrainContext TrainContext::make(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  TrainContext ctx;
  ctx.dataset = &ds;
  ctx.registry = SymmetricRegistry::from_dataset(ds);
  ctx.config = cfg;
  RelId max_id = -1;
  for (const auto& r : ds.relations) max_id = std::max(max_id, r.id);
  ctx.first_synth_id = max_id + 1;
  return ctx;
}

Vocab training_vocab(const Dataset& ds) {
  const auto train = ds.select(Split::train);
  return Vocab::build(train);
}

std::vector<double> train_epochs(ModelState& model, std::span<const Example> examples, int epochs,
                                 const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<double> losses;
  if (examples.empty()) return losses;
  std::vector<Example> data(examples.begin(), examples.end());
  SgdOptimizer opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int e = 0; e < epochs; ++e) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(e)}));
    rng.shuffle(data);
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += bs) {
      const std::span<const Example> batch(data.data() + start, std::min(bs, data.size() - start));
      auto lg = loss_and_grads(model, batch);
      total += lg.loss * static_cast<double>(batch.size());
      opt.step(model, lg.grads);
    }
    losses.push_back(total / static_cast<double>(data.size()));
  }
  return losses;
}

InitialTrainingInfo initial_training(ModelState& model, const Task& task, int task_index, const TrainContext& ctx,
                                     FeatureCache& features) {
  const auto& cfg = ctx.config;
  const auto t = static_cast<std::uint64_t>(task_index);
  for (RelId r : task.relation_ids) {
    if (model.head.index_of(r) >= 0) throw std::invalid_argument("initial_training: relation already registered");
  }
  model.head = expand_classes(model.head, task.relation_ids, cfg.model.init_scale,
                              derive_seed(cfg.seed, {kSeedExpandReal, t}));

  std::vector<Example> examples;
  examples.reserve(task.train.size());
  for (const Instance* x : task.train) examples.push_back({features.get(*x), x->relation});

  InitialTrainingInfo info;
  if (cfg.aca_enabled) {
    const auto classes = build_augmented_classes(task, *ctx.dataset, ctx.registry,
                                                 derive_seed(cfg.seed, {kSeedAugment, t}), ctx.first_synth_id,
                                                 cfg.augment_options());
    for (const auto& cls : classes) {
      info.synth_ids.push_back(cls.synth_id);
      for (const auto& x : cls.instances) {
        examples.push_back({featurize(model.vocab, x, model.encoder.context_window), cls.synth_id});
      }
    }
    model.head = expand_classes(model.head, info.synth_ids, cfg.model.init_scale,
                                derive_seed(cfg.seed, {kSeedExpandSynth, t}));
  }
  info.peak_classes = model.head.size();
  info.n_examples = examples.size();

  train_epochs(model, examples, cfg.epochs_initial, cfg, derive_seed(cfg.seed, {kSeedInitialEpochs, t}));
  model.head = remove_classes(model.head, info.synth_ids);
  return info;
}

void update_memory(MemoryBank& memory, const Task& task, const ModelState& model, int capacity,
                   FeatureCache& features) {
  for (RelId r : task.relation_ids) {
    if (memory.entries.count(r)) continue;
    std::vector<const Instance*> members;
    for (const Instance* x : task.train) {
      if (x->relation == r) members.push_back(x);
    }
    if (members.empty()) throw DataError("update_memory: relation " + std::to_string(r) + " has no training instances");
    std::vector<std::vector<double>> enc;
    enc.reserve(members.size());
    for (const Instance* x : members) enc.push_back(encode(model.encoder, features.get(*x)));
    const auto proto = prototype(enc);
    std::vector<std::pair<double, const Instance*>> scored;
    for (std::size_t i = 0; i < members.size(); ++i) scored.emplace_back(cosine(enc[i], proto), members[i]);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second->id < b.second->id;
    });
    auto& slot = memory.entries[r];
    const std::size_t keep = std::min(scored.size(), static_cast<std::size_t>(capacity));
    for (std::size_t i = 0; i < keep; ++i) slot.push_back(scored[i].second);
  }
}

std::vector<double> memory_replay(ModelState& model, const MemoryBank& memory, int task_index,
                                  const TrainContext& ctx, FeatureCache& features) {
  if (memory.total() == 0) {
    std::cerr << "warning: memory replay skipped, memory bank is empty\n";
    return {};
  }
  std::vector<Example> examples;
  examples.reserve(memory.total());
  for (const auto& [rel, items] : memory.entries) {
    if (model.head.index_of(rel) < 0) throw RuntimeFailure("memory holds relation not registered in the head");
    if (rel >= ctx.first_synth_id) throw RuntimeFailure("memory holds a synthetic class");
    for (const Instance* x : items) examples.push_back({features.get(*x), rel});
  }
  return train_epochs(model, examples, ctx.config.epochs_replay, ctx.config,
                      derive_seed(ctx.config.seed, {kSeedReplayEpochs, static_cast<std::uint64_t>(task_index)}));
}

Evaluation evaluate(const ModelState& model, std::span<const Instance* const> instances, FeatureCache& features) {
  Evaluation ev;
  ev.predicted.reserve(instances.size());
  ev.gold.reserve(instances.size());
  for (const Instance* x : instances) {
    ev.predicted.push_back(forward(model, features.get(*x)).argmax_class);
    ev.gold.push_back(x->relation);
  }
  ev.accuracy = accuracy(ev.predicted, ev.gold);
  ev.f1 = per_relation_f1(ev.predicted, ev.gold);
  return ev;
}

TrajectoryLog run_stream(const Dataset& ds, const TaskStream& stream, const TrainConfig& cfg,
                         const StreamObserver& observer) {
  if (stream.tasks.empty()) throw ConfigError("run_stream: empty task stream");
  const auto ctx = TrainContext::make(ds, cfg);
  ModelState model = init_model(training_vocab(ds), cfg.model, derive_seed(cfg.seed, {kSeedInit}));
  FeatureCache features(model.vocab, model.encoder.context_window);
  MemoryBank memory;

  TrajectoryLog log;
  log.config = to_json(cfg);
  std::vector<const Instance*> seen_test;
  std::set<RelId> seen;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const auto started = std::chrono::steady_clock::now();
    const auto& task = stream.tasks[t];
    const int ti = static_cast<int>(t);

    const auto info = initial_training(model, task, ti, ctx, features);
    if (observer.after_initial) observer.after_initial(ti, model, info);
    update_memory(memory, task, model, cfg.memory_size, features);
    memory_replay(model, memory, ti, ctx, features);

    seen.insert(task.relation_ids.begin(), task.relation_ids.end());
    seen_test.insert(seen_test.end(), task.test.begin(), task.test.end());
    const auto ev = evaluate(model, seen_test, features);

    TrajectoryStep step;
    step.task_index = ti;
    step.accuracy = ev.accuracy;
    for (RelId r : seen) {
      auto it = ev.f1.find(r);
      step.f1[r] = it == ev.f1.end() ? 0.0 : it->second;
    }
    step.seen_relations.assign(seen.begin(), seen.end());
    step.task_relations = task.relation_ids;
    std::sort(step.task_relations.begin(), step.task_relations.end());
    if (cfg.record_wall_time) {
      step.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    log.steps.push_back(std::move(step));
    if (observer.after_task) observer.after_task(ti, model, memory);
  }
  return log;
}

SupervisedResult supervised_upper_bound(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  SupervisedResult out;
  out.model = init_model(training_vocab(ds), cfg.model, derive_seed(cfg.seed, {kSeedInit}));
  FeatureCache features(out.model.vocab, out.model.encoder.context_window);
  std::vector<int> all;
  for (const auto& r : ds.relations) all.push_back(r.id);
  out.model.head = expand_classes(out.model.head, all, cfg.model.init_scale, derive_seed(cfg.seed, {kSeedExpandReal}));

  std::vector<Example> examples;
  for (const Instance* x : ds.select(Split::train)) examples.push_back({features.get(*x), x->relation});
  const int epochs = cfg.epochs_supervised > 0 ? cfg.epochs_supervised : cfg.epochs_initial;
  train_epochs(out.model, examples, epochs, cfg, derive_seed(cfg.seed, {kSeedSupervised}));

  const auto test = ds.select(Split::test);
  const auto ev = evaluate(out.model, test, features);
  out.accuracy = ev.accuracy;
  for (const auto& r : ds.relations) {
    auto it = ev.f1.find(r.id);
    out.f1[r.id] = it == ev.f1.end() ? 0.0 : it->second;
  }
  return out;
}

}  // namespace cre
