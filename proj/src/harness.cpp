#include "cre/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cre/errors.hpp"
#include "cre/rng.hpp"

namespace cre {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(AcaMode m) {
  switch (m) {
    case AcaMode::off:
      return "off";
    case AcaMode::on:
      return "on";
    case AcaMode::paired:
      return "paired";
  }
  return "paired";
}

AcaMode parse_aca_mode(std::string_view s) {
  if (s == "off") return AcaMode::off;
  if (s == "on") return AcaMode::on;
  if (s == "paired") return AcaMode::paired;
  throw ConfigError("unknown aca mode '" + std::string(s) + "' (on, off or paired)");
}

void ExperimentConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!synth && (instances.empty() || relations.empty() || splits.empty())) {
    throw ConfigError("dataset source missing: give either synth or instances/relations/splits");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (!(bad_case_drop > 0.0 && bad_case_drop <= 1.0)) throw ConfigError("bad_case_drop must be in (0, 1]");
  if (bad_case_topk < 1) throw ConfigError("bad_case_topk must be positive");
  for (int b : memory_sizes) {
    if (b < 1) throw ConfigError("memory sizes must be positive");
  }
  std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw ConfigError("duplicate seeds");
  train.validate();
  retrieval_cfg.validate();
  if (synth) synth->validate();
}

json to_json(const ExperimentConfig& c) {
  json j = to_json(c.train);
  if (c.synth) {
    j["synth"] = to_json(*c.synth);
  } else {
    j["instances"] = c.instances.generic_string();
    j["relations"] = c.relations.generic_string();
    j["splits"] = c.splits.generic_string();
  }
  j["k"] = c.k;
  j["seeds"] = c.seeds;
  j["aca"] = std::string(to_string(c.aca));
  j["fr_groups"] = c.fr_groups;
  j["bad_cases"] = c.bad_cases;
  j["retrieval"] = c.retrieval;
  j["ms_groups"] = c.ms_groups;
  j["rep_dump"] = c.rep_dump;
  j["output_dir"] = c.output_dir.generic_string();
  j["memory_sizes"] = c.memory_sizes;
  j["retrieval_threshold"] = c.retrieval_cfg.threshold;
  j["retrieval_m"] = c.retrieval_cfg.m;
  j["retrieval_cutoff"] = std::string(to_string(c.retrieval_cfg.cutoff));
  j["retrieval_k"] = c.retrieval_cfg.k;
  j["ms_source"] = std::string(to_string(c.ms_source));
  j["bad_case_drop"] = c.bad_case_drop;
  j["bad_case_topk"] = c.bad_case_topk;
  j["jobs"] = c.jobs;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  const json train_keys = to_json(TrainConfig{});
  static const std::set<std::string> own = {
      "synth",        "instances",   "relations",         "splits",      "k",
      "seeds",        "aca",         "fr_groups",         "bad_cases",   "retrieval",
      "ms_groups",    "rep_dump",    "output_dir",        "memory_sizes", "retrieval_threshold",
      "retrieval_m",  "retrieval_cutoff", "retrieval_k",  "ms_source",   "bad_case_drop",
      "bad_case_topk", "jobs"};
  json train = json::object();
  for (const auto& [key, v] : j.items()) {
    if (train_keys.contains(key)) {
      train[key] = v;
    } else if (!own.count(key)) {
      throw ConfigError("experiment config: unknown key '" + key + "'");
    }
  }
  ExperimentConfig c;
  c.train = train_config_from_json(train);
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
    if (j.contains("instances")) c.instances = resolve(j.at("instances").get<std::string>());
    if (j.contains("relations")) c.relations = resolve(j.at("relations").get<std::string>());
    if (j.contains("splits")) c.splits = resolve(j.at("splits").get<std::string>());
    if (c.synth && !c.instances.empty()) throw ConfigError("give either synth or dataset paths, not both");
    c.k = j.value("k", c.k);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.aca = parse_aca_mode(j.value("aca", std::string(to_string(c.aca))));
    c.fr_groups = j.value("fr_groups", c.fr_groups);
    c.bad_cases = j.value("bad_cases", c.bad_cases);
    c.retrieval = j.value("retrieval", c.retrieval);
    c.ms_groups = j.value("ms_groups", c.ms_groups);
    c.rep_dump = j.value("rep_dump", c.rep_dump);
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    if (j.contains("memory_sizes")) c.memory_sizes = j.at("memory_sizes").get<std::vector<int>>();
    c.retrieval_cfg.threshold = j.value("retrieval_threshold", c.retrieval_cfg.threshold);
    c.retrieval_cfg.m = j.value("retrieval_m", c.retrieval_cfg.m);
    c.retrieval_cfg.cutoff = parse_cutoff_rule(j.value("retrieval_cutoff", std::string(to_string(c.retrieval_cfg.cutoff))));
    c.retrieval_cfg.k = j.value("retrieval_k", c.retrieval_cfg.k);
    const auto ms = j.value("ms_source", std::string(to_string(c.ms_source)));
    if (ms == "trained-encoder") {
      c.ms_source = PrototypeSource::trained_encoder;
    } else if (ms == "ground-truth-analogs") {
      c.ms_source = PrototypeSource::ground_truth_analogs;
    } else {
      throw ConfigError("unknown ms_source '" + ms + "'");
    }
    c.bad_case_drop = j.value("bad_case_drop", c.bad_case_drop);
    c.bad_case_topk = j.value("bad_case_topk", c.bad_case_topk);
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.synth) return generate_synthetic(*cfg.synth);
  return load_dataset(cfg.instances, cfg.relations, cfg.splits);
}

TaskStream stream_for_seed(const Dataset& ds, int k, std::uint64_t seed) { return split_tasks(ds, k, seed); }

// ---------------------------------------------------------------------------
// Archive plumbing

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << text;
    if (!out) throw RuntimeFailure("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("parse error in " + path.string() + ": " + e.what());
  }
}

std::string log_name(const std::string& arm, std::uint64_t seed) {
  return "logs/" + arm + "_seed" + std::to_string(seed) + ".json";
}

/// Runs f(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure by index.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Config echo stored in an archive: dataset paths point at the archive's copy.
json archive_config(const ExperimentConfig& cfg) {
  auto echo = cfg;
  if (!echo.synth) {
    echo.instances = "dataset/instances.jsonl";
    echo.relations = "dataset/relations.json";
    echo.splits = "dataset/splits.json";
  }
  echo.output_dir = ".";
  return to_json(echo);
}

void write_archive_index(const fs::path& dir, const json& config, std::uint64_t hash,
                         const std::vector<std::pair<std::string, std::uint64_t>>& runs) {
  json list = json::array();
  for (const auto& [arm, seed] : runs) list.push_back({{"arm", arm}, {"seed", seed}, {"log", log_name(arm, seed)}});
  json index = {{"format", "cre-archive"},
                {"tool_version", std::string(kToolVersion)},
                {"corpus_hash", hex64(hash)},
                {"config", config},
                {"runs", std::move(list)}};
  write_atomic(dir / "archive.json", index.dump(1) + "\n");
  write_atomic(dir / "config.json", config.dump(1) + "\n");
}

const ExperimentConfig archive_experiment(const RunArchive& a) { return experiment_config_from_json(a.config, a.dir); }

std::vector<const RunRecord*> baseline_runs(const RunArchive& a) {
  for (const char* name : {"baseline", "none"}) {
    auto runs = a.arm(name);
    if (!runs.empty()) return runs;
  }
  throw DataError("archive " + a.dir.string() + " has no baseline logs (run `cre run` with --aca off or paired)");
}

std::vector<TrajectoryLog> logs_of(std::span<const RunRecord* const> runs) {
  std::vector<TrajectoryLog> out;
  for (const auto* r : runs) out.push_back(r->log);
  return out;
}

/// Seed-mean FR per relation over the given runs.
std::map<RelId, double> mean_fr(std::span<const RunRecord* const> runs) {
  std::map<RelId, std::pair<double, int>> acc;
  for (const auto* r : runs) {
    for (const auto& rec : forgetting_report(r->log)) {
      acc[rec.relation].first += rec.fr;
      acc[rec.relation].second++;
    }
  }
  std::map<RelId, double> out;
  for (const auto& [rel, p] : acc) out[rel] = p.first / p.second;
  return out;
}

/// Seed-mean final-step F1 per relation.
std::map<RelId, double> mean_final_f1(std::span<const RunRecord* const> runs) {
  std::map<RelId, std::pair<double, int>> acc;
  for (const auto* r : runs) {
    for (const auto& [rel, v] : r->log.steps.back().f1) {
      acc[rel].first += v;
      acc[rel].second++;
    }
  }
  std::map<RelId, double> out;
  for (const auto& [rel, p] : acc) out[rel] = p.first / p.second;
  return out;
}

double mean_over(const std::vector<RelId>& rels, const std::map<RelId, double>& values) {
  double s = 0.0;
  int n = 0;
  for (RelId r : rels) {
    auto it = values.find(r);
    if (it == values.end()) continue;
    s += it->second;
    ++n;
  }
  return n == 0 ? 0.0 : s / n;
}

json names_of(const Dataset& ds, const std::vector<RelId>& rels) {
  json a = json::array();
  for (RelId r : rels) a.push_back(ds.relation(r).name);
  return a;
}

TrainConfig supervised_config(const ExperimentConfig& cfg) {
  TrainConfig tc = cfg.train;
  tc.aca_enabled = false;
  tc.seed = cfg.seeds.front();
  return tc;
}

std::string ms_note(PrototypeSource s) {
  return s == PrototypeSource::trained_encoder
             ? "ms_source=trained-encoder: prototypes from a jointly trained supervised encoder (no pretrained encoder)"
             : "ms_source=ground-truth-analogs: similarity 1 between declared analog pairs, 0 otherwise";
}

SimilarityMatrix ms_matrix(const ExperimentConfig& cfg, const Dataset& ds, const SupervisedResult& sup) {
  return cfg.ms_source == PrototypeSource::trained_encoder ? encoder_similarity(ds, sup.model) : analog_similarity(ds);
}

std::string curve_header(int k) {
  std::string h;
  for (int t = 1; t <= k; ++t) h += ",T" + std::to_string(t);
  return h;
}

}  // namespace

std::vector<const RunRecord*> RunArchive::arm(std::string_view name) const {
  std::vector<const RunRecord*> out;
  for (const auto& r : runs) {
    if (r.arm == name) out.push_back(&r);
  }
  return out;
}

std::vector<std::string> RunArchive::arms() const {
  std::vector<std::string> out;
  for (const auto& r : runs) {
    if (std::find(out.begin(), out.end(), r.arm) == out.end()) out.push_back(r.arm);
  }
  return out;
}

RunArchive load_archive(const fs::path& dir) {
  const auto index = read_json(dir / "archive.json");
  RunArchive a;
  a.dir = dir;
  try {
    if (index.at("format") != "cre-archive") throw DataError(dir.string() + " is not a cre archive");
    a.config = index.at("config");
    a.tool_version = index.at("tool_version").get<std::string>();
    a.corpus_hash = std::stoull(index.at("corpus_hash").get<std::string>(), nullptr, 16);
    a.dataset = load_dataset(dir / "dataset/instances.jsonl", dir / "dataset/relations.json", dir / "dataset/splits.json");
    if (content_hash(a.dataset) != a.corpus_hash) throw DataError("archive corpus does not match its recorded hash");
    for (const auto& r : index.at("runs")) {
      RunRecord rec;
      rec.arm = r.at("arm").get<std::string>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.log = read_trajectory(dir / r.at("log").get<std::string>(), a.dataset);
      if (rec.log.steps.empty()) throw DataError("empty log for arm " + rec.arm);
      a.runs.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed archive index: " + std::string(e.what()));
  }
  return a;
}

ArmCurve accuracy_curve(const std::string& arm, std::span<const RunRecord* const> runs) {
  if (runs.empty()) throw DataError("no runs for arm " + arm);
  ArmCurve c;
  c.arm = arm;
  const std::size_t k = runs.front()->log.steps.size();
  c.mean.assign(k, 0.0);
  c.min.assign(k, 1.0);
  c.max.assign(k, 0.0);
  for (const auto* r : runs) {
    if (r->log.steps.size() != k) throw DataError("runs of arm " + arm + " differ in length");
    for (std::size_t t = 0; t < k; ++t) {
      const double v = r->log.steps[t].accuracy;
      c.mean[t] += v / static_cast<double>(runs.size());
      c.min[t] = std::min(c.min[t], v);
      c.max[t] = std::max(c.max[t], v);
    }
    c.final_per_seed.push_back(r->log.steps.back().accuracy);
  }
  return c;
}

std::vector<RunRecord> execute_arms(const ExperimentConfig& cfg, const Dataset& ds, const std::vector<ArmSpec>& arms) {
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir / "logs");
  const auto hash = content_hash(ds);

  // Merge with runs already recorded for the same corpus (e.g. run, then ablate).
  std::map<std::pair<std::string, std::uint64_t>, bool> index;
  if (fs::exists(dir / "archive.json")) {
    try {
      const auto old = read_json(dir / "archive.json");
      if (old.at("corpus_hash").get<std::string>() == hex64(hash)) {
        for (const auto& r : old.at("runs")) index[{r.at("arm").get<std::string>(), r.at("seed").get<std::uint64_t>()}] = true;
      }
    } catch (const std::exception&) {
      index.clear();
    }
  }
  if (!fs::exists(dir / "dataset/instances.jsonl") || index.empty()) write_dataset(ds, dir / "dataset");

  struct Job {
    std::uint64_t seed;
    const ArmSpec* arm;
  };
  std::vector<Job> jobs;
  for (auto seed : cfg.seeds) {
    for (const auto& a : arms) jobs.push_back({seed, &a});
  }
  std::vector<RunRecord> out(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto& job = jobs[i];
    TrainConfig tc = job.arm->train;
    tc.seed = job.seed;
    const auto stream = stream_for_seed(ds, cfg.k, job.seed);
    auto log = run_stream(ds, stream, tc);
    write_trajectory(log, ds, dir / log_name(job.arm->name, job.seed));
    out[i] = RunRecord{job.seed, job.arm->name, std::move(log)};
  });

  for (const auto& r : out) index[{r.arm, r.seed}] = true;
  std::vector<std::pair<std::string, std::uint64_t>> listed;
  for (const auto& [key, _] : index) listed.push_back(key);
  write_archive_index(dir, archive_config(cfg), hash, listed);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

json cmd_gen_synth(const SynthConfig& cfg, const fs::path& out_dir) {
  const auto ds = generate_synthetic(cfg);
  write_dataset(ds, out_dir);
  return {{"relations", ds.relations.size()}, {"instances", ds.instances.size()}, {"corpus_hash", hex64(content_hash(ds))}};
}

namespace {

std::vector<const RunRecord*> pointers(const std::vector<RunRecord>& runs, const std::string& arm) {
  std::vector<const RunRecord*> out;
  for (const auto& r : runs) {
    if (r.arm == arm) out.push_back(&r);
  }
  return out;
}

json curve_json(const ArmCurve& c) {
  return {{"mean", c.mean}, {"min", c.min}, {"max", c.max}, {"final_per_seed", c.final_per_seed}};
}

}  // namespace

json cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ds = load_experiment_dataset(cfg);
  std::vector<ArmSpec> arms;
  if (cfg.aca != AcaMode::on) {
    TrainConfig b = cfg.train;
    b.aca_enabled = false;
    arms.push_back({"baseline", b});
  }
  if (cfg.aca != AcaMode::off) {
    TrainConfig a = cfg.train;
    a.aca_enabled = true;
    arms.push_back({"aca", a});
  }
  const auto runs = execute_arms(cfg, ds, arms);

  std::ostringstream csv;
  csv << "arm" << curve_header(cfg.k) << ",delta\n";
  json summary = {{"command", "run"}, {"k", cfg.k}, {"seeds", cfg.seeds}, {"arms", json::object()}};
  std::map<std::string, ArmCurve> curves;
  for (const auto& a : arms) curves[a.name] = accuracy_curve(a.name, pointers(runs, a.name));
  std::optional<double> delta;
  if (curves.count("baseline") && curves.count("aca")) delta = curves["aca"].mean.back() - curves["baseline"].mean.back();
  for (const auto& a : arms) {
    const auto& c = curves[a.name];
    csv << a.name;
    for (double v : c.mean) csv << ',' << num(v);
    csv << ',' << (a.name == "aca" && delta ? num(*delta) : "") << '\n';
    summary["arms"][a.name] = curve_json(c);
  }
  summary["delta"] = delta ? json(*delta) : json(nullptr);
  write_atomic(cfg.output_dir / "table4.csv", csv.str());
  write_atomic(cfg.output_dir / "summary.json", summary.dump(1) + "\n");
  return summary;
}

json cmd_ablate(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ds = load_experiment_dataset(cfg);
  std::vector<ArmSpec> arms;
  for (auto ab : {Ablation::none, Ablation::no_hybrid, Ablation::no_reversed}) {
    TrainConfig t = cfg.train;
    t.aca_enabled = true;
    t.ablate = ab;
    arms.push_back({ab == Ablation::none ? "full" : std::string(to_string(ab)), t});
  }
  TrainConfig none = cfg.train;
  none.aca_enabled = false;
  arms.push_back({"none", none});
  const auto runs = execute_arms(cfg, ds, arms);

  std::ostringstream csv;
  csv << "arm,final_accuracy,min,max\n";
  json summary = {{"command", "ablate"}, {"seeds", cfg.seeds}, {"arms", json::object()}};
  for (const auto& a : arms) {
    const auto c = accuracy_curve(a.name, pointers(runs, a.name));
    csv << a.name << ',' << num(c.mean.back()) << ',' << num(c.min.back()) << ',' << num(c.max.back()) << '\n';
    summary["arms"][a.name] = curve_json(c);
  }
  write_atomic(cfg.output_dir / "table5.csv", csv.str());
  write_atomic(cfg.output_dir / "ablation.json", summary.dump(1) + "\n");
  return summary;
}

json cmd_memory_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.memory_sizes.empty()) throw ConfigError("memory_sizes is empty");
  const auto ds = load_experiment_dataset(cfg);
  std::vector<ArmSpec> arms;
  std::vector<int> size_of;
  for (int b : cfg.memory_sizes) {
    TrainConfig t = cfg.train;
    t.memory_size = b;
    const std::string prefix = "B" + std::to_string(b) + "_";
    if (cfg.aca != AcaMode::on) {
      t.aca_enabled = false;
      arms.push_back({prefix + "baseline", t});
      size_of.push_back(b);
    }
    if (cfg.aca != AcaMode::off) {
      t.aca_enabled = true;
      arms.push_back({prefix + "aca", t});
      size_of.push_back(b);
    }
  }
  const auto runs = execute_arms(cfg, ds, arms);

  std::ostringstream csv;
  csv << "memory_size,arm" << curve_header(cfg.k) << "\n";
  json summary = {{"command", "memory-sweep"}, {"seeds", cfg.seeds}, {"arms", json::object()}};
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto c = accuracy_curve(arms[i].name, pointers(runs, arms[i].name));
    csv << size_of[i] << ',' << (arms[i].train.aca_enabled ? "aca" : "baseline");
    for (double v : c.mean) csv << ',' << num(v);
    csv << '\n';
    auto cj = curve_json(c);
    cj["memory_size"] = size_of[i];
    summary["arms"][arms[i].name] = std::move(cj);
  }
  write_atomic(cfg.output_dir / "memory_sweep.csv", csv.str());
  write_atomic(cfg.output_dir / "memory_sweep.json", summary.dump(1) + "\n");
  return summary;
}

json cmd_analyze(const fs::path& archive_dir) {
  const auto a = load_archive(archive_dir);
  const auto cfg = archive_experiment(a);
  const auto& ds = a.dataset;
  const auto base = baseline_runs(a);

  const auto sup = supervised_upper_bound(ds, supervised_config(cfg));
  const auto sim = ms_matrix(cfg, ds, sup);
  std::map<RelId, double> ms;
  json top3 = json::object();
  std::ostringstream sim_csv;
  sim_csv << "# " << ms_note(cfg.ms_source) << "\nrel,rank,similar_rel,similarity\n";
  for (const auto& r : ds.relations) {
    const auto m = max_similarity(r.id, sim, 3);
    ms[r.id] = m.value;
    json list = json::array();
    for (std::size_t i = 0; i < m.top.size(); ++i) {
      const auto& [other, v] = m.top[i];
      list.push_back({{"relation", ds.relation(other).name}, {"similarity", v}});
      sim_csv << r.name << ',' << i + 1 << ',' << ds.relation(other).name << ',' << num(v) << '\n';
    }
    top3[r.name] = std::move(list);
  }

  json report = {{"command", "analyze"},
                 {"ms_source", std::string(to_string(cfg.ms_source))},
                 {"note", ms_note(cfg.ms_source)},
                 {"supervised_accuracy", sup.accuracy},
                 {"top3_similar", top3}};

  const auto fr = mean_fr(base);
  const auto groups = group_by_metric(fr, 3);
  std::map<RelId, int> group_of;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (RelId r : groups[g]) group_of[r] = static_cast<int>(g) + 1;
  }

  if (cfg.fr_groups) {
    std::ostringstream csv;
    csv << "# " << ms_note(cfg.ms_source) << "\nrun,rel,intro_task,FR,FR_clamped,MS,group\n";
    for (const auto* run : base) {
      for (const auto& rec : forgetting_report(run->log)) {
        csv << run->seed << ',' << ds.relation(rec.relation).name << ',' << rec.intro_task << ',' << num(rec.fr) << ','
            << num(rec.fr_clamped) << ',' << num(ms[rec.relation]) << ",G" << group_of[rec.relation] << '\n';
      }
    }
    for (const auto& [rel, v] : fr) {
      csv << "mean," << ds.relation(rel).name << ",," << num(v) << ",," << num(ms[rel]) << ",G" << group_of[rel] << '\n';
    }
    write_atomic(archive_dir / "fr_report.csv", csv.str());

    const auto f1 = mean_final_f1(base);
    json table = json::array();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double f = mean_over(groups[g], f1);
      const double fs_ = mean_over(groups[g], sup.f1);
      table.push_back({{"group", "G" + std::to_string(g + 1)},
                       {"relations", names_of(ds, groups[g])},
                       {"FR", mean_over(groups[g], fr)},
                       {"MS", mean_over(groups[g], ms)},
                       {"F1", f},
                       {"F1_star", fs_},
                       {"delta", fs_ - f}});
    }
    report["fr_groups"] = std::move(table);
  }

  if (cfg.bad_cases) {
    std::ostringstream csv;
    csv << "# " << ms_note(cfg.ms_source) << "\narm,run,rel,step,drop,analog_present\n";
    json table = json::object();
    for (const auto& arm : a.arms()) {
      const auto runs = a.arm(arm);
      const auto logs = logs_of(runs);
      const auto s = bad_case_scan(logs, sim, cfg.bad_case_drop, cfg.bad_case_topk);
      for (const auto& c : s.cases) {
        csv << arm << ',' << runs[static_cast<std::size_t>(c.run)]->seed << ',' << ds.relation(c.relation).name << ','
            << c.step << ',' << num(c.drop) << ',' << (c.analog_present ? 1 : 0) << '\n';
      }
      table[arm] = {{"CF", s.cf}, {"SIM", s.sim}, {"ratio_pct", 100.0 * s.sim_ratio()}};
    }
    write_atomic(archive_dir / "badcases.csv", csv.str());
    report["bad_cases"] = {{"drop", cfg.bad_case_drop}, {"topk", cfg.bad_case_topk}, {"arms", std::move(table)}};
  }

  if (cfg.ms_groups) {
    const auto ms_groups = group_by_metric(ms, 3);
    json gl = json::array();
    for (std::size_t g = 0; g < ms_groups.size(); ++g) {
      gl.push_back({{"group", "G" + std::to_string(g + 1)},
                    {"relations", names_of(ds, ms_groups[g])},
                    {"MS", mean_over(ms_groups[g], ms)}});
    }
    json per_arm = json::object();
    for (const auto& arm : a.arms()) {
      const auto f1 = mean_final_f1(a.arm(arm));
      json row = json::array();
      for (const auto& g : ms_groups) row.push_back(mean_over(g, f1));
      per_arm[arm] = std::move(row);
    }
    report["ms_groups"] = {{"groups", std::move(gl)}, {"final_f1", std::move(per_arm)}};
  }

  write_atomic(archive_dir / "similar.csv", sim_csv.str());
  write_atomic(archive_dir / "analysis.json", report.dump(1) + "\n");
  return report;
}

json cmd_retrieval(const fs::path& archive_dir, const std::optional<RetrievalConfig>& override_cfg) {
  const auto a = load_archive(archive_dir);
  const auto cfg = archive_experiment(a);
  const auto rcfg = override_cfg.value_or(cfg.retrieval_cfg);
  rcfg.validate();
  const auto& ds = a.dataset;
  const auto base = baseline_runs(a);
  const auto logs = logs_of(base);

  const auto qualified = forgetting_relations(logs, rcfg.threshold);
  std::vector<RelId> candidates;
  for (const auto& r : ds.relations) {
    if (!std::binary_search(qualified.begin(), qualified.end(), r.id)) candidates.push_back(r.id);
  }
  const auto fr = mean_fr(base);
  const auto groups = group_by_metric(fr, 3);
  std::map<RelId, int> group_of;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (RelId r : groups[g]) group_of[r] = static_cast<int>(g);
  }

  json report = {{"command", "retrieval"}, {"config", to_json(rcfg)}, {"qualified", names_of(ds, qualified)}};
  std::ostringstream csv;
  csv << "rel,arm,precision,k,mode,group\n";
  if (qualified.empty()) {
    report["note"] = "no relation dropped by more than the threshold; nothing to test";
    write_atomic(archive_dir / "retrieval.csv", csv.str());
    write_atomic(archive_dir / "retrieval.json", report.dump(1) + "\n");
    return report;
  }
  if (static_cast<int>(candidates.size()) < rcfg.m) {
    throw DataError("retrieval: only " + std::to_string(candidates.size()) + " non-forgetting relations for m=" +
                    std::to_string(rcfg.m));
  }

  const auto sup = supervised_upper_bound(ds, supervised_config(cfg));
  const std::uint64_t seed = derive_seed(cfg.seeds.front(), {0x3e7});
  TrainConfig off = cfg.train, on = cfg.train;
  off.aca_enabled = false;
  on.aca_enabled = true;

  struct Row {
    RetrievalResult baseline, aca, supervised;
  };
  std::vector<Row> rows(qualified.size());
  parallel_for(qualified.size(), cfg.jobs, [&](std::size_t i) {
    const RelId rel = qualified[i];
    rows[i].baseline = retrieval_test(rel, ds, rcfg, off, candidates, seed);
    rows[i].aca = retrieval_test(rel, ds, rcfg, on, candidates, seed);
    rows[i].supervised = retrieval_precision(rel, ds, sup.model, rcfg);
  });

  const std::array<std::string, 3> arm_names = {"baseline", "aca", "supervised"};
  std::array<std::array<std::pair<double, int>, 3>, 3> cell{};
  for (std::size_t i = 0; i < qualified.size(); ++i) {
    const RelId rel = qualified[i];
    const int g = group_of.count(rel) ? group_of[rel] : -1;
    const std::array<const RetrievalResult*, 3> res = {&rows[i].baseline, &rows[i].aca, &rows[i].supervised};
    for (std::size_t arm = 0; arm < 3; ++arm) {
      csv << ds.relation(rel).name << ',' << arm_names[arm] << ',' << num(res[arm]->precision) << ',' << res[arm]->k << ','
          << to_string(rcfg.cutoff) << ',' << (g >= 0 ? "G" + std::to_string(g + 1) : "") << '\n';
      if (g >= 0) {
        cell[arm][static_cast<std::size_t>(g)].first += res[arm]->precision;
        cell[arm][static_cast<std::size_t>(g)].second++;
      }
    }
  }
  json table = json::object();
  for (std::size_t arm = 0; arm < 3; ++arm) {
    json row = json::object();
    for (std::size_t g = 0; g < 3; ++g) {
      const auto [s, n] = cell[arm][g];
      row["G" + std::to_string(g + 1)] = n == 0 ? json(nullptr) : json(s / n);
    }
    table[arm_names[arm]] = std::move(row);
  }
  json sup_all = json::object();
  for (const auto& r : ds.relations) sup_all[r.name] = retrieval_precision(r.id, ds, sup.model, rcfg).precision;
  report["table"] = std::move(table);
  report["supervised_by_relation"] = std::move(sup_all);
  write_atomic(archive_dir / "retrieval.csv", csv.str());
  write_atomic(archive_dir / "retrieval.json", report.dump(1) + "\n");
  return report;
}

json cmd_rep_dump(const fs::path& archive_dir, const std::string& rel_a, const std::string& rel_b, const std::string& arm) {
  const auto a = load_archive(archive_dir);
  const auto cfg = archive_experiment(a);
  const auto& ds = a.dataset;
  auto id_of = [&](const std::string& name) {
    auto r = ds.find_relation(name);
    if (!r) throw DataError("unknown relation '" + name + "'");
    return *r;
  };
  const RelId ra = id_of(rel_a), rb = id_of(rel_b);
  const auto runs = a.arm(arm);
  if (runs.empty()) throw DataError("archive has no runs for arm '" + arm + "'");
  const auto& run = *runs.front();
  const auto tc = train_config_from_json(run.log.config);
  const auto stream = stream_for_seed(ds, cfg.k, run.seed);

  int intro_a = -1, intro_b = -1;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const auto& ids = stream.tasks[t].relation_ids;
    if (std::count(ids.begin(), ids.end(), ra)) intro_a = static_cast<int>(t);
    if (std::count(ids.begin(), ids.end(), rb)) intro_b = static_cast<int>(t);
  }
  if (intro_a < 0 || intro_b < 0) throw DataError("relation pair not seen in the archived runs");
  const int c1 = std::min(intro_a, intro_b), c2 = std::max(intro_a, intro_b);

  std::vector<const Instance*> items = ds.select(Split::test, ra);
  for (const Instance* x : ds.select(Split::test, rb)) items.push_back(x);

  std::ostringstream csv;
  int width = 0;
  std::vector<std::string> lines;
  StreamObserver obs;
  obs.after_task = [&](int t, const ModelState& model, const MemoryBank&) {
    if (t != c1 && t != c2) return;
    for (int pass = 0; pass < (c1 == c2 ? 2 : 1); ++pass) {
      const std::string label = "after_task_" + std::to_string(t) + (pass == 1 ? "_b" : "");
      for (const Instance* x : items) {
        const auto h = encode(model.encoder, model.vocab, *x);
        width = static_cast<int>(h.size());
        std::ostringstream line;
        line << x->id << ',' << ds.relation(x->relation).name << ',' << label;
        char buf[40];
        for (double v : h) {
          std::snprintf(buf, sizeof buf, ",%.17g", v);
          line << buf;
        }
        lines.push_back(line.str());
      }
    }
  };
  const auto log = run_stream(ds, stream, tc, obs);
  if (!(log == run.log)) std::cerr << "warning: re-run does not reproduce the archived log for arm " << arm << "\n";

  csv << "instance_id,relation,checkpoint";
  for (int i = 1; i <= width; ++i) csv << ",h_" << i;
  csv << '\n';
  for (const auto& l : lines) csv << l << '\n';
  const auto out = archive_dir / ("rep_dump_" + rel_a + "_" + rel_b + ".csv");
  write_atomic(out, csv.str());
  return {{"command", "rep-dump"}, {"file", out.filename().string()}, {"rows", lines.size()},
          {"checkpoints", {c1, c2}}, {"arm", arm}, {"seed", run.seed}};
}

}  // namespace cre
