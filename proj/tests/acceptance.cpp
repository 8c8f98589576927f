// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. The reference experiment path comes from
// CRE_REFERENCE_CONFIG (or argv[1]).

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "cre/augment.hpp"
#include "cre/harness.hpp"
#include "helpers.hpp"

using namespace cre;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

int failures = 0;

void criterion(int n, const std::string& name, double limit_s, const std::function<Result()>& body) {
  const auto t0 = Clock::now();
  Result r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double t = seconds_since(t0);
  const bool in_time = t < limit_s;
  const bool ok = r.pass && in_time;
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " [" << n << "] " << name << " (" << fmt(t, 3) << " s, limit " << limit_s
            << " s): " << r.detail << (in_time ? "" : " [over time limit]") << std::endl;
}

// ---- 1 ----
Result metric_oracle() {
  Rng rng(9001);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(10));
    const int intro = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    std::vector<double> full(static_cast<std::size_t>(k + 1));
    for (auto& v : full) v = rng.uniform();
    RelationTrajectory t{0, intro, {full.begin() + intro, full.end()}};
    for (int j = intro + 1; j <= k; ++j) {
      worst = std::max(worst, std::abs(performance_degradation(t, j) - testutil::oracle_pd(full, intro, j)));
    }
    worst = std::max(worst, std::abs(*forgetting_rate(t, k) - testutil::oracle_fr(full, intro, k)));
  }
  return {worst < 1e-12, "max abs error " + fmt(worst) + " (tol 1e-12, 100 trajectories)"};
}

// ---- 2 ----
Result gradients() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto f = testutil::random_grad_fixture(5000 + s);
    worst = std::max(worst, testutil::max_grad_rel_error(f.model, f.batch, 1e-5));
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " (tol 1e-4, eps 1e-5, 50 fixtures)"};
}

// ---- 3 ----
std::vector<std::string> slice(const Instance& x, Span s) { return {x.tokens.begin() + s.start, x.tokens.begin() + s.end}; }

bool contains_any(const std::vector<std::string>& hay, const std::vector<std::string>& needles) {
  for (const auto& n : needles)
    if (std::find(hay.begin(), hay.end(), n) != hay.end()) return true;
  return false;
}

Result augmentation() {
  Rng rng(31337);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto xi = testutil::random_instance(rng, "i" + std::to_string(trial));
    auto xj = testutil::random_instance(rng, "j" + std::to_string(trial));
    auto h = hybrid_instance(xi, xj, 7);
    bool ok = validate_instance(h).empty();
    ok = ok && slice(h, h.head) == slice(xi, xi.head) && !contains_any(h.tokens, slice(xi, xi.tail));
    ok = ok && slice(h, h.tail) == slice(xj, xj.tail) && !contains_any(h.tokens, slice(xj, xj.head));
    auto r = reversed_instance(xi, 8);
    ok = ok && validate_instance(r).empty();
    auto rr = reversed_instance(r, 9);
    ok = ok && rr.head == xi.head && rr.tail == xi.tail && rr.tokens == xi.tokens;
    if (!ok) ++bad;
  }

  // augmented class counts: <= N + N/2, equal when all asymmetric and N even
  int count_bad = 0;
  for (int n = 1; n <= 8; ++n) {
    auto ds = testutil::toy_dataset(n, 6, static_cast<std::uint64_t>(n));
    Task task;
    for (int r = 0; r < n; ++r) task.relation_ids.push_back(r);
    for (const auto* x : ds.select(Split::train)) task.train.push_back(x);
    SymmetricRegistry asym = SymmetricRegistry::from_dataset(ds);
    SymmetricRegistry some;
    for (int r = 0; r < n; r += 3) some.set("r" + std::to_string(r), true);
    for (const auto* reg : {&asym, &some}) {
      const auto cls = build_augmented_classes(task, ds, *reg, 77, n);
      for (const auto& c : cls)
        for (const auto& x : c.instances)
          if (!validate_instance(x).empty()) ++count_bad;
      if (static_cast<int>(cls.size()) > n + n / 2) ++count_bad;
      const int hybrids =
          static_cast<int>(std::count_if(cls.begin(), cls.end(), [](const auto& c) { return c.kind == AugmentKind::hybrid; }));
      if (hybrids != n / 2) ++count_bad;
      if (reg == &asym && n % 2 == 0 && static_cast<int>(cls.size()) != n / 2 + n) ++count_bad;
    }
  }
  return {bad == 0 && count_bad == 0,
          std::to_string(bad) + "/1000 pair violations, " + std::to_string(count_bad) + " class-count violations"};
}

// ---- 4 ----
Result lifecycle() {
  SynthConfig sc;
  sc.n_relations = 12;
  sc.n_analog_pairs = 3;
  sc.instances_per_relation = 20;
  sc.seed = 4;
  const auto ds = generate_synthetic(sc);
  const auto stream = split_tasks(ds, 3, 11);
  int checks = 0, bad = 0;
  for (bool aca : {false, true}) {
    TrainConfig tc;
    tc.aca_enabled = aca;
    tc.epochs_initial = 3;
    tc.epochs_replay = 2;
    tc.model.embedding_dim = 16;
    tc.model.hidden_dim = 16;
    std::set<RelId> seen;
    StreamObserver obs;
    obs.after_initial = [&](int t, const ModelState& m, const InitialTrainingInfo&) {
      const auto& ids = stream.tasks[static_cast<std::size_t>(t)].relation_ids;
      seen.insert(ids.begin(), ids.end());
      std::set<int> have(m.head.classes.begin(), m.head.classes.end());
      ++checks;
      if (have != std::set<int>(seen.begin(), seen.end()) || have.size() != m.head.classes.size()) ++bad;
      std::vector<int> extra{100000, 100001, 100002};
      auto grown = expand_classes(m.head, extra, tc.model.init_scale, 99);
      ++checks;
      if (!(remove_classes(grown, extra) == m.head)) ++bad;
    };
    run_stream(ds, stream, tc, obs);
  }
  return {bad == 0 && checks == 12, std::to_string(checks - bad) + "/" + std::to_string(checks) +
                                        " head checks held (registered = seen, expand+remove identity)"};
}

// ---- 5 ----
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = testutil::read_text(e.path());
  }
  return out;
}

Result determinism(const json& reference, const fs::path& scratch) {
  json j = reference;
  j["seeds"] = {0, 1};
  j["aca"] = "paired";
  j["output_dir"] = (scratch / "det_a").string();
  const auto ca = experiment_config_from_json(j);
  j["output_dir"] = (scratch / "det_b").string();
  const auto cb = experiment_config_from_json(j);

  const auto t0 = Clock::now();
  cmd_run(ca);
  const double first = seconds_since(t0);
  cmd_run(cb);
  const double both = seconds_since(t0);

  const auto a = tree_bytes(ca.output_dir), b = tree_bytes(cb.output_dir);
  int differ = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differ;
  }
  if (a.size() != b.size()) ++differ;
  const auto la = load_archive(ca.output_dir), lb = load_archive(cb.output_dir);
  bool logs_equal = la.runs.size() == lb.runs.size() && la.runs.size() == 4;
  for (std::size_t i = 0; logs_equal && i < la.runs.size(); ++i) logs_equal = la.runs[i].log == lb.runs[i].log;
  // 10% slack on the 2x budget for timer noise
  const bool timing = both <= 2.2 * first;
  return {differ == 0 && logs_equal && timing,
          std::to_string(a.size()) + " files, " + std::to_string(differ) + " differ; logs " +
              (logs_equal ? "identical" : "DIFFER") + "; two runs " + fmt(both, 3) + " s vs one " + fmt(first, 3) +
              " s (<= 2.2x)"};
}

// ---- 6..9 share one reference experiment ----
struct Reference {
  ExperimentConfig cfg;
  RunArchive archive;
  json analysis, retrieval;
  double run_s = 0, ablate_s = 0, analyze_s = 0, retrieval_s = 0;
};

Result phenomenon(Reference& ref) {
  auto t0 = Clock::now();
  cmd_run(ref.cfg);
  ref.run_s = seconds_since(t0);
  t0 = Clock::now();
  ref.analysis = cmd_analyze(ref.cfg.output_dir);
  ref.analyze_s = seconds_since(t0);
  ref.archive = load_archive(ref.cfg.output_dir);
  const auto& ds = ref.archive.dataset;

  double fa = 0, fn = 0;
  int na = 0, nn = 0;
  for (const auto* run : ref.archive.arm("baseline")) {
    for (const auto& rec : forgetting_report(run->log)) {
      if (ds.relation(rec.relation).analog_of) {
        fa += rec.fr;
        ++na;
      } else {
        fn += rec.fr;
        ++nn;
      }
    }
  }
  fa /= std::max(na, 1);
  fn /= std::max(nn, 1);
  const auto& bc = ref.analysis["bad_cases"]["arms"]["baseline"];
  const double ratio = bc["ratio_pct"].get<double>();
  return {na > 0 && nn > 0 && fa > fn && ratio >= 70.0,
          "baseline FR analog " + fmt(fa) + " vs non-analog " + fmt(fn) + "; bad cases with a top-5 similar arrival " +
              std::to_string(bc["SIM"].get<int>()) + "/" + std::to_string(bc["CF"].get<int>()) + " = " + fmt(ratio, 3) +
              "% (need >= 70%)"};
}

double final_mean(const RunArchive& a, const std::string& arm) {
  const auto runs = a.arm(arm);
  if (runs.empty()) throw std::runtime_error("no runs for arm " + arm);
  double s = 0;
  for (const auto* r : runs) s += r->log.steps.back().accuracy;
  return s / static_cast<double>(runs.size());
}

Result efficacy(Reference& ref) {
  auto t0 = Clock::now();
  cmd_ablate(ref.cfg);
  ref.ablate_s = seconds_since(t0);
  t0 = Clock::now();
  ref.retrieval = cmd_retrieval(ref.cfg.output_dir);
  ref.retrieval_s = seconds_since(t0);
  ref.archive = load_archive(ref.cfg.output_dir);

  const double base = final_mean(ref.archive, "baseline"), aca = final_mean(ref.archive, "aca");
  const double full = final_mean(ref.archive, "full"), nh = final_mean(ref.archive, "no_hybrid"),
               nr = final_mean(ref.archive, "no_reversed"), none = final_mean(ref.archive, "none");
  const bool order = full >= nh && full >= nr && nh >= none && nr >= none;

  bool retrieval_up = false;
  std::string g3 = "G3 n/a";
  if (ref.retrieval.contains("table")) {
    const auto& t = ref.retrieval["table"];
    const auto& b = t["baseline"]["G3"];
    const auto& a = t["aca"]["G3"];
    if (!b.is_null() && !a.is_null()) {
      retrieval_up = a.get<double>() > b.get<double>();
      g3 = "G3 retrieval " + fmt(b.get<double>()) + " -> " + fmt(a.get<double>());
    }
  }
  // the 20-minute budget covers both experiment commands and the retrieval test
  const double total = ref.run_s + ref.ablate_s + ref.retrieval_s;
  return {aca >= base && order && retrieval_up && total < 1200.0,
          "final acc baseline " + fmt(base) + " aca " + fmt(aca) + "; full " + fmt(full) + " no_hybrid " + fmt(nh) +
              " no_reversed " + fmt(nr) + " none " + fmt(none) + (order ? " (ordered)" : " (NOT ordered)") + "; " + g3 +
              "; run+ablate+retrieval " + fmt(total, 3) + " s"};
}

Result upper_bound(const Reference& ref) {
  const auto& ds = ref.archive.dataset;
  int bad = 0, compared = 0;
  double worst_gap = 1.0;
  for (std::uint64_t seed : ref.cfg.seeds) {
    TrainConfig tc = ref.cfg.train;
    tc.aca_enabled = false;
    tc.seed = seed;
    const double sup = supervised_upper_bound(ds, tc).accuracy;
    for (const auto& run : ref.archive.runs) {
      if (run.seed != seed) continue;
      ++compared;
      const double gap = sup - run.log.steps.back().accuracy;
      worst_gap = std::min(worst_gap, gap);
      if (gap < 0) ++bad;
    }
  }
  return {bad == 0 && compared > 0, std::to_string(compared - bad) + "/" + std::to_string(compared) +
                                        " continual runs at or below the supervised model; smallest margin " +
                                        fmt(worst_gap)};
}

Result retrieval_sanity(const Reference& ref) {
  const auto& ds = ref.archive.dataset;
  TrainConfig tc = ref.cfg.train;
  tc.aca_enabled = false;
  tc.seed = ref.cfg.seeds.front();
  const auto sup = supervised_upper_bound(ds, tc);
  double worst = 1.0, sum = 0.0;
  int separable = 0;
  bool in_range = true;
  for (const auto& r : ds.relations) {
    const double p = retrieval_precision(r.id, ds, sup.model, ref.cfg.retrieval_cfg).precision;
    in_range = in_range && p >= 0.0 && p <= 1.0;
    if (!r.analog_of) {
      ++separable;
      sum += p;
      worst = std::min(worst, p);
    }
  }
  if (ref.retrieval.contains("table")) {
    for (const auto& [arm, row] : ref.retrieval["table"].items())
      for (const auto& [g, v] : row.items())
        if (!v.is_null()) in_range = in_range && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
  }
  // the supervised row is a group mean, so the bar applies to the mean over separable relations
  const double mean = separable > 0 ? sum / separable : 0.0;
  return {separable > 0 && mean >= 0.95 && in_range,
          "mean supervised precision over " + std::to_string(separable) + " non-analog relations " + fmt(mean) +
              " (need >= 0.95), lowest " + fmt(worst) + "; all precisions in [0,1]: " + (in_range ? "yes" : "NO")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config_path = argc > 1 ? fs::path(argv[1]) : fs::path(CRE_REFERENCE_CONFIG);
  json reference;
  {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot read " << config_path << "\n";
      return 2;
    }
    reference = json::parse(in);
  }
  testutil::TempDir scratch;

  criterion(1, "metric oracle equivalence", 1.0, metric_oracle);
  criterion(2, "gradient correctness", 30.0, gradients);
  criterion(3, "augmentation properties", 10.0, augmentation);
  criterion(4, "classifier lifecycle", 60.0, lifecycle);
  criterion(5, "determinism", 1e9, [&] { return determinism(reference, scratch.path()); });

  Reference ref;
  json j = reference;
  j["output_dir"] = (scratch.path() / "reference").string();
  ref.cfg = experiment_config_from_json(j, config_path.parent_path());
  criterion(6, "forgetting phenomenon on the reference corpus", 600.0, [&] { return phenomenon(ref); });
  criterion(7, "ACA efficacy direction", 1200.0, [&] { return efficacy(ref); });
  criterion(8, "supervised upper bound", 300.0, [&] { return upper_bound(ref); });
  criterion(9, "retrieval sanity", 300.0, [&] { return retrieval_sanity(ref); });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
