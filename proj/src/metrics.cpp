#include "cre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cre/errors.hpp"

namespace cre {

std::map<int, double> per_relation_f1(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("per_relation_f1: length mismatch");
  struct Counts {
    int tp = 0, fp = 0, fn = 0;
  };
  std::map<int, Counts> counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] == gold[i]) {
      counts[gold[i]].tp++;
    } else {
      counts[predicted[i]].fp++;
      counts[gold[i]].fn++;
    }
  }
  std::map<int, double> out;
  for (const auto& [cls, c] : counts) {
    const double p = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    out[cls] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (gold.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

double macro_f1(const std::map<int, double>& f1) {
  if (f1.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [_, v] : f1) s += v;
  return s / static_cast<double>(f1.size());
}

// ---------------------------------------------------------------------------

double performance_degradation(const RelationTrajectory& traj, int j) {
  const int offset = j - traj.intro_task;
  if (offset <= 0) throw std::invalid_argument("performance_degradation: j must come after the introducing task");
  if (offset >= static_cast<int>(traj.f1.size())) {
    throw std::invalid_argument("performance_degradation: trajectory has no score at task " + std::to_string(j));
  }
  const double best = *std::max_element(traj.f1.begin(), traj.f1.begin() + offset);
  return best - traj.f1[offset];
}

std::optional<double> forgetting_rate(const RelationTrajectory& traj, int final_task) {
  if (final_task < traj.intro_task) throw std::invalid_argument("forgetting_rate: final task precedes introduction");
  if (final_task == traj.intro_task) return std::nullopt;
  double sum = 0.0;
  for (int j = traj.intro_task + 1; j <= final_task; ++j) sum += performance_degradation(traj, j);
  return sum / static_cast<double>(final_task - traj.intro_task);
}

std::vector<FRRecord> forgetting_report(const TrajectoryLog& log) {
  std::vector<FRRecord> out;
  if (log.steps.empty()) return out;
  const int k = log.steps.back().task_index;
  for (const auto& traj : relation_trajectories(log)) {
    if (traj.intro_task == k) continue;
    FRRecord rec;
    rec.relation = traj.relation;
    rec.intro_task = traj.intro_task;
    double clamped = 0.0;
    for (int j = traj.intro_task + 1; j <= k; ++j) {
      const double pd = performance_degradation(traj, j);
      rec.pd.push_back(pd);
      clamped += std::max(0.0, pd);
    }
    rec.fr = *forgetting_rate(traj, k);
    rec.fr_clamped = clamped / static_cast<double>(rec.pd.size());
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::vector<RelId>> group_by_metric(const std::map<RelId, double>& values, int g) {
  if (g < 1) throw std::invalid_argument("group_by_metric: g must be at least 1");
  std::vector<std::pair<double, RelId>> sorted;
  for (const auto& [r, v] : values) sorted.emplace_back(v, r);
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::vector<RelId>> groups(static_cast<std::size_t>(g));
  const std::size_t n = sorted.size();
  const std::size_t base = n / g, extra = n % g;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(g); ++i) {
    const std::size_t size = base + (i < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) groups[i].push_back(sorted[pos++].second);
  }
  return groups;
}

// ---------------------------------------------------------------------------

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::vector<double> prototype(std::span<const std::vector<double>> encodings) {
  if (encodings.empty()) throw std::invalid_argument("prototype: empty instance set");
  std::vector<double> mean(encodings.front().size(), 0.0);
  for (const auto& e : encodings) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
  }
  for (auto& v : mean) v /= static_cast<double>(encodings.size());
  return mean;
}

std::vector<double> prototype(std::span<const Instance* const> instances, const ModelState& model) {
  std::vector<std::vector<double>> enc;
  enc.reserve(instances.size());
  for (const Instance* x : instances) enc.push_back(encode(model.encoder, model.vocab, *x));
  return prototype(enc);
}

std::string_view to_string(PrototypeSource s) {
  return s == PrototypeSource::trained_encoder ? "trained-encoder" : "ground-truth-analogs";
}

int SimilarityMatrix::index_of(RelId r) const {
  auto it = std::find(relations.begin(), relations.end(), r);
  if (it == relations.end()) throw std::invalid_argument("similarity matrix has no relation " + std::to_string(r));
  return static_cast<int>(it - relations.begin());
}

SimilarityMatrix similarity_matrix(std::span<const RelId> relations, std::span<const std::vector<double>> prototypes) {
  if (relations.size() != prototypes.size()) throw std::invalid_argument("similarity_matrix: size mismatch");
  const int n = static_cast<int>(relations.size());
  SimilarityMatrix s;
  s.relations.assign(relations.begin(), relations.end());
  s.values = Matrix(n, n);
  for (int a = 0; a < n; ++a) {
    s.values(a, a) = 1.0;
    for (int b = a + 1; b < n; ++b) {
      const double c = cosine(prototypes[a], prototypes[b]);
      s.values(a, b) = c;
      s.values(b, a) = c;
    }
  }
  return s;
}

SimilarityMatrix encoder_similarity(const Dataset& ds, const ModelState& model) {
  std::vector<RelId> ids;
  std::vector<std::vector<double>> protos;
  for (const auto& r : ds.relations) {
    ids.push_back(r.id);
    protos.push_back(prototype(ds.of_relation(r.id), model));
  }
  auto s = similarity_matrix(ids, protos);
  s.source = PrototypeSource::trained_encoder;
  return s;
}

SimilarityMatrix analog_similarity(const Dataset& ds) {
  const int n = static_cast<int>(ds.relations.size());
  SimilarityMatrix s;
  s.source = PrototypeSource::ground_truth_analogs;
  s.values = Matrix(n, n);
  for (const auto& r : ds.relations) {
    s.relations.push_back(r.id);
    s.values(r.id, r.id) = 1.0;
    if (r.analog_of) s.values(r.id, *r.analog_of) = 1.0;
  }
  return s;
}

MaxSimilarity max_similarity(RelId rel, const SimilarityMatrix& sim, int topk) {
  const int n = static_cast<int>(sim.relations.size());
  if (n < 2) throw std::invalid_argument("max_similarity: needs at least two relations");
  const int row = sim.index_of(rel);
  std::vector<std::pair<RelId, double>> others;
  for (int c = 0; c < n; ++c) {
    if (c != row) others.emplace_back(sim.relations[c], sim.values(row, c));
  }
  std::sort(others.begin(), others.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  MaxSimilarity out;
  out.value = others.front().second;
  out.argmax = others.front().first;
  others.resize(std::min<std::size_t>(others.size(), static_cast<std::size_t>(std::max(topk, 0))));
  out.top = std::move(others);
  return out;
}

// ---------------------------------------------------------------------------

BadCaseSummary bad_case_scan(std::span<const TrajectoryLog> logs, const SimilarityMatrix& sim, double drop, int topk) {
  if (!(drop > 0.0 && drop <= 1.0)) throw std::invalid_argument("bad_case_scan: drop must be in (0, 1]");
  std::map<RelId, std::set<RelId>> similar;
  for (RelId r : sim.relations) {
    for (const auto& [s, _] : max_similarity(r, sim, topk).top) similar[r].insert(s);
  }
  BadCaseSummary out;
  for (std::size_t run = 0; run < logs.size(); ++run) {
    const auto& log = logs[run];
    for (const auto& traj : relation_trajectories(log)) {
      double best = traj.f1.front();
      for (std::size_t t = 1; t < traj.f1.size(); ++t) {
        const double d = best - traj.f1[t];
        // Only the step where the score falls counts; a plateau below the
        // maximum is the same case carried forward.
        if (d > drop && traj.f1[t] < traj.f1[t - 1]) {
          const int step = traj.intro_task + static_cast<int>(t);
          const auto& arrived = log.steps[static_cast<std::size_t>(step)].task_relations;
          const auto& sims = similar[traj.relation];
          const bool present = std::any_of(arrived.begin(), arrived.end(), [&](RelId a) { return sims.count(a) > 0; });
          out.cases.push_back({static_cast<int>(run), traj.relation, step, d, present});
          out.cf++;
          out.sim += present;
        }
        best = std::max(best, traj.f1[t]);
      }
    }
  }
  return out;
}

std::vector<RelId> forgetting_relations(std::span<const TrajectoryLog> logs, double threshold) {
  std::set<RelId> out;
  for (const auto& log : logs) {
    for (const auto& traj : relation_trajectories(log)) {
      double best = traj.f1.front();
      for (std::size_t t = 1; t < traj.f1.size(); ++t) {
        if (best - traj.f1[t] > threshold) out.insert(traj.relation);
        best = std::max(best, traj.f1[t]);
      }
    }
  }
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------

std::vector<int> rank_by_cosine(std::span<const double> query, std::span<const std::vector<double>> candidates) {
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) score[i] = cosine(query, candidates[i]);
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

double precision_at_k(std::span<const int> ranked_labels, int target, int k) {
  if (k <= 0) throw std::invalid_argument("precision_at_k: k must be positive");
  const auto n = std::min<std::size_t>(ranked_labels.size(), static_cast<std::size_t>(k));
  if (n == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < n; ++i) hit += ranked_labels[i] == target;
  return static_cast<double>(hit) / static_cast<double>(n);
}

}  // namespace cre
