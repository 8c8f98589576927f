#pragma once

#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cre/corpus.hpp"
#include "cre/model.hpp"
#include "cre/trajectory.hpp"

namespace cre {

// ---------------------------------------------------------------------------
// Classification scores

/// One-vs-rest F1 per class appearing in `gold` or `predicted`; 0 when P+R = 0.
std::map<int, double> per_relation_f1(std::span<const int> predicted, std::span<const int> gold);
double accuracy(std::span<const int> predicted, std::span<const int> gold);
/// Unweighted mean of the map's values; 0 for an empty map.
double macro_f1(const std::map<int, double>& f1);

// ---------------------------------------------------------------------------
// Forgetting

/// Drop at absolute task index j from the best score over tasks intro..j-1. Unclamped.
double performance_degradation(const RelationTrajectory& traj, int j);

/// Mean of the degradations for tasks intro+1..final_task; nullopt when the
/// relation was introduced at final_task.
std::optional<double> forgetting_rate(const RelationTrajectory& traj, int final_task);

struct FRRecord {
  RelId relation = 0;
  int intro_task = 0;
  std::vector<double> pd;  // tasks intro+1..k
  double fr = 0.0;
  /// Same mean with each degradation clamped at zero (display only).
  double fr_clamped = 0.0;
};

/// Records for every relation of the log's final step that has an FR.
std::vector<FRRecord> forgetting_report(const TrajectoryLog& log);

/// Sorts ascending (ties by id) and cuts into g contiguous groups whose sizes
/// differ by at most one; earlier groups take the remainder.
std::vector<std::vector<RelId>> group_by_metric(const std::map<RelId, double>& values, int g);

// ---------------------------------------------------------------------------
// Prototypes and similarity

double cosine(std::span<const double> a, std::span<const double> b);
/// Arithmetic mean of the given vectors.
std::vector<double> prototype(std::span<const std::vector<double>> encodings);
/// Mean encoding of `instances` under `model`'s encoder.
std::vector<double> prototype(std::span<const Instance* const> instances, const ModelState& model);

enum class PrototypeSource { trained_encoder, ground_truth_analogs };
std::string_view to_string(PrototypeSource s);

struct SimilarityMatrix {
  std::vector<RelId> relations;  // row/column order
  Matrix values;
  PrototypeSource source = PrototypeSource::trained_encoder;

  int index_of(RelId r) const;
  double at(RelId a, RelId b) const { return values(index_of(a), index_of(b)); }
};

/// Cosine similarities between relation prototypes; rows follow `relations`.
SimilarityMatrix similarity_matrix(std::span<const RelId> relations, std::span<const std::vector<double>> prototypes);

/// Prototype similarity under `model`, using every instance of each relation.
SimilarityMatrix encoder_similarity(const Dataset& ds, const ModelState& model);

/// 1 on the diagonal and between declared analog pairs, 0 elsewhere.
SimilarityMatrix analog_similarity(const Dataset& ds);

struct MaxSimilarity {
  double value = 0.0;
  RelId argmax = 0;
  std::vector<std::pair<RelId, double>> top;  // descending, ties by id
};

MaxSimilarity max_similarity(RelId rel, const SimilarityMatrix& sim, int topk = 3);

// ---------------------------------------------------------------------------
// Bad cases

struct BadCase {
  int run = 0;
  RelId relation = 0;
  int step = 0;
  double drop = 0.0;
  bool analog_present = false;
};

struct BadCaseSummary {
  int cf = 0;
  int sim = 0;
  std::vector<BadCase> cases;

  double sim_ratio() const { return cf == 0 ? 0.0 : static_cast<double>(sim) / cf; }
};

/// A (run, relation, step) is a bad case when the relation's F1 decreases at
/// that step and ends more than `drop` below its maximum over all earlier
/// steps; it counts towards #SIM when
/// that step's task introduces one of the relation's `topk` most similar relations.
BadCaseSummary bad_case_scan(std::span<const TrajectoryLog> logs, const SimilarityMatrix& sim, double drop = 0.10,
                             int topk = 5);

/// Relations with a drop greater than `threshold` in at least one run.
std::vector<RelId> forgetting_relations(std::span<const TrajectoryLog> logs, double threshold);

// ---------------------------------------------------------------------------
// Ranking

/// Indices of `candidates` by descending cosine to `query`; ties by index.
std::vector<int> rank_by_cosine(std::span<const double> query, std::span<const std::vector<double>> candidates);

/// Fraction of the first k ranked labels equal to `target`; k is capped at the list length.
double precision_at_k(std::span<const int> ranked_labels, int target, int k);

}  // namespace cre
