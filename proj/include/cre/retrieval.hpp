#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cre/corpus.hpp"
#include "cre/model.hpp"
#include "cre/trainer.hpp"
#include "json.hpp"

namespace cre {

enum class CutoffRule { fixed_k, per_relation };

std::string_view to_string(CutoffRule r);
CutoffRule parse_cutoff_rule(std::string_view s);

struct RetrievalConfig {
  double threshold = 0.1;  // drop that qualifies a relation
  int m = 7;               // distractor relations in the pseudo task
  CutoffRule cutoff = CutoffRule::fixed_k;
  int k = 100;

  void validate() const;
};

nlohmann::json to_json(const RetrievalConfig& c);
RetrievalConfig retrieval_config_from_json(const nlohmann::json& j);

struct RetrievalResult {
  RelId relation = 0;
  double precision = 0.0;
  int k = 0;
  std::vector<RelId> distractors;
};

/// Cutoff actually used for `rel`: cfg.k, or the relation's test-set size.
int retrieval_cutoff(RelId rel, const Dataset& ds, const RetrievalConfig& cfg);

/// Ranks the whole test split by cosine to `rel`'s training prototype under
/// `model` and returns precision at the configured cutoff.
RetrievalResult retrieval_precision(RelId rel, const Dataset& ds, const ModelState& model, const RetrievalConfig& cfg);

/// Trains a fresh model on {rel} plus cfg.m distractors drawn (seeded) from
/// `candidates`, then scores it with retrieval_precision. ACA is applied during
/// that training iff train_cfg.aca_enabled.
RetrievalResult retrieval_test(RelId rel, const Dataset& ds, const RetrievalConfig& cfg, const TrainConfig& train_cfg,
                               std::span<const RelId> candidates, std::uint64_t seed);

}  // namespace cre
