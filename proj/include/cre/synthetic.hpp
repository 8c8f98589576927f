#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cre/corpus.hpp"
#include "json.hpp"

namespace cre {

/// How the two members of an analog pair differ.
enum class AnalogMode {
  argument_order,       // same templates, head and tail slots exchanged
  discriminative_token, // same templates, one cue token differs
  mixed,                // alternate between the two, pair by pair
};

std::string_view to_string(AnalogMode m);
AnalogMode parse_analog_mode(std::string_view s);

/// Generator settings for the shortcut-planting corpus.
struct SynthConfig {
  int n_relations = 40;
  int n_analog_pairs = 10;
  int instances_per_relation = 60;
  /// Probability that an instance's entities come from its relation's type signature.
  double shortcut_strength = 0.95;
  /// Number of entity types.
  int entity_type_vocab_size = 10;
  int template_length_min = 8;
  int template_length_max = 12;
  double symmetric_fraction = 0.1;
  std::uint64_t seed = 7;

  AnalogMode analog_mode = AnalogMode::mixed;
  int entity_tokens_per_type = 15;
  int templates_per_relation = 3;
  int cue_words_per_relation = 4;
  int filler_vocab_size = 50;
  /// Per-token probability of replacing a template word with a random filler word.
  double context_noise = 0.2;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

/// Generated corpus plus the planted ground truth the tests check against.
struct SyntheticCorpus {
  Dataset dataset;
  /// Per relation: (head entity type, tail entity type).
  std::vector<std::pair<int, int>> signatures;
};

nlohmann::json to_json(const SynthConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
SynthConfig synth_config_from_json(const nlohmann::json& j);

SyntheticCorpus generate_synthetic_with_truth(const SynthConfig& cfg);
Dataset generate_synthetic(const SynthConfig& cfg);

/// Entity type encoded in a synthetic entity token ("e<type>_<k>"), if any.
std::optional<int> entity_type_of(std::string_view token);

}  // namespace cre
