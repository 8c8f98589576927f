#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cre/augment.hpp"
#include "cre/corpus.hpp"
#include "cre/model.hpp"
#include "cre/trajectory.hpp"
#include "json.hpp"

namespace cre {

/// Which augmentations are switched off when ACA is enabled.
enum class Ablation { none, no_hybrid, no_reversed, no_both };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

struct TrainConfig {
  int epochs_initial = 20;
  int epochs_replay = 10;
  double lr = 0.1;
  int batch_size = 16;
  int memory_size = 10;
  bool aca_enabled = false;
  Ablation ablate = Ablation::none;
  std::uint64_t seed = 0;

  double momentum = 0.0;
  double weight_decay = 0.0;
  /// Epochs of the joint-training upper bound; 0 means epochs_initial.
  int epochs_supervised = 0;
  ModelConfig model;
  /// Record per-step wall time. Off by default so logs are bit-reproducible.
  bool record_wall_time = false;

  void validate() const;
  AugmentOptions augment_options() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Per-relation replay store. Entries are frozen once written.
struct MemoryBank {
  std::map<RelId, std::vector<const Instance*>> entries;

  std::size_t total() const;
};

/// Featurizes instances once per model vocabulary.
class FeatureCache {
 public:
  FeatureCache(const Vocab& vocab, int context_window) : vocab_(&vocab), window_(context_window) {}
  const Featurized& get(const Instance& x);

 private:
  const Vocab* vocab_;
  int window_;
  std::unordered_map<const Instance*, Featurized> cache_;
};

/// Everything one continual run needs besides the model and memory.
struct TrainContext {
  const Dataset* dataset = nullptr;
  SymmetricRegistry registry;
  TrainConfig config;
  /// Synthetic class ids start here (one past the largest real relation id).
  int first_synth_id = 0;

  static TrainContext make(const Dataset& ds, const TrainConfig& cfg);
};

/// Vocabulary over the dataset's training split.
Vocab training_vocab(const Dataset& ds);

/// Mean loss per epoch of a plain minibatch SGD loop with seeded shuffling.
std::vector<double> train_epochs(ModelState& model, std::span<const Example> examples, int epochs,
                                 const TrainConfig& cfg, std::uint64_t seed);

struct InitialTrainingInfo {
  std::vector<int> synth_ids;
  int peak_classes = 0;      // registered classes during the stage
  std::size_t n_examples = 0;
};

/// Expands the head for the task's relations (plus augmented classes when ACA
/// is on), trains on the task's data only, then drops the synthetic classes.
InitialTrainingInfo initial_training(ModelState& model, const Task& task, int task_index, const TrainContext& ctx,
                                     FeatureCache& features);

/// Stores, for each new relation, the `capacity` training instances whose
/// encodings are closest in cosine to the relation's mean encoding (ties by id).
void update_memory(MemoryBank& memory, const Task& task, const ModelState& model, int capacity,
                   FeatureCache& features);

/// Trains on every memory instance. Returns the mean loss of each epoch.
std::vector<double> memory_replay(ModelState& model, const MemoryBank& memory, int task_index,
                                  const TrainContext& ctx, FeatureCache& features);

struct Evaluation {
  double accuracy = 0.0;
  std::map<RelId, double> f1;
  std::vector<int> predicted;
  std::vector<int> gold;
};

Evaluation evaluate(const ModelState& model, std::span<const Instance* const> instances, FeatureCache& features);

/// Hooks invoked during run_stream. Either may be empty.
struct StreamObserver {
  std::function<void(int task_index, const ModelState&, const InitialTrainingInfo&)> after_initial;
  std::function<void(int task_index, const ModelState&, const MemoryBank&)> after_task;
};

TrajectoryLog run_stream(const Dataset& ds, const TaskStream& stream, const TrainConfig& cfg,
                         const StreamObserver& observer = {});

struct SupervisedResult {
  ModelState model;
  double accuracy = 0.0;
  std::map<RelId, double> f1;
};

/// One model trained on every relation's training data jointly, scored on the full test split.
SupervisedResult supervised_upper_bound(const Dataset& ds, const TrainConfig& cfg);

}  // namespace cre
