#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cre/corpus.hpp"
#include "cre/metrics.hpp"
#include "cre/retrieval.hpp"
#include "cre/synthetic.hpp"
#include "cre/trainer.hpp"
#include "cre/trajectory.hpp"
#include "json.hpp"

namespace cre {

inline constexpr std::string_view kToolVersion = "cre 1.0.0";

enum class AcaMode { off, on, paired };

std::string_view to_string(AcaMode m);
AcaMode parse_aca_mode(std::string_view s);

/// One experiment. The JSON form is a single flat object whose keys are the
/// field names below, with the TrainConfig keys inlined and the retrieval
/// settings prefixed "retrieval_". Only `synth` nests (a SynthConfig object).
struct ExperimentConfig {
  std::optional<SynthConfig> synth;
  std::filesystem::path instances, relations, splits;  // used when synth is absent

  int k = 10;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  TrainConfig train;
  AcaMode aca = AcaMode::paired;

  bool fr_groups = true;
  bool bad_cases = true;
  bool retrieval = true;
  bool ms_groups = true;
  bool rep_dump = false;

  std::filesystem::path output_dir = "out";
  std::vector<int> memory_sizes = {5, 10, 20};
  RetrievalConfig retrieval_cfg;
  PrototypeSource ms_source = PrototypeSource::trained_encoder;
  double bad_case_drop = 0.10;
  int bad_case_topk = 5;
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Relative dataset paths are resolved against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Builds (or loads) the configured corpus.
Dataset load_experiment_dataset(const ExperimentConfig& cfg);

/// Task permutation used for a given sequence seed.
TaskStream stream_for_seed(const Dataset& ds, int k, std::uint64_t seed);

struct RunRecord {
  std::uint64_t seed = 0;
  std::string arm;
  TrajectoryLog log;
};

/// Everything persisted under an output directory.
struct RunArchive {
  std::filesystem::path dir;
  nlohmann::json config;  // config echo; re-running it reproduces the logs
  std::string tool_version;
  std::uint64_t corpus_hash = 0;
  Dataset dataset;
  std::vector<RunRecord> runs;  // sorted by (arm, seed)

  /// Runs of one arm in seed order.
  std::vector<const RunRecord*> arm(std::string_view name) const;
  std::vector<std::string> arms() const;
};

RunArchive load_archive(const std::filesystem::path& dir);

/// Mean / min / max over seeds of the per-step accuracy.
struct ArmCurve {
  std::string arm;
  std::vector<double> mean, min, max;
  std::vector<double> final_per_seed;
};

ArmCurve accuracy_curve(const std::string& arm, std::span<const RunRecord* const> runs);

/// One arm of an experiment: its name and the training config it runs with.
struct ArmSpec {
  std::string name;
  TrainConfig train;
};

/// Runs every (seed, arm) pair on a bounded worker pool, persists each log
/// atomically under <out>/logs and merges the runs into <out>/archive.json.
std::vector<RunRecord> execute_arms(const ExperimentConfig& cfg, const Dataset& ds, const std::vector<ArmSpec>& arms);

// Commands. Each writes its reports into cfg.output_dir (or the archive dir)
// and returns the JSON summary it wrote.

nlohmann::json cmd_gen_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir);
nlohmann::json cmd_run(const ExperimentConfig& cfg);
nlohmann::json cmd_ablate(const ExperimentConfig& cfg);
nlohmann::json cmd_memory_sweep(const ExperimentConfig& cfg);
nlohmann::json cmd_analyze(const std::filesystem::path& archive_dir);
nlohmann::json cmd_retrieval(const std::filesystem::path& archive_dir, const std::optional<RetrievalConfig>& override_cfg = {});
/// Encodings of both relations' test instances after the task introducing the
/// earlier relation and after the task introducing the later one.
nlohmann::json cmd_rep_dump(const std::filesystem::path& archive_dir, const std::string& rel_a, const std::string& rel_b,
                            const std::string& arm = "baseline");

/// Writes `text` to `path` via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cre
