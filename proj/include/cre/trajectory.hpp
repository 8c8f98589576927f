#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "cre/corpus.hpp"
#include "json.hpp"

namespace cre {

/// Evaluation snapshot recorded after one task of a stream.
struct TrajectoryStep {
  int task_index = 0;  // 0-based
  double accuracy = 0.0;
  std::map<RelId, double> f1;          // every relation seen through this task
  std::vector<RelId> seen_relations;   // ascending
  std::vector<RelId> task_relations;   // relations introduced by this task
  double wall_ms = 0.0;

  bool operator==(const TrajectoryStep&) const = default;
};

struct TrajectoryLog {
  nlohmann::json config;
  std::vector<TrajectoryStep> steps;

  bool operator==(const TrajectoryLog&) const = default;
};

/// F1 history of one relation starting at the step that introduced it.
struct RelationTrajectory {
  RelId relation = 0;
  int intro_task = 0;
  std::vector<double> f1;  // f1[t] is the score after task intro_task + t
};

/// Trajectory of `rel` in `log`, or nullopt if the relation never appears.
std::optional<RelationTrajectory> relation_trajectory(const TrajectoryLog& log, RelId rel);
std::vector<RelationTrajectory> relation_trajectories(const TrajectoryLog& log);

nlohmann::json to_json(const TrajectoryLog& log, const Dataset& ds);
TrajectoryLog trajectory_from_json(const nlohmann::json& j, const Dataset& ds);

void write_trajectory(const TrajectoryLog& log, const Dataset& ds, const std::filesystem::path& path);
TrajectoryLog read_trajectory(const std::filesystem::path& path, const Dataset& ds);

}  // namespace cre
