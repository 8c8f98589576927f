#include "cre/trajectory.hpp"

#include <fstream>

#include "cre/errors.hpp"

namespace cre {

using nlohmann::json;

std::optional<RelationTrajectory> relation_trajectory(const TrajectoryLog& log, RelId rel) {
  std::optional<RelationTrajectory> out;
  for (const auto& step : log.steps) {
    auto it = step.f1.find(rel);
    if (it == step.f1.end()) {
      if (out) throw DataError("relation " + std::to_string(rel) + " disappears from the trajectory");
      continue;
    }
    if (!out) out = RelationTrajectory{rel, step.task_index, {}};
    out->f1.push_back(it->second);
  }
  return out;
}

std::vector<RelationTrajectory> relation_trajectories(const TrajectoryLog& log) {
  std::vector<RelationTrajectory> out;
  if (log.steps.empty()) return out;
  for (const auto& [rel, f1] : log.steps.back().f1) {
    if (auto t = relation_trajectory(log, rel)) out.push_back(std::move(*t));
  }
  return out;
}

json to_json(const TrajectoryLog& log, const Dataset& ds) {
  json steps = json::array();
  auto names = [&](const std::vector<RelId>& ids) {
    json a = json::array();
    for (RelId r : ids) a.push_back(ds.relation(r).name);
    return a;
  };
  for (const auto& s : log.steps) {
    json f1 = json::object();
    for (const auto& [rel, v] : s.f1) f1[ds.relation(rel).name] = v;
    steps.push_back({{"task_index", s.task_index},
                     {"accuracy", s.accuracy},
                     {"per_relation_f1", std::move(f1)},
                     {"seen_relations", names(s.seen_relations)},
                     {"task_relations", names(s.task_relations)},
                     {"wall_ms", s.wall_ms}});
  }
  return {{"config", log.config}, {"steps", std::move(steps)}};
}

TrajectoryLog trajectory_from_json(const json& j, const Dataset& ds) {
  auto id_of = [&](const std::string& name) {
    auto r = ds.find_relation(name);
    if (!r) throw DataError("trajectory names unknown relation '" + name + "'");
    return *r;
  };
  auto ids = [&](const json& a) {
    std::vector<RelId> out;
    for (const auto& n : a) out.push_back(id_of(n.get<std::string>()));
    return out;
  };
  try {
    TrajectoryLog log;
    log.config = j.at("config");
    for (const auto& s : j.at("steps")) {
      TrajectoryStep step;
      step.task_index = s.at("task_index").get<int>();
      step.accuracy = s.at("accuracy").get<double>();
      for (const auto& [name, v] : s.at("per_relation_f1").items()) step.f1[id_of(name)] = v.get<double>();
      step.seen_relations = ids(s.at("seen_relations"));
      step.task_relations = ids(s.value("task_relations", json::array()));
      step.wall_ms = s.value("wall_ms", 0.0);
      log.steps.push_back(std::move(step));
    }
    return log;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed trajectory log: ") + e.what());
  }
}

void write_trajectory(const TrajectoryLog& log, const Dataset& ds, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << to_json(log, ds).dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

TrajectoryLog read_trajectory(const std::filesystem::path& path, const Dataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("parse error in " + path.string() + ": " + e.what());
  }
  return trajectory_from_json(j, ds);
}

}  // namespace cre
