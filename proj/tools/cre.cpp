// Command-line front end. Exit codes: 0 ok, 1 config error, 2 data error, 3 runtime failure.
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cre/errors.hpp"
#include "cre/harness.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cre::ConfigError("bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw cre::ConfigError("--seeds needs at least one seed");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual relation extraction workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds, aca, ablate, archive, relations, sizes, arm = "baseline";
  int jobs = 0, memory_size = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seeds", seeds, "comma-separated sequence seeds");
    sub->add_option("--jobs", jobs, "worker threads");
    sub->add_option("--aca", aca, "on | off | paired");
    sub->add_option("--ablate", ablate, "none | no_hybrid | no_reversed | no_both");
    sub->add_option("--memory-size", memory_size, "memory slots per relation");
  };

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic corpus");
  gen->add_option("--config", config_path, "synth config, or an experiment config with a synth entry")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* run = app.add_subcommand("run", "baseline and/or ACA runs over all seeds");
  add_common(run);
  auto* abl = app.add_subcommand("ablate", "full ACA, no_hybrid, no_reversed and none arms");
  add_common(abl);
  auto* mem = app.add_subcommand("memory-sweep", "paired runs at several memory sizes");
  add_common(mem);
  mem->add_option("--sizes", sizes, "comma-separated memory sizes (overrides memory_sizes)");

  auto* ana = app.add_subcommand("analyze", "forgetting, similarity and bad-case reports for an archive");
  ana->add_option("archive", archive, "archive directory")->required();
  auto* ret = app.add_subcommand("retrieval", "retrieval test for forgetting relations of an archive");
  ret->add_option("archive", archive, "archive directory")->required();
  ret->add_option("--config", config_path, "retrieval settings (JSON with threshold, m, cutoff, k)");
  auto* rep = app.add_subcommand("rep-dump", "dump encodings of two relations at two checkpoints");
  rep->add_option("archive", archive, "archive directory")->required();
  rep->add_option("--relations", relations, "two relation names, comma-separated")->required();
  rep->add_option("--arm", arm, "which arm to re-run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto experiment = [&] {
      auto cfg = cre::load_experiment_config(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (!seeds.empty()) cfg.seeds = parse_seeds(seeds);
      if (jobs > 0) cfg.jobs = jobs;
      if (!aca.empty()) cfg.aca = cre::parse_aca_mode(aca);
      if (!ablate.empty()) cfg.train.ablate = cre::parse_ablation(ablate);
      if (memory_size > 0) cfg.train.memory_size = memory_size;
      if (!sizes.empty()) {
        cfg.memory_sizes.clear();
        for (auto s : parse_seeds(sizes)) cfg.memory_sizes.push_back(static_cast<int>(s));
      }
      cfg.validate();
      return cfg;
    };

    nlohmann::json result;
    if (*gen) {
      std::ifstream in(config_path);
      if (!in) throw cre::ConfigError("cannot open config " + config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw cre::ConfigError(std::string("config: ") + e.what());
      }
      result = cre::cmd_gen_synth(cre::synth_config_from_json(j.contains("synth") ? j.at("synth") : j), out_dir);
    } else if (*run) {
      result = cre::cmd_run(experiment());
    } else if (*abl) {
      result = cre::cmd_ablate(experiment());
    } else if (*mem) {
      result = cre::cmd_memory_sweep(experiment());
    } else if (*ana) {
      result = cre::cmd_analyze(archive);
    } else if (*ret) {
      std::optional<cre::RetrievalConfig> rc;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw cre::ConfigError("cannot open config " + config_path);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
          throw cre::ConfigError(std::string("config: ") + e.what());
        }
        rc = cre::retrieval_config_from_json(j);
      }
      result = cre::cmd_retrieval(archive, rc);
    } else if (*rep) {
      const auto comma = relations.find(',');
      if (comma == std::string::npos) throw cre::ConfigError("--relations expects two names separated by a comma");
      result = cre::cmd_rep_dump(archive, relations.substr(0, comma), relations.substr(comma + 1), arm);
    }
    std::cout << result.dump(1) << '\n';
    return 0;
  } catch (const cre::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const cre::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 3;
  }
}
