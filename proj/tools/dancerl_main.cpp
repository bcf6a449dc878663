// dancerl: command-line front end for the pipeline stages.
#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "dancerl/core/errors.hpp"
#include "dancerl/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace dancerl;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<int> instances;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_pipeline_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.instances) cfg.theorem.instances = *o.instances;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "pipeline config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "global seed, overrides the config");
  cmd->add_option("--out", o.out, "output directory for artifacts and reports")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ranked-demonstration reward learning and PPO fine-tuning on a synthetic dance task"};
  app.require_subcommand(1);
  Options o;

  struct Command {
    const char* name;
    const char* help;
    std::function<void(const PipelineConfig&, const fs::path&)> run;
  };
  const std::vector<Command> commands = {
      {"train-bc", "generate expert data and train the behaviour-cloning policy",
       [](const PipelineConfig& c, const fs::path& d) {
         write_run_manifest(c, d);
         stage_train_bc(c, d, std::cout);
       }},
      {"collect-demos", "roll out the BC policy under the noise schedule",
       [](const PipelineConfig& c, const fs::path& d) { stage_collect(c, d, std::cout); }},
      {"train-rm", "train the reward model on ranked snippet pairs",
       [](const PipelineConfig& c, const fs::path& d) { stage_train_rm(c, d, std::cout); }},
      {"train-rl", "fine-tune the BC policy with PPO against the learned (and hand-designed) reward",
       [](const PipelineConfig& c, const fs::path& d) { stage_train_rl(c, d, std::cout); }},
      {"verify-theorem", "check the extrapolation bound on random tabular MDPs",
       [](const PipelineConfig& c, const fs::path& d) {
         const auto r = stage_verify_theorem(c, d, std::cout);
         if (r.summary.bound_violations || r.summary.implication_violations)
           throw NumericError("theorem sweep found violations");
       }},
      {"evaluate", "compare expert, BC and RL policies on the test tracks",
       [](const PipelineConfig& c, const fs::path& d) { stage_evaluate(c, d, std::cout); }},
      {"pipeline", "run every stage in order",
       [](const PipelineConfig& c, const fs::path& d) { run_pipeline(c, d, std::cout); }},
  };

  std::vector<CLI::App*> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    if (std::string(c.name) == "verify-theorem" || std::string(c.name) == "pipeline")
      sub->add_option("--instances", o.instances, "number of random MDPs")->check(CLI::NonNegativeNumber);
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const PipelineConfig cfg = resolve(o);
      commands[i].run(cfg, o.out);
    } catch (const StageError& e) {
      std::cerr << "dancerl pipeline: " << e.what() << "\n";
      return 1;
    } catch (const ConfigError& e) {
      std::cerr << "dancerl " << commands[i].name << ": " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "dancerl " << commands[i].name << ": " << e.what() << "\n";
      return 1;
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << commands[i].name << " finished in " << s << " s, artifacts in " << o.out << "\n";
  }
  return 0;
}
