#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dancerl/metrics/metrics.hpp"
#include "dancerl/pipeline/config.hpp"
#include "dancerl/theory/tabular.hpp"

// Pipeline stages. Every stage reads its inputs from and writes its artifacts
// to one output directory; file names are fixed (namespace artifact).
namespace dancerl {

namespace artifact {
inline constexpr const char* kRunManifest = "run.json";
inline constexpr const char* kPolicy = "bc.ckpt";
inline constexpr const char* kBCLoss = "bc_loss.csv";
inline constexpr const char* kBCReport = "bc_report.csv";
inline constexpr const char* kDemos = "demos.bin";
inline constexpr const char* kDemosHeldout = "demos_heldout.bin";
inline constexpr const char* kDemoSummary = "demos_summary.csv";
inline constexpr const char* kReward = "rm.ckpt";
inline constexpr const char* kRMLog = "rm_log.csv";
inline constexpr const char* kRMReport = "rm_report.csv";
inline constexpr const char* kRL = "rl.ckpt";
inline constexpr const char* kRLLog = "rl_log.csv";
inline constexpr const char* kRLHand = "rl_hand.ckpt";
inline constexpr const char* kRLHandLog = "rl_hand_log.csv";
inline constexpr const char* kEvaluation = "evaluation.csv";
inline constexpr const char* kTheoremSweep = "theorem_sweep.csv";
inline constexpr const char* kTheoremSummary = "theorem_summary.csv";
}  // namespace artifact

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct TrackSets {
  std::vector<TrackPtr> train;
  std::vector<TrackPtr> demos;
  std::vector<TrackPtr> test;
};
TrackSets make_tracks(const PipelineConfig& cfg);

struct LoadedPolicy {
  PolicyNet net;
  Parameters params;
};
struct LoadedReward {
  RewardNet net;
  Parameters params;
};
// Checkpoint loaders; a config digest mismatch is a CheckpointError.
LoadedPolicy load_policy(const PipelineConfig& cfg, const std::filesystem::path& path);
LoadedReward load_reward(const PipelineConfig& cfg, const std::filesystem::path& path);
RLInit load_actor_critic(const PipelineConfig& cfg, const LoadedPolicy& bc,
                         const std::filesystem::path& path);

struct BCStageResult {
  BCResult train;
  PoseAccuracy train_accuracy;
  PoseAccuracy test_accuracy;
};
BCStageResult stage_train_bc(const PipelineConfig& cfg, const std::filesystem::path& out,
                             std::ostream& log);

struct BucketSummary {
  double noise = 0.0;
  std::size_t count = 0;
  double mean_true_return = 0.0;
  double se = 0.0;
};
std::vector<BucketSummary> summarize_buckets(const EnvConfig& env, const RankedDemoSet& set);

struct CollectStageResult {
  std::vector<BucketSummary> buckets;
};
CollectStageResult stage_collect(const PipelineConfig& cfg, const std::filesystem::path& out,
                                 std::ostream& log);

struct RMStageResult {
  RMResult train;
  double seen_accuracy = 0.0;    // pairs from the training tracks
  double unseen_accuracy = 0.0;  // pairs from the held-out tracks
  double spearman = 0.0;         // u vs true return over the held-out trajectories
  std::size_t spearman_count = 0;
};
RMStageResult stage_train_rm(const PipelineConfig& cfg, const std::filesystem::path& out,
                             std::ostream& log);

struct RLStageResult {
  RLResult learned;
  std::optional<RLResult> hand;
};
RLStageResult stage_train_rl(const PipelineConfig& cfg, const std::filesystem::path& out,
                             std::ostream& log);

struct PolicyEvaluation {
  std::string policy;
  EvalSummary summary;
  double learned_reward = 0.0;  // mean u over the episodes
  double hand_reward = 0.0;     // mean r_b + gamma_c r_c return
};
struct EvalStageResult {
  std::vector<PolicyEvaluation> policies;
  const PolicyEvaluation& at(const std::string& name) const;
};
EvalStageResult stage_evaluate(const PipelineConfig& cfg, const std::filesystem::path& out,
                               std::ostream& log);

struct TheoremStageResult {
  tabular::SweepSummary summary;
};
TheoremStageResult stage_verify_theorem(const PipelineConfig& cfg, const std::filesystem::path& out,
                                        std::ostream& log);

struct PipelineResult {
  BCStageResult bc;
  CollectStageResult demos;
  RMStageResult rm;
  RLStageResult rl;
  EvalStageResult eval;
  TheoremStageResult theorem;
};

// Runs every stage in order; the first failure is rethrown as a StageError.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out,
                            std::ostream& log);

// Writes run.json (full config, digests and seed) into `out`.
void write_run_manifest(const PipelineConfig& cfg, const std::filesystem::path& out);

// Expert episode i runs on tracks[i % size] with seed derive_seed(seed, i).
std::vector<Trajectory> expert_episodes(const EnvConfig& env, const std::vector<TrackPtr>& tracks,
                                        std::size_t count, std::uint64_t seed);

}  // namespace dancerl
