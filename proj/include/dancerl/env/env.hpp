#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dancerl/core/params.hpp"
#include "dancerl/core/tensor.hpp"

namespace dancerl {

// Sizes of the synthetic music-conditioned environment plus the knobs of the
// procedural expert and the hidden ground-truth reward.
struct EnvConfig {
  int horizon = 24;         // decisions per episode
  int feature_dim = 12;     // music features per frame
  int codes_per_half = 12;  // codebook size of each body half
  int styles = 4;
  int beat_period = 4;

  double p_hold = 0.9;            // expert: off-beat hold probability
  double p_change_on_beat = 0.95;  // expert: on-beat change probability
  double p_style = 0.9;            // expert: on-beat change drawn from the style cluster

  double beat_change_bonus = 1.0;
  double offbeat_change_penalty = 0.5;
  double agreement_bonus = 0.25;  // upper and lower codes in the same cluster
  double style_bonus = 0.25;      // ... and that cluster is the track's style

  void validate() const;
  int noise_channels() const { return feature_dim - 3 - styles; }
  int joint_actions() const { return codes_per_half * codes_per_half; }
};

// Feature channel layout of one frame.
inline constexpr int kBeatChannel = 0;
inline constexpr int kPhaseSinChannel = 1;
inline constexpr int kPhaseCosChannel = 2;
inline constexpr int kStyleChannel0 = 3;

struct MusicTrack {
  int length = 0;
  int beat_period = 0;
  int style = 0;
  std::uint64_t seed = 0;
  Tensor features;  // [length x feature_dim], values in [-1, 1]
  std::vector<double> initial;  // m_init
  std::vector<int> beat_frames;

  int feature_dim() const { return static_cast<int>(features.cols()); }
  bool is_beat(int t) const { return beat_period > 0 && t >= 0 && t % beat_period == 0; }
  const double* frame(int t) const { return features.data() + static_cast<std::size_t>(t) * features.cols(); }
};

using TrackPtr = std::shared_ptr<const MusicTrack>;

MusicTrack generate_music(const EnvConfig& cfg, int length, int beat_period, std::uint64_t seed);
std::vector<TrackPtr> generate_tracks(const EnvConfig& cfg, std::size_t count, std::uint64_t seed);

struct PoseCode {
  int upper = 0;
  int lower = 0;

  int joint(int codes_per_half) const { return upper * codes_per_half + lower; }
  static PoseCode from_joint(int joint, int codes_per_half) {
    return {joint / codes_per_half, joint % codes_per_half};
  }
  friend bool operator==(const PoseCode&, const PoseCode&) = default;
};

inline constexpr PoseCode kRestPose{0, 0};

inline int style_cluster(int code, int styles) { return code % styles; }

enum class TokenKind : std::uint8_t { Music, Pose };

// Interleaved model input. Timestep 0 is the pre-roll pair (m_init, p_init);
// decision t uses timestep t + 1.
struct TokenSeq {
  std::vector<TokenKind> kind;
  std::vector<int> timestep;
  std::vector<const double*> music;  // valid for Music tokens
  std::vector<PoseCode> pose;        // valid for Pose tokens
  TrackPtr track;                    // keeps feature storage alive

  std::size_t size() const { return kind.size(); }
  void push_music(const double* features, int ts);
  void push_pose(PoseCode p, int ts);
};

class EnvState {
 public:
  EnvState() = default;
  EnvState(TrackPtr track, PoseCode initial_pose);

  const TrackPtr& track() const { return track_; }
  int time() const { return t_; }
  bool terminal() const { return terminal_; }
  // p_init followed by the decided poses so far.
  const std::vector<PoseCode>& poses() const { return poses_; }
  PoseCode previous_pose() const { return poses_.back(); }
  std::size_t token_count() const;
  TokenSeq tokens() const;

 private:
  friend class DanceEnv;
  TrackPtr track_;
  std::vector<PoseCode> poses_;
  int t_ = 0;
  bool terminal_ = false;
};

class DanceEnv {
 public:
  explicit DanceEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  EnvState reset(TrackPtr track) const;
  EnvState step(const EnvState& state, PoseCode action) const;

 private:
  EnvConfig cfg_;
};

struct Trajectory {
  TrackPtr track;
  std::vector<PoseCode> poses;  // p_init, p_0 .. p_{T-1}
  std::optional<double> noise;
  std::vector<double> behavior_logp;  // per decision, when recorded

  int decisions() const { return static_cast<int>(poses.size()) - 1; }
  PoseCode action(int t) const { return poses[static_cast<std::size_t>(t) + 1]; }
  PoseCode previous(int t) const { return poses[static_cast<std::size_t>(t)]; }
};

// Full interleaved sequence {m_init, p_init, m_0, p_0, ..., m_{T-1}, p_{T-1}}.
TokenSeq trajectory_tokens(const Trajectory& traj);
// Decisions [start, start + window) without the pre-roll pair: 2 * window tokens.
TokenSeq snippet_tokens(const Trajectory& traj, int start, int window);

PoseCode expert_action(const EnvConfig& cfg, const EnvState& state, Rng& rng);
Trajectory expert_rollout(const DanceEnv& env, TrackPtr track, Rng& rng);
Trajectory uniform_rollout(const DanceEnv& env, TrackPtr track, Rng& rng);

// Hidden quality of decision t (action cur after prev); never shown to learners.
double true_step_reward(const EnvConfig& cfg, const MusicTrack& track, int t, PoseCode prev,
                        PoseCode cur);
double true_return(const EnvConfig& cfg, const Trajectory& traj);

}  // namespace dancerl
