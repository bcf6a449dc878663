#include "dancerl/env/env.hpp"

#include <cmath>
#include <numbers>

#include "dancerl/core/errors.hpp"

namespace dancerl {

void EnvConfig::validate() const {
  if (horizon < 2) throw ConfigError("env.horizon must be >= 2");
  if (beat_period < 2) throw ConfigError("env.beat_period must be >= 2");
  if (styles < 1) throw ConfigError("env.styles must be >= 1");
  if (codes_per_half < 2) throw ConfigError("env.codes_per_half must be >= 2");
  if (codes_per_half < styles) throw ConfigError("env.codes_per_half must be >= env.styles");
  if (feature_dim < 3 + styles)
    throw ConfigError("env.feature_dim must be >= 3 + env.styles (beat, phase sin/cos, style one-hot)");
  for (double p : {p_hold, p_change_on_beat, p_style})
    if (p < 0.0 || p > 1.0) throw ConfigError("env expert probabilities must lie in [0, 1]");
}

namespace {
void fill_frame(const EnvConfig& cfg, int t, int beat_period, int style, Rng& rng, double* out) {
  const int bar = 4 * beat_period;
  const int pos = ((t % bar) + bar) % bar;
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(pos) / static_cast<double>(bar);
  out[kBeatChannel] = (t >= 0 && t % beat_period == 0) ? 1.0 : 0.0;
  out[kPhaseSinChannel] = std::sin(phase);
  out[kPhaseCosChannel] = std::cos(phase);
  for (int s = 0; s < cfg.styles; ++s) out[kStyleChannel0 + s] = (s == style) ? 1.0 : 0.0;
  std::uniform_real_distribution<double> noise(-0.5, 0.5);
  for (int c = kStyleChannel0 + cfg.styles; c < cfg.feature_dim; ++c) out[c] = noise(rng);
}
}  // namespace

MusicTrack generate_music(const EnvConfig& cfg, int length, int beat_period, std::uint64_t seed) {
  if (length < 2) throw ConfigError("generate_music: length must be >= 2");
  if (beat_period < 2) throw ConfigError("generate_music: beat_period must be >= 2");
  if (cfg.feature_dim < 3 + cfg.styles) throw ConfigError("generate_music: feature_dim too small");
  Rng rng(seed);
  MusicTrack track;
  track.length = length;
  track.beat_period = beat_period;
  track.seed = seed;
  track.style = static_cast<int>(std::uniform_int_distribution<int>(0, cfg.styles - 1)(rng));
  track.features = Tensor::matrix(static_cast<std::size_t>(length),
                                  static_cast<std::size_t>(cfg.feature_dim));
  track.initial.assign(static_cast<std::size_t>(cfg.feature_dim), 0.0);
  fill_frame(cfg, -1, beat_period, track.style, rng, track.initial.data());
  for (int t = 0; t < length; ++t) {
    fill_frame(cfg, t, beat_period, track.style, rng,
               track.features.data() + static_cast<std::size_t>(t) * cfg.feature_dim);
    if (t % beat_period == 0) track.beat_frames.push_back(t);
  }
  return track;
}

std::vector<TrackPtr> generate_tracks(const EnvConfig& cfg, std::size_t count, std::uint64_t seed) {
  std::vector<TrackPtr> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(std::make_shared<const MusicTrack>(
        generate_music(cfg, cfg.horizon, cfg.beat_period, derive_seed(seed, i))));
  return out;
}

void TokenSeq::push_music(const double* features, int ts) {
  kind.push_back(TokenKind::Music);
  timestep.push_back(ts);
  music.push_back(features);
  pose.push_back({});
}

void TokenSeq::push_pose(PoseCode p, int ts) {
  kind.push_back(TokenKind::Pose);
  timestep.push_back(ts);
  music.push_back(nullptr);
  pose.push_back(p);
}

EnvState::EnvState(TrackPtr track, PoseCode initial_pose) : track_(std::move(track)) {
  poses_.push_back(initial_pose);
}

std::size_t EnvState::token_count() const {
  return terminal_ ? 2 * static_cast<std::size_t>(t_) + 2 : 2 * static_cast<std::size_t>(t_) + 3;
}

TokenSeq EnvState::tokens() const {
  TokenSeq seq;
  seq.track = track_;
  seq.push_music(track_->initial.data(), 0);
  seq.push_pose(poses_[0], 0);
  for (int k = 0; k < t_; ++k) {
    seq.push_music(track_->frame(k), k + 1);
    seq.push_pose(poses_[static_cast<std::size_t>(k) + 1], k + 1);
  }
  if (!terminal_) seq.push_music(track_->frame(t_), t_ + 1);
  return seq;
}

DanceEnv::DanceEnv(EnvConfig cfg) : cfg_(cfg) { cfg_.validate(); }

EnvState DanceEnv::reset(TrackPtr track) const {
  if (!track) throw InputError("reset: null track");
  return EnvState(std::move(track), kRestPose);
}

EnvState DanceEnv::step(const EnvState& state, PoseCode action) const {
  if (state.terminal_) throw UsageError("step called on a terminal state");
  if (action.upper < 0 || action.upper >= cfg_.codes_per_half || action.lower < 0 ||
      action.lower >= cfg_.codes_per_half)
    throw InputError("step: pose code outside the codebook");
  EnvState next = state;
  next.poses_.push_back(action);
  ++next.t_;
  if (next.t_ >= state.track_->length) next.terminal_ = true;
  return next;
}

TokenSeq trajectory_tokens(const Trajectory& traj) {
  const MusicTrack& track = *traj.track;
  TokenSeq seq;
  seq.track = traj.track;
  seq.push_music(track.initial.data(), 0);
  seq.push_pose(traj.poses[0], 0);
  for (int t = 0; t < traj.decisions(); ++t) {
    seq.push_music(track.frame(t), t + 1);
    seq.push_pose(traj.action(t), t + 1);
  }
  return seq;
}

TokenSeq snippet_tokens(const Trajectory& traj, int start, int window) {
  if (start < 0 || window < 1 || start + window > traj.decisions())
    throw InputError("snippet_tokens: window out of range");
  TokenSeq seq;
  seq.track = traj.track;
  for (int t = start; t < start + window; ++t) {
    seq.push_music(traj.track->frame(t), t + 1);
    seq.push_pose(traj.action(t), t + 1);
  }
  return seq;
}

namespace {
PoseCode uniform_code(const EnvConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<int> code(0, cfg.codes_per_half - 1);
  const int u = code(rng);
  const int l = code(rng);
  return {u, l};
}

PoseCode style_code(const EnvConfig& cfg, int style, Rng& rng) {
  const int members = (cfg.codes_per_half - 1 - style) / cfg.styles + 1;
  std::uniform_int_distribution<int> pick(0, members - 1);
  const int u = style + cfg.styles * pick(rng);
  const int l = style + cfg.styles * pick(rng);
  return {u, l};
}
}  // namespace

PoseCode expert_action(const EnvConfig& cfg, const EnvState& state, Rng& rng) {
  if (state.terminal()) throw UsageError("expert_action on terminal state");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const PoseCode prev = state.previous_pose();
  const MusicTrack& track = *state.track();
  if (track.is_beat(state.time())) {
    if (u01(rng) >= cfg.p_change_on_beat) return prev;
    for (;;) {
      const PoseCode next =
          u01(rng) < cfg.p_style ? style_code(cfg, track.style, rng) : uniform_code(cfg, rng);
      if (!(next == prev)) return next;
    }
  }
  if (u01(rng) < cfg.p_hold) return prev;
  for (;;) {
    const PoseCode next = uniform_code(cfg, rng);
    if (!(next == prev)) return next;
  }
}

Trajectory expert_rollout(const DanceEnv& env, TrackPtr track, Rng& rng) {
  EnvState s = env.reset(track);
  while (!s.terminal()) s = env.step(s, expert_action(env.config(), s, rng));
  Trajectory traj;
  traj.track = std::move(track);
  traj.poses = s.poses();
  return traj;
}

Trajectory uniform_rollout(const DanceEnv& env, TrackPtr track, Rng& rng) {
  EnvState s = env.reset(track);
  while (!s.terminal()) s = env.step(s, uniform_code(env.config(), rng));
  Trajectory traj;
  traj.track = std::move(track);
  traj.poses = s.poses();
  return traj;
}

double true_step_reward(const EnvConfig& cfg, const MusicTrack& track, int t, PoseCode prev,
                        PoseCode cur) {
  double r = 0.0;
  if (!(cur == prev)) r += track.is_beat(t) ? cfg.beat_change_bonus : -cfg.offbeat_change_penalty;
  const int cu = style_cluster(cur.upper, cfg.styles);
  if (cu == style_cluster(cur.lower, cfg.styles)) {
    r += cfg.agreement_bonus;
    if (cu == track.style) r += cfg.style_bonus;
  }
  return r;
}

double true_return(const EnvConfig& cfg, const Trajectory& traj) {
  double total = 0.0;
  for (int t = 0; t < traj.decisions(); ++t)
    total += true_step_reward(cfg, *traj.track, t, traj.previous(t), traj.action(t));
  return total;
}

}  // namespace dancerl
