#include <doctest.h>

#include <cmath>

#include "dancerl/core/errors.hpp"
#include "dancerl/env/env.hpp"

using namespace dancerl;

TEST_CASE("music generation: beats, channels and determinism") {
  EnvConfig cfg;
  const MusicTrack a = generate_music(cfg, 16, 4, 123);
  CHECK(a.beat_frames == std::vector<int>{0, 4, 8, 12});
  for (int t = 0; t < 16; ++t) {
    const bool beat = t % 4 == 0;
    CHECK(a.features(static_cast<std::size_t>(t), kBeatChannel) == (beat ? 1.0 : 0.0));
  }
  for (double v : a.features.values()) CHECK(std::abs(v) <= 1.0);
  const MusicTrack b = generate_music(cfg, 16, 4, 123);
  CHECK(a.features == b.features);
  CHECK(a.initial == b.initial);
  CHECK(a.style == b.style);
  const MusicTrack c = generate_music(cfg, 16, 4, 124);
  CHECK_FALSE(a.features == c.features);
}

TEST_CASE("reset and step follow the history-extension rule") {
  EnvConfig cfg;
  DanceEnv env(cfg);
  const TrackPtr track = generate_tracks(cfg, 1, 5).front();
  EnvState s = env.reset(track);
  CHECK(s.token_count() == 3);
  CHECK(s.time() == 0);
  CHECK(s.tokens().size() == 3);
  CHECK(s.poses().front() == kRestPose);
  const EnvState s_again = env.reset(track);
  CHECK(s_again.poses() == s.poses());

  for (int k = 1; k <= cfg.horizon; ++k) {
    s = env.step(s, PoseCode{k % cfg.codes_per_half, 0});
    if (k < cfg.horizon) {
      CHECK(s.token_count() == static_cast<std::size_t>(2 * k + 3));
      CHECK_FALSE(s.terminal());
    }
  }
  CHECK(s.terminal());
  const TokenSeq tok = s.tokens();
  CHECK(tok.kind.back() == TokenKind::Pose);
  CHECK(tok.size() == static_cast<std::size_t>(2 * cfg.horizon + 2));
  CHECK_THROWS_AS(env.step(s, kRestPose), UsageError);
}

TEST_CASE("s_1 is s_0 plus the action and the next music frame") {
  EnvConfig cfg;
  DanceEnv env(cfg);
  const TrackPtr track = generate_tracks(cfg, 1, 6).front();
  const EnvState s0 = env.reset(track);
  const EnvState s1 = env.step(s0, PoseCode{3, 7});
  const TokenSeq t0 = s0.tokens(), t1 = s1.tokens();
  REQUIRE(t1.size() == 5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t1.kind[i] == t0.kind[i]);
    CHECK(t1.timestep[i] == t0.timestep[i]);
  }
  CHECK(t1.kind[3] == TokenKind::Pose);
  CHECK(t1.pose[3] == PoseCode{3, 7});
  CHECK(t1.kind[4] == TokenKind::Music);
  CHECK(t1.music[4] == track->frame(1));
  CHECK(t0.music[2] == track->frame(0));
}

TEST_CASE("actions outside the codebook are rejected") {
  EnvConfig cfg;
  DanceEnv env(cfg);
  const EnvState s = env.reset(generate_tracks(cfg, 1, 1).front());
  CHECK_THROWS(env.step(s, PoseCode{cfg.codes_per_half, 0}));
  CHECK_THROWS(env.step(s, PoseCode{0, -1}));
}

TEST_CASE("expert hold rate and determinism") {
  EnvConfig cfg;
  DanceEnv env(cfg);
  const auto tracks = generate_tracks(cfg, 40, 7);
  Rng rng(11);
  long holds = 0, offbeat = 0, changes_on_beat = 0, onbeat = 0;
  for (int rep = 0; rep < 12; ++rep)
    for (const TrackPtr& t : tracks) {
      const Trajectory traj = expert_rollout(env, t, rng);
      for (int k = 0; k < traj.decisions(); ++k) {
        const bool same = traj.action(k) == traj.previous(k);
        if (t->is_beat(k)) {
          ++onbeat;
          changes_on_beat += !same;
        } else {
          ++offbeat;
          holds += same;
        }
      }
    }
  REQUIRE(offbeat > 8000);
  CHECK(static_cast<double>(holds) / static_cast<double>(offbeat) == doctest::Approx(cfg.p_hold).epsilon(0.03 / 0.9));
  CHECK(static_cast<double>(changes_on_beat) / static_cast<double>(onbeat) >= 0.8);

  Rng a(3), b(3);
  const Trajectory ta = expert_rollout(env, tracks[0], a), tb = expert_rollout(env, tracks[0], b);
  CHECK(ta.poses == tb.poses);
}

TEST_CASE("true return: expert beats uniform, all-hold has no beat bonus, noise label ignored") {
  EnvConfig cfg;
  DanceEnv env(cfg);
  const auto tracks = generate_tracks(cfg, 100, 8);
  Rng rng(12);
  double expert = 0.0, uniform = 0.0;
  for (const TrackPtr& t : tracks) {
    expert += true_return(cfg, expert_rollout(env, t, rng));
    uniform += true_return(cfg, uniform_rollout(env, t, rng));
  }
  CHECK(expert / 100.0 > uniform / 100.0 + 2.0);

  Trajectory hold;
  hold.track = tracks[0];
  hold.poses.assign(static_cast<std::size_t>(cfg.horizon) + 1, PoseCode{5, 5});
  double beat_part = 0.0;
  for (int k = 0; k < cfg.horizon; ++k)
    beat_part += true_step_reward(cfg, *hold.track, k, hold.previous(k), hold.action(k));
  // every step is a hold, so only the agreement/style terms can contribute
  const double per_step = cfg.agreement_bonus + (style_cluster(5, cfg.styles) == hold.track->style ? cfg.style_bonus : 0.0);
  CHECK(beat_part == doctest::Approx(per_step * cfg.horizon));

  Trajectory labelled = hold;
  labelled.noise = 0.75;
  CHECK(true_return(cfg, labelled) == true_return(cfg, hold));
}

TEST_CASE("replaying actions reproduces the trajectory") {
  EnvConfig cfg;
  DanceEnv env(cfg);
  const TrackPtr track = generate_tracks(cfg, 1, 9).front();
  Rng rng(1);
  const Trajectory t = uniform_rollout(env, track, rng);
  EnvState s = env.reset(track);
  for (int k = 0; k < t.decisions(); ++k) s = env.step(s, t.action(k));
  CHECK(s.poses() == t.poses);
  CHECK(t.poses.size() == static_cast<std::size_t>(cfg.horizon) + 1);
}

TEST_CASE("env config validation") {
  EnvConfig cfg;
  cfg.feature_dim = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EnvConfig{};
  cfg.p_hold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
