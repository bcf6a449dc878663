#include <doctest.h>

#include <cmath>
#include <set>

#include "dancerl/core/errors.hpp"
#include "dancerl/demos/demos.hpp"
#include "helpers.hpp"

using namespace dancerl;
using namespace dancerl::testing;

namespace {

struct Fixture {
  EnvConfig env = small_env();
  DanceEnv dance{env};
  Parameters params;
  PolicyNet net;
  std::vector<TrackPtr> tracks;

  Fixture() {
    Rng rng(21);
    net = PolicyNet::create(params, env, small_shape(), rng);
    shake_seeded(params, 22, 0.3);
    tracks = generate_tracks(env, 5, 23);
  }
};

}  // namespace

TEST_CASE("noise schedule validation") {
  CHECK_NOTHROW(NoiseSchedule({1.0, 0.75, 0.5, 0.25, 0.02}));
  CHECK_THROWS_AS(NoiseSchedule(std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule({0.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule({0.25, 0.5}), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule({1.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule({0.5, -0.1}), ConfigError);
}

TEST_CASE("ranked dataset has levels x per_level trajectories with noise labels") {
  Fixture f;
  const NoiseSchedule schedule({1.0, 0.5, 0.02});
  const RankedDemoSet set = build_ranked_dataset(f.net, f.params, f.dance, schedule, 7, f.tracks, 9, "bc.ckpt");
  CHECK(set.total() == 21);
  CHECK(set.per_level() == 7);
  CHECK(set.levels == schedule.levels());
  CHECK(set.source_checkpoint == "bc.ckpt");
  CHECK(set.flatten().size() == 21);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t i = 0; i < 7; ++i) {
      const Trajectory& t = set.buckets[l][i];
      REQUIRE(t.noise.has_value());
      CHECK(*t.noise == schedule[l]);
      CHECK(t.track == f.tracks[i % f.tracks.size()]);
      CHECK(t.decisions() == f.env.horizon);
      CHECK(t.behavior_logp.size() == static_cast<std::size_t>(f.env.horizon));
    }

  const RankedDemoSet again = build_ranked_dataset(f.net, f.params, f.dance, schedule, 7, f.tracks, 9);
  const RankedDemoSet other = build_ranked_dataset(f.net, f.params, f.dance, schedule, 7, f.tracks, 10);
  bool all_same = true, any_diff = false;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t i = 0; i < 7; ++i) {
      all_same &= set.buckets[l][i].poses == again.buckets[l][i].poses;
      any_diff |= !(set.buckets[l][i].poses == other.buckets[l][i].poses);
    }
  CHECK(all_same);
  CHECK(any_diff);
}

TEST_CASE("fifty demonstrations over five levels") {
  Fixture f;
  const NoiseSchedule schedule({1.0, 0.75, 0.5, 0.25, 0.02});
  const RankedDemoSet set = build_ranked_dataset(f.net, f.params, f.dance, schedule, 10, f.tracks, 1);
  CHECK(set.total() == 50);
  for (std::size_t l = 1; l < set.levels.size(); ++l) CHECK(set.levels[l] < set.levels[l - 1]);
}

TEST_CASE("behaviour log-probabilities at eps 0 and eps 1") {
  Fixture f;
  Rng rng(5);
  const Trajectory clean = rollout_with_noise(f.net, f.params, f.dance, 0.0, f.tracks[0], rng);
  EnvState s = f.dance.reset(f.tracks[0]);
  for (int t = 0; t < clean.decisions(); ++t) {
    const ActionLogits l = policy_forward(f.net, f.params, s.tokens());
    CHECK(clean.behavior_logp[static_cast<std::size_t>(t)] ==
          doctest::Approx(joint_log_prob(l, clean.action(t))).epsilon(1e-10));
    s = f.dance.step(s, clean.action(t));
  }

  const Trajectory noisy = rollout_with_noise(f.net, f.params, f.dance, 1.0, f.tracks[1], rng);
  for (double lp : noisy.behavior_logp)
    CHECK(lp == doctest::Approx(-std::log(static_cast<double>(f.env.joint_actions()))).epsilon(1e-12));

  CHECK_THROWS_AS(rollout_with_noise(f.net, f.params, f.dance, 1.1, f.tracks[0], rng), InputError);
}

TEST_CASE("snippet pairs: distinct levels, consistent labels, valid windows") {
  Fixture f;
  const NoiseSchedule schedule({1.0, 0.75, 0.5, 0.25, 0.02});
  const RankedDemoSet set = build_ranked_dataset(f.net, f.params, f.dance, schedule, 4, f.tracks, 2);
  const int window = 4;
  const auto pairs = sample_snippet_pairs(set, 2000, window, 3);
  REQUIRE(pairs.size() == 2000);
  std::set<std::pair<std::size_t, std::size_t>> level_pairs;
  int ones = 0;
  for (const SnippetPair& p : pairs) {
    CHECK(p.level_first != p.level_second);
    CHECK(p.window == window);
    CHECK(p.eps_first == set.levels[p.level_first]);
    CHECK(p.eps_second == set.levels[p.level_second]);
    CHECK(p.label == (p.eps_first < p.eps_second ? 1 : 0));
    CHECK(p.start_first >= 0);
    CHECK(p.start_first + window <= f.env.horizon);
    CHECK(p.start_second >= 0);
    CHECK(p.start_second + window <= f.env.horizon);
    CHECK(p.index_first < set.per_level());
    CHECK(p.index_second < set.per_level());
    level_pairs.insert({p.level_first, p.level_second});
    ones += p.label;

    const SnippetPair s = p.swapped();
    CHECK(s.label == 1 - p.label);
    CHECK(&first_trajectory(set, s) == &second_trajectory(set, p));
    CHECK(s.start_first == p.start_second);
  }
  CHECK(level_pairs.size() == 20);
  CHECK(std::abs(ones / 2000.0 - 0.5) < 0.05);

  CHECK(sample_snippet_pairs(set, 50, window, 3)[7].start_first ==
        sample_snippet_pairs(set, 50, window, 3)[7].start_first);
  CHECK_THROWS_AS(sample_snippet_pairs(set, 1, f.env.horizon + 1, 3), InputError);
}

TEST_CASE("snippet tokens carry the window's music and poses") {
  Fixture f;
  Rng rng(3);
  const Trajectory t = expert_rollout(f.dance, f.tracks[2], rng);
  const TokenSeq seq = snippet_tokens(t, 2, 3);
  REQUIRE(seq.size() == 6);
  for (int k = 0; k < 3; ++k) {
    const std::size_t m = 2 * static_cast<std::size_t>(k);
    CHECK(seq.kind[m] == TokenKind::Music);
    CHECK(seq.music[m] == t.track->frame(2 + k));
    CHECK(seq.timestep[m] == 3 + k);
    CHECK(seq.kind[m + 1] == TokenKind::Pose);
    CHECK(seq.pose[m + 1] == t.action(2 + k));
  }
  CHECK_THROWS_AS(snippet_tokens(t, f.env.horizon - 1, 2), InputError);
}
