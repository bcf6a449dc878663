#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/gradcheck.hpp"
#include "dancerl/metrics/metrics.hpp"
#include "dancerl/rl/ppo.hpp"
#include "helpers.hpp"

using namespace dancerl;
using namespace dancerl::testing;

namespace {

struct Fixture {
  EnvConfig env = small_env();
  DanceEnv dance{env};
  Parameters bc_params;
  PolicyNet bc;
  std::vector<TrackPtr> tracks;

  explicit Fixture(EncoderShape shape = small_shape()) {
    Rng rng(41);
    bc = PolicyNet::create(bc_params, env, shape, rng);
    shake_seeded(bc_params, 42, 0.3);
    tracks = generate_tracks(env, 8, 43);
  }

  PPOConfig small_ppo() const {
    PPOConfig cfg;
    cfg.batch_episodes = 8;
    cfg.minibatch_episodes = 4;
    cfg.iterations = 3;
    cfg.seed = 44;
    return cfg;
  }
};

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

RewardFn hand_reward(const EnvConfig& env) {
  return [env](const Trajectory& t) { return hand_designed_step_rewards(env, t, 0.0); };
}

}  // namespace

TEST_CASE("GAE identities on random buffers") {
  Rng rng(1);
  double worst_mc = 0.0, worst_td = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 30);
    const double gamma = trial % 3 == 0 ? 1.0 : 0.9 + 0.001 * trial;
    const auto r = random_vector(n, rng, 2.0), v = random_vector(n, rng, 3.0);
    const auto gae1 = gae_advantages(r, v, gamma, 1.0);
    const auto mc = mc_advantages(r, v, gamma);
    const auto gae0 = gae_advantages(r, v, gamma, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      worst_mc = std::max(worst_mc, std::abs(gae1[t] - mc[t]));
      const double td = r[t] + gamma * (t + 1 < n ? v[t + 1] : 0.0) - v[t];
      worst_td = std::max(worst_td, std::abs(gae0[t] - td));
      double g = 0.0, disc = 1.0;
      for (std::size_t k = t; k < n; ++k, disc *= gamma) g += disc * r[k];
      CHECK(mc[t] == doctest::Approx(g - v[t]).epsilon(1e-10));
    }
  }
  CHECK(worst_mc < 1e-10);
  CHECK(worst_td == 0.0);

  const std::vector<double> sparse{0.0, 0.0, 0.0, 2.5}, zeros(4, 0.0);
  for (double a : mc_advantages(sparse, zeros, 1.0)) CHECK(a == 2.5);
  CHECK_THROWS_AS(gae_advantages(sparse, std::vector<double>(3, 0.0), 1.0, 0.9), InputError);
  CHECK_THROWS_AS(parse_advantage_mode("td"), ConfigError);
  CHECK(parse_advantage_mode(to_string(AdvantageMode::MonteCarlo)) == AdvantageMode::MonteCarlo);
}

TEST_CASE("KL-penalised rewards") {
  const std::vector<double> r{0.0, 1.0, 3.0}, lp{-1.0, -2.0, -0.5}, lr{-1.5, -2.0, -0.1};
  CHECK(kl_penalized_rewards(r, lp, lr, 0.0) == r);
  CHECK(kl_penalized_rewards(r, lp, lp, 0.3) == r);
  const auto out = kl_penalized_rewards(r, lp, lr, 0.1);
  for (std::size_t t = 0; t < 3; ++t) CHECK(out[t] == doctest::Approx(r[t] - 0.1 * (lp[t] - lr[t])).epsilon(1e-15));
}

TEST_CASE("expected log-ratio under the policy is a non-negative KL") {
  Fixture f;
  Parameters other = f.bc_params;
  shake_seeded(other, 45, 0.3);
  const TokenSeq s = f.dance.reset(f.tracks[0]).tokens();
  const ActionLogits p = policy_forward(f.bc, other, s), q = policy_forward(f.bc, f.bc_params, s);
  Rng rng(46);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const PoseCode a = sample_action(p, rng, 0.0);
    const double d = joint_log_prob(p, a) - joint_log_prob(q, a);
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(mean > 0.0);
  CHECK(std::abs(mean - joint_kl(p, q)) < 4.0 * se);
}

TEST_CASE("init from BC copies the policy bitwise and freezes a reference") {
  Fixture f;
  const RLInit init = init_rl_from_bc(f.bc, f.bc_params, f.env, f.small_ppo());
  for (ParamId id = 0; id < f.bc_params.count(); ++id) {
    const auto dst = init.params.find(f.bc_params.name(id));
    REQUIRE(dst.has_value());
    CHECK(init.params[*dst] == f.bc_params[id]);
  }
  CHECK(init.params.count() > f.bc_params.count());
  CHECK(init.reference_fingerprint == f.bc_params.fingerprint());

  Rng rng(1);
  const Trajectory traj = rollout_with_noise(f.bc, f.bc_params, f.dance, 0.0, f.tracks[1], rng);
  const TokenSeq seq = trajectory_tokens(traj);
  const auto out = init.model.forward(init.params, seq);
  const auto ref = f.bc.forward(f.bc_params, seq);
  CHECK(out.logits.upper == ref.upper);
  CHECK(out.logits.lower == ref.lower);
  CHECK(out.values.size() == static_cast<std::size_t>(f.env.horizon));

  PPOConfig deep = f.small_ppo();
  deep.shared_blocks = 3;
  CHECK_THROWS_AS(init_rl_from_bc(f.bc, f.bc_params, f.env, deep), ConfigError);
  Parameters wrong;
  Rng wr(2);
  EncoderShape shape = small_shape();
  shape.dim = 10;
  PolicyNet::create(wrong, f.env, shape, wr);
  CHECK_THROWS_AS(init_rl_from_bc(f.bc, wrong, f.env, f.small_ppo()), CheckpointError);
}

TEST_CASE("rollouts: T records per episode, log-probs reproducible, zero KL and unit ratios at init") {
  Fixture f;
  const PPOConfig cfg = f.small_ppo();
  RLInit init = init_rl_from_bc(f.bc, f.bc_params, f.env, cfg);
  RolloutBuffer buf = collect_rollouts(init.model, init.params, f.dance, f.tracks, 7);
  CHECK(buf.episodes.size() == f.tracks.size());
  CHECK(buf.records() == f.tracks.size() * static_cast<std::size_t>(f.env.horizon));
  CHECK(buf.records() <= buf.capacity);
  for (const Episode& ep : buf.episodes) {
    REQUIRE(ep.logp.size() == static_cast<std::size_t>(f.env.horizon));
    const auto logits = init.model.forward(init.params, trajectory_tokens(ep.traj)).logits;
    for (std::size_t t = 0; t < ep.logp.size(); ++t) {
      ActionLogits row{{logits.upper.row(t).begin(), logits.upper.row(t).end()},
                       {logits.lower.row(t).begin(), logits.lower.row(t).end()}};
      CHECK(std::abs(joint_log_prob(row, ep.traj.action(static_cast<int>(t))) - ep.logp[t]) < 1e-10);
    }
  }

  score_rollouts(buf, init.reference, init.reference_params, init.model, init.params, hand_reward(f.env), cfg.kl_beta);
  for (const Episode& ep : buf.episodes) {
    for (double k : ep.kl) CHECK(k == 0.0);
    CHECK(ep.reward == ep.model_reward);
  }
  compute_advantages(buf, cfg.gamma, cfg.gae_lambda, cfg.advantage, true);
  AdamState adam(init.params, AdamConfig{.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay, .decoupled = true});
  Rng urng(8);
  const PPODiagnostics d = ppo_update(init.model, init.params, adam, buf, cfg, urng);
  CHECK(d.max_ratio_deviation == 0.0);
  CHECK(std::isfinite(d.grad_norm));

  const RolloutBuffer again = collect_rollouts(init.model, init.params, f.dance, f.tracks, 7);
  CHECK(again.episodes.size() == buf.episodes.size());
}

TEST_CASE("advantage normalisation gives zero mean and unit deviation") {
  RolloutBuffer buf;
  Rng rng(9);
  for (int e = 0; e < 6; ++e) {
    Episode ep;
    ep.reward = random_vector(10, rng, 4.0);
    ep.values = random_vector(10, rng, 2.0);
    ep.logp.assign(10, 0.0);
    buf.episodes.push_back(ep);
  }
  compute_advantages(buf, 1.0, 0.95, AdvantageMode::GAE, true);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const Episode& ep : buf.episodes)
    for (double a : ep.advantage) sum += a, sq += a * a, ++n;
  const double mean = sum / static_cast<double>(n);
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::abs(std::sqrt(sq / static_cast<double>(n) - mean * mean) - 1.0) < 1e-6);

  RolloutBuffer raw = buf;
  compute_advantages(raw, 1.0, 0.95, AdvantageMode::MonteCarlo, false);
  for (const Episode& ep : raw.episodes)
    for (std::size_t t = 0; t < ep.advantage.size(); ++t)
      CHECK(ep.target[t] == doctest::Approx(ep.advantage[t] + ep.values[t]).epsilon(1e-14));
}

TEST_CASE("reward standardisation rescales returns without touching model rewards") {
  RolloutBuffer buf;
  const std::vector<double> returns{10.0, 14.0, 30.0};
  for (double g : returns) {
    Episode ep;
    ep.model_reward = {0.0, 0.0, g};
    ep.logp = {-1.0, -1.0, -1.0};
    ep.logp_ref = ep.logp;
    buf.episodes.push_back(ep);
  }
  RunningNormalizer norm;
  standardize_rewards(buf, norm, 0.0);
  const double mean = 18.0, sd = std::sqrt(((64.0 + 16.0 + 144.0)) / 2.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const Episode& ep = buf.episodes[i];
    CHECK(ep.model_reward.back() == returns[i]);
    const double g = std::accumulate(ep.reward.begin(), ep.reward.end(), 0.0);
    CHECK(g == doctest::Approx((returns[i] - mean) / sd).epsilon(1e-7));
    CHECK(ep.reward[0] == 0.0);
  }
}

TEST_CASE("actor-critic gradient matches finite differences") {
  Fixture f(EncoderShape{.dim = 6, .heads = 2, .blocks = 2, .ffn_mult = 2});
  RLInit init = init_rl_from_bc(f.bc, f.bc_params, f.env, f.small_ppo());
  shake_seeded(init.params, 47, 1.0);
  Rng rng(48);
  const Trajectory traj = rollout_with_noise(f.bc, f.bc_params, f.dance, 0.5, f.tracks[2], rng);
  const TokenSeq seq = trajectory_tokens(traj);
  const std::size_t steps = static_cast<std::size_t>(f.env.horizon), codes = static_cast<std::size_t>(f.env.codes_per_half);
  const Tensor wu = random_matrix(steps, codes, rng), wl = random_matrix(steps, codes, rng);
  const auto wv = random_vector(steps, rng);
  auto obj = [&](const Parameters& ps, const Tensor&) {
    const auto out = init.model.forward(ps, seq);
    double s = weighted_sum(out.logits.upper, wu) + weighted_sum(out.logits.lower, wl);
    for (std::size_t t = 0; t < steps; ++t) s += wv[t] * out.values[t];
    return s;
  };
  auto grad = [&](const Parameters& ps, const Tensor&, Gradients& g, Tensor&) {
    ActorCritic::Cache c;
    init.model.forward(ps, seq, &c);
    init.model.backward(ps, seq, c, wu, wl, wv, g);
  };
  const GradCheckReport r = gradient_check(init.params, Tensor{}, obj, grad);
  INFO(r.worst, " ", r.max_rel_error);
  CHECK(r.passed(1e-5));
}

TEST_CASE("values are causal in the state tokens") {
  Fixture f;
  RLInit init = init_rl_from_bc(f.bc, f.bc_params, f.env, f.small_ppo());
  shake_seeded(init.params, 49, 0.3);
  Rng rng(50);
  const Trajectory a = rollout_with_noise(f.bc, f.bc_params, f.dance, 0.5, f.tracks[3], rng);
  Trajectory b = a;
  b.poses[4] = PoseCode{(a.poses[4].upper + 1) % f.env.codes_per_half, 0};
  const auto va = init.model.forward(init.params, trajectory_tokens(a)).values;
  const auto vb = init.model.forward(init.params, trajectory_tokens(b)).values;
  for (std::size_t t = 0; t <= 3; ++t) CHECK(va[t] == vb[t]);
  CHECK(va[4] != vb[4]);
}

TEST_CASE("train_rl is deterministic and leaves the reference untouched") {
  Fixture f;
  const PPOConfig cfg = f.small_ppo();
  RLInit a = init_rl_from_bc(f.bc, f.bc_params, f.env, cfg);
  RLInit b = init_rl_from_bc(f.bc, f.bc_params, f.env, cfg);
  const RLResult ra = train_rl(a, f.dance, f.tracks, hand_reward(f.env), cfg);
  const RLResult rb = train_rl(b, f.dance, f.tracks, hand_reward(f.env), cfg);
  REQUIRE(ra.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ra.log[i].mean_model_return == rb.log[i].mean_model_return);
    CHECK(ra.log[i].mean_kl == rb.log[i].mean_kl);
    CHECK(ra.log[i].diag.policy_loss == rb.log[i].diag.policy_loss);
  }
  CHECK(a.params == b.params);
  CHECK(a.reference_params.fingerprint() == f.bc_params.fingerprint());
  CHECK_FALSE(a.params.fingerprint() == init_rl_from_bc(f.bc, f.bc_params, f.env, cfg).params.fingerprint());
  CHECK(ra.log.front().mean_kl == 0.0);
  CHECK(ra.max_mean_kl >= ra.log.back().mean_kl);
  CHECK(ra.kl_within_ceiling == (ra.max_mean_kl <= cfg.kl_ceiling));
}

TEST_CASE("ppo config validation") {
  PPOConfig cfg;
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PPOConfig{};
  cfg.gae_lambda = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PPOConfig{};
  cfg.clip_ratio = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PPOConfig{};
  cfg.kl_beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
