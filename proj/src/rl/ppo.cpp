#include "dancerl/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"
#include "dancerl/core/loss.hpp"
#include "dancerl/demos/demos.hpp"

namespace dancerl {

AdvantageMode parse_advantage_mode(const std::string& name) {
  if (name == "mc") return AdvantageMode::MonteCarlo;
  if (name == "gae") return AdvantageMode::GAE;
  throw ConfigError("unknown advantage mode '" + name + "' (expected mc or gae)");
}

std::string to_string(AdvantageMode mode) { return mode == AdvantageMode::GAE ? "gae" : "mc"; }

void PPOConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("ppo: lambda must lie in [0, 1]");
  if (clip_ratio <= 0.0) throw ConfigError("ppo: clip ratio must be positive");
  if (kl_beta < 0.0) throw ConfigError("ppo: KL beta must be >= 0");
  if (value_weight < 0.0 || entropy_weight < 0.0) throw ConfigError("ppo: loss weights must be >= 0");
  if (train_iters < 1 || batch_episodes < 1 || minibatch_episodes < 1 || iterations < 0)
    throw ConfigError("ppo: iteration and batch counts must be positive");
  if (learning_rate <= 0.0 || weight_decay < 0.0 || max_grad_norm <= 0.0)
    throw ConfigError("ppo: bad optimiser settings");
  if (shared_blocks < 1 || value_blocks < 0) throw ConfigError("ppo: shared_blocks must be >= 1");
}

namespace {
Tensor gather(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::matrix(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(x.data() + rows[r] * x.cols(), x.cols(), out.data() + r * x.cols());
  return out;
}

Tensor scatter(const Tensor& rows_grad, const std::vector<std::size_t>& rows, std::size_t length) {
  Tensor out = Tensor::matrix(length, rows_grad.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t d = 0; d < rows_grad.cols(); ++d) out(rows[r], d) += rows_grad(r, d);
  return out;
}

std::span<const TransformerBlock> head_blocks(const ActorCritic& m) {
  return std::span<const TransformerBlock>(m.policy.blocks).first(m.shared_blocks);
}
std::span<const TransformerBlock> tail_blocks(const ActorCritic& m) {
  return std::span<const TransformerBlock>(m.policy.blocks).subspan(m.shared_blocks);
}

ActionLogits row_logits(const PolicyNet::Logits& l, std::size_t r) {
  ActionLogits a;
  a.upper.assign(l.upper.row(r).begin(), l.upper.row(r).end());
  a.lower.assign(l.lower.row(r).begin(), l.lower.row(r).end());
  return a;
}
}  // namespace

ActorCritic::Output ActorCritic::forward(const Parameters& params, const TokenSeq& seq,
                                         Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.embedded = policy.embed.forward(params, seq);
  c.shared_out = forward_blocks(params, head_blocks(*this), c.embedded, c.shared);
  c.policy_hidden = forward_blocks(params, tail_blocks(*this), c.shared_out, c.policy_tail);
  c.value_hidden = forward_blocks(params, value_blocks, c.shared_out, c.value);
  c.positions = decision_positions(seq);
  c.policy_gathered = gather(c.policy_hidden, c.positions);
  c.value_gathered = gather(c.value_hidden, c.positions);
  Output out;
  out.logits = policy.heads(params, c.policy_gathered);
  out.logits.positions = c.positions;
  const Tensor v = value_head.forward(params, c.value_gathered);
  out.values.assign(v.values().begin(), v.values().end());
  return out;
}

void ActorCritic::backward(const Parameters& params, const TokenSeq& seq, const Cache& c,
                           const Tensor& d_upper, const Tensor& d_lower,
                           std::span<const double> d_values, Gradients& grads) const {
  const std::size_t length = c.embedded.rows();
  Tensor dg = policy.head_upper.backward(params, c.policy_gathered, d_upper, grads);
  const Tensor dl = policy.head_lower.backward(params, c.policy_gathered, d_lower, grads);
  for (std::size_t i = 0; i < dg.size(); ++i) dg[i] += dl[i];
  Tensor d_shared = backward_blocks(params, tail_blocks(*this), c.policy_tail,
                                    scatter(dg, c.positions, length), grads);

  Tensor dv = Tensor::matrix(d_values.size(), 1);
  std::copy(d_values.begin(), d_values.end(), dv.data());
  const Tensor dvg = value_head.backward(params, c.value_gathered, dv, grads);
  const Tensor d_shared_v =
      backward_blocks(params, value_blocks, c.value, scatter(dvg, c.positions, length), grads);
  for (std::size_t i = 0; i < d_shared.size(); ++i) d_shared[i] += d_shared_v[i];

  const Tensor dx = backward_blocks(params, head_blocks(*this), c.shared, std::move(d_shared), grads);
  policy.embed.backward(params, seq, dx, grads);
}

RLInit init_rl_from_bc(const PolicyNet& bc, const Parameters& bc_params, const EnvConfig& env,
                       const PPOConfig& cfg) {
  cfg.validate();
  if (cfg.shared_blocks > bc.shape.blocks)
    throw ConfigError("ppo: shared_blocks exceeds the policy depth");
  RLInit init;
  Rng rng(derive_seed(cfg.seed, "value-init"));
  init.model.policy = PolicyNet::create(init.params, env, bc.shape, rng);
  // Every policy tensor is overwritten by the checkpoint.
  for (ParamId id = 0; id < init.params.count(); ++id) {
    const auto src = bc_params.find(init.params.name(id));
    if (!src) throw CheckpointError("BC checkpoint lacks parameter " + init.params.name(id));
    if (bc_params[*src].shape() != init.params[id].shape())
      throw CheckpointError("BC checkpoint shape mismatch for " + init.params.name(id) + ": " +
                            bc_params[*src].shape_string() + " vs " +
                            init.params[id].shape_string());
    init.params[id] = bc_params[*src];
  }
  if (init.params.count() != bc_params.count())
    throw CheckpointError("BC checkpoint holds unexpected extra parameters");

  const auto dim = static_cast<std::size_t>(bc.shape.dim);
  init.model.shared_blocks = static_cast<std::size_t>(cfg.shared_blocks);
  for (int b = 0; b < cfg.value_blocks; ++b)
    init.model.value_blocks.push_back(TransformerBlock::create(
        init.params, "value.block" + std::to_string(b), dim,
        static_cast<std::size_t>(bc.shape.heads), dim * static_cast<std::size_t>(bc.shape.ffn_mult),
        rng, bc.shape.init_std, static_cast<std::size_t>(bc.shape.window)));
  init.model.value_head = Linear::create(init.params, "value.head", dim, 1, rng, bc.shape.init_std);

  init.reference = bc;
  init.reference_params = bc_params;
  init.reference_fingerprint = bc_params.fingerprint();
  return init;
}

std::size_t RolloutBuffer::records() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.logp.size();
  return n;
}

RolloutBuffer collect_rollouts(const ActorCritic& model, const Parameters& params,
                               const DanceEnv& env, const std::vector<TrackPtr>& tracks,
                               std::uint64_t seed) {
  if (tracks.empty()) throw InputError("collect_rollouts: batch must hold at least one episode");
  RolloutBuffer buf;
  buf.capacity = tracks.size() * static_cast<std::size_t>(env.config().horizon);
  buf.episodes.resize(tracks.size());
  kernels::parallel_for(tracks.size(), [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    Episode& ep = buf.episodes[i];
    ep.traj = rollout_with_noise(model.policy, params, env, 0.0, tracks[i], rng);
    ep.logp = ep.traj.behavior_logp;
    ep.values = model.forward(params, trajectory_tokens(ep.traj)).values;
  });
  return buf;
}

std::vector<double> kl_penalized_rewards(std::span<const double> rewards,
                                         std::span<const double> logp,
                                         std::span<const double> logp_ref, double beta) {
  if (rewards.size() != logp.size() || rewards.size() != logp_ref.size())
    throw InputError("kl_penalized_rewards: length mismatch");
  std::vector<double> out(rewards.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = rewards[t] - beta * (logp[t] - logp_ref[t]);
  return out;
}

void score_rollouts(RolloutBuffer& buffer, const PolicyNet& reference,
                    const Parameters& reference_params, const ActorCritic& model,
                    const Parameters& params, const RewardFn& reward, double beta) {
  kernels::parallel_for(buffer.episodes.size(), [&](std::size_t i) {
    Episode& ep = buffer.episodes[i];
    const TokenSeq seq = trajectory_tokens(ep.traj);
    const PolicyNet::Logits ref = reference.forward(reference_params, seq);
    const PolicyNet::Logits cur = model.forward(params, seq).logits;
    const auto steps = static_cast<std::size_t>(ep.traj.decisions());
    ep.logp_ref.resize(steps);
    ep.kl.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      const ActionLogits r = row_logits(ref, t);
      ep.logp_ref[t] = joint_log_prob(r, ep.traj.action(static_cast<int>(t)));
      ep.kl[t] = joint_kl(row_logits(cur, t), r);
    }
    ep.model_reward = reward(ep.traj);
    if (ep.model_reward.size() != steps) throw InputError("reward function returned wrong length");
    ep.reward = kl_penalized_rewards(ep.model_reward, ep.logp, ep.logp_ref, beta);
  });
}

void standardize_rewards(RolloutBuffer& buffer, RunningNormalizer& norm, double beta) {
  for (const Episode& ep : buffer.episodes)
    norm.update(std::accumulate(ep.model_reward.begin(), ep.model_reward.end(), 0.0));
  const double scale = 1.0 / std::sqrt(norm.variance() + 1e-8);
  for (Episode& ep : buffer.episodes) {
    if (ep.model_reward.empty()) throw InputError("standardize_rewards: episode is not scored");
    std::vector<double> r(ep.model_reward.size());
    for (std::size_t t = 0; t < r.size(); ++t) r[t] = ep.model_reward[t] * scale;
    r.back() -= norm.mean() * scale;
    ep.reward = kl_penalized_rewards(r, ep.logp, ep.logp_ref, beta);
  }
}

std::vector<double> mc_advantages(std::span<const double> rewards, std::span<const double> values,
                                  double gamma) {
  if (rewards.size() != values.size()) throw InputError("mc_advantages: length mismatch");
  std::vector<double> adv(rewards.size());
  double g = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    g = rewards[t] + gamma * g;
    adv[t] = g - values[t];
  }
  return adv;
}

std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   double gamma, double lambda) {
  if (rewards.size() != values.size()) throw InputError("gae_advantages: length mismatch");
  std::vector<double> adv(rewards.size());
  double a = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next = t + 1 < values.size() ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next - values[t];
    a = delta + gamma * lambda * a;
    adv[t] = a;
  }
  return adv;
}

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda, AdvantageMode mode,
                        bool normalize) {
  for (Episode& ep : buffer.episodes) {
    if (ep.reward.size() != ep.values.size() || ep.reward.empty())
      throw InputError("compute_advantages: episode is not scored");
    ep.advantage = mode == AdvantageMode::GAE ? gae_advantages(ep.reward, ep.values, gamma, lambda)
                                              : mc_advantages(ep.reward, ep.values, gamma);
    ep.target.resize(ep.advantage.size());
    for (std::size_t t = 0; t < ep.advantage.size(); ++t)
      ep.target[t] = ep.advantage[t] + ep.values[t];
  }
  if (!normalize) return;
  double sum = 0.0;
  std::size_t n = 0;
  for (const Episode& ep : buffer.episodes)
    for (double a : ep.advantage) sum += a, ++n;
  if (n < 2) return;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const Episode& ep : buffer.episodes)
    for (double a : ep.advantage) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  for (Episode& ep : buffer.episodes)
    for (double& a : ep.advantage) a = (a - mean) / (sd + 1e-12);
}

namespace {
struct EpisodeTerms {
  double policy_loss = 0.0, value_loss = 0.0, entropy = 0.0, approx_kl = 0.0;
  std::size_t clipped = 0;
  double max_dev = 0.0;
};

// Accumulates into grads the gradient of the episode's share of the minibatch loss.
EpisodeTerms episode_loss(const ActorCritic& model, const Parameters& params, const Episode& ep,
                          const PPOConfig& cfg, double inv_steps, Gradients& grads) {
  const TokenSeq seq = trajectory_tokens(ep.traj);
  ActorCritic::Cache cache;
  const ActorCritic::Output out = model.forward(params, seq, &cache);
  const std::size_t steps = ep.logp.size();
  const std::size_t codes = out.logits.upper.cols();
  Tensor du = Tensor::matrix(steps, codes);
  Tensor dl = Tensor::matrix(steps, codes);
  std::vector<double> dv(steps);
  EpisodeTerms terms;
  for (std::size_t t = 0; t < steps; ++t) {
    const auto lu = log_softmax(out.logits.upper.row(t));
    const auto ll = log_softmax(out.logits.lower.row(t));
    const PoseCode a = ep.traj.action(static_cast<int>(t));
    const double logp = lu[static_cast<std::size_t>(a.upper)] + ll[static_cast<std::size_t>(a.lower)];
    const double ratio = std::exp(logp - ep.logp[t]);
    const double adv = ep.advantage[t];
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
    const double s1 = ratio * adv;
    const double s2 = clipped_ratio * adv;
    terms.policy_loss -= std::min(s1, s2) * inv_steps;
    terms.approx_kl += (ep.logp[t] - logp) * inv_steps;
    terms.max_dev = std::max(terms.max_dev, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > cfg.clip_ratio) ++terms.clipped;
    // d(-min)/dlogp; zero when the clipped branch is the active minimum.
    const double g_logp = s1 <= s2 ? -adv * ratio * inv_steps : 0.0;

    double hu = 0.0, hl = 0.0;
    for (std::size_t k = 0; k < codes; ++k) {
      hu -= std::exp(lu[k]) * lu[k];
      hl -= std::exp(ll[k]) * ll[k];
    }
    terms.entropy += (hu + hl) * inv_steps;
    const double we = cfg.entropy_weight * inv_steps;
    for (std::size_t k = 0; k < codes; ++k) {
      const double pu = std::exp(lu[k]);
      const double pl = std::exp(ll[k]);
      const double onehot_u = static_cast<int>(k) == a.upper ? 1.0 : 0.0;
      const double onehot_l = static_cast<int>(k) == a.lower ? 1.0 : 0.0;
      // loss -= w * H, dH/dz_k = -p_k (log p_k + H)
      du(t, k) = g_logp * (onehot_u - pu) + we * pu * (lu[k] + hu);
      dl(t, k) = g_logp * (onehot_l - pl) + we * pl * (ll[k] + hl);
    }

    const double err = out.values[t] - ep.target[t];
    terms.value_loss += err * err * inv_steps;
    dv[t] = 2.0 * cfg.value_weight * err * inv_steps;
  }
  model.backward(params, seq, cache, du, dl, dv, grads);
  return terms;
}
}  // namespace

PPODiagnostics ppo_update(const ActorCritic& model, Parameters& params, AdamState& adam,
                          const RolloutBuffer& buffer, const PPOConfig& cfg, Rng& rng) {
  cfg.validate();
  if (buffer.episodes.empty()) throw InputError("ppo_update: empty buffer");
  for (const Episode& ep : buffer.episodes)
    if (ep.advantage.size() != ep.logp.size() || ep.target.size() != ep.logp.size())
      throw InputError("ppo_update: advantages have not been computed");

  PPODiagnostics diag;
  std::vector<std::size_t> order(buffer.episodes.size());
  std::iota(order.begin(), order.end(), 0);
  const auto mb = static_cast<std::size_t>(cfg.minibatch_episodes);
  std::size_t minibatches = 0, total_steps = 0, clipped = 0;
  bool first = true;

  for (int pass = 0; pass < cfg.train_iters; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t n = std::min(mb, order.size() - start);
      std::size_t steps = 0;
      for (std::size_t i = 0; i < n; ++i) steps += buffer.episodes[order[start + i]].logp.size();
      const double inv_steps = 1.0 / static_cast<double>(steps);
      std::vector<Gradients> per(n, Gradients(params));
      std::vector<EpisodeTerms> terms(n);
      kernels::parallel_for(n, [&](std::size_t i) {
        terms[i] = episode_loss(model, params, buffer.episodes[order[start + i]], cfg, inv_steps,
                                per[i]);
      });
      Gradients total(params);
      EpisodeTerms sum;
      for (std::size_t i = 0; i < n; ++i) {
        total.accumulate(per[i]);
        sum.policy_loss += terms[i].policy_loss;
        sum.value_loss += terms[i].value_loss;
        sum.entropy += terms[i].entropy;
        sum.approx_kl += terms[i].approx_kl;
        sum.clipped += terms[i].clipped;
        sum.max_dev = std::max(sum.max_dev, terms[i].max_dev);
      }
      const double loss = sum.policy_loss + cfg.value_weight * sum.value_loss -
                          cfg.entropy_weight * sum.entropy;
      if (!std::isfinite(loss) || !total.all_finite()) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss (policy " << sum.policy_loss << ", value "
            << sum.value_loss << ", entropy " << sum.entropy << ", approx_kl " << sum.approx_kl
            << ") at pass " << pass << ", minibatch starting at episode " << start;
        throw NumericError(msg.str());
      }
      diag.grad_norm = clip_grad_norm({&total}, cfg.max_grad_norm);
      adam_step(params, total, adam);

      if (first) diag.max_ratio_deviation = sum.max_dev;
      first = false;
      diag.policy_loss += sum.policy_loss;
      diag.value_loss += sum.value_loss;
      diag.entropy += sum.entropy;
      diag.approx_kl += sum.approx_kl;
      clipped += sum.clipped;
      total_steps += steps;
      ++minibatches;
    }
  }
  const auto m = static_cast<double>(minibatches);
  diag.policy_loss /= m;
  diag.value_loss /= m;
  diag.entropy /= m;
  diag.approx_kl /= m;
  diag.clip_fraction = static_cast<double>(clipped) / static_cast<double>(total_steps);
  return diag;
}

RLResult train_rl(RLInit& init, const DanceEnv& env, const std::vector<TrackPtr>& tracks,
                  const RewardFn& reward, const PPOConfig& cfg) {
  cfg.validate();
  if (tracks.empty()) throw InputError("train_rl: no training tracks");
  AdamState adam(init.params, AdamConfig{.learning_rate = cfg.learning_rate,
                                         .weight_decay = cfg.weight_decay,
                                         .decoupled = true});
  Rng track_rng(derive_seed(cfg.seed, "tracks"));
  Rng update_rng(derive_seed(cfg.seed, "minibatches"));
  const std::uint64_t rollout_seed = derive_seed(cfg.seed, "rollouts");
  std::vector<std::size_t> order(tracks.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  RunningNormalizer reward_norm;
  RLResult result;
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<TrackPtr> batch;
    for (int e = 0; e < cfg.batch_episodes; ++e) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), track_rng);
        cursor = 0;
      }
      batch.push_back(tracks[order[cursor++]]);
    }
    RolloutBuffer buffer = collect_rollouts(init.model, init.params, env, batch,
                                            derive_seed(rollout_seed, static_cast<std::uint64_t>(it)));
    score_rollouts(buffer, init.reference, init.reference_params, init.model, init.params, reward,
                   cfg.kl_beta);
    if (cfg.normalize_rewards) standardize_rewards(buffer, reward_norm, cfg.kl_beta);
    compute_advantages(buffer, cfg.gamma, cfg.gae_lambda, cfg.advantage, cfg.normalize_advantages);

    RLIterationLog log;
    log.iteration = it + 1;
    std::size_t steps = 0;
    for (const Episode& ep : buffer.episodes) {
      log.mean_model_return += std::accumulate(ep.model_reward.begin(), ep.model_reward.end(), 0.0);
      log.mean_true_return += true_return(env.config(), ep.traj);
      log.mean_kl += std::accumulate(ep.kl.begin(), ep.kl.end(), 0.0);
      steps += ep.kl.size();
    }
    const auto n = static_cast<double>(buffer.episodes.size());
    log.mean_model_return /= n;
    log.mean_true_return /= n;
    log.mean_kl /= static_cast<double>(steps);
    log.diag = ppo_update(init.model, init.params, adam, buffer, cfg, update_rng);
    buffer.clear();
    result.max_mean_kl = std::max(result.max_mean_kl, log.mean_kl);
    result.log.push_back(log);
  }
  if (init.reference_params.fingerprint() != init.reference_fingerprint)
    throw ContractError("train_rl: reference policy changed during training");
  result.kl_within_ceiling = result.max_mean_kl <= cfg.kl_ceiling;
  return result;
}

std::vector<Trajectory> sample_policy_episodes(const PolicyNet& net, const Parameters& params,
                                               const DanceEnv& env,
                                               const std::vector<TrackPtr>& tracks,
                                               std::size_t count, std::uint64_t seed) {
  if (tracks.empty()) throw InputError("sample_policy_episodes: no tracks");
  std::vector<Trajectory> out(count);
  kernels::parallel_for(count, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    out[i] = rollout_with_noise(net, params, env, 0.0, tracks[i % tracks.size()], rng);
  });
  return out;
}

}  // namespace dancerl
