#include "dancerl/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"
#include "dancerl/core/loss.hpp"

namespace dancerl {

std::vector<std::size_t> decision_positions(const TokenSeq& seq) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq.kind[i] == TokenKind::Music && seq.timestep[i] >= 1) pos.push_back(i);
  return pos;
}

PolicyNet PolicyNet::create(Parameters& params, const EnvConfig& env, const EncoderShape& shape,
                            Rng& rng) {
  shape.validate("policy");
  PolicyNet net;
  net.shape = shape;
  net.codes = env.codes_per_half;
  const auto dim = static_cast<std::size_t>(shape.dim);
  net.embed = TokenEmbedding::create(params, "policy.embed", static_cast<std::size_t>(env.feature_dim),
                                     static_cast<std::size_t>(env.codes_per_half),
                                     static_cast<std::size_t>(env.horizon), dim, rng, shape.init_std);
  for (int b = 0; b < shape.blocks; ++b)
    net.blocks.push_back(TransformerBlock::create(
        params, "policy.block" + std::to_string(b), dim, static_cast<std::size_t>(shape.heads),
        dim * static_cast<std::size_t>(shape.ffn_mult), rng, shape.init_std,
        static_cast<std::size_t>(shape.window)));
  net.head_upper = Linear::create(params, "policy.head_upper", dim,
                                  static_cast<std::size_t>(env.codes_per_half), rng, shape.init_std);
  net.head_lower = Linear::create(params, "policy.head_lower", dim,
                                  static_cast<std::size_t>(env.codes_per_half), rng, shape.init_std);
  return net;
}

PolicyNet::Logits PolicyNet::heads(const Parameters& params, const Tensor& gathered) const {
  Logits out;
  out.upper = head_upper.forward(params, gathered);
  out.lower = head_lower.forward(params, gathered);
  return out;
}

namespace {
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out = Tensor::matrix(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(x.data() + rows[r] * x.cols(), x.cols(), out.data() + r * x.cols());
  return out;
}
}  // namespace

PolicyNet::Logits PolicyNet::forward(const Parameters& params, const TokenSeq& seq,
                                     Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  Tensor x = embed.forward(params, seq);
  c.hidden = forward_blocks(params, blocks, std::move(x), c.blocks);
  c.positions = decision_positions(seq);
  c.gathered = gather_rows(c.hidden, c.positions);
  Logits out = heads(params, c.gathered);
  out.positions = c.positions;
  return out;
}

void PolicyNet::backward(const Parameters& params, const TokenSeq& seq, const Cache& c,
                         const Tensor& d_upper, const Tensor& d_lower, Gradients& grads) const {
  Tensor dg = head_upper.backward(params, c.gathered, d_upper, grads);
  Tensor dl = head_lower.backward(params, c.gathered, d_lower, grads);
  for (std::size_t i = 0; i < dg.size(); ++i) dg[i] += dl[i];
  Tensor dh = Tensor::matrix(c.hidden.rows(), c.hidden.cols());
  for (std::size_t r = 0; r < c.positions.size(); ++r)
    for (std::size_t d = 0; d < dh.cols(); ++d) dh(c.positions[r], d) += dg(r, d);
  Tensor dx = backward_blocks(params, blocks, c.blocks, std::move(dh), grads);
  embed.backward(params, seq, dx, grads);
}

ActionLogits policy_forward(const PolicyNet& net, const Parameters& params, const TokenSeq& state) {
  const std::size_t n = state.size();
  if (n < 3 || n % 2 == 0) throw InputError("policy_forward: state must hold 2t+3 tokens");
  for (std::size_t i = 0; i < n; ++i) {
    const TokenKind want = (i % 2 == 0) ? TokenKind::Music : TokenKind::Pose;
    if (state.kind[i] != want || state.timestep[i] != static_cast<int>(i / 2))
      throw InputError("policy_forward: tokens must alternate music/pose with matching timesteps");
  }
  PolicyNet::Logits l = net.forward(params, state);
  const std::size_t last = l.upper.rows() - 1;
  ActionLogits out;
  out.upper.assign(l.upper.row(last).begin(), l.upper.row(last).end());
  out.lower.assign(l.lower.row(last).begin(), l.lower.row(last).end());
  return out;
}

double joint_log_prob(const ActionLogits& logits, PoseCode action) {
  return log_softmax(logits.upper)[static_cast<std::size_t>(action.upper)] +
         log_softmax(logits.lower)[static_cast<std::size_t>(action.lower)];
}

namespace {
double entropy_of(const std::vector<double>& logits) {
  const auto lp = log_softmax(logits);
  double h = 0.0;
  for (double v : lp) h -= std::exp(v) * v;
  return h;
}

double kl_of(const std::vector<double>& p, const std::vector<double>& q) {
  const auto lp = log_softmax(p);
  const auto lq = log_softmax(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return kl;
}

int sample_categorical(const std::vector<double>& logits, Rng& rng) {
  const auto p = softmax(logits);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u above the final cumulative sum: take the last code with mass.
  for (std::size_t i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return static_cast<int>(i);
  return 0;
}
}  // namespace

double joint_entropy(const ActionLogits& logits) {
  return entropy_of(logits.upper) + entropy_of(logits.lower);
}

double joint_kl(const ActionLogits& p, const ActionLogits& q) {
  return kl_of(p.upper, q.upper) + kl_of(p.lower, q.lower);
}

PoseCode sample_action(const ActionLogits& logits, Rng& rng, double eps) {
  if (eps < 0.0 || eps > 1.0) throw InputError("sample_action: eps must lie in [0, 1]");
  const int codes = static_cast<int>(logits.upper.size());
  bool random = eps >= 1.0;
  if (eps > 0.0 && eps < 1.0) random = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps;
  if (random) {
    const int joint = std::uniform_int_distribution<int>(0, codes * codes - 1)(rng);
    return PoseCode::from_joint(joint, codes);
  }
  const int u = sample_categorical(logits.upper, rng);
  const int l = sample_categorical(logits.lower, rng);
  return {u, l};
}

double behavior_log_prob(const ActionLogits& logits, PoseCode action, double eps) {
  const double codes = static_cast<double>(logits.upper.size());
  const double lp = joint_log_prob(logits, action);
  if (eps <= 0.0) return lp;
  if (eps >= 1.0) return -std::log(codes * codes);
  return log_add_exp(std::log1p(-eps) + lp, std::log(eps) - std::log(codes * codes));
}

PolicySession::PolicySession(const PolicyNet& net, const Parameters& params)
    : net_(net), params_(params), kv_(net.blocks.size()) {}

void PolicySession::push(const TokenSeq& one) {
  net_.embed.check(one);
  std::vector<double> row(net_.embed.dim);
  net_.embed.embed_one(params_, one, 0, row.data());
  last_ = step_blocks(params_, net_.blocks, kv_, std::move(row));
}

void PolicySession::push_music(const double* features, int timestep) {
  TokenSeq one;
  one.push_music(features, timestep);
  push(one);
}

void PolicySession::push_pose(PoseCode pose, int timestep) {
  TokenSeq one;
  one.push_pose(pose, timestep);
  push(one);
}

ActionLogits PolicySession::logits() const {
  ActionLogits out;
  out.upper.resize(static_cast<std::size_t>(net_.codes));
  out.lower.resize(static_cast<std::size_t>(net_.codes));
  net_.head_upper.forward_row(params_, last_.data(), out.upper.data());
  net_.head_lower.forward_row(params_, last_.data(), out.lower.data());
  return out;
}

// ------------------------------------------------------------------ BC

void BCConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw ConfigError("bc: epochs and batch_size must be positive");
  if (learning_rate <= 0.0 || grad_clip <= 0.0)
    throw ConfigError("bc: learning_rate and grad_clip must be positive");
  if (weight_decay < 0.0) throw ConfigError("bc: weight_decay must be >= 0");
}

double bc_trajectory_loss(const PolicyNet& net, const Parameters& params, const Trajectory& traj,
                          Gradients* grads) {
  const TokenSeq seq = trajectory_tokens(traj);
  PolicyNet::Cache cache;
  PolicyNet::Logits logits = net.forward(params, seq, &cache);
  const int n = traj.decisions();
  std::vector<int> up(static_cast<std::size_t>(n)), lo(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    up[static_cast<std::size_t>(t)] = traj.action(t).upper;
    lo[static_cast<std::size_t>(t)] = traj.action(t).lower;
  }
  LossAndGrad lu = softmax_cross_entropy(logits.upper, up);
  LossAndGrad ll = softmax_cross_entropy(logits.lower, lo);
  if (grads) net.backward(params, seq, cache, lu.grad, ll.grad, *grads);
  return lu.loss + ll.loss;
}

BCResult bc_train(const PolicyNet& net, Parameters& params, const std::vector<Trajectory>& experts,
                  const BCConfig& cfg) {
  cfg.validate();
  if (experts.empty()) throw InputError("bc_train: empty expert dataset");
  BCResult result;
  {
    std::vector<double> losses(experts.size());
    kernels::parallel_for(experts.size(), [&](std::size_t i) {
      losses[i] = bc_trajectory_loss(net, params, experts[i], nullptr);
    });
    result.initial_loss = std::accumulate(losses.begin(), losses.end(), 0.0) /
                          static_cast<double>(losses.size());
  }

  AdamState adam(params, AdamConfig{.learning_rate = cfg.learning_rate,
                                    .weight_decay = cfg.weight_decay,
                                    .decoupled = false});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(experts.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<Gradients> per(n, Gradients(params));
      std::vector<double> losses(n);
      kernels::parallel_for(n, [&](std::size_t i) {
        losses[i] = bc_trajectory_loss(net, params, experts[order[start + i]], &per[i]);
      });
      Gradients total(params);
      for (std::size_t i = 0; i < n; ++i) {
        total.accumulate(per[i], 1.0 / static_cast<double>(n));
        epoch_loss += losses[i];
      }
      clip_grad_norm({&total}, cfg.grad_clip);
      adam_step(params, total, adam);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

namespace {
std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}
}  // namespace

PoseAccuracy bc_eval_accuracy(const PolicyNet& net, const Parameters& params,
                              const std::vector<Trajectory>& trajectories) {
  std::vector<std::size_t> complete(trajectories.size()), partial(trajectories.size()),
      count(trajectories.size());
  kernels::parallel_for(trajectories.size(), [&](std::size_t k) {
    const Trajectory& traj = trajectories[k];
    PolicyNet::Logits l = net.forward(params, trajectory_tokens(traj));
    for (int t = 0; t < traj.decisions(); ++t) {
      const auto r = static_cast<std::size_t>(t);
      const bool up = static_cast<int>(argmax_lowest(l.upper.row(r))) == traj.action(t).upper;
      const bool lo = static_cast<int>(argmax_lowest(l.lower.row(r))) == traj.action(t).lower;
      complete[k] += (up && lo);
      partial[k] += (up || lo);
      ++count[k];
    }
  });
  PoseAccuracy acc;
  std::size_t c = 0, p = 0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    c += complete[k];
    p += partial[k];
    acc.positions += count[k];
  }
  if (acc.positions > 0) {
    acc.complete = static_cast<double>(c) / static_cast<double>(acc.positions);
    acc.partial = static_cast<double>(p) / static_cast<double>(acc.positions);
  }
  return acc;
}

}  // namespace dancerl
