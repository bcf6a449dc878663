#include "dancerl/reward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"

namespace dancerl {

RewardNet RewardNet::create(Parameters& params, const EnvConfig& env, const EncoderShape& shape,
                            Rng& rng) {
  shape.validate("reward model");
  RewardNet net;
  net.shape = shape;
  const auto dim = static_cast<std::size_t>(shape.dim);
  net.embed = TokenEmbedding::create(params, "reward.embed", static_cast<std::size_t>(env.feature_dim),
                                     static_cast<std::size_t>(env.codes_per_half),
                                     static_cast<std::size_t>(env.horizon), dim, rng, shape.init_std);
  for (int b = 0; b < shape.blocks; ++b)
    net.blocks.push_back(TransformerBlock::create(
        params, "reward.block" + std::to_string(b), dim, static_cast<std::size_t>(shape.heads),
        dim * static_cast<std::size_t>(shape.ffn_mult), rng, shape.init_std,
        static_cast<std::size_t>(shape.window)));
  net.head = Linear::create(params, "reward.head", 2 * dim, 1, rng, shape.init_std);
  // Zero head: every snippet scores u = 0, so the first ranking loss is exactly ln 2.
  for (double& w : params[net.head.weight].storage()) w = 0.0;
  return net;
}

namespace {
void check_snippet(const TokenSeq& seq) {
  const std::size_t n = seq.size();
  if (n == 0 || n % 2 != 0) throw InputError("reward model: token count must be even and non-zero");
  for (std::size_t i = 0; i < n; i += 2) {
    if (seq.kind[i] != TokenKind::Music || seq.kind[i + 1] != TokenKind::Pose)
      throw InputError("reward model: tokens must alternate music, pose");
    if (seq.timestep[i] < 1 || seq.timestep[i] != seq.timestep[i + 1])
      throw InputError("reward model: step pairs need matching timesteps >= 1");
  }
}
}  // namespace

std::vector<double> RewardNet::forward(const Parameters& params, const TokenSeq& seq, Cache* cache,
                                       const TransformerBlock::DropoutSet& dropout) const {
  check_snippet(seq);
  Cache local;
  Cache& c = cache ? *cache : local;
  c.hidden = forward_blocks(params, blocks, embed.forward(params, seq), c.blocks, dropout);
  const std::size_t steps = seq.size() / 2;
  const std::size_t dim = c.hidden.cols();
  c.joint = Tensor::matrix(steps, 2 * dim);
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy_n(c.hidden.data() + (2 * t) * dim, dim, c.joint.data() + t * 2 * dim);
    std::copy_n(c.hidden.data() + (2 * t + 1) * dim, dim, c.joint.data() + t * 2 * dim + dim);
  }
  const Tensor r = head.forward(params, c.joint);
  return std::vector<double>(r.values().begin(), r.values().end());
}

void RewardNet::backward(const Parameters& params, const TokenSeq& seq, const Cache& c,
                         std::span<const double> d_rewards, Gradients& grads) const {
  const std::size_t steps = c.joint.rows();
  if (d_rewards.size() != steps) throw ContractError("reward backward: gradient size mismatch");
  Tensor dr = Tensor::matrix(steps, 1);
  std::copy(d_rewards.begin(), d_rewards.end(), dr.data());
  const Tensor dj = head.backward(params, c.joint, dr, grads);
  const std::size_t dim = c.hidden.cols();
  Tensor dh = Tensor::matrix(c.hidden.rows(), dim);
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy_n(dj.data() + t * 2 * dim, dim, dh.data() + (2 * t) * dim);
    std::copy_n(dj.data() + t * 2 * dim + dim, dim, dh.data() + (2 * t + 1) * dim);
  }
  embed.backward(params, seq, backward_blocks(params, blocks, c.blocks, std::move(dh), grads), grads);
}

RewardOutput reward_forward(const RewardNet& net, const Parameters& params, const TokenSeq& seq) {
  RewardOutput out;
  out.rewards = net.forward(params, seq);
  for (double r : out.rewards) out.total += r;
  return out;
}

namespace {
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
}  // namespace

double ranking_prob(double u_first, double u_second) { return sigmoid(u_second - u_first); }

PairLoss pair_loss(double u_first, double u_second, int label) {
  if (label != 0 && label != 1) throw InputError("pair label must be 0 or 1");
  // label 0: first is worse, loss = -log sigmoid(u2 - u1) = softplus(u1 - u2).
  const double d = label == 0 ? u_first - u_second : u_second - u_first;
  PairLoss out;
  out.loss = softplus(d);
  const double s = sigmoid(d);
  out.d_first = label == 0 ? s : -s;
  out.d_second = -out.d_first;
  return out;
}

double rm_loss(std::span<const double> u_first, std::span<const double> u_second,
               std::span<const int> labels) {
  if (u_first.size() != u_second.size() || u_first.size() != labels.size())
    throw InputError("rm_loss: size mismatch");
  if (labels.empty()) throw InputError("rm_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += pair_loss(u_first[i], u_second[i], labels[i]).loss;
  return total / static_cast<double>(labels.size());
}

void RMConfig::validate() const {
  shape.validate("reward model");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("reward model: dropout must lie in [0, 1)");
  if (epochs < 1 || batch_size < 1) throw ConfigError("reward model: epochs and batch_size must be >= 1");
  if (learning_rate <= 0.0 || weight_decay < 0.0 || grad_clip <= 0.0 ||
      final_lr_fraction <= 0.0 || final_lr_fraction > 1.0)
    throw ConfigError("reward model: bad optimiser settings");
  if (window < 1) throw ConfigError("reward model: window must be >= 1");
  if (train_pairs < 1 || heldout_pairs < 1) throw ConfigError("reward model: pair counts must be >= 1");
}

namespace {
double snippet_return(const RewardNet& net, const Parameters& params, const Trajectory& traj,
                      int start, int window) {
  return reward_forward(net, params, snippet_tokens(traj, start, window)).total;
}
}  // namespace

double rm_rank_accuracy(const RewardNet& net, const Parameters& params, const RankedDemoSet& set,
                        std::span<const SnippetPair> pairs) {
  if (pairs.empty()) throw InputError("rm_rank_accuracy: no pairs");
  std::vector<int> correct(pairs.size());
  kernels::parallel_for(pairs.size(), [&](std::size_t i) {
    const SnippetPair& p = pairs[i];
    const double u1 = snippet_return(net, params, first_trajectory(set, p), p.start_first, p.window);
    const double u2 = snippet_return(net, params, second_trajectory(set, p), p.start_second, p.window);
    correct[i] = p.label == 1 ? (u1 > u2) : (u2 > u1);
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
         static_cast<double>(pairs.size());
}

RMResult rm_train(const RewardNet& net, Parameters& params, const RankedDemoSet& train,
                  const RankedDemoSet& heldout, const RMConfig& cfg) {
  cfg.validate();
  const std::vector<SnippetPair> monitor_pairs = sample_snippet_pairs(
      train, cfg.heldout_pairs, cfg.window, derive_seed(cfg.seed, "train-monitor"));
  const std::vector<SnippetPair> test_pairs = sample_snippet_pairs(
      heldout, cfg.heldout_pairs, cfg.window, derive_seed(cfg.seed, "heldout-pairs"));

  AdamState adam(params, AdamConfig{.learning_rate = cfg.learning_rate,
                                    .weight_decay = cfg.weight_decay,
                                    .decoupled = cfg.decoupled_decay});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  RMResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    adam.config.learning_rate = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
    // Fresh pairs every epoch.
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));
    const std::vector<SnippetPair> pairs =
        sample_snippet_pairs(train, cfg.train_pairs, cfg.window, derive_seed(epoch_seed, "pairs"));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += bs) {
      const std::size_t n = std::min(bs, pairs.size() - start);
      std::vector<Gradients> per(n, Gradients(params));
      std::vector<double> losses(n);
      kernels::parallel_for(n, [&](std::size_t i) {
        const std::size_t idx = start + i;
        const SnippetPair& p = pairs[idx];
        Rng drop_rng(derive_seed(epoch_seed, idx));
        const TransformerBlock::DropoutSet drop{{cfg.dropout, &drop_rng}, {cfg.dropout, &drop_rng}};
        const TokenSeq s1 = snippet_tokens(first_trajectory(train, p), p.start_first, p.window);
        const TokenSeq s2 = snippet_tokens(second_trajectory(train, p), p.start_second, p.window);
        RewardNet::Cache c1, c2;
        const std::vector<double> r1 = net.forward(params, s1, &c1, drop);
        const std::vector<double> r2 = net.forward(params, s2, &c2, drop);
        const double u1 = std::accumulate(r1.begin(), r1.end(), 0.0);
        const double u2 = std::accumulate(r2.begin(), r2.end(), 0.0);
        const PairLoss pl = pair_loss(u1, u2, p.label);
        losses[i] = pl.loss;
        net.backward(params, s1, c1, std::vector<double>(r1.size(), pl.d_first), per[i]);
        net.backward(params, s2, c2, std::vector<double>(r2.size(), pl.d_second), per[i]);
      });
      Gradients total(params);
      for (std::size_t i = 0; i < n; ++i) {
        total.accumulate(per[i], 1.0 / static_cast<double>(n));
        epoch_loss += losses[i];
      }
      if (!total.all_finite()) throw NumericError("rm_train: non-finite gradient");
      clip_grad_norm({&total}, cfg.grad_clip);
      adam_step(params, total, adam);
    }
    RMEpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = epoch_loss / static_cast<double>(pairs.size());
    log.train_accuracy = rm_rank_accuracy(net, params, train, monitor_pairs);
    log.heldout_accuracy = rm_rank_accuracy(net, params, heldout, test_pairs);
    result.epochs.push_back(log);
  }
  return result;
}

std::vector<double> sparse_reward(const RewardNet& net, const Parameters& params,
                                  const Trajectory& traj) {
  const int horizon = traj.track ? traj.track->length : 0;
  if (horizon < 1 || traj.poses.size() != static_cast<std::size_t>(horizon) + 1)
    throw InputError("sparse_reward: trajectory is incomplete");
  std::vector<double> r(static_cast<std::size_t>(horizon), 0.0);
  r.back() = reward_forward(net, params, snippet_tokens(traj, 0, horizon)).total;
  return r;
}

void RunningNormalizer::update(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

double RunningNormalizer::normalize(double x) const {
  return (x - mean_) / std::sqrt(variance() + 1e-8);
}

}  // namespace dancerl
