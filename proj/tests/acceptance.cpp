// Acceptance suite: one PASS/FAIL line per criterion. Exit status 0 iff all pass.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "dancerl/core/adam.hpp"
#include "dancerl/core/gradcheck.hpp"
#include "dancerl/core/layers.hpp"
#include "dancerl/core/loss.hpp"
#include "dancerl/io/checkpoint.hpp"
#include "dancerl/pipeline/stages.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace dancerl;
using namespace dancerl::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class Fn>
auto timed(double& secs, Fn&& fn) {
  const auto t0 = Clock::now();
  auto r = fn();
  secs = seconds_since(t0);
  return r;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  explicit Report(std::ostream& mirror) : mirror_(mirror) {}
  void add(int id, const std::string& name, const Verdict& v) {
    std::ostringstream line;
    line << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail;
    std::cout << line.str() << std::endl;
    mirror_ << line.str() << "\n";
    mirror_.flush();
    failures_ += !v.pass;
  }
  void error(int id, const std::string& name, const std::exception& e) {
    add(id, name, Verdict{false, std::string("threw: ") + e.what()});
  }
  int failures() const { return failures_; }

 private:
  std::ostream& mirror_;
  int failures_ = 0;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Verdict gradient_criterion() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const std::size_t L = 5, D = 8;
  std::vector<std::pair<std::string, GradCheckReport>> reports;

  auto layer = [&](const std::string& name, Parameters& p, std::size_t in_dim, const ScalarFn& f, const GradientFn& g) {
    reports.emplace_back(name, gradient_check(p, random_matrix(L, in_dim, rng), f, g));
  };

  {
    Parameters p;
    Linear l = Linear::create(p, "l", D, 6, rng, 0.5);
    shake(p, rng, 0.3);
    const Tensor w = random_matrix(L, 6, rng);
    layer("linear", p, D, [&](const Parameters& ps, const Tensor& x) { return weighted_sum(l.forward(ps, x), w); },
          [&](const Parameters& ps, const Tensor& x, Gradients& gr, Tensor& dx) { dx = l.backward(ps, x, w, gr); });
  }
  {
    Parameters p;
    LayerNorm ln = LayerNorm::create(p, "ln", D);
    shake(p, rng, 0.3);
    const Tensor w = random_matrix(L, D, rng);
    layer("layer_norm", p, D,
          [&](const Parameters& ps, const Tensor& x) {
            LayerNorm::Cache c;
            return weighted_sum(ln.forward(ps, x, c), w);
          },
          [&](const Parameters& ps, const Tensor& x, Gradients& gr, Tensor& dx) {
            LayerNorm::Cache c;
            ln.forward(ps, x, c);
            dx = ln.backward(ps, c, w, gr);
          });
  }
  for (std::size_t window : {std::size_t{0}, std::size_t{3}}) {
    Parameters p;
    CausalSelfAttention a = CausalSelfAttention::create(p, "a", D, 2, rng, 0.4, window);
    shake(p, rng, 0.1);
    const Tensor w = random_matrix(L, D, rng);
    layer(window ? "attention_windowed" : "attention", p, D,
          [&](const Parameters& ps, const Tensor& x) {
            CausalSelfAttention::Cache c;
            return weighted_sum(a.forward(ps, x, c), w);
          },
          [&](const Parameters& ps, const Tensor& x, Gradients& gr, Tensor& dx) {
            CausalSelfAttention::Cache c;
            a.forward(ps, x, c);
            dx = a.backward(ps, c, w, gr);
          });
  }
  {
    Parameters p;
    FeedForward ff = FeedForward::create(p, "ff", D, 16, rng, 0.4);
    shake(p, rng, 0.1);
    const Tensor w = random_matrix(L, D, rng);
    layer("feed_forward", p, D,
          [&](const Parameters& ps, const Tensor& x) {
            FeedForward::Cache c;
            return weighted_sum(ff.forward(ps, x, c), w);
          },
          [&](const Parameters& ps, const Tensor& x, Gradients& gr, Tensor& dx) {
            FeedForward::Cache c;
            ff.forward(ps, x, c);
            dx = ff.backward(ps, c, w, gr);
          });
  }
  {
    Parameters p;
    TransformerBlock b = TransformerBlock::create(p, "b", D, 2, 16, rng, 0.4);
    shake(p, rng, 0.1);
    const Tensor w = random_matrix(L, D, rng);
    layer("transformer_block", p, D,
          [&](const Parameters& ps, const Tensor& x) {
            TransformerBlock::Cache c;
            return weighted_sum(b.forward(ps, x, c), w);
          },
          [&](const Parameters& ps, const Tensor& x, Gradients& gr, Tensor& dx) {
            TransformerBlock::Cache c;
            b.forward(ps, x, c);
            dx = b.backward(ps, c, w, gr);
          });
  }
  {
    Parameters p;
    Linear head = Linear::create(p, "head", D, 7, rng, 0.5);
    const std::vector<int> targets{0, 6, 3, 3, 1};
    layer("cross_entropy_head", p, D,
          [&](const Parameters& ps, const Tensor& x) { return softmax_cross_entropy(head.forward(ps, x), targets).loss; },
          [&](const Parameters& ps, const Tensor& x, Gradients& gr, Tensor& dx) {
            dx = head.backward(ps, x, softmax_cross_entropy(head.forward(ps, x), targets).grad, gr);
          });
  }

  const EnvConfig env = small_env();
  const DanceEnv dance(env);
  const auto tracks = generate_tracks(env, 4, 102);
  const EncoderShape shape{.dim = 6, .heads = 2, .blocks = 1, .ffn_mult = 2};
  {
    Parameters p;
    Rng init(103);
    const PolicyNet net = PolicyNet::create(p, env, shape, init);
    shake_seeded(p, 104, 0.5);
    Rng er(105);
    const Trajectory traj = expert_rollout(dance, tracks[1], er);
    reports.emplace_back("policy_network",
                         gradient_check(p, Tensor{},
                                        [&](const Parameters& ps, const Tensor&) { return bc_trajectory_loss(net, ps, traj, nullptr); },
                                        [&](const Parameters& ps, const Tensor&, Gradients& g, Tensor&) { bc_trajectory_loss(net, ps, traj, &g); }));
  }
  {
    Parameters p;
    Rng init(106);
    const RewardNet net = RewardNet::create(p, env, shape, init);
    shake_seeded(p, 107, 1.0);
    Rng er(108);
    const Trajectory a = expert_rollout(dance, tracks[0], er), b = expert_rollout(dance, tracks[2], er);
    const TokenSeq sa = snippet_tokens(a, 1, 4), sb = snippet_tokens(b, 0, 4);
    const std::vector<double> wa = random_matrix(1, 4, er).storage(), wb = random_matrix(1, 4, er).storage();
    auto dot = [](const std::vector<double>& x, const std::vector<double>& w) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
      return s;
    };
    reports.emplace_back("reward_network",
                         gradient_check(p, Tensor{},
                                        [&](const Parameters& ps, const Tensor&) {
                                          return dot(net.forward(ps, sa), wa) + dot(net.forward(ps, sb), wb);
                                        },
                                        [&](const Parameters& ps, const Tensor&, Gradients& g, Tensor&) {
                                          RewardNet::Cache ca, cb;
                                          net.forward(ps, sa, &ca);
                                          net.forward(ps, sb, &cb);
                                          net.backward(ps, sa, ca, wa, g);
                                          net.backward(ps, sb, cb, wb, g);
                                        }));
  }
  {
    Parameters bp;
    Rng init(109);
    const EncoderShape two{.dim = 6, .heads = 2, .blocks = 2, .ffn_mult = 2};
    const PolicyNet bc = PolicyNet::create(bp, env, two, init);
    PPOConfig pc;
    RLInit rl = init_rl_from_bc(bc, bp, env, pc);
    shake_seeded(rl.params, 110, 0.5);
    Rng er(111);
    const Trajectory traj = rollout_with_noise(bc, bp, dance, 0.5, tracks[3], er);
    const TokenSeq seq = trajectory_tokens(traj);
    const auto steps = static_cast<std::size_t>(env.horizon), codes = static_cast<std::size_t>(env.codes_per_half);
    const Tensor wu = random_matrix(steps, codes, er), wl = random_matrix(steps, codes, er);
    const std::vector<double> wv = random_matrix(1, steps, er).storage();
    reports.emplace_back("actor_critic",
                         gradient_check(rl.params, Tensor{},
                                        [&](const Parameters& ps, const Tensor&) {
                                          const auto out = rl.model.forward(ps, seq);
                                          double s = weighted_sum(out.logits.upper, wu) + weighted_sum(out.logits.lower, wl);
                                          for (std::size_t t = 0; t < steps; ++t) s += wv[t] * out.values[t];
                                          return s;
                                        },
                                        [&](const Parameters& ps, const Tensor&, Gradients& g, Tensor&) {
                                          ActorCritic::Cache c;
                                          rl.model.forward(ps, seq, &c);
                                          rl.model.backward(ps, seq, c, wu, wl, wv, g);
                                        }));
  }

  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  std::string worst_name;
  double worst = 0.0;
  for (const auto& [name, r] : reports) {
    ok &= r.passed(1e-5);
    if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = name + " " + r.worst;
  }
  return {ok, std::to_string(reports.size()) + " layers/networks, worst rel error " + fmt(worst, 3) + " at " +
                  worst_name + " (< 1e-05), " + fmt(secs, 3) + " s (< 60 s)"};
}

double iterative_return(const tabular::TabularMDP& m, const tabular::Table& pi, const tabular::Table& r) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m.states());
  for (int it = 0; it < 3000; ++it) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(m.states());
    for (int s = 0; s < m.states(); ++s)
      for (int a = 0; a < m.actions(); ++a)
        next(s) += pi(s, a) * (r(s, a) + m.gamma() * m.transition(a).row(s).dot(v));
    v = next;
  }
  return m.initial().dot(v);
}

Verdict theorem_criterion() {
  const auto t0 = Clock::now();
  tabular::SweepConfig cfg;
  cfg.instances = 1000;
  cfg.seed = derive_seed(0, "theorem");
  const auto rows = tabular::run_sweep(cfg);
  const tabular::SweepSummary s = tabular::summarize(rows);
  double chain = 0.0, reeval = 0.0;
  for (const auto& r : rows)
    chain = std::max(chain, std::abs(r.report.regret - (r.report.feature_term + r.report.error_diff)));
  for (std::size_t i = 0; i < rows.size(); i += 50) {
    tabular::MDPSizes sizes = cfg.sizes;
    sizes.error_bound = rows[i].error_bound;
    const auto m = tabular::random_mdp(sizes, rows[i].seed);
    const auto rt = m.true_reward();
    const auto star = tabular::value_iteration(m, rt).policy;
    const auto hat = tabular::value_iteration(m, m.learned_reward()).policy;
    reeval = std::max(reeval, std::abs(iterative_return(m, star, rt) - rows[i].report.j_star));
    reeval = std::max(reeval, std::abs(iterative_return(m, hat, rt) - rows[i].report.j_hat));
    reeval = std::max(reeval, std::abs(iterative_return(m, tabular::noisy_tabular_bc(star, rows[i].bc_noise), rt) -
                                       rows[i].report.j_bc));
  }
  const double secs = seconds_since(t0);
  const bool ok = s.instances >= 1000 && s.bound_violations == 0 && s.implication_violations == 0 &&
                  chain < 1e-9 && reeval < 1e-9 && secs < 120.0;
  return {ok, std::to_string(s.instances) + " MDPs, " + std::to_string(s.bound_violations) + " bound and " +
                  std::to_string(s.implication_violations) + " implication violations (condition held in " +
                  std::to_string(s.condition_count) + "), min slack " + fmt(s.min_slack) +
                  ", proof-chain identity err " + fmt(chain, 3) + ", independent re-evaluation err " +
                  fmt(reeval, 3) + " (< 1e-09), " + fmt(secs, 3) + " s (< 120 s)"};
}

Verdict ppo_criterion() {
  Rng rng(201);
  std::normal_distribution<double> n(0.0, 2.0);
  double worst_mc = 0.0, worst_td = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + static_cast<std::size_t>(trial % 40);
    const double gamma = trial % 2 ? 1.0 : 0.95;
    std::vector<double> r(len), v(len);
    for (std::size_t i = 0; i < len; ++i) r[i] = n(rng), v[i] = n(rng);
    const auto gae1 = gae_advantages(r, v, gamma, 1.0), gae0 = gae_advantages(r, v, gamma, 0.0);
    const auto mc = mc_advantages(r, v, gamma);
    for (std::size_t t = 0; t < len; ++t) {
      double g = 0.0, disc = 1.0;
      for (std::size_t k = t; k < len; ++k, disc *= gamma) g += disc * r[k];
      worst_mc = std::max({worst_mc, std::abs(gae1[t] - mc[t]), std::abs(mc[t] - (g - v[t]))});
      worst_td = std::max(worst_td, std::abs(gae0[t] - (r[t] + gamma * (t + 1 < len ? v[t + 1] : 0.0) - v[t])));
    }
  }

  const EnvConfig env = small_env();
  const DanceEnv dance(env);
  Parameters bp;
  Rng init(202);
  const PolicyNet bc = PolicyNet::create(bp, env, small_shape(), init);
  shake_seeded(bp, 203, 0.3);
  PPOConfig cfg;
  cfg.batch_episodes = 8;
  cfg.minibatch_episodes = 4;
  RLInit rl = init_rl_from_bc(bc, bp, env, cfg);
  RolloutBuffer buf = collect_rollouts(rl.model, rl.params, dance, generate_tracks(env, 8, 204), 205);
  score_rollouts(buf, rl.reference, rl.reference_params, rl.model, rl.params,
                 [&](const Trajectory& t) { return hand_designed_step_rewards(env, t, 0.0); }, cfg.kl_beta);
  compute_advantages(buf, cfg.gamma, cfg.gae_lambda, cfg.advantage, true);
  AdamState adam(rl.params, AdamConfig{.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay, .decoupled = true});
  Rng urng(206);
  const PPODiagnostics d = ppo_update(rl.model, rl.params, adam, buf, cfg, urng);
  const bool ok = worst_mc < 1e-10 && worst_td < 1e-10 && d.max_ratio_deviation == 0.0;
  return {ok, "GAE(1) vs MC " + fmt(worst_mc, 3) + ", GAE(0) vs TD " + fmt(worst_td, 3) +
                  " (< 1e-10), first-pass max |ratio - 1| = " + fmt(d.max_ratio_deviation, 3) + " (== 0)"};
}

Verdict metric_criterion() {
  Rng rng(301);
  std::uniform_real_distribution<double> mu(-5.0, 5.0), sd(0.05, 3.0);
  double worst_fid = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double m1 = mu(rng), m2 = mu(rng), s1 = sd(rng), s2 = sd(rng);
    GaussianStats a, b;
    a.mean = Eigen::VectorXd::Constant(1, m1);
    a.cov = Eigen::MatrixXd::Constant(1, 1, s1 * s1);
    b.mean = Eigen::VectorXd::Constant(1, m2);
    b.cov = Eigen::MatrixXd::Constant(1, 1, s2 * s2);
    worst_fid = std::max(worst_fid, std::abs(frechet_distance(a, b) - ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2))));
  }

  EnvConfig cfg;
  double worst_bas = 0.0;
  int cells = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto track = std::make_shared<const MusicTrack>(generate_music(cfg, cfg.horizon, cfg.beat_period, 310 + seed));
    for (double sigma : {0.5, 1.0, 2.0, 3.0})
      for (int delta = 0; 2 * delta <= cfg.beat_period; ++delta) {
        Trajectory t;
        t.track = track;
        t.poses.push_back(kRestPose);
        PoseCode cur = kRestPose;
        std::vector<int> frames;
        for (int b : track->beat_frames)
          if (b + delta < cfg.horizon) frames.push_back(b + delta);
        for (int k = 0; k < cfg.horizon; ++k) {
          if (std::find(frames.begin(), frames.end(), k) != frames.end())
            cur = PoseCode{(cur.upper + 1) % cfg.codes_per_half, cur.lower};
          t.poses.push_back(cur);
        }
        if (frames.size() != track->beat_frames.size()) continue;
        worst_bas = std::max(worst_bas, std::abs(beat_align_score(t, sigma) - std::exp(-delta * delta / (2.0 * sigma * sigma))));
        ++cells;
      }
  }
  const bool ok = worst_fid < 1e-8 && worst_bas < 1e-10 && cells > 0;
  return {ok, "FID 1-D closed form max err " + fmt(worst_fid, 3) + " over 100 draws (< 1e-08), BAS shifted-beat max err " +
                  fmt(worst_bas, 3) + " over " + std::to_string(cells) + " cells (< 1e-10)"};
}

struct StageTimes {
  double bc = 0, collect = 0, rm = 0, rl = 0, eval = 0, theorem = 0;
};

void copy_files(const fs::path& from, const fs::path& to, std::initializer_list<const char*> names) {
  fs::create_directories(to);
  for (const char* n : names) fs::copy_file(from / n, to / n, fs::copy_options::overwrite_existing);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

// Fraction of steps where the moving average (window w) decreases.
std::pair<std::vector<double>, double> smoothed_decreases(const std::vector<double>& x, std::size_t w) {
  std::vector<double> s;
  for (std::size_t i = 0; i + w <= x.size(); ++i) {
    double m = 0.0;
    for (std::size_t k = i; k < i + w; ++k) m += x[k];
    s.push_back(m / static_cast<double>(w));
  }
  std::size_t down = 0;
  for (std::size_t i = 1; i < s.size(); ++i) down += s[i] < s[i - 1];
  return {s, s.size() > 1 ? static_cast<double>(down) / static_cast<double>(s.size() - 1) : 1.0};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the dancerl pipeline"};
  std::string work = "acceptance_work";
  std::string config;
  app.add_option("--out", work, "working directory for pipeline runs")->capture_default_str();
  bool quick = false;
  app.add_flag("--quick", quick, "skip the pipeline-backed criteria 2-5, 9 and 10");
  app.add_option("--config", config, "pipeline config (JSON); defaults apply when omitted")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  const fs::path root = work;
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream summary(root / "acceptance_report.txt");
  std::ofstream log(root / "pipeline.log");
  Report report(summary);

  auto guarded = [&](int id, const std::string& name, const std::function<Verdict()>& fn) {
    try {
      report.add(id, name, fn());
    } catch (const std::exception& e) {
      report.error(id, name, e);
    }
  };

  guarded(1, "gradient correctness", gradient_criterion);
  guarded(6, "theorem verification", theorem_criterion);
  guarded(7, "PPO identities", ppo_criterion);
  guarded(8, "metric closed forms", metric_criterion);

  if (quick) {
    std::cout << report.failures() << " failures among the standalone criteria" << std::endl;
    return report.failures() ? 1 : 0;
  }

  PipelineConfig cfg;
  try {
    cfg = config.empty() ? PipelineConfig{} : load_pipeline_config(config);
    cfg.validate();
  } catch (const std::exception& e) {
    for (int id : {2, 3, 4, 5, 9, 10}) report.error(id, "pipeline configuration", e);
    return 1;
  }

  const fs::path run_a = root / "run_a", run_b = root / "run_b";
  StageTimes t;
  std::optional<PipelineResult> a;
  try {
    fs::create_directories(run_a);
    PipelineResult r;
    write_run_manifest(cfg, run_a);
    r.bc = timed(t.bc, [&] { return stage_train_bc(cfg, run_a, log); });
    r.demos = timed(t.collect, [&] { return stage_collect(cfg, run_a, log); });
    r.rm = timed(t.rm, [&] { return stage_train_rm(cfg, run_a, log); });
    r.rl = timed(t.rl, [&] { return stage_train_rl(cfg, run_a, log); });
    r.eval = timed(t.eval, [&] { return stage_evaluate(cfg, run_a, log); });
    r.theorem = timed(t.theorem, [&] { return stage_verify_theorem(cfg, run_a, log); });
    a = std::move(r);
    log << "stage seconds: bc " << t.bc << ", collect " << t.collect << ", rm " << t.rm << ", rl " << t.rl
        << ", eval " << t.eval << ", theorem " << t.theorem << std::endl;
  } catch (const std::exception& e) {
    for (int id : {2, 3, 4, 5, 9}) report.error(id, "pipeline run", e);
  }

  if (a) {
    guarded(2, "noise monotonicity", [&] {
      PipelineConfig c2 = cfg;
      c2.demos.schedule = {1.0, 0.75, 0.5, 0.25, 0.02};
      c2.demos.per_level = 50;
      const fs::path dir = root / "crit2";
      copy_files(run_a, dir, {artifact::kPolicy});
      double secs = 0.0;
      const CollectStageResult res = timed(secs, [&] { return stage_collect(c2, dir, log); });
      bool ok = res.buckets.size() == 5;
      std::string means;
      for (std::size_t i = 0; i < res.buckets.size(); ++i) {
        if (i > 0) ok &= res.buckets[i].mean_true_return > res.buckets[i - 1].mean_true_return;
        ok &= res.buckets[i].count == 50;
        means += (i ? ", " : "") + std::string("eps ") + fmt(res.buckets[i].noise) + ": " +
                 fmt(res.buckets[i].mean_true_return);
      }
      const double total = t.bc + secs;
      ok &= total < 300.0;
      return Verdict{ok, "K=50 bucket means {" + means + "} strictly ordered; BC + collection " + fmt(total) + " s (< 300 s)"};
    });

    guarded(3, "reward-model accuracy", [&] {
      const RMStageResult& rm = a->rm;
      const double gap = std::abs(rm.seen_accuracy - rm.unseen_accuracy);
      const bool ok = cfg.reward.heldout_pairs >= 1000 && rm.unseen_accuracy >= 0.90 && gap <= 0.05 && t.rm < 600.0;
      return Verdict{ok, "unseen-track accuracy " + fmt(rm.unseen_accuracy) + " on " + std::to_string(cfg.reward.heldout_pairs) +
                             " pairs (>= 0.90), seen " + fmt(rm.seen_accuracy) + ", gap " + fmt(100.0 * gap, 3) +
                             " points (<= 5), " + fmt(t.rm) + " s (< 600 s)"};
    });

    guarded(4, "reward fidelity", [&] {
      const RMStageResult& rm = a->rm;
      const bool ok = rm.spearman >= 0.8 && rm.spearman_count >= 200;
      return Verdict{ok, "Spearman(u, true return) " + fmt(rm.spearman) + " over " + std::to_string(rm.spearman_count) +
                             " mixed-noise trajectories (>= 0.8)"};
    });

    guarded(5, "extrapolation", [&] {
      const EvalSummary& rl = a->eval.at("rl").summary;
      const EvalSummary& bc = a->eval.at("bc").summary;
      const double diff = rl.true_return - bc.true_return;
      const double se = std::sqrt(rl.true_return_se * rl.true_return_se + bc.true_return_se * bc.true_return_se);
      std::vector<double> u;
      for (const RLIterationLog& l : a->rl.learned.log) u.push_back(l.mean_model_return);
      const auto [smooth, frac] = smoothed_decreases(u, 5);
      const bool rises = !smooth.empty() && smooth.back() > smooth.front();
      const bool ok = rl.episodes >= 100 && bc.episodes >= 100 && diff > 2.0 * se && rises && frac <= 0.2 && t.rl < 1800.0;
      return Verdict{ok, "RL " + fmt(rl.true_return) + " vs BC " + fmt(bc.true_return) + " over " + std::to_string(rl.episodes) +
                             " episodes, diff " + fmt(diff) + " = " + fmt(se > 0 ? diff / se : 0.0, 3) +
                             " SE (> 2); smoothed u " + fmt(smooth.empty() ? 0.0 : smooth.front()) + " -> " +
                             fmt(smooth.empty() ? 0.0 : smooth.back()) + ", local decreases " + fmt(100.0 * frac, 3) +
                             "% (<= 20%); PPO stage " + fmt(t.rl) + " s (< 1800 s)"};
    });

    guarded(9, "hand-designed-reward pattern", [&] {
      if (!cfg.hand_reward.enabled) return Verdict{false, "hand_reward.enabled is false"};
      PipelineConfig c9 = cfg;
      c9.eval.episodes = 50;
      const fs::path dir = root / "crit9";
      copy_files(run_a, dir, {artifact::kPolicy, artifact::kReward, artifact::kRL, artifact::kRLHand});
      const EvalStageResult ev = stage_evaluate(c9, dir, log);
      const EvalSummary &bc = ev.at("bc").summary, &hand = ev.at("rl_hand").summary, &rl = ev.at("rl").summary;
      const bool ok = bc.episodes == 50 && hand.bas > bc.bas && hand.div_kinetic < bc.div_kinetic &&
                      rl.div_kinetic >= bc.div_kinetic;
      return Verdict{ok, "50 episodes per cell; BAS bc " + fmt(bc.bas) + " -> hand " + fmt(hand.bas) + " (raised); DIV_k bc " +
                             fmt(bc.div_kinetic) + ", hand " + fmt(hand.div_kinetic) + " (lowered), learned " +
                             fmt(rl.div_kinetic) + " (not lowered); DIV_g bc/hand/learned " + fmt(bc.div_geometric) +
                             " / " + fmt(hand.div_geometric) + " / " + fmt(rl.div_geometric)};
    });

    guarded(10, "determinism", [&] {
      fs::create_directories(run_b);
      run_pipeline(cfg, run_b, log);
      const auto fa = snapshot(run_a), fb = snapshot(run_b);
      std::size_t same = 0;
      std::vector<std::string> diffs;
      for (const auto& [name, bytes] : fa) {
        auto it = fb.find(name);
        if (it != fb.end() && it->second == bytes) ++same;
        else diffs.push_back(name);
      }
      for (const auto& [name, bytes] : fb)
        if (!fa.count(name)) diffs.push_back(name);
      std::size_t ckpts = 0, csvs = 0;
      for (const auto& [name, bytes] : fa) {
        ckpts += name.ends_with(".ckpt");
        csvs += name.ends_with(".csv");
      }
      std::string detail = std::to_string(same) + "/" + std::to_string(fa.size()) + " files byte-identical (" +
                           std::to_string(ckpts) + " checkpoints, " + std::to_string(csvs) + " CSV reports)";
      for (const auto& d : diffs) detail += ", differs: " + d;
      return Verdict{diffs.empty() && ckpts >= 4 && csvs >= 8, detail};
    });
  } else {
    report.add(10, "determinism", Verdict{false, "first pipeline run failed"});
  }

  std::cout << (report.failures() ? std::to_string(report.failures()) + " criteria failed" : "all criteria passed")
            << std::endl;
  return report.failures() ? 1 : 0;
}
