#include "dancerl/pipeline/stages.hpp"

#include <cmath>
#include <json.hpp>

#include "dancerl/core/errors.hpp"
#include "dancerl/io/checkpoint.hpp"
#include "dancerl/io/csv.hpp"
#include "dancerl/io/dataset.hpp"

namespace dancerl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Checkpoint load_checked(const fs::path& path, const std::string& kind, std::uint64_t digest) {
  if (!fs::exists(path)) throw IoError("missing " + kind + " checkpoint " + path.string());
  Checkpoint ckpt = load_checkpoint(path, kind);
  if (ckpt.config_digest != digest)
    throw CheckpointError(path.string() + ": config digest " + hex(ckpt.config_digest) +
                          " does not match the current config (" + hex(digest) + ")");
  return ckpt;
}

RankedDemoSet load_demos(const fs::path& path, const EnvConfig& env) {
  if (!fs::exists(path)) throw IoError("missing demonstration file " + path.string());
  return load_demo_set(path, env);
}

void write_manifest(const fs::path& path, const RankedDemoSet& set, const PipelineConfig& cfg,
                    const std::string& tracks_label, std::size_t track_count) {
  json m;
  m["format"] = "DRLDEMO";
  m["file"] = path.filename().string();
  m["env_digest"] = hex(env_digest(cfg.env));
  m["seed"] = std::to_string(set.seed);
  m["source_checkpoint"] = set.source_checkpoint;
  m["schedule"] = set.levels;
  json counts = json::array();
  for (const auto& b : set.buckets) counts.push_back(b.size());
  m["counts"] = counts;
  m["tracks"] = {{"label", tracks_label},
                 {"count", track_count},
                 {"seed", std::to_string(stage_seed(cfg, tracks_label))}};
  fs::path side = path;
  side.replace_extension(".json");
  write_file(side, m.dump(2) + "\n");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

CsvTable rl_log_table(const RLResult& r) {
  CsvTable t({"iteration", "mean_model_return", "mean_true_return", "mean_kl", "policy_loss",
              "value_loss", "entropy", "approx_kl", "clip_fraction", "grad_norm"});
  for (const RLIterationLog& l : r.log)
    t.row()
        .add(l.iteration)
        .add(l.mean_model_return)
        .add(l.mean_true_return)
        .add(l.mean_kl)
        .add(l.diag.policy_loss)
        .add(l.diag.value_loss)
        .add(l.diag.entropy)
        .add(l.diag.approx_kl)
        .add(l.diag.clip_fraction)
        .add(l.diag.grad_norm);
  return t;
}

template <class Fn>
auto run_stage(const std::string& name, std::ostream& log, Fn&& fn) {
  log << "== " << name << "\n";
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

TrackSets make_tracks(const PipelineConfig& cfg) {
  TrackSets t;
  t.train = generate_tracks(cfg.env, static_cast<std::size_t>(cfg.data.train_tracks), stage_seed(cfg, "tracks-train"));
  t.demos = generate_tracks(cfg.env, static_cast<std::size_t>(cfg.demos.tracks), stage_seed(cfg, "tracks-demos"));
  t.test = generate_tracks(cfg.env, static_cast<std::size_t>(cfg.data.test_tracks), stage_seed(cfg, "tracks-test"));
  return t;
}

std::vector<Trajectory> expert_episodes(const EnvConfig& env, const std::vector<TrackPtr>& tracks,
                                        std::size_t count, std::uint64_t seed) {
  if (tracks.empty()) throw ContractError("expert_episodes: no tracks");
  const DanceEnv de(env);
  std::vector<Trajectory> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    out[i] = expert_rollout(de, tracks[i % tracks.size()], rng);
  }
  return out;
}

LoadedPolicy load_policy(const PipelineConfig& cfg, const fs::path& path) {
  Checkpoint ckpt = load_checked(path, "policy", policy_digest(cfg));
  LoadedPolicy p;
  Rng rng(0);
  p.net = PolicyNet::create(p.params, cfg.env, cfg.policy, rng);
  assign_parameters(p.params, ckpt.params, path.string());
  return p;
}

LoadedReward load_reward(const PipelineConfig& cfg, const fs::path& path) {
  Checkpoint ckpt = load_checked(path, "reward", reward_digest(cfg));
  LoadedReward r;
  Rng rng(0);
  r.net = RewardNet::create(r.params, cfg.env, cfg.reward.shape, rng);
  assign_parameters(r.params, ckpt.params, path.string());
  return r;
}

RLInit load_actor_critic(const PipelineConfig& cfg, const LoadedPolicy& bc, const fs::path& path) {
  Checkpoint ckpt = load_checked(path, "actor-critic", actor_critic_digest(cfg));
  RLInit init = init_rl_from_bc(bc.net, bc.params, cfg.env, cfg.rl);
  assign_parameters(init.params, ckpt.params, path.string());
  return init;
}

void write_run_manifest(const PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  json m;
  m["seed"] = std::to_string(cfg.seed);
  m["config"] = json::parse(pipeline_config_json(cfg));
  m["digests"] = {{"policy", hex(policy_digest(cfg))},
                  {"reward", hex(reward_digest(cfg))},
                  {"actor_critic", hex(actor_critic_digest(cfg))},
                  {"env", hex(env_digest(cfg.env))}};
  write_file(out / artifact::kRunManifest, m.dump(2) + "\n");
}

BCStageResult stage_train_bc(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  const TrackSets tracks = make_tracks(cfg);
  const std::size_t per = static_cast<std::size_t>(cfg.data.expert_per_track);
  const std::vector<Trajectory> experts =
      expert_episodes(cfg.env, tracks.train, tracks.train.size() * per, stage_seed(cfg, "expert-train"));
  const std::vector<Trajectory> test_experts =
      expert_episodes(cfg.env, tracks.test, tracks.test.size() * per, stage_seed(cfg, "expert-test"));

  Parameters params;
  Rng init(stage_seed(cfg, "policy-init"));
  const PolicyNet net = PolicyNet::create(params, cfg.env, cfg.policy, init);
  BCConfig bc = cfg.bc;
  bc.seed = stage_seed(cfg, "bc");
  BCStageResult res;
  res.train = bc_train(net, params, experts, bc);
  res.train_accuracy = bc_eval_accuracy(net, params, experts);
  res.test_accuracy = bc_eval_accuracy(net, params, test_experts);

  save_checkpoint(out / artifact::kPolicy,
                  Checkpoint{"policy", policy_digest(cfg), bc.seed, pipeline_config_json(cfg), params});
  CsvTable loss({"epoch", "loss"});
  loss.row().add(0).add(res.train.initial_loss);
  for (std::size_t e = 0; e < res.train.epoch_losses.size(); ++e)
    loss.row().add(e + 1).add(res.train.epoch_losses[e]);
  loss.save(out / artifact::kBCLoss);
  CsvTable report({"split", "complete_accuracy", "partial_accuracy", "positions"});
  report.row().add("train").add(res.train_accuracy.complete).add(res.train_accuracy.partial).add(res.train_accuracy.positions);
  report.row().add("test").add(res.test_accuracy.complete).add(res.test_accuracy.partial).add(res.test_accuracy.positions);
  report.save(out / artifact::kBCReport);

  log << "bc: " << experts.size() << " expert trajectories, loss " << res.train.initial_loss << " -> "
      << (res.train.epoch_losses.empty() ? res.train.initial_loss : res.train.epoch_losses.back()) << "\n"
      << "bc: pose accuracy train " << res.train_accuracy.complete << " / " << res.train_accuracy.partial
      << ", unseen tracks " << res.test_accuracy.complete << " / " << res.test_accuracy.partial << "\n";
  return res;
}

std::vector<BucketSummary> summarize_buckets(const EnvConfig& env, const RankedDemoSet& set) {
  std::vector<BucketSummary> out;
  for (std::size_t i = 0; i < set.buckets.size(); ++i) {
    std::vector<double> r;
    for (const Trajectory& t : set.buckets[i]) r.push_back(true_return(env, t));
    BucketSummary b;
    b.noise = set.levels[i];
    b.count = r.size();
    b.mean_true_return = mean_of(r);
    double ss = 0.0;
    for (double x : r) ss += (x - b.mean_true_return) * (x - b.mean_true_return);
    if (r.size() > 1) b.se = std::sqrt(ss / static_cast<double>(r.size() - 1) / static_cast<double>(r.size()));
    out.push_back(b);
  }
  return out;
}

CollectStageResult stage_collect(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  const LoadedPolicy bc = load_policy(cfg, out / artifact::kPolicy);
  const TrackSets tracks = make_tracks(cfg);
  const DanceEnv env(cfg.env);
  const NoiseSchedule schedule(cfg.demos.schedule);
  const RankedDemoSet train = build_ranked_dataset(bc.net, bc.params, env, schedule, cfg.demos.per_level,
                                                   tracks.demos, stage_seed(cfg, "demos"), artifact::kPolicy);
  const RankedDemoSet heldout =
      build_ranked_dataset(bc.net, bc.params, env, schedule, cfg.demos.heldout_per_level, tracks.test,
                           stage_seed(cfg, "demos-heldout"), artifact::kPolicy);
  save_demo_set(out / artifact::kDemos, train, cfg.env);
  write_manifest(out / artifact::kDemos, train, cfg, "tracks-demos", tracks.demos.size());
  save_demo_set(out / artifact::kDemosHeldout, heldout, cfg.env);
  write_manifest(out / artifact::kDemosHeldout, heldout, cfg, "tracks-test", tracks.test.size());

  CollectStageResult res;
  res.buckets = summarize_buckets(cfg.env, train);
  CsvTable t({"set", "noise", "count", "mean_true_return", "se"});
  for (const BucketSummary& b : res.buckets)
    t.row().add("train").add(b.noise).add(b.count).add(b.mean_true_return).add(b.se);
  for (const BucketSummary& b : summarize_buckets(cfg.env, heldout))
    t.row().add("heldout").add(b.noise).add(b.count).add(b.mean_true_return).add(b.se);
  t.save(out / artifact::kDemoSummary);

  log << "demos: " << train.total() << " ranked trajectories (" << schedule.size() << " levels x "
      << cfg.demos.per_level << "), " << heldout.total() << " held-out\n";
  for (const BucketSummary& b : res.buckets)
    log << "  eps " << b.noise << ": n " << b.count << ", mean true return " << b.mean_true_return
        << " +- " << b.se << "\n";
  return res;
}

RMStageResult stage_train_rm(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  const RankedDemoSet train = load_demos(out / artifact::kDemos, cfg.env);
  const RankedDemoSet heldout = load_demos(out / artifact::kDemosHeldout, cfg.env);

  Parameters params;
  Rng init(stage_seed(cfg, "reward-init"));
  const RewardNet net = RewardNet::create(params, cfg.env, cfg.reward.shape, init);
  RMConfig rc = cfg.reward;
  rc.seed = stage_seed(cfg, "reward");
  RMStageResult res;
  res.train = rm_train(net, params, train, heldout, rc);
  save_checkpoint(out / artifact::kReward,
                  Checkpoint{"reward", reward_digest(cfg), rc.seed, pipeline_config_json(cfg), params});

  const auto seen = sample_snippet_pairs(train, rc.heldout_pairs, rc.window, stage_seed(cfg, "rm-seen-pairs"));
  const auto unseen = sample_snippet_pairs(heldout, rc.heldout_pairs, rc.window, stage_seed(cfg, "rm-unseen-pairs"));
  res.seen_accuracy = rm_rank_accuracy(net, params, train, seen);
  res.unseen_accuracy = rm_rank_accuracy(net, params, heldout, unseen);
  const std::vector<Trajectory> mixed = heldout.flatten();
  std::vector<double> u(mixed.size()), truth(mixed.size());
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    u[i] = reward_forward(net, params, snippet_tokens(mixed[i], 0, mixed[i].decisions())).total;
    truth[i] = true_return(cfg.env, mixed[i]);
  }
  res.spearman = spearman(u, truth);
  res.spearman_count = mixed.size();

  CsvTable t({"epoch", "train_loss", "train_accuracy", "heldout_accuracy"});
  for (const RMEpochLog& e : res.train.epochs)
    t.row().add(e.epoch).add(e.train_loss).add(e.train_accuracy).add(e.heldout_accuracy);
  t.save(out / artifact::kRMLog);
  CsvTable r({"metric", "value"});
  r.row().add("seen_track_accuracy").add(res.seen_accuracy);
  r.row().add("unseen_track_accuracy").add(res.unseen_accuracy);
  r.row().add("pairs").add(rc.heldout_pairs);
  r.row().add("spearman_u_true_return").add(res.spearman);
  r.row().add("spearman_trajectories").add(res.spearman_count);
  r.save(out / artifact::kRMReport);

  log << "reward model: accuracy seen tracks " << res.seen_accuracy << ", unseen tracks "
      << res.unseen_accuracy << ", spearman(u, true) " << res.spearman << " over "
      << res.spearman_count << " trajectories\n";
  return res;
}

RLStageResult stage_train_rl(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  const LoadedPolicy bc = load_policy(cfg, out / artifact::kPolicy);
  const LoadedReward rm = load_reward(cfg, out / artifact::kReward);
  const TrackSets tracks = make_tracks(cfg);
  const DanceEnv env(cfg.env);
  RLStageResult res;

  auto run = [&](const char* label, const RewardFn& reward, const char* ckpt, const char* csv) {
    PPOConfig pc = cfg.rl;
    pc.seed = stage_seed(cfg, label);
    RLInit init = init_rl_from_bc(bc.net, bc.params, cfg.env, pc);
    RLResult r = train_rl(init, env, tracks.train, reward, pc);
    save_checkpoint(out / ckpt, Checkpoint{"actor-critic", actor_critic_digest(cfg), pc.seed,
                                           pipeline_config_json(cfg), init.params});
    rl_log_table(r).save(out / csv);
    if (!r.log.empty())
      log << label << ": model return " << r.log.front().mean_model_return << " -> "
          << r.log.back().mean_model_return << ", true return " << r.log.front().mean_true_return
          << " -> " << r.log.back().mean_true_return << ", kl " << r.log.back().mean_kl
          << " (max " << r.max_mean_kl << (r.kl_within_ceiling ? ", within" : ", above")
          << " ceiling " << pc.kl_ceiling << ")\n";
    return r;
  };

  res.learned = run("rl", [&](const Trajectory& t) { return sparse_reward(rm.net, rm.params, t); },
                    artifact::kRL, artifact::kRLLog);
  if (cfg.hand_reward.enabled) {
    const double gc = cfg.hand_reward.gamma_c;
    res.hand = run("rl-hand", [&](const Trajectory& t) { return hand_designed_step_rewards(cfg.env, t, gc); },
                   artifact::kRLHand, artifact::kRLHandLog);
  }
  return res;
}

const PolicyEvaluation& EvalStageResult::at(const std::string& name) const {
  for (const PolicyEvaluation& p : policies)
    if (p.policy == name) return p;
  throw UsageError("no evaluation for policy '" + name + "'");
}

EvalStageResult stage_evaluate(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  const LoadedPolicy bc = load_policy(cfg, out / artifact::kPolicy);
  const LoadedReward rm = load_reward(cfg, out / artifact::kReward);
  const TrackSets tracks = make_tracks(cfg);
  const DanceEnv env(cfg.env);
  const auto n = static_cast<std::size_t>(cfg.eval.episodes);
  const std::vector<Trajectory> reference =
      expert_episodes(cfg.env, tracks.test, n, stage_seed(cfg, "eval-reference"));

  EvalStageResult res;
  auto add = [&](const std::string& name, const std::vector<Trajectory>& eps) {
    PolicyEvaluation p;
    p.policy = name;
    p.summary = evaluate_set(cfg.env, eps, reference);
    std::vector<double> u, h;
    for (const Trajectory& t : eps) {
      u.push_back(reward_forward(rm.net, rm.params, snippet_tokens(t, 0, t.decisions())).total);
      h.push_back(hand_designed_reward(cfg.env, t, cfg.hand_reward.gamma_c));
    }
    p.learned_reward = mean_of(u);
    p.hand_reward = mean_of(h);
    res.policies.push_back(p);
  };

  const std::uint64_t seed = stage_seed(cfg, "eval");
  add("expert", expert_episodes(cfg.env, tracks.test, n, stage_seed(cfg, "eval-expert")));
  add("bc", sample_policy_episodes(bc.net, bc.params, env, tracks.test, n, seed));
  {
    const RLInit rl = load_actor_critic(cfg, bc, out / artifact::kRL);
    add("rl", sample_policy_episodes(rl.model.policy, rl.params, env, tracks.test, n, seed));
  }
  if (cfg.hand_reward.enabled) {
    const RLInit rl = load_actor_critic(cfg, bc, out / artifact::kRLHand);
    add("rl_hand", sample_policy_episodes(rl.model.policy, rl.params, env, tracks.test, n, seed));
  }

  CsvTable t({"policy", "metric", "value"});
  for (const PolicyEvaluation& p : res.policies) {
    const EvalSummary& s = p.summary;
    const std::pair<const char*, double> rows[] = {
        {"true_return", s.true_return},     {"true_return_se", s.true_return_se},
        {"bas", s.bas},                     {"div_kinetic", s.div_kinetic},
        {"div_geometric", s.div_geometric}, {"fid_kinetic", s.fid_kinetic},
        {"fid_geometric", s.fid_geometric}, {"learned_reward", p.learned_reward},
        {"hand_reward", p.hand_reward},     {"episodes", static_cast<double>(s.episodes)}};
    for (const auto& [metric, value] : rows) t.row().add(p.policy).add(metric).add(value);
    log << "  " << p.policy << ": true " << s.true_return << " +- " << s.true_return_se << ", bas "
        << s.bas << ", div k/g " << s.div_kinetic << " / " << s.div_geometric << ", fid k/g "
        << s.fid_kinetic << " / " << s.fid_geometric << ", u " << p.learned_reward << "\n";
  }
  t.save(out / artifact::kEvaluation);
  return res;
}

TheoremStageResult stage_verify_theorem(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  tabular::SweepConfig sc;
  sc.instances = cfg.theorem.instances;
  sc.sizes.states = cfg.theorem.states;
  sc.sizes.actions = cfg.theorem.actions;
  sc.sizes.features = cfg.theorem.features;
  sc.sizes.gamma = cfg.theorem.gamma;
  sc.max_error = cfg.theorem.max_error;
  sc.seed = stage_seed(cfg, "theorem");
  const auto rows = tabular::run_sweep(sc);
  TheoremStageResult res;
  res.summary = tabular::summarize(rows);
  tabular::sweep_table(rows).save(out / artifact::kTheoremSweep);
  const auto& s = res.summary;
  CsvTable t({"metric", "value"});
  t.row().add("instances").add(s.instances);
  t.row().add("bound_violations").add(s.bound_violations);
  t.row().add("implication_violations").add(s.implication_violations);
  t.row().add("condition_holds").add(s.condition_count);
  t.row().add("extrapolation_holds").add(s.extrapolation_count);
  t.row().add("min_slack").add(s.min_slack);
  t.save(out / artifact::kTheoremSummary);
  log << "theorem: " << s.instances << " instances, " << s.bound_violations << " bound violations, "
      << s.implication_violations << " implication violations (condition held in "
      << s.condition_count << ", extrapolation in " << s.extrapolation_count << "), min slack "
      << s.min_slack << "\n";
  return res;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  PipelineResult r;
  run_stage("setup", log, [&] {
    write_run_manifest(cfg, out);
    return 0;
  });
  r.bc = run_stage("train-bc", log, [&] { return stage_train_bc(cfg, out, log); });
  r.demos = run_stage("collect-demos", log, [&] { return stage_collect(cfg, out, log); });
  r.rm = run_stage("train-rm", log, [&] { return stage_train_rm(cfg, out, log); });
  r.rl = run_stage("train-rl", log, [&] { return stage_train_rl(cfg, out, log); });
  r.eval = run_stage("evaluate", log, [&] { return stage_evaluate(cfg, out, log); });
  r.theorem = run_stage("verify-theorem", log, [&] { return stage_verify_theorem(cfg, out, log); });
  return r;
}

}  // namespace dancerl
