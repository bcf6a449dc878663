#include "dancerl/demos/demos.hpp"

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"

namespace dancerl {

NoiseSchedule::NoiseSchedule(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw ConfigError("noise schedule is empty");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i] < 0.0 || levels_[i] > 1.0)
      throw ConfigError("noise schedule values must lie in [0, 1]");
    if (i > 0 && !(levels_[i] < levels_[i - 1]))
      throw ConfigError("noise schedule must be strictly decreasing");
  }
}

std::size_t RankedDemoSet::total() const {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.size();
  return n;
}

std::vector<Trajectory> RankedDemoSet::flatten() const {
  std::vector<Trajectory> out;
  for (const auto& b : buckets) out.insert(out.end(), b.begin(), b.end());
  return out;
}

Trajectory rollout_with_noise(const PolicyNet& net, const Parameters& params, const DanceEnv& env,
                              double eps, TrackPtr track, Rng& rng) {
  if (eps < 0.0 || eps > 1.0) throw InputError("rollout_with_noise: eps must lie in [0, 1]");
  EnvState state = env.reset(track);
  PolicySession session(net, params);
  session.push_music(track->initial.data(), 0);
  session.push_pose(state.previous_pose(), 0);
  Trajectory traj;
  traj.track = track;
  traj.noise = eps;
  while (!state.terminal()) {
    const int t = state.time();
    session.push_music(track->frame(t), t + 1);
    const ActionLogits logits = session.logits();
    const PoseCode action = sample_action(logits, rng, eps);
    traj.behavior_logp.push_back(behavior_log_prob(logits, action, eps));
    state = env.step(state, action);
    session.push_pose(action, t + 1);
  }
  traj.poses = state.poses();
  return traj;
}

RankedDemoSet build_ranked_dataset(const PolicyNet& net, const Parameters& params,
                                   const DanceEnv& env, const NoiseSchedule& schedule,
                                   int per_level, const std::vector<TrackPtr>& tracks,
                                   std::uint64_t seed, std::string source_checkpoint) {
  if (schedule.size() == 0) throw ConfigError("build_ranked_dataset: empty schedule");
  if (per_level < 1) throw ConfigError("build_ranked_dataset: per_level must be >= 1");
  if (tracks.empty()) throw InputError("build_ranked_dataset: no tracks");
  RankedDemoSet set;
  set.levels = schedule.levels();
  set.seed = seed;
  set.source_checkpoint = std::move(source_checkpoint);
  const std::size_t d = schedule.size();
  const auto k = static_cast<std::size_t>(per_level);
  set.buckets.assign(d, std::vector<Trajectory>(k));
  kernels::parallel_for(d * k, [&](std::size_t cell) {
    const std::size_t level = cell / k;
    const std::size_t idx = cell % k;
    Rng rng(derive_seed(seed, cell));
    set.buckets[level][idx] =
        rollout_with_noise(net, params, env, schedule[level], tracks[idx % tracks.size()], rng);
  });
  return set;
}

SnippetPair SnippetPair::swapped() const {
  SnippetPair s = *this;
  std::swap(s.level_first, s.level_second);
  std::swap(s.index_first, s.index_second);
  std::swap(s.start_first, s.start_second);
  std::swap(s.eps_first, s.eps_second);
  s.label = 1 - label;
  return s;
}

SnippetPair sample_snippet_pair(const RankedDemoSet& set, Rng& rng, int window) {
  std::size_t populated = 0;
  for (const auto& b : set.buckets) populated += !b.empty();
  if (set.buckets.size() < 2 || populated < 2)
    throw InputError("sample_snippet_pair: need at least two noise levels");
  const int horizon = set.buckets.front().front().decisions();
  if (window < 1 || window > horizon)
    throw InputError("sample_snippet_pair: window must lie in [1, horizon]");

  const std::size_t d = set.buckets.size();
  std::uniform_int_distribution<std::size_t> pick_level(0, d - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, d - 2);
  SnippetPair p;
  p.window = window;
  do {
    p.level_first = pick_level(rng);
    // Second level is drawn from the remaining d - 1 levels, never equal to the first.
    p.level_second = pick_other(rng);
    if (p.level_second >= p.level_first) ++p.level_second;
  } while (set.buckets[p.level_first].empty() || set.buckets[p.level_second].empty());

  std::uniform_int_distribution<int> pick_start(0, horizon - window);
  p.index_first =
      std::uniform_int_distribution<std::size_t>(0, set.buckets[p.level_first].size() - 1)(rng);
  p.start_first = pick_start(rng);
  p.index_second =
      std::uniform_int_distribution<std::size_t>(0, set.buckets[p.level_second].size() - 1)(rng);
  p.start_second = pick_start(rng);
  p.eps_first = set.levels[p.level_first];
  p.eps_second = set.levels[p.level_second];
  p.label = p.eps_first < p.eps_second ? 1 : 0;
  return p;
}

std::vector<SnippetPair> sample_snippet_pairs(const RankedDemoSet& set, std::size_t count,
                                              int window, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SnippetPair> pairs;
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pairs.push_back(sample_snippet_pair(set, rng, window));
  return pairs;
}

const Trajectory& first_trajectory(const RankedDemoSet& set, const SnippetPair& pair) {
  return set.buckets.at(pair.level_first).at(pair.index_first);
}

const Trajectory& second_trajectory(const RankedDemoSet& set, const SnippetPair& pair) {
  return set.buckets.at(pair.level_second).at(pair.index_second);
}

}  // namespace dancerl
