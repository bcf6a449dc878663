#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dancerl/policy/policy.hpp"

namespace dancerl {

// Noise levels ordered from noisiest to cleanest (strictly decreasing).
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> levels);

  const std::vector<double>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }

 private:
  std::vector<double> levels_;
};

// Trajectories bucketed by the noise level used to generate them.
struct RankedDemoSet {
  std::vector<double> levels;                   // same order as the schedule
  std::vector<std::vector<Trajectory>> buckets;  // buckets[i] rolled out with levels[i]
  std::uint64_t seed = 0;
  std::string source_checkpoint;

  std::size_t per_level() const { return buckets.empty() ? 0 : buckets.front().size(); }
  std::size_t total() const;
  std::vector<Trajectory> flatten() const;
};

// One full episode with epsilon-greedy noise; records behaviour log-probabilities.
Trajectory rollout_with_noise(const PolicyNet& net, const Parameters& params, const DanceEnv& env,
                              double eps, TrackPtr track, Rng& rng);

// levels.size() * per_level trajectories; tracks are cycled round-robin within
// each level and every (level, index) cell draws from its own derived seed.
RankedDemoSet build_ranked_dataset(const PolicyNet& net, const Parameters& params,
                                   const DanceEnv& env, const NoiseSchedule& schedule,
                                   int per_level, const std::vector<TrackPtr>& tracks,
                                   std::uint64_t seed, std::string source_checkpoint = {});

// Two equal-length windows from distinct noise levels. label == 1 iff the
// first window is the better one (eps_first < eps_second).
struct SnippetPair {
  std::size_t level_first = 0, index_first = 0;
  int start_first = 0;
  std::size_t level_second = 0, index_second = 0;
  int start_second = 0;
  int window = 0;
  double eps_first = 0.0, eps_second = 0.0;
  int label = 0;

  SnippetPair swapped() const;
};

SnippetPair sample_snippet_pair(const RankedDemoSet& set, Rng& rng, int window);
std::vector<SnippetPair> sample_snippet_pairs(const RankedDemoSet& set, std::size_t count,
                                              int window, std::uint64_t seed);

const Trajectory& first_trajectory(const RankedDemoSet& set, const SnippetPair& pair);
const Trajectory& second_trajectory(const RankedDemoSet& set, const SnippetPair& pair);

}  // namespace dancerl
