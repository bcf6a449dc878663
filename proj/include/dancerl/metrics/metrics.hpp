#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dancerl/env/env.hpp"

namespace dancerl {

// Discrete stand-ins for motion features.
//   Kinetic:   [change rate | upper-code histogram (C) | lower-code histogram (C) |
//               normalised transition entropy | beat-phase histogram of changes (beat_period)]
//   Geometric: [cluster agreement | upper style match | lower style match |
//               upper cluster histogram (S) | lower cluster histogram (S)]
enum class FeatureBlock { Kinetic, Geometric };

std::size_t feature_dim(const EnvConfig& cfg, int beat_period, FeatureBlock block);
Eigen::VectorXd trajectory_features(const EnvConfig& cfg, const Trajectory& traj,
                                    FeatureBlock block);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and (N-1)-normalised covariance. `ridge` is added to the diagonal.
GaussianStats gaussian_stats(const std::vector<Eigen::VectorXd>& features, double ridge = 1e-8);

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Mean pairwise Euclidean distance.
double diversity(const std::vector<Eigen::VectorXd>& features);

// Mean over music beats of exp(-d^2 / 2 sigma^2), d = distance to the nearest pose change.
double beat_align_score(const Trajectory& traj, double sigma);
double default_bas_sigma(const MusicTrack& track);

// r_b (change on a beat) + gamma_c * r_c (upper/lower cluster agreement), per step.
std::vector<double> hand_designed_step_rewards(const EnvConfig& cfg, const Trajectory& traj,
                                               double gamma_c);
double hand_designed_reward(const EnvConfig& cfg, const Trajectory& traj, double gamma_c);

// Frames where the pose code changes.
std::vector<int> dance_beats(const Trajectory& traj);

std::vector<Eigen::VectorXd> features_of(const EnvConfig& cfg, const std::vector<Trajectory>& set,
                                         FeatureBlock block);

struct EvalSummary {
  double true_return = 0.0;
  double true_return_se = 0.0;
  double bas = 0.0;
  double div_kinetic = 0.0;
  double div_geometric = 0.0;
  double fid_kinetic = 0.0;    // against the reference set
  double fid_geometric = 0.0;
  std::size_t episodes = 0;
};

EvalSummary evaluate_set(const EnvConfig& cfg, const std::vector<Trajectory>& set,
                         const std::vector<Trajectory>& reference);

// Average ranks (1-based, ties share their mean rank).
std::vector<double> average_ranks(std::span<const double> x);
// Pearson correlation of the average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace dancerl
