#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dancerl/io/csv.hpp"

// Exact finite MDPs for checking the reward-extrapolation bound.
// Rewards, errors and policies are |S| x |A| tables; features are stored
// one row per (s, a) pair at index s * |A| + a.
namespace dancerl::tabular {

using Table = Eigen::MatrixXd;

struct MDPSizes {
  int states = 6;
  int actions = 3;
  int features = 4;
  double gamma = 0.9;
  double error_bound = 0.05;  // |e(s,a)| <= error_bound
};

class TabularMDP {
 public:
  // Validates every invariant; throws ConfigError on violation.
  TabularMDP(std::vector<Eigen::MatrixXd> transitions, Eigen::VectorXd initial, double gamma,
             Eigen::MatrixXd features, Eigen::VectorXd w, Table error);

  int states() const { return static_cast<int>(initial_.size()); }
  int actions() const { return static_cast<int>(transitions_.size()); }
  int feature_dim() const { return static_cast<int>(w_.size()); }
  double gamma() const { return gamma_; }

  // transition(a)(s, s') = P(s' | s, a)
  const Eigen::MatrixXd& transition(int a) const { return transitions_[a]; }
  const Eigen::VectorXd& initial() const { return initial_; }
  const Eigen::MatrixXd& features() const { return features_; }
  Eigen::VectorXd feature(int s, int a) const { return features_.row(s * actions() + a).transpose(); }
  const Eigen::VectorXd& w() const { return w_; }
  const Table& error() const { return error_; }

  Table learned_reward() const;  // w^T zeta(s,a)
  Table true_reward() const;     // learned + e
  double error_sup() const { return error_.cwiseAbs().maxCoeff(); }

 private:
  std::vector<Eigen::MatrixXd> transitions_;
  Eigen::VectorXd initial_;
  double gamma_;
  Eigen::MatrixXd features_;
  Eigen::VectorXd w_;
  Table error_;
};

TabularMDP random_mdp(const MDPSizes& sizes, std::uint64_t seed);

// Throws ContractError unless rows are probability vectors of the right shape.
void check_policy(const TabularMDP& mdp, const Table& policy);
Table deterministic_policy(const std::vector<int>& actions, int n_actions);
Table uniform_policy(int states, int actions);

struct OptimalSolution {
  Table policy;
  Eigen::VectorXd values;  // exact values of `policy`
  int iterations = 0;
};

// Bellman optimality iteration to sup-norm change < 1e-12, greedy policy with
// ties resolved to the lowest action index. gamma >= 1 is a ConfigError.
OptimalSolution value_iteration(const TabularMDP& mdp, const Table& reward);

// Exact state values V = (I - gamma P_pi)^-1 r_pi.
Eigen::VectorXd policy_values(const TabularMDP& mdp, const Table& policy, const Table& reward);
// J(pi | R) = initial^T V.
double policy_return(const TabularMDP& mdp, const Table& policy, const Table& reward);
// Expected discounted feature vector from the initial distribution.
Eigen::VectorXd feature_expectations(const TabularMDP& mdp, const Table& policy);

// (1 - eps) * policy + eps * uniform, per state.
Table noisy_tabular_bc(const Table& policy, double eps);

struct BoundReport {
  double j_star = 0;  // J(pi* | R*)
  double j_bc = 0;    // J(pi_BC | R*)
  double j_hat = 0;   // J(pi_hat | R*)
  double gap = 0;     // J(pi*|R*) - J(pi_BC|R*)
  double regret = 0;  // J(pi*|R*) - J(pi_hat|R*)
  double eps_zeta = 0;
  double error_sup = 0;
  double error_term = 0;  // 2 ||e||_inf / (1 - gamma)
  double bound = 0;       // eps_zeta + error_term
  double slack = 0;       // bound - regret
  double w_l1 = 0;
  // Pieces of the proof chain: regret = feature_term + error_diff exactly,
  // feature_term <= ||w||_1 eps_zeta, error_diff <= error_term.
  double feature_term = 0;
  double error_diff = 0;
  bool bound_holds = false;
  bool condition_holds = false;
  bool extrapolation_holds = false;
};

// Tolerance used when comparing the proof-chain bound against the regret.
inline constexpr double kBoundTolerance = 1e-9;

BoundReport extrapolation_check(const TabularMDP& mdp, const Table& pi_bc, const Table& pi_hat);

struct SweepConfig {
  int instances = 1000;
  MDPSizes sizes;
  double max_error = 0.1;  // per-instance error bound drawn from U[0, max_error]
  std::uint64_t seed = 0;
};

struct SweepRow {
  int instance = 0;
  std::uint64_t seed = 0;
  double error_bound = 0;
  double bc_noise = 0;
  BoundReport report;
};

struct SweepSummary {
  int instances = 0;
  int bound_violations = 0;
  int implication_violations = 0;
  int condition_count = 0;
  int extrapolation_count = 0;
  double min_slack = 0;
};

// Instance i uses derive_seed(cfg.seed, i): pi* and pi_hat are optimal under R* and
// R_theta, pi_BC is pi* mixed with uniform at a random noise level.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);
SweepSummary summarize(const std::vector<SweepRow>& rows);
CsvTable sweep_table(const std::vector<SweepRow>& rows);

}  // namespace dancerl::tabular
