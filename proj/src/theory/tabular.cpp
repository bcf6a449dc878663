#include "dancerl/theory/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"
#include "dancerl/core/params.hpp"

namespace dancerl::tabular {

TabularMDP::TabularMDP(std::vector<Eigen::MatrixXd> transitions, Eigen::VectorXd initial,
                       double gamma, Eigen::MatrixXd features, Eigen::VectorXd w, Table error)
    : transitions_(std::move(transitions)),
      initial_(std::move(initial)),
      gamma_(gamma),
      features_(std::move(features)),
      w_(std::move(w)),
      error_(std::move(error)) {
  const Eigen::Index S = initial_.size();
  const Eigen::Index A = static_cast<Eigen::Index>(transitions_.size());
  if (S < 1 || A < 1 || w_.size() < 1) throw ConfigError("tabular mdp: empty state, action or feature set");
  if (!(gamma_ >= 0.0)) throw ConfigError("tabular mdp: gamma must be non-negative");
  auto check_dist = [](const Eigen::VectorXd& p, const char* what) {
    if ((p.array() < 0.0).any() || !p.allFinite() || std::abs(p.sum() - 1.0) > 1e-12)
      throw ConfigError(std::string("tabular mdp: ") + what + " is not a probability vector");
  };
  check_dist(initial_, "initial distribution");
  for (const auto& P : transitions_) {
    if (P.rows() != S || P.cols() != S) throw ConfigError("tabular mdp: transition table shape");
    for (Eigen::Index s = 0; s < S; ++s) check_dist(P.row(s).transpose(), "transition row");
  }
  if (features_.rows() != S * A || features_.cols() != w_.size())
    throw ConfigError("tabular mdp: feature table must be (|S||A|) x k");
  if (error_.rows() != S || error_.cols() != A) throw ConfigError("tabular mdp: error table shape");
  if (!features_.allFinite() || !w_.allFinite() || !error_.allFinite())
    throw ConfigError("tabular mdp: non-finite entries");
  if (w_.lpNorm<1>() > 1.0) throw ConfigError("tabular mdp: ||w||_1 must be at most 1");
}

Table TabularMDP::learned_reward() const {
  const Eigen::VectorXd flat = features_ * w_;
  Table r(states(), actions());
  for (int s = 0; s < states(); ++s)
    for (int a = 0; a < actions(); ++a) r(s, a) = flat(s * actions() + a);
  return r;
}

Table TabularMDP::true_reward() const { return learned_reward() + error_; }

namespace {

Eigen::VectorXd dirichlet_ones(int n, Rng& rng) {
  std::exponential_distribution<double> ex(1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = ex(rng) + 1e-12;
  v /= v.sum();
  return v;
}

Eigen::MatrixXd policy_transition(const TabularMDP& mdp, const Table& policy) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(mdp.states(), mdp.states());
  for (int s = 0; s < mdp.states(); ++s)
    for (int a = 0; a < mdp.actions(); ++a)
      if (policy(s, a) != 0.0) P.row(s) += policy(s, a) * mdp.transition(a).row(s);
  return P;
}

Eigen::MatrixXd solve_discounted(const TabularMDP& mdp, const Table& policy, const Eigen::MatrixXd& rhs) {
  const Eigen::MatrixXd M =
      Eigen::MatrixXd::Identity(mdp.states(), mdp.states()) - mdp.gamma() * policy_transition(mdp, policy);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) throw NumericError("policy evaluation: singular system (gamma must be < 1)");
  return lu.solve(rhs);
}

}  // namespace

TabularMDP random_mdp(const MDPSizes& sizes, std::uint64_t seed) {
  if (sizes.states < 1 || sizes.actions < 1 || sizes.features < 1)
    throw ConfigError("random_mdp: |S|, |A| and k must be at least 1");
  if (!(sizes.error_bound >= 0.0)) throw ConfigError("random_mdp: error bound must be non-negative");
  Rng rng(seed);
  const int S = sizes.states, A = sizes.actions, k = sizes.features;
  std::vector<Eigen::MatrixXd> P(A, Eigen::MatrixXd(S, S));
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) P[a].row(s) = dirichlet_ones(S, rng).transpose();
  const Eigen::VectorXd initial = dirichlet_ones(S, rng);

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::MatrixXd features(S * A, k);
  for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = unit(rng);
  Eigen::VectorXd w(k);
  for (int j = 0; j < k; ++j) w(j) = unit(rng);
  const double norm = w.lpNorm<1>();
  if (norm > 0.0) w /= norm;
  while (w.lpNorm<1>() > 1.0) w *= std::nextafter(1.0, 0.0);

  Table e(S, A);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = sizes.error_bound * unit(rng);
  return TabularMDP(std::move(P), initial, sizes.gamma, std::move(features), std::move(w), std::move(e));
}

void check_policy(const TabularMDP& mdp, const Table& policy) {
  if (policy.rows() != mdp.states() || policy.cols() != mdp.actions())
    throw ContractError("policy table shape does not match the MDP");
  for (int s = 0; s < mdp.states(); ++s) {
    const auto row = policy.row(s);
    if ((row.array() < 0.0).any() || !row.allFinite() || std::abs(row.sum() - 1.0) > 1e-9)
      throw ContractError("policy row " + std::to_string(s) + " is not a probability vector");
  }
}

Table deterministic_policy(const std::vector<int>& actions, int n_actions) {
  Table p = Table::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) throw ContractError("deterministic_policy: action out of range");
    p(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return p;
}

Table uniform_policy(int states, int actions) {
  return Table::Constant(states, actions, 1.0 / actions);
}

OptimalSolution value_iteration(const TabularMDP& mdp, const Table& reward) {
  if (mdp.gamma() >= 1.0) throw ConfigError("value_iteration requires gamma < 1");
  if (reward.rows() != mdp.states() || reward.cols() != mdp.actions())
    throw ContractError("value_iteration: reward table shape");
  const int S = mdp.states(), A = mdp.actions();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
  Table q(S, A);
  OptimalSolution out;
  constexpr int kMaxIterations = 10'000'000;
  for (;;) {
    for (int a = 0; a < A; ++a) q.col(a) = reward.col(a) + mdp.gamma() * mdp.transition(a) * v;
    const Eigen::VectorXd next = q.rowwise().maxCoeff();
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = next;
    ++out.iterations;
    if (change < 1e-12) break;
    if (out.iterations >= kMaxIterations) throw NumericError("value_iteration did not converge");
  }
  for (int a = 0; a < A; ++a) q.col(a) = reward.col(a) + mdp.gamma() * mdp.transition(a) * v;
  std::vector<int> greedy(S, 0);
  for (int s = 0; s < S; ++s)
    for (int a = 1; a < A; ++a)
      if (q(s, a) > q(s, greedy[s]) + 1e-12) greedy[s] = a;
  out.policy = deterministic_policy(greedy, A);
  out.values = policy_values(mdp, out.policy, reward);
  return out;
}

Eigen::VectorXd policy_values(const TabularMDP& mdp, const Table& policy, const Table& reward) {
  check_policy(mdp, policy);
  const Eigen::VectorXd r_pi = policy.cwiseProduct(reward).rowwise().sum();
  return solve_discounted(mdp, policy, r_pi);
}

double policy_return(const TabularMDP& mdp, const Table& policy, const Table& reward) {
  return mdp.initial().dot(policy_values(mdp, policy, reward));
}

Eigen::VectorXd feature_expectations(const TabularMDP& mdp, const Table& policy) {
  check_policy(mdp, policy);
  const int S = mdp.states(), A = mdp.actions();
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(S, mdp.feature_dim());
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) z.row(s) += policy(s, a) * mdp.features().row(s * A + a);
  return (mdp.initial().transpose() * solve_discounted(mdp, policy, z)).transpose();
}

Table noisy_tabular_bc(const Table& policy, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("noisy_tabular_bc: eps must lie in [0, 1]");
  if (eps == 0.0) return policy;
  const double u = 1.0 / static_cast<double>(policy.cols());
  if (eps == 1.0) return Table::Constant(policy.rows(), policy.cols(), u);
  return ((1.0 - eps) * policy.array() + eps * u).matrix();
}

BoundReport extrapolation_check(const TabularMDP& mdp, const Table& pi_bc, const Table& pi_hat) {
  const Table r_true = mdp.true_reward();
  const OptimalSolution star = value_iteration(mdp, r_true);
  BoundReport b;
  b.j_star = mdp.initial().dot(star.values);
  b.j_bc = policy_return(mdp, pi_bc, r_true);
  b.j_hat = policy_return(mdp, pi_hat, r_true);
  b.gap = b.j_star - b.j_bc;
  b.regret = b.j_star - b.j_hat;

  const Eigen::VectorXd dz = feature_expectations(mdp, star.policy) - feature_expectations(mdp, pi_hat);
  b.eps_zeta = dz.cwiseAbs().maxCoeff();
  b.w_l1 = mdp.w().lpNorm<1>();
  b.error_sup = mdp.error_sup();
  b.error_term = 2.0 * b.error_sup / (1.0 - mdp.gamma());
  b.bound = b.eps_zeta + b.error_term;
  b.slack = b.bound - b.regret;
  b.feature_term = mdp.w().dot(dz);
  b.error_diff = policy_return(mdp, star.policy, mdp.error()) - policy_return(mdp, pi_hat, mdp.error());

  b.bound_holds = b.regret <= b.bound + kBoundTolerance;
  b.condition_holds = b.gap > b.bound;
  b.extrapolation_holds = b.j_hat > b.j_bc;
  return b;
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
  if (cfg.instances < 0) throw ConfigError("sweep: instances must be non-negative");
  if (!(cfg.max_error >= 0.0)) throw ConfigError("sweep: max_error must be non-negative");
  if (cfg.sizes.gamma >= 1.0) throw ConfigError("sweep: gamma must be < 1");
  std::vector<SweepRow> rows(static_cast<std::size_t>(cfg.instances));
  kernels::parallel_for(rows.size(), [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.instance = static_cast<int>(i);
    row.seed = derive_seed(cfg.seed, i);
    Rng rng(derive_seed(row.seed, "instance-knobs"));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    row.error_bound = cfg.max_error * u01(rng);
    row.bc_noise = u01(rng);
    MDPSizes sizes = cfg.sizes;
    sizes.error_bound = row.error_bound;
    const TabularMDP mdp = random_mdp(sizes, row.seed);
    const Table pi_star = value_iteration(mdp, mdp.true_reward()).policy;
    const Table pi_hat = value_iteration(mdp, mdp.learned_reward()).policy;
    row.report = extrapolation_check(mdp, noisy_tabular_bc(pi_star, row.bc_noise), pi_hat);
  });
  return rows;
}

SweepSummary summarize(const std::vector<SweepRow>& rows) {
  SweepSummary s;
  s.instances = static_cast<int>(rows.size());
  s.min_slack = rows.empty() ? 0.0 : rows.front().report.slack;
  for (const SweepRow& r : rows) {
    const BoundReport& b = r.report;
    s.bound_violations += !b.bound_holds;
    s.implication_violations += b.condition_holds && !b.extrapolation_holds;
    s.condition_count += b.condition_holds;
    s.extrapolation_count += b.extrapolation_holds;
    s.min_slack = std::min(s.min_slack, b.slack);
  }
  return s;
}

CsvTable sweep_table(const std::vector<SweepRow>& rows) {
  CsvTable t({"instance", "seed", "error_bound", "bc_noise", "j_star", "j_bc", "j_hat", "gap",
              "regret", "eps_zeta", "error_sup", "error_term", "bound", "slack", "w_l1",
              "feature_term", "error_diff", "bound_holds", "condition_holds", "extrapolation_holds"});
  for (const SweepRow& r : rows) {
    const BoundReport& b = r.report;
    t.row()
        .add(r.instance)
        .add(std::to_string(r.seed))
        .add(r.error_bound)
        .add(r.bc_noise)
        .add(b.j_star)
        .add(b.j_bc)
        .add(b.j_hat)
        .add(b.gap)
        .add(b.regret)
        .add(b.eps_zeta)
        .add(b.error_sup)
        .add(b.error_term)
        .add(b.bound)
        .add(b.slack)
        .add(b.w_l1)
        .add(b.feature_term)
        .add(b.error_diff)
        .add(static_cast<int>(b.bound_holds))
        .add(static_cast<int>(b.condition_holds))
        .add(static_cast<int>(b.extrapolation_holds));
  }
  return t;
}

}  // namespace dancerl::tabular
