#include "dancerl/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"

namespace dancerl {

std::size_t feature_dim(const EnvConfig& cfg, int beat_period, FeatureBlock block) {
  const auto c = static_cast<std::size_t>(cfg.codes_per_half);
  const auto s = static_cast<std::size_t>(cfg.styles);
  if (block == FeatureBlock::Kinetic) return 2 + 2 * c + static_cast<std::size_t>(beat_period);
  return 3 + 2 * s;
}

namespace {
void check_complete(const Trajectory& traj) {
  if (!traj.track || traj.decisions() != traj.track->length || traj.decisions() < 1)
    throw InputError("metrics: trajectory is incomplete or has no track");
}
}  // namespace

Eigen::VectorXd trajectory_features(const EnvConfig& cfg, const Trajectory& traj,
                                    FeatureBlock block) {
  check_complete(traj);
  const MusicTrack& track = *traj.track;
  const int steps = traj.decisions();
  const int c = cfg.codes_per_half;
  const int s = cfg.styles;
  const double inv = 1.0 / steps;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(feature_dim(cfg, track.beat_period, block)));

  if (block == FeatureBlock::Kinetic) {
    const int p = track.beat_period;
    int changes = 0;
    std::map<std::pair<int, int>, int> transitions;
    Eigen::VectorXd phase = Eigen::VectorXd::Zero(p);
    for (int t = 0; t < steps; ++t) {
      const PoseCode prev = traj.previous(t), cur = traj.action(t);
      f(1 + cur.upper) += inv;
      f(1 + c + cur.lower) += inv;
      ++transitions[{prev.joint(c), cur.joint(c)}];
      if (!(cur == prev)) {
        ++changes;
        phase(t % p) += 1.0;
      }
    }
    f(0) = changes * inv;
    double h = 0.0;
    for (const auto& [key, n] : transitions) {
      const double q = n * inv;
      h -= q * std::log(q);
    }
    f(1 + 2 * c) = steps > 1 ? h / std::log(static_cast<double>(steps)) : 0.0;
    if (changes > 0)
      phase /= changes;
    else
      phase.setConstant(1.0 / p);
    f.tail(p) = phase;
  } else {
    for (int t = 0; t < steps; ++t) {
      const PoseCode cur = traj.action(t);
      const int cu = style_cluster(cur.upper, s), cl = style_cluster(cur.lower, s);
      f(0) += (cu == cl) * inv;
      f(1) += (cu == track.style) * inv;
      f(2) += (cl == track.style) * inv;
      f(3 + cu) += inv;
      f(3 + s + cl) += inv;
    }
  }
  return f;
}

GaussianStats gaussian_stats(const std::vector<Eigen::VectorXd>& features, double ridge) {
  if (features.size() < 2) throw InputError("gaussian_stats: need at least two samples");
  const Eigen::Index d = features.front().size();
  GaussianStats g;
  g.mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : features) {
    if (x.size() != d) throw InputError("gaussian_stats: dimension mismatch");
    g.mean += x;
  }
  g.mean /= static_cast<double>(features.size());
  g.cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : features) {
    const Eigen::VectorXd c = x - g.mean;
    g.cov += c * c.transpose();
  }
  g.cov /= static_cast<double>(features.size() - 1);
  g.cov.diagonal().array() += ridge;
  return g;
}

namespace {
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d ||
      b.cov.cols() != d)
    throw InputError("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd s1h = psd_sqrt(a.cov);
  const Eigen::MatrixXd cross = psd_sqrt(s1h * b.cov * s1h);
  const double value =
      (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

double diversity(const std::vector<Eigen::VectorXd>& features) {
  const std::size_t n = features.size();
  if (n < 2) throw InputError("diversity: need at least two trajectories");
  std::vector<double> row_sums(n, 0.0);
  kernels::parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) row_sums[i] += (features[i] - features[j]).norm();
  });
  double total = 0.0;
  for (double r : row_sums) total += r;
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<int> dance_beats(const Trajectory& traj) {
  std::vector<int> beats;
  for (int t = 0; t < traj.decisions(); ++t)
    if (!(traj.action(t) == traj.previous(t))) beats.push_back(t);
  return beats;
}

double default_bas_sigma(const MusicTrack& track) { return track.beat_period / 4.0; }

double beat_align_score(const Trajectory& traj, double sigma) {
  if (!(sigma > 0.0)) throw InputError("beat_align_score: sigma must be positive");
  check_complete(traj);
  const std::vector<int> dance = dance_beats(traj);
  const std::vector<int>& music = traj.track->beat_frames;
  if (dance.empty() || music.empty()) return 0.0;
  double total = 0.0;
  for (int b : music) {
    int best = std::abs(dance.front() - b);
    for (int d : dance) best = std::min(best, std::abs(d - b));
    total += std::exp(-static_cast<double>(best) * best / (2.0 * sigma * sigma));
  }
  return total / static_cast<double>(music.size());
}

std::vector<double> hand_designed_step_rewards(const EnvConfig& cfg, const Trajectory& traj,
                                               double gamma_c) {
  if (gamma_c < 0.0) throw InputError("hand_designed_reward: gamma_c must be >= 0");
  check_complete(traj);
  std::vector<double> r(static_cast<std::size_t>(traj.decisions()));
  for (int t = 0; t < traj.decisions(); ++t) {
    const PoseCode prev = traj.previous(t), cur = traj.action(t);
    const double rb = (!(cur == prev) && traj.track->is_beat(t)) ? 1.0 : 0.0;
    const double rc =
        style_cluster(cur.upper, cfg.styles) == style_cluster(cur.lower, cfg.styles) ? 1.0 : 0.0;
    r[static_cast<std::size_t>(t)] = rb + gamma_c * rc;
  }
  return r;
}

double hand_designed_reward(const EnvConfig& cfg, const Trajectory& traj, double gamma_c) {
  double total = 0.0;
  for (double v : hand_designed_step_rewards(cfg, traj, gamma_c)) total += v;
  return total;
}

std::vector<Eigen::VectorXd> features_of(const EnvConfig& cfg, const std::vector<Trajectory>& set,
                                         FeatureBlock block) {
  std::vector<Eigen::VectorXd> out(set.size());
  kernels::parallel_for(set.size(), [&](std::size_t i) {
    out[i] = trajectory_features(cfg, set[i], block);
  });
  return out;
}

EvalSummary evaluate_set(const EnvConfig& cfg, const std::vector<Trajectory>& set,
                         const std::vector<Trajectory>& reference) {
  if (set.size() < 2 || reference.size() < 2) throw InputError("evaluate_set: need >= 2 trajectories");
  EvalSummary s;
  s.episodes = set.size();
  std::vector<double> returns;
  for (const Trajectory& t : set) {
    returns.push_back(true_return(cfg, t));
    s.bas += beat_align_score(t, default_bas_sigma(*t.track));
  }
  const double n = static_cast<double>(set.size());
  for (double r : returns) s.true_return += r;
  s.true_return /= n;
  double ss = 0.0;
  for (double r : returns) ss += (r - s.true_return) * (r - s.true_return);
  s.true_return_se = std::sqrt(ss / (n - 1.0) / n);
  s.bas /= n;
  const auto kin = features_of(cfg, set, FeatureBlock::Kinetic);
  const auto geo = features_of(cfg, set, FeatureBlock::Geometric);
  s.div_kinetic = diversity(kin);
  s.div_geometric = diversity(geo);
  s.fid_kinetic = frechet_distance(gaussian_stats(kin),
                                   gaussian_stats(features_of(cfg, reference, FeatureBlock::Kinetic)));
  s.fid_geometric = frechet_distance(
      gaussian_stats(geo), gaussian_stats(features_of(cfg, reference, FeatureBlock::Geometric)));
  return s;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("spearman needs two equal-length samples of size >= 2");
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dancerl
