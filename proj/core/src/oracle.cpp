#include "voc/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "voc/error.hpp"

namespace voc {

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInputError("gamma must lie in [0,1)");
}

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& m) {
  if (m.empty()) throw InvalidInputError("empty matrix");
  Eigen::MatrixXd out(m.size(), m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != m[0].size()) throw InvalidInputError("ragged matrix");
    for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
  }
  return out;
}

std::vector<std::vector<double>> from_eigen(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

void check_square(const std::vector<std::vector<double>>& P) {
  if (P.empty()) throw InvalidInputError("empty transition matrix");
  for (const auto& row : P) {
    if (row.size() != P.size()) throw InvalidInputError("transition matrix must be square");
  }
}

}  // namespace

void OccupancyDist::validate() const {
  for (const auto& row : mu) {
    double sum = 0.0;
    for (double p : row) {
      if (p < -1e-12) throw InternalError("occupancy entry below zero");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-10) throw InternalError("occupancy row does not sum to 1");
  }
}

OccupancyDist occupancy_from_transition(const std::vector<std::vector<double>>& P, double gamma) {
  check_gamma(gamma);
  check_square(P);
  Eigen::MatrixXd Pm = to_eigen(P);
  Eigen::Index n = Pm.rows();
  // mu (I - gamma P) = (1-gamma) P  =>  (I - gamma P)^T mu^T = (1-gamma) P^T
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - gamma * Pm;
  Eigen::MatrixXd muT = A.transpose().partialPivLu().solve((1.0 - gamma) * Pm.transpose());
  OccupancyDist out;
  out.gamma = gamma;
  out.mu = from_eigen(muT.transpose());
  out.validate();
  return out;
}

OccupancyDist occupancy_by_series(const std::vector<std::vector<double>>& P, double gamma,
                                  int k_terms) {
  check_gamma(gamma);
  check_square(P);
  if (k_terms < 0) throw InvalidInputError("k_terms must be non-negative");
  std::size_t n = P.size();
  // power = P^{k+1}, accumulated with plain loops; kept independent of the
  // LU-based route on purpose.
  std::vector<std::vector<double>> power = P;
  std::vector<std::vector<double>> acc(n, std::vector<double>(n, 0.0));
  double scale = 1.0 - gamma;
  double g = 1.0;
  for (int k = 0;; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) acc[i][j] += scale * g * power[i][j];
    }
    if (k == k_terms) break;
    g *= gamma;
    std::vector<std::vector<double>> next(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < n; ++l) {
        double pil = power[i][l];
        if (pil == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) next[i][j] += pil * P[l][j];
      }
    }
    power = std::move(next);
  }
  OccupancyDist out;
  out.gamma = gamma;
  out.mu = std::move(acc);
  return out;
}

OccupancyDist exact_occupancy(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                              double gamma) {
  return occupancy_from_transition(mdp.policy_transition(pi), gamma);
}

std::vector<double> exact_value(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                                double gamma) {
  check_gamma(gamma);
  Eigen::MatrixXd Pm = to_eigen(mdp.policy_transition(pi));
  Eigen::Index n = Pm.rows();
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = mdp.reward[i];
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - gamma * Pm;
  Eigen::VectorXd v = A.partialPivLu().solve(Pm * r);
  return std::vector<double>(v.data(), v.data() + n);
}

SuccessorFeatures exact_sf(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                           double gamma, const std::vector<std::vector<double>>& phi) {
  check_gamma(gamma);
  if (phi.size() != static_cast<std::size_t>(mdp.n_states)) {
    throw InvalidInputError("phi needs one row per state");
  }
  Eigen::MatrixXd Pm = to_eigen(mdp.policy_transition(pi));
  Eigen::MatrixXd Phi = to_eigen(phi);
  Eigen::Index n = Pm.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - gamma * Pm;
  SuccessorFeatures out;
  out.psi = from_eigen(A.partialPivLu().solve(Phi));
  return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidInputError("tv_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return acc / 2.0;
}

EmpiricalDist empirical_dist(std::span<const int> sample_ids, int support_size) {
  if (sample_ids.empty()) throw InvalidInputError("empirical_dist: no samples");
  if (support_size <= 0) throw InvalidInputError("empirical_dist: empty support");
  EmpiricalDist out;
  out.probs.assign(support_size, 0.0);
  for (int id : sample_ids) {
    if (id < 0 || id >= support_size) {
      out.n_rejected++;
    } else {
      out.probs[id] += 1.0;
      out.n_samples++;
    }
  }
  if (out.n_samples == 0) throw InvalidInputError("empirical_dist: every sample was rejected");
  for (double& p : out.probs) p /= out.n_samples;
  return out;
}

std::vector<double> stationary_dist(const std::vector<std::vector<double>>& P, int max_iters,
                                    double tol) {
  check_square(P);
  std::size_t n = P.size();
  std::vector<double> d(n, 1.0 / n), next(n, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      if (d[s] == 0.0) continue;
      for (std::size_t t = 0; t < n; ++t) next[t] += d[s] * P[s][t];
    }
    double delta = 0.0;
    for (std::size_t t = 0; t < n; ++t) delta += std::abs(next[t] - d[t]);
    d.swap(next);
    if (delta < tol) break;
  }
  return d;
}

std::vector<int> greedy_improvement(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                                    double gamma) {
  std::vector<double> v = exact_value(mdp, pi, gamma);
  std::vector<int> actions(mdp.n_states, 0);
  for (int s = 0; s < mdp.n_states; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.n_actions; ++a) {
      double q = 0.0;
      for (int e = 0; e < mdp.n_states; ++e) {
        q += mdp.transition[s][a][e] * (mdp.reward[e] + gamma * v[e]);
      }
      if (q > best + 1e-12) {
        best = q;
        actions[s] = a;
      }
    }
  }
  return actions;
}

}  // namespace voc
