#pragma once

#include <span>
#include <vector>

#include "voc/mdp.hpp"

namespace voc {

/// Exact discounted occupancy: mu[s][e] is the probability that a
/// geometrically-timed (parameter gamma) future visit starting AFTER s lands
/// on e. Next-state convention: the k=0 term is P_pi, so gamma=0 reduces to
/// the one-step model.
struct OccupancyDist {
  std::vector<std::vector<double>> mu;
  double gamma = 0.0;

  /// Throws InternalError if any row is not a distribution within 1e-10.
  void validate() const;
};

/// Expected discounted feature sums, self-inclusive: Psi = phi + gamma P Psi.
struct SuccessorFeatures {
  std::vector<std::vector<double>> psi;
};

/// mu = (1-gamma) P (I - gamma P)^{-1} for a policy-averaged transition
/// matrix, by dense LU solve.
OccupancyDist occupancy_from_transition(const std::vector<std::vector<double>>& P, double gamma);

/// Same object through the independent route, a truncated geometric series
/// mu_K = (1-gamma) sum_{k=0..K} gamma^k P^{k+1} with plain loops. The
/// truncated tail carries gamma^{K+1} of the mass, so callers pick k_terms to
/// match their tolerance. k_terms counts series terms beyond the first
/// (k_terms = 0 gives (1-gamma) P).
OccupancyDist occupancy_by_series(const std::vector<std::vector<double>>& P, double gamma,
                                  int k_terms);

OccupancyDist exact_occupancy(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                              double gamma);

/// V = (I - gamma P)^{-1} P r: rewards collected on arrival, so V(s) averages
/// r over the occupancy scaled by 1/(1-gamma).
std::vector<double> exact_value(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                                double gamma);

/// Psi = (I - gamma P)^{-1} phi; phi has one row per state.
SuccessorFeatures exact_sf(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                           double gamma, const std::vector<std::vector<double>>& phi);

/// Half L1 distance between equal-length distributions.
double tv_distance(std::span<const double> p, std::span<const double> q);

/// Counting distribution over an enumerated support. Samples outside
/// [0, support_size) land in the reject bucket and are excluded from the
/// normalization; all samples rejected is an InvalidInputError.
struct EmpiricalDist {
  std::vector<double> probs;
  int n_samples = 0;
  int n_rejected = 0;
};

EmpiricalDist empirical_dist(std::span<const int> sample_ids, int support_size);

/// Stationary distribution of P by power iteration from uniform.
std::vector<double> stationary_dist(const std::vector<std::vector<double>>& P, int max_iters = 100000,
                                    double tol = 1e-13);

/// One policy-improvement step on V_pi: per state the argmax_a of
/// sum_e P[s][a][e] (r[e] + gamma V_pi[e]), ties to the lowest action index.
std::vector<int> greedy_improvement(const MdpSpec& mdp, const std::vector<std::vector<double>>& pi,
                                    double gamma);

}  // namespace voc
