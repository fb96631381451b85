#pragma once

#include <cstdint>
#include <vector>

#include "voc/rng.hpp"

namespace voc {

/// Finite MDP with state rewards.
///
/// transition is indexed [s][a][s']; each row over s' is a probability
/// distribution. Rewards are attached to states: r[s'] is collected on
/// arriving in s'.
struct MdpSpec {
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;
  std::vector<double> reward;
  std::vector<double> initial_dist;

  /// Throws InvalidInputError if any transition row or initial_dist is not a
  /// distribution within 1e-12, or any probability lies outside [0,1].
  void validate() const;

  /// Policy-averaged transition matrix P_pi[s][s'] under per-state action
  /// probabilities pi[s][a].
  std::vector<std::vector<double>> policy_transition(
      const std::vector<std::vector<double>>& pi) const;

  /// Uniform-policy convenience for single-action chains and random walks.
  std::vector<std::vector<double>> uniform_policy_transition() const;
};

/// Deterministic n-cycle: one action, state s moves to (s+1) mod n.
MdpSpec cycle_mdp(int n);

/// Cycle with slip mass: forward 1 - 2*slip, stay slip, backward slip.
MdpSpec noisy_cycle_mdp(int n, double slip);

/// Directed chain 0 -> 1 -> ... -> n-1 with the last state absorbing.
MdpSpec chain_mdp(int n);

/// Samples a state index from a distribution row.
int sample_state(std::span<const double> dist, Rng& rng);

/// Simulates episodes under the uniform policy, returning state-id sequences.
/// Episode e uses Rng::substream(seed, e); starts are drawn from initial_dist.
std::vector<std::vector<int>> simulate_mdp_episodes(const MdpSpec& mdp, int n_episodes,
                                                    int episode_len, uint64_t seed);

}  // namespace voc
