#include "voc/mdp.hpp"

#include <cmath>
#include <string>

#include "voc/error.hpp"

namespace voc {

void MdpSpec::validate() const {
  if (n_states <= 0 || n_actions <= 0)
    throw InvalidInputError("MdpSpec: n_states and n_actions must be positive");
  auto check_dist = [](const std::vector<double>& row, const std::string& what) {
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0 || p > 1.0) throw InvalidInputError(what + ": probability outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InvalidInputError(what + ": row does not sum to 1");
  };
  if (static_cast<int>(transition.size()) != n_states)
    throw InvalidInputError("MdpSpec: transition has wrong state count");
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(transition[s].size()) != n_actions)
      throw InvalidInputError("MdpSpec: transition has wrong action count");
    for (int a = 0; a < n_actions; ++a) {
      if (static_cast<int>(transition[s][a].size()) != n_states)
        throw InvalidInputError("MdpSpec: transition row has wrong length");
      check_dist(transition[s][a], "MdpSpec transition[" + std::to_string(s) + "][" + std::to_string(a) + "]");
    }
  }
  if (static_cast<int>(reward.size()) != n_states)
    throw InvalidInputError("MdpSpec: reward vector has wrong length");
  if (static_cast<int>(initial_dist.size()) != n_states)
    throw InvalidInputError("MdpSpec: initial_dist has wrong length");
  check_dist(initial_dist, "MdpSpec initial_dist");
}

std::vector<std::vector<double>> MdpSpec::policy_transition(
    const std::vector<std::vector<double>>& pi) const {
  if (static_cast<int>(pi.size()) != n_states)
    throw InvalidInputError("policy_transition: pi has wrong state count");
  std::vector<std::vector<double>> P(n_states, std::vector<double>(n_states, 0.0));
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(pi[s].size()) != n_actions)
      throw InvalidInputError("policy_transition: pi row has wrong length");
    for (int a = 0; a < n_actions; ++a)
      for (int t = 0; t < n_states; ++t) P[s][t] += pi[s][a] * transition[s][a][t];
  }
  return P;
}

std::vector<std::vector<double>> MdpSpec::uniform_policy_transition() const {
  std::vector<std::vector<double>> pi(n_states,
                                      std::vector<double>(n_actions, 1.0 / n_actions));
  return policy_transition(pi);
}

static MdpSpec blank(int n) {
  MdpSpec m;
  m.n_states = n;
  m.n_actions = 1;
  m.transition.assign(n, {std::vector<double>(n, 0.0)});
  m.reward.assign(n, 0.0);
  m.initial_dist.assign(n, 1.0 / n);
  return m;
}

MdpSpec cycle_mdp(int n) {
  MdpSpec m = blank(n);
  for (int s = 0; s < n; ++s) m.transition[s][0][(s + 1) % n] = 1.0;
  return m;
}

MdpSpec noisy_cycle_mdp(int n, double slip) {
  if (slip < 0.0 || slip >= 0.5) throw InvalidInputError("noisy_cycle_mdp: slip must be in [0,0.5)");
  MdpSpec m = blank(n);
  for (int s = 0; s < n; ++s) {
    m.transition[s][0][(s + 1) % n] = 1.0 - 2.0 * slip;
    m.transition[s][0][s] += slip;
    m.transition[s][0][(s + n - 1) % n] += slip;
  }
  return m;
}

MdpSpec chain_mdp(int n) {
  MdpSpec m = blank(n);
  for (int s = 0; s + 1 < n; ++s) m.transition[s][0][s + 1] = 1.0;
  m.transition[n - 1][0][n - 1] = 1.0;
  m.initial_dist.assign(n, 0.0);
  m.initial_dist[0] = 1.0;
  return m;
}

int sample_state(std::span<const double> dist, Rng& rng) {
  return static_cast<int>(rng.categorical(dist));
}

std::vector<std::vector<int>> simulate_mdp_episodes(const MdpSpec& mdp, int n_episodes,
                                                    int episode_len, uint64_t seed) {
  mdp.validate();
  if (n_episodes < 1 || episode_len < 2)
    throw InvalidInputError("simulate_mdp_episodes: need n_episodes >= 1, episode_len >= 2");
  std::vector<std::vector<int>> episodes;
  episodes.reserve(static_cast<std::size_t>(n_episodes));
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = Rng::substream(seed, static_cast<uint64_t>(e));
    std::vector<int> ep;
    ep.reserve(static_cast<std::size_t>(episode_len));
    int s = sample_state(mdp.initial_dist, rng);
    ep.push_back(s);
    for (int t = 1; t < episode_len; ++t) {
      int a = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(mdp.n_actions)));
      s = sample_state(mdp.transition[s][a], rng);
      ep.push_back(s);
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace voc
