#include "voc/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "voc/error.hpp"

namespace voc {

void GridWorld::validate() const {
  if (width < 1 || height < 1) throw ConfigError("gridworld dims must be positive");
  auto inside = [&](Cell c) {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  };
  if (!inside(agent_pos)) throw ConfigError("agent_pos outside grid");
  if (!inside(goal_pos)) throw ConfigError("goal_pos outside grid");
  if (!(slip_prob >= 0.0 && slip_prob < 1.0)) throw ConfigError("slip_prob must lie in [0,1)");
  if (h_px < height || w_px < width) throw ConfigError("render size smaller than grid");
}

Cell move_cell(const GridWorld& env, Cell from, int action) {
  Cell to = from;
  switch (action) {
    case kActionUp: to.row -= 1; break;
    case kActionDown: to.row += 1; break;
    case kActionLeft: to.col -= 1; break;
    case kActionRight: to.col += 1; break;
    default: throw InvalidInputError("action index out of range");
  }
  to.row = std::clamp(to.row, 0, env.height - 1);
  to.col = std::clamp(to.col, 0, env.width - 1);
  return to;
}

StepResult step(const GridWorld& env, int action, Rng& rng) {
  if (action < 0 || action >= kNumActions) throw InvalidInputError("action index out of range");
  int applied = action;
  if (env.slip_prob > 0.0 && rng.uniform() < env.slip_prob) {
    applied = static_cast<int>(rng.uniform_int(kNumActions));
  }
  StepResult out;
  out.env = env;
  out.env.agent_pos = move_cell(env, env.agent_pos, applied);
  bool at_goal = out.env.agent_pos == env.goal_pos;
  out.reward = at_goal ? env.goal_reward : 0.0;
  out.done = env.episodic && at_goal;
  return out;
}

Frame render(const GridWorld& env) {
  env.validate();
  if (env.h_px % env.height != 0 || env.w_px % env.width != 0) {
    throw ConfigError("render size not divisible by grid dims");
  }
  int bh = env.h_px / env.height;
  int bw = env.w_px / env.width;
  Frame f;
  f.h = env.h_px;
  f.w = env.w_px;
  f.c = 1;
  f.px.assign(static_cast<std::size_t>(f.h) * f.w, 0);
  auto fill = [&](Cell c, uint8_t v) {
    for (int r = c.row * bh; r < (c.row + 1) * bh; ++r) {
      for (int col = c.col * bw; col < (c.col + 1) * bw; ++col) {
        f.px[static_cast<std::size_t>(r) * f.w + col] = v;
      }
    }
  };
  fill(env.goal_pos, 128);
  fill(env.agent_pos, 255);  // agent wins when on the goal
  return f;
}

MdpSpec as_mdp(const GridWorld& env) {
  env.validate();
  MdpSpec mdp;
  mdp.n_states = env.n_states();
  mdp.n_actions = kNumActions;
  mdp.transition.assign(
      mdp.n_states,
      std::vector<std::vector<double>>(kNumActions, std::vector<double>(mdp.n_states, 0.0)));
  for (int s = 0; s < mdp.n_states; ++s) {
    Cell from = env.cell_of(s);
    std::array<int, kNumActions> dest{};
    for (int d = 0; d < kNumActions; ++d) dest[d] = env.state_id_of(move_cell(env, from, d));
    for (int a = 0; a < kNumActions; ++a) {
      auto& row = mdp.transition[s][a];
      row[dest[a]] += 1.0 - env.slip_prob;
      for (int d = 0; d < kNumActions; ++d) row[dest[d]] += env.slip_prob / kNumActions;
    }
  }
  mdp.reward.assign(mdp.n_states, 0.0);
  mdp.reward[env.state_id_of(env.goal_pos)] = env.goal_reward;
  int goal = env.state_id_of(env.goal_pos);
  int n_start = mdp.n_states - 1;
  mdp.initial_dist.assign(mdp.n_states, 0.0);
  if (n_start == 0) {
    mdp.initial_dist[goal] = 1.0;  // degenerate 1x1 grid
  } else {
    for (int s = 0; s < mdp.n_states; ++s) {
      if (s != goal) mdp.initial_dist[s] = 1.0 / n_start;
    }
  }
  mdp.validate();
  return mdp;
}

void Policy::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
  if (kind == Kind::kFixedActionSequence) {
    if (sequence.empty()) throw ConfigError("fixed-action-sequence needs a non-empty sequence");
    for (int a : sequence) {
      if (a < 0 || a >= kNumActions) throw ConfigError("sequence action out of range");
    }
  }
}

std::array<double, kNumActions> Policy::action_dist(const GridWorld& env, int t) const {
  std::array<double, kNumActions> p{};
  switch (kind) {
    case Kind::kUniformRandom:
      p.fill(1.0 / kNumActions);
      break;
    case Kind::kEpsilonGreedyToGoal: {
      int dr = env.goal_pos.row - env.agent_pos.row;
      int dc = env.goal_pos.col - env.agent_pos.col;
      std::vector<int> greedy;
      if (dr < 0) greedy.push_back(kActionUp);
      if (dr > 0) greedy.push_back(kActionDown);
      if (dc < 0) greedy.push_back(kActionLeft);
      if (dc > 0) greedy.push_back(kActionRight);
      if (greedy.empty()) greedy = {0, 1, 2, 3};  // already at the goal
      p.fill(epsilon / kNumActions);
      for (int a : greedy) p[a] += (1.0 - epsilon) / greedy.size();
      break;
    }
    case Kind::kFixedActionSequence: {
      if (sequence.empty()) throw ConfigError("fixed-action-sequence needs a non-empty sequence");
      int idx = t % static_cast<int>(sequence.size());
      if (idx < 0) idx += static_cast<int>(sequence.size());
      p[sequence[idx]] = 1.0;
      break;
    }
  }
  return p;
}

int Policy::sample_action(const GridWorld& env, int t, Rng& rng) const {
  auto p = action_dist(env, t);
  return static_cast<int>(rng.categorical(std::span<const double>(p.data(), p.size())));
}

std::vector<std::vector<double>> Policy::state_action_matrix(const GridWorld& env) const {
  if (kind == Kind::kFixedActionSequence) {
    throw ConfigError("fixed-action-sequence is time-dependent; no stationary action matrix");
  }
  std::vector<std::vector<double>> pi(env.n_states());
  GridWorld probe = env;
  for (int s = 0; s < env.n_states(); ++s) {
    probe.agent_pos = env.cell_of(s);
    auto p = action_dist(probe, 0);
    pi[s].assign(p.begin(), p.end());
  }
  return pi;
}

Policy Policy::uniform_random() { return Policy{}; }

Policy Policy::epsilon_greedy_to_goal(double epsilon) {
  Policy p;
  p.kind = Kind::kEpsilonGreedyToGoal;
  p.epsilon = epsilon;
  p.validate();
  return p;
}

Policy Policy::fixed_action_sequence(std::vector<int> seq) {
  Policy p;
  p.kind = Kind::kFixedActionSequence;
  p.sequence = std::move(seq);
  p.validate();
  return p;
}

Policy::Kind Policy::parse_kind(const std::string& name) {
  if (name == "uniform-random") return Kind::kUniformRandom;
  if (name == "epsilon-greedy-to-goal") return Kind::kEpsilonGreedyToGoal;
  if (name == "fixed-action-sequence") return Kind::kFixedActionSequence;
  throw ConfigError("unknown policy kind: " + name);
}

std::string Policy::kind_name(Kind k) {
  switch (k) {
    case Kind::kUniformRandom: return "uniform-random";
    case Kind::kEpsilonGreedyToGoal: return "epsilon-greedy-to-goal";
    case Kind::kFixedActionSequence: return "fixed-action-sequence";
  }
  throw InternalError("unreachable policy kind");
}

}  // namespace voc
