#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voc/frame.hpp"
#include "voc/mdp.hpp"
#include "voc/rng.hpp"

namespace voc {

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Rectangular gridworld with block-rendered grayscale observations.
///
/// Actions: 0 up, 1 down, 2 left, 3 right. Moves off the grid clamp at the
/// wall. With probability slip_prob the chosen direction is replaced by a
/// uniformly random one (which may coincide with the choice). Reward
/// goal_reward is collected on arriving at the goal cell, 0 elsewhere;
/// with episodic=true reaching the goal ends the episode.
struct GridWorld {
  int width = 5;
  int height = 5;
  Cell agent_pos;
  Cell goal_pos;
  double slip_prob = 0.0;
  int h_px = 40;
  int w_px = 40;
  bool episodic = true;
  double goal_reward = 1.0;

  void validate() const;

  int n_states() const { return width * height; }
  int state_id() const { return agent_pos.row * width + agent_pos.col; }
  int state_id_of(Cell c) const { return c.row * width + c.col; }
  Cell cell_of(int state) const { return {state / width, state % width}; }
  bool at_goal() const { return agent_pos == goal_pos; }
};

inline constexpr int kNumActions = 4;
inline constexpr int kActionUp = 0;
inline constexpr int kActionDown = 1;
inline constexpr int kActionLeft = 2;
inline constexpr int kActionRight = 3;

/// Destination of a deterministic move (wall-clamped); no slip applied.
Cell move_cell(const GridWorld& env, Cell from, int action);

struct StepResult {
  GridWorld env;
  double reward = 0.0;
  bool done = false;
};

/// One environment transition. Throws InvalidInputError for action >= 4.
StepResult step(const GridWorld& env, int action, Rng& rng);

/// Deterministic block rendering: background 0, goal block 128, agent block
/// 255 (agent drawn last, so it wins when the two coincide). Each cell is a
/// (h_px/height) x (w_px/width) patch; non-divisible sizes are a ConfigError.
Frame render(const GridWorld& env);

/// Exact MDP over all agent positions (row-major state ids). Transition rows
/// mix the chosen move with the slip average; reward is goal_reward at the
/// goal state; initial_dist is uniform over non-goal cells, matching how
/// trajectories are started.
MdpSpec as_mdp(const GridWorld& env);

/// Behavior policies for data collection.
///
/// epsilon-greedy-to-goal spreads 1-epsilon over the Manhattan-distance-
/// reducing actions (all four when already at the goal) and epsilon uniformly.
/// fixed-action-sequence plays sequence[t mod len] regardless of state.
struct Policy {
  enum class Kind { kUniformRandom, kEpsilonGreedyToGoal, kFixedActionSequence };

  Kind kind = Kind::kUniformRandom;
  double epsilon = 0.1;
  std::vector<int> sequence;

  void validate() const;

  /// Distribution over the four actions in state `env` at step t.
  std::array<double, kNumActions> action_dist(const GridWorld& env, int t) const;

  int sample_action(const GridWorld& env, int t, Rng& rng) const;

  /// Per-state action probabilities for the oracle bridge. Only defined for
  /// the stationary kinds; fixed-action-sequence is time-dependent and throws
  /// ConfigError.
  std::vector<std::vector<double>> state_action_matrix(const GridWorld& env) const;

  static Policy uniform_random();
  static Policy epsilon_greedy_to_goal(double epsilon);
  static Policy fixed_action_sequence(std::vector<int> seq);

  static Kind parse_kind(const std::string& name);
  static std::string kind_name(Kind k);
};

}  // namespace voc
