#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voc/frame.hpp"
#include "voc/gridworld.hpp"

namespace voc {

/// One rollout: frames.size() == actions.size() + 1 == rewards.size() + 1.
/// state_ids (one per frame) carry ground truth for oracle comparisons only;
/// nothing in training may read them.
struct Trajectory {
  std::vector<Frame> frames;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::optional<std::vector<uint32_t>> state_ids;

  void validate() const;
  int length() const { return static_cast<int>(frames.size()); }
};

/// Trajectory collection with a single shared frame shape.
struct Dataset {
  int h_px = 0;
  int w_px = 0;
  int channels = 1;
  std::vector<Trajectory> trajectories;

  void validate() const;

  /// Binary little-endian container; round-trips bit-exactly.
  std::vector<uint8_t> serialize() const;
  static Dataset deserialize(const std::vector<uint8_t>& bytes);

  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

/// Rolls out n_traj trajectories of at most traj_len frames each (episodic
/// runs truncate at the goal). Trajectory i draws everything — the uniform
/// non-goal start, policy actions, slip — from Rng::substream(seed, i).
Dataset generate_dataset(const GridWorld& env, const Policy& policy, int n_traj, int traj_len,
                         uint64_t seed);

}  // namespace voc
