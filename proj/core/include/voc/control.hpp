#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voc/gridworld.hpp"
#include "voc/occupancy.hpp"
#include "voc/trajectory.hpp"
#include "voc/valuation.hpp"

namespace voc {

// Model-predictive control: each step peeks every candidate action's next
// observation by cloning the environment, scores the peeked frame stack with a
// value estimate, and takes the argmax. The model is not action-conditioned,
// so the environment supplies the one-step lookahead.

enum class MpcMethod { kVoc, kNoModel, kInitModel, kNoLookahead };

MpcMethod parse_mpc_method(const std::string& name);
std::string mpc_method_name(MpcMethod m);

enum class BufferMode { kResampleEachStep, kFixed };

struct MpcConfig {
  int episode_len = 20;
  int n_episodes = 20;
  int candidate_buffer_size = 100;
  int n_value_samples = 32;  // futures per voc/init-model score
  int stack_size = 1;
  MpcMethod method = MpcMethod::kVoc;
  BufferMode buffer_mode = BufferMode::kResampleEachStep;

  void validate() const;
};

/// Candidate actions drawn from a behavior dataset's action multiset (without
/// replacement while it lasts, uniformly from it beyond that), or uniformly
/// over the four moves when source is null. A source with no actions is an
/// InvalidInputError.
std::vector<int> build_candidate_buffer(const Dataset* source, int size, Rng& rng);

/// One candidate's peeked outcome.
struct Peek {
  int action = 0;
  std::vector<Frame> window;  // next frame stack, oldest first
  LatentState z;
  double reward = 0.0;  // immediate reward of the peeked step
  bool done = false;
};

/// Scores a peeked next state; rng feeds sampling-based scorers.
using Scorer = std::function<double(const Peek&, Rng&)>;

/// Sampling-based value of the peeked latent under the given occupancy model.
Scorer value_scorer(OccupancyModel& model, LatentReward r, int n_value_samples);

/// Predicted immediate reward of the peeked window (the no-lookahead
/// baseline), straight from pre-discretization features.
Scorer reward_scorer(const RewardModel& rm, const Codebook& cb, int stack_size,
                     const InvDynEncoder* enc = nullptr);

struct StepChoice {
  int action = 0;
  double score = 0.0;
};

/// Peeks each distinct candidate action (ascending, one env clone + step
/// each), scores it, and returns the best candidate; ties go to the lowest
/// action index. uniform_choice skips scoring and picks a candidate uniformly
/// (the no-model baseline; score reported as 0).
StepChoice mpc_step(const GridWorld& env, std::span<const Frame> window,
                    std::span<const int> candidates, const Codebook& cb, const Scorer& scorer,
                    Rng& rng, bool uniform_choice = false, const InvDynEncoder* enc = nullptr);

/// Everything a method might need; untrained artifacts stay null.
struct MpcArtifacts {
  OccupancyModel* model = nullptr;          // voc
  OccupancyModel* init_model = nullptr;     // init-model: untrained weights
  const RewardModel* rm = nullptr;          // voc, init-model, no-lookahead
  const Codebook* cb = nullptr;             // always
  const InvDynEncoder* enc = nullptr;       // inverse-dynamics codebooks
  const Dataset* action_source = nullptr;   // candidate buffer; null = uniform
};

struct EpisodeResult {
  double undiscounted_return = 0.0;
  std::vector<int> actions;
  std::vector<double> chosen_values;  // score of the taken action per step
};

struct MpcSummary {
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

struct MpcRun {
  std::vector<EpisodeResult> episodes;
  MpcSummary summary;
};

/// Box-plot statistics with linearly interpolated quartiles.
MpcSummary summarize_returns(std::span<const double> returns);

/// cfg.n_episodes episodes of at most cfg.episode_len steps (episodic
/// environments stop at the goal). Episode e draws its start, candidate
/// buffers, peeks, and steps from Rng::substream(seed, e); starts are uniform
/// over non-goal cells. Throws ConfigError when the method's artifacts are
/// missing.
MpcRun run_mpc(const GridWorld& env, const MpcArtifacts& art, const MpcConfig& cfg,
               uint64_t seed);

/// method, episode, return rows.
std::string mpc_results_csv(std::span<const std::pair<std::string, const MpcRun*>> runs);

/// method, mean, min, q1, median, q3, max rows.
std::string mpc_summary_csv(std::span<const std::pair<std::string, const MpcRun*>> runs);

}  // namespace voc
