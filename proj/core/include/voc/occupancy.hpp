#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voc/codebook.hpp"
#include "voc/nn/gpt.hpp"
#include "voc/nn/optim.hpp"
#include "voc/rng.hpp"
#include "voc/trajectory.hpp"

namespace voc {

class InvDynEncoder;

// The occupancy model M(.|z_t): a conditional categorical model over future
// latent states at discount gamma, trained by generative TD. The temporal
// target is z_{t+1} with probability (1-gamma) and a bootstrap sample from an
// EMA copy conditioned on z_{t+1} with probability gamma (k-step variant
// below). Two backends: an exact tabular conditional for enumerable latent
// spaces, and an autoregressive transformer over the concatenated token
// sequence [z_t, z_temporal].

enum class Backend { kTabular, kNeural };

Backend parse_backend(const std::string& name);
std::string backend_name(Backend b);

enum class LossPositions { kTargetOnly, kAllPositions };

LossPositions parse_loss_positions(const std::string& name);
std::string loss_positions_name(LossPositions p);

struct OccupancyConfig {
  Backend backend = Backend::kNeural;
  double gamma = 0.9;
  int vocab = 64;
  int tokens_per_latent = 8;  // conditioning and target have equal length
  // neural backend size; context is 2*tokens_per_latent
  int n_layer = 2;
  int n_head = 4;
  int n_embd = 64;

  void validate() const;
  bool operator==(const OccupancyConfig&) const = default;
};

/// Latent spaces coming straight from an enumerated MDP: one token per state.
LatentState state_latent(int state_id);

struct LatentTraj {
  std::vector<LatentState> latents;
};

/// Tokenized dataset: one latent per in-episode frame-stack window.
struct LatentDataset {
  int vocab = 0;
  int tokens_per_latent = 0;
  int stack_size = 1;
  std::vector<LatentTraj> trajs;

  void validate() const;
  std::size_t n_latents() const;
};

/// Slides a stack_size window over every trajectory; latent i of a trajectory
/// covers frames [i, i+stack_size). Trajectories shorter than the stack are
/// dropped.
LatentDataset encode_dataset(const Dataset& ds, const Codebook& cb, int stack_size,
                             const InvDynEncoder* enc = nullptr);

/// Wraps state-id episodes (e.g. simulate_mdp_episodes output) as single-token
/// latent trajectories with vocab n_states.
LatentDataset latent_dataset_from_episodes(const std::vector<std::vector<int>>& episodes,
                                           int n_states);

struct TemporalTarget {
  enum class Branch { kNextStep, kKStep, kBootstrap };
  LatentState tokens;
  Branch branch = Branch::kNextStep;
  int k = 1;  // drawn offset; k_max on the bootstrap branch
};

/// One training example: conditioning latent plus the in-episode future window
/// z_{t+1}.. (at most k_max entries, fewer near the episode end, never empty).
struct TrainingPair {
  LatentState z;
  std::vector<LatentState> futures;
};

struct TrainConfig {
  int k_max = 1;  // 1 = plain TD; k-step draws offset k with prob gamma^(k-1)*(1-gamma)
  int batch_size = 32;
  int64_t steps = 1000;
  double ema_decay = 0.9;  // target <- rho*target + (1-rho)*model after every step
  LossPositions loss_positions = LossPositions::kTargetOnly;
  // neural optimizer
  double lr = 3e-4;
  double weight_decay = 0.05;
  int warmup_steps = 100;
  int64_t total_steps = 0;  // 0 disables the cosine schedule
  // tabular step size decays as lr0 / (1 + updates/tau)
  double tab_lr0 = 0.5;
  double tab_tau = 2000.0;
  int log_interval = 100;

  void validate() const;
};

/// Conditional probability table over latent token sequences. Rows and columns
/// are discovered during training; every row is a distribution over the
/// currently known support.
struct TabularTable {
  std::map<std::vector<int>, int> row_of;
  std::vector<std::vector<int>> row_keys;
  std::map<std::vector<int>, int> col_of;
  std::vector<std::vector<int>> support;
  std::vector<std::vector<double>> rows;

  int ensure_row(const std::vector<int>& key);  // new rows start empty (all zero)
  int ensure_col(const std::vector<int>& key);  // new columns zero-pad every row
  const std::vector<double>* row(const std::vector<int>& key) const;
};

class OccupancyModel {
 public:
  OccupancyModel(OccupancyConfig cfg, uint64_t seed);

  const OccupancyConfig& config() const { return cfg_; }

  /// n independent multinomial samples of one future latent each. Neural
  /// sampling is autoregressive at temperature 1, run in lockstep over the
  /// batch. Tabular throws UnseenConditioningError for unvisited rows.
  std::vector<LatentState> sample_future(const LatentState& z, int n, Rng& rng);

  /// log M(z_e | z_t); -inf for a zero-probability tabular entry.
  double log_density(const LatentState& z_t, const LatentState& z_e);

  /// Autoregressive chain z -> sample -> sample...; returns the n_model_steps
  /// sampled latents (empty for 0). Each model step covers a geometrically
  /// distributed span of environment time when gamma > 0.
  std::vector<LatentState> rollout(const LatentState& z0, int n_model_steps, Rng& rng);

  /// Batched lockstep sampling: one future per conditioning latent.
  std::vector<LatentState> sample_future_batch(std::span<const LatentState> conds, Rng& rng);

  TabularTable& table();
  const TabularTable& table() const;
  nn::Gpt& gpt();
  const nn::Gpt& gpt() const;

 private:
  OccupancyConfig cfg_;
  TabularTable table_;
  std::optional<nn::Gpt> gpt_;
};

/// target <- rho*target + (1-rho)*model elementwise. Tabular targets first
/// adopt rows/columns the model discovered since the last update.
void ema_update(OccupancyModel& target, const OccupancyModel& model, double rho);

/// Draws the temporal target for one training pair: offset k with probability
/// gamma^(k-1)*(1-gamma) for k in [1, k_max], otherwise a bootstrap sample
/// from the target model conditioned on the last window latent. Offsets past
/// the episode end fall back to the final in-episode latent. A tabular
/// bootstrap whose conditioning row is still unseen degrades to that same
/// fallback latent.
TemporalTarget sample_temporal_target(const TrainingPair& pair, OccupancyModel& target,
                                      double gamma, int k_max, Rng& rng);

/// Optimizer and counters carried across td_train_step calls.
struct TdTrainState {
  nn::AdamW opt;
  int64_t tab_updates = 0;

  TdTrainState(const TrainConfig& cfg, double gamma);
};

struct StepStats {
  double loss = 0.0;
  int n_next = 0;
  int n_kstep = 0;
  int n_boot = 0;
  double lr = 0.0;
};

/// One generative TD step on a batch: draw temporal targets, take one
/// cross-entropy step on [z_t, z_temporal] (neural) or per-sample table
/// updates (tabular), then EMA the target model. Throws
/// TrainingDivergenceError on a non-finite loss.
StepStats td_train_step(OccupancyModel& model, OccupancyModel& target,
                        std::span<const TrainingPair> batch, const TrainConfig& cfg,
                        TdTrainState& state, Rng& rng);

struct TrainLogRow {
  int64_t step = 0;
  double loss = 0.0;
  double frac_next = 0.0;
  double frac_kstep = 0.0;
  double frac_boot = 0.0;
  double lr = 0.0;
};

/// Full training loop: samples batches of (z_t, futures) uniformly from the
/// dataset and runs cfg.steps TD steps. Logs every log_interval steps plus the
/// final step. target_out, when given, receives the final EMA target model.
std::vector<TrainLogRow> train_occupancy(OccupancyModel& model, const LatentDataset& data,
                                         const TrainConfig& cfg, uint64_t seed,
                                         OccupancyModel* target_out = nullptr);

std::string train_log_csv(std::span<const TrainLogRow> rows);

void save_occupancy(const std::string& path, const OccupancyModel& model);
OccupancyModel load_occupancy(const std::string& path);

}  // namespace voc
