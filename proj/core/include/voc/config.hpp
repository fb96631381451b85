#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voc/control.hpp"
#include "voc/gridworld.hpp"
#include "voc/occupancy.hpp"
#include "voc/valuation.hpp"

namespace voc {

// Experiment configuration: one JSON document drives every pipeline stage.
// Each section mirrors one module's knobs; command-line flags override file
// values field by field, and every run writes back the resolved copy it used.

struct EnvSection {
  int width = 5;
  int height = 5;
  int goal_row = 4;
  int goal_col = 4;
  double slip = 0.0;
  int cell_px = 8;
  bool continuing = false;
  double goal_reward = 1.0;
  // behavior data collection
  std::string policy = "uniform-random";
  double epsilon = 0.1;
  std::vector<int> sequence;  // fixed-action-sequence policy
  int n_traj = 100;
  int traj_len = 20;
};

struct TokenizerSection {
  std::string feature_map = "raw-pixels";
  int k = 16;
  int patch_rows = 2;
  int patch_cols = 2;
  int stack_size = 1;
  // inverse-dynamics encoder training
  int invdyn_k_max = 1;
  int invdyn_epochs = 10;
  int invdyn_hidden = 64;
  int invdyn_feat_dim = 16;
  int invdyn_batch = 64;
  double invdyn_lr = 1e-3;
};

struct ModelSection {
  std::string backend = "neural";
  double gamma = 0.9;
  int k_max = 1;
  double ema_decay = 0.9;
  std::string loss_positions = "target-only";
  int n_layer = 2;
  int n_head = 4;
  int n_embd = 64;
  int64_t steps = 2000;
  int batch_size = 32;
  double lr = 3e-4;
  double weight_decay = 0.05;
  int warmup_steps = 100;
  double tab_lr0 = 0.5;
  double tab_tau = 2000.0;
  int log_interval = 100;
  int eval_samples = 2000;  // per-row sample budget when evaluating the model
};

struct RewardSection {
  int hidden = 32;
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-2;
  double weight_decay = 0.0;
  double val_frac = 0.2;
  bool decay_lr = true;
};

struct ValuationSection {
  int n_samples = 1000;  // sampling estimator
  int density_T = 10;    // density-estimator horizon
  bool dedupe = false;
  bool scale_density = false;
  // held-out dataset the density estimator walks over
  int val_n_traj = 20;
  int val_traj_len = 20;
};

struct MpcSection {
  std::string method = "voc";  // voc | no-model | init-model | no-lookahead | all
  int episode_len = 20;
  int n_episodes = 20;
  int candidate_buffer_size = 100;
  int n_value_samples = 32;
  std::string buffer_mode = "resample";  // resample | fixed
};

struct ExperimentConfig {
  EnvSection env;
  TokenizerSection tokenizer;
  ModelSection model;
  RewardSection reward;
  ValuationSection valuation;
  MpcSection mpc;
  uint64_t seed = 0;
  std::string output_dir = "run";

  /// Cross-checks every section (enum names parse, counts positive, the env
  /// renders). ConfigError on the first violation.
  void validate() const;

  /// Resolved JSON copy: sorted keys, two-space indent, byte-stable.
  std::string to_json() const;

  /// Parses a JSON document; unknown sections or keys are a ConfigError.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

GridWorld build_env(const EnvSection& e);
Policy build_policy(const EnvSection& e);

/// Occupancy model config for a tokenizer with the given vocabulary and
/// tokens per latent (codebook patches x stack size).
OccupancyConfig occupancy_config(const ModelSection& m, int vocab, int tokens_per_latent);
TrainConfig train_config(const ModelSection& m);
RewardTrainOpts reward_opts(const RewardSection& r);
MpcConfig mpc_config(const MpcSection& m, int stack_size);

}  // namespace voc
