#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "voc/codebook.hpp"
#include "voc/nn/tensor.hpp"
#include "voc/occupancy.hpp"
#include "voc/trajectory.hpp"

namespace voc {

// Value estimation on top of a trained occupancy model: a reward model over
// pre-discretization features, the sample-based estimator
// V(z) = 1/(1-gamma) * E[r(z_e)] with z_e ~ M(.|z), and the density-based
// estimator that sums M(z_e|z) * r(z_e) over a validation trajectory.

/// Scalar regressor over feature_reward_vector space. hidden 0 is plain
/// linear; otherwise one GELU hidden layer.
class RewardModel {
 public:
  RewardModel(int in_dim, int hidden, uint64_t seed);

  int in_dim() const { return in_dim_; }
  int hidden() const { return hidden_; }

  /// Plain forward for one feature vector; bitwise-matches the graph path.
  double predict(std::span<const double> feat) const;

  /// x is [B, in_dim]; returns the [B, 1] prediction node.
  nn::TensorId predict_batch(nn::Graph& g, nn::TensorId x);

  std::vector<nn::Parameter*> params();
  std::vector<const nn::Parameter*> params() const;

 private:
  int in_dim_ = 0;
  int hidden_ = 0;
  nn::Parameter w1_, b1_;  // linear head when hidden 0 (w2/b2 unused)
  nn::Parameter w2_, b2_;
};

struct RewardTrainOpts {
  int hidden = 32;
  int batch_size = 64;
  double lr = 1e-2;
  double weight_decay = 0.0;
  double val_frac = 0.2;   // deterministic seeded split
  bool decay_lr = true;    // cosine to zero across the planned steps
};

struct RewardTrainResult {
  RewardModel model;
  double train_mse = 0.0;
  double val_mse = 0.0;
  std::vector<double> epoch_train_mse;  // one entry per epoch
};

/// MSE regression of r_t against the features of the frame stack ending at
/// t+1 (reward attributed to the arrived-at state). Features are the
/// concatenated per-frame feature_reward_vector of the window, so in_dim is
/// stack_size * L * d. Throws UnsupportedDatasetError when the dataset yields
/// no reward-labelled windows.
RewardTrainResult train_reward(const Dataset& ds, const Codebook& cb, int stack_size, int epochs,
                               uint64_t seed, RewardTrainOpts opts = {},
                               const InvDynEncoder* enc = nullptr);

void save_reward(const std::string& path, const RewardModel& rm);
RewardModel load_reward(const std::string& path);

enum class ValueMethod { kSampling, kDensity };

struct ValueEstimate {
  double mean = 0.0;
  ValueMethod method = ValueMethod::kSampling;
  int n_used = 0;            // samples drawn, or horizon terms summed
  int n_zero_density = 0;    // density terms dropped for zero model mass
  std::vector<double> per_sample;  // raw per-sample rewards / per-term mass*reward
};

/// Reward as a function of a latent state; the bridge between reward models
/// and the estimators.
using LatentReward = std::function<double(const LatentState&)>;

/// Decodes the latent to centroid features and applies the reward model.
LatentReward reward_from_model(const RewardModel& rm, const Codebook& cb);

/// Table lookup for single-token state latents (oracle comparisons).
LatentReward reward_from_table(std::vector<double> r);

/// Monte-Carlo estimator: mean = 1/(1-gamma) * average r over n_samples futures
/// drawn from the model. per_sample holds the raw rewards (the return
/// distribution). Propagates UnseenConditioningError.
ValueEstimate value_by_sampling(OccupancyModel& model, const LatentReward& r,
                                const LatentState& z, int n_samples, Rng& rng);

struct DensityOpts {
  bool dedupe = false;  // count each distinct latent once (first visit)
  bool scale_by_inv_one_minus_gamma = false;  // raw sum by default
};

/// Density-weighted estimator over a validation trajectory's future latents: sum of
/// exp(log_density(z0, traj[t])) * r(traj[t]) for t in [0, T). Zero-density
/// terms contribute 0 and are counted in n_zero_density.
ValueEstimate value_by_density(OccupancyModel& model, const LatentReward& r,
                               const LatentState& z0, std::span<const LatentState> traj, int T,
                               DensityOpts opts = {});

struct ErrorSummary {
  std::vector<double> abs_errors;
  double mean_abs_error = 0.0;
  double max_abs_error = 0.0;
};

/// Per-state |estimate - oracle| plus aggregates; inputs must align.
ErrorSummary return_estimation_error(std::span<const double> estimates,
                                     std::span<const double> oracle_values);

/// state_id, estimate, oracle, abs_error rows.
std::string error_table_csv(std::span<const int> state_ids, std::span<const double> estimates,
                            std::span<const double> oracle_values);

/// state_id, sample_index, reward rows from per-state return distributions.
std::string return_distribution_csv(std::span<const int> state_ids,
                                    const std::vector<std::vector<double>>& per_state_samples);

/// Rank correlation with average ranks on ties. Throws InvalidInputError for
/// mismatched/short input or zero rank variance.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace voc
