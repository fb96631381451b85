#include "voc/valuation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "voc/error.hpp"
#include "voc/oracle.hpp"

using namespace voc;

namespace {

// converged tabular 3-cycle occupancy at the given gamma
OccupancyModel cycle_model(double gamma, uint64_t seed) {
  MdpSpec mdp = cycle_mdp(3);
  auto eps = simulate_mdp_episodes(mdp, 10, 60, seed);
  LatentDataset data = latent_dataset_from_episodes(eps, 3);
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = gamma;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.steps = 6000;
  tc.tab_lr0 = 0.5;
  tc.tab_tau = 150.0;
  train_occupancy(model, data, tc, seed + 1);
  return model;
}

GridWorld corridor() {
  GridWorld env;
  env.width = 8;
  env.height = 1;
  env.goal_pos = {0, 7};
  env.h_px = 8;
  env.w_px = 64;
  return env;
}

}  // namespace

TEST_CASE("valuation: constant reward fits to the constant") {
  GridWorld env = corridor();
  Policy pol = Policy::uniform_random();
  Dataset ds = generate_dataset(env, pol, 20, 10, 3);
  for (Trajectory& tr : ds.trajectories) {
    for (double& r : tr.rewards) r = 0.7;
  }
  Codebook cb = fit_codebook(ds.trajectories[0].frames, FeatureMap::kRawPixels, 2, {1, 2}, 5);
  RewardTrainOpts opts;
  opts.hidden = 0;  // linear is enough for a constant
  RewardTrainResult res = train_reward(ds, cb, 1, 200, 11, opts);
  CHECK(res.val_mse < 1e-4);
  std::vector<double> feat = feature_reward_vector(cb, ds.trajectories[0].frames[0]);
  CHECK(res.model.predict(feat) == doctest::Approx(0.7).epsilon(0.01));

  // descent sanity
  CHECK(res.epoch_train_mse.back() < res.epoch_train_mse.front());
}

TEST_CASE("valuation: goal reward regresses to near zero error") {
  GridWorld env = corridor();
  Dataset ds = generate_dataset(env, Policy::uniform_random(), 60, 10, 7);
  Codebook cb = fit_codebook(ds.trajectories[0].frames, FeatureMap::kRawPixels, 2, {1, 2}, 5);
  RewardTrainOpts opts;
  opts.hidden = 32;
  RewardTrainResult res = train_reward(ds, cb, 1, 150, 13, opts);
  CHECK(res.val_mse <= 0.01);
  CHECK(res.train_mse <= 0.01);

  // the model recovers the sparse structure: reward 1 on arrival at the goal
  bool saw_goal = false;
  for (const Trajectory& tr : ds.trajectories) {
    for (std::size_t t = 0; t + 1 < tr.frames.size(); ++t) {
      double pred = res.model.predict(feature_reward_vector(cb, tr.frames[t + 1]));
      CHECK(std::abs(pred - tr.rewards[t]) < 0.25);
      saw_goal = saw_goal || tr.rewards[t] > 0.5;
    }
  }
  CHECK(saw_goal);
}

TEST_CASE("valuation: reward-free dataset is rejected") {
  Dataset empty;
  empty.h_px = 8;
  empty.w_px = 64;
  Codebook cb;  // never touched: the sample pass comes first
  cb.k = 2;
  cb.d = 4;
  CHECK_THROWS_AS(train_reward(empty, cb, 1, 5, 0), UnsupportedDatasetError);
}

TEST_CASE("valuation: reward checkpoint round trips") {
  RewardModel rm(6, 8, 42);
  std::string path =
      (std::filesystem::temp_directory_path() / "voc_test_reward.bin").string();
  save_reward(path, rm);
  RewardModel back = load_reward(path);
  CHECK(back.in_dim() == 6);
  CHECK(back.hidden() == 8);
  std::vector<double> feat = {0.1, -0.2, 0.3, 0.0, 1.0, -1.0};
  CHECK(rm.predict(feat) == back.predict(feat));
  std::remove(path.c_str());
}

TEST_CASE("valuation: sampling estimator matches the exact value on the 3-cycle") {
  OccupancyModel model = cycle_model(0.5, 100);
  LatentReward r = reward_from_table({0.0, 1.0, 0.0});

  Rng rng(1);
  ValueEstimate est = value_by_sampling(model, r, state_latent(0), 10000, rng);
  CHECK(est.method == ValueMethod::kSampling);
  CHECK(est.n_used == 10000);
  CHECK(est.per_sample.size() == 10000);
  // frozen oracle: V = [8/7, 2/7, 4/7] for r=[0,1,0]
  CHECK(est.mean == doctest::Approx(8.0 / 7.0).epsilon(0.05));
  // mean = 1/(1-gamma) * average of the raw per-sample rewards
  double raw = 0.0;
  for (double v : est.per_sample) raw += v;
  CHECK(est.mean == doctest::Approx(2.0 * raw / 10000.0).epsilon(1e-12));

  MdpSpec mdp = cycle_mdp(3);
  mdp.reward = {0.0, 1.0, 0.0};
  std::vector<std::vector<double>> pi(3, {1.0});
  auto v_star = exact_value(mdp, pi, 0.5);
  for (int s = 0; s < 3; ++s) {
    Rng r2(10 + s);
    ValueEstimate e = value_by_sampling(model, r, state_latent(s), 10000, r2);
    CHECK(e.mean == doctest::Approx(v_star[s]).epsilon(0.05));
  }
}

TEST_CASE("valuation: gamma 0 sampling reduces to the next-state reward") {
  OccupancyModel model = cycle_model(0.0, 200);
  LatentReward r = reward_from_table({0.0, 1.0, 0.0});
  Rng rng(2);
  // deterministic cycle: the next state after 0 is always 1
  ValueEstimate est = value_by_sampling(model, r, state_latent(0), 500, rng);
  CHECK(est.mean == 1.0);
  for (double v : est.per_sample) CHECK(v == 1.0);

  // zero reward, zero value, exactly
  LatentReward zero = reward_from_table({0.0, 0.0, 0.0});
  ValueEstimate z = value_by_sampling(model, zero, state_latent(1), 200, rng);
  CHECK(z.mean == 0.0);
}

TEST_CASE("valuation: monte-carlo error shrinks with sample count") {
  OccupancyModel model = cycle_model(0.5, 300);
  LatentReward r = reward_from_table({0.0, 1.0, 0.0});
  // the estimator's own fixed point, so only sampling noise remains
  const std::vector<double>* row = model.table().row({0});
  REQUIRE(row != nullptr);
  double v_model = 0.0;
  for (int e = 0; e < 3; ++e) {
    auto it = model.table().col_of.find({e});
    if (it != model.table().col_of.end()) {
      v_model += (*row)[it->second] * (e == 1 ? 1.0 : 0.0);
    }
  }
  v_model *= 2.0;

  int wins = 0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng small_rng(1000 + seed), big_rng(2000 + seed);
    double e_small =
        std::abs(value_by_sampling(model, r, state_latent(0), 100, small_rng).mean - v_model);
    double e_big =
        std::abs(value_by_sampling(model, r, state_latent(0), 10000, big_rng).mean - v_model);
    if (e_big < e_small) ++wins;
  }
  CHECK(wins >= 9);
}

TEST_CASE("valuation: density estimator reproduces the oracle sum") {
  OccupancyModel model = cycle_model(0.5, 400);
  LatentReward r = reward_from_table({0.0, 1.0, 0.0});
  std::vector<LatentState> traj = {state_latent(1), state_latent(2), state_latent(0)};

  ValueEstimate est = value_by_density(model, r, state_latent(0), traj, 3);
  CHECK(est.method == ValueMethod::kDensity);
  CHECK(est.n_used == 3);
  CHECK(est.n_zero_density == 0);
  // mu(1|0)*1 + mu(2|0)*0 + mu(0|0)*0 = 4/7
  CHECK(est.mean == doctest::Approx(4.0 / 7.0).epsilon(0.05));
  CHECK(est.per_sample.size() == 3);
  CHECK(est.per_sample[1] == 0.0);

  // T=0 and zero reward are exact zeros
  CHECK(value_by_density(model, r, state_latent(0), traj, 0).mean == 0.0);
  LatentReward zero = reward_from_table({0.0, 0.0, 0.0});
  CHECK(value_by_density(model, zero, state_latent(0), traj, 3).mean == 0.0);

  // horizon beyond the trajectory is rejected
  CHECK_THROWS_AS(value_by_density(model, r, state_latent(0), traj, 4), InvalidInputError);

  // scaled variant matches the sampling estimator's limit on the full support
  ValueEstimate scaled =
      value_by_density(model, r, state_latent(0), traj, 3, {false, true});
  CHECK(scaled.mean == doctest::Approx(8.0 / 7.0).epsilon(0.05));
  Rng rng(3);
  ValueEstimate sampled = value_by_sampling(model, r, state_latent(0), 10000, rng);
  CHECK(std::abs(scaled.mean - sampled.mean) < 0.05);

  // dedupe counts a revisited latent once
  std::vector<LatentState> repeats = {state_latent(1), state_latent(1), state_latent(2),
                                      state_latent(0)};
  ValueEstimate dd = value_by_density(model, r, state_latent(0), repeats, 4, {true, false});
  CHECK(dd.mean == doctest::Approx(4.0 / 7.0).epsilon(0.05));
  CHECK(dd.per_sample[1] == 0.0);
}

TEST_CASE("valuation: zero-density terms are flagged, not summed") {
  // gamma 0 on the deterministic cycle leaves most entries at exactly zero
  OccupancyModel model = cycle_model(0.0, 500);
  LatentReward r = reward_from_table({1.0, 1.0, 1.0});
  std::vector<LatentState> traj = {state_latent(1), state_latent(2), state_latent(0)};
  ValueEstimate est = value_by_density(model, r, state_latent(0), traj, 3);
  CHECK(est.n_zero_density == 2);  // only state 1 has mass after state 0
  CHECK(est.mean == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("valuation: error summary and csv emission") {
  ErrorSummary s = return_estimation_error(std::vector<double>{1.0, 2.0},
                                           std::vector<double>{1.0, 2.0});
  CHECK(s.mean_abs_error == 0.0);
  CHECK(s.max_abs_error == 0.0);

  ErrorSummary one = return_estimation_error(std::vector<double>{1.0},
                                             std::vector<double>{8.0 / 7.0});
  CHECK(one.abs_errors[0] == doctest::Approx(0.142857).epsilon(1e-5));

  CHECK_THROWS_AS(return_estimation_error(std::vector<double>{1.0}, std::vector<double>{}),
                  InvalidInputError);

  std::vector<int> ids = {0, 2};
  std::string csv = error_table_csv(ids, std::vector<double>{1.0, 0.5},
                                    std::vector<double>{1.5, 0.5});
  CHECK(csv.find("state_id,estimate,oracle,abs_error") == 0);
  CHECK(csv.find("\n0,1,1.5,0.5\n") != std::string::npos);
  CHECK(csv.find("\n2,0.5,0.5,0\n") != std::string::npos);

  std::string dist = return_distribution_csv(ids, {{1.0, 0.0}, {0.25}});
  CHECK(dist.find("state_id,sample_index,reward") == 0);
  CHECK(dist.find("\n0,1,0\n") != std::string::npos);
  CHECK(dist.find("\n2,0,0.25\n") != std::string::npos);
}

TEST_CASE("valuation: spearman rank correlation") {
  std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> up = {0.1, 0.4, 0.5, 0.9, 2.0};
  std::vector<double> down = {5.0, 4.0, 3.0, 2.0, 1.0};
  CHECK(spearman(a, up) == doctest::Approx(1.0));
  CHECK(spearman(a, down) == doctest::Approx(-1.0));

  // invariant under monotone transforms
  std::vector<double> b = {0.3, -1.0, 2.0, 0.7, 0.1};
  std::vector<double> eb(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) eb[i] = std::exp(b[i]);
  CHECK(spearman(a, b) == doctest::Approx(spearman(a, eb)));
  CHECK(spearman(a, b) == doctest::Approx(spearman(b, a)));

  // ties share an averaged rank; hand value for {1,2,2,3} vs {1,2,3,4}:
  // ranks {1, 2.5, 2.5, 4}, correlation 0.9487 to 4 digits
  std::vector<double> ta = {1.0, 2.0, 2.0, 3.0};
  std::vector<double> tb = {1.0, 2.0, 3.0, 4.0};
  CHECK(spearman(ta, tb) == doctest::Approx(0.9487).epsilon(1e-4));

  CHECK_THROWS_AS(spearman(a, std::vector<double>{1.0}), InvalidInputError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}),
                  InvalidInputError);
}

TEST_CASE("valuation: unseen conditioning propagates through the estimators") {
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);
  LatentReward r = reward_from_table({0.0, 1.0, 0.0});
  Rng rng(4);
  CHECK_THROWS_AS(value_by_sampling(model, r, state_latent(0), 10, rng),
                  UnseenConditioningError);
  std::vector<LatentState> traj = {state_latent(1)};
  CHECK_THROWS_AS(value_by_density(model, r, state_latent(0), traj, 1),
                  UnseenConditioningError);
}
