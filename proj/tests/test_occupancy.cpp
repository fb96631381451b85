#include "voc/occupancy.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "voc/error.hpp"
#include "voc/io.hpp"
#include "voc/oracle.hpp"
#include "voc/trajectory.hpp"

using namespace voc;

namespace {

LatentDataset cycle_data(int n_states, int n_episodes, int ep_len, uint64_t seed) {
  MdpSpec mdp = cycle_mdp(n_states);
  auto eps = simulate_mdp_episodes(mdp, n_episodes, ep_len, seed);
  return latent_dataset_from_episodes(eps, n_states);
}

// trained table row as a dense distribution over single-token state latents
std::vector<double> row_dist(const OccupancyModel& m, int s, int n) {
  std::vector<double> out(n, 0.0);
  const std::vector<double>* row = m.table().row({s});
  REQUIRE(row != nullptr);
  for (int e = 0; e < n; ++e) {
    auto it = m.table().col_of.find({e});
    if (it != m.table().col_of.end()) out[e] = (*row)[it->second];
  }
  return out;
}

// neural conditional via the density interface; tokens_per_latent 1 only
std::vector<double> density_dist(OccupancyModel& m, int s, int n) {
  std::vector<double> out(n, 0.0);
  for (int e = 0; e < n; ++e) out[e] = std::exp(m.log_density(state_latent(s), state_latent(e)));
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("occupancy: episode wrapping and latent dataset validation") {
  LatentDataset ds = latent_dataset_from_episodes({{0, 1, 2}, {2, 0}}, 3);
  CHECK(ds.vocab == 3);
  CHECK(ds.tokens_per_latent == 1);
  CHECK(ds.trajs.size() == 2);
  CHECK(ds.n_latents() == 5);
  CHECK(ds.trajs[0].latents[1] == state_latent(1));
  ds.validate();

  CHECK_THROWS_AS(latent_dataset_from_episodes({{0, 5}}, 3), InvalidInputError);
  CHECK_THROWS_AS(latent_dataset_from_episodes({}, 1), InvalidInputError);

  LatentDataset bad = ds;
  bad.trajs[0].latents[0].seq.tokens = {0, 1};  // length disagrees with header
  CHECK_THROWS_AS(bad.validate(), InvalidInputError);
}

TEST_CASE("occupancy: encode_dataset slides stacked windows") {
  GridWorld env;
  env.goal_pos = {4, 4};
  Dataset ds = generate_dataset(env, Policy::uniform_random(), 12, 8, 99);
  std::vector<Frame> all_frames;
  for (const Trajectory& tr : ds.trajectories) {
    all_frames.insert(all_frames.end(), tr.frames.begin(), tr.frames.end());
  }
  Codebook cb = fit_codebook(all_frames, FeatureMap::kRawPixels, 8, {2, 2}, 7);
  REQUIRE(ds.trajectories[0].frames.size() >= 4);
  REQUIRE(ds.trajectories[1].frames.size() >= 3);

  LatentDataset flat = encode_dataset(ds, cb, 1);
  CHECK(flat.vocab == 8);
  CHECK(flat.tokens_per_latent == 4);
  CHECK(flat.trajs.size() == ds.trajectories.size());
  CHECK(flat.trajs[0].latents.size() == ds.trajectories[0].frames.size());

  LatentDataset stacked = encode_dataset(ds, cb, 2);
  CHECK(stacked.tokens_per_latent == 8);
  CHECK(stacked.trajs[0].latents.size() == ds.trajectories[0].frames.size() - 1);
  // latent 1's leading frame tokens equal latent 0's trailing ones
  const std::vector<int>& a = stacked.trajs[0].latents[1].seq.tokens;
  const std::vector<int>& b = stacked.trajs[0].latents[0].seq.tokens;
  CHECK(std::vector<int>(a.begin(), a.begin() + 4) == std::vector<int>(b.begin() + 4, b.end()));

  // trajectories shorter than the stack are dropped
  Dataset tiny;
  tiny.h_px = ds.h_px;
  tiny.w_px = ds.w_px;
  tiny.trajectories = {ds.trajectories[0], ds.trajectories[1]};
  tiny.trajectories[0].frames.resize(2);
  tiny.trajectories[0].actions.resize(1);
  tiny.trajectories[0].rewards.resize(1);
  tiny.trajectories[0].state_ids->resize(2);
  LatentDataset deep = encode_dataset(tiny, cb, 3);
  CHECK(deep.trajs.size() == 1);
}

TEST_CASE("occupancy: temporal target branches follow the geometric schedule") {
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.9;
  cfg.vocab = 4;
  cfg.tokens_per_latent = 1;
  OccupancyModel target(cfg, 0);
  // seed the bootstrap row by hand: conditioning {3} answers {0} w.p. 1
  target.table().ensure_row({3});
  target.table().ensure_col({0});
  target.table().rows[0][0] = 1.0;

  TrainingPair pair;
  pair.z = state_latent(0);
  pair.futures = {state_latent(1), state_latent(2), state_latent(3)};

  Rng rng(17);
  int n = 20000;
  int c1 = 0, c2 = 0, c3 = 0, cboot = 0;
  for (int i = 0; i < n; ++i) {
    TemporalTarget tt = sample_temporal_target(pair, target, 0.9, 3, rng);
    switch (tt.branch) {
      case TemporalTarget::Branch::kNextStep:
        ++c1;
        CHECK(tt.tokens == pair.futures[0]);
        break;
      case TemporalTarget::Branch::kKStep:
        tt.k == 2 ? ++c2 : ++c3;
        CHECK(tt.tokens == pair.futures[tt.k - 1]);
        break;
      case TemporalTarget::Branch::kBootstrap:
        ++cboot;
        CHECK(tt.k == 3);
        CHECK(tt.tokens == state_latent(0));  // the seeded row's only answer
        break;
    }
  }
  // masses 0.1, 0.09, 0.081, 0.729
  CHECK(std::abs(c1 / double(n) - 0.1) < 0.01);
  CHECK(std::abs(c2 / double(n) - 0.09) < 0.01);
  CHECK(std::abs(c3 / double(n) - 0.081) < 0.01);
  CHECK(std::abs(cboot / double(n) - 0.729) < 0.01);

  CHECK_THROWS_AS(sample_temporal_target({state_latent(0), {}}, target, 0.9, 3, rng),
                  InvalidInputError);
}

TEST_CASE("occupancy: short futures and unseen bootstrap rows fall back") {
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.9;
  cfg.vocab = 4;
  cfg.tokens_per_latent = 1;
  OccupancyModel target(cfg, 0);  // empty table: every bootstrap row is unseen

  TrainingPair pair;
  pair.z = state_latent(0);
  pair.futures = {state_latent(2)};  // episode ends right after t+1

  Rng rng(5);
  bool saw_boot = false;
  for (int i = 0; i < 100; ++i) {
    TemporalTarget tt = sample_temporal_target(pair, target, 0.9, 3, rng);
    CHECK(tt.tokens == state_latent(2));  // every branch resolves to the last latent
    saw_boot = saw_boot || tt.branch == TemporalTarget::Branch::kBootstrap;
  }
  CHECK(saw_boot);
}

TEST_CASE("occupancy: tabular ema adopts rows then blends") {
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.5;
  cfg.vocab = 4;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);
  OccupancyModel target(cfg, 0);

  model.table().ensure_row({0});
  model.table().ensure_col({1});
  model.table().rows[0][0] = 1.0;

  // a row the target has never seen arrives as an exact copy
  ema_update(target, model, 0.9);
  REQUIRE(target.table().row({0}) != nullptr);
  CHECK((*target.table().row({0}))[0] == 1.0);

  // new column: target zero-pads, then blends 0.9*old + 0.1*new
  model.table().ensure_col({2});
  model.table().rows[0] = {0.5, 0.5};
  ema_update(target, model, 0.9);
  const std::vector<double>& tr = *target.table().row({0});
  CHECK(tr[0] == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(tr[1] == doctest::Approx(0.05).epsilon(1e-12));

  // rho 1 freezes, rho 0 copies
  ema_update(target, model, 1.0);
  CHECK((*target.table().row({0}))[0] == doctest::Approx(0.95).epsilon(1e-12));
  ema_update(target, model, 0.0);
  CHECK((*target.table().row({0}))[0] == 0.5);

  OccupancyConfig other = cfg;
  other.gamma = 0.9;
  OccupancyModel mismatched(other, 0);
  CHECK_THROWS_AS(ema_update(target, mismatched, 0.9), InvalidInputError);
  CHECK_THROWS_AS(ema_update(target, model, 1.5), InvalidInputError);
}

TEST_CASE("occupancy: gamma 0 tabular recovers the one-step model") {
  LatentDataset data = cycle_data(3, 10, 40, 11);
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.0;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);

  TrainConfig tc;
  tc.batch_size = 32;
  tc.steps = 400;
  tc.tab_lr0 = 0.5;
  tc.tab_tau = 200.0;
  auto log = train_occupancy(model, data, tc, 123);
  CHECK(log.size() == 4);
  CHECK(log.back().frac_next == 1.0);  // gamma 0 never bootstraps
  CHECK(log.back().frac_boot == 0.0);

  // deterministic cycle: every row is one-hot on the successor
  for (int s = 0; s < 3; ++s) {
    std::vector<double> onehot(3, 0.0);
    onehot[(s + 1) % 3] = 1.0;
    CHECK(tv_distance(row_dist(model, s, 3), onehot) <= 0.01);
  }

  // a gamma-0 rollout replays the cycle exactly
  Rng rng(7);
  auto chain = model.rollout(state_latent(0), 6, rng);
  REQUIRE(chain.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(chain[i] == state_latent((i + 1) % 3));
  CHECK(model.rollout(state_latent(0), 0, rng).empty());
}

TEST_CASE("occupancy: tabular 3-cycle matches the exact occupancy at gamma 0.5") {
  LatentDataset data = cycle_data(3, 10, 60, 21);
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);

  TrainConfig tc;
  tc.batch_size = 32;
  tc.steps = 12500;  // 400k table updates
  tc.tab_lr0 = 0.5;
  tc.tab_tau = 200.0;
  tc.ema_decay = 0.9;
  train_occupancy(model, data, tc, 321);

  // frozen exact row: mu(.|0) = {1/7, 4/7, 2/7}
  std::vector<double> mu0 = {1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0};
  CHECK(tv_distance(row_dist(model, 0, 3), mu0) <= 0.02);

  // all rows against the LU-solved occupancy
  MdpSpec mdp = cycle_mdp(3);
  OccupancyDist mu = occupancy_from_transition(mdp.uniform_policy_transition(), 0.5);
  for (int s = 0; s < 3; ++s) CHECK(tv_distance(row_dist(model, s, 3), mu.mu[s]) <= 0.02);

  // Bellman fixed point: mu(.|s) = (1-g)*onehot(s+1) + g*mu(.|s+1)
  for (int s = 0; s < 3; ++s) {
    std::vector<double> lhs = row_dist(model, s, 3);
    std::vector<double> rhs = row_dist(model, (s + 1) % 3, 3);
    for (double& v : rhs) v *= 0.5;
    rhs[(s + 1) % 3] += 0.5;
    CHECK(tv_distance(lhs, rhs) <= 0.02);
  }

  // density interface agrees with the table
  CHECK(model.log_density(state_latent(0), state_latent(1)) ==
        doctest::Approx(std::log(4.0 / 7.0)).epsilon(0.05));
  for (int s = 0; s < 3; ++s) {
    double total = 0.0;
    for (int e = 0; e < 3; ++e) {
      total += std::exp(model.log_density(state_latent(s), state_latent(e)));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }

  // sampling frequencies track the stored row
  Rng rng(9);
  auto samples = model.sample_future(state_latent(0), 20000, rng);
  std::vector<int> ids;
  for (const LatentState& z : samples) ids.push_back(z.seq.tokens[0]);
  EmpiricalDist freq = empirical_dist(ids, 3);
  CHECK(tv_distance(freq.probs, row_dist(model, 0, 3)) <= 0.02);
}

TEST_CASE("occupancy: k-step training reaches the same fixed point") {
  LatentDataset data = cycle_data(3, 10, 60, 31);
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;

  std::vector<double> mu0 = {1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0};
  for (int k_max : {2, 3}) {
    OccupancyModel model(cfg, 0);
    TrainConfig tc;
    tc.k_max = k_max;
    tc.batch_size = 32;
    tc.steps = 12500;
    tc.tab_lr0 = 0.5;
    tc.tab_tau = 200.0;
    auto log = train_occupancy(model, data, tc, 400 + k_max);
    CHECK(tv_distance(row_dist(model, 0, 3), mu0) <= 0.02);
    double kstep = 0.0, boot = 0.0;
    for (const TrainLogRow& r : log) {
      kstep += r.frac_kstep;
      boot += r.frac_boot;
    }
    // with k_max > 1 some mass lands on intermediate offsets, and the
    // bootstrap mass shrinks from gamma to gamma^k_max
    CHECK(kstep / log.size() > 0.1);
    CHECK(std::abs(boot / log.size() - std::pow(0.5, k_max)) < 0.03);
  }
}

TEST_CASE("occupancy: unseen conditioning throws, empty batch is fine") {
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);

  Rng rng(3);
  CHECK_THROWS_AS(model.sample_future(state_latent(0), 1, rng), UnseenConditioningError);
  CHECK_THROWS_AS(model.log_density(state_latent(0), state_latent(1)), UnseenConditioningError);
  CHECK(model.sample_future_batch({}, rng).empty());
  CHECK(model.sample_future(state_latent(0), 0, rng).empty());

  // latents outside the model's space are input errors, not unseen rows
  CHECK_THROWS_AS(model.sample_future(state_latent(7), 1, rng), InvalidInputError);
}

TEST_CASE("occupancy: neural 3-cycle fits the exact occupancy") {
  LatentDataset data = cycle_data(3, 10, 60, 41);
  OccupancyConfig cfg;
  cfg.backend = Backend::kNeural;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  cfg.n_layer = 1;
  cfg.n_head = 2;
  cfg.n_embd = 16;
  OccupancyModel model(cfg, 77);

  TrainConfig tc;
  tc.batch_size = 64;
  tc.steps = 1200;
  tc.lr = 3e-3;
  tc.weight_decay = 0.0;
  tc.warmup_steps = 50;
  tc.log_interval = 100;
  auto log = train_occupancy(model, data, tc, 888);
  REQUIRE(log.size() == 12);
  CHECK(log.back().loss < log.front().loss);
  // the loss floor is the average row entropy, about 0.956 nats
  CHECK(log.back().loss < 1.05);

  std::vector<double> mu0 = {1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0};
  CHECK(tv_distance(density_dist(model, 0, 3), mu0) <= 0.05);
  MdpSpec mdp = cycle_mdp(3);
  OccupancyDist mu = occupancy_from_transition(mdp.uniform_policy_transition(), 0.5);
  for (int s = 0; s < 3; ++s) {
    CHECK(tv_distance(density_dist(model, s, 3), mu.mu[s]) <= 0.08);
  }

  // sampling frequencies agree with the density interface
  Rng rng(13);
  auto samples = model.sample_future(state_latent(0), 20000, rng);
  std::vector<int> ids;
  for (const LatentState& z : samples) ids.push_back(z.seq.tokens[0]);
  EmpiricalDist freq = empirical_dist(ids, 3);
  CHECK(tv_distance(freq.probs, density_dist(model, 0, 3)) <= 0.02);
}

TEST_CASE("occupancy: neural training is deterministic") {
  LatentDataset data = cycle_data(3, 4, 30, 51);
  OccupancyConfig cfg;
  cfg.backend = Backend::kNeural;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  cfg.n_layer = 1;
  cfg.n_head = 2;
  cfg.n_embd = 16;

  TrainConfig tc;
  tc.batch_size = 16;
  tc.steps = 60;
  tc.log_interval = 20;

  OccupancyModel a(cfg, 5);
  OccupancyModel b(cfg, 5);
  auto la = train_occupancy(a, data, tc, 99);
  auto lb = train_occupancy(b, data, tc, 99);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].loss == lb[i].loss);

  Rng ra(1), rb(1);
  auto sa = a.sample_future(state_latent(0), 50, ra);
  auto sb = b.sample_future(state_latent(0), 50, rb);
  CHECK(sa == sb);
  CHECK(a.log_density(state_latent(0), state_latent(1)) ==
        b.log_density(state_latent(0), state_latent(1)));
}

TEST_CASE("occupancy: loss positions widen the objective") {
  // single-token latents: position 0 is already the target head, modes agree
  LatentDataset data = cycle_data(3, 4, 30, 61);
  OccupancyConfig cfg;
  cfg.backend = Backend::kNeural;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  cfg.n_layer = 1;
  cfg.n_head = 2;
  cfg.n_embd = 16;

  TrainConfig tc;
  tc.batch_size = 16;
  tc.steps = 40;
  tc.log_interval = 10;
  OccupancyModel a(cfg, 5);
  auto la = train_occupancy(a, data, tc, 99);
  tc.loss_positions = LossPositions::kAllPositions;
  OccupancyModel b(cfg, 5);
  auto lb = train_occupancy(b, data, tc, 99);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].loss == lb[i].loss);

  // two-token latents: all-positions also scores the conditioning tokens
  LatentDataset wide;
  wide.vocab = 4;
  wide.tokens_per_latent = 2;
  LatentTraj tr;
  for (int i = 0; i < 30; ++i) {
    LatentState z;
    z.seq.tokens = {i % 2 ? 2 : 0, i % 2 ? 3 : 1};
    z.seq.tokens_per_frame = 2;
    z.stack_size = 1;
    tr.latents.push_back(z);
  }
  wide.trajs.push_back(tr);

  OccupancyConfig wcfg = cfg;
  wcfg.vocab = 4;
  wcfg.tokens_per_latent = 2;
  tc.loss_positions = LossPositions::kTargetOnly;
  OccupancyModel c(wcfg, 5);
  auto lc = train_occupancy(c, wide, tc, 99);
  tc.loss_positions = LossPositions::kAllPositions;
  OccupancyModel d(wcfg, 5);
  auto ld = train_occupancy(d, wide, tc, 99);
  CHECK(lc.back().loss != ld.back().loss);
}

TEST_CASE("occupancy: save and load round trip both backends") {
  // tabular
  LatentDataset data = cycle_data(3, 6, 40, 71);
  OccupancyConfig cfg;
  cfg.backend = Backend::kTabular;
  cfg.gamma = 0.5;
  cfg.vocab = 3;
  cfg.tokens_per_latent = 1;
  OccupancyModel model(cfg, 0);
  TrainConfig tc;
  tc.steps = 200;
  train_occupancy(model, data, tc, 1);

  std::string tab_path = temp_path("voc_test_occ_tab.bin");
  save_occupancy(tab_path, model);
  OccupancyModel back = load_occupancy(tab_path);
  CHECK(back.config() == model.config());
  CHECK(back.table().row_keys == model.table().row_keys);
  CHECK(back.table().support == model.table().support);
  CHECK(back.table().rows == model.table().rows);
  Rng r1(4), r2(4);
  CHECK(model.sample_future(state_latent(1), 20, r1) ==
        back.sample_future(state_latent(1), 20, r2));

  // neural
  OccupancyConfig ncfg;
  ncfg.backend = Backend::kNeural;
  ncfg.gamma = 0.9;
  ncfg.vocab = 5;
  ncfg.tokens_per_latent = 2;
  ncfg.n_layer = 1;
  ncfg.n_head = 2;
  ncfg.n_embd = 16;
  OccupancyModel nm(ncfg, 31);
  std::string net_path = temp_path("voc_test_occ_net.bin");
  save_occupancy(net_path, nm);
  OccupancyModel nb = load_occupancy(net_path);
  CHECK(nb.config() == ncfg);
  LatentState za, zb;
  za.seq.tokens = {0, 1};
  za.seq.tokens_per_frame = 2;
  za.stack_size = 1;
  zb.seq.tokens = {3, 4};
  zb.seq.tokens_per_frame = 2;
  zb.stack_size = 1;
  CHECK(nm.log_density(za, zb) == nb.log_density(za, zb));

  // not an occupancy file
  std::string junk_path = temp_path("voc_test_occ_junk.bin");
  std::vector<uint8_t> junk = {1, 2, 3};
  write_json_blob(junk_path, "{\"format\":\"something-else\"}", junk);
  CHECK_THROWS_AS(load_occupancy(junk_path), IoError);

  std::remove(tab_path.c_str());
  std::remove(net_path.c_str());
  std::remove(junk_path.c_str());
}

TEST_CASE("occupancy: config and train validation") {
  OccupancyConfig cfg;
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.gamma = 0.9;
  cfg.vocab = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  TrainConfig tc;
  tc.k_max = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.ema_decay = 1.5;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);

  CHECK(parse_backend("tabular") == Backend::kTabular);
  CHECK(backend_name(Backend::kNeural) == "neural");
  CHECK_THROWS_AS(parse_backend("fancy"), ConfigError);
  CHECK(parse_loss_positions("all-positions") == LossPositions::kAllPositions);
  CHECK(loss_positions_name(LossPositions::kTargetOnly) == "target-only");
  CHECK_THROWS_AS(parse_loss_positions(""), ConfigError);

  // training data must live in the model's latent space
  OccupancyConfig mcfg;
  mcfg.backend = Backend::kTabular;
  mcfg.gamma = 0.0;
  mcfg.vocab = 3;
  mcfg.tokens_per_latent = 1;
  OccupancyModel model(mcfg, 0);
  LatentDataset ds = latent_dataset_from_episodes({{0, 1}}, 3);
  ds.tokens_per_latent = 2;  // header lies about the latent length
  CHECK_THROWS_AS(train_occupancy(model, ds, {}, 0), InvalidInputError);
  LatentDataset empty;
  empty.vocab = 3;
  empty.tokens_per_latent = 1;
  CHECK_THROWS_AS(train_occupancy(model, empty, {}, 0), InvalidInputError);
}
