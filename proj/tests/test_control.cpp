#include "voc/control.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "voc/error.hpp"
#include "voc/oracle.hpp"

using namespace voc;

namespace {

GridWorld corridor(bool episodic = true) {
  GridWorld env;
  env.width = 8;
  env.height = 1;
  env.goal_pos = {0, 7};
  env.h_px = 8;
  env.w_px = 64;
  env.episodic = episodic;
  return env;
}

// ground-truth decode of the rendered agent cell (255 wins over the goal)
int agent_state(const GridWorld& env, const Frame& f) {
  int bh = env.h_px / env.height;
  int bw = env.w_px / env.width;
  for (int r = 0; r < f.h; ++r) {
    for (int c = 0; c < f.w; ++c) {
      if (f.px[static_cast<std::size_t>(r) * f.w + c] == 255) {
        return (r / bh) * env.width + (c / bw);
      }
    }
  }
  return -1;
}

// shared corridor artifacts: behavior data, injective codebook, converged
// tabular occupancy, trained reward model
struct Rig {
  GridWorld env;
  Dataset ds;
  Codebook cb;
  OccupancyModel occ;
  RewardModel rm;
};

Rig build_rig() {
  GridWorld env = corridor(false);  // continuing, so the goal row gets trained
  Dataset ds = generate_dataset(env, Policy::uniform_random(), 60, 25, 31);
  std::vector<Frame> fit_frames;
  for (int i = 0; i < 5; ++i) {
    const auto& fr = ds.trajectories[static_cast<std::size_t>(i)].frames;
    fit_frames.insert(fit_frames.end(), fr.begin(), fr.end());
  }
  Codebook cb = fit_codebook(fit_frames, FeatureMap::kRawPixels, 3, {1, 8}, 7);

  LatentDataset lat = encode_dataset(ds, cb, 1);
  OccupancyConfig oc;
  oc.backend = Backend::kTabular;
  oc.gamma = 0.7;
  oc.vocab = 3;
  oc.tokens_per_latent = 8;
  OccupancyModel occ(oc, 0);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.steps = 2500;
  tc.tab_tau = 150.0;
  train_occupancy(occ, lat, tc, 77);

  RewardTrainOpts ro;
  ro.hidden = 32;
  RewardTrainResult rr = train_reward(ds, cb, 1, 60, 13, ro);
  return {env, ds, cb, std::move(occ), std::move(rr.model)};
}

Rig& rig() {
  static Rig r = build_rig();
  return r;
}

}  // namespace

TEST_CASE("control: method names round trip and configs validate") {
  for (MpcMethod m : {MpcMethod::kVoc, MpcMethod::kNoModel, MpcMethod::kInitModel,
                      MpcMethod::kNoLookahead}) {
    CHECK(parse_mpc_method(mpc_method_name(m)) == m);
  }
  CHECK(mpc_method_name(MpcMethod::kVoc) == "voc");
  CHECK(mpc_method_name(MpcMethod::kNoModel) == "no-model");
  CHECK_THROWS_AS(parse_mpc_method("bogus"), ConfigError);

  MpcConfig ok;
  ok.validate();
  MpcConfig bad = ok;
  bad.episode_len = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.n_episodes = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.candidate_buffer_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.n_value_samples = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.stack_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("control: candidate buffer draws the dataset's action multiset") {
  GridWorld env = corridor(false);
  Dataset ds = generate_dataset(env, Policy::uniform_random(), 3, 5, 17);
  std::vector<int> pool;
  for (const Trajectory& tr : ds.trajectories) {
    pool.insert(pool.end(), tr.actions.begin(), tr.actions.end());
  }
  REQUIRE(pool.size() == 12);  // 3 trajectories x 4 actions

  // exactly the multiset when the buffer matches the pool size
  Rng rng(5);
  std::vector<int> buf = build_candidate_buffer(&ds, 12, rng);
  std::vector<int> a = buf, b = pool;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  // beyond the pool: first the multiset, then uniform redraws from it
  Rng rng2(5);
  std::vector<int> big = build_candidate_buffer(&ds, 30, rng2);
  CHECK(big.size() == 30);
  std::vector<int> head(big.begin(), big.begin() + 12);
  std::sort(head.begin(), head.end());
  CHECK(head == b);
  for (int x : big) {
    CHECK(std::find(pool.begin(), pool.end(), x) != pool.end());
  }

  // same seed, same buffer; the first 12 come from the same shuffle
  Rng r3(5), r4(5);
  CHECK(build_candidate_buffer(&ds, 12, r3) == build_candidate_buffer(&ds, 12, r4));
  CHECK(std::vector<int>(big.begin(), big.begin() + 12) == buf);
  Rng r5(6);
  CHECK(build_candidate_buffer(&ds, 12, r5) != buf);

  Dataset empty;
  Rng r6(1);
  CHECK_THROWS_AS(build_candidate_buffer(&empty, 4, r6), InvalidInputError);
  CHECK_THROWS_AS(build_candidate_buffer(&ds, 0, r6), InvalidInputError);

  // null source: uniform over the four moves
  Rng r7(9);
  std::vector<int> uni = build_candidate_buffer(nullptr, 4000, r7);
  std::map<int, int> counts;
  for (int x : uni) counts[x]++;
  for (int m = 0; m < kNumActions; ++m) {
    CHECK(counts[m] / 4000.0 == doctest::Approx(0.25).epsilon(0.2));
  }
}

TEST_CASE("control: the no-model choice is uniform over the candidate multiset") {
  GridWorld env = corridor(false);
  std::vector<Frame> window = {render(env)};
  std::vector<int> candidates = {0, 0, 1, 3};
  bool scored = false;
  Scorer spy = [&scored](const Peek&, Rng&) {
    scored = true;
    return 0.0;
  };
  Rng rng(23);
  std::map<int, int> counts;
  for (int i = 0; i < 4000; ++i) {
    StepChoice c = mpc_step(env, window, candidates, rig().cb, spy, rng, true);
    CHECK(c.score == 0.0);
    counts[c.action]++;
  }
  CHECK(!scored);  // uniform choice never peeks or scores
  CHECK(counts[0] / 4000.0 == doctest::Approx(0.5).epsilon(0.08));
  CHECK(counts[1] / 4000.0 == doctest::Approx(0.25).epsilon(0.16));
  CHECK(counts[3] / 4000.0 == doctest::Approx(0.25).epsilon(0.16));
  CHECK(counts[2] == 0);  // never a candidate
}

TEST_CASE("control: mpc_step takes the argmax and breaks ties low") {
  GridWorld env = corridor(false);
  env.agent_pos = {0, 3};
  std::vector<Frame> window = {render(env)};
  const Codebook& cb = rig().cb;
  Rng rng(1);
  std::vector<int> all = {0, 1, 2, 3};

  Scorer by_action = [](const Peek& p, Rng&) { return p.action == 2 ? 1.5 : 0.1 * p.action; };
  StepChoice c = mpc_step(env, window, all, cb, by_action, rng);
  CHECK(c.action == 2);
  CHECK(c.score == 1.5);

  // all-negative scores still pick the max
  Scorer negative = [](const Peek& p, Rng&) { return -1.0 - p.action; };
  CHECK(mpc_step(env, window, all, cb, negative, rng).action == 0);

  // constant scores tie to the lowest candidate action
  Scorer flat = [](const Peek&, Rng&) { return 4.2; };
  std::vector<int> some = {3, 1, 2};
  CHECK(mpc_step(env, window, some, cb, flat, rng).action == 1);

  // the argmax ignores positive rescaling
  std::vector<double> table = {0.3, -0.2, 1.1, 0.9};
  Scorer raw = [&table](const Peek& p, Rng&) { return table[static_cast<std::size_t>(p.action)]; };
  Scorer scaled = [&table](const Peek& p, Rng&) {
    return 1e6 * table[static_cast<std::size_t>(p.action)];
  };
  CHECK(mpc_step(env, window, all, cb, raw, rng).action ==
        mpc_step(env, window, all, cb, scaled, rng).action);

  // duplicates collapse: one peek per distinct action
  int calls = 0;
  Scorer counting = [&calls](const Peek&, Rng&) {
    ++calls;
    return 0.0;
  };
  std::vector<int> dup = {2, 2, 3, 2};
  mpc_step(env, window, dup, cb, counting, rng);
  CHECK(calls == 2);

  CHECK_THROWS_AS(mpc_step(env, window, {}, cb, flat, rng), InvalidInputError);
  std::vector<Frame> no_frames;
  CHECK_THROWS_AS(mpc_step(env, no_frames, all, cb, flat, rng), InvalidInputError);
}

TEST_CASE("control: a peek is one simulated step from the current window") {
  GridWorld env = corridor(true);
  env.agent_pos = {0, 6};
  std::vector<Frame> window = {render(env)};
  const Codebook& cb = rig().cb;
  Rng rng(3);

  Peek seen;
  Scorer record = [&seen](const Peek& p, Rng&) {
    seen = p;
    return 0.0;
  };
  std::vector<int> right = {kActionRight};
  mpc_step(env, window, right, cb, record, rng);
  CHECK(seen.action == kActionRight);
  REQUIRE(seen.window.size() == 1);

  GridWorld moved = env;
  moved.agent_pos = {0, 7};
  CHECK(seen.window.back() == render(moved));
  CHECK(seen.z == encode(cb, seen.window));
  CHECK(seen.reward == 1.0);  // stepped onto the goal
  CHECK(seen.done);           // episodic env ends there

  // peeking never moves the real environment
  CHECK(env.agent_pos == Cell{0, 6});

  std::vector<int> up = {kActionUp};
  mpc_step(env, window, up, cb, record, rng);
  CHECK(seen.reward == 0.0);
  CHECK(!seen.done);
  CHECK(seen.window.back() == window[0]);  // clamped move stays put
}

TEST_CASE("control: oracle value scorer reproduces the oracle greedy policy") {
  GridWorld env5;
  env5.goal_pos = {4, 4};
  std::vector<Frame> fit;
  for (int s = 0; s < env5.n_states(); ++s) {
    env5.agent_pos = env5.cell_of(s);
    fit.push_back(render(env5));
  }
  Codebook cb = fit_codebook(fit, FeatureMap::kRawPixels, 3, {5, 5}, 11);

  MdpSpec mdp = as_mdp(env5);
  std::vector<std::vector<double>> pi(static_cast<std::size_t>(mdp.n_states),
                                      std::vector<double>(kNumActions, 0.25));
  double gamma = 0.9;
  std::vector<double> vpi = exact_value(mdp, pi, gamma);
  std::vector<int> greedy = greedy_improvement(mdp, pi, gamma);

  // score a peeked frame by r(e) + gamma * V_pi(e) for the decoded cell e
  Scorer oracle_scorer = [&](const Peek& p, Rng&) {
    int e = agent_state(env5, p.window.back());
    REQUIRE(e >= 0);
    return mdp.reward[static_cast<std::size_t>(e)] + gamma * vpi[static_cast<std::size_t>(e)];
  };

  std::vector<int> all = {0, 1, 2, 3};
  Rng rng(2);
  for (int s = 0; s < env5.n_states(); ++s) {
    if (s == env5.state_id_of(env5.goal_pos)) continue;
    env5.agent_pos = env5.cell_of(s);
    std::vector<Frame> window = {render(env5)};
    StepChoice c = mpc_step(env5, window, all, cb, oracle_scorer, rng);
    CHECK(c.action == greedy[static_cast<std::size_t>(s)]);
  }
}

TEST_CASE("control: runs are deterministic and respect episode bounds") {
  GridWorld env = corridor(false);
  env.goal_reward = 0.0;
  MpcArtifacts art;
  art.cb = &rig().cb;
  MpcConfig cfg;
  cfg.method = MpcMethod::kNoModel;
  cfg.n_episodes = 6;
  cfg.episode_len = 10;
  cfg.candidate_buffer_size = 20;

  MpcRun a = run_mpc(env, art, cfg, 42);
  MpcRun b = run_mpc(env, art, cfg, 42);
  REQUIRE(a.episodes.size() == 6);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(a.episodes[e].actions == b.episodes[e].actions);
    CHECK(a.episodes[e].undiscounted_return == 0.0);  // reward turned off
    CHECK(a.episodes[e].actions.size() == 10);        // continuing env runs out the clock
    CHECK(a.episodes[e].chosen_values == std::vector<double>(10, 0.0));
  }
  CHECK(a.summary.mean == 0.0);
  CHECK(a.summary.max == 0.0);

  MpcRun c = run_mpc(env, art, cfg, 43);
  bool any_diff = false;
  for (std::size_t e = 0; e < 6; ++e) any_diff = any_diff || c.episodes[e].actions != a.episodes[e].actions;
  CHECK(any_diff);
}

TEST_CASE("control: episodic runs stop at the goal") {
  GridWorld env = corridor(true);
  MpcArtifacts art;
  art.cb = &rig().cb;
  MpcConfig cfg;
  cfg.method = MpcMethod::kNoModel;
  cfg.n_episodes = 8;
  cfg.episode_len = 60;
  cfg.candidate_buffer_size = 10;

  MpcRun run = run_mpc(env, art, cfg, 7);
  int reached = 0;
  std::vector<double> returns;
  for (const EpisodeResult& ep : run.episodes) {
    returns.push_back(ep.undiscounted_return);
    if (ep.undiscounted_return > 0.0) {
      ++reached;
      CHECK(ep.undiscounted_return == 1.0);  // terminal bonus exactly once
    } else {
      CHECK(ep.actions.size() == 60);
    }
  }
  CHECK(reached >= 1);  // a 60-step random walk on 8 cells finds the goal

  MpcSummary s = summarize_returns(returns);
  CHECK(run.summary.mean == s.mean);
  CHECK(run.summary.min == s.min);
  CHECK(run.summary.q1 == s.q1);
  CHECK(run.summary.median == s.median);
  CHECK(run.summary.q3 == s.q3);
  CHECK(run.summary.max == s.max);
}

TEST_CASE("control: summarize_returns interpolates quartiles") {
  std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
  MpcSummary s = summarize_returns(v);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.min == 1.0);
  CHECK(s.q1 == doctest::Approx(1.75));
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.q3 == doctest::Approx(3.25));
  CHECK(s.max == 4.0);

  std::vector<double> odd = {1.0, 2.0, 3.0, 4.0, 5.0};
  MpcSummary so = summarize_returns(odd);
  CHECK(so.q1 == 2.0);
  CHECK(so.median == 3.0);
  CHECK(so.q3 == 4.0);

  std::vector<double> one = {5.0};
  MpcSummary s1 = summarize_returns(one);
  CHECK(s1.mean == 5.0);
  CHECK(s1.min == 5.0);
  CHECK(s1.q1 == 5.0);
  CHECK(s1.median == 5.0);
  CHECK(s1.q3 == 5.0);
  CHECK(s1.max == 5.0);

  CHECK_THROWS_AS(summarize_returns({}), InvalidInputError);
}

TEST_CASE("control: missing artifacts are configuration errors") {
  GridWorld env = corridor(false);
  MpcConfig cfg;
  cfg.n_episodes = 1;
  cfg.episode_len = 1;

  MpcArtifacts none;
  cfg.method = MpcMethod::kNoModel;
  CHECK_THROWS_AS(run_mpc(env, none, cfg, 0), ConfigError);  // no codebook

  MpcArtifacts just_cb;
  just_cb.cb = &rig().cb;
  cfg.method = MpcMethod::kVoc;
  CHECK_THROWS_AS(run_mpc(env, just_cb, cfg, 0), ConfigError);
  cfg.method = MpcMethod::kInitModel;
  CHECK_THROWS_AS(run_mpc(env, just_cb, cfg, 0), ConfigError);
  cfg.method = MpcMethod::kNoLookahead;
  CHECK_THROWS_AS(run_mpc(env, just_cb, cfg, 0), ConfigError);

  cfg.method = MpcMethod::kNoModel;  // the baseline needs only frames
  MpcRun run = run_mpc(env, just_cb, cfg, 0);
  CHECK(run.episodes.size() == 1);
}

TEST_CASE("control: planning with the learned model farms the corridor goal") {
  Rig& r = rig();
  REQUIRE(r.ds.trajectories.size() == 60);

  // the codebook separates all eight cells and the model has seen each row
  std::vector<std::vector<int>> latents;
  GridWorld probe = r.env;
  for (int s = 0; s < r.env.n_states(); ++s) {
    probe.agent_pos = probe.cell_of(s);
    std::vector<Frame> w = {render(probe)};
    LatentState z = encode(r.cb, w);
    CHECK(std::find(latents.begin(), latents.end(), z.seq.tokens) == latents.end());
    latents.push_back(z.seq.tokens);
    CHECK(r.occ.table().row(z.seq.tokens) != nullptr);
  }

  MpcArtifacts art;
  art.model = &r.occ;
  art.rm = &r.rm;
  art.cb = &r.cb;
  art.action_source = &r.ds;

  MpcConfig cfg;
  cfg.episode_len = 15;
  cfg.n_episodes = 10;
  cfg.candidate_buffer_size = 40;
  cfg.n_value_samples = 24;

  cfg.method = MpcMethod::kVoc;
  MpcRun voc = run_mpc(r.env, art, cfg, 500);
  cfg.method = MpcMethod::kNoModel;
  MpcRun nomodel = run_mpc(r.env, art, cfg, 500);
  cfg.method = MpcMethod::kNoLookahead;
  MpcRun nolook = run_mpc(r.env, art, cfg, 500);

  // planning reaches the goal and keeps collecting; baselines wander or stall
  CHECK(voc.summary.mean > 5.0);
  CHECK(voc.summary.mean > nomodel.summary.mean + 1.0);
  CHECK(voc.summary.mean > nolook.summary.mean);
  for (const EpisodeResult& ep : voc.episodes) {
    CHECK(ep.chosen_values.size() == ep.actions.size());
    for (double s : ep.chosen_values) CHECK(std::isfinite(s));
  }
}

TEST_CASE("control: an untrained neural model still runs the protocol") {
  Rig& r = rig();
  OccupancyConfig oc;
  oc.backend = Backend::kNeural;
  oc.gamma = 0.7;
  oc.vocab = 3;
  oc.tokens_per_latent = 8;
  oc.n_layer = 1;
  oc.n_head = 2;
  oc.n_embd = 16;
  OccupancyModel blank(oc, 5);

  MpcArtifacts art;
  art.init_model = &blank;
  art.rm = &r.rm;
  art.cb = &r.cb;

  MpcConfig cfg;
  cfg.method = MpcMethod::kInitModel;
  cfg.n_episodes = 2;
  cfg.episode_len = 4;
  cfg.candidate_buffer_size = 8;
  cfg.n_value_samples = 4;

  MpcRun run = run_mpc(r.env, art, cfg, 9);
  REQUIRE(run.episodes.size() == 2);
  for (const EpisodeResult& ep : run.episodes) {
    CHECK(ep.actions.size() == 4);
    for (double s : ep.chosen_values) CHECK(std::isfinite(s));
  }
}

TEST_CASE("control: a frame stack of two flows through the whole loop") {
  Rig& r = rig();
  RewardTrainOpts ro;
  ro.hidden = 16;
  RewardTrainResult rr = train_reward(r.ds, r.cb, 2, 30, 21, ro);

  MpcArtifacts art;
  art.rm = &rr.model;
  art.cb = &r.cb;

  MpcConfig cfg;
  cfg.method = MpcMethod::kNoLookahead;
  cfg.stack_size = 2;
  cfg.n_episodes = 3;
  cfg.episode_len = 5;
  cfg.candidate_buffer_size = 6;

  MpcRun run = run_mpc(r.env, art, cfg, 12);
  REQUIRE(run.episodes.size() == 3);
  for (const EpisodeResult& ep : run.episodes) {
    CHECK(ep.actions.size() == 5);
    for (double s : ep.chosen_values) CHECK(std::isfinite(s));
  }
}

TEST_CASE("control: result tables carry every episode and the box stats") {
  GridWorld env = corridor(false);
  env.goal_reward = 0.0;
  MpcArtifacts art;
  art.cb = &rig().cb;
  MpcConfig cfg;
  cfg.method = MpcMethod::kNoModel;
  cfg.n_episodes = 3;
  cfg.episode_len = 2;

  MpcRun run = run_mpc(env, art, cfg, 1);
  std::vector<std::pair<std::string, const MpcRun*>> runs = {{"no-model", &run},
                                                             {"voc", &run}};
  std::string results = mpc_results_csv(runs);
  CHECK(results.rfind("method,episode,return\n", 0) == 0);
  CHECK(results.find("no-model,0,0\n") != std::string::npos);
  CHECK(results.find("no-model,2,0\n") != std::string::npos);
  CHECK(results.find("voc,1,0\n") != std::string::npos);
  CHECK(std::count(results.begin(), results.end(), '\n') == 7);  // header + 2x3 episodes

  std::string summary = mpc_summary_csv(runs);
  CHECK(summary.rfind("method,mean,min,q1,median,q3,max\n", 0) == 0);
  CHECK(summary.find("\nno-model,0,0,0,0,0,0\n") != std::string::npos);
  CHECK(summary.find("\nvoc,") != std::string::npos);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
}
