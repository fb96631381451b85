#include "voc/control.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "voc/codebook.hpp"
#include "voc/error.hpp"
#include "voc/io.hpp"

namespace voc {

MpcMethod parse_mpc_method(const std::string& name) {
  if (name == "voc") return MpcMethod::kVoc;
  if (name == "no-model") return MpcMethod::kNoModel;
  if (name == "init-model") return MpcMethod::kInitModel;
  if (name == "no-lookahead") return MpcMethod::kNoLookahead;
  throw ConfigError("unknown mpc method \"" + name +
                    "\" (expected voc, no-model, init-model, or no-lookahead)");
}

std::string mpc_method_name(MpcMethod m) {
  switch (m) {
    case MpcMethod::kVoc: return "voc";
    case MpcMethod::kNoModel: return "no-model";
    case MpcMethod::kInitModel: return "init-model";
    case MpcMethod::kNoLookahead: return "no-lookahead";
  }
  throw InternalError("bad mpc method");
}

void MpcConfig::validate() const {
  if (episode_len < 1) throw ConfigError("mpc: episode_len must be positive");
  if (n_episodes < 1) throw ConfigError("mpc: n_episodes must be positive");
  if (candidate_buffer_size < 1) throw ConfigError("mpc: candidate buffer must be non-empty");
  if (n_value_samples < 1) throw ConfigError("mpc: n_value_samples must be positive");
  if (stack_size < 1) throw ConfigError("mpc: stack_size must be positive");
}

std::vector<int> build_candidate_buffer(const Dataset* source, int size, Rng& rng) {
  if (size < 1) throw InvalidInputError("candidate buffer size must be positive");
  std::vector<int> out;
  out.reserve(size);
  if (!source) {
    for (int i = 0; i < size; ++i) out.push_back(static_cast<int>(rng.uniform_int(kNumActions)));
    return out;
  }
  std::vector<int> pool;
  for (const Trajectory& tr : source->trajectories) {
    pool.insert(pool.end(), tr.actions.begin(), tr.actions.end());
  }
  if (pool.empty()) throw InvalidInputError("candidate source dataset has no actions");
  rng.shuffle(pool);
  for (int i = 0; i < size; ++i) {
    if (i < static_cast<int>(pool.size())) {
      out.push_back(pool[i]);
    } else {
      out.push_back(pool[rng.uniform_int(pool.size())]);
    }
  }
  return out;
}

Scorer value_scorer(OccupancyModel& model, LatentReward r, int n_value_samples) {
  return [&model, r = std::move(r), n_value_samples](const Peek& p, Rng& rng) {
    return value_by_sampling(model, r, p.z, n_value_samples, rng).mean;
  };
}

Scorer reward_scorer(const RewardModel& rm, const Codebook& cb, int stack_size,
                     const InvDynEncoder* enc) {
  return [&rm, cb, stack_size, enc](const Peek& p, Rng&) {
    if (static_cast<int>(p.window.size()) != stack_size) {
      throw InvalidInputError("peeked window does not match the scorer's stack size");
    }
    std::vector<double> feat;
    for (const Frame& f : p.window) {
      std::vector<double> v = feature_reward_vector(cb, f, enc);
      feat.insert(feat.end(), v.begin(), v.end());
    }
    return rm.predict(feat);
  };
}

namespace {

Peek peek_action(const GridWorld& env, int action, std::span<const Frame> window,
                 const Codebook& cb, Rng& rng, const InvDynEncoder* enc) {
  StepResult res = step(env, action, rng);
  Peek p;
  p.action = action;
  p.window.assign(window.begin() + 1, window.end());
  p.window.push_back(render(res.env));
  p.z = encode(cb, p.window, enc);
  p.reward = res.reward;
  p.done = res.done;
  return p;
}

}  // namespace

StepChoice mpc_step(const GridWorld& env, std::span<const Frame> window,
                    std::span<const int> candidates, const Codebook& cb, const Scorer& scorer,
                    Rng& rng, bool uniform_choice, const InvDynEncoder* enc) {
  if (candidates.empty()) throw InvalidInputError("mpc_step: no candidate actions");
  if (window.empty()) throw InvalidInputError("mpc_step: empty frame window");
  if (uniform_choice) {
    return {candidates[rng.uniform_int(candidates.size())], 0.0};
  }
  std::set<int> distinct(candidates.begin(), candidates.end());
  double best = 0.0;
  int best_action = -1;
  // ascending action order plus a tiny deadband: scores tied to within float
  // noise stay with the lowest action, matching the oracle's greedy step
  for (int a : distinct) {
    Peek p = peek_action(env, a, window, cb, rng, enc);
    double s = scorer(p, rng);
    if (best_action < 0 || s > best + 1e-12) {
      best = s;
      best_action = a;
    }
  }
  return {best_action, best};
}

MpcSummary summarize_returns(std::span<const double> returns) {
  if (returns.empty()) throw InvalidInputError("summarize_returns: no episodes");
  std::vector<double> v(returns.begin(), returns.end());
  std::sort(v.begin(), v.end());
  auto quantile = [&v](double p) {
    double pos = p * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };
  MpcSummary s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  s.min = v.front();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  s.max = v.back();
  return s;
}

namespace {

Scorer make_scorer(const MpcArtifacts& art, const MpcConfig& cfg) {
  switch (cfg.method) {
    case MpcMethod::kVoc:
      if (!art.model || !art.rm) throw ConfigError("mpc: voc needs a trained model and reward");
      return value_scorer(*art.model, reward_from_model(*art.rm, *art.cb), cfg.n_value_samples);
    case MpcMethod::kInitModel:
      if (!art.init_model || !art.rm) {
        throw ConfigError("mpc: init-model needs an untrained model and reward");
      }
      return value_scorer(*art.init_model, reward_from_model(*art.rm, *art.cb),
                          cfg.n_value_samples);
    case MpcMethod::kNoLookahead:
      if (!art.rm) throw ConfigError("mpc: no-lookahead needs a reward model");
      return reward_scorer(*art.rm, *art.cb, cfg.stack_size, art.enc);
    case MpcMethod::kNoModel:
      return [](const Peek&, Rng&) { return 0.0; };
  }
  throw InternalError("bad mpc method");
}

}  // namespace

MpcRun run_mpc(const GridWorld& env, const MpcArtifacts& art, const MpcConfig& cfg,
               uint64_t seed) {
  cfg.validate();
  env.validate();
  if (!art.cb) throw ConfigError("mpc: a codebook is required to tokenize peeked frames");
  Scorer scorer = make_scorer(art, cfg);
  bool uniform_choice = cfg.method == MpcMethod::kNoModel;

  std::vector<int> starts;
  for (int s = 0; s < env.n_states(); ++s) {
    if (s != env.state_id_of(env.goal_pos)) starts.push_back(s);
  }
  if (starts.empty()) throw ConfigError("mpc: no non-goal start cells");

  std::vector<int> fixed_buffer;
  {
    Rng buf_rng = Rng::substream(seed, 0xb0f);
    fixed_buffer = build_candidate_buffer(art.action_source, cfg.candidate_buffer_size, buf_rng);
  }

  MpcRun run;
  std::vector<double> returns;
  for (int ep = 0; ep < cfg.n_episodes; ++ep) {
    Rng rng = Rng::substream(seed, static_cast<uint64_t>(ep));
    GridWorld cur = env;
    cur.agent_pos = env.cell_of(starts[rng.uniform_int(starts.size())]);

    // the first window repeats the initial frame to fill the stack
    std::vector<Frame> window(cfg.stack_size, render(cur));
    EpisodeResult res;
    for (int t = 0; t < cfg.episode_len; ++t) {
      std::vector<int> candidates =
          cfg.buffer_mode == BufferMode::kFixed
              ? fixed_buffer
              : build_candidate_buffer(art.action_source, cfg.candidate_buffer_size, rng);
      StepChoice choice =
          mpc_step(cur, window, candidates, *art.cb, scorer, rng, uniform_choice, art.enc);
      StepResult sr = step(cur, choice.action, rng);
      cur = sr.env;
      res.undiscounted_return += sr.reward;
      res.actions.push_back(choice.action);
      res.chosen_values.push_back(choice.score);
      window.erase(window.begin());
      window.push_back(render(cur));
      if (sr.done) break;
    }
    returns.push_back(res.undiscounted_return);
    run.episodes.push_back(std::move(res));
  }
  run.summary = summarize_returns(returns);
  return run;
}

std::string mpc_results_csv(std::span<const std::pair<std::string, const MpcRun*>> runs) {
  CsvWriter csv;
  csv.row({"method", "episode", "return"});
  for (const auto& [name, run] : runs) {
    for (std::size_t e = 0; e < run->episodes.size(); ++e) {
      csv.row({name, std::to_string(e), format_double(run->episodes[e].undiscounted_return)});
    }
  }
  return csv.str();
}

std::string mpc_summary_csv(std::span<const std::pair<std::string, const MpcRun*>> runs) {
  CsvWriter csv;
  csv.row({"method", "mean", "min", "q1", "median", "q3", "max"});
  for (const auto& [name, run] : runs) {
    const MpcSummary& s = run->summary;
    csv.row({name, format_double(s.mean), format_double(s.min), format_double(s.q1),
             format_double(s.median), format_double(s.q3), format_double(s.max)});
  }
  return csv.str();
}

}  // namespace voc
