#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voc/config.hpp"
#include "voc/control.hpp"
#include "voc/error.hpp"
#include "voc/gridworld.hpp"
#include "voc/invdyn.hpp"
#include "voc/io.hpp"
#include "voc/occupancy.hpp"
#include "voc/oracle.hpp"
#include "voc/trajectory.hpp"
#include "voc/valuation.hpp"

namespace {

using namespace voc;

constexpr uint64_t kValSeedSalt = 0x76616cULL;   // held-out dataset stream
constexpr uint64_t kInitSeedSalt = 0x696e6974ULL;  // untrained-baseline weights

// ---------------------------------------------------------------- plumbing

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void ensure_output_dir(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
}

void require_artifact(const std::string& path, const std::string& producer) {
  if (!file_exists(path)) {
    throw ConfigError("missing " + path + "; run " + producer + " first");
  }
}

/// Writes the resolved config for this run and re-hashes every artifact the
/// run produced into manifest.json.
void finish_run(const ExperimentConfig& cfg, const std::string& cmd,
                std::vector<std::pair<std::string, std::string>> artifacts) {
  std::string resolved_name = "resolved_config." + cmd + ".json";
  std::string resolved = cfg.to_json();
  write_file(out_path(cfg, resolved_name),
             {reinterpret_cast<const uint8_t*>(resolved.data()), resolved.size()});
  artifacts.emplace_back(resolved_name, "config");

  std::string mpath = out_path(cfg, "manifest.json");
  nlohmann::json manifest;
  if (file_exists(mpath)) {
    std::vector<uint8_t> bytes = read_file(mpath);
    manifest = nlohmann::json::parse(std::string(bytes.begin(), bytes.end()), nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object()) {
      throw IoError("corrupt manifest " + mpath);
    }
  }
  if (!manifest.contains("artifacts")) manifest["artifacts"] = nlohmann::json::object();
  for (const auto& [name, kind] : artifacts) {
    std::vector<uint8_t> bytes = read_file(out_path(cfg, name));
    manifest["artifacts"][name] = {
        {"by", cmd}, {"hash", fnv1a64_hex(bytes)}, {"kind", kind}, {"version", 1}};
  }
  std::string text = manifest.dump(2) + "\n";
  write_file(mpath, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

void write_text(const ExperimentConfig& cfg, const std::string& name, const std::string& text) {
  write_file(out_path(cfg, name), {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// codebook plus, when its feature map calls for one, the inverse-dynamics
// encoder it was fit with
struct Tokenizer {
  Codebook cb;
  std::optional<InvDynEncoder> enc;
  const InvDynEncoder* encp() const { return enc ? &*enc : nullptr; }
};

Tokenizer load_tokenizer(const ExperimentConfig& cfg) {
  std::string cpath = out_path(cfg, "codebook.bin");
  require_artifact(cpath, "fit-codebook");
  Tokenizer t{load_codebook(cpath), std::nullopt};
  if (t.cb.feature_map == FeatureMap::kInverseDynamics) {
    std::string ipath = out_path(cfg, "invdyn.bin");
    require_artifact(ipath, "train-musik");
    t.enc.emplace(load_invdyn(ipath));
  }
  return t;
}

Dataset load_train_dataset(const ExperimentConfig& cfg) {
  std::string path = out_path(cfg, "dataset.bin");
  require_artifact(path, "gen-data");
  return Dataset::load(path);
}

// single-frame latent of every grid cell, and the reverse lookup the
// evaluators use to map sampled latents back to states
struct StateTable {
  std::vector<LatentState> latents;
  std::map<std::vector<int>, int> state_of;
};

StateTable build_state_table(const GridWorld& env, const Codebook& cb, const InvDynEncoder* enc) {
  StateTable t;
  GridWorld probe = env;
  for (int s = 0; s < env.n_states(); ++s) {
    probe.agent_pos = probe.cell_of(s);
    std::vector<Frame> window = {render(probe)};
    LatentState z = encode(cb, window, enc);
    t.state_of.emplace(z.seq.tokens, s);  // first state wins a collision
    t.latents.push_back(std::move(z));
  }
  return t;
}

void require_stack_one(const ExperimentConfig& cfg, const std::string& cmd) {
  if (cfg.tokenizer.stack_size != 1) {
    throw ConfigError(cmd + " addresses model rows by grid state and needs tokenizer.stack_size 1");
  }
}

// ------------------------------------------------------------- subcommands

int run_gen_data(ExperimentConfig cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  GridWorld env = build_env(cfg.env);
  Policy pol = build_policy(cfg.env);

  Dataset train = generate_dataset(env, pol, cfg.env.n_traj, cfg.env.traj_len, cfg.seed);
  train.save(out_path(cfg, "dataset.bin"));
  Dataset val = generate_dataset(env, pol, cfg.valuation.val_n_traj, cfg.valuation.val_traj_len,
                                 cfg.seed ^ kValSeedSalt);
  val.save(out_path(cfg, "val_dataset.bin"));

  std::size_t n_frames = 0;
  for (const auto& t : train.trajectories) n_frames += t.frames.size();
  std::cout << "gen-data: " << train.trajectories.size() << " train trajectories (" << n_frames
            << " frames, " << train.h_px << "x" << train.w_px << "), "
            << val.trajectories.size() << " validation trajectories, seed " << cfg.seed << "\n";
  finish_run(cfg, "gen-data", {{"dataset.bin", "dataset"}, {"val_dataset.bin", "dataset"}});
  return 0;
}

int run_fit_codebook(ExperimentConfig cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  Dataset ds = load_train_dataset(cfg);
  std::vector<Frame> frames;
  for (const auto& t : ds.trajectories) {
    frames.insert(frames.end(), t.frames.begin(), t.frames.end());
  }

  FeatureMap map = parse_feature_map(cfg.tokenizer.feature_map);
  std::optional<InvDynEncoder> enc;
  if (map == FeatureMap::kInverseDynamics) {
    std::string ipath = out_path(cfg, "invdyn.bin");
    require_artifact(ipath, "train-musik");
    enc.emplace(load_invdyn(ipath));
  }
  const InvDynEncoder* encp = enc ? &*enc : nullptr;

  Codebook cb = fit_codebook(frames, map, cfg.tokenizer.k,
                             {cfg.tokenizer.patch_rows, cfg.tokenizer.patch_cols}, cfg.seed, encp);
  save_codebook(out_path(cfg, "codebook.bin"), cb);
  std::cout << "fit-codebook: K=" << cb.k << " d=" << cb.d << " patches="
            << cb.patch_grid.count() << " (" << cfg.tokenizer.feature_map
            << "), quantization mse " << format_double(quantization_mse(cb, frames, encp)) << "\n";
  finish_run(cfg, "fit-codebook", {{"codebook.bin", "codebook"}});
  return 0;
}

int run_train_musik(ExperimentConfig cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  Dataset ds = load_train_dataset(cfg);

  InvDynTrainOpts opts;
  opts.hidden = cfg.tokenizer.invdyn_hidden;
  opts.feat_dim = cfg.tokenizer.invdyn_feat_dim;
  opts.batch_size = cfg.tokenizer.invdyn_batch;
  opts.lr = cfg.tokenizer.invdyn_lr;

  std::vector<double> epoch_loss;
  InvDynEncoder enc = train_inverse_dynamics(ds, cfg.tokenizer.invdyn_k_max,
                                             cfg.tokenizer.invdyn_epochs, cfg.seed, opts,
                                             &epoch_loss);
  save_invdyn(out_path(cfg, "invdyn.bin"), enc);

  CsvWriter csv;
  csv.row({"epoch", "loss"});
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    csv.row({std::to_string(e), format_double(epoch_loss[e])});
  }
  write_text(cfg, "invdyn_train_log.csv", csv.str());

  double acc = invdyn_accuracy(enc, ds, cfg.seed ^ 0xaccULL);
  std::cout << "train-musik: k_max=" << cfg.tokenizer.invdyn_k_max << ", final loss "
            << format_double(epoch_loss.back()) << ", action accuracy " << format_double(acc)
            << "\n";
  finish_run(cfg, "train-musik",
             {{"invdyn.bin", "invdyn"}, {"invdyn_train_log.csv", "log"}});
  return 0;
}

int run_train_voc(ExperimentConfig cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  Dataset ds = load_train_dataset(cfg);
  Tokenizer tok = load_tokenizer(cfg);

  LatentDataset lat = encode_dataset(ds, tok.cb, cfg.tokenizer.stack_size, tok.encp());
  OccupancyConfig ocfg = occupancy_config(
      cfg.model, tok.cb.k, tok.cb.patch_grid.count() * cfg.tokenizer.stack_size);
  OccupancyModel model(ocfg, cfg.seed);
  std::vector<TrainLogRow> logs = train_occupancy(model, lat, train_config(cfg.model), cfg.seed);
  save_occupancy(out_path(cfg, "occupancy.bin"), model);
  write_text(cfg, "voc_train_log.csv", train_log_csv(logs));

  const TrainLogRow& last = logs.back();
  std::cout << "train-voc: " << cfg.model.backend << " gamma=" << format_double(ocfg.gamma)
            << " k_max=" << cfg.model.k_max << ", step " << last.step << " loss "
            << format_double(last.loss) << " (next/kstep/boot " << format_double(last.frac_next)
            << "/" << format_double(last.frac_kstep) << "/" << format_double(last.frac_boot)
            << ")\n";
  finish_run(cfg, "train-voc", {{"occupancy.bin", "occupancy"}, {"voc_train_log.csv", "log"}});
  return 0;
}

int run_train_reward(ExperimentConfig cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  Dataset ds = load_train_dataset(cfg);
  Tokenizer tok = load_tokenizer(cfg);

  RewardTrainResult res = train_reward(ds, tok.cb, cfg.tokenizer.stack_size, cfg.reward.epochs,
                                       cfg.seed, reward_opts(cfg.reward), tok.encp());
  save_reward(out_path(cfg, "reward.bin"), res.model);

  CsvWriter csv;
  csv.row({"epoch", "train_mse"});
  for (std::size_t e = 0; e < res.epoch_train_mse.size(); ++e) {
    csv.row({std::to_string(e), format_double(res.epoch_train_mse[e])});
  }
  write_text(cfg, "reward_train_log.csv", csv.str());

  std::cout << "train-reward: train mse " << format_double(res.train_mse) << ", val mse "
            << format_double(res.val_mse) << "\n";
  finish_run(cfg, "train-reward",
             {{"reward.bin", "reward"}, {"reward_train_log.csv", "log"}});
  return 0;
}

int run_eval_occupancy(ExperimentConfig cfg) {
  cfg.validate();
  require_stack_one(cfg, "eval-occupancy");
  ensure_output_dir(cfg);
  std::string opath = out_path(cfg, "occupancy.bin");
  require_artifact(opath, "train-voc");
  OccupancyModel model = load_occupancy(opath);
  Tokenizer tok = load_tokenizer(cfg);
  Dataset ds = load_train_dataset(cfg);

  GridWorld env = build_env(cfg.env);
  double gamma = model.config().gamma;
  StateTable table = build_state_table(env, tok.cb, tok.encp());
  int n = env.n_states();

  // empirical transition rows from the dataset's ground-truth state ids
  std::vector<std::vector<double>> counts(n, std::vector<double>(n, 0.0));
  std::vector<bool> visited(n, false);
  for (const Trajectory& tr : ds.trajectories) {
    if (!tr.state_ids) throw ConfigError("dataset carries no state ids; regenerate with gen-data");
    const auto& sid = *tr.state_ids;
    for (std::size_t t = 0; t + 1 < sid.size(); ++t) {
      counts[sid[t]][sid[t + 1]] += 1.0;
      visited[sid[t]] = true;
    }
  }
  std::vector<std::vector<double>> phat = counts;
  for (int s = 0; s < n; ++s) {
    double total = 0.0;
    for (double c : phat[s]) total += c;
    if (total > 0.0) {
      for (double& c : phat[s]) c /= total;
    } else {
      phat[s][s] = 1.0;  // never seen as a source; absorb so the solve stays stochastic
    }
  }
  OccupancyDist mu_emp = occupancy_from_transition(phat, gamma);
  MdpSpec mdp = as_mdp(env);
  OccupancyDist mu_exact =
      exact_occupancy(mdp, build_policy(cfg.env).state_action_matrix(env), gamma);

  CsvWriter csv;
  csv.row({"state_id", "tv_empirical", "tv_exact", "rejected_mass"});
  double sum_emp = 0.0, sum_ex = 0.0, max_emp = 0.0, max_ex = 0.0;
  int rows = 0, skipped = 0;
  for (int s = 0; s < n; ++s) {
    if (!visited[s]) {
      ++skipped;
      continue;
    }
    // model row as a distribution over states plus off-table mass
    std::vector<double> m(n, 0.0);
    double rejected = 0.0;
    if (model.config().backend == Backend::kTabular) {
      const std::vector<double>* row = model.table().row(table.latents[s].seq.tokens);
      if (!row) {
        ++skipped;
        continue;
      }
      for (const auto& [tokens, c] : model.table().col_of) {
        auto it = table.state_of.find(tokens);
        if (it != table.state_of.end()) {
          m[it->second] += (*row)[static_cast<std::size_t>(c)];
        } else {
          rejected += (*row)[static_cast<std::size_t>(c)];
        }
      }
    } else {
      Rng rng = Rng::substream(cfg.seed, static_cast<uint64_t>(s));
      std::vector<LatentState> samples =
          model.sample_future(table.latents[s], cfg.model.eval_samples, rng);
      for (const LatentState& z : samples) {
        auto it = table.state_of.find(z.seq.tokens);
        if (it != table.state_of.end()) {
          m[it->second] += 1.0;
        } else {
          rejected += 1.0;
        }
      }
      double total = static_cast<double>(cfg.model.eval_samples);
      for (double& x : m) x /= total;
      rejected /= total;
    }
    double tv_emp = 0.5 * rejected, tv_ex = 0.5 * rejected;
    for (int e = 0; e < n; ++e) {
      tv_emp += 0.5 * std::abs(m[e] - mu_emp.mu[s][e]);
      tv_ex += 0.5 * std::abs(m[e] - mu_exact.mu[s][e]);
    }
    csv.row({std::to_string(s), format_double(tv_emp), format_double(tv_ex),
             format_double(rejected)});
    sum_emp += tv_emp;
    sum_ex += tv_ex;
    max_emp = std::max(max_emp, tv_emp);
    max_ex = std::max(max_ex, tv_ex);
    ++rows;
  }
  if (rows == 0) throw ConfigError("eval-occupancy: no conditioning state was ever visited");
  write_text(cfg, "occupancy_tv.csv", csv.str());

  std::cout << "eval-occupancy: gamma=" << format_double(gamma) << ", " << rows
            << " states, mean TV " << format_double(sum_emp / rows) << " empirical / "
            << format_double(sum_ex / rows) << " exact (max " << format_double(max_emp) << " / "
            << format_double(max_ex) << "), skipped " << skipped << "\n";
  finish_run(cfg, "eval-occupancy", {{"occupancy_tv.csv", "metrics"}});
  return 0;
}

int run_eval_value(ExperimentConfig cfg) {
  cfg.validate();
  require_stack_one(cfg, "eval-value");
  ensure_output_dir(cfg);
  std::string opath = out_path(cfg, "occupancy.bin");
  require_artifact(opath, "train-voc");
  OccupancyModel model = load_occupancy(opath);
  std::string rpath = out_path(cfg, "reward.bin");
  require_artifact(rpath, "train-reward");
  RewardModel rm = load_reward(rpath);
  Tokenizer tok = load_tokenizer(cfg);
  std::string vpath = out_path(cfg, "val_dataset.bin");
  require_artifact(vpath, "gen-data");
  Dataset val = Dataset::load(vpath);

  GridWorld env = build_env(cfg.env);
  double gamma = model.config().gamma;
  StateTable table = build_state_table(env, tok.cb, tok.encp());
  LatentReward r = reward_from_model(rm, tok.cb);
  std::vector<double> oracle =
      exact_value(as_mdp(env), build_policy(cfg.env).state_action_matrix(env), gamma);
  LatentDataset val_lat = encode_dataset(val, tok.cb, 1, tok.encp());

  std::vector<int> samp_ids, den_ids;
  std::vector<double> samp_est, samp_oracle, den_est, den_oracle;
  std::vector<std::vector<double>> distributions;
  std::vector<double> spear_a, spear_b;
  int unseen = 0;

  for (int s = 0; s < env.n_states(); ++s) {
    ValueEstimate est;
    try {
      Rng rng = Rng::substream(cfg.seed, static_cast<uint64_t>(s));
      est = value_by_sampling(model, r, table.latents[s], cfg.valuation.n_samples, rng);
    } catch (const UnseenConditioningError&) {
      ++unseen;
      continue;
    }
    samp_ids.push_back(s);
    samp_est.push_back(est.mean);
    samp_oracle.push_back(oracle[static_cast<std::size_t>(s)]);
    distributions.push_back(est.per_sample);

    // density estimate over the first held-out trajectory starting at s
    for (std::size_t i = 0; i < val.trajectories.size(); ++i) {
      const Trajectory& tr = val.trajectories[i];
      if (!tr.state_ids || tr.state_ids->empty() || (*tr.state_ids)[0] != static_cast<uint32_t>(s)) {
        continue;
      }
      const std::vector<LatentState>& lat = val_lat.trajs[i].latents;
      std::vector<LatentState> futures(lat.begin() + 1, lat.end());
      int T = std::min<int>(cfg.valuation.density_T, static_cast<int>(futures.size()));
      DensityOpts opts;
      opts.dedupe = cfg.valuation.dedupe;
      opts.scale_by_inv_one_minus_gamma = cfg.valuation.scale_density;
      ValueEstimate de = value_by_density(model, r, lat[0], futures, T, opts);
      den_ids.push_back(s);
      den_est.push_back(de.mean);
      den_oracle.push_back(oracle[static_cast<std::size_t>(s)]);
      spear_a.push_back(est.mean);
      spear_b.push_back(de.mean);
      break;
    }
  }
  if (samp_ids.empty()) throw ConfigError("eval-value: every conditioning state was unseen");

  write_text(cfg, "value_error_sampling.csv", error_table_csv(samp_ids, samp_est, samp_oracle));
  write_text(cfg, "return_distribution.csv", return_distribution_csv(samp_ids, distributions));
  ErrorSummary es = return_estimation_error(samp_est, samp_oracle);
  std::cout << "eval-value: sampling over " << samp_ids.size() << " states, mean |err| "
            << format_double(es.mean_abs_error) << " max " << format_double(es.max_abs_error)
            << " (n=" << cfg.valuation.n_samples << ", " << unseen << " unseen)\n";

  std::vector<std::pair<std::string, std::string>> artifacts = {
      {"value_error_sampling.csv", "metrics"}, {"return_distribution.csv", "metrics"}};
  if (!den_ids.empty()) {
    write_text(cfg, "value_error_density.csv", error_table_csv(den_ids, den_est, den_oracle));
    artifacts.emplace_back("value_error_density.csv", "metrics");
    ErrorSummary ed = return_estimation_error(den_est, den_oracle);
    std::cout << "eval-value: density over " << den_ids.size() << " states, mean |err| "
              << format_double(ed.mean_abs_error) << " (T=" << cfg.valuation.density_T
              << (cfg.valuation.scale_density ? ", scaled" : ", raw")
              << (cfg.valuation.dedupe ? ", dedupe" : "") << ")\n";
    if (spear_a.size() >= 2) {
      try {
        std::cout << "eval-value: sampling/density spearman "
                  << format_double(spearman(spear_a, spear_b)) << "\n";
      } catch (const InvalidInputError&) {
        std::cout << "eval-value: sampling/density spearman undefined (constant ranks)\n";
      }
    }
  }
  finish_run(cfg, "eval-value", std::move(artifacts));
  return 0;
}

int run_rollout(ExperimentConfig cfg, std::vector<int> states, int horizon, int n_rollouts) {
  cfg.validate();
  ensure_output_dir(cfg);
  if (horizon < 1 || n_rollouts < 1) throw ConfigError("rollout: horizon and n-rollouts must be positive");
  std::string opath = out_path(cfg, "occupancy.bin");
  require_artifact(opath, "train-voc");
  OccupancyModel model = load_occupancy(opath);
  Tokenizer tok = load_tokenizer(cfg);
  if (tok.cb.feature_map != FeatureMap::kRawPixels) {
    throw ConfigError("rollout renders decoded frames and needs a raw-pixels codebook");
  }

  GridWorld env = build_env(cfg.env);
  if (states.empty()) states = {0};
  int stack = cfg.tokenizer.stack_size;
  int fh = env.h_px, fw = env.w_px, sep = 2;
  int cols = (1 + horizon) * stack;
  int W = cols * fw + (cols - 1) * sep;
  int H = n_rollouts * fh + (n_rollouts - 1) * sep;

  std::vector<std::pair<std::string, std::string>> artifacts;
  for (int s : states) {
    if (s < 0 || s >= env.n_states()) throw ConfigError("rollout: state id out of range");
    GridWorld probe = env;
    probe.agent_pos = probe.cell_of(s);
    std::vector<Frame> window(static_cast<std::size_t>(stack), render(probe));
    LatentState z0 = encode(tok.cb, window, tok.encp());

    std::vector<uint8_t> img(static_cast<std::size_t>(H) * W, 255);
    Rng rng = Rng::substream(cfg.seed, 0x911ULL + static_cast<uint64_t>(s));
    for (int row = 0; row < n_rollouts; ++row) {
      std::vector<LatentState> chain = model.rollout(z0, horizon, rng);
      std::vector<Frame> strip = decode(tok.cb, z0).frames;
      for (const LatentState& z : chain) {
        std::vector<Frame> f = decode(tok.cb, z).frames;
        strip.insert(strip.end(), f.begin(), f.end());
      }
      for (std::size_t c = 0; c < strip.size(); ++c) {
        const Frame& f = strip[c];
        int y0 = row * (fh + sep);
        int x0 = static_cast<int>(c) * (fw + sep);
        for (int y = 0; y < fh; ++y) {
          for (int x = 0; x < fw; ++x) {
            img[static_cast<std::size_t>(y0 + y) * W + x0 + x] =
                f.px[static_cast<std::size_t>(y) * fw + x];
          }
        }
      }
    }
    std::string name = "rollout_state" + std::to_string(s) + ".pgm";
    write_pgm(out_path(cfg, name), H, W, img);
    artifacts.emplace_back(name, "image");
  }
  std::cout << "rollout: " << states.size() << " grids (" << n_rollouts << " chains x "
            << horizon << " model steps, gamma " << format_double(model.config().gamma) << ")\n";
  finish_run(cfg, "rollout", std::move(artifacts));
  return 0;
}

int run_mpc_cmd(ExperimentConfig cfg) {
  cfg.validate();
  ensure_output_dir(cfg);
  Tokenizer tok = load_tokenizer(cfg);
  Dataset ds = load_train_dataset(cfg);
  GridWorld env = build_env(cfg.env);

  std::vector<std::string> methods;
  if (cfg.mpc.method == "all") {
    methods = {"voc", "no-model", "init-model", "no-lookahead"};
  } else {
    parse_mpc_method(cfg.mpc.method);
    methods = {cfg.mpc.method};
  }

  bool needs_model = std::find(methods.begin(), methods.end(), "voc") != methods.end();
  bool needs_reward = methods.size() > 1 ||
                      methods[0] == "voc" || methods[0] == "init-model" ||
                      methods[0] == "no-lookahead";

  std::optional<OccupancyModel> model;
  if (needs_model) {
    std::string opath = out_path(cfg, "occupancy.bin");
    require_artifact(opath, "train-voc");
    model.emplace(load_occupancy(opath));
  }
  std::optional<RewardModel> rm;
  if (needs_reward) {
    std::string rpath = out_path(cfg, "reward.bin");
    require_artifact(rpath, "train-reward");
    rm.emplace(load_reward(rpath));
  }
  std::optional<OccupancyModel> init_model;
  if (std::find(methods.begin(), methods.end(), "init-model") != methods.end()) {
    ModelSection neural = cfg.model;
    neural.backend = "neural";
    OccupancyConfig icfg = occupancy_config(
        neural, tok.cb.k, tok.cb.patch_grid.count() * cfg.tokenizer.stack_size);
    init_model.emplace(icfg, cfg.seed ^ kInitSeedSalt);
  }

  std::vector<MpcRun> runs(methods.size());
  std::vector<std::pair<std::string, const MpcRun*>> named;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    MpcSection section = cfg.mpc;
    section.method = methods[i];
    MpcConfig mcfg = mpc_config(section, cfg.tokenizer.stack_size);

    MpcArtifacts art;
    art.model = model ? &*model : nullptr;
    art.init_model = init_model ? &*init_model : nullptr;
    art.rm = rm ? &*rm : nullptr;
    art.cb = &tok.cb;
    art.enc = tok.encp();
    art.action_source = &ds;

    runs[i] = run_mpc(env, art, mcfg, cfg.seed);
    named.emplace_back(methods[i], &runs[i]);
    const MpcSummary& s = runs[i].summary;
    std::cout << "mpc " << methods[i] << ": mean " << format_double(s.mean) << ", median "
              << format_double(s.median) << ", min/max " << format_double(s.min) << "/"
              << format_double(s.max) << "\n";
  }
  write_text(cfg, "mpc_results.csv", mpc_results_csv(named));
  write_text(cfg, "mpc_summary.csv", mpc_summary_csv(named));
  finish_run(cfg, "mpc", {{"mpc_results.csv", "metrics"}, {"mpc_summary.csv", "metrics"}});
  return 0;
}

int run_oracle(ExperimentConfig cfg, const std::string& mdp_name) {
  cfg.validate();
  ensure_output_dir(cfg);

  MdpSpec mdp;
  std::vector<std::vector<double>> pi;
  if (mdp_name == "gridworld") {
    GridWorld env = build_env(cfg.env);
    mdp = as_mdp(env);
    pi = build_policy(cfg.env).state_action_matrix(env);
  } else {
    std::size_t digits = 0;
    std::string base;
    for (const char* prefix : {"cycle", "chain"}) {
      std::string p(prefix);
      if (mdp_name.rfind(p, 0) == 0 && mdp_name.size() > p.size()) {
        base = p;
        digits = p.size();
        break;
      }
    }
    int n = 0;
    try {
      if (!base.empty()) n = std::stoi(mdp_name.substr(digits));
    } catch (const std::exception&) {
      n = 0;
    }
    if (base.empty() || n < 2) {
      throw ConfigError("unknown --mdp \"" + mdp_name +
                        "\" (expected cycleN, chainN, or gridworld)");
    }
    mdp = base == "cycle" ? cycle_mdp(n) : chain_mdp(n);
    pi.assign(static_cast<std::size_t>(mdp.n_states),
              std::vector<double>(static_cast<std::size_t>(mdp.n_actions),
                                  1.0 / mdp.n_actions));
  }

  double gamma = cfg.model.gamma;
  OccupancyDist occ = exact_occupancy(mdp, pi, gamma);
  std::string text;
  for (int s = 0; s < mdp.n_states; ++s) {
    std::string line = "state" + std::to_string(s) + ":";
    for (int e = 0; e < mdp.n_states; ++e) {
      line += (e == 0 ? " " : ", ") + fmt6(occ.mu[static_cast<std::size_t>(s)]
                                                [static_cast<std::size_t>(e)]);
    }
    text += line + "\n";
    std::cout << line << "\n";
  }
  write_text(cfg, "oracle.csv", text);
  finish_run(cfg, "oracle", {{"oracle.csv", "metrics"}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // the config file loads first so every flag can override it field by field
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config_path = argv[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    }
  }
  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = ExperimentConfig::load(config_path);
  } catch (const voc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"video occupancy models: data, training, evaluation, control"};
  app.require_subcommand(1);
  std::string config_dummy;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_dummy, "experiment config JSON, merged before flags");
    cmd->add_option("--output-dir", cfg.output_dir, "artifact directory");
    cmd->add_option("--seed", cfg.seed, "master rng seed");
  };

  auto* gen = app.add_subcommand("gen-data", "roll out the behavior policy; write train + val datasets");
  add_common(gen);
  gen->add_option("--width", cfg.env.width, "grid width");
  gen->add_option("--height", cfg.env.height, "grid height");
  gen->add_option("--goal-row", cfg.env.goal_row, "goal row");
  gen->add_option("--goal-col", cfg.env.goal_col, "goal column");
  gen->add_option("--slip", cfg.env.slip, "slip probability");
  gen->add_option("--cell-px", cfg.env.cell_px, "pixels per grid cell");
  gen->add_flag("--continuing", cfg.env.continuing, "no termination at the goal");
  gen->add_option("--goal-reward", cfg.env.goal_reward, "reward on reaching the goal");
  gen->add_option("--policy", cfg.env.policy,
                  "uniform-random | epsilon-greedy-to-goal | fixed-action-sequence");
  gen->add_option("--epsilon", cfg.env.epsilon, "exploration mass for epsilon-greedy-to-goal");
  gen->add_option("--sequence", cfg.env.sequence, "actions for fixed-action-sequence")
      ->delimiter(',');
  gen->add_option("--n-traj", cfg.env.n_traj, "number of trajectories");
  gen->add_option("--traj-len", cfg.env.traj_len, "frames per trajectory");

  auto* fit = app.add_subcommand("fit-codebook", "k-means codebook over the dataset's patches");
  add_common(fit);
  fit->add_option("--feature-map", cfg.tokenizer.feature_map,
                  "raw-pixels | frozen-random | inverse-dynamics");
  fit->add_option("--k", cfg.tokenizer.k, "codebook size");
  fit->add_option("--patch-rows", cfg.tokenizer.patch_rows, "patch grid rows");
  fit->add_option("--patch-cols", cfg.tokenizer.patch_cols, "patch grid columns");
  fit->add_option("--stack-size", cfg.tokenizer.stack_size, "frames per latent state");

  auto* musik = app.add_subcommand("train-musik", "inverse-dynamics feature encoder");
  add_common(musik);
  musik->add_option("--invdyn-k-max", cfg.tokenizer.invdyn_k_max, "max frame offset k");
  musik->add_option("--invdyn-epochs", cfg.tokenizer.invdyn_epochs, "training epochs");
  musik->add_option("--invdyn-hidden", cfg.tokenizer.invdyn_hidden, "encoder hidden width");
  musik->add_option("--invdyn-feat-dim", cfg.tokenizer.invdyn_feat_dim, "feature dimension");
  musik->add_option("--invdyn-batch", cfg.tokenizer.invdyn_batch, "batch size");
  musik->add_option("--invdyn-lr", cfg.tokenizer.invdyn_lr, "learning rate");

  auto* voc_cmd = app.add_subcommand("train-voc", "occupancy model over tokenized futures");
  add_common(voc_cmd);
  voc_cmd->add_option("--backend", cfg.model.backend, "tabular | neural");
  voc_cmd->add_option("--gamma", cfg.model.gamma, "discount of the occupancy");
  voc_cmd->add_option("--k-max", cfg.model.k_max, "k-step temporal target horizon");
  voc_cmd->add_option("--ema-decay", cfg.model.ema_decay, "bootstrap target decay");
  voc_cmd->add_option("--loss-positions", cfg.model.loss_positions, "target-only | all-positions");
  voc_cmd->add_option("--n-layer", cfg.model.n_layer, "transformer blocks");
  voc_cmd->add_option("--n-head", cfg.model.n_head, "attention heads");
  voc_cmd->add_option("--n-embd", cfg.model.n_embd, "embedding width");
  voc_cmd->add_option("--steps", cfg.model.steps, "optimizer steps");
  voc_cmd->add_option("--batch-size", cfg.model.batch_size, "pairs per step");
  voc_cmd->add_option("--lr", cfg.model.lr, "peak learning rate");
  voc_cmd->add_option("--weight-decay", cfg.model.weight_decay, "adamw weight decay");
  voc_cmd->add_option("--warmup-steps", cfg.model.warmup_steps, "lr warmup steps");
  voc_cmd->add_option("--tab-lr0", cfg.model.tab_lr0, "tabular initial step size");
  voc_cmd->add_option("--tab-tau", cfg.model.tab_tau, "tabular step-size decay scale");
  voc_cmd->add_option("--log-interval", cfg.model.log_interval, "steps between log rows");

  auto* rew = app.add_subcommand("train-reward", "reward regressor on frame-stack features");
  add_common(rew);
  rew->add_option("--hidden", cfg.reward.hidden, "hidden width (0 = linear)");
  rew->add_option("--epochs", cfg.reward.epochs, "training epochs");
  rew->add_option("--batch-size", cfg.reward.batch_size, "batch size");
  rew->add_option("--lr", cfg.reward.lr, "learning rate");
  rew->add_option("--val-frac", cfg.reward.val_frac, "held-out fraction");

  auto* evo = app.add_subcommand("eval-occupancy", "per-state TV against the exact occupancy");
  add_common(evo);
  evo->add_option("--eval-samples", cfg.model.eval_samples, "samples per neural model row");

  auto* evv = app.add_subcommand("eval-value", "return-estimation error tables");
  add_common(evv);
  evv->add_option("--n-samples", cfg.valuation.n_samples, "futures per sampling estimate");
  evv->add_option("--density-T", cfg.valuation.density_T, "density estimator horizon");
  evv->add_flag("--dedupe", cfg.valuation.dedupe, "count repeated latents once");
  evv->add_flag("--scale-density", cfg.valuation.scale_density, "scale by 1/(1-gamma)");

  auto* rol = app.add_subcommand("rollout", "decoded sample grids as PGM images");
  add_common(rol);
  std::vector<int> rollout_states;
  int rollout_horizon = 8;
  int rollout_chains = 6;
  rol->add_option("--state", rollout_states, "conditioning state ids (default 0)");
  rol->add_option("--horizon", rollout_horizon, "model steps per chain");
  rol->add_option("--n-rollouts", rollout_chains, "independent chains per grid");

  auto* mpc_cmd = app.add_subcommand("mpc", "candidate-action control episodes");
  add_common(mpc_cmd);
  mpc_cmd->add_option("--method", cfg.mpc.method,
                      "voc | no-model | init-model | no-lookahead | all");
  mpc_cmd->add_option("--episode-len", cfg.mpc.episode_len, "steps per episode");
  mpc_cmd->add_option("--n-episodes", cfg.mpc.n_episodes, "episodes per method");
  mpc_cmd->add_option("--candidate-buffer-size", cfg.mpc.candidate_buffer_size,
                      "actions per candidate buffer");
  mpc_cmd->add_option("--n-value-samples", cfg.mpc.n_value_samples, "futures per value score");
  mpc_cmd->add_option("--buffer-mode", cfg.mpc.buffer_mode, "resample | fixed");

  auto* orc = app.add_subcommand("oracle", "exact occupancy rows of a reference process");
  add_common(orc);
  std::string oracle_mdp = "cycle3";
  orc->add_option("--mdp", oracle_mdp, "cycleN | chainN | gridworld");
  orc->add_option("--gamma", cfg.model.gamma, "discount");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen_data(cfg);
    if (fit->parsed()) return run_fit_codebook(cfg);
    if (musik->parsed()) return run_train_musik(cfg);
    if (voc_cmd->parsed()) return run_train_voc(cfg);
    if (rew->parsed()) return run_train_reward(cfg);
    if (evo->parsed()) return run_eval_occupancy(cfg);
    if (evv->parsed()) return run_eval_value(cfg);
    if (rol->parsed()) return run_rollout(cfg, rollout_states, rollout_horizon, rollout_chains);
    if (mpc_cmd->parsed()) return run_mpc_cmd(cfg);
    if (orc->parsed()) return run_oracle(cfg, oracle_mdp);
  } catch (const voc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
