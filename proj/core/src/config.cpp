#include "voc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "voc/codebook.hpp"
#include "voc/error.hpp"

namespace voc {

namespace {

using nlohmann::json;

// Reads one section's fields, remembering which keys were consumed so done()
// can reject anything unrecognised.
class SectionReader {
 public:
  SectionReader(const json& j, std::string name) : obj_(j), name_(std::move(name)) {
    if (!obj_.is_object()) throw ConfigError("config section " + name_ + " must be an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    known_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + name_ + "." + key + " has the wrong type");
    }
  }

  void done() const {
    for (const auto& item : obj_.items()) {
      if (!known_.contains(item.key())) {
        throw ConfigError("unknown config key " + name_ + "." + item.key());
      }
    }
  }

 private:
  const json& obj_;
  std::string name_;
  std::set<std::string> known_;
};

void read_env(const json& j, EnvSection& e) {
  SectionReader r(j, "env");
  r.field("width", e.width);
  r.field("height", e.height);
  r.field("goal_row", e.goal_row);
  r.field("goal_col", e.goal_col);
  r.field("slip", e.slip);
  r.field("cell_px", e.cell_px);
  r.field("continuing", e.continuing);
  r.field("goal_reward", e.goal_reward);
  r.field("policy", e.policy);
  r.field("epsilon", e.epsilon);
  r.field("sequence", e.sequence);
  r.field("n_traj", e.n_traj);
  r.field("traj_len", e.traj_len);
  r.done();
}

void read_tokenizer(const json& j, TokenizerSection& t) {
  SectionReader r(j, "tokenizer");
  r.field("feature_map", t.feature_map);
  r.field("k", t.k);
  r.field("patch_rows", t.patch_rows);
  r.field("patch_cols", t.patch_cols);
  r.field("stack_size", t.stack_size);
  r.field("invdyn_k_max", t.invdyn_k_max);
  r.field("invdyn_epochs", t.invdyn_epochs);
  r.field("invdyn_hidden", t.invdyn_hidden);
  r.field("invdyn_feat_dim", t.invdyn_feat_dim);
  r.field("invdyn_batch", t.invdyn_batch);
  r.field("invdyn_lr", t.invdyn_lr);
  r.done();
}

void read_model(const json& j, ModelSection& m) {
  SectionReader r(j, "model");
  r.field("backend", m.backend);
  r.field("gamma", m.gamma);
  r.field("k_max", m.k_max);
  r.field("ema_decay", m.ema_decay);
  r.field("loss_positions", m.loss_positions);
  r.field("n_layer", m.n_layer);
  r.field("n_head", m.n_head);
  r.field("n_embd", m.n_embd);
  r.field("steps", m.steps);
  r.field("batch_size", m.batch_size);
  r.field("lr", m.lr);
  r.field("weight_decay", m.weight_decay);
  r.field("warmup_steps", m.warmup_steps);
  r.field("tab_lr0", m.tab_lr0);
  r.field("tab_tau", m.tab_tau);
  r.field("log_interval", m.log_interval);
  r.field("eval_samples", m.eval_samples);
  r.done();
}

void read_reward(const json& j, RewardSection& w) {
  SectionReader r(j, "reward");
  r.field("hidden", w.hidden);
  r.field("epochs", w.epochs);
  r.field("batch_size", w.batch_size);
  r.field("lr", w.lr);
  r.field("weight_decay", w.weight_decay);
  r.field("val_frac", w.val_frac);
  r.field("decay_lr", w.decay_lr);
  r.done();
}

void read_valuation(const json& j, ValuationSection& v) {
  SectionReader r(j, "valuation");
  r.field("n_samples", v.n_samples);
  r.field("density_T", v.density_T);
  r.field("dedupe", v.dedupe);
  r.field("scale_density", v.scale_density);
  r.field("val_n_traj", v.val_n_traj);
  r.field("val_traj_len", v.val_traj_len);
  r.done();
}

void read_mpc(const json& j, MpcSection& m) {
  SectionReader r(j, "mpc");
  r.field("method", m.method);
  r.field("episode_len", m.episode_len);
  r.field("n_episodes", m.n_episodes);
  r.field("candidate_buffer_size", m.candidate_buffer_size);
  r.field("n_value_samples", m.n_value_samples);
  r.field("buffer_mode", m.buffer_mode);
  r.done();
}

BufferMode parse_buffer_mode(const std::string& name) {
  if (name == "resample") return BufferMode::kResampleEachStep;
  if (name == "fixed") return BufferMode::kFixed;
  throw ConfigError("unknown buffer_mode \"" + name + "\" (expected resample or fixed)");
}

void check_positive(int v, const char* what) {
  if (v < 1) throw ConfigError(std::string(what) + " must be positive");
}

}  // namespace

GridWorld build_env(const EnvSection& e) {
  GridWorld env;
  env.width = e.width;
  env.height = e.height;
  env.goal_pos = {e.goal_row, e.goal_col};
  env.agent_pos = {0, 0};
  env.slip_prob = e.slip;
  env.h_px = e.height * e.cell_px;
  env.w_px = e.width * e.cell_px;
  env.episodic = !e.continuing;
  env.goal_reward = e.goal_reward;
  env.validate();
  return env;
}

Policy build_policy(const EnvSection& e) {
  Policy p;
  p.kind = Policy::parse_kind(e.policy);
  p.epsilon = e.epsilon;
  p.sequence = e.sequence;
  p.validate();
  return p;
}

OccupancyConfig occupancy_config(const ModelSection& m, int vocab, int tokens_per_latent) {
  OccupancyConfig cfg;
  cfg.backend = parse_backend(m.backend);
  cfg.gamma = m.gamma;
  cfg.vocab = vocab;
  cfg.tokens_per_latent = tokens_per_latent;
  cfg.n_layer = m.n_layer;
  cfg.n_head = m.n_head;
  cfg.n_embd = m.n_embd;
  cfg.validate();
  return cfg;
}

TrainConfig train_config(const ModelSection& m) {
  TrainConfig tc;
  tc.k_max = m.k_max;
  tc.batch_size = m.batch_size;
  tc.steps = m.steps;
  tc.ema_decay = m.ema_decay;
  tc.loss_positions = parse_loss_positions(m.loss_positions);
  tc.lr = m.lr;
  tc.weight_decay = m.weight_decay;
  tc.warmup_steps = m.warmup_steps;
  tc.tab_lr0 = m.tab_lr0;
  tc.tab_tau = m.tab_tau;
  tc.log_interval = m.log_interval;
  return tc;
}

RewardTrainOpts reward_opts(const RewardSection& r) {
  RewardTrainOpts o;
  o.hidden = r.hidden;
  o.batch_size = r.batch_size;
  o.lr = r.lr;
  o.weight_decay = r.weight_decay;
  o.val_frac = r.val_frac;
  o.decay_lr = r.decay_lr;
  return o;
}

MpcConfig mpc_config(const MpcSection& m, int stack_size) {
  MpcConfig cfg;
  cfg.episode_len = m.episode_len;
  cfg.n_episodes = m.n_episodes;
  cfg.candidate_buffer_size = m.candidate_buffer_size;
  cfg.n_value_samples = m.n_value_samples;
  cfg.stack_size = stack_size;
  if (m.method != "all") cfg.method = parse_mpc_method(m.method);
  cfg.buffer_mode = parse_buffer_mode(m.buffer_mode);
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  build_env(env);
  build_policy(env);
  check_positive(env.n_traj, "env.n_traj");
  if (env.traj_len < 2) throw ConfigError("env.traj_len must be at least 2");

  parse_feature_map(tokenizer.feature_map);
  check_positive(tokenizer.k, "tokenizer.k");
  check_positive(tokenizer.patch_rows, "tokenizer.patch_rows");
  check_positive(tokenizer.patch_cols, "tokenizer.patch_cols");
  check_positive(tokenizer.stack_size, "tokenizer.stack_size");
  check_positive(tokenizer.invdyn_k_max, "tokenizer.invdyn_k_max");
  check_positive(tokenizer.invdyn_epochs, "tokenizer.invdyn_epochs");
  check_positive(tokenizer.invdyn_hidden, "tokenizer.invdyn_hidden");
  check_positive(tokenizer.invdyn_feat_dim, "tokenizer.invdyn_feat_dim");
  check_positive(tokenizer.invdyn_batch, "tokenizer.invdyn_batch");

  // vocabulary and latent width are only known once the codebook exists; a
  // placeholder pair exercises the rest of the model section
  occupancy_config(model, std::max(tokenizer.k, 2),
                   tokenizer.patch_rows * tokenizer.patch_cols * tokenizer.stack_size);
  train_config(model);
  check_positive(model.eval_samples, "model.eval_samples");
  if (model.steps < 1) throw ConfigError("model.steps must be positive");

  if (reward.hidden < 0) throw ConfigError("reward.hidden must be non-negative");
  check_positive(reward.epochs, "reward.epochs");
  check_positive(reward.batch_size, "reward.batch_size");
  if (reward.val_frac < 0.0 || reward.val_frac >= 1.0) {
    throw ConfigError("reward.val_frac must be in [0, 1)");
  }

  check_positive(valuation.n_samples, "valuation.n_samples");
  if (valuation.density_T < 0) throw ConfigError("valuation.density_T must be non-negative");
  check_positive(valuation.val_n_traj, "valuation.val_n_traj");
  if (valuation.val_traj_len < 2) throw ConfigError("valuation.val_traj_len must be at least 2");

  mpc_config(mpc, tokenizer.stack_size);

  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["env"] = {{"width", env.width},
              {"height", env.height},
              {"goal_row", env.goal_row},
              {"goal_col", env.goal_col},
              {"slip", env.slip},
              {"cell_px", env.cell_px},
              {"continuing", env.continuing},
              {"goal_reward", env.goal_reward},
              {"policy", env.policy},
              {"epsilon", env.epsilon},
              {"sequence", env.sequence},
              {"n_traj", env.n_traj},
              {"traj_len", env.traj_len}};
  j["tokenizer"] = {{"feature_map", tokenizer.feature_map},
                    {"k", tokenizer.k},
                    {"patch_rows", tokenizer.patch_rows},
                    {"patch_cols", tokenizer.patch_cols},
                    {"stack_size", tokenizer.stack_size},
                    {"invdyn_k_max", tokenizer.invdyn_k_max},
                    {"invdyn_epochs", tokenizer.invdyn_epochs},
                    {"invdyn_hidden", tokenizer.invdyn_hidden},
                    {"invdyn_feat_dim", tokenizer.invdyn_feat_dim},
                    {"invdyn_batch", tokenizer.invdyn_batch},
                    {"invdyn_lr", tokenizer.invdyn_lr}};
  j["model"] = {{"backend", model.backend},
                {"gamma", model.gamma},
                {"k_max", model.k_max},
                {"ema_decay", model.ema_decay},
                {"loss_positions", model.loss_positions},
                {"n_layer", model.n_layer},
                {"n_head", model.n_head},
                {"n_embd", model.n_embd},
                {"steps", model.steps},
                {"batch_size", model.batch_size},
                {"lr", model.lr},
                {"weight_decay", model.weight_decay},
                {"warmup_steps", model.warmup_steps},
                {"tab_lr0", model.tab_lr0},
                {"tab_tau", model.tab_tau},
                {"log_interval", model.log_interval},
                {"eval_samples", model.eval_samples}};
  j["reward"] = {{"hidden", reward.hidden},
                 {"epochs", reward.epochs},
                 {"batch_size", reward.batch_size},
                 {"lr", reward.lr},
                 {"weight_decay", reward.weight_decay},
                 {"val_frac", reward.val_frac},
                 {"decay_lr", reward.decay_lr}};
  j["valuation"] = {{"n_samples", valuation.n_samples},
                    {"density_T", valuation.density_T},
                    {"dedupe", valuation.dedupe},
                    {"scale_density", valuation.scale_density},
                    {"val_n_traj", valuation.val_n_traj},
                    {"val_traj_len", valuation.val_traj_len}};
  j["mpc"] = {{"method", mpc.method},
              {"episode_len", mpc.episode_len},
              {"n_episodes", mpc.n_episodes},
              {"candidate_buffer_size", mpc.candidate_buffer_size},
              {"n_value_samples", mpc.n_value_samples},
              {"buffer_mode", mpc.buffer_mode}};
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig cfg;
  std::set<std::string> known = {"env",       "tokenizer", "model", "reward",
                                 "valuation", "mpc",       "seed",  "output_dir"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw ConfigError("unknown config section " + item.key());
    }
  }
  if (j.contains("env")) read_env(j["env"], cfg.env);
  if (j.contains("tokenizer")) read_tokenizer(j["tokenizer"], cfg.tokenizer);
  if (j.contains("model")) read_model(j["model"], cfg.model);
  if (j.contains("reward")) read_reward(j["reward"], cfg.reward);
  if (j.contains("valuation")) read_valuation(j["valuation"], cfg.valuation);
  if (j.contains("mpc")) read_mpc(j["mpc"], cfg.mpc);
  if (j.contains("seed")) {
    try {
      cfg.seed = j["seed"].get<uint64_t>();
    } catch (const json::exception&) {
      throw ConfigError("config key seed has the wrong type");
    }
  }
  if (j.contains("output_dir")) {
    try {
      cfg.output_dir = j["output_dir"].get<std::string>();
    } catch (const json::exception&) {
      throw ConfigError("config key output_dir has the wrong type");
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

}  // namespace voc
