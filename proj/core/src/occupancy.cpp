#include "voc/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "json.hpp"
#include "voc/error.hpp"
#include "voc/invdyn.hpp"
#include "voc/io.hpp"
#include "voc/nn/checkpoint.hpp"

namespace voc {

Backend parse_backend(const std::string& name) {
  if (name == "tabular") return Backend::kTabular;
  if (name == "neural") return Backend::kNeural;
  throw ConfigError("unknown backend \"" + name + "\" (expected tabular or neural)");
}

std::string backend_name(Backend b) {
  return b == Backend::kTabular ? "tabular" : "neural";
}

LossPositions parse_loss_positions(const std::string& name) {
  if (name == "target-only") return LossPositions::kTargetOnly;
  if (name == "all-positions") return LossPositions::kAllPositions;
  throw ConfigError("unknown loss_positions \"" + name +
                    "\" (expected target-only or all-positions)");
}

std::string loss_positions_name(LossPositions p) {
  return p == LossPositions::kTargetOnly ? "target-only" : "all-positions";
}

void OccupancyConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("occupancy: gamma must lie in [0,1)");
  if (vocab < 2) throw ConfigError("occupancy: vocab must be at least 2");
  if (tokens_per_latent < 1) throw ConfigError("occupancy: tokens_per_latent must be positive");
  if (backend == Backend::kNeural) {
    nn::GptConfig g;
    g.vocab = vocab;
    g.block_size = 2 * tokens_per_latent;
    g.n_layer = n_layer;
    g.n_head = n_head;
    g.n_embd = n_embd;
    g.validate();
  }
}

LatentState state_latent(int state_id) {
  LatentState z;
  z.seq.tokens = {state_id};
  z.seq.tokens_per_frame = 1;
  z.stack_size = 1;
  return z;
}

void LatentDataset::validate() const {
  if (vocab < 2) throw InvalidInputError("latent dataset: vocab must be at least 2");
  if (tokens_per_latent < 1) {
    throw InvalidInputError("latent dataset: tokens_per_latent must be positive");
  }
  for (const LatentTraj& tr : trajs) {
    for (const LatentState& z : tr.latents) {
      z.validate(vocab);
      if (static_cast<int>(z.seq.tokens.size()) != tokens_per_latent) {
        throw InvalidInputError("latent dataset: latent length disagrees with header");
      }
    }
  }
}

std::size_t LatentDataset::n_latents() const {
  std::size_t n = 0;
  for (const LatentTraj& tr : trajs) n += tr.latents.size();
  return n;
}

LatentDataset encode_dataset(const Dataset& ds, const Codebook& cb, int stack_size,
                             const InvDynEncoder* enc) {
  ds.validate();
  if (stack_size < 1) throw ConfigError("stack_size must be positive");
  LatentDataset out;
  out.vocab = cb.k;
  out.tokens_per_latent = stack_size * cb.patch_grid.count();
  out.stack_size = stack_size;
  for (const Trajectory& tr : ds.trajectories) {
    if (static_cast<int>(tr.frames.size()) < stack_size) continue;
    LatentTraj lt;
    for (std::size_t t = 0; t + stack_size <= tr.frames.size(); ++t) {
      lt.latents.push_back(
          encode(cb, std::span<const Frame>(tr.frames.data() + t, stack_size), enc));
    }
    out.trajs.push_back(std::move(lt));
  }
  return out;
}

LatentDataset latent_dataset_from_episodes(const std::vector<std::vector<int>>& episodes,
                                           int n_states) {
  if (n_states < 2) throw InvalidInputError("need at least 2 states");
  LatentDataset out;
  out.vocab = n_states;
  out.tokens_per_latent = 1;
  out.stack_size = 1;
  for (const std::vector<int>& ep : episodes) {
    LatentTraj lt;
    for (int s : ep) {
      if (s < 0 || s >= n_states) throw InvalidInputError("state id outside [0, n_states)");
      lt.latents.push_back(state_latent(s));
    }
    out.trajs.push_back(std::move(lt));
  }
  return out;
}

void TrainConfig::validate() const {
  if (k_max < 1) throw ConfigError("train: k_max must be at least 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (steps < 0) throw ConfigError("train: steps must be non-negative");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("train: ema_decay in [0,1]");
  if (!(tab_lr0 > 0.0) || !(tab_tau > 0.0)) {
    throw ConfigError("train: tabular step sizes must be positive");
  }
  if (log_interval < 1) throw ConfigError("train: log_interval must be positive");
}

int TabularTable::ensure_row(const std::vector<int>& key) {
  auto it = row_of.find(key);
  if (it != row_of.end()) return it->second;
  int idx = static_cast<int>(row_keys.size());
  row_of.emplace(key, idx);
  row_keys.push_back(key);
  rows.emplace_back(support.size(), 0.0);
  return idx;
}

int TabularTable::ensure_col(const std::vector<int>& key) {
  auto it = col_of.find(key);
  if (it != col_of.end()) return it->second;
  int idx = static_cast<int>(support.size());
  col_of.emplace(key, idx);
  support.push_back(key);
  for (std::vector<double>& r : rows) r.push_back(0.0);
  return idx;
}

const std::vector<double>* TabularTable::row(const std::vector<int>& key) const {
  auto it = row_of.find(key);
  return it == row_of.end() ? nullptr : &rows[it->second];
}

OccupancyModel::OccupancyModel(OccupancyConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.backend == Backend::kNeural) {
    nn::GptConfig g;
    g.vocab = cfg_.vocab;
    g.block_size = 2 * cfg_.tokens_per_latent;
    g.n_layer = cfg_.n_layer;
    g.n_head = cfg_.n_head;
    g.n_embd = cfg_.n_embd;
    gpt_.emplace(g, seed);
  }
}

TabularTable& OccupancyModel::table() {
  if (cfg_.backend != Backend::kTabular) throw InternalError("not a tabular model");
  return table_;
}

const TabularTable& OccupancyModel::table() const {
  if (cfg_.backend != Backend::kTabular) throw InternalError("not a tabular model");
  return table_;
}

nn::Gpt& OccupancyModel::gpt() {
  if (!gpt_) throw InternalError("not a neural model");
  return *gpt_;
}

const nn::Gpt& OccupancyModel::gpt() const {
  if (!gpt_) throw InternalError("not a neural model");
  return *gpt_;
}

namespace {

void check_latent(const OccupancyConfig& cfg, const LatentState& z) {
  z.validate(cfg.vocab);
  if (static_cast<int>(z.seq.tokens.size()) != cfg.tokens_per_latent) {
    throw InvalidInputError("latent has " + std::to_string(z.seq.tokens.size()) +
                            " tokens, model expects " + std::to_string(cfg.tokens_per_latent));
  }
}

LatentState with_tokens(const LatentState& like, std::vector<int> tokens) {
  LatentState z;
  z.seq.tokens = std::move(tokens);
  z.seq.tokens_per_frame = like.seq.tokens_per_frame;
  z.stack_size = like.stack_size;
  return z;
}

int draw_from_logits(std::span<const double> logits, Rng& rng) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logits[i] - mx);
  return static_cast<int>(rng.categorical(w));
}

[[noreturn]] void throw_unseen(const std::vector<int>& tokens) {
  std::string s;
  for (int t : tokens) s += (s.empty() ? "" : " ") + std::to_string(t);
  throw UnseenConditioningError("latent [" + s + "] was never seen as conditioning during training");
}

}  // namespace

std::vector<LatentState> OccupancyModel::sample_future_batch(std::span<const LatentState> conds,
                                                             Rng& rng) {
  std::vector<LatentState> out;
  if (conds.empty()) return out;
  for (const LatentState& z : conds) check_latent(cfg_, z);
  out.reserve(conds.size());
  if (cfg_.backend == Backend::kTabular) {
    for (const LatentState& z : conds) {
      const std::vector<double>* row = table_.row(z.seq.tokens);
      if (!row) throw_unseen(z.seq.tokens);
      int col = static_cast<int>(rng.categorical(*row));
      out.push_back(with_tokens(z, table_.support[col]));
    }
    return out;
  }
  int M = static_cast<int>(conds.size());
  int n = cfg_.tokens_per_latent;
  std::vector<std::vector<int>> seqs(M);
  for (int m = 0; m < M; ++m) seqs[m] = conds[m].seq.tokens;
  for (int step = 0; step < n; ++step) {
    int T = n + step;
    std::vector<int> flat;
    flat.reserve(static_cast<std::size_t>(M) * T);
    for (const std::vector<int>& s : seqs) flat.insert(flat.end(), s.begin(), s.end());
    nn::Graph g(false);
    nn::TensorId logits = gpt_->forward(g, flat, M, T);
    std::span<const double> data = g.data(logits);
    for (int m = 0; m < M; ++m) {
      auto row = data.subspan((static_cast<std::size_t>(m) * T + T - 1) * cfg_.vocab, cfg_.vocab);
      seqs[m].push_back(draw_from_logits(row, rng));
    }
  }
  for (int m = 0; m < M; ++m) {
    out.push_back(
        with_tokens(conds[m], std::vector<int>(seqs[m].begin() + n, seqs[m].end())));
  }
  return out;
}

std::vector<LatentState> OccupancyModel::sample_future(const LatentState& z, int n, Rng& rng) {
  if (n < 0) throw InvalidInputError("sample_future: n must be non-negative");
  std::vector<LatentState> conds(n, z);
  return sample_future_batch(conds, rng);
}

double OccupancyModel::log_density(const LatentState& z_t, const LatentState& z_e) {
  check_latent(cfg_, z_t);
  check_latent(cfg_, z_e);
  if (cfg_.backend == Backend::kTabular) {
    const std::vector<double>* row = table_.row(z_t.seq.tokens);
    if (!row) throw_unseen(z_t.seq.tokens);
    auto it = table_.col_of.find(z_e.seq.tokens);
    double p = it == table_.col_of.end() ? 0.0 : (*row)[it->second];
    return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }
  int n = cfg_.tokens_per_latent;
  std::vector<int> seq = z_t.seq.tokens;
  seq.insert(seq.end(), z_e.seq.tokens.begin(), z_e.seq.tokens.end());
  nn::Graph g(false);
  nn::TensorId logits = gpt_->forward(g, seq, 1, 2 * n);
  std::span<const double> data = g.data(logits);
  double total = 0.0;
  for (int pos = n - 1; pos < 2 * n - 1; ++pos) {
    auto row = data.subspan(static_cast<std::size_t>(pos) * cfg_.vocab, cfg_.vocab);
    double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += row[seq[pos + 1]] - mx - std::log(z);
  }
  return total;
}

std::vector<LatentState> OccupancyModel::rollout(const LatentState& z0, int n_model_steps,
                                                 Rng& rng) {
  if (n_model_steps < 0) throw InvalidInputError("rollout: steps must be non-negative");
  std::vector<LatentState> out;
  LatentState cur = z0;
  for (int i = 0; i < n_model_steps; ++i) {
    cur = sample_future(cur, 1, rng)[0];
    out.push_back(cur);
  }
  return out;
}

void ema_update(OccupancyModel& target, const OccupancyModel& model, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidInputError("ema decay must lie in [0,1]");
  if (target.config() != model.config()) {
    throw InvalidInputError("ema: target and model configurations disagree");
  }
  if (model.config().backend == Backend::kNeural) {
    target.gpt().ema_from(model.gpt(), rho);
    return;
  }
  TabularTable& t = target.table();
  const TabularTable& m = model.table();
  // adopt columns in the model's order so row buffers stay aligned
  for (const std::vector<int>& key : m.support) t.ensure_col(key);
  if (t.support.size() != m.support.size()) {
    throw InternalError("ema: target table grew columns the model lacks");
  }
  for (std::size_t r = 0; r < m.row_keys.size(); ++r) {
    auto it = t.row_of.find(m.row_keys[r]);
    if (it == t.row_of.end()) {
      int idx = t.ensure_row(m.row_keys[r]);
      t.rows[idx] = m.rows[r];  // a brand-new row starts as an exact copy
      continue;
    }
    std::vector<double>& tr = t.rows[it->second];
    const std::vector<double>& mr = m.rows[r];
    for (std::size_t c = 0; c < tr.size(); ++c) tr[c] = rho * tr[c] + (1.0 - rho) * mr[c];
  }
}

namespace {

struct BranchDraw {
  int k = 1;          // offset for the k-step branch
  bool boot = false;  // true: bootstrap from the target model
};

// One uniform draw decides the branch: offset k with mass gamma^(k-1)*(1-gamma),
// remaining mass gamma^k_max bootstraps.
BranchDraw draw_branch(double gamma, int k_max, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    cum += std::pow(gamma, k - 1) * (1.0 - gamma);
    if (u < cum) return {k, false};
  }
  return {k_max, true};
}

const LatentState& future_at(const TrainingPair& pair, int k) {
  // offsets past the episode end fall back to the last in-episode latent
  std::size_t idx = std::min<std::size_t>(k, pair.futures.size()) - 1;
  return pair.futures[idx];
}

}  // namespace

TemporalTarget sample_temporal_target(const TrainingPair& pair, OccupancyModel& target,
                                      double gamma, int k_max, Rng& rng) {
  if (pair.futures.empty()) throw InvalidInputError("temporal target needs a future latent");
  if (k_max < 1) throw ConfigError("k_max must be at least 1");
  BranchDraw d = draw_branch(gamma, k_max, rng);
  TemporalTarget tt;
  if (!d.boot) {
    tt.tokens = future_at(pair, d.k);
    tt.branch = d.k == 1 ? TemporalTarget::Branch::kNextStep : TemporalTarget::Branch::kKStep;
    tt.k = d.k;
    return tt;
  }
  const LatentState& cond = future_at(pair, k_max);
  tt.branch = TemporalTarget::Branch::kBootstrap;
  tt.k = k_max;
  if (target.config().backend == Backend::kTabular && !target.table().row(cond.seq.tokens)) {
    // the target table has not adopted this row yet; degrade to the fallback
    tt.tokens = cond;
    return tt;
  }
  tt.tokens = target.sample_future(cond, 1, rng)[0];
  return tt;
}

TdTrainState::TdTrainState(const TrainConfig& cfg, double /*gamma*/)
    : opt([&cfg] {
        nn::AdamWConfig oc;
        oc.lr = cfg.lr;
        oc.weight_decay = cfg.weight_decay;
        oc.warmup_steps = cfg.warmup_steps;
        oc.total_steps = cfg.total_steps;
        return oc;
      }()) {}

namespace {

StepStats tabular_step(OccupancyModel& model, OccupancyModel& target,
                       std::span<const TrainingPair> batch, const TrainConfig& cfg,
                       TdTrainState& state, Rng& rng) {
  StepStats st;
  TabularTable& table = model.table();
  double gamma = model.config().gamma;
  double loss_sum = 0.0;
  for (const TrainingPair& pair : batch) {
    TemporalTarget tt = sample_temporal_target(pair, target, gamma, cfg.k_max, rng);
    switch (tt.branch) {
      case TemporalTarget::Branch::kNextStep: ++st.n_next; break;
      case TemporalTarget::Branch::kKStep: ++st.n_kstep; break;
      case TemporalTarget::Branch::kBootstrap: ++st.n_boot; break;
    }
    int r = table.ensure_row(pair.z.seq.tokens);
    int c = table.ensure_col(tt.tokens.seq.tokens);
    std::vector<double>& row = table.rows[r];
    double lr = cfg.tab_lr0 / (1.0 + static_cast<double>(state.tab_updates) / cfg.tab_tau);
    ++state.tab_updates;
    loss_sum += -std::log(std::max(row[c], 1e-12));
    for (double& v : row) v *= 1.0 - lr;
    row[c] += lr;
    double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= sum;
    st.lr = lr;
  }
  st.loss = loss_sum / static_cast<double>(batch.size());
  return st;
}

StepStats neural_step(OccupancyModel& model, OccupancyModel& target,
                      std::span<const TrainingPair> batch, const TrainConfig& cfg,
                      TdTrainState& state, Rng& rng) {
  StepStats st;
  double gamma = model.config().gamma;
  int B = static_cast<int>(batch.size());
  int n = model.config().tokens_per_latent;
  int S = 2 * n;

  // Branch draws first (one uniform each), then every bootstrap sample in one
  // lockstep batch from the target model.
  std::vector<const LatentState*> targets(B, nullptr);
  std::vector<int> boot_slots;
  std::vector<LatentState> boot_conds;
  for (int b = 0; b < B; ++b) {
    const TrainingPair& pair = batch[b];
    if (pair.futures.empty()) throw InvalidInputError("temporal target needs a future latent");
    BranchDraw d = draw_branch(gamma, cfg.k_max, rng);
    if (d.boot) {
      ++st.n_boot;
      boot_slots.push_back(b);
      boot_conds.push_back(future_at(pair, cfg.k_max));
    } else {
      d.k == 1 ? ++st.n_next : ++st.n_kstep;
      targets[b] = &future_at(pair, d.k);
    }
  }
  std::vector<LatentState> boot_samples = target.sample_future_batch(boot_conds, rng);
  for (std::size_t i = 0; i < boot_slots.size(); ++i) {
    targets[boot_slots[i]] = &boot_samples[i];
  }

  std::vector<int> tokens;
  std::vector<int> ce_targets;
  tokens.reserve(static_cast<std::size_t>(B) * S);
  ce_targets.reserve(static_cast<std::size_t>(B) * S);
  for (int b = 0; b < B; ++b) {
    const std::vector<int>& zc = batch[b].z.seq.tokens;
    const std::vector<int>& zt = targets[b]->seq.tokens;
    std::size_t base = tokens.size();
    tokens.insert(tokens.end(), zc.begin(), zc.end());
    tokens.insert(tokens.end(), zt.begin(), zt.end());
    for (int pos = 0; pos < S; ++pos) {
      bool active = pos + 1 < S &&
                    (cfg.loss_positions == LossPositions::kAllPositions || pos + 1 >= n);
      ce_targets.push_back(active ? tokens[base + pos + 1] : -1);
    }
  }
  nn::Graph g;
  nn::TensorId logits = model.gpt().forward(g, tokens, B, S);
  nn::TensorId loss = g.cross_entropy(logits, ce_targets);
  st.loss = g.scalar(loss);
  if (!std::isfinite(st.loss)) throw TrainingDivergenceError("occupancy loss is not finite");
  g.backward(loss);
  st.lr = state.opt.step(model.gpt().params());
  return st;
}

}  // namespace

StepStats td_train_step(OccupancyModel& model, OccupancyModel& target,
                        std::span<const TrainingPair> batch, const TrainConfig& cfg,
                        TdTrainState& state, Rng& rng) {
  if (batch.empty()) throw InvalidInputError("td_train_step: empty batch");
  if (target.config() != model.config()) {
    throw InvalidInputError("td_train_step: target and model configurations disagree");
  }
  for (const TrainingPair& pair : batch) {
    check_latent(model.config(), pair.z);
    for (const LatentState& f : pair.futures) check_latent(model.config(), f);
  }
  StepStats st = model.config().backend == Backend::kTabular
                     ? tabular_step(model, target, batch, cfg, state, rng)
                     : neural_step(model, target, batch, cfg, state, rng);
  ema_update(target, model, cfg.ema_decay);
  return st;
}

std::vector<TrainLogRow> train_occupancy(OccupancyModel& model, const LatentDataset& data,
                                         const TrainConfig& cfg, uint64_t seed,
                                         OccupancyModel* target_out) {
  cfg.validate();
  data.validate();
  if (data.vocab > model.config().vocab) {
    throw InvalidInputError("dataset vocab exceeds model vocab");
  }
  if (data.tokens_per_latent != model.config().tokens_per_latent) {
    throw InvalidInputError("dataset latent length disagrees with model");
  }
  struct Slot {
    int traj;
    int t;
  };
  std::vector<Slot> eligible;
  for (std::size_t i = 0; i < data.trajs.size(); ++i) {
    for (std::size_t t = 0; t + 1 < data.trajs[i].latents.size(); ++t) {
      eligible.push_back({static_cast<int>(i), static_cast<int>(t)});
    }
  }
  if (eligible.empty()) throw InvalidInputError("dataset has no transition pairs");

  OccupancyModel target = model;
  TdTrainState state(cfg, model.config().gamma);
  Rng rng(seed);
  std::vector<TrainLogRow> log;
  std::vector<TrainingPair> batch(cfg.batch_size);
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Slot& s = eligible[rng.uniform_int(eligible.size())];
      const std::vector<LatentState>& lat = data.trajs[s.traj].latents;
      TrainingPair& pair = batch[b];
      pair.z = lat[s.t];
      pair.futures.assign(
          lat.begin() + s.t + 1,
          lat.begin() + std::min<std::size_t>(s.t + 1 + cfg.k_max, lat.size()));
    }
    StepStats st = td_train_step(model, target, batch, cfg, state, rng);
    if (step % cfg.log_interval == 0 || step == cfg.steps) {
      double B = static_cast<double>(cfg.batch_size);
      log.push_back({step, st.loss, st.n_next / B, st.n_kstep / B, st.n_boot / B, st.lr});
    }
  }
  if (target_out) *target_out = std::move(target);
  return log;
}

std::string train_log_csv(std::span<const TrainLogRow> rows) {
  CsvWriter csv;
  csv.row({"step", "loss", "frac_next", "frac_kstep", "frac_boot", "lr"});
  for (const TrainLogRow& r : rows) {
    csv.row({std::to_string(r.step), format_double(r.loss), format_double(r.frac_next),
             format_double(r.frac_kstep), format_double(r.frac_boot), format_double(r.lr)});
  }
  return csv.str();
}

void save_occupancy(const std::string& path, const OccupancyModel& model) {
  const OccupancyConfig& c = model.config();
  if (c.backend == Backend::kNeural) {
    nlohmann::json hyper = {{"backend", "neural"},
                            {"gamma", c.gamma},
                            {"vocab", c.vocab},
                            {"tokens_per_latent", c.tokens_per_latent},
                            {"n_layer", c.n_layer},
                            {"n_head", c.n_head},
                            {"n_embd", c.n_embd}};
    nn::save_checkpoint(path, "occupancy", hyper, model.gpt().params());
    return;
  }
  const TabularTable& t = model.table();
  nlohmann::json header = {{"format", "voc-occupancy"},
                           {"version", 1},
                           {"backend", "tabular"},
                           {"gamma", c.gamma},
                           {"vocab", c.vocab},
                           {"tokens_per_latent", c.tokens_per_latent},
                           {"row_keys", t.row_keys},
                           {"support", t.support}};
  std::vector<double> flat;
  flat.reserve(t.row_keys.size() * t.support.size());
  for (const std::vector<double>& r : t.rows) flat.insert(flat.end(), r.begin(), r.end());
  write_json_blob(path, header.dump(), doubles_to_f64_le(flat));
}

OccupancyModel load_occupancy(const std::string& path) {
  auto [header_text, blob] = read_json_blob(path);
  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw IoError("occupancy model file has a malformed header: " + path);
  std::string format = header.value("format", "");
  try {
    if (format == "voc-checkpoint") {
      nlohmann::json hyper = nn::peek_checkpoint(path, "occupancy");
      OccupancyConfig cfg;
      cfg.backend = Backend::kNeural;
      cfg.gamma = hyper.at("gamma").get<double>();
      cfg.vocab = hyper.at("vocab").get<int>();
      cfg.tokens_per_latent = hyper.at("tokens_per_latent").get<int>();
      cfg.n_layer = hyper.at("n_layer").get<int>();
      cfg.n_head = hyper.at("n_head").get<int>();
      cfg.n_embd = hyper.at("n_embd").get<int>();
      OccupancyModel model(cfg, 0);
      nn::load_checkpoint(path, "occupancy", model.gpt().params());
      return model;
    }
    if (format != "voc-occupancy" || header.at("version").get<int>() != 1) {
      throw IoError("not an occupancy model file: " + path);
    }
    OccupancyConfig cfg;
    cfg.backend = Backend::kTabular;
    cfg.gamma = header.at("gamma").get<double>();
    cfg.vocab = header.at("vocab").get<int>();
    cfg.tokens_per_latent = header.at("tokens_per_latent").get<int>();
    OccupancyModel model(cfg, 0);
    TabularTable& t = model.table();
    for (const auto& key : header.at("row_keys")) {
      t.ensure_row(key.get<std::vector<int>>());
    }
    for (const auto& key : header.at("support")) {
      t.ensure_col(key.get<std::vector<int>>());
    }
    std::vector<double> flat = f64_le_to_doubles(blob);
    if (flat.size() != t.row_keys.size() * t.support.size()) {
      throw IoError("occupancy table blob size does not match header in " + path);
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(r * t.support.size()),
                flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * t.support.size()),
                t.rows[r].begin());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("occupancy model header missing fields in " + path + ": " + e.what());
  }
}

}  // namespace voc
