#include "voc/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "json.hpp"
#include "voc/error.hpp"
#include "voc/io.hpp"
#include "voc/nn/checkpoint.hpp"
#include "voc/nn/optim.hpp"

namespace voc {

RewardModel::RewardModel(int in_dim, int hidden, uint64_t seed)
    : in_dim_(in_dim), hidden_(hidden) {
  if (in_dim < 1) throw ConfigError("reward model: in_dim must be positive");
  if (hidden < 0) throw ConfigError("reward model: hidden must be non-negative");
  Rng rng(seed);
  if (hidden == 0) {
    w1_ = nn::Parameter("w", {in_dim, 1});
    b1_ = nn::Parameter("b", {1});
    w1_.init_normal(rng, 0.02);
  } else {
    w1_ = nn::Parameter("w1", {in_dim, hidden});
    b1_ = nn::Parameter("b1", {hidden});
    w2_ = nn::Parameter("w2", {hidden, 1});
    b2_ = nn::Parameter("b2", {1});
    w1_.init_normal(rng, 0.02);
    w2_.init_normal(rng, 0.02);
  }
}

namespace {

double gelu_scalar(double v) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
}

// matches Graph::matmul's k-ascending sum so both forwards agree bitwise
std::vector<double> linear(std::span<const double> x, const nn::Parameter& w,
                           const nn::Parameter& b, bool apply_gelu) {
  int in = w.shape[0];
  int out = w.shape[1];
  std::vector<double> y(out);
  for (int j = 0; j < out; ++j) {
    double s = 0.0;
    for (int i = 0; i < in; ++i) s += x[i] * w.data[i * out + j];
    s += b.data[j];
    y[j] = apply_gelu ? gelu_scalar(s) : s;
  }
  return y;
}

}  // namespace

double RewardModel::predict(std::span<const double> feat) const {
  if (feat.size() != static_cast<std::size_t>(in_dim_)) {
    throw InvalidInputError("reward model: feature vector has " + std::to_string(feat.size()) +
                            " dims, model expects " + std::to_string(in_dim_));
  }
  if (hidden_ == 0) return linear(feat, w1_, b1_, false)[0];
  std::vector<double> h = linear(feat, w1_, b1_, true);
  return linear(h, w2_, b2_, false)[0];
}

nn::TensorId RewardModel::predict_batch(nn::Graph& g, nn::TensorId x) {
  if (hidden_ == 0) return g.add(g.matmul(x, g.param(w1_)), g.param(b1_));
  nn::TensorId h = g.gelu(g.add(g.matmul(x, g.param(w1_)), g.param(b1_)));
  return g.add(g.matmul(h, g.param(w2_)), g.param(b2_));
}

std::vector<nn::Parameter*> RewardModel::params() {
  if (hidden_ == 0) return {&w1_, &b1_};
  return {&w1_, &b1_, &w2_, &b2_};
}

std::vector<const nn::Parameter*> RewardModel::params() const {
  if (hidden_ == 0) return {&w1_, &b1_};
  return {&w1_, &b1_, &w2_, &b2_};
}

namespace {

struct RewardSample {
  std::vector<double> x;
  double y = 0.0;
};

// feature windows ending at frame t+1, labelled with r_t
std::vector<RewardSample> reward_samples(const Dataset& ds, const Codebook& cb, int stack_size,
                                         const InvDynEncoder* enc) {
  std::vector<RewardSample> out;
  for (const Trajectory& tr : ds.trajectories) {
    int len = tr.length();
    for (int t = std::max(0, stack_size - 2); t + 1 < len; ++t) {
      RewardSample s;
      for (int w = t + 1 - (stack_size - 1); w <= t + 1; ++w) {
        std::vector<double> f = feature_reward_vector(cb, tr.frames[w], enc);
        s.x.insert(s.x.end(), f.begin(), f.end());
      }
      s.y = tr.rewards[t];
      out.push_back(std::move(s));
    }
  }
  return out;
}

double mse_over(const RewardModel& rm, const std::vector<RewardSample>& samples,
                std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i : idx) {
    double d = rm.predict(samples[i].x) - samples[i].y;
    sum += d * d;
  }
  return sum / static_cast<double>(idx.size());
}

}  // namespace

RewardTrainResult train_reward(const Dataset& ds, const Codebook& cb, int stack_size, int epochs,
                               uint64_t seed, RewardTrainOpts opts, const InvDynEncoder* enc) {
  ds.validate();
  if (stack_size < 1) throw ConfigError("reward: stack_size must be positive");
  if (epochs < 1) throw ConfigError("reward: epochs must be positive");
  if (!(opts.val_frac >= 0.0 && opts.val_frac < 1.0)) {
    throw ConfigError("reward: val_frac must lie in [0,1)");
  }
  std::vector<RewardSample> samples = reward_samples(ds, cb, stack_size, enc);
  if (samples.empty()) {
    throw UnsupportedDatasetError("dataset yields no reward-labelled windows to regress on");
  }
  int in_dim = static_cast<int>(samples[0].x.size());

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(Rng::mix_seed(seed, 0));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(opts.val_frac * static_cast<double>(order.size()));
  std::vector<std::size_t> val_idx(order.end() - n_val, order.end());
  std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
  if (train_idx.empty()) throw UnsupportedDatasetError("reward: empty training split");

  RewardTrainResult res{RewardModel(in_dim, opts.hidden, Rng::mix_seed(seed, 1))};
  int64_t n_batches =
      static_cast<int64_t>((train_idx.size() + opts.batch_size - 1) / opts.batch_size);
  nn::AdamWConfig oc;
  oc.lr = opts.lr;
  oc.weight_decay = opts.weight_decay;
  oc.total_steps = opts.decay_lr ? epochs * n_batches : 0;
  oc.warmup_steps = static_cast<int>(std::min<int64_t>(20, oc.total_steps / 10));
  nn::AdamW opt(oc);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng erng = Rng::substream(seed, 2 + epoch);
    std::vector<std::size_t> sched = train_idx;
    erng.shuffle(sched);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < sched.size(); start += opts.batch_size) {
      std::size_t stop = std::min(sched.size(), start + opts.batch_size);
      int B = static_cast<int>(stop - start);
      std::vector<double> xs;
      std::vector<double> ys;
      xs.reserve(static_cast<std::size_t>(B) * in_dim);
      for (std::size_t i = start; i < stop; ++i) {
        const RewardSample& s = samples[sched[i]];
        xs.insert(xs.end(), s.x.begin(), s.x.end());
        ys.push_back(s.y);
      }
      nn::Graph g;
      nn::TensorId x = g.input({B, in_dim}, std::move(xs));
      nn::TensorId loss = g.mse(res.model.predict_batch(g, x), ys);
      double l = g.scalar(loss);
      if (!std::isfinite(l)) throw TrainingDivergenceError("reward regression loss is not finite");
      g.backward(loss);
      opt.step(res.model.params());
      epoch_loss += l * B;
      seen += B;
    }
    res.epoch_train_mse.push_back(epoch_loss / static_cast<double>(seen));
  }
  res.train_mse = mse_over(res.model, samples, train_idx);
  res.val_mse = n_val == 0 ? res.train_mse : mse_over(res.model, samples, val_idx);
  return res;
}

void save_reward(const std::string& path, const RewardModel& rm) {
  nlohmann::json hyper = {{"in_dim", rm.in_dim()}, {"hidden", rm.hidden()}};
  nn::save_checkpoint(path, "reward", hyper, rm.params());
}

RewardModel load_reward(const std::string& path) {
  nlohmann::json hyper = nn::peek_checkpoint(path, "reward");
  try {
    RewardModel rm(hyper.at("in_dim").get<int>(), hyper.at("hidden").get<int>(), 0);
    nn::load_checkpoint(path, "reward", rm.params());
    return rm;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("reward checkpoint header missing fields in " + path + ": " + e.what());
  }
}

LatentReward reward_from_model(const RewardModel& rm, const Codebook& cb) {
  return [&rm, cb](const LatentState& z) {
    Reconstruction rec = decode(cb, z);
    std::vector<double> feat;
    for (const std::vector<double>& f : rec.features) feat.insert(feat.end(), f.begin(), f.end());
    return rm.predict(feat);
  };
}

LatentReward reward_from_table(std::vector<double> r) {
  return [r = std::move(r)](const LatentState& z) {
    if (z.seq.tokens.size() != 1) {
      throw InvalidInputError("table rewards expect single-token state latents");
    }
    int s = z.seq.tokens[0];
    if (s < 0 || s >= static_cast<int>(r.size())) {
      throw InvalidInputError("state id outside the reward table");
    }
    return r[s];
  };
}

ValueEstimate value_by_sampling(OccupancyModel& model, const LatentReward& r,
                                const LatentState& z, int n_samples, Rng& rng) {
  if (n_samples < 1) throw InvalidInputError("value_by_sampling: need at least one sample");
  ValueEstimate est;
  est.method = ValueMethod::kSampling;
  est.n_used = n_samples;
  std::vector<LatentState> futures = model.sample_future(z, n_samples, rng);
  double sum = 0.0;
  est.per_sample.reserve(futures.size());
  for (const LatentState& ze : futures) {
    double rv = r(ze);
    est.per_sample.push_back(rv);
    sum += rv;
  }
  double gamma = model.config().gamma;
  est.mean = sum / static_cast<double>(n_samples) / (1.0 - gamma);
  return est;
}

ValueEstimate value_by_density(OccupancyModel& model, const LatentReward& r,
                               const LatentState& z0, std::span<const LatentState> traj, int T,
                               DensityOpts opts) {
  if (T < 0) throw InvalidInputError("value_by_density: negative horizon");
  if (static_cast<int>(traj.size()) < T) {
    throw InvalidInputError("value_by_density: validation trajectory shorter than horizon " +
                            std::to_string(T));
  }
  ValueEstimate est;
  est.method = ValueMethod::kDensity;
  est.n_used = T;
  std::vector<std::vector<int>> seen;
  double sum = 0.0;
  for (int t = 0; t < T; ++t) {
    const LatentState& ze = traj[t];
    if (opts.dedupe) {
      if (std::find(seen.begin(), seen.end(), ze.seq.tokens) != seen.end()) {
        est.per_sample.push_back(0.0);
        continue;
      }
      seen.push_back(ze.seq.tokens);
    }
    double ld = model.log_density(z0, ze);
    if (!std::isfinite(ld)) {
      ++est.n_zero_density;
      est.per_sample.push_back(0.0);
      continue;
    }
    double term = std::exp(ld) * r(ze);
    est.per_sample.push_back(term);
    sum += term;
  }
  if (opts.scale_by_inv_one_minus_gamma) sum /= 1.0 - model.config().gamma;
  est.mean = sum;
  return est;
}

ErrorSummary return_estimation_error(std::span<const double> estimates,
                                     std::span<const double> oracle_values) {
  if (estimates.size() != oracle_values.size() || estimates.empty()) {
    throw InvalidInputError("return_estimation_error: inputs must align and be non-empty");
  }
  ErrorSummary s;
  s.abs_errors.reserve(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    double e = std::abs(estimates[i] - oracle_values[i]);
    s.abs_errors.push_back(e);
    s.mean_abs_error += e;
    s.max_abs_error = std::max(s.max_abs_error, e);
  }
  s.mean_abs_error /= static_cast<double>(estimates.size());
  return s;
}

std::string error_table_csv(std::span<const int> state_ids, std::span<const double> estimates,
                            std::span<const double> oracle_values) {
  if (state_ids.size() != estimates.size() || estimates.size() != oracle_values.size()) {
    throw InvalidInputError("error_table_csv: column lengths disagree");
  }
  CsvWriter csv;
  csv.row({"state_id", "estimate", "oracle", "abs_error"});
  for (std::size_t i = 0; i < state_ids.size(); ++i) {
    csv.row({std::to_string(state_ids[i]), format_double(estimates[i]),
             format_double(oracle_values[i]),
             format_double(std::abs(estimates[i] - oracle_values[i]))});
  }
  return csv.str();
}

std::string return_distribution_csv(std::span<const int> state_ids,
                                    const std::vector<std::vector<double>>& per_state_samples) {
  if (state_ids.size() != per_state_samples.size()) {
    throw InvalidInputError("return_distribution_csv: column lengths disagree");
  }
  CsvWriter csv;
  csv.row({"state_id", "sample_index", "reward"});
  for (std::size_t i = 0; i < state_ids.size(); ++i) {
    for (std::size_t j = 0; j < per_state_samples[i].size(); ++j) {
      csv.row({std::to_string(state_ids[i]), std::to_string(j),
               format_double(per_state_samples[i][j])});
    }
  }
  return csv.str();
}

namespace {

// average ranks over ties
std::vector<double> ranks_of(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidInputError("spearman: need two equal-length series of length >= 2");
  }
  std::vector<double> ra = ranks_of(a);
  std::vector<double> rb = ranks_of(b);
  double n = static_cast<double>(a.size());
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) {
    throw InvalidInputError("spearman: rank correlation undefined for a constant series");
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace voc
