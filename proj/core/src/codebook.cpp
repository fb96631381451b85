#include "voc/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "voc/error.hpp"
#include "voc/invdyn.hpp"
#include "voc/io.hpp"
#include "voc/rng.hpp"

namespace voc {

FeatureMap parse_feature_map(const std::string& name) {
  if (name == "raw-pixels") return FeatureMap::kRawPixels;
  if (name == "frozen-random") return FeatureMap::kFrozenRandom;
  if (name == "inverse-dynamics") return FeatureMap::kInverseDynamics;
  throw ConfigError("unknown feature map \"" + name +
                    "\" (expected raw-pixels, frozen-random, or inverse-dynamics)");
}

std::string feature_map_name(FeatureMap m) {
  switch (m) {
    case FeatureMap::kRawPixels: return "raw-pixels";
    case FeatureMap::kFrozenRandom: return "frozen-random";
    case FeatureMap::kInverseDynamics: return "inverse-dynamics";
  }
  throw InternalError("unhandled feature map");
}

int TokenSeq::n_frames() const {
  return tokens_per_frame > 0 ? static_cast<int>(tokens.size()) / tokens_per_frame : 0;
}

void TokenSeq::validate(int vocab) const {
  if (tokens_per_frame < 1) throw InvalidInputError("token seq: tokens_per_frame must be positive");
  if (tokens.size() % tokens_per_frame != 0) {
    throw InvalidInputError("token seq: length " + std::to_string(tokens.size()) +
                            " is not a multiple of " + std::to_string(tokens_per_frame));
  }
  for (int t : tokens) {
    if (t < 0 || t >= vocab) {
      throw InvalidInputError("token " + std::to_string(t) + " outside vocabulary of " +
                              std::to_string(vocab));
    }
  }
}

void LatentState::validate(int vocab) const {
  seq.validate(vocab);
  if (stack_size < 1) throw InvalidInputError("latent state: stack_size must be positive");
  if (seq.n_frames() != stack_size) {
    throw InvalidInputError("latent state: " + std::to_string(seq.n_frames()) +
                            " frames of tokens for stack_size " + std::to_string(stack_size));
  }
}

void Codebook::validate() const {
  if (k < 2) throw ConfigError("codebook: need at least 2 centroids");
  if (d < 1) throw ConfigError("codebook: feature dimension must be positive");
  if (patch_grid.rows < 1 || patch_grid.cols < 1) {
    throw ConfigError("codebook: patch grid must be positive");
  }
  if (frame_h < 1 || frame_w < 1 || channels < 1) {
    throw ConfigError("codebook: frame shape must be positive");
  }
  if (frame_h % patch_grid.rows != 0 || frame_w % patch_grid.cols != 0) {
    throw ConfigError("codebook: frame " + std::to_string(frame_h) + "x" +
                      std::to_string(frame_w) + " not divisible by patch grid " +
                      std::to_string(patch_grid.rows) + "x" + std::to_string(patch_grid.cols));
  }
  if (centroids.size() != static_cast<std::size_t>(k) * d) {
    throw ConfigError("codebook: centroid buffer size does not match k*d");
  }
  for (double v : centroids) {
    if (!std::isfinite(v)) throw ConfigError("codebook: non-finite centroid value");
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      if (std::equal(centroids.begin() + static_cast<std::ptrdiff_t>(a) * d,
                     centroids.begin() + static_cast<std::ptrdiff_t>(a + 1) * d,
                     centroids.begin() + static_cast<std::ptrdiff_t>(b) * d)) {
        throw ConfigError("codebook: centroids " + std::to_string(a) + " and " +
                          std::to_string(b) + " are identical");
      }
    }
  }
}

std::span<const double> Codebook::centroid(int i) const {
  return std::span<const double>(centroids).subspan(static_cast<std::size_t>(i) * d, d);
}

namespace {

constexpr uint64_t kFrozenProjSeed = 0x66726f7a656e7631ull;  // "frozenv1"

void check_tiles(PatchGrid grid, const Frame& f) {
  if (grid.rows < 1 || grid.cols < 1) throw ConfigError("patch grid must be positive");
  if (f.h % grid.rows != 0 || f.w % grid.cols != 0) {
    throw InvalidInputError("frame " + std::to_string(f.h) + "x" + std::to_string(f.w) +
                            " not divisible by patch grid " + std::to_string(grid.rows) + "x" +
                            std::to_string(grid.cols));
  }
}

// Scaled pixels of patch (pr, pc), row-major within the patch.
void append_patch_pixels(const Frame& f, PatchGrid grid, int pr, int pc,
                         std::vector<double>& out) {
  int ph = f.h / grid.rows;
  int pw = f.w / grid.cols;
  for (int y = pr * ph; y < (pr + 1) * ph; ++y) {
    for (int x = pc * pw; x < (pc + 1) * pw; ++x) {
      for (int ch = 0; ch < f.c; ++ch) {
        out.push_back(f.px[(static_cast<std::size_t>(y) * f.w + x) * f.c + ch] / 255.0);
      }
    }
  }
}

// Fixed projection for the frozen-random map, a pure function of the patch
// pixel count and output dimension.
std::vector<double> frozen_projection(int in_dim, int out_dim) {
  Rng rng(Rng::mix_seed(Rng::mix_seed(kFrozenProjSeed, static_cast<uint64_t>(in_dim)),
                        static_cast<uint64_t>(out_dim)));
  std::vector<double> w(static_cast<std::size_t>(out_dim) * in_dim);
  double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& v : w) v = rng.normal() * scale;
  return w;
}

}  // namespace

int patch_feature_dim(FeatureMap map, PatchGrid grid, int h, int w, int c,
                      const InvDynEncoder* enc) {
  if (grid.rows < 1 || grid.cols < 1) throw ConfigError("patch grid must be positive");
  if (h % grid.rows != 0 || w % grid.cols != 0) {
    throw InvalidInputError("frame " + std::to_string(h) + "x" + std::to_string(w) +
                            " not divisible by patch grid");
  }
  switch (map) {
    case FeatureMap::kRawPixels: return (h / grid.rows) * (w / grid.cols) * c;
    case FeatureMap::kFrozenRandom: return kFrozenFeatDim;
    case FeatureMap::kInverseDynamics: {
      if (!enc) throw ConfigError("inverse-dynamics feature map needs a trained encoder");
      int feat = enc->config().feat_dim;
      if (feat % grid.count() != 0) {
        throw ConfigError("encoder feature dimension " + std::to_string(feat) +
                          " not divisible into " + std::to_string(grid.count()) + " patch chunks");
      }
      return feat / grid.count();
    }
  }
  throw InternalError("unhandled feature map");
}

std::vector<double> frame_patch_features(FeatureMap map, PatchGrid grid, const Frame& f,
                                         const InvDynEncoder* enc) {
  check_tiles(grid, f);
  std::vector<double> out;
  switch (map) {
    case FeatureMap::kRawPixels: {
      out.reserve(f.size());
      for (int pr = 0; pr < grid.rows; ++pr) {
        for (int pc = 0; pc < grid.cols; ++pc) append_patch_pixels(f, grid, pr, pc, out);
      }
      return out;
    }
    case FeatureMap::kFrozenRandom: {
      int in_dim = (f.h / grid.rows) * (f.w / grid.cols) * f.c;
      std::vector<double> proj = frozen_projection(in_dim, kFrozenFeatDim);
      std::vector<double> patch;
      patch.reserve(in_dim);
      out.reserve(static_cast<std::size_t>(grid.count()) * kFrozenFeatDim);
      for (int pr = 0; pr < grid.rows; ++pr) {
        for (int pc = 0; pc < grid.cols; ++pc) {
          patch.clear();
          append_patch_pixels(f, grid, pr, pc, patch);
          for (int j = 0; j < kFrozenFeatDim; ++j) {
            double s = 0.0;
            for (int i = 0; i < in_dim; ++i) {
              s += proj[static_cast<std::size_t>(j) * in_dim + i] * patch[i];
            }
            out.push_back(s);
          }
        }
      }
      return out;
    }
    case FeatureMap::kInverseDynamics: {
      // chunked frame feature: patch i holds dims [i*d, (i+1)*d)
      int d = patch_feature_dim(map, grid, f.h, f.w, f.c, enc);
      (void)d;
      return enc->features(f);
    }
  }
  throw InternalError("unhandled feature map");
}

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

std::span<const double> point(std::span<const double> pts, int d, int i) {
  return pts.subspan(static_cast<std::size_t>(i) * d, d);
}

int count_distinct(std::span<const double> pts, int n, int d) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](int a, int b) {
    auto pa = point(pts, d, a);
    auto pb = point(pts, d, b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  };
  std::sort(idx.begin(), idx.end(), less);
  int distinct = n > 0 ? 1 : 0;
  for (int i = 1; i < n; ++i) {
    if (less(idx[i - 1], idx[i])) ++distinct;
  }
  return distinct;
}

std::vector<double> kmeans(std::span<const double> pts, int n, int d, int k, Rng& rng) {
  std::vector<double> cent(static_cast<std::size_t>(k) * d);
  auto set_centroid = [&](int j, std::span<const double> p) {
    std::copy(p.begin(), p.end(), cent.begin() + static_cast<std::ptrdiff_t>(j) * d);
  };
  auto centroid = [&](int j) {
    return std::span<const double>(cent).subspan(static_cast<std::size_t>(j) * d, d);
  };

  // k-means++ seeding: next centroid drawn with probability proportional to
  // squared distance from the chosen set.
  set_centroid(0, point(pts, d, static_cast<int>(rng.uniform_int(n))));
  std::vector<double> best_d2(n);
  for (int i = 0; i < n; ++i) best_d2[i] = dist2(point(pts, d, i), centroid(0));
  for (int j = 1; j < k; ++j) {
    int pick = static_cast<int>(rng.categorical(best_d2));
    if (best_d2[pick] == 0.0) {
      // landed on an already-covered point; take the farthest one instead
      pick = static_cast<int>(std::max_element(best_d2.begin(), best_d2.end()) - best_d2.begin());
    }
    set_centroid(j, point(pts, d, pick));
    for (int i = 0; i < n; ++i) {
      best_d2[i] = std::min(best_d2[i], dist2(point(pts, d, i), centroid(j)));
    }
  }

  std::vector<int> assign(n);
  std::vector<double> sums(cent.size());
  std::vector<int> counts(k);
  for (int iter = 0; iter < 100; ++iter) {
    for (int i = 0; i < n; ++i) {
      auto p = point(pts, d, i);
      int best = 0;
      double bd = dist2(p, centroid(0));
      for (int j = 1; j < k; ++j) {
        double dj = dist2(p, centroid(j));
        if (dj < bd) {
          bd = dj;
          best = j;
        }
      }
      assign[i] = best;
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) ++counts[assign[i]];
    // an emptied cluster takes over the point currently worst-served
    std::vector<bool> stolen(n, false);
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      int far = -1;
      double fd = -1.0;
      for (int i = 0; i < n; ++i) {
        if (stolen[i] || counts[assign[i]] <= 1) continue;
        double di = dist2(point(pts, d, i), centroid(assign[i]));
        if (di > fd) {
          fd = di;
          far = i;
        }
      }
      if (far < 0) throw InternalError("k-means could not repopulate an empty cluster");
      stolen[far] = true;
      --counts[assign[far]];
      assign[far] = j;
      counts[j] = 1;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      auto p = point(pts, d, i);
      double* dst = sums.data() + static_cast<std::ptrdiff_t>(assign[i]) * d;
      for (int c = 0; c < d; ++c) dst[c] += p[c];
    }
    double shift = 0.0;
    for (int j = 0; j < k; ++j) {
      double sj = 0.0;
      for (int c = 0; c < d; ++c) {
        double nv = sums[static_cast<std::size_t>(j) * d + c] / counts[j];
        double diff = nv - cent[static_cast<std::size_t>(j) * d + c];
        sj += diff * diff;
        cent[static_cast<std::size_t>(j) * d + c] = nv;
      }
      shift = std::max(shift, std::sqrt(sj));
    }
    if (shift < 1e-6) break;
  }
  return cent;
}

void corpus_features(std::span<const Frame> frames, FeatureMap map, PatchGrid grid,
                     const InvDynEncoder* enc, std::vector<double>& pts, int& n, int& d) {
  if (frames.empty()) throw InvalidInputError("empty frame corpus");
  for (const Frame& f : frames) {
    if (!f.same_shape(frames[0])) throw InvalidInputError("corpus frames differ in shape");
  }
  d = patch_feature_dim(map, grid, frames[0].h, frames[0].w, frames[0].c, enc);
  n = static_cast<int>(frames.size()) * grid.count();
  pts.clear();
  pts.reserve(static_cast<std::size_t>(n) * d);
  for (const Frame& f : frames) {
    std::vector<double> ff = frame_patch_features(map, grid, f, enc);
    pts.insert(pts.end(), ff.begin(), ff.end());
  }
}

}  // namespace

Codebook fit_codebook(std::span<const Frame> frames, FeatureMap map, int k, PatchGrid grid,
                      uint64_t seed, const InvDynEncoder* enc) {
  if (k < 2) throw ConfigError("codebook size must be at least 2");
  std::vector<double> pts;
  int n = 0, d = 0;
  corpus_features(frames, map, grid, enc, pts, n, d);
  int distinct = count_distinct(pts, n, d);
  if (distinct < k) {
    throw DegenerateCorpusError("corpus has " + std::to_string(distinct) +
                                " distinct patch features, fewer than codebook size " +
                                std::to_string(k));
  }
  Rng rng(seed);
  Codebook cb;
  cb.k = k;
  cb.d = d;
  cb.patch_grid = grid;
  cb.feature_map = map;
  cb.frame_h = frames[0].h;
  cb.frame_w = frames[0].w;
  cb.channels = frames[0].c;
  cb.centroids = kmeans(pts, n, d, k, rng);
  // round to f32 so save/load cannot move any token assignment
  for (double& v : cb.centroids) v = static_cast<double>(static_cast<float>(v));
  cb.validate();
  return cb;
}

namespace {

int nearest_centroid(const Codebook& cb, std::span<const double> feat) {
  int best = 0;
  double bd = dist2(feat, cb.centroid(0));
  for (int j = 1; j < cb.k; ++j) {
    double dj = dist2(feat, cb.centroid(j));
    if (dj < bd) {
      bd = dj;
      best = j;
    }
  }
  return best;
}

void check_frame_matches(const Codebook& cb, const Frame& f) {
  if (f.h != cb.frame_h || f.w != cb.frame_w || f.c != cb.channels) {
    throw InvalidInputError("frame " + std::to_string(f.h) + "x" + std::to_string(f.w) + "x" +
                            std::to_string(f.c) + " does not match codebook frame " +
                            std::to_string(cb.frame_h) + "x" + std::to_string(cb.frame_w) + "x" +
                            std::to_string(cb.channels));
  }
}

}  // namespace

LatentState encode(const Codebook& cb, std::span<const Frame> window, const InvDynEncoder* enc) {
  if (window.empty()) throw InvalidInputError("encode: empty frame window");
  LatentState z;
  z.stack_size = static_cast<int>(window.size());
  z.seq.tokens_per_frame = cb.patch_grid.count();
  for (const Frame& f : window) {
    check_frame_matches(cb, f);
    std::vector<double> feats = frame_patch_features(cb.feature_map, cb.patch_grid, f, enc);
    int d = static_cast<int>(feats.size()) / cb.patch_grid.count();
    if (d != cb.d) {
      throw ConfigError("feature dimension " + std::to_string(d) +
                        " does not match codebook dimension " + std::to_string(cb.d));
    }
    for (int p = 0; p < cb.patch_grid.count(); ++p) {
      auto feat = std::span<const double>(feats).subspan(static_cast<std::size_t>(p) * d, d);
      z.seq.tokens.push_back(nearest_centroid(cb, feat));
    }
  }
  return z;
}

Reconstruction decode(const Codebook& cb, const LatentState& z) {
  z.validate(cb.k);
  Reconstruction rec;
  rec.visual = cb.feature_map == FeatureMap::kRawPixels;
  int L = cb.patch_grid.count();
  if (z.seq.tokens_per_frame != L) {
    throw InvalidInputError("latent has " + std::to_string(z.seq.tokens_per_frame) +
                            " tokens per frame, codebook expects " + std::to_string(L));
  }
  int ph = cb.frame_h / cb.patch_grid.rows;
  int pw = cb.frame_w / cb.patch_grid.cols;
  for (int fi = 0; fi < z.stack_size; ++fi) {
    std::vector<double> feats;
    feats.reserve(static_cast<std::size_t>(L) * cb.d);
    for (int p = 0; p < L; ++p) {
      auto c = cb.centroid(z.seq.tokens[static_cast<std::size_t>(fi) * L + p]);
      feats.insert(feats.end(), c.begin(), c.end());
    }
    if (rec.visual) {
      Frame f;
      f.h = cb.frame_h;
      f.w = cb.frame_w;
      f.c = cb.channels;
      f.px.assign(static_cast<std::size_t>(f.h) * f.w * f.c, 0);
      for (int p = 0; p < L; ++p) {
        int pr = p / cb.patch_grid.cols;
        int pc = p % cb.patch_grid.cols;
        const double* src = feats.data() + static_cast<std::ptrdiff_t>(p) * cb.d;
        int i = 0;
        for (int y = pr * ph; y < (pr + 1) * ph; ++y) {
          for (int x = pc * pw; x < (pc + 1) * pw; ++x) {
            for (int ch = 0; ch < f.c; ++ch, ++i) {
              double v = std::round(src[i] * 255.0);
              f.px[(static_cast<std::size_t>(y) * f.w + x) * f.c + ch] =
                  static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
            }
          }
        }
      }
      rec.frames.push_back(std::move(f));
    }
    rec.features.push_back(std::move(feats));
  }
  return rec;
}

double quantization_mse(const Codebook& cb, std::span<const Frame> frames,
                        const InvDynEncoder* enc) {
  std::vector<double> pts;
  int n = 0, d = 0;
  corpus_features(frames, cb.feature_map, cb.patch_grid, enc, pts, n, d);
  if (d != cb.d) {
    throw ConfigError("feature dimension " + std::to_string(d) +
                      " does not match codebook dimension " + std::to_string(cb.d));
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    auto p = point(pts, d, i);
    total += dist2(p, cb.centroid(nearest_centroid(cb, p)));
  }
  return total / (static_cast<double>(n) * d);
}

std::vector<double> feature_reward_vector(const Codebook& cb, const Frame& f,
                                          const InvDynEncoder* enc) {
  check_frame_matches(cb, f);
  std::vector<double> feats = frame_patch_features(cb.feature_map, cb.patch_grid, f, enc);
  if (feats.size() != static_cast<std::size_t>(cb.patch_grid.count()) * cb.d) {
    throw ConfigError("feature dimension does not match codebook dimension");
  }
  return feats;
}

void save_codebook(const std::string& path, const Codebook& cb) {
  cb.validate();
  nlohmann::json header = {
      {"K", cb.k},
      {"D", cb.d},
      {"patch_grid", {cb.patch_grid.rows, cb.patch_grid.cols}},
      {"feature_map", feature_map_name(cb.feature_map)},
      {"frame", {cb.frame_h, cb.frame_w, cb.channels}},
      {"version", 1},
  };
  write_json_blob(path, header.dump(), doubles_to_f32_le(cb.centroids));
}

Codebook load_codebook(const std::string& path) {
  auto [header_text, blob] = read_json_blob(path);
  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw IoError("codebook file has a malformed header: " + path);
  try {
    if (header.at("version").get<int>() != 1) {
      throw IoError("unsupported codebook version in " + path);
    }
    Codebook cb;
    cb.k = header.at("K").get<int>();
    cb.d = header.at("D").get<int>();
    cb.patch_grid.rows = header.at("patch_grid").at(0).get<int>();
    cb.patch_grid.cols = header.at("patch_grid").at(1).get<int>();
    cb.feature_map = parse_feature_map(header.at("feature_map").get<std::string>());
    cb.frame_h = header.at("frame").at(0).get<int>();
    cb.frame_w = header.at("frame").at(1).get<int>();
    cb.channels = header.at("frame").at(2).get<int>();
    if (blob.size() != static_cast<std::size_t>(cb.k) * cb.d * 4) {
      throw IoError("codebook blob size does not match header in " + path);
    }
    cb.centroids = f32_le_to_doubles(blob);
    cb.validate();
    return cb;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("codebook header missing fields in " + path + ": " + e.what());
  }
}

}  // namespace voc
