#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voc/frame.hpp"

namespace voc {

class InvDynEncoder;

// Frame tokenization: each frame is cut into a grid of patches, every patch is
// mapped to a feature vector by one of three feature maps, and features are
// quantized against a k-means codebook. A latent state is the token sequence
// of a short stack of consecutive frames.

enum class FeatureMap { kRawPixels, kFrozenRandom, kInverseDynamics };

FeatureMap parse_feature_map(const std::string& name);
std::string feature_map_name(FeatureMap m);

struct PatchGrid {
  int rows = 2;
  int cols = 2;
  int count() const { return rows * cols; }
  bool operator==(const PatchGrid&) const = default;
};

struct TokenSeq {
  std::vector<int> tokens;
  int tokens_per_frame = 0;

  int n_frames() const;
  void validate(int vocab) const;
  bool operator==(const TokenSeq&) const = default;
};

struct LatentState {
  TokenSeq seq;
  int stack_size = 0;

  void validate(int vocab) const;
  bool operator==(const LatentState&) const = default;
};

/// Dimension of a frozen-random patch feature.
inline constexpr int kFrozenFeatDim = 16;

struct Codebook {
  int k = 0;  // vocabulary size
  int d = 0;  // per-patch feature dimension
  PatchGrid patch_grid;
  FeatureMap feature_map = FeatureMap::kRawPixels;
  // Frame shape the codebook was fit on; decode needs it to reassemble frames.
  int frame_h = 0;
  int frame_w = 0;
  int channels = 1;
  std::vector<double> centroids;  // k x d row-major, every value f32-representable

  void validate() const;
  std::span<const double> centroid(int i) const;
};

/// Per-patch feature vectors of one frame, patch-major: L vectors of dimension
/// d, concatenated. raw-pixels: patch pixels scaled to [0,1]. frozen-random: a
/// fixed seeded projection of the scaled patch. inverse-dynamics: the encoder's
/// frame feature split into L equal chunks (enc required).
std::vector<double> frame_patch_features(FeatureMap map, PatchGrid grid, const Frame& f,
                                         const InvDynEncoder* enc = nullptr);

/// Patch feature dimension the map produces for the given frame shape.
int patch_feature_dim(FeatureMap map, PatchGrid grid, int h, int w, int c,
                      const InvDynEncoder* enc = nullptr);

/// k-means (k-means++ init, at most 100 Lloyd iterations or centroid shift
/// below 1e-6) over all patch features of the corpus. Throws
/// DegenerateCorpusError when the corpus has fewer than `k` distinct patch
/// feature vectors. Centroids are rounded to f32 so a saved codebook encodes
/// identically to the fitted one. Deterministic given seed.
Codebook fit_codebook(std::span<const Frame> frames, FeatureMap map, int k, PatchGrid grid,
                      uint64_t seed, const InvDynEncoder* enc = nullptr);

/// Tokenizes a window of consecutive frames, oldest first. Each patch maps to
/// its nearest centroid in squared Euclidean distance, ties toward the lowest
/// index.
LatentState encode(const Codebook& cb, std::span<const Frame> window,
                   const InvDynEncoder* enc = nullptr);

struct Reconstruction {
  bool visual = false;            // frames carry pixels only for raw-pixels codebooks
  std::vector<Frame> frames;      // empty when not visual
  std::vector<std::vector<double>> features;  // per frame: L*d centroid features
};

Reconstruction decode(const Codebook& cb, const LatentState& z);

/// Mean squared per-dimension distance from patch features to their nearest
/// centroids over the whole corpus.
double quantization_mse(const Codebook& cb, std::span<const Frame> frames,
                        const InvDynEncoder* enc = nullptr);

/// Pre-quantization feature vector of one frame (dimension L*d), the reward
/// model's input space.
std::vector<double> feature_reward_vector(const Codebook& cb, const Frame& f,
                                          const InvDynEncoder* enc = nullptr);

void save_codebook(const std::string& path, const Codebook& cb);
Codebook load_codebook(const std::string& path);

}  // namespace voc
