#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "cegan/data.hpp"

namespace cegan {

/// Photometric appearance change applied to target-domain images.
struct TargetShift {
  double hue_rotation_deg = 180.0;
  double contrast = -0.9;  ///< x -> 0.5 + contrast * (x - 0.5); negative values invert
  double brightness = 0.0;
  double gamma = 1.0;
  double blur_sigma = 0.6;

  static TargetShift identity() { return {0.0, 1.0, 0.0, 1.0, 0.0}; }
  bool is_identity() const;
};

/// Two-domain benchmark. Both domains share the label rule; only appearance differs.
struct SyntheticDomainSpec {
  Task task = Task::kDistribution;
  int image_size = 32;
  int samples_per_domain = 2000;
  double train_fraction = 0.80;
  double val_fraction = 0.05;  ///< remainder goes to test
  int votes_per_image = 20;
  TargetShift target_shift;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticDomainSpec from_json(const nlohmann::json& j);
};

/// Generative parameters of one synthetic image.
struct SyntheticParams {
  int shape = 0;      ///< 0 disk, 1 square, 2 triangle, 3 cross
  double extent = 0;  ///< half-size in pixels
  double cx = 0, cy = 0;
  std::array<double, 3> foreground{};
  std::array<double, 3> background{};
};

/// Emotion category encoded by shape and size band: 2 * shape + (extent > threshold).
EmotionCategory label_rule(const SyntheticParams& p, int image_size);
/// Vote profile: the two size classes of the shape share most votes according
/// to a smooth function of the extent, the rest goes to the wheel neighbours
/// of the dominant class.
VoteRecord vote_rule(const SyntheticParams& p, int image_size, int votes_per_image);

struct SyntheticDomain {
  DatasetManifest manifest;
  Dataset dataset;
  std::vector<SyntheticParams> params;
};

struct SyntheticPair {
  SyntheticDomain source;
  SyntheticDomain target;
};

/// Deterministic in `spec`. Image refs are "synthetic/<domain>/<index>.png".
SyntheticPair generate_synthetic_pair(const SyntheticDomainSpec& spec);

/// Renders the source-style image for `p` (3 x S x S, [0, 1]).
torch::Tensor render_synthetic(const SyntheticParams& p, int image_size);
/// Applies the photometric shift to a B x 3 x H x W batch.
torch::Tensor apply_target_shift(const torch::Tensor& images, const TargetShift& shift);

/// Writes both domains' images and manifests (source.jsonl, target.jsonl) under `dir`.
void write_synthetic_pair(const SyntheticPair& pair, const std::filesystem::path& dir);

}  // namespace cegan
