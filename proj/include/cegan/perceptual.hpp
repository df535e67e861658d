#pragma once

#include <vector>

#include <torch/torch.h>

namespace cegan {

/// Multi-scale SSIM settings. Images are expected in [0, dynamic_range].
struct MsSsimConfig {
  int scales = 5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int window_size = 11;
  double window_sigma = 1.5;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Smallest admissible image side: 2^(scales-1) * window_size.
  int min_image_side() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  double c3() const { return c2() / 2.0; }

  /// Default config truncated to `scales` scales; the leading default weights
  /// are renormalized to sum to 1.
  static MsSsimConfig truncated(int scales, int window_size);
};

/// How the MS-SSIM similarity enters the mixed cycle loss.
enum class MsSsimTerm { kOneMinus, kRaw };

struct MixConfig {
  double alpha = 0.5;
  MsSsimTerm term = MsSsimTerm::kOneMinus;

  void validate() const;
};

/// Per-pixel luminance, contrast and structure comparison maps (each B x C x H x W).
struct SsimMaps {
  torch::Tensor luminance;
  torch::Tensor contrast;
  torch::Tensor structure;
};

/// Local statistics use a normalized Gaussian window with symmetric
/// boundary padding, so maps have the input's spatial size.
SsimMaps ssim_components(const torch::Tensor& x, const torch::Tensor& y, const MsSsimConfig& cfg);

/// MS-SSIM per batch element (shape B). Between scales images are 2x average
/// pooled. Scales 1..M-1 contribute mean(c*s)^w_j, scale M contributes
/// mean(l*c*s)^w_M.
torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const MsSsimConfig& cfg);

/// Mean absolute difference over all elements.
torch::Tensor l1_cycle_loss(const torch::Tensor& original, const torch::Tensor& reconstructed);

/// alpha * [(1 - MS-SSIM)(src) + (1 - MS-SSIM)(tgt)] + (1 - alpha) * [L1(src) + L1(tgt)],
/// MS-SSIM averaged over the batch.
torch::Tensor mixed_cycle_loss(const torch::Tensor& src, const torch::Tensor& src_recon,
                               const torch::Tensor& tgt, const torch::Tensor& tgt_recon,
                               const MixConfig& mix, const MsSsimConfig& cfg);

namespace detail {
/// Pads the last two dims by `pad` with symmetric (edge-including) reflection.
torch::Tensor symmetric_pad(const torch::Tensor& x, int pad);
/// 1-D normalized Gaussian of the given size.
torch::Tensor gaussian_window(int size, double sigma, torch::TensorOptions opts);
}  // namespace detail

}  // namespace cegan
