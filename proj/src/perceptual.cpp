#include "cegan/perceptual.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "cegan/error.hpp"

namespace cegan {
namespace {

constexpr double kMinScaleSimilarity = 1e-6;

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ConfigError(std::string(what) + ": shape mismatch");
  }
}

void check_image_batch(const torch::Tensor& x, const char* what) {
  if (x.dim() != 4) {
    throw ConfigError(std::string(what) + ": expected a B x C x H x W tensor");
  }
}

struct LocalStats {
  torch::Tensor mu_x, mu_y, var_x, var_y, cov;
};

torch::Tensor gaussian_filter(const torch::Tensor& x, const torch::Tensor& window) {
  const auto channels = x.size(1);
  const auto size = window.size(0);
  const int pad = static_cast<int>(size / 2);
  auto wv = window.view({1, 1, size, 1}).expand({channels, 1, size, 1}).contiguous();
  auto wh = window.view({1, 1, 1, size}).expand({channels, 1, 1, size}).contiguous();
  auto padded = detail::symmetric_pad(x, pad);
  auto out = torch::nn::functional::conv2d(padded, wv, torch::nn::functional::Conv2dFuncOptions().groups(channels));
  return torch::nn::functional::conv2d(out, wh, torch::nn::functional::Conv2dFuncOptions().groups(channels));
}

LocalStats local_stats(const torch::Tensor& x, const torch::Tensor& y, const MsSsimConfig& cfg) {
  auto window = detail::gaussian_window(cfg.window_size, cfg.window_sigma, x.options());
  LocalStats s;
  s.mu_x = gaussian_filter(x, window);
  s.mu_y = gaussian_filter(y, window);
  s.var_x = gaussian_filter(x * x, window) - s.mu_x * s.mu_x;
  s.var_y = gaussian_filter(y * y, window) - s.mu_y * s.mu_y;
  s.cov = gaussian_filter(x * y, window) - s.mu_x * s.mu_y;
  return s;
}

torch::Tensor luminance_map(const LocalStats& s, double c1) {
  return (2.0 * s.mu_x * s.mu_y + c1) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1);
}

// c * s with C3 = C2 / 2 collapses to a sqrt-free expression; this is the
// form used inside MS-SSIM so the gradient stays finite at zero variance.
torch::Tensor contrast_structure_map(const LocalStats& s, double c2) {
  return (2.0 * s.cov + c2) / (s.var_x + s.var_y + c2);
}

}  // namespace

void MsSsimConfig::validate() const {
  if (scales < 1) throw ConfigError("ms-ssim: scales must be >= 1");
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("ms-ssim: window_size must be odd");
  if (window_sigma <= 0) throw ConfigError("ms-ssim: window_sigma must be > 0");
  if (dynamic_range <= 0) throw ConfigError("ms-ssim: dynamic_range must be > 0");
  if (k1 <= 0 || k2 <= 0) throw ConfigError("ms-ssim: k1 and k2 must be > 0");
  if (static_cast<int>(scale_weights.size()) != scales) {
    throw ConfigError("ms-ssim: expected " + std::to_string(scales) + " scale weights, got " +
                      std::to_string(scale_weights.size()));
  }
  const double sum = std::accumulate(scale_weights.begin(), scale_weights.end(), 0.0);
  // The canonical five weights sum to 1.0001.
  if (std::abs(sum - 1.0) > 1e-3) throw ConfigError("ms-ssim: scale weights must sum to 1");
}

int MsSsimConfig::min_image_side() const { return (1 << (scales - 1)) * window_size; }

MsSsimConfig MsSsimConfig::truncated(int scales, int window_size) {
  MsSsimConfig cfg;
  if (scales < 1 || scales > static_cast<int>(cfg.scale_weights.size())) {
    throw ConfigError("ms-ssim: truncated() supports 1..5 scales");
  }
  cfg.scale_weights.resize(static_cast<std::size_t>(scales));
  const double sum = std::accumulate(cfg.scale_weights.begin(), cfg.scale_weights.end(), 0.0);
  for (auto& w : cfg.scale_weights) w /= sum;
  cfg.scales = scales;
  cfg.window_size = window_size;
  return cfg;
}

void MixConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("mix alpha must lie in [0, 1]");
}

namespace detail {

torch::Tensor symmetric_pad(const torch::Tensor& x, int pad) {
  if (pad == 0) return x;
  auto index_for = [pad](int64_t n) {
    if (pad > n) throw ConfigError("symmetric_pad: padding exceeds image side");
    std::vector<int64_t> idx;
    idx.reserve(static_cast<std::size_t>(n + 2 * pad));
    for (int64_t i = -pad; i < n + pad; ++i) {
      if (i < 0) {
        idx.push_back(-i - 1);
      } else if (i >= n) {
        idx.push_back(2 * n - i - 1);
      } else {
        idx.push_back(i);
      }
    }
    return torch::tensor(idx, torch::kLong);
  };
  auto out = x.index_select(-2, index_for(x.size(-2)));
  return out.index_select(-1, index_for(x.size(-1)));
}

torch::Tensor gaussian_window(int size, double sigma, torch::TensorOptions opts) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return torch::tensor(w, torch::kDouble).to(opts.dtype());
}

}  // namespace detail

SsimMaps ssim_components(const torch::Tensor& x, const torch::Tensor& y, const MsSsimConfig& cfg) {
  check_image_batch(x, "ssim_components");
  check_same_shape(x, y, "ssim_components");
  cfg.validate();
  const auto s = local_stats(x, y, cfg);
  auto sigma_x = s.var_x.clamp_min(0).sqrt();
  auto sigma_y = s.var_y.clamp_min(0).sqrt();
  const double c2 = cfg.c2();
  const double c3 = cfg.c3();
  SsimMaps maps;
  maps.luminance = luminance_map(s, cfg.c1());
  maps.contrast = (2.0 * sigma_x * sigma_y + c2) / (s.var_x + s.var_y + c2);
  maps.structure = (s.cov + c3) / (sigma_x * sigma_y + c3);
  return maps;
}

torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const MsSsimConfig& cfg) {
  check_image_batch(x, "ms_ssim");
  check_same_shape(x, y, "ms_ssim");
  cfg.validate();
  const int min_side = cfg.min_image_side();
  if (x.size(2) < min_side || x.size(3) < min_side) {
    throw ConfigError("ms_ssim: images must be at least " + std::to_string(min_side) + "x" +
                      std::to_string(min_side) + " for " + std::to_string(cfg.scales) +
                      " scales with window " + std::to_string(cfg.window_size) + ", got " +
                      std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
  auto a = x;
  auto b = y;
  torch::Tensor result;
  for (int j = 0; j < cfg.scales; ++j) {
    const auto stats = local_stats(a, b, cfg);
    auto cs = contrast_structure_map(stats, cfg.c2());
    const bool coarsest = (j == cfg.scales - 1);
    auto term_map = coarsest ? luminance_map(stats, cfg.c1()) * cs : cs;
    auto term = term_map.mean({1, 2, 3}).clamp_min(kMinScaleSimilarity).pow(cfg.scale_weights[j]);
    result = result.defined() ? result * term : term;
    if (!coarsest) {
      a = torch::avg_pool2d(a, 2);
      b = torch::avg_pool2d(b, 2);
    }
  }
  return result;
}

torch::Tensor l1_cycle_loss(const torch::Tensor& original, const torch::Tensor& reconstructed) {
  check_same_shape(original, reconstructed, "l1_cycle_loss");
  return (original - reconstructed).abs().mean();
}

torch::Tensor mixed_cycle_loss(const torch::Tensor& src, const torch::Tensor& src_recon,
                               const torch::Tensor& tgt, const torch::Tensor& tgt_recon,
                               const MixConfig& mix, const MsSsimConfig& cfg) {
  mix.validate();
  check_same_shape(src, src_recon, "mixed_cycle_loss(source)");
  check_same_shape(tgt, tgt_recon, "mixed_cycle_loss(target)");
  const auto l1 = l1_cycle_loss(src, src_recon) + l1_cycle_loss(tgt, tgt_recon);
  if (mix.alpha == 0.0) return l1;
  auto sim_src = ms_ssim(src_recon, src, cfg).mean();
  auto sim_tgt = ms_ssim(tgt_recon, tgt, cfg).mean();
  torch::Tensor structural = mix.term == MsSsimTerm::kOneMinus
                                 ? (1.0 - sim_src) + (1.0 - sim_tgt)
                                 : sim_src + sim_tgt;
  if (mix.alpha == 1.0) return structural;
  return mix.alpha * structural + (1.0 - mix.alpha) * l1;
}

}  // namespace cegan
