#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cegan/emotion.hpp"

namespace cegan {

/// Additive smoothing constant applied to both arguments of KL/SKL:
/// p' = (p + eps) / (1 + L*eps).
inline constexpr double kKlEpsilon = 1e-8;

double kl_divergence(const EmotionDistribution& p, const EmotionDistribution& q,
                     double eps = kKlEpsilon);
double skl_divergence(const EmotionDistribution& p, const EmotionDistribution& q,
                      double eps = kKlEpsilon);
double ssd(const EmotionDistribution& p, const EmotionDistribution& q);
double bhattacharyya(const EmotionDistribution& p, const EmotionDistribution& q);
/// 0/0 terms contribute 0.
double canberra(const EmotionDistribution& p, const EmotionDistribution& q);
double chebyshev(const EmotionDistribution& p, const EmotionDistribution& q);
double cosine_similarity(const EmotionDistribution& p, const EmotionDistribution& q);
/// Raw-vector overload; throws ConfigError on a zero vector or size mismatch.
double cosine_similarity(std::span<const double> p, std::span<const double> q);

struct ClassAccuracy {
  /// NaN for classes with no ground-truth support.
  std::array<double, kNumEmotions> per_class{};
  /// Unweighted mean over classes with support.
  double average = 0.0;
};

ClassAccuracy classification_accuracy(std::span<const EmotionCategory> predictions,
                                      std::span<const EmotionCategory> labels);

struct MetricsReport {
  // Distribution metrics, mean over sample pairs. Unset in classification mode.
  std::optional<double> ssd, kl, skl, bc, canberra, chebyshev, cosine;
  // Classification metrics. Unset in distribution mode.
  std::optional<std::array<double, kNumEmotions>> per_class_accuracy;
  std::optional<double> average_accuracy;
  std::size_t samples = 0;

  /// Flat key/value object; per-class accuracies appear as `acc_<name>`.
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

MetricsReport evaluate_distributions(std::span<const EmotionDistribution> preds,
                                     std::span<const EmotionDistribution> labels);

MetricsReport evaluate_classification(std::span<const EmotionCategory> predictions,
                                      std::span<const EmotionCategory> labels);

}  // namespace cegan
