#include "cegan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cegan/error.hpp"

namespace cegan {
namespace {

double smoothed(double v, double eps) { return (v + eps) / (1.0 + kNumEmotions * eps); }

}  // namespace

double kl_divergence(const EmotionDistribution& p, const EmotionDistribution& q, double eps) {
  double sum = 0.0;
  for (int i = 0; i < kNumEmotions; ++i) {
    const double ps = smoothed(p[i], eps);
    const double qs = smoothed(q[i], eps);
    sum += ps * (std::log(ps) - std::log(qs));
  }
  // Rounding can leave a tiny negative value for p ~ q.
  return std::max(sum, 0.0);
}

double skl_divergence(const EmotionDistribution& p, const EmotionDistribution& q, double eps) {
  return kl_divergence(p, q, eps) + kl_divergence(q, p, eps);
}

double ssd(const EmotionDistribution& p, const EmotionDistribution& q) {
  double sum = 0.0;
  for (int i = 0; i < kNumEmotions; ++i) sum += (p[i] - q[i]) * (p[i] - q[i]);
  return sum;
}

double bhattacharyya(const EmotionDistribution& p, const EmotionDistribution& q) {
  double sum = 0.0;
  for (int i = 0; i < kNumEmotions; ++i) sum += std::sqrt(p[i] * q[i]);
  return std::min(sum, 1.0);
}

double canberra(const EmotionDistribution& p, const EmotionDistribution& q) {
  double sum = 0.0;
  for (int i = 0; i < kNumEmotions; ++i) {
    const double denom = p[i] + q[i];
    if (denom > 0.0) sum += std::abs(p[i] - q[i]) / denom;
  }
  return sum;
}

double chebyshev(const EmotionDistribution& p, const EmotionDistribution& q) {
  double m = 0.0;
  for (int i = 0; i < kNumEmotions; ++i) m = std::max(m, std::abs(p[i] - q[i]));
  return m;
}

double cosine_similarity(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("cosine_similarity: size mismatch");
  double dot = 0.0, np = 0.0, nq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    dot += p[i] * q[i];
    np += p[i] * p[i];
    nq += q[i] * q[i];
  }
  if (np == 0.0 || nq == 0.0) throw ConfigError("cosine_similarity: zero vector");
  return dot / (std::sqrt(np) * std::sqrt(nq));
}

double cosine_similarity(const EmotionDistribution& p, const EmotionDistribution& q) {
  return cosine_similarity(std::span<const double>(p.probs()), std::span<const double>(q.probs()));
}

ClassAccuracy classification_accuracy(std::span<const EmotionCategory> predictions,
                                      std::span<const EmotionCategory> labels) {
  if (predictions.empty()) throw ConfigError("classification_accuracy: empty input");
  if (predictions.size() != labels.size()) {
    throw ConfigError("classification_accuracy: " + std::to_string(predictions.size()) +
                      " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  std::array<std::size_t, kNumEmotions> correct{}, support{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i].index();
    ++support[c];
    if (predictions[i] == labels[i]) ++correct[c];
  }
  ClassAccuracy out;
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    if (support[c] == 0) {
      out.per_class[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.per_class[c] = static_cast<double>(correct[c]) / static_cast<double>(support[c]);
    sum += out.per_class[c];
    ++present;
  }
  out.average = sum / present;
  return out;
}

MetricsReport evaluate_distributions(std::span<const EmotionDistribution> preds,
                                     std::span<const EmotionDistribution> labels) {
  if (preds.empty()) throw ConfigError("evaluate_distributions: empty input");
  if (preds.size() != labels.size()) {
    throw ConfigError("evaluate_distributions: " + std::to_string(preds.size()) +
                      " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  double s_ssd = 0, s_kl = 0, s_skl = 0, s_bc = 0, s_can = 0, s_cheb = 0, s_cos = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    // KL is taken as KL(label || prediction), matching the task loss.
    const auto& p = labels[i];
    const auto& q = preds[i];
    s_ssd += ssd(p, q);
    s_kl += kl_divergence(p, q);
    s_skl += skl_divergence(p, q);
    s_bc += bhattacharyya(p, q);
    s_can += canberra(p, q);
    s_cheb += chebyshev(p, q);
    s_cos += cosine_similarity(p, q);
  }
  const double n = static_cast<double>(preds.size());
  MetricsReport r;
  r.ssd = s_ssd / n;
  r.kl = s_kl / n;
  r.skl = s_skl / n;
  r.bc = s_bc / n;
  r.canberra = s_can / n;
  r.chebyshev = s_cheb / n;
  r.cosine = s_cos / n;
  r.samples = preds.size();
  return r;
}

MetricsReport evaluate_classification(std::span<const EmotionCategory> predictions,
                                      std::span<const EmotionCategory> labels) {
  const auto acc = classification_accuracy(predictions, labels);
  MetricsReport r;
  r.per_class_accuracy = acc.per_class;
  r.average_accuracy = acc.average;
  r.samples = predictions.size();
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("ssd", ssd);
  put("kl", kl);
  put("skl", skl);
  put("bc", bc);
  put("canberra", canberra);
  put("chebyshev", chebyshev);
  put("cosine", cosine);
  if (per_class_accuracy) {
    for (int c = 0; c < kNumEmotions; ++c) {
      const double v = (*per_class_accuracy)[c];
      const std::string key = "acc_" + std::string(emotion_name(c));
      if (std::isnan(v)) {
        j[key] = nullptr;
      } else {
        j[key] = v;
      }
    }
  }
  put("average_accuracy", average_accuracy);
  j["samples"] = samples;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("metrics report must be a JSON object");
  MetricsReport r;
  auto get = [&](const char* key) -> std::optional<double> {
    if (j.contains(key) && j[key].is_number()) return j[key].get<double>();
    return std::nullopt;
  };
  r.ssd = get("ssd");
  r.kl = get("kl");
  r.skl = get("skl");
  r.bc = get("bc");
  r.canberra = get("canberra");
  r.chebyshev = get("chebyshev");
  r.cosine = get("cosine");
  r.average_accuracy = get("average_accuracy");
  bool any_class = false;
  std::array<double, kNumEmotions> pc{};
  for (int c = 0; c < kNumEmotions; ++c) {
    const std::string key = "acc_" + std::string(emotion_name(c));
    pc[c] = std::numeric_limits<double>::quiet_NaN();
    if (j.contains(key)) {
      any_class = true;
      if (j[key].is_number()) pc[c] = j[key].get<double>();
    }
  }
  if (any_class) r.per_class_accuracy = pc;
  if (j.contains("samples") && j["samples"].is_number_unsigned()) r.samples = j["samples"].get<std::size_t>();
  return r;
}

}  // namespace cegan
