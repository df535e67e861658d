#include "cegan/emotion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "cegan/error.hpp"

namespace cegan {
namespace {

constexpr std::array<std::string_view, kNumEmotions> kNames = {
    "amusement", "anger", "awe", "contentment", "disgust", "excitement", "fear", "sadness"};

// amusement, contentment, awe, excitement | fear, sadness, disgust, anger
constexpr std::array<int, kNumEmotions> kDefaultWheel = {0, 3, 2, 5, 6, 7, 4, 1};

template <typename F>
std::array<EmotionCategory, kNumEmotions> make_categories(F&& index_of) {
  return [&]<std::size_t... I>(std::index_sequence<I...>) {
    return std::array<EmotionCategory, kNumEmotions>{EmotionCategory(index_of(I))...};
  }(std::make_index_sequence<kNumEmotions>{});
}

}  // namespace

EmotionCategory::EmotionCategory(int index) : index_(index) {
  if (index < 0 || index >= kNumEmotions) {
    throw ConfigError("emotion index out of range: " + std::to_string(index));
  }
}

EmotionCategory EmotionCategory::from_name(std::string_view name) {
  auto it = std::find(kNames.begin(), kNames.end(), name);
  if (it == kNames.end()) {
    throw ConfigError("unknown emotion category: " + std::string(name));
  }
  return EmotionCategory(static_cast<int>(it - kNames.begin()));
}

std::array<EmotionCategory, kNumEmotions> EmotionCategory::all() {
  return make_categories([](std::size_t i) { return static_cast<int>(i); });
}

std::string_view EmotionCategory::name() const { return kNames[static_cast<std::size_t>(index_)]; }

std::string_view emotion_name(int index) { return EmotionCategory(index).name(); }

MikelsWheel::MikelsWheel()
    : order_(make_categories([](std::size_t i) { return kDefaultWheel[i]; })) {
  for (int p = 0; p < kNumEmotions; ++p) position_[order_[p].index()] = p;
}

MikelsWheel::MikelsWheel(std::span<const EmotionCategory> order)
    : order_(EmotionCategory::all()) {
  if (order.size() != kNumEmotions) {
    throw ConfigError("wheel order must list exactly 8 categories, got " +
                      std::to_string(order.size()));
  }
  std::array<bool, kNumEmotions> seen{};
  for (std::size_t p = 0; p < order.size(); ++p) {
    const int idx = order[p].index();
    if (seen[idx]) {
      throw ConfigError("wheel order repeats category " + std::string(order[p].name()));
    }
    seen[idx] = true;
    order_[p] = order[p];
    position_[idx] = static_cast<int>(p);
  }
}

MikelsWheel MikelsWheel::from_names(std::span<const std::string> names) {
  std::vector<EmotionCategory> cats;
  cats.reserve(names.size());
  for (const auto& n : names) cats.push_back(EmotionCategory::from_name(n));
  return MikelsWheel(cats);
}

int wheel_steps(const MikelsWheel& wheel, EmotionCategory a, EmotionCategory b) {
  const int diff = std::abs(wheel.position(a) - wheel.position(b));
  return std::min(diff, kNumEmotions - diff);
}

double mikels_distance(const MikelsWheel& wheel, EmotionCategory a, EmotionCategory b) {
  return 1.0 + wheel_steps(wheel, a, b);
}

double mikels_dissimilarity(const MikelsWheel& wheel, EmotionCategory a, EmotionCategory b) {
  return 1.0 - 1.0 / mikels_distance(wheel, a, b);
}

EmotionDistribution::EmotionDistribution(std::array<double, kNumEmotions> probs)
    : probs_(probs) {
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ConfigError("emotion distribution has a negative or non-finite entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ConfigError("emotion distribution does not sum to 1 (sum=" + std::to_string(sum) + ")");
  }
}

EmotionDistribution EmotionDistribution::from_span(std::span<const double> probs) {
  if (probs.size() != kNumEmotions) {
    throw ConfigError("emotion distribution needs 8 entries, got " + std::to_string(probs.size()));
  }
  std::array<double, kNumEmotions> a{};
  std::copy(probs.begin(), probs.end(), a.begin());
  return EmotionDistribution(a);
}

EmotionDistribution EmotionDistribution::uniform() {
  std::array<double, kNumEmotions> a{};
  a.fill(1.0 / kNumEmotions);
  return EmotionDistribution(a);
}

EmotionDistribution EmotionDistribution::one_hot(EmotionCategory c) {
  std::array<double, kNumEmotions> a{};
  a[static_cast<std::size_t>(c.index())] = 1.0;
  return EmotionDistribution(a);
}

std::int64_t VoteRecord::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

EmotionDistribution normalize_votes(const VoteRecord& record) {
  for (auto c : record.counts) {
    if (c < 0) throw DataError("vote record has a negative count");
  }
  const std::int64_t total = record.total();
  if (total < 1) throw DataError("vote record has zero total votes");
  std::array<double, kNumEmotions> p{};
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = static_cast<double>(record.counts[i]) / static_cast<double>(total);
  }
  return EmotionDistribution(p);
}

EmotionCategory argmax_emotion(std::span<const double> probs) {
  if (probs.size() != kNumEmotions) {
    throw ConfigError("argmax_emotion expects 8 entries, got " + std::to_string(probs.size()));
  }
  // max_element returns the first maximum, which is the lowest index.
  return EmotionCategory(static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
}

}  // namespace cegan
