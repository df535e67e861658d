#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cegan {

/// Number of Mikels emotion categories.
inline constexpr int kNumEmotions = 8;

/// One of Mikels' eight emotions. Indices follow the alphabetical order of
/// the names: amusement=0, anger=1, awe=2, contentment=3, disgust=4,
/// excitement=5, fear=6, sadness=7.
class EmotionCategory {
 public:
  /// Throws ConfigError when `index` is outside [0, 8).
  explicit EmotionCategory(int index);
  /// Throws ConfigError on an unknown name.
  static EmotionCategory from_name(std::string_view name);
  static std::array<EmotionCategory, kNumEmotions> all();

  int index() const { return index_; }
  std::string_view name() const;

  friend bool operator==(EmotionCategory, EmotionCategory) = default;

 private:
  int index_;
};

std::string_view emotion_name(int index);

/// Circular arrangement of the eight categories. Distances are measured in
/// steps around this circle.
class MikelsWheel {
 public:
  /// The shipped default arrangement: positive emotions on one half of the
  /// circle, negative on the other:
  /// amusement, contentment, awe, excitement, fear, sadness, disgust, anger.
  MikelsWheel();
  /// Throws ConfigError unless `order` is a permutation of the 8 categories.
  explicit MikelsWheel(std::span<const EmotionCategory> order);
  static MikelsWheel from_names(std::span<const std::string> names);

  const std::array<EmotionCategory, kNumEmotions>& order() const { return order_; }
  int position(EmotionCategory c) const { return position_[c.index()]; }

 private:
  std::array<EmotionCategory, kNumEmotions> order_;
  std::array<int, kNumEmotions> position_{};
};

/// min(|i-j|, 8-|i-j|) over positions on the wheel; in [0, 4].
int wheel_steps(const MikelsWheel& wheel, EmotionCategory a, EmotionCategory b);
/// 1 + wheel_steps; in [1, 5].
double mikels_distance(const MikelsWheel& wheel, EmotionCategory a, EmotionCategory b);
/// 1 - 1/mikels_distance; in [0, 0.8].
double mikels_dissimilarity(const MikelsWheel& wheel, EmotionCategory a, EmotionCategory b);

/// Probability vector over the eight categories.
class EmotionDistribution {
 public:
  /// Validates non-negativity and unit sum (absolute tolerance 1e-6).
  explicit EmotionDistribution(std::array<double, kNumEmotions> probs);
  static EmotionDistribution from_span(std::span<const double> probs);
  static EmotionDistribution uniform();
  static EmotionDistribution one_hot(EmotionCategory c);

  const std::array<double, kNumEmotions>& probs() const { return probs_; }
  double operator[](int i) const { return probs_[static_cast<std::size_t>(i)]; }

 private:
  std::array<double, kNumEmotions> probs_;
};

/// Raw annotator votes per category.
struct VoteRecord {
  std::array<std::int64_t, kNumEmotions> counts{};

  std::int64_t total() const;
};

/// counts[i] / sum(counts). Throws DataError for an all-zero record.
EmotionDistribution normalize_votes(const VoteRecord& record);

/// Category with the largest probability; ties go to the lowest index.
EmotionCategory argmax_emotion(std::span<const double> probs);
inline EmotionCategory argmax_emotion(const EmotionDistribution& d) {
  return argmax_emotion(std::span<const double>(d.probs()));
}

}  // namespace cegan
