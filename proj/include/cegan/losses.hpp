#pragma once

#include <torch/torch.h>

#include "cegan/emotion.hpp"
#include "cegan/metrics.hpp"

namespace cegan {

/// Learning task: emotion distribution learning or dominant emotion classification.
enum class Task { kDistribution, kClassification };

struct LossWeights {
  double beta = 10.0;   ///< mixed cycle-consistency weight
  double gamma = 50.0;  ///< semantic consistency weight; 0 disables it

  void validate() const;
};

/// Distance between the semantics of a source image and its translation.
struct SemanticDistance {
  enum class Kind { kSkl, kMikels };
  Kind kind = Kind::kSkl;
  MikelsWheel wheel;

  /// Mikels mode is only meaningful for dominant emotion classification.
  void validate(Task task) const;
};

/// Class indices of the feature discriminator's two-way output.
inline constexpr int64_t kAdaptedDomain = 0;
inline constexpr int64_t kTargetDomain = 1;

/// Smoothed KL(p || q) per row of two B x L probability tensors (shape B).
torch::Tensor kl_rows(const torch::Tensor& p, const torch::Tensor& q, double eps = kKlEpsilon);

/// mean((score - 1)^2) over every patch score.
torch::Tensor lsgan_generator_loss(const torch::Tensor& fake_scores);
/// mean((real - 1)^2) + mean(fake^2).
torch::Tensor lsgan_discriminator_loss(const torch::Tensor& real_scores,
                                       const torch::Tensor& fake_scores);

/// Batch mean of d(pred_source[i], pred_adapted[i]). Inputs are B x L
/// probability rows. Mikels mode compares argmax categories and carries no
/// gradient.
torch::Tensor desc_loss(const SemanticDistance& distance, const torch::Tensor& pred_source,
                        const torch::Tensor& pred_adapted);

struct FeatureAlignmentLosses {
  torch::Tensor disc_loss;      ///< trains D_feat: adapted -> adapted, target -> target
  torch::Tensor gen_side_loss;  ///< trains the classifier: target -> scored as adapted
};

/// Cross-entropy GAN pair from two-way discriminator logits for adapted and
/// target feature batches. disc_loss is the sum of the two per-domain means.
FeatureAlignmentLosses feature_alignment_losses(const torch::Tensor& adapted_logits,
                                                const torch::Tensor& target_logits);

/// Fraction of adapted and target rows the discriminator assigns to the right domain.
double feature_discriminator_accuracy(const torch::Tensor& adapted_logits,
                                      const torch::Tensor& target_logits);

/// mean KL(label || pred); the label is the left argument.
torch::Tensor task_loss_distribution(const torch::Tensor& pred, const torch::Tensor& label);
/// mean -log softmax(logits)[label]. Throws ConfigError on an out-of-range label.
torch::Tensor task_loss_classification(const torch::Tensor& logits, const torch::Tensor& label);

/// Terms of the part-one generator objective.
struct GeneratorLossParts {
  torch::Tensor adv_st;     ///< LSGAN generator loss of G_ST against D_T
  torch::Tensor adv_ts;     ///< LSGAN generator loss of G_TS against D_S
  torch::Tensor mixed_cyc;  ///< mixed cycle-consistency loss
  torch::Tensor desc_st;    ///< semantic consistency of G_ST
  torch::Tensor desc_ts;    ///< semantic consistency of G_TS
};

/// adv_st + adv_ts + beta * mixed_cyc + gamma * (desc_st + desc_ts).
torch::Tensor total_stage_one_generator_loss(const GeneratorLossParts& parts,
                                             const LossWeights& weights);

}  // namespace cegan
