#include "cegan/losses.hpp"

#include <string>

#include "cegan/error.hpp"

namespace cegan {
namespace {

void require_nonempty(const torch::Tensor& t, const char* what) {
  if (!t.defined() || t.numel() == 0) throw ConfigError(std::string(what) + ": empty tensor");
}

void require_rows(const torch::Tensor& t, const char* what) {
  if (t.dim() != 2 || t.size(1) != kNumEmotions) {
    throw ConfigError(std::string(what) + ": expected B x " + std::to_string(kNumEmotions) +
                      " rows");
  }
}

torch::Tensor smooth(const torch::Tensor& p, double eps) {
  return (p + eps) / (1.0 + static_cast<double>(p.size(-1)) * eps);
}

}  // namespace

void LossWeights::validate() const {
  if (!(beta > 0.0)) throw ConfigError("loss weight beta must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("loss weight gamma must be >= 0");
}

void SemanticDistance::validate(Task task) const {
  if (kind == Kind::kMikels && task == Task::kDistribution) {
    throw ConfigError(
        "the Mikels semantic distance applies only to classification; use skl for distribution "
        "learning");
  }
}

torch::Tensor kl_rows(const torch::Tensor& p, const torch::Tensor& q, double eps) {
  auto ps = smooth(p, eps);
  auto qs = smooth(q, eps);
  return (ps * (ps.log() - qs.log())).sum(-1);
}

torch::Tensor lsgan_generator_loss(const torch::Tensor& fake_scores) {
  require_nonempty(fake_scores, "lsgan_generator_loss");
  return (fake_scores - 1.0).pow(2).mean();
}

torch::Tensor lsgan_discriminator_loss(const torch::Tensor& real_scores,
                                       const torch::Tensor& fake_scores) {
  require_nonempty(real_scores, "lsgan_discriminator_loss(real)");
  require_nonempty(fake_scores, "lsgan_discriminator_loss(fake)");
  return (real_scores - 1.0).pow(2).mean() + fake_scores.pow(2).mean();
}

torch::Tensor desc_loss(const SemanticDistance& distance, const torch::Tensor& pred_source,
                        const torch::Tensor& pred_adapted) {
  require_rows(pred_source, "desc_loss");
  require_rows(pred_adapted, "desc_loss");
  if (pred_source.size(0) != pred_adapted.size(0)) throw ConfigError("desc_loss: batch size mismatch");
  require_nonempty(pred_source, "desc_loss");
  if (distance.kind == SemanticDistance::Kind::kSkl) {
    return (kl_rows(pred_source, pred_adapted) + kl_rows(pred_adapted, pred_source)).mean();
  }
  auto a = pred_source.argmax(1).to(torch::kCPU);
  auto b = pred_adapted.argmax(1).to(torch::kCPU);
  const auto n = a.size(0);
  auto acc_a = a.accessor<int64_t, 1>();
  auto acc_b = b.accessor<int64_t, 1>();
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    sum += mikels_dissimilarity(distance.wheel, EmotionCategory(static_cast<int>(acc_a[i])),
                                EmotionCategory(static_cast<int>(acc_b[i])));
  }
  return torch::tensor(sum / static_cast<double>(n), pred_source.options().requires_grad(false));
}

FeatureAlignmentLosses feature_alignment_losses(const torch::Tensor& adapted_logits,
                                                const torch::Tensor& target_logits) {
  for (const auto* t : {&adapted_logits, &target_logits}) {
    if (t->dim() != 2 || t->size(1) != 2) {
      throw ConfigError("feature_alignment_losses: expected B x 2 discriminator logits");
    }
    require_nonempty(*t, "feature_alignment_losses");
  }
  auto labels = [](const torch::Tensor& like, int64_t cls) {
    return torch::full({like.size(0)}, cls, torch::TensorOptions().dtype(torch::kLong));
  };
  FeatureAlignmentLosses out;
  out.disc_loss = torch::cross_entropy_loss(adapted_logits, labels(adapted_logits, kAdaptedDomain)) +
                  torch::cross_entropy_loss(target_logits, labels(target_logits, kTargetDomain));
  out.gen_side_loss = torch::cross_entropy_loss(target_logits, labels(target_logits, kAdaptedDomain));
  return out;
}

double feature_discriminator_accuracy(const torch::Tensor& adapted_logits,
                                      const torch::Tensor& target_logits) {
  torch::NoGradGuard no_grad;
  const auto correct_adapted = (adapted_logits.argmax(1) == kAdaptedDomain).sum().item<int64_t>();
  const auto correct_target = (target_logits.argmax(1) == kTargetDomain).sum().item<int64_t>();
  const auto total = adapted_logits.size(0) + target_logits.size(0);
  return static_cast<double>(correct_adapted + correct_target) / static_cast<double>(total);
}

torch::Tensor task_loss_distribution(const torch::Tensor& pred, const torch::Tensor& label) {
  require_rows(pred, "task_loss_distribution");
  require_rows(label, "task_loss_distribution");
  if (pred.size(0) != label.size(0)) throw ConfigError("task_loss_distribution: batch size mismatch");
  require_nonempty(pred, "task_loss_distribution");
  return kl_rows(label, pred).mean();
}

torch::Tensor task_loss_classification(const torch::Tensor& logits, const torch::Tensor& label) {
  if (logits.dim() != 2) throw ConfigError("task_loss_classification: expected B x L logits");
  require_nonempty(logits, "task_loss_classification");
  if (label.dim() != 1 || label.size(0) != logits.size(0)) {
    throw ConfigError("task_loss_classification: label batch size mismatch");
  }
  auto lab = label.to(torch::kLong);
  if ((lab < 0).any().item<bool>() || (lab >= logits.size(1)).any().item<bool>()) {
    throw ConfigError("task_loss_classification: label index out of range");
  }
  return torch::nll_loss(torch::log_softmax(logits, 1), lab);
}

torch::Tensor total_stage_one_generator_loss(const GeneratorLossParts& parts,
                                             const LossWeights& weights) {
  auto loss = parts.adv_st + parts.adv_ts + weights.beta * parts.mixed_cyc;
  if (weights.gamma != 0.0) loss = loss + weights.gamma * (parts.desc_st + parts.desc_ts);
  return loss;
}

}  // namespace cegan
