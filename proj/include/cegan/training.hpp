#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "cegan/data.hpp"
#include "cegan/losses.hpp"
#include "cegan/metrics.hpp"
#include "cegan/networks.hpp"
#include "cegan/perceptual.hpp"

namespace cegan {

/// Fixed-capacity history of generated images for discriminator updates.
/// Until full, every query is stored and returned. Afterwards each query
/// returns the input with probability 0.5, otherwise a uniformly chosen
/// stored image, which the input then replaces.
class ImagePool {
 public:
  ImagePool(std::size_t capacity, uint64_t seed);

  /// `image` is a single C x H x W tensor.
  torch::Tensor query(const torch::Tensor& image);
  /// Applies query() to every element of a B x C x H x W batch.
  torch::Tensor query_batch(const torch::Tensor& images);

  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<torch::Tensor> buffer_;
  std::mt19937_64 rng_;
};

struct TrainingConfig {
  Task task = Task::kDistribution;
  int part_one_epochs = 200;
  int part_two_epochs = 200;
  int part_one_batch = 1;
  int part_two_batch = 64;
  /// Caps batches per part-one epoch (0 = full pass); used by micro-runs.
  int max_steps_per_epoch = 0;

  double generator_lr = 2e-4;      ///< Adam, both generators
  double discriminator_lr = 2e-4;  ///< Adam, D_S and D_T
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double classifier_lr = 1e-4;  ///< plain SGD for F_S and F'_S in part one
  double classifier_momentum = 0.0;
  double part_two_lr = 1e-4;    ///< Adam for F'_S in part two
  double feature_disc_lr = 1e-4;  ///< Adam for D_feat

  double thres = 0.8;
  LossWeights weights;
  MixConfig mix;
  MsSsimConfig msssim;
  SemanticDistance distance;
  int pool_capacity = 50;
  /// Fraction of part-one steps over which gamma ramps linearly from 0 (0 = off).
  double desc_warmup_fraction = 0.1;
  /// Run the feature-level alignment stage.
  bool feature_alignment = true;
  /// Feed D_feat pre-softmax logits instead of probabilities.
  bool feature_from_logits = false;

  NetworkConfig networks;
  uint64_t seed = 0;

  void validate() const;
};

enum class Phase { kPartOne, kPartTwo, kDone };
std::string_view phase_name(Phase p);

struct TrainState {
  Phase phase = Phase::kPartOne;
  int part_one_epoch = 0;  ///< completed part-one epochs
  int part_two_epoch = 0;  ///< completed part-two epochs
  int64_t step = 0;        ///< global step counter across both parts
  std::optional<double> best_validation;
  int best_epoch = 0;
  std::vector<double> validation_history;

  /// Phases only move forward.
  void advance(Phase next);
};

/// JSON Lines loss log: one object per step plus epoch-end records.
class LossLog {
 public:
  LossLog() = default;
  explicit LossLog(const std::filesystem::path& path, bool append = false);

  void write(const nlohmann::json& record);
  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::unique_ptr<std::ofstream> out_;
  std::vector<nlohmann::json> records_;
};

/// Learning-rate factor for part-one epoch `epoch` (0-based): constant for the
/// first half, then linear to zero, reaching exactly 0 at `epoch == total`.
double part_one_lr_factor(int epoch, int total);

/// Per-network parameter checksums, in ModelSet::named() order.
std::vector<std::pair<std::string, uint64_t>> model_checksums(const ModelSet& models);

/// Replaces the built-in validation signal; lower is better.
using ValidationHook = std::function<double(ModelSet&)>;

/// Two-part alternating optimization. Target data enters only as
/// UnlabeledImages.
class Trainer {
 public:
  Trainer(TrainingConfig cfg, LabeledImages source_train, LabeledImages source_val, UnlabeledImages target_train);

  ModelSet& models() { return models_; }
  const TrainState& state() const { return state_; }
  const TrainingConfig& config() const { return cfg_; }

  void set_log(LossLog* log) { log_ = log; }
  /// Called around each sub-step with ("generators"|"discriminators"|
  /// "classifiers"|"feature_discriminator"|"adapted_classifier", after?).
  void set_substep_observer(std::function<void(std::string_view, bool)> obs) { observer_ = std::move(obs); }
  /// Instrumented mode: replaces the measured D_feat accuracy at the gate.
  void set_accuracy_override(std::optional<double> acc) { accuracy_override_ = acc; }
  void set_validation_hook(ValidationHook hook) { validation_hook_ = std::move(hook); }
  /// Directory for per-epoch checkpoints ("latest" and "best"); none if empty.
  void set_checkpoint_dir(std::filesystem::path dir) { checkpoint_dir_ = std::move(dir); }

  /// One Algorithm-1 part-one iteration: generators, then discriminators
  /// (with pooled fakes), then both classifiers.
  nlohmann::json part_one_step(const LabeledImages& source, const torch::Tensor& target);
  /// D_feat update, then F'_S update gated on D_feat accuracy > thres.
  nlohmann::json part_two_step(const LabeledImages& adapted, const torch::Tensor& target);

  /// Model-selection signal: F'_S task loss on held-out source images
  /// translated by G_ST against their source labels. Lower is better.
  double validate();

  void run_part_one();
  /// Uses the best part-one G_ST and F'_S, materializes adapted images, runs D_feat/F'_S.
  void run_part_two();
  /// Full Algorithm 1 from the current state (supports resumption).
  void train();

  /// Learning rate currently set on the generator optimizer.
  double current_generator_lr() const;

  void save(const std::filesystem::path& dir, const std::string& tag) const;
  /// Restores networks, optimizers and counters written by save().
  void resume(const std::filesystem::path& dir);

 private:
  torch::Tensor classifier_features(Classifier& classifier, const torch::Tensor& images);
  void set_part_one_lr(int epoch);
  void check_finite(const nlohmann::json& losses) const;
  void notify(std::string_view substep, bool after);
  void log(const nlohmann::json& record);
  double effective_gamma() const;
  torch::Tensor translate_all(const torch::Tensor& images);

  TrainingConfig cfg_;
  LabeledImages source_train_;
  LabeledImages source_val_;
  UnlabeledImages target_train_;

  ModelSet models_;
  std::optional<ModelSet> best_;
  TrainState state_;
  int64_t part_one_total_steps_ = 0;

  std::unique_ptr<torch::optim::Adam> gen_opt_, disc_opt_, feat_disc_opt_, adapted_opt_;
  std::unique_ptr<torch::optim::SGD> cls_opt_;
  ImagePool pool_s_, pool_t_;

  LossLog* log_ = nullptr;
  std::function<void(std::string_view, bool)> observer_;
  std::optional<double> accuracy_override_;
  ValidationHook validation_hook_;
  std::filesystem::path checkpoint_dir_;
};

/// Runs `classifier` over `images` in chunks; returns probability rows.
torch::Tensor predict_probabilities(Classifier& classifier, const torch::Tensor& images);

/// Distribution task: the six distribution metrics against the labels.
/// Classification task: per-class and average accuracy.
MetricsReport evaluate(Classifier& classifier, const LabeledImages& data);

/// Trains a fresh classifier on labelled images alone with the part-one
/// classifier optimizer for `epochs` epochs (source-only / oracle baselines).
Classifier train_supervised_classifier(const TrainingConfig& cfg, const LabeledImages& data, int epochs,
                                       uint64_t seed);

}  // namespace cegan
