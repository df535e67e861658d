#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "cegan/emotion.hpp"
#include "cegan/losses.hpp"

namespace cegan {

struct GeneratorConfig {
  int resblocks = 2;  // 9 at paper scale (256x256)
  int base_channels = 16;
  int channels = 3;
  int image_size = 32;

  void validate() const;
};

struct DiscriminatorConfig {
  int receptive_field = 16;  // 70 at paper scale
  int base_channels = 16;
  int channels = 3;

  void validate() const;
  /// Number of stride-2 stages giving `receptive_field` (16 -> 1, 34 -> 2, 70 -> 3, ...).
  int downsampling_layers() const;
};

struct ClassifierConfig {
  std::string backbone = "small_cnn";
  int base_channels = 16;
  int channels = 3;
  int num_classes = kNumEmotions;
  Task task = Task::kDistribution;  ///< softmax head for distributions, raw logits otherwise

  void validate() const;
};

struct FeatureDiscriminatorConfig {
  int input_dim = kNumEmotions;
  int hidden = 64;

  void validate() const;
};

/// Residual translation network: 7x7 stem, two stride-2 convolutions,
/// residual blocks, two stride-1/2 transposed convolutions, 7x7 head.
/// Instance normalization throughout; sigmoid output keeps values in [0, 1].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Generator);

/// Fully convolutional PatchGAN; emits one raw score per overlapping patch.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const DiscriminatorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorConfig& config() const { return cfg_; }
  /// Score-map side for a square input of side `input_side`.
  int64_t output_side(int64_t input_side) const;

 private:
  DiscriminatorConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Image classifier producing an L-vector per sample: probabilities in
/// distribution mode, logits in classification mode.
class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(const ClassifierConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);
  /// Probability rows regardless of head type.
  torch::Tensor probabilities(const torch::Tensor& x);
  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  torch::nn::AnyModule backbone_;
};
TORCH_MODULE(Classifier);

/// Factory for a classifier backbone mapping B x C x H x W to B x num_classes logits.
using BackboneFactory = std::function<torch::nn::AnyModule(const ClassifierConfig&)>;
/// Registers a backbone under `name`; "small_cnn" is built in.
void register_backbone(const std::string& name, BackboneFactory factory);

/// Three linear layers mapping an L-vector to two domain logits.
class FeatureDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit FeatureDiscriminatorImpl(const FeatureDiscriminatorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& features);
  const FeatureDiscriminatorConfig& config() const { return cfg_; }

 private:
  FeatureDiscriminatorConfig cfg_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, fc3_{nullptr};
};
TORCH_MODULE(FeatureDiscriminator);

// Factories seed LibTorch's generator so identical seeds give bit-identical
// parameters. Generator and discriminator convolutions use N(0, 0.02).
Generator build_generator(const GeneratorConfig& cfg, uint64_t seed);
PatchDiscriminator build_patch_discriminator(const DiscriminatorConfig& cfg, uint64_t seed);
Classifier build_classifier(const ClassifierConfig& cfg, uint64_t seed);
FeatureDiscriminator build_feature_discriminator(const FeatureDiscriminatorConfig& cfg, uint64_t seed);

struct NetworkConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  ClassifierConfig classifier;
  FeatureDiscriminatorConfig feature_discriminator;

  void validate() const;
};

/// Every network of the adaptation model.
struct ModelSet {
  Generator g_st{nullptr};  ///< source -> target
  Generator g_ts{nullptr};  ///< target -> source
  PatchDiscriminator d_s{nullptr};
  PatchDiscriminator d_t{nullptr};
  Classifier f_s{nullptr};          ///< trained on source images
  Classifier f_s_adapted{nullptr};  ///< trained on adapted images; the deliverable
  FeatureDiscriminator d_feat{nullptr};

  static ModelSet build(const NetworkConfig& cfg, uint64_t seed);
  /// (name, module) pairs in a fixed order; names double as archive file stems.
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> named() const;
  ModelSet clone() const;
};

/// FNV-1a over the raw bytes of every parameter and buffer.
uint64_t parameter_checksum(const torch::nn::Module& module);
int64_t parameter_count(const torch::nn::Module& module);

/// Directory with one archive per network plus manifest.json
/// {config, epoch, seed, metric, phase}.
struct CheckpointManifest {
  nlohmann::json config;
  int epoch = 0;
  uint64_t seed = 0;
  double metric = 0.0;
  std::string phase;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelSet& models,
                     const CheckpointManifest& manifest);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);
/// Loads parameters into already-built networks of matching shape.
void load_checkpoint(const std::filesystem::path& dir, ModelSet& models);

}  // namespace cegan
