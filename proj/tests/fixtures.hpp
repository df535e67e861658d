#pragma once

#include <filesystem>
#include <string>

#include "cegan/synthetic.hpp"
#include "cegan/training.hpp"

namespace cegan::testing {

/// Small synthetic benchmark and network sizes for micro-runs.
struct MicroRun {
  TrainingConfig cfg;
  SyntheticPair data;

  Trainer trainer() const {
    return Trainer(cfg, data.source.dataset.labeled("train"), data.source.dataset.labeled("val"),
                   data.target.dataset.unlabeled("train"));
  }
};

inline MicroRun micro_run(Task task = Task::kDistribution, uint64_t seed = 1) {
  SyntheticDomainSpec spec;
  spec.task = task;
  spec.image_size = 16;
  spec.samples_per_domain = 64;
  spec.val_fraction = 0.125;
  spec.seed = seed;

  TrainingConfig c;
  c.task = task;
  c.part_one_epochs = 2;
  c.part_two_epochs = 1;
  c.part_one_batch = 4;
  c.part_two_batch = 8;
  c.max_steps_per_epoch = 3;
  c.generator_lr = c.discriminator_lr = 1e-3;
  c.classifier_lr = 1e-2;
  c.classifier_momentum = 0.9;
  c.part_two_lr = c.feature_disc_lr = 1e-3;
  c.weights.gamma = 1.0;
  c.desc_warmup_fraction = 0.0;
  c.msssim = MsSsimConfig::truncated(2, 3);
  c.pool_capacity = 4;
  c.networks.generator.image_size = 16;
  c.networks.generator.base_channels = 4;
  c.networks.generator.resblocks = 1;
  c.networks.discriminator.base_channels = 4;
  c.networks.classifier.base_channels = 4;
  c.networks.classifier.task = task;
  c.networks.feature_discriminator.hidden = 8;
  c.seed = seed;
  return {c, generate_synthetic_pair(spec)};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cegan_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace cegan::testing
