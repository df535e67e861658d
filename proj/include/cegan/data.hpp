#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cegan/emotion.hpp"
#include "cegan/losses.hpp"

namespace cegan {

enum class Domain { kSource, kTarget };

std::string_view domain_name(Domain d);

/// One manifest line. Exactly one of `votes` / `label` is set.
struct SampleRecord {
  std::string image;  ///< path relative to the manifest directory, or a synthetic ref
  Domain domain = Domain::kSource;
  std::optional<VoteRecord> votes;
  std::optional<EmotionCategory> label;
  std::string split = "train";
};

struct DatasetManifest {
  Task task = Task::kDistribution;
  std::vector<SampleRecord> records;
  /// Directory image paths are resolved against.
  std::filesystem::path base_dir;
  /// Records dropped at load time (zero total votes).
  std::size_t dropped = 0;

  std::vector<std::size_t> split_indices(const std::string& split) const;
  /// Throws ConfigError when records disagree with `task` or one image
  /// appears in two different splits.
  void validate() const;
};

struct ManifestLoadOptions {
  /// Fail when a referenced image file does not exist.
  bool check_images = true;
};

/// Reads a JSON Lines manifest: one object per line with keys
///   image (string), domain ("source"|"target"), votes ([8 ints]) or label (int),
///   split (optional, "train"|"val"|"test", default "train").
/// Zero-vote records are dropped and counted; other problems throw ConfigError
/// naming the line.
DatasetManifest load_manifest(const std::filesystem::path& path, ManifestLoadOptions opts = {});

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Images with labels, for the labelled source domain and for evaluation.
struct LabeledImages {
  Task task = Task::kDistribution;
  torch::Tensor images;   ///< N x C x H x W, float32 in [0, 1]
  torch::Tensor targets;  ///< N x 8 float32 distributions, or N int64 classes

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  LabeledImages index(const torch::Tensor& idx) const;
  /// Class labels regardless of task (argmax for distributions).
  torch::Tensor classes() const;
};

/// Images only. Training consumes target data exclusively through this type,
/// so target labels cannot reach the optimization path.
struct UnlabeledImages {
  torch::Tensor images;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

/// Decoded dataset held in memory.
struct Dataset {
  Task task = Task::kDistribution;
  torch::Tensor images;   ///< N x C x H x W
  torch::Tensor targets;  ///< per-record labels as in LabeledImages
  std::vector<std::string> refs;
  std::vector<std::string> splits;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  LabeledImages labeled(const std::string& split) const;
  UnlabeledImages unlabeled(const std::string& split) const;
};

struct ImageLoadOptions {
  int image_size = 32;  ///< images are bilinearly resized to image_size x image_size
  int channels = 3;     ///< 3 = RGB, 1 = grayscale
};

/// Decodes every manifest image. Throws DataError listing unreadable files.
Dataset load_dataset(const DatasetManifest& manifest, const ImageLoadOptions& opts);

/// Decodes one image file to a C x H x W float tensor in [0, 1].
torch::Tensor read_image(const std::filesystem::path& path, const ImageLoadOptions& opts);
/// Writes a C x H x W tensor in [0, 1] as an 8-bit image.
void write_image(const std::filesystem::path& path, const torch::Tensor& image);

/// Converts labels of a manifest record to the dataset target representation.
torch::Tensor record_target(const SampleRecord& r, Task task);

/// Epoch-wise mini-batch index generator. Each epoch visits every index once;
/// the final partial batch is kept. Shuffling is a pure function of (seed, epoch).
class BatchSampler {
 public:
  BatchSampler(int64_t num_samples, int64_t batch_size, std::optional<uint64_t> shuffle_seed);

  std::vector<torch::Tensor> epoch(int64_t epoch_index) const;
  int64_t batches_per_epoch() const;
  int64_t num_samples() const { return num_samples_; }

 private:
  int64_t num_samples_;
  int64_t batch_size_;
  std::optional<uint64_t> seed_;
};

/// Stream of labelled batches for one split of a dataset.
std::vector<LabeledImages> batches(const Dataset& dataset, const std::string& split,
                                   int64_t batch_size, std::optional<uint64_t> shuffle_seed,
                                   int64_t epoch_index = 0);

}  // namespace cegan
