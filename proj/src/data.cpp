#include "cegan/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cegan/error.hpp"

namespace cegan {
namespace {

const std::set<std::string> kRecordKeys = {"image", "domain", "votes", "label", "split"};
const std::set<std::string> kSplits = {"train", "val", "test"};

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

bool has_label(const SampleRecord& r) { return r.votes.has_value() || r.label.has_value(); }

}  // namespace

std::string_view domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

std::vector<std::size_t> DatasetManifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

void DatasetManifest::validate() const {
  std::map<std::string, std::string> split_of;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (task == Task::kDistribution && r.label) {
      throw ConfigError("record " + std::to_string(i) + " has a class label in a distribution manifest");
    }
    if (task == Task::kClassification && r.votes) {
      throw ConfigError("record " + std::to_string(i) + " has votes in a classification manifest");
    }
    if (!kSplits.count(r.split)) throw ConfigError("record " + std::to_string(i) + " has unknown split " + r.split);
    auto [it, inserted] = split_of.emplace(r.image, r.split);
    if (!inserted && it->second != r.split) {
      throw ConfigError("splits overlap: image '" + r.image + "' appears in both " + it->second + " and " +
                        r.split);
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path, ManifestLoadOptions opts) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::optional<Task> task;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      line_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) line_error(path, line_no, "record must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (!kRecordKeys.count(key)) line_error(path, line_no, "unknown key '" + key + "'");
    }
    SampleRecord r;
    if (!j.contains("image") || !j["image"].is_string()) line_error(path, line_no, "missing string field 'image'");
    r.image = j["image"].get<std::string>();
    if (!j.contains("domain") || !j["domain"].is_string()) line_error(path, line_no, "missing field 'domain'");
    const auto dom = j["domain"].get<std::string>();
    if (dom == "source") {
      r.domain = Domain::kSource;
    } else if (dom == "target") {
      r.domain = Domain::kTarget;
    } else {
      line_error(path, line_no, "domain must be \"source\" or \"target\"");
    }
    if (j.contains("split")) {
      if (!j["split"].is_string() || !kSplits.count(j["split"].get<std::string>())) {
        line_error(path, line_no, "split must be one of train, val, test");
      }
      r.split = j["split"].get<std::string>();
    }
    if (j.contains("votes") && j.contains("label")) line_error(path, line_no, "record has both votes and label");
    if (j.contains("votes")) {
      const auto& v = j["votes"];
      if (!v.is_array() || v.size() != kNumEmotions) line_error(path, line_no, "votes must be an array of 8 integers");
      VoteRecord votes;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer() || v[i].get<int64_t>() < 0) {
          line_error(path, line_no, "votes must be non-negative integers");
        }
        votes.counts[i] = v[i].get<int64_t>();
      }
      if (votes.total() == 0) {
        ++m.dropped;
        continue;
      }
      r.votes = votes;
    } else if (j.contains("label")) {
      if (!j["label"].is_number_integer()) line_error(path, line_no, "label must be an integer");
      const auto lab = j["label"].get<int64_t>();
      if (lab < 0 || lab >= kNumEmotions) line_error(path, line_no, "label out of range [0, 8)");
      r.label = EmotionCategory(static_cast<int>(lab));
    } else if (r.domain == Domain::kSource) {
      line_error(path, line_no, "source records need votes or label");
    }
    if (has_label(r)) {
      const Task t = r.votes ? Task::kDistribution : Task::kClassification;
      if (task && *task != t) line_error(path, line_no, "manifest mixes votes and class labels");
      task = t;
    }
    m.records.push_back(std::move(r));
  }
  if (m.dropped > 0) {
    std::cerr << "warning: dropped " << m.dropped << " record(s) with zero total votes from " << path.string()
              << '\n';
  }
  m.task = task.value_or(Task::kDistribution);
  m.validate();
  if (opts.check_images) {
    std::vector<std::string> missing;
    for (const auto& r : m.records) {
      if (!std::filesystem::exists(m.base_dir / r.image)) missing.push_back(r.image);
    }
    if (!missing.empty()) {
      std::ostringstream msg;
      msg << "manifest " << path.string() << " references " << missing.size() << " missing image(s):";
      for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg << ' ' << missing[i];
      if (missing.size() > 10) msg << " ...";
      throw DataError(msg.str());
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& r : manifest.records) {
    nlohmann::json j;
    j["image"] = r.image;
    j["domain"] = std::string(domain_name(r.domain));
    if (r.votes) j["votes"] = r.votes->counts;
    if (r.label) j["label"] = r.label->index();
    j["split"] = r.split;
    out << j.dump() << '\n';
  }
}

torch::Tensor record_target(const SampleRecord& r, Task task) {
  if (task == Task::kDistribution) {
    if (!r.votes) return torch::full({kNumEmotions}, std::numeric_limits<float>::quiet_NaN());
    const auto d = normalize_votes(*r.votes);
    return torch::tensor(std::vector<double>(d.probs().begin(), d.probs().end()), torch::kDouble)
        .to(torch::kFloat);
  }
  return torch::tensor(r.label ? static_cast<int64_t>(r.label->index()) : int64_t{-1}, torch::kLong);
}

LabeledImages LabeledImages::index(const torch::Tensor& idx) const {
  return {task, images.index_select(0, idx), targets.index_select(0, idx)};
}

torch::Tensor LabeledImages::classes() const {
  return task == Task::kDistribution ? targets.argmax(1) : targets;
}

LabeledImages Dataset::labeled(const std::string& split) const {
  std::vector<int64_t> idx;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) idx.push_back(static_cast<int64_t>(i));
  }
  if (idx.empty()) throw DataError("split '" + split + "' is empty");
  auto t = torch::tensor(idx, torch::kLong);
  return {task, images.index_select(0, t), targets.index_select(0, t)};
}

UnlabeledImages Dataset::unlabeled(const std::string& split) const {
  std::vector<int64_t> idx;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) idx.push_back(static_cast<int64_t>(i));
  }
  if (idx.empty()) throw DataError("split '" + split + "' is empty");
  return {images.index_select(0, torch::tensor(idx, torch::kLong))};
}

torch::Tensor read_image(const std::filesystem::path& path, const ImageLoadOptions& opts) {
  const int flag = opts.channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
  cv::Mat img = cv::imread(path.string(), flag);
  if (img.empty()) throw DataError("cannot decode image " + path.string());
  if (opts.channels == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  if (img.rows != opts.image_size || img.cols != opts.image_size) {
    cv::resize(img, img, cv::Size(opts.image_size, opts.image_size), 0, 0, cv::INTER_LINEAR);
  }
  img.convertTo(img, CV_32F, 1.0 / 255.0);
  auto t = torch::from_blob(img.data, {img.rows, img.cols, opts.channels}, torch::kFloat).clone();
  return t.permute({2, 0, 1}).contiguous();
}

void write_image(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3) throw ConfigError("write_image expects a C x H x W tensor");
  auto hwc = (image.detach().to(torch::kCPU).to(torch::kFloat).clamp(0, 1) * 255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  const int c = static_cast<int>(hwc.size(2));
  cv::Mat mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), c == 1 ? CV_8UC1 : CV_8UC3,
              hwc.data_ptr());
  cv::Mat out = mat.clone();
  if (c == 3) cv::cvtColor(out, out, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out)) throw Error("cannot write image " + path.string());
}

Dataset load_dataset(const DatasetManifest& manifest, const ImageLoadOptions& opts) {
  if (manifest.records.empty()) throw DataError("manifest has no records");
  Dataset d;
  d.task = manifest.task;
  std::vector<torch::Tensor> images, targets;
  std::vector<std::string> failed;
  for (const auto& r : manifest.records) {
    try {
      images.push_back(read_image(manifest.base_dir / r.image, opts));
    } catch (const DataError&) {
      failed.push_back(r.image);
      continue;
    }
    targets.push_back(record_target(r, manifest.task));
    d.refs.push_back(r.image);
    d.splits.push_back(r.split);
  }
  if (!failed.empty()) {
    std::ostringstream msg;
    msg << failed.size() << " image(s) could not be decoded:";
    for (std::size_t i = 0; i < failed.size() && i < 10; ++i) msg << ' ' << failed[i];
    throw DataError(msg.str());
  }
  d.images = torch::stack(images);
  d.targets = torch::stack(targets);
  return d;
}

BatchSampler::BatchSampler(int64_t num_samples, int64_t batch_size, std::optional<uint64_t> shuffle_seed)
    : num_samples_(num_samples), batch_size_(batch_size), seed_(shuffle_seed) {
  if (num_samples < 1) throw DataError("cannot batch an empty split");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

int64_t BatchSampler::batches_per_epoch() const { return (num_samples_ + batch_size_ - 1) / batch_size_; }

std::vector<torch::Tensor> BatchSampler::epoch(int64_t epoch_index) const {
  std::vector<int64_t> order(static_cast<std::size_t>(num_samples_));
  std::iota(order.begin(), order.end(), int64_t{0});
  if (seed_) {
    std::seed_seq seq{static_cast<uint32_t>(*seed_), static_cast<uint32_t>(*seed_ >> 32),
                      static_cast<uint32_t>(epoch_index), static_cast<uint32_t>(epoch_index >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(batches_per_epoch()));
  for (int64_t start = 0; start < num_samples_; start += batch_size_) {
    const auto end = std::min(start + batch_size_, num_samples_);
    out.push_back(torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kLong));
  }
  return out;
}

std::vector<LabeledImages> batches(const Dataset& dataset, const std::string& split, int64_t batch_size,
                                   std::optional<uint64_t> shuffle_seed, int64_t epoch_index) {
  const auto data = dataset.labeled(split);
  BatchSampler sampler(data.size(), batch_size, shuffle_seed);
  std::vector<LabeledImages> out;
  for (const auto& idx : sampler.epoch(epoch_index)) out.push_back(data.index(idx));
  return out;
}

}  // namespace cegan
