#include "cegan/networks.hpp"

#include <fstream>
#include <map>
#include <mutex>

#include "cegan/error.hpp"

namespace nn = torch::nn;

namespace cegan {
namespace {

constexpr double kInitStd = 0.02;

void push_conv_norm_relu(nn::Sequential& seq, int in, int out, int kernel, int stride, int padding) {
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)));
  seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out)));
  seq->push_back(nn::ReLU());
}

class ResidualBlockImpl : public nn::Module {
 public:
  explicit ResidualBlockImpl(int dim) {
    body_ = register_module(
        "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(dim, dim, 3)),
                               nn::InstanceNorm2d(nn::InstanceNorm2dOptions(dim)), nn::ReLU(),
                               nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(dim, dim, 3)),
                               nn::InstanceNorm2d(nn::InstanceNorm2dOptions(dim))));
  }
  torch::Tensor forward(const torch::Tensor& x) { return x + body_->forward(x); }

 private:
  nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class SmallCnnImpl : public nn::Module {
 public:
  explicit SmallCnnImpl(const ClassifierConfig& cfg) {
    const int b = cfg.base_channels;
    features_ = register_module(
        "features",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(cfg.channels, b, 3).padding(1)), nn::BatchNorm2d(b),
                       nn::ReLU(), nn::MaxPool2d(2),
                       nn::Conv2d(nn::Conv2dOptions(b, 2 * b, 3).padding(1)), nn::BatchNorm2d(2 * b),
                       nn::ReLU(), nn::MaxPool2d(2),
                       nn::Conv2d(nn::Conv2dOptions(2 * b, 4 * b, 3).padding(1)), nn::BatchNorm2d(4 * b),
                       nn::ReLU(), nn::AdaptiveMaxPool2d(1)));
    head_ = register_module("head", nn::Linear(4 * b, cfg.num_classes));
  }
  torch::Tensor forward(torch::Tensor x) { return head_->forward(features_->forward(x).flatten(1)); }

 private:
  nn::Sequential features_{nullptr};
  nn::Linear head_{nullptr};
};
TORCH_MODULE(SmallCnn);

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, BackboneFactory>& backbone_registry() {
  static std::map<std::string, BackboneFactory> registry = {
      {"small_cnn", [](const ClassifierConfig& cfg) { return nn::AnyModule(SmallCnn(cfg)); }}};
  return registry;
}

void init_conv_weights(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/false)) {
    if (auto* conv = child->as<nn::Conv2d>()) {
      conv->weight.normal_(0.0, kInitStd);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* convt = child->as<nn::ConvTranspose2d>()) {
      convt->weight.normal_(0.0, kInitStd);
      if (convt->bias.defined()) convt->bias.zero_();
    }
  }
}

void copy_state(const nn::Module& from, nn::Module& to) {
  torch::NoGradGuard no_grad;
  auto src = from.named_parameters(true);
  auto dst = to.named_parameters(true);
  for (auto& item : src) dst[item.key()].copy_(item.value());
  auto src_b = from.named_buffers(true);
  auto dst_b = to.named_buffers(true);
  for (auto& item : src_b) dst_b[item.key()].copy_(item.value());
}

}  // namespace

void GeneratorConfig::validate() const {
  if (resblocks < 1) throw ConfigError("generator: resblocks must be >= 1");
  if (base_channels < 1) throw ConfigError("generator: base_channels must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("generator: channels must be 1 or 3");
  if (image_size < 4 || image_size % 4 != 0) {
    throw ConfigError("generator: image_size must be a positive multiple of 4 (two stride-2 stages), got " +
                      std::to_string(image_size));
  }
}

void DiscriminatorConfig::validate() const {
  if (base_channels < 1) throw ConfigError("discriminator: base_channels must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("discriminator: channels must be 1 or 3");
  (void)downsampling_layers();
}

int DiscriminatorConfig::downsampling_layers() const {
  // Two stride-1 4x4 convolutions give 7; each stride-2 4x4 stage maps r -> 2(r-1) + 4.
  int r = 7;
  for (int n = 1; n <= 6; ++n) {
    r = 2 * (r - 1) + 4;
    if (r == receptive_field) return n;
  }
  throw ConfigError("discriminator: unsupported receptive_field " + std::to_string(receptive_field) +
                    " (supported: 16, 34, 70, 142, 286, 574)");
}

void ClassifierConfig::validate() const {
  if (base_channels < 1) throw ConfigError("classifier: base_channels must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("classifier: channels must be 1 or 3");
  if (num_classes != kNumEmotions) {
    throw ConfigError("classifier: num_classes must be " + std::to_string(kNumEmotions));
  }
  std::lock_guard lock(registry_mutex());
  if (!backbone_registry().count(backbone)) {
    throw ConfigError("classifier: unknown backbone '" + backbone + "'");
  }
}

void FeatureDiscriminatorConfig::validate() const {
  if (input_dim != kNumEmotions) {
    throw ConfigError("feature discriminator: input_dim must be " + std::to_string(kNumEmotions));
  }
  if (hidden < 1) throw ConfigError("feature discriminator: hidden must be >= 1");
}

void NetworkConfig::validate() const {
  generator.validate();
  discriminator.validate();
  classifier.validate();
  feature_discriminator.validate();
  if (generator.channels != discriminator.channels || generator.channels != classifier.channels) {
    throw ConfigError("networks: generator, discriminator and classifier channels must agree");
  }
  if (generator.image_size < discriminator.receptive_field) {
    throw ConfigError("networks: image_size " + std::to_string(generator.image_size) +
                      " is smaller than the discriminator receptive field " +
                      std::to_string(discriminator.receptive_field));
  }
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int b = cfg.base_channels;
  nn::Sequential body;
  body->push_back(nn::ReflectionPad2d(3));
  push_conv_norm_relu(body, cfg.channels, b, 7, 1, 0);
  push_conv_norm_relu(body, b, 2 * b, 3, 2, 1);
  push_conv_norm_relu(body, 2 * b, 4 * b, 3, 2, 1);
  for (int i = 0; i < cfg.resblocks; ++i) body->push_back(ResidualBlock(4 * b));
  for (int mult : {4, 2}) {
    body->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(mult * b, mult * b / 2, 3).stride(2).padding(1).output_padding(1)));
    body->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(mult * b / 2)));
    body->push_back(nn::ReLU());
  }
  body->push_back(nn::ReflectionPad2d(3));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(b, cfg.channels, 7)));
  body->push_back(nn::Sigmoid());
  body_ = register_module("body", body);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != cfg_.channels) {
    throw ConfigError("generator: expected B x " + std::to_string(cfg_.channels) + " x H x W input");
  }
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0) {
    throw ConfigError("generator: image height and width must be divisible by 4, got " +
                      std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
  return body_->forward(x);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg.downsampling_layers();
  const int b = cfg.base_channels;
  nn::Sequential body;
  body->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.channels, b, 4).stride(2).padding(1)));
  body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  int ch = b;
  for (int i = 1; i < n; ++i) {
    const int next = std::min(ch * 2, 8 * b);
    body->push_back(nn::Conv2d(nn::Conv2dOptions(ch, next, 4).stride(2).padding(1)));
    body->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(next)));
    body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    ch = next;
  }
  const int next = std::min(ch * 2, 8 * b);
  body->push_back(nn::Conv2d(nn::Conv2dOptions(ch, next, 4).stride(1).padding(1)));
  body->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(next)));
  body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  // Padding 2 on the last layer makes the score map exactly side / 2^n.
  body->push_back(nn::Conv2d(nn::Conv2dOptions(next, 1, 4).stride(1).padding(2)));
  body_ = register_module("body", body);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != cfg_.channels) {
    throw ConfigError("discriminator: expected B x " + std::to_string(cfg_.channels) + " x H x W input");
  }
  if (x.size(2) < cfg_.receptive_field || x.size(3) < cfg_.receptive_field) {
    throw ConfigError("discriminator: input " + std::to_string(x.size(2)) + "x" +
                      std::to_string(x.size(3)) + " is smaller than the receptive field " +
                      std::to_string(cfg_.receptive_field));
  }
  return body_->forward(x);
}

int64_t PatchDiscriminatorImpl::output_side(int64_t input_side) const {
  int64_t s = input_side;
  for (int i = 0; i < cfg_.downsampling_layers(); ++i) s = (s + 2 - 4) / 2 + 1;
  s = s - 1;  // 4x4, stride 1, padding 1
  return s + 1;  // 4x4, stride 1, padding 2
}

void register_backbone(const std::string& name, BackboneFactory factory) {
  std::lock_guard lock(registry_mutex());
  backbone_registry()[name] = std::move(factory);
}

ClassifierImpl::ClassifierImpl(const ClassifierConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  BackboneFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    factory = backbone_registry().at(cfg.backbone);
  }
  backbone_ = factory(cfg_);
  register_module("backbone", backbone_.ptr());
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& x) {
  auto logits = backbone_.forward(x);
  return cfg_.task == Task::kDistribution ? torch::softmax(logits, 1) : logits;
}

torch::Tensor ClassifierImpl::probabilities(const torch::Tensor& x) {
  auto out = forward(x);
  return cfg_.task == Task::kDistribution ? out : torch::softmax(out, 1);
}

FeatureDiscriminatorImpl::FeatureDiscriminatorImpl(const FeatureDiscriminatorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  fc1_ = register_module("fc1", nn::Linear(cfg.input_dim, cfg.hidden));
  fc2_ = register_module("fc2", nn::Linear(cfg.hidden, cfg.hidden));
  fc3_ = register_module("fc3", nn::Linear(cfg.hidden, 2));
}

torch::Tensor FeatureDiscriminatorImpl::forward(const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(1) != cfg_.input_dim) {
    throw ConfigError("feature discriminator: expected B x " + std::to_string(cfg_.input_dim) + " input");
  }
  auto h = torch::leaky_relu(fc1_->forward(features), 0.2);
  h = torch::leaky_relu(fc2_->forward(h), 0.2);
  return fc3_->forward(h);
}

Generator build_generator(const GeneratorConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  Generator g(cfg);
  init_conv_weights(*g);
  return g;
}

PatchDiscriminator build_patch_discriminator(const DiscriminatorConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  PatchDiscriminator d(cfg);
  init_conv_weights(*d);
  return d;
}

Classifier build_classifier(const ClassifierConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return Classifier(cfg);
}

FeatureDiscriminator build_feature_discriminator(const FeatureDiscriminatorConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return FeatureDiscriminator(cfg);
}

ModelSet ModelSet::build(const NetworkConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelSet m;
  // Distinct derived seeds: F_S and F'_S share architecture, never parameters.
  m.g_st = build_generator(cfg.generator, seed * 16 + 1);
  m.g_ts = build_generator(cfg.generator, seed * 16 + 2);
  m.d_s = build_patch_discriminator(cfg.discriminator, seed * 16 + 3);
  m.d_t = build_patch_discriminator(cfg.discriminator, seed * 16 + 4);
  m.f_s = build_classifier(cfg.classifier, seed * 16 + 5);
  m.f_s_adapted = build_classifier(cfg.classifier, seed * 16 + 6);
  m.d_feat = build_feature_discriminator(cfg.feature_discriminator, seed * 16 + 7);
  return m;
}

std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> ModelSet::named() const {
  return {{"g_st", g_st.ptr()},     {"g_ts", g_ts.ptr()}, {"d_s", d_s.ptr()},
          {"d_t", d_t.ptr()},       {"f_s", f_s.ptr()},   {"f_s_adapted", f_s_adapted.ptr()},
          {"d_feat", d_feat.ptr()}};
}

ModelSet ModelSet::clone() const {
  ModelSet m;
  m.g_st = Generator(g_st->config());
  m.g_ts = Generator(g_ts->config());
  m.d_s = PatchDiscriminator(d_s->config());
  m.d_t = PatchDiscriminator(d_t->config());
  m.f_s = Classifier(f_s->config());
  m.f_s_adapted = Classifier(f_s_adapted->config());
  m.d_feat = FeatureDiscriminator(d_feat->config());
  auto src = named();
  auto dst = m.named();
  for (std::size_t i = 0; i < src.size(); ++i) copy_state(*src[i].second, *dst[i].second);
  return m;
}

uint64_t parameter_checksum(const nn::Module& module) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const torch::Tensor& t) {
    auto c = t.detach().contiguous().to(torch::kCPU);
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = c.numel() * static_cast<int64_t>(c.element_size());
    for (int64_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : module.parameters(true)) mix(p);
  for (const auto& b : module.buffers(true)) mix(b);
  return h;
}

int64_t parameter_count(const nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters(true)) n += p.numel();
  return n;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelSet& models,
                     const CheckpointManifest& manifest) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, module] : models.named()) {
    torch::serialize::OutputArchive archive;
    module->save(archive);
    archive.save_to((dir / (name + ".pt")).string());
  }
  nlohmann::json j = {{"config", manifest.config},
                      {"epoch", manifest.epoch},
                      {"seed", manifest.seed},
                      {"metric", manifest.metric},
                      {"phase", manifest.phase}};
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed to write checkpoint manifest in " + dir.string());
}

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("checkpoint manifest not found in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  CheckpointManifest m;
  m.config = j.value("config", nlohmann::json::object());
  m.epoch = j.value("epoch", 0);
  m.seed = j.value("seed", uint64_t{0});
  m.metric = j.value("metric", 0.0);
  m.phase = j.value("phase", std::string{});
  return m;
}

void load_checkpoint(const std::filesystem::path& dir, ModelSet& models) {
  for (const auto& [name, module] : models.named()) {
    const auto path = dir / (name + ".pt");
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint is missing " + path.string());
    // Module::load replaces tensors wholesale, so shapes are compared explicitly.
    std::vector<std::vector<int64_t>> shapes;
    for (const auto& t : module->parameters()) shapes.push_back(t.sizes().vec());
    for (const auto& t : module->buffers()) shapes.push_back(t.sizes().vec());
    torch::serialize::InputArchive archive;
    bool ok = true;
    try {
      archive.load_from(path.string());
      module->load(archive);
    } catch (const c10::Error&) {
      ok = false;
    }
    std::size_t i = 0;
    for (const auto& t : module->parameters()) ok = ok && t.sizes().vec() == shapes[i++];
    for (const auto& t : module->buffers()) ok = ok && t.sizes().vec() == shapes[i++];
    if (!ok) throw ConfigError("checkpoint " + path.string() + " does not match the configured networks");
  }
}

}  // namespace cegan
