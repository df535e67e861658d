#include "doctest_torch.hpp"

#include <filesystem>
#include <set>

#include <torch/torch.h>

#include "cegan/error.hpp"
#include "cegan/networks.hpp"

using namespace cegan;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_networks() {
  NetworkConfig n;
  n.generator.image_size = 16;
  n.generator.base_channels = 4;
  n.generator.resblocks = 1;
  n.discriminator.base_channels = 4;
  n.classifier.base_channels = 4;
  n.feature_discriminator.hidden = 8;
  return n;
}

// Receptive field from the (kernel, stride) list of the convolutions, walked backwards.
int receptive_field_of(torch::nn::Module& m) {
  std::vector<std::pair<int64_t, int64_t>> ks;
  for (auto& child : m.modules(false)) {
    if (auto* c = child->as<torch::nn::Conv2d>()) {
      ks.emplace_back(c->options.kernel_size()->at(0), c->options.stride()->at(0));
    }
  }
  int64_t r = 1;
  for (auto it = ks.rbegin(); it != ks.rend(); ++it) r = (r - 1) * it->second + it->first;
  return static_cast<int>(r);
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cegan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("generator keeps shape and range") {
  const auto cfg = tiny_networks().generator;
  auto g = build_generator(cfg, 1);
  auto y = g->forward(torch::rand({3, 3, 16, 16}));
  CHECK((y.sizes() == torch::IntArrayRef{3, 3, 16, 16}));
  CHECK(y.min().item<float>() >= 0.0f);
  CHECK(y.max().item<float>() <= 1.0f);
  CHECK_THROWS_AS(g->forward(torch::rand({1, 3, 18, 18})), ConfigError);
  CHECK_THROWS_AS(g->forward(torch::rand({1, 1, 16, 16})), ConfigError);
  GeneratorConfig bad = cfg;
  bad.image_size = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("generator uses instance normalization only") {
  auto g = build_generator(tiny_networks().generator, 1);
  int instance = 0;
  for (auto& m : g->modules(false)) {
    CHECK(m->as<torch::nn::BatchNorm2d>() == nullptr);
    if (m->as<torch::nn::InstanceNorm2d>()) ++instance;
  }
  CHECK(instance > 0);
}

TEST_CASE("patch discriminator receptive field and score map size") {
  for (int rf : {16, 34, 70}) {
    DiscriminatorConfig cfg;
    cfg.receptive_field = rf;
    cfg.base_channels = 2;
    auto d = build_patch_discriminator(cfg, 2);
    CHECK(receptive_field_of(*d) == rf);
    const int n = cfg.downsampling_layers();
    for (int64_t side : {int64_t{rf}, int64_t{64}, int64_t{96}}) {
      if (side < rf) continue;
      auto s = d->forward(torch::rand({1, 3, side, side}));
      CHECK(s.size(1) == 1);
      CHECK(s.size(2) == d->output_side(side));
      if (side % (1 << n) == 0) CHECK(s.size(2) == side / (1 << n));
    }
  }
  DiscriminatorConfig bad;
  bad.receptive_field = 20;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  DiscriminatorConfig cfg;
  auto d = build_patch_discriminator(cfg, 2);
  CHECK_THROWS_AS(d->forward(torch::rand({1, 3, 8, 8})), ConfigError);
}

TEST_CASE("classifier heads") {
  auto cfg = tiny_networks().classifier;
  auto f = build_classifier(cfg, 3);
  f->eval();
  auto x = torch::rand({5, 3, 16, 16});
  auto p = f->forward(x);
  CHECK((p.sizes() == torch::IntArrayRef{5, kNumEmotions}));
  CHECK((p.sum(1) - 1).abs().max().item<float>() < 1e-5f);
  cfg.task = Task::kClassification;
  auto fc = build_classifier(cfg, 3);
  fc->eval();
  auto logits = fc->forward(x);
  CHECK(torch::allclose(fc->probabilities(x), torch::softmax(logits, 1)));
  cfg.backbone = "nope";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("feature discriminator has three linear layers") {
  auto d = build_feature_discriminator(tiny_networks().feature_discriminator, 4);
  int linear = 0;
  for (auto& m : d->modules(false)) linear += m->as<torch::nn::Linear>() != nullptr;
  CHECK(linear == 3);
  CHECK((d->forward(torch::rand({6, kNumEmotions})).sizes() == torch::IntArrayRef{6, 2}));
  CHECK_THROWS_AS(d->forward(torch::rand({6, 7})), ConfigError);
}

TEST_CASE("model set networks share no parameters") {
  auto m = ModelSet::build(tiny_networks(), 5);
  std::set<const void*> seen;
  std::size_t total = 0;
  for (auto& [name, mod] : m.named()) {
    for (auto& p : mod->parameters()) {
      seen.insert(p.data_ptr());
      ++total;
    }
  }
  CHECK(seen.size() == total);
  CHECK(m.named().size() == 7);
}

TEST_CASE("same seed gives identical parameters") {
  auto a = ModelSet::build(tiny_networks(), 6);
  auto b = ModelSet::build(tiny_networks(), 6);
  auto c = ModelSet::build(tiny_networks(), 7);
  const auto na = a.named(), nb = b.named(), nc = c.named();
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(parameter_checksum(*na[i].second) == parameter_checksum(*nb[i].second));
    CHECK(parameter_checksum(*na[i].second) != parameter_checksum(*nc[i].second));
  }
  CHECK(parameter_checksum(*a.f_s) != parameter_checksum(*a.f_s_adapted));
}

TEST_CASE("outputs do not mix across the batch in inference mode") {
  torch::manual_seed(8);
  auto m = ModelSet::build(tiny_networks(), 9);
  auto x = torch::rand({6, 3, 16, 16});
  auto perm = torch::randperm(6, torch::kLong);
  for (auto& [name, mod] : m.named()) mod->eval();
  torch::NoGradGuard ng;
  auto check = [&](auto&& f, const torch::Tensor& in) {
    auto y = f(in);
    auto yp = f(in.index_select(0, perm));
    CHECK(torch::allclose(y.index_select(0, perm), yp, 1e-5, 1e-6));
  };
  check([&](const torch::Tensor& v) { return m.g_st->forward(v); }, x);
  check([&](const torch::Tensor& v) { return m.d_t->forward(v); }, x);
  check([&](const torch::Tensor& v) { return m.f_s->forward(v); }, x);
  check([&](const torch::Tensor& v) { return m.d_feat->forward(v); }, torch::rand({6, kNumEmotions}));
  // Generators and patch discriminators do not depend on the batch in training mode either.
  m.g_st->train();
  check([&](const torch::Tensor& v) { return m.g_st->forward(v); }, x);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = temp_dir("ckpt");
  auto a = ModelSet::build(tiny_networks(), 10);
  CheckpointManifest man;
  man.config = {{"k", 1}};
  man.epoch = 3;
  man.seed = 10;
  man.metric = 0.25;
  man.phase = "part_one";
  save_checkpoint(dir, a, man);
  const auto back = read_checkpoint_manifest(dir);
  CHECK(back.epoch == 3);
  CHECK(back.seed == 10);
  CHECK(back.metric == 0.25);
  CHECK(back.phase == "part_one");
  CHECK(back.config == man.config);

  auto b = ModelSet::build(tiny_networks(), 11);
  load_checkpoint(dir, b);
  const auto na = a.named(), nb = b.named();
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(parameter_checksum(*na[i].second) == parameter_checksum(*nb[i].second));
  }

  auto other = tiny_networks();
  other.generator.base_channels = 8;
  auto c = ModelSet::build(other, 12);
  CHECK_THROWS_AS(load_checkpoint(dir, c), ConfigError);
  CHECK_THROWS_AS(read_checkpoint_manifest(dir / "missing"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("custom backbones can be registered") {
  struct LinearHead : torch::nn::Module {
    torch::nn::Linear fc{nullptr};
    LinearHead(int64_t in, int64_t out) : fc(register_module("fc", torch::nn::Linear(in, out))) {}
    torch::Tensor forward(const torch::Tensor& x) { return fc->forward(x.flatten(1)); }
  };
  register_backbone("test_linear", [](const ClassifierConfig& c) {
    return torch::nn::AnyModule(std::make_shared<LinearHead>(c.channels * 16 * 16, c.num_classes));
  });
  auto cfg = tiny_networks().classifier;
  cfg.backbone = "test_linear";
  auto f = build_classifier(cfg, 1);
  CHECK((f->forward(torch::rand({2, 3, 16, 16})).sizes() == torch::IntArrayRef{2, kNumEmotions}));
}

}
