#include "cegan/config.hpp"

#include <fstream>
#include <set>

#include "cegan/error.hpp"

namespace cegan {
namespace {

using nlohmann::json;

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    return ObjectReader(j_.at(key), where(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + where(k) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json generator_json(const GeneratorConfig& g) {
  return {{"resblocks", g.resblocks}, {"base_channels", g.base_channels}};
}

}  // namespace

std::string_view task_name(Task t) { return t == Task::kDistribution ? "distribution" : "classification"; }

Task task_from_name(const std::string& name) {
  if (name == "distribution") return Task::kDistribution;
  if (name == "classification") return Task::kClassification;
  throw ConfigError("task must be \"distribution\" or \"classification\", got \"" + name + "\"");
}

json to_json(const NetworkConfig& cfg) {
  return {{"image_size", cfg.generator.image_size},
          {"channels", cfg.generator.channels},
          {"generator", generator_json(cfg.generator)},
          {"discriminator",
           {{"receptive_field", cfg.discriminator.receptive_field},
            {"base_channels", cfg.discriminator.base_channels}}},
          {"classifier", {{"backbone", cfg.classifier.backbone}, {"base_channels", cfg.classifier.base_channels}}},
          {"feature_discriminator", {{"hidden", cfg.feature_discriminator.hidden}}}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig cfg;
  ObjectReader r(j, "networks");
  int image_size = cfg.generator.image_size;
  int channels = cfg.generator.channels;
  r.get("image_size", image_size);
  r.get("channels", channels);
  if (r.has("generator")) {
    auto g = r.child("generator");
    g.get("resblocks", cfg.generator.resblocks);
    g.get("base_channels", cfg.generator.base_channels);
    g.finish();
  }
  if (r.has("discriminator")) {
    auto d = r.child("discriminator");
    d.get("receptive_field", cfg.discriminator.receptive_field);
    d.get("base_channels", cfg.discriminator.base_channels);
    d.finish();
  }
  if (r.has("classifier")) {
    auto c = r.child("classifier");
    c.get("backbone", cfg.classifier.backbone);
    c.get("base_channels", cfg.classifier.base_channels);
    c.finish();
  }
  if (r.has("feature_discriminator")) {
    auto f = r.child("feature_discriminator");
    f.get("hidden", cfg.feature_discriminator.hidden);
    f.finish();
  }
  r.finish();
  cfg.generator.image_size = image_size;
  cfg.generator.channels = channels;
  cfg.discriminator.channels = channels;
  cfg.classifier.channels = channels;
  return cfg;
}

json to_json(const TrainingConfig& c) {
  std::vector<std::string> wheel;
  for (const auto& cat : c.distance.wheel.order()) wheel.emplace_back(cat.name());
  return {{"task", task_name(c.task)},
          {"part_one_epochs", c.part_one_epochs},
          {"part_two_epochs", c.part_two_epochs},
          {"part_one_batch", c.part_one_batch},
          {"part_two_batch", c.part_two_batch},
          {"max_steps_per_epoch", c.max_steps_per_epoch},
          {"generator_lr", c.generator_lr},
          {"discriminator_lr", c.discriminator_lr},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"classifier_lr", c.classifier_lr},
          {"classifier_momentum", c.classifier_momentum},
          {"part_two_lr", c.part_two_lr},
          {"feature_disc_lr", c.feature_disc_lr},
          {"thres", c.thres},
          {"weights", {{"beta", c.weights.beta}, {"gamma", c.weights.gamma}}},
          {"mix",
           {{"alpha", c.mix.alpha}, {"msssim_term", c.mix.term == MsSsimTerm::kOneMinus ? "one_minus" : "raw"}}},
          {"msssim",
           {{"scales", c.msssim.scales},
            {"k1", c.msssim.k1},
            {"k2", c.msssim.k2},
            {"dynamic_range", c.msssim.dynamic_range},
            {"scale_weights", c.msssim.scale_weights},
            {"window_size", c.msssim.window_size},
            {"window_sigma", c.msssim.window_sigma}}},
          {"distance",
           {{"kind", c.distance.kind == SemanticDistance::Kind::kSkl ? "skl" : "mikels"}, {"wheel", wheel}}},
          {"pool_capacity", c.pool_capacity},
          {"desc_warmup_fraction", c.desc_warmup_fraction},
          {"feature_alignment", c.feature_alignment},
          {"feature_from_logits", c.feature_from_logits},
          {"networks", to_json(c.networks)},
          {"seed", c.seed}};
}

TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig c;
  ObjectReader r(j, "training");
  std::string task = std::string(task_name(c.task));
  r.get("task", task);
  c.task = task_from_name(task);
  r.get("part_one_epochs", c.part_one_epochs);
  r.get("part_two_epochs", c.part_two_epochs);
  r.get("part_one_batch", c.part_one_batch);
  r.get("part_two_batch", c.part_two_batch);
  r.get("max_steps_per_epoch", c.max_steps_per_epoch);
  r.get("generator_lr", c.generator_lr);
  r.get("discriminator_lr", c.discriminator_lr);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("classifier_lr", c.classifier_lr);
  r.get("classifier_momentum", c.classifier_momentum);
  r.get("part_two_lr", c.part_two_lr);
  r.get("feature_disc_lr", c.feature_disc_lr);
  r.get("thres", c.thres);
  if (r.has("weights")) {
    auto w = r.child("weights");
    w.get("beta", c.weights.beta);
    w.get("gamma", c.weights.gamma);
    w.finish();
  }
  if (r.has("mix")) {
    auto m = r.child("mix");
    m.get("alpha", c.mix.alpha);
    std::string term = "one_minus";
    m.get("msssim_term", term);
    if (term == "one_minus") {
      c.mix.term = MsSsimTerm::kOneMinus;
    } else if (term == "raw") {
      c.mix.term = MsSsimTerm::kRaw;
    } else {
      throw ConfigError("training.mix.msssim_term must be \"one_minus\" or \"raw\"");
    }
    m.finish();
  }
  if (r.has("msssim")) {
    auto m = r.child("msssim");
    m.get("scales", c.msssim.scales);
    m.get("k1", c.msssim.k1);
    m.get("k2", c.msssim.k2);
    m.get("dynamic_range", c.msssim.dynamic_range);
    m.get("window_size", c.msssim.window_size);
    m.get("window_sigma", c.msssim.window_sigma);
    if (m.has("scale_weights")) {
      m.get("scale_weights", c.msssim.scale_weights);
    } else if (c.msssim.scales != static_cast<int>(c.msssim.scale_weights.size())) {
      c.msssim.scale_weights = MsSsimConfig::truncated(c.msssim.scales, c.msssim.window_size).scale_weights;
    }
    m.finish();
  }
  if (r.has("distance")) {
    auto d = r.child("distance");
    std::string kind = "skl";
    d.get("kind", kind);
    if (kind == "skl") {
      c.distance.kind = SemanticDistance::Kind::kSkl;
    } else if (kind == "mikels") {
      c.distance.kind = SemanticDistance::Kind::kMikels;
    } else {
      throw ConfigError("training.distance.kind must be \"skl\" or \"mikels\"");
    }
    if (d.has("wheel")) {
      std::vector<std::string> names;
      d.get("wheel", names);
      c.distance.wheel = MikelsWheel::from_names(names);
    }
    d.finish();
  }
  r.get("pool_capacity", c.pool_capacity);
  r.get("desc_warmup_fraction", c.desc_warmup_fraction);
  r.get("feature_alignment", c.feature_alignment);
  r.get("feature_from_logits", c.feature_from_logits);
  if (r.has("networks")) c.networks = network_config_from_json(r.raw("networks"));
  r.get("seed", c.seed);
  r.finish();
  c.networks.classifier.task = c.task;
  return c;
}

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  }
  const bool manifests = source_manifest.has_value() || target_manifest.has_value();
  if (manifests && synthetic) throw ConfigError("data: give either manifests or a synthetic block, not both");
  if (!manifests && !synthetic) throw ConfigError("data: no dataset configured");
  if (manifests) {
    if (!source_manifest || !target_manifest) throw ConfigError("data: both source and target manifests are required");
    for (const auto* p : {&*source_manifest, &*target_manifest}) {
      if (!std::filesystem::exists(*p)) throw ConfigError("data: manifest not found: " + p->string());
    }
  }
  if (synthetic) {
    synthetic->validate();
    if (synthetic->task != training.task) throw ConfigError("data.synthetic.task must match training.task");
    if (synthetic->image_size != images.image_size) {
      throw ConfigError("data.synthetic.image_size must match data.image_size");
    }
  }
  training.validate();
}

nlohmann::json RunConfig::to_json() const {
  json data = {{"image_size", images.image_size}, {"channels", images.channels}};
  if (source_manifest) data["source_manifest"] = source_manifest->string();
  if (target_manifest) data["target_manifest"] = target_manifest->string();
  if (synthetic) data["synthetic"] = synthetic->to_json();
  return {{"schema_version", schema_version},
          {"output_dir", output_dir.string()},
          {"data", data},
          {"transductive_selection", transductive_selection},
          {"training", cegan::to_json(training)}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig rc;
  ObjectReader r(j, "");
  if (!r.has("schema_version")) throw ConfigError("config is missing schema_version");
  r.get("schema_version", rc.schema_version);
  std::string out = rc.output_dir.string();
  r.get("output_dir", out);
  rc.output_dir = base_dir / out;
  r.get("transductive_selection", rc.transductive_selection);
  if (r.has("training")) rc.training = training_config_from_json(r.raw("training"));
  if (!r.has("data")) throw ConfigError("config is missing the data block");
  auto d = r.child("data");
  d.get("image_size", rc.images.image_size);
  d.get("channels", rc.images.channels);
  if (d.has("source_manifest")) {
    std::string p;
    d.get("source_manifest", p);
    rc.source_manifest = base_dir / p;
  }
  if (d.has("target_manifest")) {
    std::string p;
    d.get("target_manifest", p);
    rc.target_manifest = base_dir / p;
  }
  if (d.has("synthetic")) rc.synthetic = SyntheticDomainSpec::from_json(d.raw("synthetic"));
  d.finish();
  if (r.has("seed")) {
    uint64_t seed = 0;
    r.get("seed", seed);
    rc.training.seed = seed;
    if (rc.synthetic) rc.synthetic->seed = seed;
  }
  r.finish();
  auto& net = rc.training.networks;
  net.generator.image_size = rc.images.image_size;
  net.generator.channels = net.discriminator.channels = net.classifier.channels = rc.images.channels;
  net.classifier.task = rc.training.task;
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

}  // namespace cegan
