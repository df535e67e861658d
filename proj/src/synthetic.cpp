#include "cegan/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "cegan/error.hpp"

namespace cegan {
namespace {

// Extents are drawn from two bands either side of the size threshold.
constexpr double kSmallLo = 0.16, kSmallHi = 0.25;
constexpr double kLargeLo = 0.31, kLargeHi = 0.40;
constexpr double kSizeThreshold = 0.28;
constexpr double kVoteSoftness = 0.02;
constexpr double kDominantShare = 0.85;
constexpr double kPixelNoise = 0.02;
constexpr int kSuperSample = 2;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

bool inside(int shape, double dx, double dy, double e) {
  switch (shape) {
    case 0: return dx * dx + dy * dy <= e * e;
    case 1: return std::max(std::abs(dx), std::abs(dy)) <= 0.85 * e;
    case 2: return dy >= -e && dy <= e && std::abs(dx) <= (dy + e) / 2.0;
    default: {
      const double arm = e / 3.0;
      return (std::abs(dx) <= e && std::abs(dy) <= arm) || (std::abs(dy) <= e && std::abs(dx) <= arm);
    }
  }
}

SyntheticParams sample_params(int cls, int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticParams p;
  p.shape = cls / 2;
  const bool large = cls % 2 == 1;
  const double lo = large ? kLargeLo : kSmallLo;
  const double hi = large ? kLargeHi : kSmallHi;
  p.extent = size * (lo + (hi - lo) * u(rng));
  const double margin = p.extent + 1.0;
  p.cx = margin + (size - 2 * margin) * u(rng);
  p.cy = margin + (size - 2 * margin) * u(rng);
  p.foreground = hsv_to_rgb(u(rng), 0.6 + 0.4 * u(rng), 0.75 + 0.25 * u(rng));
  p.background = hsv_to_rgb(u(rng), 0.3 + 0.5 * u(rng), 0.05 + 0.25 * u(rng));
  return p;
}

SyntheticDomain make_domain(const SyntheticDomainSpec& spec, Domain domain) {
  std::seed_seq seq{static_cast<uint32_t>(spec.seed), static_cast<uint32_t>(spec.seed >> 32),
                    static_cast<uint32_t>(domain == Domain::kSource ? 0 : 1)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, kPixelNoise);
  const int n = spec.samples_per_domain;
  const int n_train = static_cast<int>(std::lround(n * spec.train_fraction));
  const int n_val = static_cast<int>(std::lround(n * spec.val_fraction));

  SyntheticDomain out;
  out.manifest.task = spec.task;
  out.dataset.task = spec.task;
  std::vector<torch::Tensor> images, targets;
  for (int i = 0; i < n; ++i) {
    auto p = sample_params(i % kNumEmotions, spec.image_size, rng);
    auto img = render_synthetic(p, spec.image_size);
    std::vector<float> jitter(static_cast<std::size_t>(img.numel()));
    for (auto& v : jitter) v = static_cast<float>(noise(rng));
    img = (img + torch::tensor(jitter).view(img.sizes())).clamp(0, 1);

    SampleRecord r;
    r.image = "synthetic/" + std::string(domain_name(domain)) + "/" + std::to_string(i) + ".png";
    r.domain = domain;
    r.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    if (spec.task == Task::kDistribution) {
      r.votes = vote_rule(p, spec.image_size, spec.votes_per_image);
    } else {
      r.label = label_rule(p, spec.image_size);
    }
    targets.push_back(record_target(r, spec.task));
    out.dataset.refs.push_back(r.image);
    out.dataset.splits.push_back(r.split);
    out.manifest.records.push_back(std::move(r));
    out.params.push_back(p);
    images.push_back(img);
  }
  auto batch = torch::stack(images);
  if (domain == Domain::kTarget) batch = apply_target_shift(batch, spec.target_shift);
  out.dataset.images = batch.contiguous();
  out.dataset.targets = torch::stack(targets);
  return out;
}

torch::Tensor gaussian_blur(const torch::Tensor& images, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> w;
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    w.push_back(static_cast<float>(std::exp(-(i * i) / (2.0 * sigma * sigma))));
    sum += w.back();
  }
  for (auto& v : w) v = static_cast<float>(v / sum);
  const auto k = static_cast<int64_t>(w.size());
  const auto c = images.size(1);
  auto kernel = torch::tensor(w);
  auto wv = kernel.view({1, 1, k, 1}).expand({c, 1, k, 1}).contiguous();
  auto wh = kernel.view({1, 1, 1, k}).expand({c, 1, 1, k}).contiguous();
  auto padded = torch::replication_pad2d(images, {radius, radius, radius, radius});
  auto out = torch::nn::functional::conv2d(padded, wv, torch::nn::functional::Conv2dFuncOptions().groups(c));
  return torch::nn::functional::conv2d(out, wh, torch::nn::functional::Conv2dFuncOptions().groups(c));
}

}  // namespace

bool TargetShift::is_identity() const {
  return hue_rotation_deg == 0.0 && contrast == 1.0 && brightness == 0.0 && gamma == 1.0 && blur_sigma == 0.0;
}

void SyntheticDomainSpec::validate() const {
  if (samples_per_domain < 1) throw ConfigError("synthetic: samples_per_domain must be >= 1");
  if (image_size < 16 || image_size % 4 != 0) throw ConfigError("synthetic: image_size must be a multiple of 4 and >= 16");
  if (!(train_fraction > 0) || !(val_fraction >= 0) || train_fraction + val_fraction > 1.0) {
    throw ConfigError("synthetic: split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
  }
  if (votes_per_image < 1) throw ConfigError("synthetic: votes_per_image must be >= 1");
  if (!(target_shift.gamma > 0)) throw ConfigError("synthetic: gamma must be > 0");
  if (target_shift.blur_sigma < 0) throw ConfigError("synthetic: blur_sigma must be >= 0");
}

nlohmann::json SyntheticDomainSpec::to_json() const {
  return {{"task", task == Task::kDistribution ? "distribution" : "classification"},
          {"image_size", image_size},
          {"samples_per_domain", samples_per_domain},
          {"train_fraction", train_fraction},
          {"val_fraction", val_fraction},
          {"votes_per_image", votes_per_image},
          {"seed", seed},
          {"target_shift",
           {{"hue_rotation_deg", target_shift.hue_rotation_deg},
            {"contrast", target_shift.contrast},
            {"brightness", target_shift.brightness},
            {"gamma", target_shift.gamma},
            {"blur_sigma", target_shift.blur_sigma}}}};
}

SyntheticDomainSpec SyntheticDomainSpec::from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {"task", "image_size", "samples_per_domain", "train_fraction",
                                             "val_fraction", "votes_per_image", "seed", "target_shift"};
  static const std::set<std::string> shift_keys = {"hue_rotation_deg", "contrast", "brightness", "gamma",
                                                   "blur_sigma"};
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) throw ConfigError("synthetic spec: unknown key '" + k + "'");
  }
  SyntheticDomainSpec s;
  try {
    if (j.contains("task")) {
      const auto t = j["task"].get<std::string>();
      if (t == "distribution") {
        s.task = Task::kDistribution;
      } else if (t == "classification") {
        s.task = Task::kClassification;
      } else {
        throw ConfigError("synthetic spec: task must be distribution or classification");
      }
    }
    s.image_size = j.value("image_size", s.image_size);
    s.samples_per_domain = j.value("samples_per_domain", s.samples_per_domain);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.val_fraction = j.value("val_fraction", s.val_fraction);
    s.votes_per_image = j.value("votes_per_image", s.votes_per_image);
    s.seed = j.value("seed", s.seed);
    if (j.contains("target_shift")) {
      const auto& t = j["target_shift"];
      if (t.is_string() && t.get<std::string>() == "identity") {
        s.target_shift = TargetShift::identity();
      } else {
        if (!t.is_object()) throw ConfigError("synthetic spec: target_shift must be an object or \"identity\"");
        for (const auto& [k, _] : t.items()) {
          if (!shift_keys.count(k)) throw ConfigError("synthetic spec: unknown target_shift key '" + k + "'");
        }
        s.target_shift.hue_rotation_deg = t.value("hue_rotation_deg", s.target_shift.hue_rotation_deg);
        s.target_shift.contrast = t.value("contrast", s.target_shift.contrast);
        s.target_shift.brightness = t.value("brightness", s.target_shift.brightness);
        s.target_shift.gamma = t.value("gamma", s.target_shift.gamma);
        s.target_shift.blur_sigma = t.value("blur_sigma", s.target_shift.blur_sigma);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

EmotionCategory label_rule(const SyntheticParams& p, int image_size) {
  const bool large = p.extent > kSizeThreshold * image_size;
  return EmotionCategory(2 * p.shape + (large ? 1 : 0));
}

VoteRecord vote_rule(const SyntheticParams& p, int image_size, int votes_per_image) {
  const double rel = p.extent / image_size;
  const double p_large = 1.0 / (1.0 + std::exp(-(rel - kSizeThreshold) / kVoteSoftness));
  const int shared = static_cast<int>(std::lround(kDominantShare * votes_per_image));
  const int large = static_cast<int>(std::lround(shared * p_large));
  VoteRecord v;
  v.counts[2 * p.shape] += shared - large;
  v.counts[2 * p.shape + 1] += large;
  const auto dominant = label_rule(p, image_size);
  const MikelsWheel wheel;
  const int pos = wheel.position(dominant);
  const auto left = wheel.order()[(pos + kNumEmotions - 1) % kNumEmotions];
  const auto right = wheel.order()[(pos + 1) % kNumEmotions];
  const int rest = votes_per_image - shared;
  v.counts[left.index()] += rest - rest / 2;
  v.counts[right.index()] += rest / 2;
  return v;
}

torch::Tensor render_synthetic(const SyntheticParams& p, int image_size) {
  const int s = image_size;
  std::vector<float> px(static_cast<std::size_t>(3 * s * s));
  const double step = 1.0 / kSuperSample;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuperSample; ++sy) {
        for (int sx = 0; sx < kSuperSample; ++sx) {
          const double dx = x + (sx + 0.5) * step - p.cx;
          const double dy = y + (sy + 0.5) * step - p.cy;
          hits += inside(p.shape, dx, dy, p.extent) ? 1 : 0;
        }
      }
      const double cover = static_cast<double>(hits) / (kSuperSample * kSuperSample);
      for (int c = 0; c < 3; ++c) {
        px[static_cast<std::size_t>((c * s + y) * s + x)] =
            static_cast<float>(cover * p.foreground[c] + (1.0 - cover) * p.background[c]);
      }
    }
  }
  return torch::tensor(px).view({3, s, s});
}

torch::Tensor apply_target_shift(const torch::Tensor& images, const TargetShift& shift) {
  if (images.dim() != 4 || images.size(1) != 3) throw ConfigError("target shift expects B x 3 x H x W images");
  auto x = images;
  if (shift.hue_rotation_deg != 0.0) {
    // Rotation about the grey axis of RGB space.
    const double a = shift.hue_rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a), k = (1.0 - c) / 3.0, r = std::sqrt(1.0 / 3.0) * s;
    auto m = torch::tensor({c + k, k - r, k + r, k + r, c + k, k - r, k - r, k + r, c + k}, torch::kDouble)
                 .to(x.scalar_type())
                 .view({3, 3});
    x = torch::einsum("ij,bjhw->bihw", {m, x});
  }
  x = 0.5 + shift.contrast * (x - 0.5) + shift.brightness;
  x = x.clamp(0, 1);
  if (shift.gamma != 1.0) x = x.pow(shift.gamma);
  if (shift.blur_sigma > 0.0) x = gaussian_blur(x, shift.blur_sigma);
  return x.clamp(0, 1).contiguous();
}

void write_synthetic_pair(const SyntheticPair& pair, const std::filesystem::path& dir) {
  for (const auto* domain : {&pair.source, &pair.target}) {
    for (std::size_t i = 0; i < domain->manifest.records.size(); ++i) {
      write_image(dir / domain->manifest.records[i].image, domain->dataset.images[static_cast<int64_t>(i)]);
    }
  }
  write_manifest(dir / "source.jsonl", pair.source.manifest);
  write_manifest(dir / "target.jsonl", pair.target.manifest);
}

SyntheticPair generate_synthetic_pair(const SyntheticDomainSpec& spec) {
  spec.validate();
  SyntheticPair pair;
  pair.source = make_domain(spec, Domain::kSource);
  pair.target = make_domain(spec, Domain::kTarget);
  return pair;
}

}  // namespace cegan
