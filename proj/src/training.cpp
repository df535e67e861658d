#include "cegan/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cegan/config.hpp"
#include "cegan/error.hpp"

namespace cegan {
namespace {

constexpr int64_t kInferenceChunk = 256;

std::vector<torch::Tensor> parameters_of(std::initializer_list<std::shared_ptr<torch::nn::Module>> modules) {
  std::vector<torch::Tensor> out;
  for (const auto& m : modules) {
    auto p = m->parameters(true);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void zero_all_grads(const ModelSet& models) {
  for (const auto& [_, m] : models.named()) m->zero_grad();
}

// Classifiers hold batch-norm statistics; they run in training mode only
// while they are the networks being updated.
void classifier_modes(ModelSet& m, bool f_s_train, bool f_s_adapted_train) {
  m.f_s->train(f_s_train);
  m.f_s_adapted->train(f_s_adapted_train);
}

template <typename Optimizer>
void set_lr(Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) group.options().set_lr(lr);
}

torch::Tensor task_loss(Task task, const torch::Tensor& output, const torch::Tensor& targets) {
  return task == Task::kDistribution ? task_loss_distribution(output, targets)
                                     : task_loss_classification(output, targets);
}

uint64_t derive_seed(uint64_t seed, uint64_t stream) { return seed * 1000003ULL + stream; }

template <typename Optimizer>
void save_optimizer(const Optimizer& opt, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  archive.save_to(path.string());
}

template <typename Optimizer>
void load_optimizer(Optimizer& opt, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  opt.load(archive);
}

}  // namespace

ImagePool::ImagePool(std::size_t capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {
  buffer_.reserve(capacity);
}

torch::Tensor ImagePool::query(const torch::Tensor& image) {
  if (capacity_ == 0) return image;
  if (buffer_.size() < capacity_) {
    buffer_.push_back(image.detach().clone());
    return image;
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng_) < 0.5) return image;
  std::uniform_int_distribution<std::size_t> pick(0, capacity_ - 1);
  const auto idx = pick(rng_);
  auto stored = buffer_[idx];
  buffer_[idx] = image.detach().clone();
  return stored;
}

torch::Tensor ImagePool::query_batch(const torch::Tensor& images) {
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(images.size(0)));
  for (int64_t i = 0; i < images.size(0); ++i) out.push_back(query(images[i]));
  return torch::stack(out);
}

void TrainingConfig::validate() const {
  if (part_one_epochs < 1) throw ConfigError("training: part_one_epochs must be >= 1");
  if (part_two_epochs < 0) throw ConfigError("training: part_two_epochs must be >= 0");
  if (part_one_batch < 1 || part_two_batch < 1) throw ConfigError("training: batch sizes must be >= 1");
  if (max_steps_per_epoch < 0) throw ConfigError("training: max_steps_per_epoch must be >= 0");
  for (double lr : {generator_lr, discriminator_lr, classifier_lr, part_two_lr, feature_disc_lr}) {
    if (!(lr >= 0.0)) throw ConfigError("training: learning rates must be >= 0");
  }
  if (!(thres > 0.0 && thres <= 1.0)) throw ConfigError("training: thres must lie in (0, 1]");
  if (!(desc_warmup_fraction >= 0.0 && desc_warmup_fraction <= 1.0)) {
    throw ConfigError("training: desc_warmup_fraction must lie in [0, 1]");
  }
  if (pool_capacity < 0) throw ConfigError("training: pool_capacity must be >= 0");
  weights.validate();
  mix.validate();
  if (mix.alpha > 0.0) {
    msssim.validate();
    if (networks.generator.image_size < msssim.min_image_side()) {
      throw ConfigError("training: image_size " + std::to_string(networks.generator.image_size) +
                        " is too small for MS-SSIM with " + std::to_string(msssim.scales) +
                        " scales (minimum " + std::to_string(msssim.min_image_side()) + ")");
    }
  }
  distance.validate(task);
  networks.validate();
  if (networks.classifier.task != task) throw ConfigError("training: classifier head does not match the task");
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kPartOne: return "part_one";
    case Phase::kPartTwo: return "part_two";
    default: return "done";
  }
}

void TrainState::advance(Phase next) {
  if (static_cast<int>(next) < static_cast<int>(phase)) {
    throw Error("training phase cannot move from " + std::string(phase_name(phase)) + " back to " +
                std::string(phase_name(next)));
  }
  phase = next;
}

LossLog::LossLog(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_ = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc);
  if (!*out_) throw Error("cannot open loss log " + path.string());
}

void LossLog::write(const nlohmann::json& record) {
  if (out_) {
    *out_ << record.dump() << '\n';
    out_->flush();
  }
  records_.push_back(record);
}

double part_one_lr_factor(int epoch, int total) {
  const int half = total / 2;
  const double remaining = static_cast<double>(total - epoch) / static_cast<double>(total - half);
  return std::clamp(remaining, 0.0, 1.0);
}

std::vector<std::pair<std::string, uint64_t>> model_checksums(const ModelSet& models) {
  std::vector<std::pair<std::string, uint64_t>> out;
  for (const auto& [name, m] : models.named()) out.emplace_back(name, parameter_checksum(*m));
  return out;
}

Trainer::Trainer(TrainingConfig cfg, LabeledImages source_train, LabeledImages source_val,
                 UnlabeledImages target_train)
    : cfg_(std::move(cfg)),
      source_train_(std::move(source_train)),
      source_val_(std::move(source_val)),
      target_train_(std::move(target_train)),
      pool_s_(static_cast<std::size_t>(cfg_.pool_capacity), derive_seed(cfg_.seed, 11)),
      pool_t_(static_cast<std::size_t>(cfg_.pool_capacity), derive_seed(cfg_.seed, 12)) {
  cfg_.validate();
  if (source_train_.size() == 0) throw DataError("training: empty source training split");
  if (source_val_.size() == 0) throw DataError("training: empty source validation split");
  if (target_train_.size() == 0) throw DataError("training: empty target training split");
  if (source_train_.task != cfg_.task || source_val_.task != cfg_.task) {
    throw ConfigError("training: source labels do not match the configured task");
  }
  models_ = ModelSet::build(cfg_.networks, cfg_.seed);
  const auto& m = models_;
  gen_opt_ = std::make_unique<torch::optim::Adam>(
      parameters_of({m.g_st.ptr(), m.g_ts.ptr()}),
      torch::optim::AdamOptions(cfg_.generator_lr).betas({cfg_.adam_beta1, cfg_.adam_beta2}));
  disc_opt_ = std::make_unique<torch::optim::Adam>(
      parameters_of({m.d_s.ptr(), m.d_t.ptr()}),
      torch::optim::AdamOptions(cfg_.discriminator_lr).betas({cfg_.adam_beta1, cfg_.adam_beta2}));
  cls_opt_ = std::make_unique<torch::optim::SGD>(
      parameters_of({m.f_s.ptr(), m.f_s_adapted.ptr()}),
      torch::optim::SGDOptions(cfg_.classifier_lr).momentum(cfg_.classifier_momentum));
  feat_disc_opt_ = std::make_unique<torch::optim::Adam>(parameters_of({m.d_feat.ptr()}),
                                                        torch::optim::AdamOptions(cfg_.feature_disc_lr));
  adapted_opt_ = std::make_unique<torch::optim::Adam>(parameters_of({m.f_s_adapted.ptr()}),
                                                      torch::optim::AdamOptions(cfg_.part_two_lr));
  const BatchSampler sampler(source_train_.size(), cfg_.part_one_batch, std::nullopt);
  int64_t per_epoch = sampler.batches_per_epoch();
  if (cfg_.max_steps_per_epoch > 0) per_epoch = std::min<int64_t>(per_epoch, cfg_.max_steps_per_epoch);
  part_one_total_steps_ = per_epoch * cfg_.part_one_epochs;
}

void Trainer::notify(std::string_view substep, bool after) {
  if (observer_) observer_(substep, after);
}

void Trainer::log(const nlohmann::json& record) {
  if (log_) log_->write(record);
}

void Trainer::check_finite(const nlohmann::json& losses) const {
  for (const auto& [name, v] : losses.items()) {
    if (v.is_number_float() && !std::isfinite(v.get<double>())) {
      std::ostringstream msg;
      msg << "non-finite loss '" << name << "' (" << v.get<double>() << ") in " << phase_name(state_.phase)
          << " at step " << state_.step;
      throw TrainingAbort(msg.str());
    }
  }
}

double Trainer::effective_gamma() const {
  if (cfg_.desc_warmup_fraction <= 0.0) return cfg_.weights.gamma;
  const double warmup_steps = cfg_.desc_warmup_fraction * static_cast<double>(part_one_total_steps_);
  if (warmup_steps <= 0.0) return cfg_.weights.gamma;
  const double ramp = std::min(1.0, static_cast<double>(state_.step + 1) / warmup_steps);
  return cfg_.weights.gamma * ramp;
}

double Trainer::current_generator_lr() const {
  return gen_opt_->param_groups().front().options().get_lr();
}

void Trainer::set_part_one_lr(int epoch) {
  const double f = part_one_lr_factor(epoch, cfg_.part_one_epochs);
  set_lr(*gen_opt_, cfg_.generator_lr * f);
  set_lr(*disc_opt_, cfg_.discriminator_lr * f);
  set_lr(*cls_opt_, cfg_.classifier_lr * f);
}

torch::Tensor Trainer::classifier_features(Classifier& classifier, const torch::Tensor& images) {
  auto out = classifier->forward(images);
  if (cfg_.feature_from_logits) {
    // Distribution heads emit probabilities; their log is the logit up to a constant.
    return cfg_.task == Task::kDistribution ? (out + kKlEpsilon).log() : out;
  }
  return cfg_.task == Task::kDistribution ? out : torch::softmax(out, 1);
}

nlohmann::json Trainer::part_one_step(const LabeledImages& source, const torch::Tensor& target) {
  if (state_.phase != Phase::kPartOne) throw Error("part_one_step called outside part one");
  auto& m = models_;
  const auto& xs = source.images;
  const auto& xt = target;
  const double gamma = effective_gamma();
  nlohmann::json rec = {{"part", 1}, {"epoch", state_.part_one_epoch + 1}, {"step", state_.step}};

  // (i) generators; discriminators and classifiers fixed.
  notify("generators", false);
  {
    zero_all_grads(m);
    classifier_modes(m, false, false);
    auto fake_t = m.g_st->forward(xs);
    auto rec_s = m.g_ts->forward(fake_t);
    auto fake_s = m.g_ts->forward(xt);
    auto rec_t = m.g_st->forward(fake_s);
    GeneratorLossParts parts;
    parts.adv_st = lsgan_generator_loss(m.d_t->forward(fake_t));
    parts.adv_ts = lsgan_generator_loss(m.d_s->forward(fake_s));
    parts.mixed_cyc = mixed_cycle_loss(xs, rec_s, xt, rec_t, cfg_.mix, cfg_.msssim);
    if (cfg_.weights.gamma > 0.0) {
      torch::Tensor ref_s, ref_t;
      {
        torch::NoGradGuard no_grad;
        ref_s = m.f_s->probabilities(xs);
        ref_t = m.f_s_adapted->probabilities(xt);
      }
      parts.desc_st = desc_loss(cfg_.distance, ref_s, m.f_s_adapted->probabilities(fake_t));
      parts.desc_ts = desc_loss(cfg_.distance, ref_t, m.f_s->probabilities(fake_s));
    } else {
      parts.desc_st = torch::zeros({}, xs.options());
      parts.desc_ts = torch::zeros({}, xs.options());
    }
    LossWeights w = cfg_.weights;
    w.gamma = gamma;
    auto total = total_stage_one_generator_loss(parts, w);
    rec["adv_st"] = parts.adv_st.item<double>();
    rec["adv_ts"] = parts.adv_ts.item<double>();
    rec["mixed_cyc"] = parts.mixed_cyc.item<double>();
    rec["desc_st"] = parts.desc_st.item<double>();
    rec["desc_ts"] = parts.desc_ts.item<double>();
    rec["gen_total"] = total.item<double>();
    check_finite(rec);
    total.backward();
    gen_opt_->step();
  }
  notify("generators", true);

  // (ii) discriminators on real images and pooled fakes from the current generators.
  notify("discriminators", false);
  {
    zero_all_grads(m);
    torch::Tensor fake_t, fake_s;
    {
      torch::NoGradGuard no_grad;
      fake_t = pool_t_.query_batch(m.g_st->forward(xs));
      fake_s = pool_s_.query_batch(m.g_ts->forward(xt));
    }
    auto loss_t = lsgan_discriminator_loss(m.d_t->forward(xt), m.d_t->forward(fake_t));
    auto loss_s = lsgan_discriminator_loss(m.d_s->forward(xs), m.d_s->forward(fake_s));
    rec["disc_t"] = loss_t.item<double>();
    rec["disc_s"] = loss_s.item<double>();
    check_finite(rec);
    (loss_t + loss_s).backward();
    disc_opt_->step();
  }
  notify("discriminators", true);

  // (iii) classifiers: F_S on source images, F'_S on freshly adapted images.
  notify("classifiers", false);
  {
    zero_all_grads(m);
    classifier_modes(m, true, true);
    torch::Tensor adapted;
    {
      torch::NoGradGuard no_grad;
      adapted = m.g_st->forward(xs);
    }
    auto loss_fs = task_loss(cfg_.task, m.f_s->forward(xs), source.targets);
    auto loss_fsa = task_loss(cfg_.task, m.f_s_adapted->forward(adapted), source.targets);
    rec["task_fs"] = loss_fs.item<double>();
    rec["task_fs_adapted"] = loss_fsa.item<double>();
    check_finite(rec);
    (loss_fs + loss_fsa).backward();
    cls_opt_->step();
    classifier_modes(m, false, false);
  }
  notify("classifiers", true);

  rec["lr"] = current_generator_lr();
  rec["gamma"] = gamma;
  ++state_.step;
  log(rec);
  return rec;
}

nlohmann::json Trainer::part_two_step(const LabeledImages& adapted, const torch::Tensor& target) {
  if (state_.phase != Phase::kPartTwo) throw Error("part_two_step called outside part two");
  auto& m = models_;
  nlohmann::json rec = {{"part", 2}, {"epoch", state_.part_two_epoch + 1}, {"step", state_.step}};

  // F'_S keeps its part-one normalization statistics throughout part two.
  classifier_modes(m, false, false);
  notify("feature_discriminator", false);
  {
    zero_all_grads(m);
    torch::Tensor fa, ft;
    {
      torch::NoGradGuard no_grad;
      fa = classifier_features(m.f_s_adapted, adapted.images);
      ft = classifier_features(m.f_s_adapted, target);
    }
    auto losses = feature_alignment_losses(m.d_feat->forward(fa), m.d_feat->forward(ft));
    rec["d_feat"] = losses.disc_loss.item<double>();
    check_finite(rec);
    losses.disc_loss.backward();
    feat_disc_opt_->step();
    torch::NoGradGuard no_grad;
    const double measured = feature_discriminator_accuracy(m.d_feat->forward(fa), m.d_feat->forward(ft));
    rec["d_feat_acc"] = accuracy_override_.value_or(measured);
  }
  notify("feature_discriminator", true);

  const bool gate = rec["d_feat_acc"].get<double>() > cfg_.thres;
  rec["updated"] = gate;
  notify("adapted_classifier", false);
  if (gate) {
    zero_all_grads(m);
    auto conf = feature_alignment_losses(m.d_feat->forward(classifier_features(m.f_s_adapted, adapted.images)),
                                         m.d_feat->forward(classifier_features(m.f_s_adapted, target)));
    auto task = task_loss(cfg_.task, m.f_s_adapted->forward(adapted.images), adapted.targets);
    rec["feat_conf"] = conf.gen_side_loss.item<double>();
    rec["task_fs_adapted"] = task.item<double>();
    check_finite(rec);
    (conf.gen_side_loss + task).backward();
    adapted_opt_->step();
  }
  notify("adapted_classifier", true);

  rec["lr"] = cfg_.part_two_lr;
  ++state_.step;
  log(rec);
  return rec;
}

torch::Tensor Trainer::translate_all(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (int64_t start = 0; start < images.size(0); start += kInferenceChunk) {
    const auto end = std::min(start + kInferenceChunk, images.size(0));
    out.push_back(models_.g_st->forward(images.slice(0, start, end)));
  }
  return torch::cat(out);
}

double Trainer::validate() {
  if (validation_hook_) return validation_hook_(models_);
  const auto adapted = translate_all(source_val_.images);
  auto& f = models_.f_s_adapted;
  const bool was_training = f->is_training();
  f->eval();
  torch::NoGradGuard no_grad;
  double total = 0.0;
  for (int64_t start = 0; start < adapted.size(0); start += kInferenceChunk) {
    const auto end = std::min(start + kInferenceChunk, adapted.size(0));
    const auto n = static_cast<double>(end - start);
    total += n * task_loss(cfg_.task, f->forward(adapted.slice(0, start, end)),
                           source_val_.targets.slice(0, start, end))
                     .item<double>();
  }
  f->train(was_training);
  return total / static_cast<double>(adapted.size(0));
}

void Trainer::run_part_one() {
  if (state_.phase != Phase::kPartOne) return;
  const BatchSampler src_sampler(source_train_.size(), cfg_.part_one_batch, derive_seed(cfg_.seed, 1));
  const BatchSampler tgt_sampler(target_train_.size(), cfg_.part_one_batch, derive_seed(cfg_.seed, 2));
  while (state_.part_one_epoch < cfg_.part_one_epochs) {
    const int epoch = state_.part_one_epoch;
    set_part_one_lr(epoch);
    const auto src_batches = src_sampler.epoch(epoch);
    const auto tgt_batches = tgt_sampler.epoch(epoch);
    std::size_t steps = src_batches.size();
    if (cfg_.max_steps_per_epoch > 0) steps = std::min<std::size_t>(steps, cfg_.max_steps_per_epoch);
    for (std::size_t i = 0; i < steps; ++i) {
      const auto source = source_train_.index(src_batches[i]);
      const auto target = target_train_.images.index_select(0, tgt_batches[i % tgt_batches.size()]);
      part_one_step(source, target);
    }
    const double val = validate();
    state_.validation_history.push_back(val);
    const bool improved = !state_.best_validation ||
                          val < *state_.best_validation;
    state_.part_one_epoch = epoch + 1;
    if (improved) {
      state_.best_validation = val;
      state_.best_epoch = state_.part_one_epoch;
      best_ = models_.clone();
      if (!checkpoint_dir_.empty()) save(checkpoint_dir_, "best");
    }
    log({{"part", 1},
         {"event", "epoch_end"},
         {"epoch", state_.part_one_epoch},
         {"step", state_.step},
         {"validation", val},
         {"best_validation", *state_.best_validation},
         {"next_lr", cfg_.generator_lr * part_one_lr_factor(state_.part_one_epoch, cfg_.part_one_epochs)}});
    if (!checkpoint_dir_.empty()) save(checkpoint_dir_, "latest");
  }
  set_part_one_lr(cfg_.part_one_epochs);
  if (best_) {
    // Continue from the best-validation translator and adapted classifier.
    torch::NoGradGuard no_grad;
    using ModulePair = std::pair<std::shared_ptr<torch::nn::Module>, std::shared_ptr<torch::nn::Module>>;
    for (const auto& [dst, src] : {ModulePair{models_.g_st.ptr(), best_->g_st.ptr()},
                                   ModulePair{models_.f_s_adapted.ptr(), best_->f_s_adapted.ptr()}}) {
      auto dp = dst->named_parameters(true);
      for (const auto& item : src->named_parameters(true)) dp[item.key()].copy_(item.value());
    }
  }
  state_.advance(cfg_.feature_alignment && cfg_.part_two_epochs > 0 ? Phase::kPartTwo : Phase::kDone);
}

void Trainer::run_part_two() {
  if (state_.phase != Phase::kPartTwo) return;
  const LabeledImages adapted{source_train_.task, translate_all(source_train_.images), source_train_.targets};
  const BatchSampler src_sampler(adapted.size(), cfg_.part_two_batch, derive_seed(cfg_.seed, 3));
  const BatchSampler tgt_sampler(target_train_.size(), cfg_.part_two_batch, derive_seed(cfg_.seed, 4));
  while (state_.part_two_epoch < cfg_.part_two_epochs) {
    const int epoch = state_.part_two_epoch;
    const auto src_batches = src_sampler.epoch(epoch);
    const auto tgt_batches = tgt_sampler.epoch(epoch);
    int updates = 0;
    for (std::size_t i = 0; i < src_batches.size(); ++i) {
      const auto rec = part_two_step(adapted.index(src_batches[i]),
                                     target_train_.images.index_select(0, tgt_batches[i % tgt_batches.size()]));
      updates += rec["updated"].get<bool>() ? 1 : 0;
    }
    state_.part_two_epoch = epoch + 1;
    log({{"part", 2}, {"event", "epoch_end"}, {"epoch", state_.part_two_epoch}, {"step", state_.step},
         {"classifier_updates", updates}});
    if (!checkpoint_dir_.empty()) save(checkpoint_dir_, "latest");
  }
  state_.advance(Phase::kDone);
}

void Trainer::train() {
  torch::manual_seed(derive_seed(cfg_.seed, 5));
  run_part_one();
  run_part_two();
  if (state_.phase == Phase::kPartTwo) state_.advance(Phase::kDone);
  if (!checkpoint_dir_.empty()) save(checkpoint_dir_, "final");
}

void Trainer::save(const std::filesystem::path& dir, const std::string& tag) const {
  const auto out = dir / tag;
  const bool is_best = tag == "best";
  CheckpointManifest manifest;
  manifest.config = to_json(cfg_);
  manifest.seed = cfg_.seed;
  manifest.epoch = is_best ? state_.best_epoch : state_.part_one_epoch + state_.part_two_epoch;
  manifest.metric = state_.best_validation.value_or(0.0);
  manifest.phase = std::string(phase_name(state_.phase));
  save_checkpoint(out, is_best && best_ ? *best_ : models_, manifest);
  if (is_best) return;
  save_optimizer(*gen_opt_, out / "opt_generators.pt");
  save_optimizer(*disc_opt_, out / "opt_discriminators.pt");
  save_optimizer(*cls_opt_, out / "opt_classifiers.pt");
  save_optimizer(*feat_disc_opt_, out / "opt_feature_discriminator.pt");
  save_optimizer(*adapted_opt_, out / "opt_adapted_classifier.pt");
  nlohmann::json st = {{"phase", phase_name(state_.phase)},
                       {"part_one_epoch", state_.part_one_epoch},
                       {"part_two_epoch", state_.part_two_epoch},
                       {"step", state_.step},
                       {"best_epoch", state_.best_epoch},
                       {"validation_history", state_.validation_history}};
  if (state_.best_validation) st["best_validation"] = *state_.best_validation;
  std::ofstream f(out / "train_state.json");
  f << st.dump(2) << '\n';
}

void Trainer::resume(const std::filesystem::path& dir) {
  load_checkpoint(dir, models_);
  load_optimizer(*gen_opt_, dir / "opt_generators.pt");
  load_optimizer(*disc_opt_, dir / "opt_discriminators.pt");
  load_optimizer(*cls_opt_, dir / "opt_classifiers.pt");
  load_optimizer(*feat_disc_opt_, dir / "opt_feature_discriminator.pt");
  load_optimizer(*adapted_opt_, dir / "opt_adapted_classifier.pt");
  std::ifstream f(dir / "train_state.json");
  if (!f) throw ConfigError("checkpoint " + dir.string() + " has no train_state.json");
  nlohmann::json st;
  f >> st;
  const auto phase = st.at("phase").get<std::string>();
  state_.phase = phase == "part_one" ? Phase::kPartOne : (phase == "part_two" ? Phase::kPartTwo : Phase::kDone);
  state_.part_one_epoch = st.at("part_one_epoch").get<int>();
  state_.part_two_epoch = st.at("part_two_epoch").get<int>();
  state_.step = st.at("step").get<int64_t>();
  state_.best_epoch = st.value("best_epoch", 0);
  state_.validation_history = st.value("validation_history", std::vector<double>{});
  if (st.contains("best_validation")) state_.best_validation = st["best_validation"].get<double>();
  const auto best_dir = dir.parent_path() / "best";
  if (std::filesystem::exists(best_dir / "manifest.json")) {
    best_ = models_.clone();
    load_checkpoint(best_dir, *best_);
  }
}

torch::Tensor predict_probabilities(Classifier& classifier, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  const bool was_training = classifier->is_training();
  classifier->eval();
  std::vector<torch::Tensor> out;
  for (int64_t start = 0; start < images.size(0); start += kInferenceChunk) {
    const auto end = std::min(start + kInferenceChunk, images.size(0));
    out.push_back(classifier->probabilities(images.slice(0, start, end)));
  }
  classifier->train(was_training);
  return torch::cat(out);
}

MetricsReport evaluate(Classifier& classifier, const LabeledImages& data) {
  if (data.size() == 0) throw DataError("evaluate: empty split");
  if (classifier->config().task != data.task) {
    throw ConfigError("evaluate: classifier task does not match the dataset labels");
  }
  const auto probs = predict_probabilities(classifier, data.images).to(torch::kDouble).contiguous();
  const auto n = data.size();
  if (data.task == Task::kDistribution) {
    const auto labels = data.targets.to(torch::kDouble).contiguous();
    if (torch::isnan(labels).any().item<bool>()) throw DataError("evaluate: split has records without labels");
    std::vector<EmotionDistribution> preds, truth;
    preds.reserve(static_cast<std::size_t>(n));
    truth.reserve(static_cast<std::size_t>(n));
    auto pa = probs.accessor<double, 2>();
    auto la = labels.accessor<double, 2>();
    for (int64_t i = 0; i < n; ++i) {
      std::array<double, kNumEmotions> p{}, l{};
      double ps = 0, ls = 0;
      for (int c = 0; c < kNumEmotions; ++c) {
        p[c] = pa[i][c];
        l[c] = la[i][c];
        ps += p[c];
        ls += l[c];
      }
      for (int c = 0; c < kNumEmotions; ++c) {
        p[c] /= ps;
        l[c] /= ls;
      }
      preds.emplace_back(p);
      truth.emplace_back(l);
    }
    return evaluate_distributions(preds, truth);
  }
  const auto pred_cls = probs.argmax(1).contiguous();
  const auto labels = data.targets.to(torch::kLong).contiguous();
  if ((labels < 0).any().item<bool>()) throw DataError("evaluate: split has records without labels");
  std::vector<EmotionCategory> preds, truth;
  auto pa = pred_cls.accessor<int64_t, 1>();
  auto la = labels.accessor<int64_t, 1>();
  for (int64_t i = 0; i < n; ++i) {
    preds.emplace_back(static_cast<int>(pa[i]));
    truth.emplace_back(static_cast<int>(la[i]));
  }
  return evaluate_classification(preds, truth);
}

Classifier train_supervised_classifier(const TrainingConfig& cfg, const LabeledImages& data, int epochs,
                                       uint64_t seed) {
  if (data.size() == 0) throw DataError("train_supervised_classifier: empty data");
  auto ccfg = cfg.networks.classifier;
  ccfg.task = data.task;
  auto classifier = build_classifier(ccfg, derive_seed(seed, 21));
  torch::optim::SGD opt(classifier->parameters(),
                        torch::optim::SGDOptions(cfg.classifier_lr).momentum(cfg.classifier_momentum));
  const BatchSampler sampler(data.size(), cfg.part_one_batch, derive_seed(seed, 22));
  for (int e = 0; e < epochs; ++e) {
    for (opt.param_groups().front().options().set_lr(cfg.classifier_lr * part_one_lr_factor(e, epochs));
         const auto& idx : sampler.epoch(e)) {
      const auto batch = data.index(idx);
      opt.zero_grad();
      auto loss = task_loss(data.task, classifier->forward(batch.images), batch.targets);
      if (!std::isfinite(loss.item<double>())) throw TrainingAbort("non-finite classifier loss");
      loss.backward();
      opt.step();
    }
  }
  classifier->eval();
  return classifier;
}

}  // namespace cegan
