// cegan: synthetic data, training, evaluation, translation dumps and reports.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include "cegan/config.hpp"
#include "cegan/data.hpp"
#include "cegan/error.hpp"
#include "cegan/report.hpp"
#include "cegan/synthetic.hpp"
#include "cegan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cegan;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitRuntime = 2;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed to write " + path.string());
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void print_class_counts(const std::string& label, const Dataset& ds) {
  std::array<int64_t, kNumEmotions> counts{};
  auto cls = (ds.task == Task::kDistribution ? ds.targets.argmax(1) : ds.targets).contiguous();
  for (int64_t i = 0; i < cls.size(0); ++i) {
    const auto c = cls[i].item<int64_t>();
    if (c >= 0 && c < kNumEmotions) ++counts[static_cast<std::size_t>(c)];
  }
  std::cout << label << ":";
  for (int c = 0; c < kNumEmotions; ++c) std::cout << ' ' << emotion_name(c) << '=' << counts[static_cast<std::size_t>(c)];
  std::cout << '\n';
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out = "data/synthetic";
  std::optional<uint64_t> seed;
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  auto spec = SyntheticDomainSpec::from_json(read_json(a.config));
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  prepare_out_dir(a.out, a.force);
  const auto pair = generate_synthetic_pair(spec);
  write_synthetic_pair(pair, a.out);
  write_json(fs::path(a.out) / "spec.json", spec.to_json());
  print_class_counts("source", pair.source.dataset);
  print_class_counts("target", pair.target.dataset);
  std::cout << "wrote " << (fs::path(a.out) / "source.jsonl").string() << " and "
            << (fs::path(a.out) / "target.jsonl").string() << '\n';
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::string> out;
  std::optional<uint64_t> seed;
  bool force = false;
  bool resume = false;
};

struct Domains {
  Dataset source;
  Dataset target;
};

Domains load_domains(const RunConfig& rc) {
  if (rc.synthetic) {
    auto pair = generate_synthetic_pair(*rc.synthetic);
    return {std::move(pair.source.dataset), std::move(pair.target.dataset)};
  }
  const auto src = load_manifest(*rc.source_manifest);
  const auto tgt = load_manifest(*rc.target_manifest);
  if (src.task != rc.training.task || tgt.task != rc.training.task) {
    throw ConfigError("manifest labels do not match training.task");
  }
  return {load_dataset(src, rc.images), load_dataset(tgt, rc.images)};
}

bool has_split(const Dataset& ds, const std::string& split) {
  return std::find(ds.splits.begin(), ds.splits.end(), split) != ds.splits.end();
}

// Source validation images: the "val" split, or every 20th training image
// when the manifest has none.
std::pair<LabeledImages, LabeledImages> source_train_val(const Dataset& ds) {
  auto train = ds.labeled("train");
  if (has_split(ds, "val")) return {train, ds.labeled("val")};
  std::vector<int64_t> keep, held;
  for (int64_t i = 0; i < train.size(); ++i) (i % 20 == 19 ? held : keep).push_back(i);
  if (held.empty()) throw DataError("source train split is too small to hold out validation images");
  return {train.index(torch::tensor(keep, torch::kLong)), train.index(torch::tensor(held, torch::kLong))};
}

LabeledImages eval_split(const Dataset& ds) {
  if (has_split(ds, "test")) return ds.labeled("test");
  if (has_split(ds, "val")) return ds.labeled("val");
  return ds.labeled("train");
}

bool fully_labeled(const LabeledImages& d) {
  if (d.task == Task::kDistribution) return !d.targets.isnan().any().item<bool>();
  return (d.targets >= 0).all().item<bool>();
}

int cmd_train(const TrainArgs& a) {
  auto rc = RunConfig::load(a.config);
  if (a.out) rc.output_dir = *a.out;
  if (a.seed) {
    rc.training.seed = *a.seed;
    if (rc.synthetic) rc.synthetic->seed = *a.seed;
  }
  rc.validate();
  const fs::path out = rc.output_dir;
  const auto ckpt = out / "checkpoints";
  if (a.resume) {
    if (!fs::exists(ckpt / "latest" / "train_state.json")) {
      throw ConfigError("nothing to resume in " + out.string());
    }
  } else {
    prepare_out_dir(out, a.force);
  }

  const auto domains = load_domains(rc);
  auto [src_train, src_val] = source_train_val(domains.source);
  const auto tgt_train = domains.target.unlabeled("train");
  write_json(out / "config.json", rc.to_json());

  torch::manual_seed(rc.training.seed);
  Trainer trainer(rc.training, src_train, src_val, tgt_train);
  LossLog log(out / "loss_log.jsonl", a.resume);
  trainer.set_log(&log);
  trainer.set_checkpoint_dir(ckpt);
  if (rc.transductive_selection) {
    auto tgt_val = domains.target.labeled(has_split(domains.target, "val") ? "val" : "train");
    if (!fully_labeled(tgt_val)) throw DataError("transductive selection needs labelled target images");
    const bool dist = rc.training.task == Task::kDistribution;
    trainer.set_validation_hook([tgt_val, dist](ModelSet& m) {
      const auto r = evaluate(m.f_s_adapted, tgt_val);
      return dist ? *r.kl : 1.0 - *r.average_accuracy;
    });
  }
  if (a.resume) {
    trainer.resume(ckpt / "latest");
    std::cout << "resuming at " << phase_name(trainer.state().phase) << " part-one epoch "
              << trainer.state().part_one_epoch << ", part-two epoch " << trainer.state().part_two_epoch << '\n';
  }
  trainer.train();
  trainer.save(ckpt, "final");

  json report = {{"best_validation", trainer.state().best_validation.value_or(0.0)},
                 {"best_epoch", trainer.state().best_epoch},
                 {"source_val", evaluate(trainer.models().f_s_adapted, src_val).to_json()}};
  const auto tgt_eval = eval_split(domains.target);
  if (fully_labeled(tgt_eval)) {
    report["target"] = evaluate(trainer.models().f_s_adapted, tgt_eval).to_json();
    report["target_source_only"] = evaluate(trainer.models().f_s, tgt_eval).to_json();
  }
  write_json(out / "metrics.json", report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

// --- checkpoint helpers ----------------------------------------------------

struct LoadedCheckpoint {
  TrainingConfig cfg;
  ModelSet models;
};

LoadedCheckpoint load_models(const fs::path& dir) {
  const auto manifest = read_checkpoint_manifest(dir);
  auto cfg = training_config_from_json(manifest.config);
  auto models = ModelSet::build(cfg.networks, cfg.seed);
  load_checkpoint(dir, models);
  return {cfg, models};
}

ImageLoadOptions image_options(const TrainingConfig& cfg) {
  return {cfg.networks.generator.image_size, cfg.networks.generator.channels};
}

// --- evaluate --------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::optional<std::string> out;
  std::optional<uint64_t> seed;
  bool source_only = false;
  bool oracle = false;
  int oracle_epochs = 20;
};

int cmd_evaluate(const EvalArgs& a) {
  if (a.source_only && a.oracle) throw ConfigError("--source-only and --oracle are exclusive");
  auto ck = load_models(a.checkpoint);
  const auto manifest = load_manifest(a.manifest);
  if (manifest.task != ck.cfg.task) throw ConfigError("manifest labels do not match the checkpoint task");
  const auto ds = load_dataset(manifest, image_options(ck.cfg));
  const auto data = ds.labeled(a.split);
  if (!fully_labeled(data)) throw DataError("split '" + a.split + "' has unlabelled images");

  MetricsReport report;
  std::string model = "adapted";
  if (a.oracle) {
    const auto train = ds.labeled("train");
    if (!fully_labeled(train)) throw DataError("oracle needs labels on the train split");
    auto clf = train_supervised_classifier(ck.cfg, train, a.oracle_epochs, a.seed.value_or(ck.cfg.seed));
    report = evaluate(clf, data);
    model = "oracle";
  } else if (a.source_only) {
    report = evaluate(ck.models.f_s, data);
    model = "source_only";
  } else {
    report = evaluate(ck.models.f_s_adapted, data);
  }
  auto j = report.to_json();
  j["model"] = model;
  j["split"] = a.split;
  if (a.out) write_json(*a.out, j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

// --- translate -------------------------------------------------------------

struct TranslateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out = "translated";
  std::optional<std::string> split;
  bool force = false;
  int sheet_columns = 8;
};

// Pairs (original above adapted) tiled left to right, wrapping every `columns` pairs.
torch::Tensor contact_sheet(const torch::Tensor& originals, const torch::Tensor& adapted, int columns) {
  const auto n = originals.size(0);
  const auto c = originals.size(1), h = originals.size(2), w = originals.size(3);
  const int64_t cols = std::min<int64_t>(columns, n);
  const int64_t rows = (n + cols - 1) / cols;
  auto sheet = torch::ones({c, rows * 2 * h, cols * w});
  for (int64_t i = 0; i < n; ++i) {
    const auto r = i / cols, col = i % cols;
    sheet.slice(1, 2 * r * h, (2 * r + 1) * h).slice(2, col * w, (col + 1) * w).copy_(originals[i]);
    sheet.slice(1, (2 * r + 1) * h, (2 * r + 2) * h).slice(2, col * w, (col + 1) * w).copy_(adapted[i]);
  }
  return sheet;
}

int cmd_translate(const TranslateArgs& a) {
  auto ck = load_models(a.checkpoint);
  auto manifest = load_manifest(a.manifest);
  std::vector<SampleRecord> kept;
  for (auto& r : manifest.records) {
    if (!a.split || r.split == *a.split) kept.push_back(r);
  }
  if (kept.empty()) throw DataError("no images to translate");
  manifest.records = kept;
  const auto ds = load_dataset(manifest, image_options(ck.cfg));
  prepare_out_dir(a.out, a.force);

  torch::NoGradGuard no_grad;
  ck.models.g_st->eval();
  std::vector<torch::Tensor> chunks;
  for (int64_t s = 0; s < ds.size(); s += 64) {
    chunks.push_back(ck.models.g_st->forward(ds.images.slice(0, s, std::min<int64_t>(s + 64, ds.size()))));
  }
  const auto adapted = torch::cat(chunks);
  for (int64_t i = 0; i < ds.size(); ++i) {
    write_image(fs::path(a.out) / "adapted" / (std::to_string(i) + ".png"), adapted[i]);
  }
  write_image(fs::path(a.out) / "contact_sheet.png", contact_sheet(ds.images, adapted, a.sheet_columns));
  std::cout << "translated " << ds.size() << " images into " << a.out << '\n';
  return 0;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::optional<std::string> log;
  std::vector<std::string> metrics;
  std::string out = "report";
  bool force = false;
};

void flatten(const json& j, const std::string& prefix, json& out) {
  for (const auto& [k, v] : j.items()) {
    const auto key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else if (v.is_number() || v.is_null() || v.is_string()) {
      out[key] = v;
    }
  }
}

int cmd_report(const ReportArgs& a) {
  if (!a.log && a.metrics.empty()) throw ConfigError("report needs --log and/or --metrics");
  std::vector<json> records;
  if (a.log) records = read_loss_log(*a.log);
  std::vector<MetricsRow> rows;
  for (const auto& spec : a.metrics) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const std::string label = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    json flat = json::object();
    flatten(read_json(path), "", flat);
    rows.push_back({label, flat});
  }
  prepare_out_dir(a.out, a.force);
  if (a.log) {
    const auto files = write_loss_curves(records, fs::path(a.out) / "curves");
    std::cout << "wrote " << files.size() << " loss curves\n";
  }
  if (!rows.empty()) {
    std::ofstream(fs::path(a.out) / "comparison.md") << comparison_table_markdown(rows);
    std::ofstream(fs::path(a.out) / "comparison.csv") << comparison_table_csv(rows);
    std::cout << comparison_table_markdown(rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-preserving cycle-consistent domain adaptation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate the synthetic two-domain benchmark");
  s->add_option("--config", synth.config, "SyntheticDomainSpec JSON")->required()->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output directory");
  s->add_option("--seed", synth.seed, "Override the spec seed");
  s->add_flag("--force", synth.force, "Overwrite a non-empty output directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run both training parts");
  t->add_option("--config", train.config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Override output_dir");
  t->add_option("--seed", train.seed, "Override the seed");
  t->add_flag("--force", train.force, "Overwrite a non-empty output directory");
  t->add_flag("--resume", train.resume, "Continue from <out>/checkpoints/latest");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on a labelled manifest split");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  e->add_option("--manifest", ev.manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  e->add_option("--split", ev.split, "Split to score");
  e->add_option("--out", ev.out, "Also write the metrics JSON here");
  e->add_option("--seed", ev.seed, "Seed for --oracle training");
  e->add_flag("--source-only", ev.source_only, "Score the source-trained classifier");
  e->add_flag("--oracle", ev.oracle, "Train on the manifest's labelled train split and score that");
  e->add_option("--oracle-epochs", ev.oracle_epochs, "Epochs for --oracle")->check(CLI::PositiveNumber);

  TranslateArgs tr;
  auto* x = app.add_subcommand("translate", "Dump source-to-target translations");
  x->add_option("--checkpoint", tr.checkpoint, "Checkpoint directory")->required();
  x->add_option("--manifest", tr.manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  x->add_option("--out", tr.out, "Output directory");
  x->add_option("--split", tr.split, "Only this split");
  x->add_option("--columns", tr.sheet_columns, "Pairs per contact-sheet row")->check(CLI::PositiveNumber);
  x->add_flag("--force", tr.force, "Overwrite a non-empty output directory");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Loss curves and metric comparison tables");
  r->add_option("--log", rep.log, "Loss log JSONL");
  r->add_option("--metrics", rep.metrics, "Metric files as label=path.json");
  r->add_option("--out", rep.out, "Output directory");
  r->add_flag("--force", rep.force, "Overwrite a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUser;
  }

  torch::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, false);
  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train);
    if (*e) return cmd_evaluate(ev);
    if (*x) return cmd_translate(tr);
    if (*r) return cmd_report(rep);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUser;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUser;
  } catch (const TrainingAbort& err) {
    std::cerr << "training aborted: " << err.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& err) {
    std::cerr << "fatal: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUser;
}
