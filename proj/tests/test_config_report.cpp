#include "doctest_torch.hpp"

#include <fstream>

#include "cegan/config.hpp"
#include "cegan/error.hpp"
#include "cegan/report.hpp"
#include "fixtures.hpp"

using namespace cegan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json minimal_run() {
  return {{"schema_version", 1},
          {"data", {{"image_size", 32}, {"synthetic", {{"task", "distribution"}, {"image_size", 32}}}}},
          {"training", {{"task", "distribution"}, {"msssim", {{"scales", 3}, {"window_size", 7}}}}}};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("training config round trip") {
  auto cfg = cegan::testing::micro_run().cfg;
  cfg.distance.kind = SemanticDistance::Kind::kSkl;
  cfg.mix.term = MsSsimTerm::kRaw;
  const auto j = to_json(cfg);
  const auto back = training_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.msssim.scale_weights == cfg.msssim.scale_weights);
}

TEST_CASE("unknown keys and wrong types name the key path") {
  auto j = minimal_run();
  j["training"]["weights"] = {{"betta", 1.0}};
  CHECK(config_error(j).find("training.weights.betta") != std::string::npos);
  j = minimal_run();
  j["training"]["thres"] = "high";
  CHECK(config_error(j).find("training.thres") != std::string::npos);
  j = minimal_run();
  j["extra"] = 1;
  CHECK(config_error(j).find("extra") != std::string::npos);
  j = minimal_run();
  j.erase("schema_version");
  CHECK(config_error(j) != "");
  j = minimal_run();
  j["schema_version"] = 2;
  CHECK_THROWS_AS(RunConfig::from_json(j).validate(), ConfigError);
}

TEST_CASE("msssim scales without weights use the truncated defaults") {
  const auto rc = RunConfig::from_json(minimal_run());
  CHECK(rc.training.msssim.scale_weights == MsSsimConfig::truncated(3, 7).scale_weights);
  CHECK_NOTHROW(rc.validate());
}

TEST_CASE("run config consistency") {
  auto j = minimal_run();
  j["data"]["synthetic"]["task"] = "classification";
  CHECK_THROWS_AS(RunConfig::from_json(j).validate(), ConfigError);
  j = minimal_run();
  j["data"]["source_manifest"] = "nowhere.jsonl";
  CHECK_THROWS_AS(RunConfig::from_json(j).validate(), ConfigError);
  j = minimal_run();
  j["seed"] = 9;
  const auto rc = RunConfig::from_json(j);
  CHECK(rc.training.seed == 9);
  CHECK(rc.synthetic->seed == 9);
  CHECK(RunConfig::from_json(rc.to_json()).to_json() == rc.to_json());
  j = minimal_run();
  j["training"]["distance"] = {{"kind", "mikels"}};
  CHECK_THROWS_AS(RunConfig::from_json(j).validate(), ConfigError);
  CHECK_THROWS_AS(task_from_name("regression"), ConfigError);
}

TEST_CASE("shipped configs load and validate") {
  for (const char* name : {"desk_distribution.json", "desk_classification.json"}) {
    const auto rc = RunConfig::load(fs::path(CEGAN_CONFIG_DIR) / name);
    CHECK_NOTHROW(rc.validate());
  }
}

}

TEST_SUITE("report") {

TEST_CASE("loss curves and comparison tables") {
  const auto dir = cegan::testing::temp_dir("report");
  {
    std::ofstream f(dir / "log.jsonl");
    f << R"({"part":1,"step":0,"lr":0.1,"adv_st":1.0,"updated":true})" << '\n'
      << R"({"part":1,"step":1,"lr":0.1,"adv_st":0.5})" << '\n'
      << R"({"part":1,"event":"epoch_end","validation":0.3})" << '\n';
  }
  const auto recs = read_loss_log(dir / "log.jsonl");
  CHECK(recs.size() == 3);
  const auto files = write_loss_curves(recs, dir / "curves");
  REQUIRE(files.size() == 1);
  CHECK(files[0].filename() == "loss_adv_st.svg");

  {
    std::ofstream f(dir / "empty.jsonl");
    f << R"({"event":"epoch_end"})" << '\n';
  }
  CHECK_THROWS_AS(read_loss_log(dir / "empty.jsonl"), DataError);
  CHECK_THROWS_AS(read_loss_log(dir / "absent.jsonl"), DataError);

  std::vector<MetricsRow> rows{{"a", {{"kl", 0.5}, {"samples", 10}}}, {"b", {{"acc", 0.25}}}};
  const auto md = comparison_table_markdown(rows);
  CHECK(md.find("| run | kl | samples | acc |") != std::string::npos);
  CHECK(md.find("| a | 0.5000 | 10 | n/a |") != std::string::npos);
  const auto csv = comparison_table_csv(rows);
  CHECK(csv == "run,kl,samples,acc\na,0.5000,10,n/a\nb,n/a,n/a,0.2500\n");
  fs::remove_all(dir);
}

}
