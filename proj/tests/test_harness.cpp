#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lisr/error.hpp"
#include "lisr/harness.hpp"

using namespace lisr;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_json() {
  return nlohmann::json::parse(read_file(fs::path(LISR_SOURCE_DIR) / "configs" / "tiny.json"));
}

ExperimentConfig tiny_config(const std::string& run, const nlohmann::json& patch = {}) {
  nlohmann::json j = tiny_json();
  if (!patch.is_null()) j.merge_patch(patch);
  ExperimentConfig c = ExperimentConfig::from_json(j);
  c.output_dir = fs::path(LISR_TEST_TMP_DIR) / "lisr_harness_tests" / run;
  fs::remove_all(c.output_dir);
  return c;
}

int count_lines(const std::string& s, bool skip_comments) {
  std::istringstream in(s);
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (!(skip_comments && line.rfind('#', 0) == 0)) ++n;
  return n;
}

std::size_t count_regular_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

TEST_CASE("experiment config derives shapes and seeds and hashes its content") {
  const ExperimentConfig c = tiny_config("config");
  CHECK(c.autoencoder.volume_shape == std::array<int, 3>{8, 8, 8});
  CHECK(c.diffusion.latent_shape() == c.autoencoder.latent_shape());
  CHECK(c.diffusion.conditioning_size == 4);
  CHECK(c.ldm.mode == InversionMode::kLdm);
  CHECK(c.decoder.mode == InversionMode::kDecoder);
  CHECK(c.autoencoder.seed == derive_seed(7, 10));

  // The output location does not change the hash; the seed does.
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  CHECK(moved.hash() == c.hash());
  CHECK(tiny_config("config", {{"seed", 8}}).hash() != c.hash());
  // Round trip through the canonical JSON.
  CHECK(ExperimentConfig::from_json(c.to_json()).hash() == c.hash());

  CHECK_THROWS_AS(tiny_config("config", {{"methods", {"magic"}}}), InvalidArgument);
  CHECK_THROWS_AS(tiny_config("config", {{"dataset", {{"train", 1}}}}), InvalidArgument);
  CHECK_THROWS_AS(tiny_config("config", {{"phantom", {{"grid", {10, 10, 10}}}}}), InvalidArgument);
  const nlohmann::json dup = nlohmann::json::parse(
      R"({"corruptions": [{"name": "a", "factor": 2}, {"name": "a", "factor": 4}]})");
  CHECK_THROWS_AS(tiny_config("config", dup), InvalidArgument);
}

TEST_CASE("case identifiers") {
  CHECK(case_name(3) == "case_0003");
  CHECK(parse_case("case_0003", 5) == 3);
  CHECK(parse_case("4", 5) == 4);
  CHECK_THROWS_AS(parse_case("case_0005", 5), InvalidArgument);
  CHECK_THROWS_AS(parse_case("x1", 5), InvalidArgument);
  CHECK(parse_train_stage("ae") == TrainStage::kAutoencoder);
  CHECK_THROWS_AS(parse_train_stage("vae"), InvalidArgument);
}

TEST_CASE("generate writes every volume with a manifest and refuses to overwrite") {
  const ExperimentConfig c = tiny_config("generate");
  cmd_generate(c, false);
  const ExperimentLayout layout{c.output_dir};
  // Each volume is a sample file plus its JSON header.
  CHECK(count_regular_files(layout.data_dir()) == 2 * (6 + 2) + 1);
  const auto manifest = nlohmann::json::parse(read_file(layout.manifest()));
  REQUIRE(manifest["train"].size() == 6);
  REQUIRE(manifest["test"].size() == 2);
  CHECK(manifest["config_hash"] == c.hash());
  const auto& first = manifest["test"][0];
  CHECK(first["hash"] == fnv1a_hex(read_file(layout.test_volume(0))));
  CHECK(first["covariates"].size() == 4);
  const Volume v = load_volume(layout.test_volume(0));
  CHECK(v.meta.at("split") == "test");

  CHECK_THROWS_AS(cmd_generate(c, false), Error);
  CHECK(load_volume(layout.test_volume(0)) == v);
  cmd_generate(c, true);
  CHECK(load_volume(layout.test_volume(0)) == v);
}

TEST_CASE("training stages run in order and record their loss curves") {
  const ExperimentConfig c = tiny_config("train", {{"autoencoder", {{"epochs", 2}}}});
  cmd_generate(c, false);
  try {
    cmd_train(c, TrainStage::kDiffusion);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("train --stage ae") != std::string::npos);
  }
  cmd_train(c, TrainStage::kAutoencoder);
  const ExperimentLayout layout{c.output_dir};
  const std::string csv = read_file(layout.models_dir() / "autoencoder_loss.csv");
  CHECK(csv.rfind("# config_hash=" + c.hash(), 0) == 0);
  CHECK(count_lines(csv, true) == 1 + 2);  // header + one row per epoch
  cmd_train(c, TrainStage::kDiffusion);
  CHECK(fs::exists(layout.denoiser().string() + ".json"));
  CHECK(count_lines(read_file(layout.models_dir() / "denoiser_loss.csv"), true) == 1 + 1);
}

TEST_CASE("cubic reconstruction needs no checkpoints and evaluation lists gaps") {
  const ExperimentConfig c = tiny_config("cubic", {{"methods", {"cubic"}}});
  cmd_generate(c, false);
  cmd_corrupt(c);
  cmd_reconstruct(c, "cubic", "case_0001", "k4");
  try {
    cmd_evaluate(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing 3") != std::string::npos);
    CHECK(msg.find("k4/cubic/case_0000") != std::string::npos);
    CHECK(msg.find("k4/cubic/case_0001") == std::string::npos);
  }
  cmd_reconstruct(c, "cubic");
  const EvaluationOutput out = cmd_evaluate(c);
  REQUIRE(out.reports.size() == 2);
  CHECK(out.reports[0].size() == 1);
  CHECK(out.reports[0][0].method == "Cubic");
  CHECK_THROWS_AS(cmd_reconstruct(c, "ldm"), Error);
  CHECK_THROWS_AS(cmd_reconstruct(c, "nearest"), InvalidArgument);
}

TEST_CASE("the full pipeline is reproducible across output directories") {
  const ExperimentConfig a = tiny_config("pipeline_a");
  const ExperimentConfig b = tiny_config("pipeline_b");
  std::ostringstream log;
  const EvaluationOutput ra = run_pipeline(a, false, &log);
  run_pipeline(b, false);
  CHECK(log.str().find("evaluate k2") != std::string::npos);
  const ExperimentLayout la{a.output_dir}, lb{b.output_dir};
  for (const std::string corr : {"k2", "k4"}) {
    const std::string table = read_file(la.report_dir() / (corr + "_table.txt"));
    CHECK(table == read_file(lb.report_dir() / (corr + "_table.txt")));
    CHECK(table.find("InverseSR(LDM)") != std::string::npos);
    CHECK(table.find("InverseSR(Decoder)") != std::string::npos);
    const std::string csv = read_file(la.report_dir() / (corr + "_table.csv"));
    CHECK(count_lines(csv, true) == 1 + 3);
    CHECK(fs::exists(la.report_dir() / "figures" / corr / "case_0001.pgm"));
    const fs::path run = la.run_dir(corr, "ldm", 0);
    CHECK(count_lines(read_file(run / "loss.csv"), true) == 1 + 2);
    const auto meta = nlohmann::json::parse(read_file(run / "run.json"));
    CHECK(meta["config_hash"] == a.hash());
  }
  CHECK(ra.corruptions == std::vector<std::string>{"k2", "k4"});
  CHECK(fs::exists(la.mean_latent()));
}

TEST_CASE("PGM output") {
  const fs::path p = fs::path(LISR_TEST_TMP_DIR) / "lisr_harness_tests" / "img.pgm";
  write_pgm(p, 2, 1, {0.0, 2.0});
  const std::string s = read_file(p);
  CHECK(s == std::string("P5\n2 1\n255\n") + '\0' + '\xff');
  CHECK_THROWS_AS(write_pgm(p, 2, 2, {0.0}), InvalidArgument);
}
