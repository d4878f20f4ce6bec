// Command-line front end for the experiment pipeline.
//
//   lisr generate    --config cfg.json [--force]
//   lisr train       --config cfg.json --stage ae|ldm
//   lisr corrupt     --config cfg.json
//   lisr reconstruct --config cfg.json --method ldm|decoder|cubic [--case case_0003]
//   lisr evaluate    --config cfg.json
//   lisr run         --config cfg.json [--force]
//
// --seed and --output override the config file. Errors are printed as a
// single JSON object on stderr and the exit code is nonzero.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lisr/error.hpp"
#include "lisr/harness.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output;
  bool force = false;
  std::string method;
  std::string case_id;
  std::string stage;
  std::string corruption;
};

lisr::ExperimentConfig load(const Options& o) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(lisr::read_file(o.config));
  } catch (const nlohmann::json::parse_error& e) {
    throw lisr::ParseError(o.config, std::string("malformed config: ") + e.what());
  }
  if (o.seed) j["seed"] = *o.seed;
  if (!o.output.empty()) j["output_dir"] = o.output;
  return lisr::ExperimentConfig::from_json(j, std::filesystem::path(o.config).parent_path());
}

int fail(const std::string& kind, const std::string& message, int code) {
  nlohmann::json err{{"error", kind}, {"message", message}};
  std::cerr << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-prior inversion for volumetric super-resolution"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Override the master seed");
    cmd->add_option("--output", o.output, "Override the output directory");
  };

  auto* generate = app.add_subcommand("generate", "Write train/test phantoms and a manifest");
  add_common(generate);
  generate->add_flag("--force", o.force, "Overwrite an existing dataset");

  auto* train = app.add_subcommand("train", "Train the autoencoder (ae) or the denoiser (ldm)");
  add_common(train);
  train->add_option("--stage", o.stage, "ae or ldm")->required()->check(CLI::IsMember({"ae", "ldm"}));

  auto* corrupt = app.add_subcommand("corrupt", "Write corrupted observations of the test set");
  add_common(corrupt);

  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct test cases with one method");
  add_common(reconstruct);
  reconstruct->add_option("--method", o.method, "ldm, decoder or cubic")
      ->required()
      ->check(CLI::IsMember({"ldm", "decoder", "cubic"}));
  reconstruct->add_option("--case", o.case_id, "Single case (e.g. case_0003); default all");
  reconstruct->add_option("--corruption", o.corruption, "Single corruption name; default all");

  auto* evaluate = app.add_subcommand("evaluate", "Compute metric tables and slice renderings");
  add_common(evaluate);

  auto* run = app.add_subcommand("run", "Run every stage in order");
  add_common(run);
  run->add_flag("--force", o.force, "Overwrite an existing dataset");

  CLI11_PARSE(app, argc, argv);

  try {
    const lisr::ExperimentConfig config = load(o);
    std::ostream* log = &std::cerr;
    if (generate->parsed()) {
      lisr::cmd_generate(config, o.force, log);
    } else if (train->parsed()) {
      lisr::cmd_train(config, lisr::parse_train_stage(o.stage), log);
    } else if (corrupt->parsed()) {
      lisr::cmd_corrupt(config, log);
    } else if (reconstruct->parsed()) {
      lisr::cmd_reconstruct(config, o.method, o.case_id, o.corruption, log);
    } else if (evaluate->parsed()) {
      lisr::cmd_evaluate(config, log);
    } else if (run->parsed()) {
      lisr::run_pipeline(config, o.force, log);
    }
  } catch (const lisr::ParseError& e) {
    return fail("parse_error", e.what(), 3);
  } catch (const lisr::InvalidArgument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
  return 0;
}
