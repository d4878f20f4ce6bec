#pragma once

// Config-driven experiment pipeline: generate -> train -> corrupt ->
// reconstruct -> evaluate. Every stage reads and writes files below
// ExperimentConfig::output_dir, so stages can run as separate processes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lisr/autoencoder.hpp"
#include "lisr/corruption.hpp"
#include "lisr/diffusion.hpp"
#include "lisr/inversion.hpp"
#include "lisr/metrics.hpp"

namespace lisr {

struct ExperimentConfig {
  /// Master seed; every component seed is derived from it.
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  /// Directory relative mask paths resolve against (the config file's).
  std::filesystem::path base_dir;
  PhantomSpec phantom;
  int train_count = 200;
  int test_count = 20;
  AutoencoderConfig autoencoder;
  DenoiserConfig diffusion;
  std::vector<CorruptionDescriptor> corruptions;
  /// Subset of {"ldm", "decoder", "cubic"} in report order.
  std::vector<std::string> methods{"ldm", "decoder", "cubic"};
  InversionConfig ldm;
  InversionConfig decoder;
  std::array<int, 3> crop{24, 24, 24};
  SsimOptions ssim;

  void validate() const;
  /// Canonical JSON of every field that affects results (excludes paths).
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
  /// FNV-1a digest of to_json().dump().
  std::string hash() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Paths of every artifact the pipeline reads or writes.
struct ExperimentLayout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path manifest() const { return data_dir() / "manifest.json"; }
  std::filesystem::path train_volume(int i) const;
  std::filesystem::path test_volume(int i) const;
  std::filesystem::path models_dir() const { return root / "models"; }
  std::filesystem::path autoencoder() const { return models_dir() / "autoencoder"; }
  std::filesystem::path denoiser() const { return models_dir() / "denoiser"; }
  std::filesystem::path mean_latent() const { return models_dir() / "mean_latent.lat"; }
  std::filesystem::path observed(const std::string& corruption, int i) const;
  std::filesystem::path run_dir(const std::string& corruption, const std::string& method,
                                int i) const;
  std::filesystem::path report_dir() const { return root / "report"; }
};

std::string case_name(int index);
/// Accepts "case_0003" or "3".
int parse_case(const std::string& id, int count);

enum class TrainStage { kAutoencoder, kDiffusion };
TrainStage parse_train_stage(const std::string& name);

/// Writes train/test phantoms and a manifest with per-file hashes. Refuses
/// to touch an existing non-empty data directory unless `force` is set.
void cmd_generate(const ExperimentConfig& config, bool force, std::ostream* log = nullptr);

/// Trains one stage and writes its checkpoint and loss-curve CSV. The
/// diffusion stage needs the autoencoder checkpoint.
void cmd_train(const ExperimentConfig& config, TrainStage stage, std::ostream* log = nullptr);

/// Writes the corrupted observation of every test case for every
/// configured corruption.
void cmd_corrupt(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Reconstructs test cases with one method ("ldm", "decoder", "cubic").
/// Empty `case_id` / `corruption` select all.
void cmd_reconstruct(const ExperimentConfig& config, const std::string& method,
                     const std::string& case_id = {}, const std::string& corruption = {},
                     std::ostream* log = nullptr);

/// Per-corruption metric reports, in configured order.
struct EvaluationOutput {
  std::vector<std::string> corruptions;
  std::vector<std::vector<MetricReport>> reports;
};

/// Computes metrics for every configured method and corruption, writes the
/// tables and slice renderings. Throws listing missing reconstructions.
EvaluationOutput cmd_evaluate(const ExperimentConfig& config, std::ostream* log = nullptr);

/// All stages in order.
EvaluationOutput run_pipeline(const ExperimentConfig& config, bool force,
                              std::ostream* log = nullptr);

/// 8-bit binary PGM of a [0,1] image (values clamped), row-major.
void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<double>& pixels);

}  // namespace lisr
