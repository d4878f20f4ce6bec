#include "lisr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>

#include "lisr/error.hpp"
#include "lisr/serialization.hpp"

namespace lisr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams derived from the master seed.
constexpr std::uint64_t kTrainPhantoms = 1;
constexpr std::uint64_t kTestPhantoms = 2;
constexpr std::uint64_t kAutoencoderSeed = 10;
constexpr std::uint64_t kDiffusionSeed = 20;
constexpr std::uint64_t kLdmSeed = 40;
constexpr std::uint64_t kDecoderSeed = 50;

constexpr int kCovariateCount = 4;

void say(std::ostream* log, const std::string& msg) {
  if (log != nullptr) *log << msg << std::endl;
}

std::string provenance_line(const ExperimentConfig& c) {
  return "# config_hash=" + c.hash() + " seed=" + std::to_string(c.seed) + "\n";
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"ldm", "decoder", "cubic"};
  return m;
}

std::string method_label(const std::string& method) {
  if (method == "ldm") return "InverseSR(LDM)";
  if (method == "decoder") return "InverseSR(Decoder)";
  return "Cubic";
}

std::string describe(const CorruptionDescriptor& d) {
  if (d.kind == CorruptionKind::kSliceMask)
    return "slice_mask axis=" + std::to_string(d.axis) + " k=" + std::to_string(d.factor) +
           " offset=" + std::to_string(d.offset);
  return to_string(d.kind) + " mask=" + d.mask_path;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  phantom.validate();
  if (train_count < 2) throw InvalidArgument("dataset.train must be >= 2");
  if (test_count < 1) throw InvalidArgument("dataset.test must be >= 1");
  autoencoder.validate();
  diffusion.validate();
  if (diffusion.latent_shape() != autoencoder.latent_shape())
    throw InvalidArgument("diffusion latent shape must match the autoencoder latent shape");
  if (diffusion.conditioning_size != kCovariateCount)
    throw InvalidArgument("diffusion conditioning_size must be " + std::to_string(kCovariateCount));
  if (phantom.grid != autoencoder.volume_shape)
    throw InvalidArgument("phantom grid must match autoencoder volume_shape");
  if (corruptions.empty()) throw InvalidArgument("at least one corruption is required");
  for (std::size_t i = 0; i < corruptions.size(); ++i) {
    if (corruptions[i].name.empty()) throw InvalidArgument("corruption names must be nonempty");
    for (std::size_t k = 0; k < i; ++k)
      if (corruptions[k].name == corruptions[i].name)
        throw InvalidArgument("duplicate corruption name '" + corruptions[i].name + "'");
  }
  if (methods.empty()) throw InvalidArgument("at least one method is required");
  for (const auto& m : methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      throw InvalidArgument("unknown method '" + m + "'");
  ldm.validate();
  decoder.validate();
  if (ldm.mode != InversionMode::kLdm || decoder.mode != InversionMode::kDecoder)
    throw InvalidArgument("inversion configs have mismatched modes");
  ssim.validate();
  for (int e : crop)
    if (e < 1) throw InvalidArgument("evaluation crop extents must be positive");
}

json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["phantom"] = phantom;
  j["dataset"] = {{"train", train_count}, {"test", test_count}};
  j["autoencoder"] = autoencoder;
  j["diffusion"] = diffusion;
  j["corruptions"] = corruptions;
  j["methods"] = methods;
  j["inversion"] = {{"ldm", ldm}, {"decoder", decoder}};
  j["evaluation"] = {{"crop", crop}, {"ssim", ssim}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  try {
    read_opt(j, "seed", c.seed);
    if (auto it = j.find("output_dir"); it != j.end()) c.output_dir = it->get<std::string>();
    read_opt(j, "phantom", c.phantom);
    if (auto it = j.find("dataset"); it != j.end()) {
      read_opt(*it, "train", c.train_count);
      read_opt(*it, "test", c.test_count);
    }
    read_opt(j, "autoencoder", c.autoencoder);
    read_opt(j, "diffusion", c.diffusion);
    read_opt(j, "corruptions", c.corruptions);
    read_opt(j, "methods", c.methods);
    if (auto it = j.find("inversion"); it != j.end()) {
      read_opt(*it, "ldm", c.ldm);
      read_opt(*it, "decoder", c.decoder);
    }
    if (auto it = j.find("evaluation"); it != j.end()) {
      read_opt(*it, "crop", c.crop);
      read_opt(*it, "ssim", c.ssim);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid experiment config: ") + e.what());
  }
  if (c.corruptions.empty()) {
    CorruptionDescriptor low{"k2", CorruptionKind::kSliceMask, 0, 2, 0, {}};
    CorruptionDescriptor high{"k8", CorruptionKind::kSliceMask, 0, 8, 0, {}};
    c.corruptions = {low, high};
  }
  c.ldm.mode = InversionMode::kLdm;
  c.decoder.mode = InversionMode::kDecoder;
  // Shapes shared between stages follow the autoencoder.
  c.autoencoder.volume_shape = c.phantom.grid;
  const Shape ls = c.autoencoder.latent_shape();
  c.diffusion.latent_channels = ls.c;
  c.diffusion.latent_grid = {ls.d, ls.h, ls.w};
  c.diffusion.conditioning_size = kCovariateCount;
  // Component seeds are derived from the master seed.
  c.phantom.seed = c.seed;
  c.autoencoder.seed = derive_seed(c.seed, kAutoencoderSeed);
  c.diffusion.seed = derive_seed(c.seed, kDiffusionSeed);
  c.ldm.seed = derive_seed(c.seed, kLdmSeed);
  c.decoder.seed = derive_seed(c.seed, kDecoderSeed);
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

ExperimentConfig load_experiment_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), std::string("malformed config: ") + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Layout

std::string case_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%04d", index);
  return buf;
}

int parse_case(const std::string& id, int count) {
  std::string digits = id;
  if (digits.rfind("case_", 0) == 0) digits = digits.substr(5);
  int index = -1;
  try {
    std::size_t used = 0;
    index = std::stoi(digits, &used);
    if (used != digits.size()) index = -1;
  } catch (const std::exception&) {
    index = -1;
  }
  if (index < 0 || index >= count)
    throw InvalidArgument("unknown case '" + id + "' (have " + std::to_string(count) + " cases)");
  return index;
}

TrainStage parse_train_stage(const std::string& name) {
  if (name == "ae") return TrainStage::kAutoencoder;
  if (name == "ldm") return TrainStage::kDiffusion;
  throw InvalidArgument("unknown training stage '" + name + "' (expected ae or ldm)");
}

fs::path ExperimentLayout::train_volume(int i) const {
  return data_dir() / "train" / (case_name(i) + ".vol");
}

fs::path ExperimentLayout::test_volume(int i) const {
  return data_dir() / "test" / (case_name(i) + ".vol");
}

fs::path ExperimentLayout::observed(const std::string& corruption, int i) const {
  return root / "corrupted" / corruption / (case_name(i) + ".vol");
}

fs::path ExperimentLayout::run_dir(const std::string& corruption, const std::string& method,
                                   int i) const {
  return root / "reconstructions" / corruption / method / case_name(i);
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct Dataset {
  std::vector<Volume> volumes;
  std::vector<Conditioning> covariates;
};

Dataset load_split(const ExperimentConfig& c, const std::string& split) {
  const ExperimentLayout layout{c.output_dir};
  if (!fs::exists(layout.manifest()))
    throw Error("missing dataset manifest " + layout.manifest().string() +
                "; run 'generate' first");
  const json manifest = json::parse(read_file(layout.manifest()));
  Dataset d;
  for (const json& entry : manifest.at(split)) {
    const fs::path file = layout.data_dir() / entry.at("file").get<std::string>();
    d.volumes.push_back(load_volume(file));
    d.covariates.emplace_back(entry.at("covariates").get<std::vector<double>>());
  }
  return d;
}

std::string loss_csv(const ExperimentConfig& c, const TrainingCurve& curve) {
  std::ostringstream os;
  os << provenance_line(c) << "epoch,train_loss,heldout_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < curve.train.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g\n", e + 1, curve.train[e],
                  curve.heldout[e + 1]);
    os << buf;
  }
  return os.str();
}

std::vector<int> select_cases(const ExperimentConfig& c, const std::string& case_id) {
  if (!case_id.empty()) return {parse_case(case_id, c.test_count)};
  std::vector<int> all(c.test_count);
  for (int i = 0; i < c.test_count; ++i) all[i] = i;
  return all;
}

std::vector<std::size_t> select_corruptions(const ExperimentConfig& c, const std::string& name) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.corruptions.size(); ++i)
    if (name.empty() || c.corruptions[i].name == name) out.push_back(i);
  if (out.empty()) throw InvalidArgument("unknown corruption '" + name + "'");
  return out;
}

Autoencoder require_autoencoder(const ExperimentLayout& layout) {
  const fs::path json_path(layout.autoencoder().string() + ".json");
  if (!fs::exists(json_path))
    throw Error("missing autoencoder checkpoint " + json_path.string() +
                "; run 'train --stage ae' first");
  return load_autoencoder(layout.autoencoder());
}

Denoiser require_denoiser(const ExperimentLayout& layout) {
  const fs::path json_path(layout.denoiser().string() + ".json");
  if (!fs::exists(json_path))
    throw Error("missing diffusion checkpoint " + json_path.string() +
                "; run 'train --stage ldm' first");
  return load_denoiser(layout.denoiser());
}

std::string trace_csv(const ExperimentConfig& c, const std::vector<double>& trace) {
  std::ostringstream os;
  os << provenance_line(c) << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
    os << buf;
  }
  return os.str();
}

}  // namespace

void cmd_generate(const ExperimentConfig& c, bool force, std::ostream* log) {
  c.validate();
  const ExperimentLayout layout{c.output_dir};
  const fs::path data = layout.data_dir();
  if (fs::exists(data) && !fs::is_empty(data)) {
    if (!force)
      throw Error("output directory " + data.string() + " is not empty; pass --force to overwrite");
    fs::remove_all(data);
  }
  const std::string config_hash = c.hash();
  json manifest;
  manifest["format"] = "lisr-manifest";
  manifest["version"] = 1;
  manifest["config_hash"] = config_hash;
  manifest["seed"] = c.seed;

  auto write_split = [&](const std::string& split, int count, std::uint64_t stream) {
    json entries = json::array();
    for (int i = 0; i < count; ++i) {
      PhantomSpec spec = c.phantom;
      spec.seed = derive_seed(derive_seed(c.seed, stream), static_cast<std::uint64_t>(i));
      Phantom ph = make_phantom_with_covariates(spec);
      ph.volume.meta["case"] = case_name(i);
      ph.volume.meta["split"] = split;
      ph.volume.meta["config_hash"] = config_hash;
      ph.volume.meta["covariates"] = json(ph.covariates.values()).dump();
      const fs::path file = split == "train" ? layout.train_volume(i) : layout.test_volume(i);
      save_volume(ph.volume, file);
      entries.push_back({{"file", fs::relative(file, data).generic_string()},
                         {"hash", fnv1a_hex(read_file(file))},
                         {"header_hash", fnv1a_hex(read_file(file.string() + ".json"))},
                         {"seed", spec.seed},
                         {"covariates", ph.covariates.values()}});
    }
    manifest[split] = std::move(entries);
  };
  write_split("train", c.train_count, kTrainPhantoms);
  write_split("test", c.test_count, kTestPhantoms);
  write_file_atomic(layout.manifest(), manifest.dump(2) + "\n");
  say(log, "generate: wrote " + std::to_string(c.train_count) + " train and " +
               std::to_string(c.test_count) + " test volumes to " + data.string());
}

void cmd_train(const ExperimentConfig& c, TrainStage stage, std::ostream* log) {
  c.validate();
  const ExperimentLayout layout{c.output_dir};
  if (stage == TrainStage::kAutoencoder) {
    const Dataset train = load_split(c, "train");
    say(log, "train ae: " + std::to_string(train.volumes.size()) + " volumes, " +
                 std::to_string(c.autoencoder.epochs) + " epochs");
    TrainingCurve curve;
    const Autoencoder ae = train_autoencoder(train.volumes, c.autoencoder, &curve);
    save_autoencoder(ae, layout.autoencoder());
    write_file_atomic(layout.models_dir() / "autoencoder_loss.csv", loss_csv(c, curve));
    if (!curve.heldout.empty())
      say(log, "train ae: final held-out loss " + std::to_string(curve.heldout.back()));
    return;
  }

  const Autoencoder ae = require_autoencoder(layout);
  const Dataset train = load_split(c, "train");
  LatentDataset data;
  for (std::size_t i = 0; i < train.volumes.size(); ++i) {
    data.latents.push_back(ae.encode(train.volumes[i]).mean);
    data.conditioning.push_back(train.covariates[i]);
  }
  say(log, "train ldm: " + std::to_string(data.latents.size()) + " latents, " +
               std::to_string(c.diffusion.epochs) + " epochs");
  TrainingCurve curve;
  const Denoiser denoiser = train_denoiser(data, c.diffusion, &curve);
  save_denoiser(denoiser, layout.denoiser());
  write_file_atomic(layout.models_dir() / "denoiser_loss.csv", loss_csv(c, curve));
  if (!curve.heldout.empty())
    say(log, "train ldm: final held-out loss " + std::to_string(curve.heldout.back()));
}

void cmd_corrupt(const ExperimentConfig& c, std::ostream* log) {
  c.validate();
  const ExperimentLayout layout{c.output_dir};
  const Dataset test = load_split(c, "test");
  const std::string config_hash = c.hash();
  for (const CorruptionDescriptor& d : c.corruptions) {
    const CorruptionSpec spec = resolve(d, c.base_dir);
    for (std::size_t i = 0; i < test.volumes.size(); ++i) {
      Volume observed = apply(spec, test.volumes[i]);
      observed.meta["corruption"] = d.name;
      observed.meta["config_hash"] = config_hash;
      save_volume(observed, layout.observed(d.name, static_cast<int>(i)));
    }
    say(log, "corrupt: " + d.name + " (" + describe(d) + ") for " +
                 std::to_string(test.volumes.size()) + " cases");
  }
}

void cmd_reconstruct(const ExperimentConfig& c, const std::string& method,
                     const std::string& case_id, const std::string& corruption,
                     std::ostream* log) {
  c.validate();
  if (std::find(known_methods().begin(), known_methods().end(), method) == known_methods().end())
    throw InvalidArgument("unknown method '" + method + "' (expected ldm, decoder or cubic)");
  const ExperimentLayout layout{c.output_dir};
  const std::vector<int> cases = select_cases(c, case_id);
  const std::vector<std::size_t> corruptions = select_corruptions(c, corruption);
  const std::string config_hash = c.hash();

  std::optional<Autoencoder> ae;
  std::optional<Denoiser> denoiser;
  std::optional<Latent> z_mean;
  if (method != "cubic") ae.emplace(require_autoencoder(layout));
  if (method == "ldm") denoiser.emplace(require_denoiser(layout));
  if (method == "decoder") {
    // The decoder-mode starting point is the mean of DDIM samples drawn at
    // the initial conditioning.
    const Denoiser prior = require_denoiser(layout);
    const NoiseSchedule schedule = NoiseSchedule::scaled_linear(prior.config().schedule);
    const auto subseq =
        TimestepSubsequence::evenly_spaced(schedule.train_steps(), c.decoder.inference_steps);
    z_mean = mean_latent(prior, schedule,
                         Conditioning::constant(prior.conditioning_size(),
                                                c.decoder.initial_conditioning),
                         c.decoder.mean_latent_samples, subseq, c.decoder.seed);
    save_latent(*z_mean, layout.mean_latent());
  }

  for (std::size_t ci : corruptions) {
    const CorruptionDescriptor& d = c.corruptions[ci];
    const CorruptionSpec spec = resolve(d, c.base_dir);
    for (int i : cases) {
      const fs::path input = layout.observed(d.name, i);
      if (!fs::exists(input))
        throw Error("missing corrupted input " + input.string() + "; run 'corrupt' first");
      const Volume observed = load_volume(input);
      const fs::path dir = layout.run_dir(d.name, method, i);

      json run;
      run["format"] = "lisr-run";
      run["version"] = 1;
      run["config_hash"] = config_hash;
      run["method"] = method;
      run["case"] = case_name(i);
      run["corruption"] = d;
      run["input"] = fs::relative(input, layout.root).generic_string();

      Volume recon;
      if (method == "cubic") {
        if (spec.kind != CorruptionKind::kSliceMask)
          throw InvalidArgument("the cubic baseline needs a slice_mask corruption, '" + d.name +
                                "' is " + to_string(d.kind));
        recon = cubic_interpolate(observed, observation_mask(spec, observed.shape()), spec.axis);
        run["seed"] = c.seed;
      } else {
        InversionConfig cfg = method == "ldm" ? c.ldm : c.decoder;
        cfg.seed = derive_seed(derive_seed(cfg.seed, ci), static_cast<std::uint64_t>(i));
        InversionResult result;
        if (method == "ldm") {
          const NoiseSchedule schedule =
              NoiseSchedule::scaled_linear(denoiser->config().schedule);
          result = inverse_sr_ldm(*ae, &*ae, *denoiser, schedule, observed, spec, cfg);
        } else {
          result = inverse_sr_decoder(*ae, &*ae, observed, spec, cfg, *z_mean);
        }
        recon = std::move(result.reconstruction);
        save_latent(result.latent, dir / "latent.lat");
        write_file_atomic(dir / "loss.csv", trace_csv(c, result.loss_trace));
        run["seed"] = cfg.seed;
        run["inversion"] = cfg;
        run["best_step"] = result.best_step;
        run["best_loss"] = result.loss_trace[result.best_step];
        run["final_loss"] = result.loss_trace.back();
        if (method == "ldm") run["conditioning"] = result.conditioning;
        run["checkpoints"] = {{"autoencoder", "models/autoencoder.json"},
                              {"denoiser", "models/denoiser.json"}};
        say(log, "reconstruct " + d.name + "/" + method + "/" + case_name(i) + ": best loss " +
                     std::to_string(result.loss_trace[result.best_step]) + " at step " +
                     std::to_string(result.best_step));
      }
      recon.meta["config_hash"] = config_hash;
      recon.meta["method"] = method;
      recon.meta["case"] = case_name(i);
      save_volume(recon, dir / "recon.vol");
      write_file_atomic(dir / "run.json", run.dump(2) + "\n");
    }
    if (method == "cubic")
      say(log, "reconstruct " + d.name + "/cubic: " + std::to_string(cases.size()) + " cases");
  }
}

namespace {

// Mid-volume slices along each axis: axial (fixed z), coronal (fixed y),
// sagittal (fixed x).
std::array<std::vector<double>, 3> mid_slices(const Tensor& v, std::array<std::array<int, 2>, 3>& dims) {
  const Shape& s = v.shape();
  std::array<std::vector<double>, 3> out;
  dims = {{{s.w, s.h}, {s.w, s.d}, {s.h, s.d}}};
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) out[0].push_back(v.at(0, s.d / 2, y, x));
  for (int z = 0; z < s.d; ++z)
    for (int x = 0; x < s.w; ++x) out[1].push_back(v.at(0, z, s.h / 2, x));
  for (int z = 0; z < s.d; ++z)
    for (int y = 0; y < s.h; ++y) out[2].push_back(v.at(0, z, y, s.w / 2));
  return out;
}

// One row per volume, columns axial/coronal/sagittal, 2-pixel gaps.
void write_slice_grid(const fs::path& path, const std::vector<const Volume*>& rows) {
  constexpr int gap = 2;
  std::array<std::array<int, 2>, 3> dims{};
  mid_slices(rows.front()->data, dims);
  int width = gap;
  int row_height = 0;
  for (const auto& d : dims) {
    width += d[0] + gap;
    row_height = std::max(row_height, d[1]);
  }
  const int height = gap + static_cast<int>(rows.size()) * (row_height + gap);
  std::vector<double> pixels(static_cast<std::size_t>(width) * height, 0.0);
  int top = gap;
  for (const Volume* v : rows) {
    const auto slices = mid_slices(v->data, dims);
    int left = gap;
    for (int k = 0; k < 3; ++k) {
      for (int r = 0; r < dims[k][1]; ++r)
        for (int q = 0; q < dims[k][0]; ++q)
          pixels[static_cast<std::size_t>(top + r) * width + left + q] = slices[k][r * dims[k][0] + q];
      left += dims[k][0] + gap;
    }
    top += row_height + gap;
  }
  write_pgm(path, width, height, pixels);
}

}  // namespace

void write_pgm(const fs::path& path, int width, int height, const std::vector<double>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw InvalidArgument("write_pgm: pixel count does not match the image size");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double p : pixels) {
    const double v = std::clamp(std::isfinite(p) ? p : 0.0, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  write_file_atomic(path, out);
}

EvaluationOutput cmd_evaluate(const ExperimentConfig& c, std::ostream* log) {
  c.validate();
  const ExperimentLayout layout{c.output_dir};

  std::vector<std::string> missing;
  for (const auto& d : c.corruptions)
    for (const auto& m : c.methods)
      for (int i = 0; i < c.test_count; ++i)
        if (!fs::exists(layout.run_dir(d.name, m, i) / "recon.vol"))
          missing.push_back(d.name + "/" + m + "/" + case_name(i));
  if (!missing.empty()) {
    std::string msg = "incomplete reconstruction set; missing " + std::to_string(missing.size()) + ":";
    for (const auto& s : missing) msg += "\n  " + s;
    throw Error(msg);
  }

  const Dataset test = load_split(c, "test");
  std::vector<std::string> cases;
  for (int i = 0; i < c.test_count; ++i) cases.push_back(case_name(i));
  const std::string provenance = provenance_line(c);

  EvaluationOutput output;
  for (const auto& d : c.corruptions) {
    std::vector<MetricReport> reports;
    std::vector<std::vector<Volume>> recon_by_method;
    for (const auto& m : c.methods) {
      std::vector<Volume> recon;
      for (int i = 0; i < c.test_count; ++i)
        recon.push_back(load_volume(layout.run_dir(d.name, m, i) / "recon.vol"));
      reports.push_back(evaluate_cohort(test.volumes, recon, c.crop, c.ssim, method_label(m),
                                        d.name, cases));
      recon_by_method.push_back(std::move(recon));
    }
    const std::string title = "Corruption " + d.name + " (" + describe(d) + "), n=" +
                              std::to_string(c.test_count) + ", crop " +
                              std::to_string(c.crop[0]) + "x" + std::to_string(c.crop[1]) + "x" +
                              std::to_string(c.crop[2]);
    write_file_atomic(layout.report_dir() / (d.name + "_table.txt"),
                      provenance + format_table(reports, title));
    write_file_atomic(layout.report_dir() / (d.name + "_table.csv"),
                      provenance + format_csv(reports));
    write_file_atomic(layout.report_dir() / (d.name + "_cases.csv"),
                      provenance + format_cases_csv(reports));

    for (int i = 0; i < c.test_count; ++i) {
      const Volume observed = load_volume(layout.observed(d.name, i));
      std::vector<const Volume*> rows{&test.volumes[i], &observed};
      for (const auto& recon : recon_by_method) rows.push_back(&recon[i]);
      write_slice_grid(layout.report_dir() / "figures" / d.name / (case_name(i) + ".pgm"), rows);
    }
    say(log, "evaluate " + d.name + ":\n" + format_table(reports, title));
    output.corruptions.push_back(d.name);
    output.reports.push_back(std::move(reports));
  }
  return output;
}

EvaluationOutput run_pipeline(const ExperimentConfig& c, bool force, std::ostream* log) {
  cmd_generate(c, force, log);
  const bool needs_models = std::any_of(c.methods.begin(), c.methods.end(),
                                        [](const std::string& m) { return m != "cubic"; });
  if (needs_models) {
    cmd_train(c, TrainStage::kAutoencoder, log);
    cmd_train(c, TrainStage::kDiffusion, log);
  }
  cmd_corrupt(c, log);
  for (const auto& m : c.methods) cmd_reconstruct(c, m, {}, {}, log);
  return cmd_evaluate(c, log);
}

}  // namespace lisr
