#pragma once

// Command-line front end. Every subcommand writes its artifacts plus a
// manifest (<primary output>.manifest.json) holding the resolved config, the
// argv that produced it, input/output digests and the numeric results;
// `rerun` replays a manifest and compares the results.
//
// Exit codes: 0 success, 1 failed precondition or library error, 2 usage.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "strata/dataio/csv.hpp"
#include "strata/dataio/synth.hpp"
#include "strata/diffusion/model.hpp"
#include "strata/eval/report.hpp"
#include "strata/infometric/hscore.hpp"
#include "strata/pipeline/reconstruct.hpp"
#include "strata/scae/scae.hpp"

namespace strata::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kManifestFormatVersion = 1;

/// Directory that relative artifact paths resolve against:
/// $STRATA_ARTIFACT_ROOT when set, else the working directory.
inline fs::path artifact_root() {
  const char* env = std::getenv("STRATA_ARTIFACT_ROOT");
  return env && *env ? fs::path(env) : fs::current_path();
}

inline fs::path resolve(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : artifact_root() / path;
}

/// Seed of a named component stream under the run's root seed.
inline std::uint64_t stream_seed(std::uint64_t root, const char* name) { return derive_seed(root, name); }

inline std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(ss.str())));
  return buf;
}

inline void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw PreconditionError("cli", "cannot write '" + p.string() + "'");
  out << j.dump(2) << "\n";
}

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw PreconditionError("cli", "cannot read '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("cli", "'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

inline std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("cli", std::string("bad integer '") + tok + "' in " + what);
    }
  }
  if (out.empty()) throw ConfigError("cli", std::string("empty list for ") + what);
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

/// Shared state of one invocation.
struct Run {
  std::vector<std::string> argv;
  std::uint64_t seed = 7;
  int workers = 1;
  json inputs = json::array();
  json outputs = json::array();
  json results = json::object();
  std::ostream* out = &std::cout;

  fs::path input(const std::string& p, const char* role) {
    if (p.empty()) throw PreconditionError("cli", std::string("missing required ") + role + " path");
    const fs::path r = resolve(p);
    if (!fs::exists(r)) throw PreconditionError("cli", std::string(role) + " '" + r.string() + "' does not exist");
    inputs.push_back({{"role", role}, {"path", p}, {"digest", file_digest(r)}});
    return r;
  }

  fs::path output(const std::string& p) {
    const fs::path r = resolve(p);
    if (r.has_parent_path()) fs::create_directories(r.parent_path());
    return r;
  }

  void record_output(const std::string& p) { outputs.push_back({{"path", p}, {"digest", file_digest(resolve(p))}}); }
};

struct SamplerOptions {
  int steps = 100;
  double eta = 0.0;
  double guidance = -1.0;  // < 0 keeps the model's trained scale
  double strength = 0.3;
  std::string granu0_condition = "null_token";
  bool product_form = false;

  void add(CLI::App* app) {
    app->add_option("--steps,--inference-steps", steps, "inference steps S")->capture_default_str();
    app->add_option("--eta", eta, "sampler stochasticity (0 = deterministic)")->capture_default_str();
    app->add_option("--guidance", guidance, "guidance scale (default: the model's)");
    app->add_option("--strength,--granu0-strength", strength, "Granu.0 forward-noise fraction t*/T")->capture_default_str();
    app->add_option("--granu0-condition", granu0_condition, "null_token or raw_feature")->capture_default_str();
    app->add_flag("--product-form-variance", product_form, "use the product form of the reference variance");
  }

  pipeline::GranularityRequest request(int level, std::uint64_t root) const {
    pipeline::GranularityRequest r;
    r.level = level;
    r.granu0_strength = strength;
    r.granu0_condition = pipeline::parse_granu0_condition(granu0_condition);
    r.sampler.inference_steps = steps;
    r.sampler.eta = eta;
    r.sampler.seed = stream_seed(root, "sampler");
    if (guidance >= 0.0) r.sampler.guidance_scale = guidance;
    r.sampler.product_form_variance = product_form;
    return r;
  }
};

struct ClassifierOptions {
  eval::ClassifierConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--folds", cfg.folds, "cross-validation folds")->capture_default_str();
    app->add_option("--classifier-epochs", cfg.epochs, "classifier training epochs")->capture_default_str();
  }
};

// ---------------------------------------------------------------------------
// subcommands

struct SynthOptions {
  std::string spec = "default";
  int subjects = 0;
  int windows = 0;
  bool raw = false;
  std::string out = "data.bin";
};

inline void cmd_synth(Run& run, const SynthOptions& o) {
  if (o.spec != "default") throw ConfigError("dataio", "unknown synthetic spec '" + o.spec + "' (only 'default')");
  auto spec = dataio::default_corpus_spec(stream_seed(run.seed, "data"));
  if (o.subjects > 0) spec.n_subjects = o.subjects;
  if (o.windows > 0) spec.windows_per_subject_activity = o.windows;
  dataio::Dataset ds = dataio::synthesize(spec);
  if (!o.raw) {
    const auto stats = dataio::fit_normalization(ds);
    ds = dataio::normalize(std::move(ds), stats);
  }
  dataio::save_dataset(run.output(o.out), ds);
  run.record_output(o.out);
  run.results = {{"windows", ds.size()}, {"channels", ds.channels()}, {"activities", ds.num_activities()}};
}

struct CsvOptions {
  std::string csv;
  std::string channels;
  std::string attributes;
  int window_length = 100;
  int stride = 0;
  double rate = 50.0;
  std::string out = "data.bin";
};

inline void cmd_ingest(Run& run, const CsvOptions& o) {
  const fs::path in = run.input(o.csv, "csv");
  dataio::CsvSchema schema;
  schema.channels = split_list(o.channels);
  if (schema.channels.empty()) throw ConfigError("dataio", "--channels must name at least one column");
  schema.attributes = split_list(o.attributes);
  schema.window_length = o.window_length;
  schema.stride = o.stride;
  schema.sample_rate_hz = o.rate;
  auto res = dataio::load_csv(in, schema);
  const auto stats = dataio::fit_normalization(res.dataset);
  dataio::Dataset ds = dataio::normalize(std::move(res.dataset), stats);
  dataio::save_dataset(run.output(o.out), ds);
  run.record_output(o.out);
  run.results = {{"windows", res.windows}, {"dropped_rows", res.dropped_rows}};
}

struct CaeOptions {
  std::string data;
  std::string out = "stack.bin";
  scae::ScaeConfig cfg;
};

inline void cmd_train_cae(Run& run, CaeOptions o) {
  const auto ds = dataio::load_dataset(run.input(o.data, "dataset"));
  o.cfg.seed = stream_seed(run.seed, "cae");
  auto stack = scae::train_stack(ds, o.cfg);
  scae::save_stack(run.output(o.out), stack);
  run.record_output(o.out);
  json hist = json::array();
  for (const auto& h : stack.training_history) hist.push_back({{"best_epoch", h.best_epoch}, {"val_mse", h.val_mse}});
  run.results = {{"depth", stack.depth()}, {"history", hist}};
}

struct DiffusionOptions {
  std::string data;
  std::string stack;
  std::string out = "model.bin";
  std::string layer_policy = "all_levels";
  diffusion::DiffusionConfig cfg;
};

inline void cmd_train_diffusion(Run& run, DiffusionOptions o) {
  const auto ds = dataio::load_dataset(run.input(o.data, "dataset"));
  const auto stack = scae::load_stack(run.input(o.stack, "stack"));
  o.cfg.seed = stream_seed(run.seed, "diffusion");
  o.cfg.layer_policy = diffusion::parse_layer_policy(o.layer_policy);
  auto dm = diffusion::train(ds, stack, o.cfg, [&](int e, double loss) {
    if (e % 10 == 0 || e + 1 == o.cfg.epochs) *run.out << "epoch " << e + 1 << " loss " << loss << "\n";
  });
  diffusion::save_model(run.output(o.out), dm);
  run.record_output(o.out);
  run.results = {{"loss_curve", dm.loss_curve}, {"parameters", nn::parameter_count(dm.net.parameters())}};
}

struct ReconOptions {
  std::string data;
  std::string stack;
  std::string model;
  int level = 1;
  std::string out = "recon.bin";
  SamplerOptions sampler;
};

inline void cmd_reconstruct(Run& run, const ReconOptions& o) {
  const auto ds = dataio::load_dataset(run.input(o.data, "dataset"));
  const auto stack = scae::load_stack(run.input(o.stack, "stack"));
  const auto dm = diffusion::load_model(run.input(o.model, "model"));
  const auto req = o.sampler.request(o.level, run.seed);
  const auto rd = pipeline::reconstruct_dataset(ds, req, dm, stack, run.workers);
  dataio::save_dataset(run.output(o.out), rd);
  run.record_output(o.out);
  double sq = 0.0;
  for (const auto& w : rd.windows) sq += w.samples.squaredNorm();
  run.results = {{"windows", rd.size()},
                 {"mean_square", rd.empty() ? 0.0 : sq / (static_cast<double>(rd.size()) * rd.window_length() * rd.channels())},
                 {"request", pipeline::provenance_of(req, dm, 0)}};
}

struct HscoreOptions {
  std::string data;
  std::string stack;
  std::string layers = "1,2,3";
  double ridge = 1e-6;
  std::string out = "hscore.json";
};

inline json hscore_layers(const dataio::Dataset& ds, const scae::ScaeStack& stack, const std::vector<int>& layers,
                          double ridge) {
  json j = json::object();
  const auto labels = ds.activity_labels();
  for (int l : layers) {
    const auto fm = infometric::feature_matrix(scae::extract_all(stack, ds, l), labels);
    const auto h = infometric::hscore(fm, ridge);
    j[std::to_string(l)] = {{"hscore", h.value}, {"dims", h.dims}, {"dropped_constant_columns", h.dropped_constant_columns}};
  }
  return j;
}

inline void cmd_hscore(Run& run, const HscoreOptions& o) {
  const auto ds = dataio::load_dataset(run.input(o.data, "dataset"));
  const auto stack = scae::load_stack(run.input(o.stack, "stack"));
  run.results = hscore_layers(ds, stack, parse_int_list(o.layers, "--layers"), o.ridge);
  write_json(run.output(o.out), run.results);
  run.record_output(o.out);
}

struct EvaluateOptions {
  std::string raw;
  std::string stack;
  std::string model;
  std::vector<std::string> recon;  // name=path
  std::string levels = "0,1,2,3";
  std::string targets = "activity,gender";
  bool laplace = false;
  std::string out = "report.json";
  SamplerOptions sampler;
  ClassifierOptions classifier;
};

inline void cmd_evaluate(Run& run, const EvaluateOptions& o) {
  // The model and stack are checked first: a report is always tied to the
  // checkpoints that produced its variants.
  const auto dm = diffusion::load_model(run.input(o.model, "model"));
  const auto stack = scae::load_stack(run.input(o.stack, "stack"));
  const auto raw = dataio::load_dataset(run.input(o.raw, "raw dataset"));
  std::vector<std::string> attributes;
  for (const auto& t : split_list(o.targets))
    if (t != "activity") attributes.push_back(t);

  std::vector<std::pair<std::string, dataio::Dataset>> variants;
  if (!o.recon.empty()) {
    for (const auto& spec : o.recon) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw ConfigError("cli", "--recon expects name=path, got '" + spec + "'");
      variants.emplace_back(spec.substr(0, eq), dataio::load_dataset(run.input(spec.substr(eq + 1), "reconstruction")));
    }
  } else {
    for (int level : parse_int_list(o.levels, "--levels"))
      variants.emplace_back("granu" + std::to_string(level),
                            pipeline::reconstruct_dataset(raw, o.sampler.request(level, run.seed), dm, stack, run.workers));
  }
  std::vector<std::pair<std::string, const dataio::Dataset*>> refs;
  for (const auto& [n, d] : variants) refs.emplace_back(n, &d);
  const std::uint64_t eval_seed = stream_seed(run.seed, "eval");
  auto rep = eval::evaluate(raw, refs, attributes, o.classifier.cfg, eval_seed);
  std::vector<int> layers;
  for (int l = 1; l <= stack.depth(); ++l) layers.push_back(l);
  const json h = hscore_layers(raw, stack, layers, 1e-6);
  for (const auto& [k, v] : h.items()) rep.hscores[std::stoi(k)] = v["hscore"].get<double>();
  if (o.laplace && !attributes.empty())
    rep.laplace = eval::laplace_sweep(raw, attributes.front(), eval::default_laplace_scales(), o.classifier.cfg, eval_seed);
  run.results = eval::to_json(rep);
  write_json(run.output(o.out), run.results);
  run.record_output(o.out);
}

struct PedometerOptions {
  std::string data;
  std::string stack;
  std::string model;
  std::string step_counts = "200,600,1000";
  std::string levels = "0,1,2";
  std::string out = "pedometer.json";
  SamplerOptions sampler;
};

/// Synthetic walks normalized with `ds`'s statistics, reconstructed per
/// level and counted after undoing the normalization.
inline json pedometer_study(const dataio::Dataset& ds, const scae::ScaeStack& stack, const diffusion::DiffusionModel& dm,
                            const std::vector<int>& step_counts, const std::vector<int>& levels,
                            const SamplerOptions& sampler, std::uint64_t root, int workers) {
  if (!ds.normalization_stats) throw PreconditionError("eval", "pedometer study needs a normalized reference dataset");
  const auto spec = dataio::default_corpus_spec(stream_seed(root, "data"));
  std::size_t walk = 0;
  for (std::size_t a = 0; a < spec.activities.size(); ++a)
    if (spec.activities[a].name == "walk") walk = a;
  json out = json::array();
  for (int steps : step_counts) {
    auto trace = dataio::synthesize_walk(spec, walk, steps, 0, derive_seed(stream_seed(root, "pedometer"), steps));
    const auto norm = dataio::normalize(trace.windows, *ds.normalization_stats);
    eval::PedometerResult r;
    r.true_steps = trace.true_steps;
    r.counted_steps["raw"] = eval::count_steps(norm);
    for (int level : levels)
      r.counted_steps["granu" + std::to_string(level)] =
          eval::count_steps(pipeline::reconstruct_dataset(norm, sampler.request(level, root), dm, stack, workers));
    json row = {{"true_steps", r.true_steps}};
    for (const auto& [k, v] : r.counted_steps) {
      row["counted_steps"][k] = v;
      row["error_rate"][k] = r.error_rate(k);
    }
    out.push_back(row);
  }
  return out;
}

inline void cmd_pedometer(Run& run, const PedometerOptions& o) {
  const auto dm = diffusion::load_model(run.input(o.model, "model"));
  const auto stack = scae::load_stack(run.input(o.stack, "stack"));
  const auto ds = dataio::load_dataset(run.input(o.data, "dataset"));
  run.results = {{"walks", pedometer_study(ds, stack, dm, parse_int_list(o.step_counts, "--step-counts"),
                                           parse_int_list(o.levels, "--levels"), o.sampler, run.seed, run.workers)}};
  write_json(run.output(o.out), run.results);
  run.record_output(o.out);
}

struct AblateOptions {
  std::string kind = "modality";
  std::string data;
  std::string stack;
  std::string model;
  std::string modalities = "acc,gyro,mag,all";
  std::string step_list = "5,100";
  int level = 1;
  std::string out = "ablation.json";
  SamplerOptions sampler;
  ClassifierOptions classifier;
};

inline void cmd_ablate(Run& run, const AblateOptions& o) {
  if (o.kind != "modality" && o.kind != "steps") throw ConfigError("cli", "--kind must be modality or steps");
  const auto mods = split_list(o.modalities);
  const auto dm = diffusion::load_model(run.input(o.model, "model"));
  const auto stack = scae::load_stack(run.input(o.stack, "stack"));
  const auto ds = dataio::load_dataset(run.input(o.data, "dataset"));
  const std::uint64_t eval_seed = stream_seed(run.seed, "eval");
  if (o.kind == "modality") {
    for (const auto& m : mods) (void)eval::modality_channels(ds, m);
    const auto res = eval::modality_ablation(dm, stack, ds, mods, o.sampler.request(o.level, run.seed),
                                             o.classifier.cfg, eval_seed, run.workers);
    json rows = json::array();
    for (const auto& r : res)
      rows.push_back({{"modality", r.modality},
                      {"channels", r.channels},
                      {"raw_accuracy", r.raw_accuracy},
                      {"recon_accuracy", r.recon_accuracy},
                      {"utility_ratio", r.utility_ratio}});
    run.results = {{"kind", "modality"}, {"level", o.level}, {"rows", rows}};
  } else {
    // Classifiers are trained on raw folds and scored on the generations,
    // so every step count meets the same recognizer.
    const auto folds = dataio::kfold_split(ds, o.classifier.cfg.folds, derive_seed(eval_seed, "folds"));
    json rows = json::array();
    for (int s : parse_int_list(o.step_list, "--step-list")) {
      SamplerOptions so = o.sampler;
      so.steps = s;
      const auto rd = pipeline::reconstruct_dataset(ds, so.request(o.level, run.seed), dm, stack, run.workers);
      const auto cv = eval::cross_validate(ds, rd, eval::Target::activity(), folds, o.classifier.cfg, eval_seed);
      rows.push_back({{"steps", s}, {"accuracy", cv.mean_accuracy}, {"fold_accuracy", cv.fold_accuracy}});
    }
    run.results = {{"kind", "steps"}, {"level", o.level}, {"rows", rows}};
  }
  write_json(run.output(o.out), run.results);
  run.record_output(o.out);
}

// ---------------------------------------------------------------------------
// manifest

inline fs::path manifest_path(const std::string& primary_output) {
  return resolve(primary_output + ".manifest.json");
}

inline json make_manifest(const Run& run, const std::string& command, const std::string& config_ini) {
  return {{"format", "strata.manifest"},
          {"version", kManifestFormatVersion},
          {"strata_version", kVersion},
          {"command", command},
          {"argv", run.argv},
          {"config", config_ini},
          {"root_seed", run.seed},
          {"format_versions",
           {{"dataset", dataio::kDatasetFormatVersion},
            {"stack", scae::kStackFormatVersion},
            {"model", diffusion::kModelFormatVersion},
            {"report", eval::kReportFormatVersion}}},
          {"inputs", run.inputs},
          {"outputs", run.outputs},
          {"results", run.results}};
}

/// Largest elementwise difference between two JSON trees of numbers;
/// +inf when their shapes or non-numeric leaves differ.
inline double max_abs_difference(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
  if (a.type() != b.type() || a.size() != b.size()) return std::numeric_limits<double>::infinity();
  if (a.is_object()) {
    double m = 0.0;
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) return std::numeric_limits<double>::infinity();
      m = std::max(m, max_abs_difference(v, b[k]));
    }
    return m;
  }
  if (a.is_array()) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_difference(a[i], b[i]));
    return m;
  }
  return a == b ? 0.0 : std::numeric_limits<double>::infinity();
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

inline int cmd_rerun(const std::string& manifest, double tolerance, std::ostream& out, std::ostream& err) {
  const json m = read_json(resolve(manifest));
  if (m.value("format", "") != "strata.manifest") throw FormatError("cli", "'" + manifest + "' is not a manifest");
  if (m.value("version", 0) != kManifestFormatVersion)
    throw FormatError("cli", "unsupported manifest version " + std::to_string(m.value("version", 0)));
  const auto argv = m.at("argv").get<std::vector<std::string>>();
  if (argv.empty() || argv.front() == "rerun") throw FormatError("cli", "manifest holds no replayable command");
  // The replay writes its own manifest over the original; keep the stored
  // results in memory for the comparison.
  const json expected = m.at("results");
  const int rc = run(argv, out, err);
  if (rc != 0) return rc;
  const auto outputs = m.at("outputs");
  if (outputs.empty()) throw FormatError("cli", "manifest lists no outputs");
  const json again = read_json(manifest_path(outputs.front().at("path").get<std::string>())).at("results");
  const double d = max_abs_difference(expected, again);
  out << "rerun max |difference| = " << d << (d <= tolerance ? " (reproduced)" : " (MISMATCH)") << "\n";
  return d <= tolerance ? 0 : 1;
}

// ---------------------------------------------------------------------------
// entry point

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"strata: multi-granularity sensor data reconstruction", "strata"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "INI config; sections name subcommands; flags override file values");
  app.require_subcommand(1);

  Run rn;
  rn.argv = args;
  rn.out = &out;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", rn.seed, "root seed; components draw named substreams")->capture_default_str();
    sub->add_option("--workers", rn.workers, "reconstruction threads (results do not depend on it)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  };

  SynthOptions so;
  auto* synth = app.add_subcommand("synth-data", "generate the labelled synthetic corpus");
  synth->add_option("--spec", so.spec, "corpus spec")->capture_default_str();
  synth->add_option("--subjects", so.subjects, "override the subject count");
  synth->add_option("--windows", so.windows, "override windows per subject and activity");
  synth->add_flag("--raw", so.raw, "skip the per-channel z-score");
  synth->add_option("--out", so.out, "dataset output")->capture_default_str();
  common(synth);

  CsvOptions co;
  auto* ingest = app.add_subcommand("ingest-csv", "window and normalize a labelled CSV recording");
  ingest->add_option("--csv", co.csv, "input CSV");
  ingest->add_option("--channels", co.channels, "comma-separated channel columns");
  ingest->add_option("--attributes", co.attributes, "comma-separated attribute columns");
  ingest->add_option("--window-length", co.window_length)->capture_default_str();
  ingest->add_option("--stride", co.stride, "0 = non-overlapping")->capture_default_str();
  ingest->add_option("--rate", co.rate, "sample rate in Hz")->capture_default_str();
  ingest->add_option("--out", co.out)->capture_default_str();
  common(ingest);

  CaeOptions ca;
  auto* cae = app.add_subcommand("train-cae", "train the stacked convolutional autoencoders");
  cae->add_option("--data", ca.data, "normalized dataset");
  cae->add_option("--out", ca.out)->capture_default_str();
  cae->add_option("--depth", ca.cfg.depth)->capture_default_str();
  cae->add_option("--epochs", ca.cfg.epochs)->capture_default_str();
  cae->add_option("--lr", ca.cfg.learning_rate)->capture_default_str();
  cae->add_option("--kernel", ca.cfg.kernel)->capture_default_str();
  common(cae);

  DiffusionOptions dopt;
  auto* dif = app.add_subcommand("train-diffusion", "train the conditional denoiser");
  dif->add_option("--data", dopt.data, "normalized dataset");
  dif->add_option("--stack", dopt.stack, "trained stack");
  dif->add_option("--out", dopt.out)->capture_default_str();
  dif->add_option("--epochs", dopt.cfg.epochs)->capture_default_str();
  dif->add_option("--draws-per-window", dopt.cfg.draws_per_window)->capture_default_str();
  dif->add_option("--lr", dopt.cfg.learning_rate)->capture_default_str();
  dif->add_option("--null-prob", dopt.cfg.null_prob)->capture_default_str();
  dif->add_option("--guidance", dopt.cfg.guidance_scale, "default guidance stored with the model")->capture_default_str();
  dif->add_option("--timesteps,--steps", dopt.cfg.T, "total diffusion steps T")->capture_default_str();
  dif->add_option("--layer-policy", dopt.layer_policy, "all_levels or latent_only")->capture_default_str();
  dif->add_option("--base-width", dopt.cfg.base_width)->capture_default_str();
  common(dif);

  ReconOptions ro;
  auto* rec = app.add_subcommand("reconstruct", "reconstruct a dataset at one granularity");
  rec->add_option("--data", ro.data);
  rec->add_option("--stack", ro.stack);
  rec->add_option("--model", ro.model);
  rec->add_option("--level,--granularity", ro.level, "granularity i")->capture_default_str();
  rec->add_option("--out", ro.out)->capture_default_str();
  ro.sampler.add(rec);
  common(rec);

  HscoreOptions ho;
  auto* hs = app.add_subcommand("hscore", "H-score of the latent features per layer");
  hs->add_option("--data", ho.data);
  hs->add_option("--stack", ho.stack);
  hs->add_option("--layers", ho.layers)->capture_default_str();
  hs->add_option("--ridge", ho.ridge)->capture_default_str();
  hs->add_option("--out", ho.out)->capture_default_str();
  common(hs);

  EvaluateOptions eo;
  auto* ev = app.add_subcommand("evaluate", "score raw and reconstructed data into a report");
  ev->add_option("--raw", eo.raw);
  ev->add_option("--stack", eo.stack);
  ev->add_option("--model", eo.model);
  ev->add_option("--recon", eo.recon, "name=path of a reconstructed dataset (repeatable)");
  ev->add_option("--levels", eo.levels, "levels to reconstruct when no --recon is given")->capture_default_str();
  ev->add_option("--targets", eo.targets)->capture_default_str();
  ev->add_flag("--laplace", eo.laplace, "add the Laplace-noise baseline");
  ev->add_option("--out", eo.out)->capture_default_str();
  eo.sampler.add(ev);
  eo.classifier.add(ev);
  common(ev);

  PedometerOptions po;
  auto* ped = app.add_subcommand("pedometer", "step counting on reconstructed synthetic walks");
  ped->add_option("--data", po.data, "normalized reference dataset");
  ped->add_option("--stack", po.stack);
  ped->add_option("--model", po.model);
  ped->add_option("--step-counts", po.step_counts)->capture_default_str();
  ped->add_option("--levels", po.levels)->capture_default_str();
  ped->add_option("--out", po.out)->capture_default_str();
  po.sampler.add(ped);
  common(ped);

  AblateOptions ao;
  auto* abl = app.add_subcommand("ablate", "modality or inference-step ablation");
  abl->add_option("--kind", ao.kind, "modality or steps")->capture_default_str();
  abl->add_option("--data", ao.data);
  abl->add_option("--stack", ao.stack);
  abl->add_option("--model", ao.model);
  abl->add_option("--modalities", ao.modalities)->capture_default_str();
  abl->add_option("--step-list", ao.step_list)->capture_default_str();
  abl->add_option("--level", ao.level)->capture_default_str();
  abl->add_option("--out", ao.out)->capture_default_str();
  ao.sampler.add(abl);
  ao.classifier.add(abl);
  common(abl);

  std::string manifest;
  double tolerance = 1e-6;
  auto* rr = app.add_subcommand("rerun", "replay a manifest and compare its results");
  rr->add_option("manifest", manifest, "manifest file")->required();
  rr->add_option("--tolerance", tolerance)->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "rerun") return cmd_rerun(manifest, tolerance, out, err);
    std::string primary;
    if (name == "synth-data") {
      cmd_synth(rn, so);
      primary = so.out;
    } else if (name == "ingest-csv") {
      cmd_ingest(rn, co);
      primary = co.out;
    } else if (name == "train-cae") {
      cmd_train_cae(rn, ca);
      primary = ca.out;
    } else if (name == "train-diffusion") {
      cmd_train_diffusion(rn, dopt);
      primary = dopt.out;
    } else if (name == "reconstruct") {
      cmd_reconstruct(rn, ro);
      primary = ro.out;
    } else if (name == "hscore") {
      cmd_hscore(rn, ho);
      primary = ho.out;
    } else if (name == "evaluate") {
      cmd_evaluate(rn, eo);
      primary = eo.out;
    } else if (name == "pedometer") {
      cmd_pedometer(rn, po);
      primary = po.out;
    } else {
      cmd_ablate(rn, ao);
      primary = ao.out;
    }
    write_json(manifest_path(primary), make_manifest(rn, name, "[" + name + "]\n" + sub->config_to_str(true, false)));
    out << name << ": wrote " << resolve(primary).string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace strata::cli
