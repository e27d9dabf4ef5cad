#include "cli.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "convseq/checkpoint.h"
#include "convseq/eval.h"
#include "convseq/training.h"

namespace convseq::cli {
namespace fs = std::filesystem;
namespace {

constexpr const char* kManifestFile = "manifest.txt";
constexpr const char* kStatsFile = "stats.json";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

void log_block(std::ostream& log, const std::string& title, const std::string& body) {
  log << "# " << title << "\n";
  std::istringstream lines(body);
  for (std::string line; std::getline(lines, line);) log << "#   " << line << "\n";
}

// Options shared by the commands that build a model.
struct ConfigArgs {
  std::string preset = "default";
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::optional<double> eta;
  std::optional<std::size_t> window;
  std::string kernel;
  bool no_long_term = false;
  bool no_adv = false;
};

void add_config_options(CLI::App& cmd, ConfigArgs& a) {
  cmd.add_option("--preset", a.preset, "Base configuration")->check(CLI::IsMember({"default", "tiny"}));
  cmd.add_option("--config", a.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
  cmd.add_option("--set", a.sets, "Override one config key (key=value); repeatable");
  cmd.add_option("--seed", a.seed, "Master seed for every random stream");
  cmd.add_option("--iters", a.iters, "Training iterations");
  cmd.add_option("--eta", a.eta, "Predicted/ground-truth mix inside the decoding window");
  cmd.add_option("--window", a.window, "Short-term window length C");
  cmd.add_option("--kernel", a.kernel, "Convolution kernel, e.g. 2x7");
  cmd.add_flag("--no-long-term", a.no_long_term, "Disable the long-term encoder");
  cmd.add_flag("--no-adv", a.no_adv, "Disable the adversarial regularizer");
}

Config resolve_config(const ConfigArgs& a) {
  Config c = a.preset == "tiny" ? tiny_config() : Config{};
  if (!a.config_file.empty()) c = load_config(a.config_file, c);
  for (const std::string& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) c.schedule.seed = *a.seed;
  if (a.iters) c.schedule.iterations = *a.iters;
  if (a.eta) c.hp.eta = *a.eta;
  if (a.window) c.hp.window = *a.window;
  if (!a.kernel.empty()) c.arch.kernel = parse_kernel(a.kernel);
  if (a.no_long_term) c.arch.use_long_term = false;
  if (a.no_adv) c.schedule.use_adversarial = false;
  validate(c);
  return c;
}

// Where trials and statistics come from.
struct DataArgs {
  std::string data_root;
  std::string stats;
  bool synthetic = false;
  std::vector<std::string> test_subjects{"S5"};
  SynthOptions synth;
};

void add_synth_options(CLI::App& cmd, SynthOptions& s, const std::string& prefix) {
  cmd.add_option("--" + prefix + "joints", s.joints, "Joints per frame, root included");
  cmd.add_option("--" + prefix + "constant-joints", s.constant_joints, "Trailing joints that never move");
  cmd.add_option("--" + prefix + "frames", s.frames, "Frames per trial");
  cmd.add_option("--" + prefix + "freq-min", s.freq_min, "Lowest joint frequency (Hz)");
  cmd.add_option("--" + prefix + "freq-max", s.freq_max, "Highest joint frequency (Hz)");
  cmd.add_option("--" + prefix + "amplitude", s.amplitude, "Angle amplitude (radians)");
  cmd.add_option("--" + prefix + "trials", s.trials, "Trials per subject and action");
}

void add_data_options(CLI::App& cmd, DataArgs& d) {
  cmd.add_option("--data-root", d.data_root, "Dataset root (or prep output directory, or manifest file)");
  cmd.add_option("--stats", d.stats, "Normalization statistics file")->check(CLI::ExistingFile);
  cmd.add_flag("--synthetic", d.synthetic, "Use the built-in synthetic corpus instead of --data-root");
  cmd.add_option("--test-subject", d.test_subjects, "Subjects held out for testing when scanning a raw tree");
  cmd.add_option("--synth-seed", d.synth.seed, "Seed of the synthetic corpus");
  add_synth_options(cmd, d.synth, "synth-");
}

struct Corpus {
  std::string origin;
  std::shared_ptr<const NormalizationStats> stats;
  std::vector<RawTrial> train, validation, test;
};

std::vector<RawTrial> synthetic_trials(const SynthOptions& s) {
  std::vector<RawTrial> out;
  for (std::size_t sub = 0; sub < s.subjects.size(); ++sub)
    for (std::size_t a = 0; a < s.actions.size(); ++a)
      for (std::size_t t = 0; t < s.trials; ++t) {
        RawTrial r;
        r.frames = synth_trial(s, a, sub, t);
        r.subject = s.subjects[sub];
        r.action = s.actions[a];
        r.trial = static_cast<int>(t + 1);
        out.push_back(std::move(r));
      }
  return out;
}

std::string synth_summary(const SynthOptions& s) {
  return "joints = " + std::to_string(s.joints) + "\nconstant_joints = " + std::to_string(s.constant_joints) +
         "\nframes = " + std::to_string(s.frames) + "\nfreq_min = " + fmt(s.freq_min) +
         "\nfreq_max = " + fmt(s.freq_max) + "\namplitude = " + fmt(s.amplitude) +
         "\ntrials = " + std::to_string(s.trials) + "\nseed = " + std::to_string(s.seed) + "\n";
}

Corpus load_corpus(const DataArgs& d, std::ostream& log) {
  Corpus c;
  fs::path stats_dir;
  if (d.synthetic) {
    if (!d.data_root.empty()) throw UsageError("--synthetic and --data-root are mutually exclusive");
    log_block(log, "synthetic corpus", synth_summary(d.synth));
    for (RawTrial& r : synthetic_trials(d.synth)) {
      const bool test = std::find(d.test_subjects.begin(), d.test_subjects.end(), r.subject) != d.test_subjects.end();
      (test ? c.test : c.train).push_back(std::move(r));
    }
    c.origin = "synthetic";
  } else {
    if (d.data_root.empty()) throw UsageError("pass --data-root <dir> (see `prep`) or --synthetic");
    const fs::path root = d.data_root;
    Manifest manifest;
    if (fs::is_regular_file(root)) {
      manifest = load_manifest(root);
      stats_dir = root.parent_path();
    } else if (fs::is_directory(root)) {
      stats_dir = root;
      manifest = fs::exists(root / kManifestFile) ? load_manifest(root / kManifestFile)
                                                  : scan_dataset(root, d.test_subjects);
    } else {
      throw std::runtime_error("data root " + root.string() + " does not exist");
    }
    c.train = load_split(manifest, "train");
    c.validation = load_split(manifest, "validation");
    c.test = load_split(manifest, "test");
    c.origin = manifest.root.string();
  }

  if (!d.stats.empty()) {
    c.stats = std::make_shared<NormalizationStats>(load_stats(d.stats));
    log << "# stats loaded from " << d.stats << "\n";
  } else if (!stats_dir.empty() && fs::exists(stats_dir / kStatsFile)) {
    c.stats = std::make_shared<NormalizationStats>(load_stats(stats_dir / kStatsFile));
    log << "# stats loaded from " << (stats_dir / kStatsFile).string() << "\n";
  } else {
    if (c.train.empty()) throw std::runtime_error("no training trials to fit normalization statistics on");
    c.stats = std::make_shared<NormalizationStats>(fit_stats(c.train));
    log << "# stats fitted on " << c.train.size() << " training trials\n";
  }
  log << "# data " << c.origin << ": " << c.train.size() << " train, " << c.validation.size() << " validation, "
      << c.test.size() << " test trials; raw dim " << c.stats->raw_dim() << ", reduced dim "
      << c.stats->reduced_dim() << ", stats " << fingerprint_hex(c.stats->fingerprint()) << "\n";
  return c;
}

Dataset dataset_of(const std::vector<RawTrial>& trials, const Corpus& c, const char* split) {
  if (trials.empty()) throw std::runtime_error(std::string("the ") + split + " split is empty");
  return make_dataset(trials, c.stats);
}

std::string join_path_list(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

// Commands.

struct PrepArgs {
  std::string data_root, out;
  std::vector<std::string> test_subjects{"S5"};
  double eps = kConstantStdCutoff;
};

int cmd_prep(const PrepArgs& a, std::ostream& out, std::ostream& log) {
  const fs::path root = a.data_root;
  if (!fs::is_directory(root)) throw std::runtime_error("data root " + root.string() + " is not a directory");
  const fs::path dest = a.out.empty() ? root : fs::path(a.out);
  log_block(log, "prep", "data_root = " + root.string() + "\nout = " + dest.string() +
                             "\ntest_subjects = " + join_path_list(a.test_subjects) + "\neps_const = " + fmt(a.eps) +
                             "\nglobal_dims = " + std::to_string(kGlobalDims) + "\n");
  Manifest manifest = scan_dataset(root, a.test_subjects);
  const auto train = load_split(manifest, "train");
  if (train.empty()) throw std::runtime_error("no training trials found under " + root.string());
  const NormalizationStats stats = fit_stats(train, a.eps);
  fs::create_directories(dest);
  const fs::path rel = fs::relative(fs::absolute(root), fs::absolute(dest));
  manifest.root = rel.empty() ? fs::absolute(root) : rel;
  save_manifest(dest / kManifestFile, manifest);
  save_stats(dest / kStatsFile, stats);
  out << "trials: " << train.size() << " train, " << manifest.files("test").size() << " test\n"
      << "raw dim: " << stats.raw_dim() << "\nreduced dim: " << stats.reduced_dim() << "\n"
      << "stats: " << (dest / kStatsFile).string() << " (" << fingerprint_hex(stats.fingerprint()) << ")\n"
      << "manifest: " << (dest / kManifestFile).string() << "\n";
  return 0;
}

int cmd_synth(const std::string& out_dir, const SynthOptions& s, std::ostream& out, std::ostream& log) {
  log_block(log, "synth", synth_summary(s) + "out = " + out_dir + "\n");
  const auto files = write_synthetic_corpus(out_dir, s);
  out << "wrote " << files.size() << " trials to " << out_dir << "\n";
  return 0;
}

struct TrainArgs {
  ConfigArgs config;
  DataArgs data;
  std::string out = "run";
  std::string resume;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& log) {
  const fs::path dir = a.out;
  const Corpus corpus = load_corpus(a.data, log);
  Dataset train_set = dataset_of(corpus.train, corpus, "train");
  std::optional<Dataset> validation;
  if (!corpus.validation.empty()) validation = make_dataset(corpus.validation, corpus.stats);

  std::unique_ptr<Trainer> trainer;
  std::size_t until = 0;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume, corpus.stats->fingerprint());
    if (a.config.iters) ck.config.schedule.iterations = *a.config.iters;
    trainer = std::make_unique<Trainer>(ck, std::move(train_set));
    until = ck.config.schedule.iterations;
    log << "# resuming from " << a.resume << " at iteration " << ck.iteration << "\n";
  } else {
    const Config config = resolve_config(a.config);
    trainer = std::make_unique<Trainer>(config, std::move(train_set));
    until = config.schedule.iterations;
  }
  const Config& config = trainer->config();
  log_block(log, "resolved config", to_config_text(config));
  fs::create_directories(dir);
  write_file(dir / "config.txt", to_config_text(config));
  save_stats(dir / kStatsFile, *corpus.stats);

  std::ofstream csv(dir / "train.csv", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!csv) throw std::runtime_error("cannot write " + (dir / "train.csv").string());
  if (a.resume.empty()) csv << train_csv_header() << '\n';

  const std::size_t every = std::max<std::size_t>(1, config.schedule.checkpoint_every);
  TrainRunOptions options;
  options.out_dir = dir;
  options.report = &csv;
  options.validation = validation ? &*validation : nullptr;
  options.on_row = [&](const TrainRow& row) {
    if (row.iteration % every == 0 || row.iteration == until) {
      log << "iter " << row.iteration << "  mse " << row.mse << "  adv " << row.adv << "  d_loss " << row.d_loss
          << "  total " << row.total << "\n";
    }
  };
  train(*trainer, until, options);
  out << "trained " << trainer->iteration() << " iterations; checkpoint " << (dir / "final.ckpt").string() << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint, input, out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  log_block(log, "checkpoint config", to_config_text(ck.config));
  const RawTrial seed_trial = parse_trial(read_file(a.input));
  const NormalizationStats& stats = ck.stats;
  const GeneratorConfig gcfg = generator_config(ck.config, ck.pose_dim());
  if (seed_trial.width() != stats.raw_dim()) {
    throw std::runtime_error("seed file has " + std::to_string(seed_trial.width()) +
                             " values per frame but the checkpoint expects " + std::to_string(stats.raw_dim()));
  }
  if (seed_trial.num_frames() < gcfg.seed_length) {
    throw std::runtime_error("seed file has " + std::to_string(seed_trial.num_frames()) + " frames; at least " +
                             std::to_string(gcfg.seed_length) + " are needed");
  }
  const std::size_t start = seed_trial.num_frames() - gcfg.seed_length;
  const std::size_t dim = stats.raw_dim();
  std::vector<Real> tail(seed_trial.frames.data().begin() + static_cast<std::ptrdiff_t>(start * dim),
                         seed_trial.frames.data().end());
  const Tensor seed = normalize_frames(Tensor({gcfg.seed_length, dim}, std::move(tail)), stats);
  const Tensor pred = denormalize_frames(predict(seed, ck.generator, gcfg), stats);
  save_frames(a.out, pred);
  out << "wrote " << pred.dim(0) << " predicted frames to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  ConfigArgs config;
  DataArgs data;
  std::string checkpoint;
  std::string baseline;
  std::optional<std::size_t> sequences;
  std::optional<std::uint64_t> eval_seed;
  std::string out, dump;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& log) {
  if (a.checkpoint.empty() == a.baseline.empty()) throw UsageError("pass exactly one of --checkpoint or --baseline");
  const Corpus corpus = load_corpus(a.data, log);
  if (corpus.test.empty()) throw std::runtime_error("the test split is empty");

  std::optional<Checkpoint> ck;
  Config config;
  if (!a.checkpoint.empty()) {
    ck = load_checkpoint(a.checkpoint);
    config = ck->config;
  } else {
    config = resolve_config(a.config);
  }
  EvalOptions options;
  options.seed_length = config.hp.seed_length;
  options.target_length = config.hp.target_length;
  options.per_action = a.sequences.value_or(config.schedule.eval_sequences);
  options.seed = a.eval_seed.value_or(config.schedule.eval_seed);
  if (!a.dump.empty()) {
    options.dump_dir = a.dump;
    fs::create_directories(options.dump_dir);
  }
  log_block(log, "resolved config", to_config_text(config));
  log << "# eval: " << options.per_action << " sequences per action, seed " << options.seed << "\n";

  const HorizonReport report = ck ? evaluate(*ck, corpus.test, *corpus.stats, options)
                                  : zero_velocity_report(corpus.test, *corpus.stats, options);
  out << report_table(report);
  if (!a.out.empty()) {
    write_file(fs::path(a.out) / "report.csv", report_csv(report));
    write_file(fs::path(a.out) / "report.txt", report_table(report));
  }
  return 0;
}

struct GradcheckArgs {
  ConfigArgs config;
  DataArgs data;
  std::size_t seeds = 5;
  std::uint64_t first_seed = 1;
  std::size_t coords = 64;
  double tolerance = 1e-4;
  double step = 1e-5;
  bool verbose = false;
};

int cmd_gradcheck(GradcheckArgs a, std::ostream& out, std::ostream& log) {
  const Config config = resolve_config(a.config);
  log_block(log, "resolved config", to_config_text(config));
  if (a.data.data_root.empty()) a.data.synthetic = true;
  const Corpus corpus = load_corpus(a.data, log);
  const Dataset data = dataset_of(corpus.train, corpus, "train");

  GradCheckOptions options;
  options.max_coords = a.coords;
  options.tolerance = a.tolerance;
  options.step = a.step;
  std::vector<bool> variants{false};
  if (config.schedule.use_adversarial) variants.push_back(true);

  double worst = 0;
  bool ok = true;
  for (std::uint64_t s = a.first_seed; s < a.first_seed + a.seeds; ++s) {
    for (bool adversarial : variants) {
      const GeneratorGradCheck r = check_generator_gradients(config, data, s, adversarial, options);
      if (!r.report.setup_error.empty()) throw std::runtime_error(r.report.setup_error);
      worst = std::max(worst, r.report.max_rel_error);
      ok = ok && r.report.passed;
      char line[160];
      std::snprintf(line, sizeof(line), "seed %llu  %-16s max rel err %.3e  %s\n", static_cast<unsigned long long>(s),
                    adversarial ? "mse+l2+adv" : "mse+l2", r.report.max_rel_error, r.report.passed ? "ok" : "FAIL");
      out << line;
      for (const GradCheckEntry& e : r.report.entries) {
        if (!a.verbose && e.passed) continue;
        std::snprintf(line, sizeof(line), "    %-28s %6zu coords  rel err %.3e  worst coord %.3e\n", e.name.c_str(),
                      e.checked, e.rel_error, e.max_elem_error);
        out << line;
      }
    }
  }
  char line[96];
  std::snprintf(line, sizeof(line), "gradcheck: max rel err %.3e (tolerance %.1e): %s\n", worst, a.tolerance,
                ok ? "PASS" : "FAIL");
  out << line;
  return ok ? 0 : 1;
}

struct AblateArgs {
  ConfigArgs config;
  DataArgs data;
  std::string axis;
  std::string out = "ablation";
};

struct Variant {
  std::string axis, name;
  std::function<void(Config&)> apply;
};

std::vector<Variant> variants_for(const std::string& axis) {
  std::vector<Variant> v;
  auto want = [&](const char* a) { return axis == a || axis == "all"; };
  if (want("window"))
    for (std::size_t c : {5, 10, 20})
      v.push_back({"window", "C=" + std::to_string(c), [c](Config& cfg) { cfg.hp.window = c; }});
  if (want("kernel"))
    for (const char* k : {"2x7", "7x2", "4x4"})
      v.push_back({"kernel", k, [k](Config& cfg) { cfg.arch.kernel = parse_kernel(k); }});
  if (want("long-term"))
    for (bool on : {true, false})
      v.push_back({"long-term", on ? "on" : "off", [on](Config& cfg) { cfg.arch.use_long_term = on; }});
  if (want("adversarial"))
    for (bool on : {true, false})
      v.push_back({"adversarial", on ? "on" : "off", [on](Config& cfg) { cfg.schedule.use_adversarial = on; }});
  return v;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& log) {
  const Config base = resolve_config(a.config);
  log_block(log, "resolved config", to_config_text(base));
  const Corpus corpus = load_corpus(a.data, log);
  const Dataset train_set = dataset_of(corpus.train, corpus, "train");
  if (corpus.test.empty()) throw std::runtime_error("the test split is empty");
  const auto horizons = horizons_for(base.hp.target_length);

  std::string csv = "axis,variant,window,kernel,long_term,adversarial,status,train_mse";
  for (const Horizon& h : horizons) csv += ",err_" + std::to_string(h.ms) + "ms";
  csv += "\n";
  for (const Variant& v : variants_for(a.axis)) {
    Config cfg = base;
    v.apply(cfg);
    std::string status = "ok";
    std::string mse = "", errors(horizons.size(), ',');
    try {
      validate(cfg);
    } catch (const ConfigError& e) {
      status = std::string("skipped: ") + e.what();
      std::replace(status.begin(), status.end(), ',', ';');
    }
    if (status == "ok") {
      log << "# ablate " << v.axis << " " << v.name << "\n";
      Trainer trainer(cfg, train_set);
      std::vector<double> recent;
      TrainRunOptions options;
      options.on_row = [&](const TrainRow& row) { recent.push_back(row.mse); };
      train(trainer, cfg.schedule.iterations, options);
      const std::size_t tail = std::max<std::size_t>(1, recent.size() / 10);
      double acc = 0;
      for (std::size_t i = recent.size() - tail; i < recent.size(); ++i) acc += recent[i];
      mse = fmt(acc / static_cast<double>(tail));
      EvalOptions eo;
      eo.per_action = cfg.schedule.eval_sequences;
      eo.seed = cfg.schedule.eval_seed;
      const HorizonReport report = evaluate(trainer.checkpoint(), corpus.test, *corpus.stats, eo);
      errors.clear();
      for (double e : report.average) errors += "," + fmt(e);
    }
    csv += v.axis + "," + v.name + "," + std::to_string(cfg.hp.window) + "," + kernel_str(cfg.arch.kernel) + "," +
           (cfg.arch.use_long_term ? "on" : "off") + "," + (cfg.schedule.use_adversarial ? "on" : "off") + "," +
           status + "," + mse + errors + "\n";
  }
  write_file(fs::path(a.out) / "ablation.csv", csv);
  out << csv;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional sequence-to-sequence human motion prediction", "convseq"};
  app.require_subcommand(1);

  PrepArgs prep;
  auto* prep_cmd = app.add_subcommand("prep", "Fit normalization statistics and write the split manifest");
  prep_cmd->add_option("--data-root", prep.data_root, "Raw <subject>/<action>_<trial>.txt tree")->required();
  prep_cmd->add_option("--out", prep.out, "Output directory (default: the data root)");
  prep_cmd->add_option("--test-subject", prep.test_subjects, "Held-out subjects");
  prep_cmd->add_option("--eps", prep.eps, "Standard deviation below which a dimension is dropped");

  std::string synth_out;
  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus in the dataset layout");
  synth_cmd->add_option("--out", synth_out, "Output root")->required();
  synth_cmd->add_option("--seed", synth.seed, "Corpus seed");
  add_synth_options(*synth_cmd, synth, "");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the generator (and discriminator)");
  add_config_options(*train_cmd, train_args.config);
  add_data_options(*train_cmd, train_args.data);
  train_cmd->add_option("--out", train_args.out, "Run directory for the report and checkpoints");
  train_cmd->add_option("--checkpoint", train_args.resume, "Resume from this checkpoint")->check(CLI::ExistingFile);

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Predict the frames that follow a seed file");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", predict_args.input, "Seed frames; the last t are used")
      ->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", predict_args.out, "Output frame file")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Euler-angle error at the standard horizons");
  add_config_options(*eval_cmd, eval_args.config);
  add_data_options(*eval_cmd, eval_args.data);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->check(CLI::ExistingFile);
  eval_cmd->add_option("--baseline", eval_args.baseline, "Evaluate a baseline instead of a checkpoint")
      ->check(CLI::IsMember({"zero-velocity"}));
  eval_cmd->add_option("--sequences", eval_args.sequences, "Test windows per action");
  eval_cmd->add_option("--eval-seed", eval_args.eval_seed, "Seed of the test-window draw");
  eval_cmd->add_option("--out", eval_args.out, "Directory for report.csv and report.txt");
  eval_cmd->add_option("--dump", eval_args.dump, "Directory for the predicted frames of every window");

  GradcheckArgs grad_args;
  grad_args.config.preset = "tiny";
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the generator gradients");
  add_config_options(*grad_cmd, grad_args.config);
  add_data_options(*grad_cmd, grad_args.data);
  grad_cmd->add_option("--seeds", grad_args.seeds, "Number of seeds");
  grad_cmd->add_option("--first-seed", grad_args.first_seed, "First seed");
  grad_cmd->add_option("--coords", grad_args.coords, "Coordinates per parameter (0 = all)");
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "Maximum relative error");
  grad_cmd->add_option("--step", grad_args.step, "Central-difference step");
  grad_cmd->add_flag("--verbose", grad_args.verbose, "Print every parameter");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate architecture variants");
  add_config_options(*ablate_cmd, ablate_args.config);
  add_data_options(*ablate_cmd, ablate_args.data);
  ablate_cmd->add_option("--axis", ablate_args.axis, "Which comparison to run")
      ->required()
      ->check(CLI::IsMember({"window", "kernel", "long-term", "adversarial", "all"}));
  ablate_cmd->add_option("--out", ablate_args.out, "Directory for ablation.csv");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*prep_cmd) return cmd_prep(prep, out, err);
    if (*synth_cmd) return cmd_synth(synth_out, synth, out, err);
    if (*train_cmd) return cmd_train(train_args, out, err);
    if (*predict_cmd) return cmd_predict(predict_args, out, err);
    if (*eval_cmd) return cmd_eval(eval_args, out, err);
    if (*grad_cmd) return cmd_gradcheck(grad_args, out, err);
    if (*ablate_cmd) return cmd_ablate(ablate_args, out, err);
  } catch (const ConfigError& e) {
    err << "error: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const FingerprintMismatch& e) {
    err << "error: " << e.what() << "\n"
        << "hint: pass --stats with the statistics the checkpoint was trained on, or re-run prep and train\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace convseq::cli
