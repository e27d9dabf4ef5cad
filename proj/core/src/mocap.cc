#include "convseq/mocap.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "convseq/random.h"
#include "json.hpp"

namespace convseq {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, std::string_view text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

void append_real(std::string& out, Real v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("failed to format value");
  out.append(buf, end);
}

}  // namespace

RawTrial parse_trial(std::string_view text) {
  std::vector<Real> values;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;

    std::size_t count = 0;
    while (true) {
      const std::size_t comma = line.find(',');
      std::string_view tok = trim(line.substr(0, comma));
      Real v{};
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid number '" + std::string(tok) + "'");
      }
      values.push_back(v);
      ++count;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      width = count;
    } else if (count != width) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " values, got " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("line 1: empty file");
  RawTrial trial;
  trial.frames = Tensor({rows, width}, std::move(values));
  return trial;
}

std::string format_trial(const Tensor& frames) {
  if (frames.rank() != 2) throw ShapeError("format_trial needs a matrix, got " + shape_str(frames.shape()));
  std::string out;
  out.reserve(frames.numel() * 12);
  const std::size_t rows = frames.dim(0), cols = frames.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out.push_back(',');
      append_real(out, frames[r * cols + c]);
    }
    out.push_back('\n');
  }
  return out;
}

RawTrial load_trial(const fs::path& file) {
  RawTrial trial;
  try {
    trial = parse_trial(read_file(file));
  } catch (const ParseError& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  trial.subject = file.parent_path().filename().string();
  const std::string stem = file.stem().string();
  const std::size_t us = stem.rfind('_');
  trial.action = stem.substr(0, us);
  if (us != std::string::npos) {
    const std::string id = stem.substr(us + 1);
    std::from_chars(id.data(), id.data() + id.size(), trial.trial);
  }
  return trial;
}

void save_frames(const fs::path& file, const Tensor& frames) { write_file(file, format_trial(frames)); }

std::size_t NormalizationStats::reduced_dim() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true));
}

std::vector<std::size_t> NormalizationStats::kept_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (kept[i]) idx.push_back(i);
  return idx;
}

std::uint64_t NormalizationStats::fingerprint() const {
  const std::string text = stats_to_json(*this);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

NormalizationStats fit_stats(std::span<const RawTrial> trials, double eps_const, std::size_t global_dims) {
  if (trials.empty()) throw std::invalid_argument("fit_stats: no training trials");
  const std::size_t dim = trials.front().width();
  std::vector<double> sum(dim, 0.0);
  std::size_t count = 0;
  for (const RawTrial& t : trials) {
    if (t.width() != dim) {
      throw ShapeError("fit_stats: trial width " + std::to_string(t.width()) + " differs from " +
                       std::to_string(dim));
    }
    for (std::size_t r = 0; r < t.num_frames(); ++r)
      for (std::size_t c = 0; c < dim; ++c) sum[c] += t.frames[r * dim + c];
    count += t.num_frames();
  }
  NormalizationStats stats;
  stats.eps_const = eps_const;
  stats.global_dims = global_dims;
  stats.mean.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) stats.mean[c] = static_cast<Real>(sum[c] / static_cast<double>(count));

  std::vector<double> sq(dim, 0.0);
  for (const RawTrial& t : trials)
    for (std::size_t r = 0; r < t.num_frames(); ++r)
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = t.frames[r * dim + c] - stats.mean[c];
        sq[c] += d * d;
      }
  stats.std.resize(dim);
  stats.kept.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    stats.std[c] = static_cast<Real>(std::sqrt(sq[c] / static_cast<double>(count)));
    stats.kept[c] = c >= global_dims && stats.std[c] >= eps_const;
  }
  return stats;
}

std::string stats_to_json(const NormalizationStats& stats) {
  nlohmann::json j;
  j["format"] = "convseq-stats";
  j["version"] = 1;
  j["eps_const"] = stats.eps_const;
  j["global_dims"] = stats.global_dims;
  j["mean"] = stats.mean;
  j["std"] = stats.std;
  std::vector<int> kept(stats.kept.begin(), stats.kept.end());
  j["kept"] = kept;
  return j.dump(1);
}

NormalizationStats stats_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("stats file: ") + e.what());
  }
  if (j.value("format", "") != "convseq-stats") throw ParseError("stats file: missing convseq-stats header");
  if (j.value("version", 0) != 1) throw ParseError("stats file: unsupported version");
  NormalizationStats s;
  s.eps_const = j.at("eps_const").get<double>();
  s.global_dims = j.at("global_dims").get<std::size_t>();
  s.mean = j.at("mean").get<std::vector<Real>>();
  s.std = j.at("std").get<std::vector<Real>>();
  for (int k : j.at("kept").get<std::vector<int>>()) s.kept.push_back(k != 0);
  if (s.mean.size() != s.std.size() || s.mean.size() != s.kept.size()) {
    throw ParseError("stats file: mean/std/kept lengths differ");
  }
  return s;
}

void save_stats(const fs::path& file, const NormalizationStats& stats) { write_file(file, stats_to_json(stats)); }

NormalizationStats load_stats(const fs::path& file) { return stats_from_json(read_file(file)); }

Tensor normalize_frames(const Tensor& raw, const NormalizationStats& stats) {
  if (raw.rank() != 2 || raw.dim(1) != stats.raw_dim()) {
    throw ShapeError("normalize: frames " + shape_str(raw.shape()) + " do not match stats width " +
                     std::to_string(stats.raw_dim()));
  }
  const auto idx = stats.kept_indices();
  if (idx.empty()) throw ShapeError("normalize: every dimension is masked");
  const std::size_t rows = raw.dim(0), dim = raw.dim(1);
  Tensor out({rows, idx.size()});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t c = idx[k];
      out[r * idx.size() + k] = (raw[r * dim + c] - stats.mean[c]) / stats.std[c];
    }
  return out;
}

Tensor denormalize_frames(const Tensor& normalized, const NormalizationStats& stats) {
  const auto idx = stats.kept_indices();
  if (normalized.rank() != 2 || normalized.dim(1) != idx.size()) {
    throw ShapeError("denormalize: frames " + shape_str(normalized.shape()) + " do not match reduced width " +
                     std::to_string(idx.size()));
  }
  const std::size_t rows = normalized.dim(0), dim = stats.raw_dim();
  Tensor out({rows, dim});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t c = idx[k];
      out[r * dim + c] = normalized[r * idx.size() + k] * stats.std[c] + stats.mean[c];
    }
  return out;
}

MotionSequence normalize(const RawTrial& trial, std::shared_ptr<const NormalizationStats> stats) {
  MotionSequence seq;
  seq.frames = normalize_frames(trial.frames, *stats);
  seq.stats = std::move(stats);
  return seq;
}

Tensor denormalize(const MotionSequence& seq) { return denormalize_frames(seq.frames, *seq.stats); }

std::vector<fs::path> Manifest::files(std::string_view split) const {
  std::vector<fs::path> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(root / e.path);
  return out;
}

Manifest scan_dataset(const fs::path& root, const std::vector<std::string>& test_subjects) {
  if (!fs::is_directory(root)) throw std::runtime_error("data root " + root.string() + " is not a directory");
  Manifest m;
  m.root = fs::absolute(root);
  std::vector<fs::path> subjects;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) subjects.push_back(d.path());
  std::sort(subjects.begin(), subjects.end());
  for (const auto& s : subjects) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(s))
      if (f.is_regular_file() && f.path().extension() == ".txt") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    const std::string subject = s.filename().string();
    const bool is_test = std::find(test_subjects.begin(), test_subjects.end(), subject) != test_subjects.end();
    for (const auto& f : files) m.entries.push_back({is_test ? "test" : "train", fs::relative(f, root)});
  }
  if (m.entries.empty()) throw std::runtime_error("no trial files found under " + root.string());
  return m;
}

std::string manifest_to_text(const Manifest& manifest) {
  std::string out = "# convseq manifest v1\nroot " + manifest.root.string() + "\n";
  for (const auto& e : manifest.entries) out += e.split + " " + e.path.generic_string() + "\n";
  return out;
}

Manifest manifest_from_text(std::string_view text, const fs::path& default_root) {
  Manifest m;
  m.root = default_root;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected '<split> <path>'");
    }
    const std::string key(line.substr(0, sp));
    const std::string rest(trim(line.substr(sp + 1)));
    if (key == "root") {
      fs::path r(rest);
      m.root = r.is_absolute() ? r : default_root / r;
    } else if (key == "train" || key == "test" || key == "validation") {
      m.entries.push_back({key, fs::path(rest)});
    } else {
      throw ParseError("manifest line " + std::to_string(line_no) + ": unknown split '" + key + "'");
    }
  }
  return m;
}

void save_manifest(const fs::path& file, const Manifest& manifest) { write_file(file, manifest_to_text(manifest)); }

Manifest load_manifest(const fs::path& file) {
  return manifest_from_text(read_file(file), fs::absolute(file).parent_path());
}

std::vector<RawTrial> load_split(const Manifest& manifest, std::string_view split) {
  std::vector<RawTrial> out;
  for (const auto& f : manifest.files(split)) out.push_back(load_trial(f));
  return out;
}

Dataset make_dataset(std::span<const RawTrial> trials, std::shared_ptr<const NormalizationStats> stats) {
  if (trials.empty()) throw std::invalid_argument("dataset has no trials");
  Dataset ds;
  ds.stats = std::move(stats);
  std::set<std::string> names;
  for (const auto& t : trials) names.insert(t.action);
  ds.actions.assign(names.begin(), names.end());
  for (const auto& t : trials) {
    ds.trials.push_back(normalize(t, ds.stats));
    ds.action_of_trial.push_back(static_cast<std::size_t>(
        std::lower_bound(ds.actions.begin(), ds.actions.end(), t.action) - ds.actions.begin()));
  }
  return ds;
}

Tensor synth_trial(const SynthOptions& o, std::size_t action, std::size_t subject, std::size_t trial) {
  if (o.joints < 2 || o.constant_joints >= o.joints) throw std::invalid_argument("synth: bad joint counts");
  if (o.frames == 0 || !(o.freq_min > 0) || o.freq_max < o.freq_min) {
    throw std::invalid_argument("synth: bad frame count or frequency band");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // Action-level signature: shared by every subject and trial of the action.
  Rng arng = Rng::stream(o.seed, 101, action);
  const double f1 = arng.uniform(o.freq_min, o.freq_max);
  const double f2 = arng.uniform(o.freq_min, o.freq_max);
  const double coupling = arng.uniform(0.3, 1.2);
  const std::size_t width = 3 + 3 * o.joints;
  std::vector<double> amp(width), offset(width);
  for (std::size_t c = 0; c < width; ++c) {
    amp[c] = o.amplitude * arng.uniform(0.3, 1.0);
    offset[c] = arng.uniform(-0.5, 0.5);
  }
  // Per-recording variation.
  Rng trng = Rng::stream(o.seed, 202, (action * 1000 + subject) * 1000 + trial);
  const double phase = trng.uniform(0.0, two_pi);
  const double jitter = trng.uniform(0.97, 1.03);
  const double drift = trng.uniform(-0.05, 0.05);

  const std::size_t moving = o.joints - o.constant_joints;
  Tensor frames({o.frames, width});
  for (std::size_t r = 0; r < o.frames; ++r) {
    const double time = static_cast<double>(r) * kFramePeriod;
    for (std::size_t c = 0; c < width; ++c) {
      double v = offset[c];
      if (c < 3) {
        v += drift * static_cast<double>(r) + amp[c] * std::sin(two_pi * f1 * jitter * time + phase);
      } else {
        const std::size_t joint = (c - 3) / 3;
        const double axis = static_cast<double>((c - 3) % 3);
        if (joint < moving) {
          const double phi = coupling * static_cast<double>(joint) + phase + 0.7 * axis;
          v += amp[c] * (std::sin(two_pi * f1 * jitter * time + phi) +
                         0.5 * std::sin(two_pi * f2 * jitter * time + 2.0 * phi + 1.3 * axis));
        }
      }
      frames[r * width + c] = static_cast<Real>(v);
    }
  }
  return frames;
}

std::vector<fs::path> write_synthetic_corpus(const fs::path& root, const SynthOptions& options) {
  std::vector<fs::path> written;
  for (std::size_t s = 0; s < options.subjects.size(); ++s)
    for (std::size_t a = 0; a < options.actions.size(); ++a)
      for (std::size_t t = 0; t < options.trials; ++t) {
        fs::path file = root / options.subjects[s] / (options.actions[a] + "_" + std::to_string(t + 1) + ".txt");
        save_frames(file, synth_trial(options, a, s, t));
        written.push_back(file);
      }
  return written;
}

}  // namespace convseq
