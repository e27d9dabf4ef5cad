#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "convseq/tensor.h"

namespace convseq {

/// Seconds between consecutive frames: a 25-frame target spans 1000 ms.
inline constexpr double kFramePeriod = 0.040;
/// Root displacement (3) plus root orientation (3) lead every raw frame.
inline constexpr std::size_t kGlobalDims = 6;
inline constexpr double kConstantStdCutoff = 1e-4;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawTrial {
  Tensor frames;  // [numFrames x rawDim], exponential-map angles
  std::string subject;
  std::string action;
  int trial = 0;
  double frame_period = kFramePeriod;

  std::size_t num_frames() const { return frames.dim(0); }
  std::size_t width() const { return frames.dim(1); }
};

/// Parses comma-separated rows; every row must carry the same number of reals.
RawTrial parse_trial(std::string_view text);
/// Shortest round-trip decimal form, so parse_trial(format_trial(x)) == x bit for bit.
std::string format_trial(const Tensor& frames);

/// Loads `<root>/<subject>/<action>_<trial>.txt`, taking labels from the path.
RawTrial load_trial(const std::filesystem::path& file);
void save_frames(const std::filesystem::path& file, const Tensor& frames);

struct NormalizationStats {
  std::vector<Real> mean;
  std::vector<Real> std;
  std::vector<bool> kept;
  double eps_const = kConstantStdCutoff;
  std::size_t global_dims = kGlobalDims;

  std::size_t raw_dim() const { return mean.size(); }
  std::size_t reduced_dim() const;
  std::vector<std::size_t> kept_indices() const;
  /// FNV-1a over the serialized statistics; checkpoints carry it.
  std::uint64_t fingerprint() const;
};

/// Pooled population mean/std over every frame of every trial. Dimensions with
/// std < eps_const, and the leading global_dims, are masked out.
NormalizationStats fit_stats(std::span<const RawTrial> trials, double eps_const = kConstantStdCutoff,
                             std::size_t global_dims = kGlobalDims);

std::string stats_to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(std::string_view text);
void save_stats(const std::filesystem::path& file, const NormalizationStats& stats);
NormalizationStats load_stats(const std::filesystem::path& file);

/// Normalized frames in the reduced (kept-dimension) space.
struct MotionSequence {
  Tensor frames;  // [numFrames x reducedDim]
  std::shared_ptr<const NormalizationStats> stats;
};

Tensor normalize_frames(const Tensor& raw, const NormalizationStats& stats);
/// Restores kept dimensions and writes exact zeros into masked ones.
Tensor denormalize_frames(const Tensor& normalized, const NormalizationStats& stats);
MotionSequence normalize(const RawTrial& trial, std::shared_ptr<const NormalizationStats> stats);
Tensor denormalize(const MotionSequence& seq);

// Dataset layout and split manifest.

struct ManifestEntry {
  std::string split;  // "train", "test" or "validation"
  std::filesystem::path path;  // relative to the manifest root
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::vector<std::filesystem::path> files(std::string_view split) const;
};

/// Walks `<root>/<subject>/*.txt`; trials of the listed subjects go to "test".
Manifest scan_dataset(const std::filesystem::path& root, const std::vector<std::string>& test_subjects);
std::string manifest_to_text(const Manifest& manifest);
Manifest manifest_from_text(std::string_view text, const std::filesystem::path& default_root);
void save_manifest(const std::filesystem::path& file, const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& file);

std::vector<RawTrial> load_split(const Manifest& manifest, std::string_view split);

/// Normalized trials grouped by action, ready for window sampling.
struct Dataset {
  std::shared_ptr<const NormalizationStats> stats;
  std::vector<MotionSequence> trials;
  std::vector<std::size_t> action_of_trial;
  std::vector<std::string> actions;  // sorted, unique

  std::size_t pose_dim() const { return stats->reduced_dim(); }
};

Dataset make_dataset(std::span<const RawTrial> trials, std::shared_ptr<const NormalizationStats> stats);

// Synthetic corpus: sums of sinusoids per joint with phase coupling along the chain.

struct SynthOptions {
  std::size_t joints = 5;  // including the root; raw width = 3 + 3*joints
  std::size_t constant_joints = 0;  // trailing joints that never move
  std::size_t frames = 240;
  double freq_min = 0.3;  // Hz
  double freq_max = 1.2;
  double amplitude = 0.4;  // radians
  std::uint64_t seed = 7;
  std::vector<std::string> actions{"walking", "eating", "smoking", "discussion"};
  std::vector<std::string> subjects{"S1", "S5"};
  std::size_t trials = 2;
};

Tensor synth_trial(const SynthOptions& options, std::size_t action, std::size_t subject, std::size_t trial);
/// Writes every (subject, action, trial) file; returns their paths.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& root,
                                                          const SynthOptions& options);

}  // namespace convseq
