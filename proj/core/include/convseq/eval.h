#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "convseq/checkpoint.h"
#include "convseq/mocap.h"

namespace convseq {

/// Reporting horizons in milliseconds.
inline constexpr std::array<int, 5> kHorizonsMs{80, 160, 320, 400, 1000};

struct Horizon {
  int ms = 0;
  std::size_t frame = 0;  // 1-based index into the predicted sequence
  friend bool operator==(const Horizon&, const Horizon&) = default;
};

/// floor(ms / frame period): 80/160/320/400/1000 ms -> frames 2/4/8/10/25 at 40 ms.
std::size_t horizon_frame(int ms, double frame_period = kFramePeriod);
/// The standard horizons that fit inside a target of `target_length` frames, ascending.
std::vector<Horizon> horizons_for(std::size_t target_length, double frame_period = kFramePeriod);

/// Euclidean distance between Euler-angle encodings of two raw expmap frames.
/// Each consecutive triple is converted expmap -> rotation -> Euler. Masked
/// dimensions (use_dims[i] false) are zeroed before conversion, as after
/// denormalization, and excluded from the norm of the concatenated vector.
/// pred/truth: [frames x rawDim]; frame is 0-based.
double euler_error(const Tensor& pred, const Tensor& truth, std::size_t frame, const std::vector<bool>& use_dims);

struct EvalWindow {
  std::size_t trial = 0;   // index into the test trial list
  std::size_t offset = 0;  // first seed frame
};

struct HorizonReport {
  std::vector<Horizon> horizons;
  std::vector<std::string> actions;
  std::vector<std::vector<double>> errors;  // [action][horizon]
  std::vector<double> average;              // mean over actions, per horizon
  std::size_t sequences_per_action = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<EvalWindow>> windows;  // [action][sequence]
};

/// Random (trial, offset) windows per action; the same seed always yields the same draws.
std::vector<std::vector<EvalWindow>> draw_eval_windows(std::span<const RawTrial> trials,
                                                       const std::vector<std::string>& actions, std::size_t per_action,
                                                       std::uint64_t seed, std::size_t seed_length,
                                                       std::size_t target_length);

/// Raw seeds [B, t, rawDim] -> raw predictions [B, T, rawDim].
using RawPredictor = std::function<Tensor(const Tensor& seeds)>;

struct EvalOptions {
  std::size_t seed_length = 50;
  std::size_t target_length = 25;
  std::size_t per_action = 8;
  std::uint64_t seed = 1234567890;
  /// When non-empty, each sequence's predicted frames are written here.
  std::filesystem::path dump_dir;
};

HorizonReport evaluate_predictor(std::span<const RawTrial> test, const NormalizationStats& stats,
                                 const EvalOptions& options, const RawPredictor& predictor);

/// Runs the checkpoint's generator in eval mode. Refuses (FingerprintMismatch) when
/// the checkpoint was trained under different statistics than `data_stats`.
HorizonReport evaluate(const Checkpoint& checkpoint, std::span<const RawTrial> test,
                       const NormalizationStats& data_stats, EvalOptions options);

/// Repeats the last observed frame; written independently of the model path.
HorizonReport zero_velocity_report(std::span<const RawTrial> test, const NormalizationStats& stats,
                                   const EvalOptions& options);

/// `action,ms,error` rows, with the all-action average under action "average".
std::string report_csv(const HorizonReport& report);
/// Aligned text table: one row per action plus "Average", one column per horizon.
std::string report_table(const HorizonReport& report);

}  // namespace convseq
