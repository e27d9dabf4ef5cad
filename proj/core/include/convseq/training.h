#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "convseq/config.h"
#include "convseq/mocap.h"
#include "convseq/model.h"

namespace convseq {

/// Probabilities entering a log are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr Real kProbFloor = Real(1e-7);

/// (1/T) sum_t ||pred_t - target_t||^2 per sequence, averaged over the batch. Shapes [B, T, L].
Var loss_mse(Var pred, Var target);
/// Batch-mean binary cross-entropy: -mean log D(real) - mean log(1 - D(fake)).
Var loss_discriminator(Var real_prob, Var fake_prob);

struct LossTerms {
  double mse = 0;
  double l2 = 0;   // sum of squared generator weights
  double adv = 0;  // -mean log D(fake)
  double total = 0;
};

struct GeneratorLoss {
  Var total;
  LossTerms terms;
};

/// mse + lambda_l2 * sum ||w||^2 - lambda_adv * mean log D(fake). `l2_params` are the
/// generator leaves only; the discriminator never enters the L2 term.
GeneratorLoss loss_generator(Var pred, Var target, const std::vector<Var>& l2_params, std::optional<Var> fake_prob,
                             const HyperParams& hp);

struct AdamOptions {
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamOptions from(const HyperParams& hp) {
    return {hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_eps};
  }
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const std::vector<NamedTensor>& params);
/// Bias-corrected ADAM update. A non-finite gradient aborts with the parameter's name
/// before anything is modified.
void adam_step(const std::vector<NamedTensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamOptions& options);

struct Batch {
  Tensor seeds;    // [B, t, L]
  Tensor targets;  // [B, T, L]
  std::vector<std::size_t> actions;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // (trial, start frame)
};

/// Random windows of t+T contiguous frames. Trials are drawn in shuffled passes, so
/// a batch repeats a trial only after every eligible trial has been used; offsets are uniform.
Batch sample_batch(const Dataset& data, std::size_t batch, std::size_t seed_length, std::size_t target_length,
                   Rng& rng);

/// Concatenates [B, t, L] and [B, T, L] along time.
Tensor join_sequences(const Tensor& seeds, const Tensor& targets);

struct TrainRow {
  std::size_t iteration = 0;
  double mse = 0, l2 = 0, adv = 0, d_loss = 0, total = 0;
  double ms_per_iter = 0;
};

std::string train_csv_header();
std::string format_train_row(const TrainRow& row);

struct Checkpoint;

/// Full generator objective on `batch` with the discriminator frozen. `generator` holds
/// leaf vars in named_params order. Dropout masks are drawn from `dropout_seed`.
/// lambda_adv is ignored (no discriminator term) unless `adversarial`.
GeneratorLoss generator_objective(Tape& tape, const std::vector<Var>& generator, const DiscriminatorParams& disc,
                                  const GeneratorConfig& gcfg, const CemConfig& dcfg, const HyperParams& hp,
                                  bool adversarial, const Batch& batch, std::uint64_t dropout_seed,
                                  Var* prediction = nullptr);

struct GeneratorGradCheck {
  std::uint64_t seed = 0;
  bool adversarial = false;
  GradCheckReport report;
};

/// Finite-difference check of every generator parameter under the full objective,
/// with a freshly initialized model (non-zero decoder output layer) and batch per seed.
GeneratorGradCheck check_generator_gradients(const Config& config, const Dataset& data, std::uint64_t seed,
                                             bool adversarial, const GradCheckOptions& options = {});

class Trainer {
 public:
  Trainer(Config config, Dataset data);
  /// Resumes: parameters, ADAM moments and the iteration counter come from the checkpoint.
  Trainer(const Checkpoint& checkpoint, Dataset data);

  /// One generator step on the full objective, then (when adversarial training is
  /// on) one discriminator step on detached generated sequences.
  TrainRow step();

  std::size_t iteration() const { return iteration_; }
  const Config& config() const { return config_; }
  const GeneratorConfig& generator_config() const { return gcfg_; }
  const CemConfig& discriminator_config() const { return dcfg_; }
  GeneratorParams& generator() { return gen_; }
  const GeneratorParams& generator() const { return gen_; }
  DiscriminatorParams& discriminator() { return disc_; }
  const Dataset& data() const { return data_; }

  Checkpoint checkpoint() const;
  /// Eval-mode MSE over `windows` windows drawn with `seed`.
  double validation_mse(const Dataset& data, std::size_t windows, std::uint64_t seed) const;

  /// Generator update on a fixed batch. The dropout masks are a function of
  /// `dropout_seed`, so generator_loss() with the same seed sees the same masks.
  LossTerms generator_step(const Batch& batch, std::uint64_t dropout_seed);
  LossTerms generator_loss(const Batch& batch, std::uint64_t dropout_seed) const;
  /// Discriminator update on full [B, t+T, L] sequences; returns the loss before the update.
  double discriminator_step(const Tensor& real_full, const Tensor& fake_full, std::uint64_t dropout_seed);
  double discriminator_loss(const Tensor& real_full, const Tensor& fake_full) const;
  /// Prediction of the last generator step, [B, T, L].
  const Tensor& last_prediction() const { return last_prediction_; }

 private:
  Config config_;
  Dataset data_;
  GeneratorConfig gcfg_;
  CemConfig dcfg_;
  GeneratorParams gen_;
  DiscriminatorParams disc_;
  AdamState gen_adam_;
  AdamState disc_adam_;
  std::size_t iteration_ = 0;
  Tensor last_prediction_;
};

struct TrainRunOptions {
  std::filesystem::path out_dir;  // checkpoints land here when non-empty
  std::ostream* report = nullptr;  // CSV rows
  const Dataset* validation = nullptr;
  std::function<void(const TrainRow&)> on_row;
};

/// Runs until `trainer.iteration() == until`, checkpointing every
/// schedule.checkpoint_every iterations, at the end, and on validation improvement.
void train(Trainer& trainer, std::size_t until, const TrainRunOptions& options);

}  // namespace convseq
