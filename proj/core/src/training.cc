#include "convseq/training.h"

#include <chrono>
#include <cmath>
#include <charconv>
#include <limits>

#include "convseq/checkpoint.h"

namespace convseq {
namespace {

// RNG stream ids under the master seed.
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kGeneratorDropout = 2;
constexpr std::uint64_t kDiscriminatorDropout = 3;
constexpr std::uint64_t kGeneratorInit = 10;
constexpr std::uint64_t kDiscriminatorInit = 11;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

struct GeneratorPass {
  GeneratorLoss loss;
  std::vector<Var> params;
  Var pred;
};

GeneratorPass generator_pass(Tape& tape, const GeneratorParams& gen, const DiscriminatorParams& disc,
                             const GeneratorConfig& gcfg, const CemConfig& dcfg, const Config& config,
                             const Batch& batch, std::uint64_t dropout_seed) {
  GeneratorPass pass;
  pass.params = leaves(bind(tape, gen, true));
  pass.loss = generator_objective(tape, pass.params, disc, gcfg, dcfg, config.hp, config.schedule.use_adversarial,
                                  batch, dropout_seed, &pass.pred);
  return pass;
}

Var discriminator_objective(Tape& tape, const DiscriminatorVars& dv, const CemConfig& dcfg, const Tensor& real_full,
                            const Tensor& fake_full, Mode mode, Rng& rng) {
  const Var real_p = discriminate(tape.constant(real_full), dv, dcfg, mode, rng);
  const Var fake_p = discriminate(tape.constant(fake_full), dv, dcfg, mode, rng);
  return loss_discriminator(real_p, fake_p);
}

void clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (const auto& g : grads)
    for (Real v : g.data()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const Real s = static_cast<Real>(max_norm / norm);
  for (auto& g : grads)
    for (auto& v : g.data()) v *= s;
}

double mse_value(const Tensor& pred, const Tensor& target) {
  double acc = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.dim(0) * pred.dim(1));
}

}  // namespace

GeneratorLoss generator_objective(Tape& tape, const std::vector<Var>& generator, const DiscriminatorParams& disc,
                                  const GeneratorConfig& gcfg, const CemConfig& dcfg, const HyperParams& hp,
                                  bool adversarial, const Batch& batch, std::uint64_t dropout_seed, Var* prediction) {
  Rng rng(dropout_seed);
  const GeneratorVars gv = generator_vars(generator);
  const Var seeds = tape.constant(batch.seeds);
  const Var targets = tape.constant(batch.targets);
  const Var pred = predict_sequence(seeds, targets, gv, gcfg, Mode::kTrain, rng);
  if (prediction) *prediction = pred;
  std::optional<Var> fake_prob;
  HyperParams used = hp;
  if (adversarial) {
    const DiscriminatorVars dv = bind(tape, disc, false);
    fake_prob = discriminate(concat({seeds, pred}, 1), dv, dcfg, Mode::kTrain, rng);
  } else {
    used.lambda_adv = 0;
  }
  return loss_generator(pred, targets, generator, fake_prob, used);
}

GeneratorGradCheck check_generator_gradients(const Config& config, const Dataset& data, std::uint64_t seed,
                                             bool adversarial, const GradCheckOptions& options) {
  validate(config);
  const GeneratorConfig gcfg = convseq::generator_config(config, data.pose_dim());
  const CemConfig dcfg = convseq::discriminator_config(config, data.pose_dim());
  Rng init = Rng::stream(seed, kGeneratorInit);
  GeneratorParams gen;
  gen.long_term = init_cem(gcfg.long_term, init);
  gen.short_term = init_cem(gcfg.short_term, init);
  gen.decoder = init_decoder(gcfg, init, false);
  // Zero biases put every all-padding conv output exactly on the leaky-ReLU kink,
  // where central differences are meaningless; check at a generic point instead.
  for (const NamedTensor& p : named_params(gen)) {
    if (p.name.ends_with(".bias"))
      for (auto& v : p.value->data()) v = static_cast<Real>(init.uniform(-0.1, 0.1));
  }
  Rng dinit = Rng::stream(seed, kDiscriminatorInit);
  const DiscriminatorParams disc = init_discriminator(dcfg, dinit);
  Rng batch_rng = Rng::stream(seed, kBatchStream);
  const Batch batch =
      sample_batch(data, config.hp.batch_size, config.hp.seed_length, config.hp.target_length, batch_rng);
  const std::uint64_t dropout_seed = Rng::stream(seed, kGeneratorDropout).next_u64();

  GeneratorGradCheck out;
  out.seed = seed;
  out.adversarial = adversarial;
  GradCheckOptions opts = options;
  if (opts.sample_seed == 0) opts.sample_seed = seed;
  out.report = grad_check(
      [&](Tape& tape, const std::vector<Var>& vars) {
        return generator_objective(tape, vars, disc, gcfg, dcfg, config.hp, adversarial, batch, dropout_seed).total;
      },
      named_params(gen), opts);
  return out;
}

Var loss_mse(Var pred, Var target) {
  if (pred.shape().size() != 3) throw ShapeError("loss_mse: expected [B x T x L], got " + shape_str(pred.shape()));
  const Real denom = static_cast<Real>(pred.shape()[0] * pred.shape()[1]);
  return scale(sum(square(sub(pred, target))), Real(1) / denom);
}

Var loss_discriminator(Var real_prob, Var fake_prob) {
  const Var real_term = mean(log(clamp(real_prob, kProbFloor, Real(1) - kProbFloor)));
  const Var fake_c = clamp(fake_prob, kProbFloor, Real(1) - kProbFloor);
  const Var fake_term = mean(log(add_scalar(scale(fake_c, Real(-1)), Real(1))));
  return scale(add(real_term, fake_term), Real(-1));
}

GeneratorLoss loss_generator(Var pred, Var target, const std::vector<Var>& l2_params, std::optional<Var> fake_prob,
                             const HyperParams& hp) {
  Tape& tape = *pred.tape;
  GeneratorLoss out;
  Var total = loss_mse(pred, target);
  out.terms.mse = total.value().item();

  if (!l2_params.empty()) {
    std::vector<Var> norms;
    for (const Var& w : l2_params) norms.push_back(sum_squares(w));
    const Var l2 = sum(concat(norms, 0));
    out.terms.l2 = l2.value().item();
    total = add(total, scale(l2, static_cast<Real>(hp.lambda_l2)));
  }
  if (fake_prob) {
    const Var adv = scale(mean(log(clamp(*fake_prob, kProbFloor, Real(1) - kProbFloor))), Real(-1));
    out.terms.adv = adv.value().item();
    total = add(total, scale(adv, static_cast<Real>(hp.lambda_adv)));
  }
  (void)tape;
  out.total = total;
  out.terms.total = total.value().item();
  return out;
}

AdamState make_adam_state(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value->shape());
    s.v.emplace_back(p.value->shape());
  }
  return s;
}

void adam_step(const std::vector<NamedTensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamOptions& o) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_shape(grads[k], params[k].value->shape(), ("adam_step gradient for " + params[k].name).c_str());
    require_shape(state.m[k], params[k].value->shape(), ("adam_step moment for " + params[k].name).c_str());
    if (!grads[k].all_finite()) throw NumericError("adam_step: non-finite gradient for parameter " + params[k].name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].value->data();
    auto g = grads[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<Real>(o.beta1 * m[i] + (1.0 - o.beta1) * g[i]);
      v[i] = static_cast<Real>(o.beta2 * v[i] + (1.0 - o.beta2) * static_cast<double>(g[i]) * g[i]);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] = static_cast<Real>(p[i] - o.learning_rate * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

Batch sample_batch(const Dataset& data, std::size_t batch, std::size_t seed_length, std::size_t target_length,
                   Rng& rng) {
  const std::size_t span = seed_length + target_length;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.trials.size(); ++i)
    if (data.trials[i].frames.dim(0) >= span) eligible.push_back(i);
  if (eligible.empty()) {
    throw std::runtime_error("no trial has the " + std::to_string(span) + " frames a training window needs");
  }
  const std::size_t dim = data.pose_dim();
  Batch b;
  b.seeds = Tensor({batch, seed_length, dim});
  b.targets = Tensor({batch, target_length, dim});
  // Trials are visited in shuffled passes so a batch repeats a trial only after using all of them.
  std::vector<std::size_t> pass;
  for (std::size_t n = 0; n < batch; ++n) {
    if (pass.empty()) {
      pass = eligible;
      for (std::size_t i = pass.size(); i > 1; --i) std::swap(pass[i - 1], pass[rng.index(i)]);
    }
    const std::size_t trial = pass.back();
    pass.pop_back();
    const Tensor& frames = data.trials[trial].frames;
    const std::size_t start = rng.index(frames.dim(0) - span + 1);
    const Real* src = frames.data().data() + start * dim;
    std::copy_n(src, seed_length * dim, b.seeds.data().data() + n * seed_length * dim);
    std::copy_n(src + seed_length * dim, target_length * dim, b.targets.data().data() + n * target_length * dim);
    b.actions.push_back(data.action_of_trial[trial]);
    b.windows.emplace_back(trial, start);
  }
  return b;
}

Tensor join_sequences(const Tensor& seeds, const Tensor& targets) {
  if (seeds.rank() != 3 || targets.rank() != 3 || seeds.dim(0) != targets.dim(0) || seeds.dim(2) != targets.dim(2)) {
    throw ShapeError("join_sequences: incompatible " + shape_str(seeds.shape()) + " and " +
                     shape_str(targets.shape()));
  }
  const std::size_t b = seeds.dim(0), t = seeds.dim(1), h = targets.dim(1), l = seeds.dim(2);
  Tensor out({b, t + h, l});
  for (std::size_t n = 0; n < b; ++n) {
    Real* dst = out.data().data() + n * (t + h) * l;
    std::copy_n(seeds.data().data() + n * t * l, t * l, dst);
    std::copy_n(targets.data().data() + n * h * l, h * l, dst + t * l);
  }
  return out;
}

std::string train_csv_header() { return "iteration,mse,l2,adv,d_loss,total,ms_per_iter"; }

std::string format_train_row(const TrainRow& r) {
  return std::to_string(r.iteration) + "," + fmt(r.mse) + "," + fmt(r.l2) + "," + fmt(r.adv) + "," + fmt(r.d_loss) +
         "," + fmt(r.total) + "," + fmt(r.ms_per_iter);
}

Trainer::Trainer(Config config, Dataset data) : config_(std::move(config)), data_(std::move(data)) {
  validate(config_);
  gcfg_ = convseq::generator_config(config_, data_.pose_dim());
  dcfg_ = convseq::discriminator_config(config_, data_.pose_dim());
  Rng grng = Rng::stream(config_.schedule.seed, kGeneratorInit);
  gen_ = init_generator(gcfg_, grng);
  Rng drng = Rng::stream(config_.schedule.seed, kDiscriminatorInit);
  disc_ = init_discriminator(dcfg_, drng);
  gen_adam_ = make_adam_state(named_params(gen_));
  disc_adam_ = make_adam_state(named_params(disc_));
}

Trainer::Trainer(const Checkpoint& ck, Dataset data) : Trainer(ck.config, std::move(data)) {
  if (ck.stats.fingerprint() != data_.stats->fingerprint()) {
    throw FingerprintMismatch("checkpoint was trained under different normalization statistics");
  }
  gen_ = ck.generator;
  disc_ = ck.discriminator;
  gen_adam_ = ck.generator_adam;
  disc_adam_ = ck.discriminator_adam;
  iteration_ = ck.iteration;
}

LossTerms Trainer::generator_loss(const Batch& batch, std::uint64_t dropout_seed) const {
  Tape tape;
  return generator_pass(tape, gen_, disc_, gcfg_, dcfg_, config_, batch, dropout_seed).loss.terms;
}

LossTerms Trainer::generator_step(const Batch& batch, std::uint64_t dropout_seed) {
  Tape tape;
  GeneratorPass pass = generator_pass(tape, gen_, disc_, gcfg_, dcfg_, config_, batch, dropout_seed);
  tape.backward(pass.loss.total);
  std::vector<Tensor> grads;
  grads.reserve(pass.params.size());
  for (const Var& v : pass.params) grads.push_back(tape.grad(v));
  clip_global_norm(grads, config_.schedule.grad_clip);
  adam_step(named_params(gen_), grads, gen_adam_, AdamOptions::from(config_.hp));
  last_prediction_ = pass.pred.value();
  return pass.loss.terms;
}

double Trainer::discriminator_loss(const Tensor& real_full, const Tensor& fake_full) const {
  Tape tape;
  Rng rng(0);
  const DiscriminatorVars dv = bind(tape, disc_, false);
  return discriminator_objective(tape, dv, dcfg_, real_full, fake_full, Mode::kEval, rng).value().item();
}

double Trainer::discriminator_step(const Tensor& real_full, const Tensor& fake_full, std::uint64_t dropout_seed) {
  Tape tape;
  Rng rng(dropout_seed);
  const DiscriminatorVars dv = bind(tape, disc_, true);
  const Var loss = discriminator_objective(tape, dv, dcfg_, real_full, fake_full, Mode::kTrain, rng);
  tape.backward(loss);
  std::vector<Tensor> grads;
  for (const Var& v : leaves(dv)) grads.push_back(tape.grad(v));
  clip_global_norm(grads, config_.schedule.grad_clip);
  adam_step(named_params(disc_), grads, disc_adam_, AdamOptions::from(config_.hp));
  return loss.value().item();
}

TrainRow Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = config_.schedule.seed;
  TrainRow row;
  row.iteration = iteration_ + 1;
  try {
    Rng batch_rng = Rng::stream(seed, kBatchStream, iteration_);
    const Batch batch = sample_batch(data_, config_.hp.batch_size, config_.hp.seed_length,
                                     config_.hp.target_length, batch_rng);
    const LossTerms terms = generator_step(batch, Rng::stream(seed, kGeneratorDropout, iteration_).next_u64());
    row.mse = terms.mse;
    row.l2 = terms.l2;
    row.adv = terms.adv;
    row.total = terms.total;
    if (config_.schedule.use_adversarial) {
      row.d_loss = discriminator_step(join_sequences(batch.seeds, batch.targets),
                                      join_sequences(batch.seeds, last_prediction_),
                                      Rng::stream(seed, kDiscriminatorDropout, iteration_).next_u64());
    }
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(row.iteration) + ": " + e.what());
  }
  if (!std::isfinite(row.total) || !std::isfinite(row.d_loss)) {
    throw NumericError("iteration " + std::to_string(row.iteration) + ": non-finite loss");
  }
  ++iteration_;
  if (config_.schedule.report_timing) {
    row.ms_per_iter =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return row;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.stats = *data_.stats;
  ck.iteration = iteration_;
  ck.generator = gen_;
  ck.discriminator = disc_;
  ck.generator_adam = gen_adam_;
  ck.discriminator_adam = disc_adam_;
  return ck;
}

double Trainer::validation_mse(const Dataset& data, std::size_t windows, std::uint64_t seed) const {
  Rng rng(seed);
  const Batch batch = sample_batch(data, windows, config_.hp.seed_length, config_.hp.target_length, rng);
  return mse_value(predict_batch(batch.seeds, gen_, gcfg_), batch.targets);
}

void train(Trainer& trainer, std::size_t until, const TrainRunOptions& options) {
  const Schedule& schedule = trainer.config().schedule;
  const bool save = !options.out_dir.empty();
  if (save) std::filesystem::create_directories(options.out_dir);
  double best = std::numeric_limits<double>::infinity();
  while (trainer.iteration() < until) {
    const TrainRow row = trainer.step();
    if (options.report) *options.report << format_train_row(row) << '\n';
    if (options.on_row) options.on_row(row);
    const bool at_cadence = schedule.checkpoint_every > 0 && row.iteration % schedule.checkpoint_every == 0;
    if (save && at_cadence) {
      save_checkpoint(options.out_dir / ("ckpt_" + std::to_string(row.iteration) + ".ckpt"), trainer.checkpoint());
      if (options.validation) {
        const double val = trainer.validation_mse(*options.validation, 64, schedule.eval_seed);
        if (val < best) {
          best = val;
          save_checkpoint(options.out_dir / "best.ckpt", trainer.checkpoint());
        }
      }
    }
  }
  if (options.report) options.report->flush();
  if (save) save_checkpoint(options.out_dir / "final.ckpt", trainer.checkpoint());
}

}  // namespace convseq
