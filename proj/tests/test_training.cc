#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "convseq/checkpoint.h"
#include "convseq/training.h"
#include "test_util.h"

using namespace convseq;
using testutil::TempDir;

namespace {

Dataset small_dataset(std::size_t frames = 60) {
  SynthOptions o;
  o.frames = frames;
  o.trials = 1;
  return testutil::dataset_from(testutil::synthetic_trials(o));
}

Config quick_config() {
  Config c = tiny_config();
  c.schedule.report_timing = false;
  c.schedule.checkpoint_every = 2;
  return c;
}

std::string rows_text(Trainer& t, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += format_train_row(t.step()) + "\n";
  return out;
}

}  // namespace

TEST(Loss, MseIsPerSequenceFrameMean) {
  Tape tape;
  const Var pred = tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4}));
  const Var target = tape.constant(Tensor({1, 2, 2}));
  EXPECT_DOUBLE_EQ(loss_mse(pred, target).value().item(), 15.0);  // (1+4+9+16) / (1*2)
  EXPECT_THROW(loss_mse(tape.constant(Tensor({2, 2})), tape.constant(Tensor({2, 2}))), ShapeError);
}

TEST(Loss, DiscriminatorCrossEntropy) {
  Tape tape;
  const Var real = tape.constant(Tensor({2, 1}, {0.9, 0.8}));
  const Var fake = tape.constant(Tensor({2, 1}, {0.1, 0.3}));
  const double expect = -((std::log(0.9) + std::log(0.8)) / 2 + (std::log(0.9) + std::log(0.7)) / 2);
  EXPECT_NEAR(loss_discriminator(real, fake).value().item(), expect, 1e-15);

  // Saturated probabilities are clamped instead of producing infinities.
  const Var sure = tape.constant(Tensor({1, 1}, {1.0}));
  const Var zero = tape.constant(Tensor({1, 1}, {0.0}));
  const double saturated = loss_discriminator(zero, sure).value().item();
  EXPECT_TRUE(std::isfinite(saturated));
  EXPECT_NEAR(saturated, -2 * std::log(1e-7), 1e-6);
}

TEST(Loss, GeneratorTermsCombine) {
  Tape tape;
  const Var pred = tape.constant(Tensor({1, 1, 2}, {1, 1}));
  const Var target = tape.constant(Tensor({1, 1, 2}, {0, 0}));
  const Var w1 = tape.leaf(Tensor({2}, {1, 2}));
  const Var w2 = tape.leaf(Tensor({1}, {3}));
  const Var fake = tape.constant(Tensor({2, 1}, {0.5, 0.25}));
  HyperParams hp;
  const GeneratorLoss g = loss_generator(pred, target, {w1, w2}, fake, hp);
  const double adv = -(std::log(0.5) + std::log(0.25)) / 2;
  EXPECT_DOUBLE_EQ(g.terms.mse, 2.0);
  EXPECT_DOUBLE_EQ(g.terms.l2, 14.0);
  EXPECT_NEAR(g.terms.adv, adv, 1e-15);
  EXPECT_NEAR(g.terms.total, 2.0 + 0.001 * 14.0 + 0.01 * adv, 1e-15);
  EXPECT_NEAR(g.total.value().item(), g.terms.total, 0);

  tape.backward(g.total);
  EXPECT_NEAR(tape.grad(w1)[1], 2 * 0.001 * 2, 1e-15);

  const GeneratorLoss no_adv = loss_generator(pred, target, {w1, w2}, std::nullopt, hp);
  EXPECT_EQ(no_adv.terms.adv, 0.0);
  EXPECT_NEAR(no_adv.terms.total, 2.014, 1e-15);
}

TEST(Adam, MatchesHandComputedSteps) {
  Tensor p({1}, {1.0});
  const std::vector<NamedTensor> params{{"p", &p}};
  AdamState state = make_adam_state(params);
  const AdamOptions o{0.1, 0.9, 0.999, 1e-8};
  adam_step(params, {Tensor({1}, {0.5})}, state, o);
  EXPECT_NEAR(p[0], 0.900000002, 1e-15);
  adam_step(params, {Tensor({1}, {-1.0})}, state, o);
  EXPECT_NEAR(p[0], 0.9366103542405654, 1e-14);
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  Tensor a({2}, {1, 2}), b({1}, {3});
  const std::vector<NamedTensor> params{{"encoder.weight", &a}, {"decoder.bias", &b}};
  AdamState state = make_adam_state(params);
  try {
    adam_step(params, {Tensor({2}, {0.1, 0.1}), Tensor({1}, {std::nan("")})}, state, {});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.bias"), std::string::npos);
  }
  EXPECT_EQ(a, Tensor({2}, {1, 2}));
  EXPECT_EQ(state.step, 0u);
  EXPECT_THROW(adam_step(params, {Tensor({2})}, state, {}), ShapeError);
}

TEST(Batch, WindowsCopyContiguousFrames) {
  SynthOptions o;
  o.trials = 1;
  auto trials = testutil::synthetic_trials(o);
  trials[0].frames = Tensor({10, trials[0].frames.dim(1)});  // too short for a window
  const Dataset data = testutil::dataset_from(trials);
  Rng rng(3);
  const Batch b = sample_batch(data, 16, 16, 6, rng);
  ASSERT_EQ(b.seeds.shape(), (Shape{16, 16, 12}));
  ASSERT_EQ(b.targets.shape(), (Shape{16, 6, 12}));
  for (std::size_t n = 0; n < 16; ++n) {
    const auto [trial, start] = b.windows[n];
    EXPECT_NE(trial, 0u);
    EXPECT_EQ(b.actions[n], data.action_of_trial[trial]);
    const Tensor& f = data.trials[trial].frames;
    ASSERT_LE(start + 22, f.dim(0));
    for (std::size_t i = 0; i < 22; ++i)
      for (std::size_t d = 0; d < 12; ++d) {
        const Real got = i < 16 ? b.seeds[(n * 16 + i) * 12 + d] : b.targets[(n * 6 + i - 16) * 12 + d];
        ASSERT_EQ(got, f.at(start + i, d));
      }
  }
  Rng again(3);
  EXPECT_EQ(sample_batch(data, 16, 16, 6, again).windows, b.windows);
  EXPECT_THROW(sample_batch(data, 1, 500, 6, rng), std::runtime_error);
}

TEST(Batch, UsesEveryTrialBeforeRepeatingOne) {
  SynthOptions o;
  o.trials = 1;
  const Dataset data = testutil::dataset_from(testutil::synthetic_trials(o));
  const std::size_t n = data.trials.size();
  Rng rng(9);
  const Batch b = sample_batch(data, 2 * n, 16, 6, rng);
  for (std::size_t pass = 0; pass < 2; ++pass) {
    std::vector<std::size_t> seen;
    for (std::size_t k = 0; k < n; ++k) seen.push_back(b.windows[pass * n + k].first);
    std::sort(seen.begin(), seen.end());
    for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(seen[k], k);
  }
}

TEST(Batch, JoinSequences) {
  const Tensor s({2, 2, 1}, {1, 2, 3, 4}), t({2, 1, 1}, {5, 6});
  EXPECT_EQ(join_sequences(s, t), Tensor({2, 3, 1}, {1, 2, 5, 3, 4, 6}));
  EXPECT_THROW(join_sequences(s, Tensor({1, 1, 1})), ShapeError);
}

TEST(Report, CsvRowLayout) {
  EXPECT_EQ(train_csv_header(), "iteration,mse,l2,adv,d_loss,total,ms_per_iter");
  TrainRow r;
  r.iteration = 7;
  r.mse = 0.5;
  r.total = 1.25;
  EXPECT_EQ(format_train_row(r), "7,0.5,0,0,0,1.25,0");
}

TEST(Trainer, IdenticalSeedsGiveIdenticalRows) {
  const Dataset data = small_dataset();
  Trainer a(quick_config(), data), b(quick_config(), data);
  const std::string a_rows = rows_text(a, 4);
  EXPECT_EQ(a_rows, rows_text(b, 4));
  EXPECT_EQ(serialize_checkpoint(a.checkpoint()), serialize_checkpoint(b.checkpoint()));
  Config other = quick_config();
  other.schedule.seed = 51;
  Trainer c(other, data);
  EXPECT_NE(rows_text(c, 4), a_rows);
}

TEST(Trainer, AdversarialStepReportsDiscriminatorLoss) {
  Trainer t(quick_config(), small_dataset());
  const TrainRow row = t.step();
  EXPECT_EQ(row.iteration, 1u);
  EXPECT_GT(row.d_loss, 0.0);
  EXPECT_GT(row.adv, 0.0);
  EXPECT_GT(row.l2, 0.0);
  Config plain = quick_config();
  plain.schedule.use_adversarial = false;
  Trainer p(plain, small_dataset());
  const TrainRow prow = p.step();
  EXPECT_EQ(prow.d_loss, 0.0);
  EXPECT_EQ(prow.adv, 0.0);
  EXPECT_NEAR(prow.total, prow.mse + 0.001 * prow.l2, 1e-12);
}

TEST(Checkpoint, SerializeRoundTripIsExact) {
  Trainer t(quick_config(), small_dataset());
  rows_text(t, 2);
  const Checkpoint ck = t.checkpoint();
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.iteration, 2u);
  EXPECT_EQ(back.generator_adam.step, 2u);
  EXPECT_EQ(to_config_text(back.config), to_config_text(ck.config));
  EXPECT_EQ(back.generator.decoder.fc2_w, ck.generator.decoder.fc2_w);
  EXPECT_EQ(back.stats.fingerprint(), ck.stats.fingerprint());
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), std::runtime_error);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const Dataset data = small_dataset();
  Trainer straight(quick_config(), data);
  const std::string straight_rows = rows_text(straight, 6);

  TempDir dir("resume");
  Trainer first(quick_config(), data);
  std::string resumed_rows = rows_text(first, 3);
  save_checkpoint(dir.path() / "mid.ckpt", first.checkpoint());
  Trainer second(load_checkpoint(dir.path() / "mid.ckpt", data.stats->fingerprint()), data);
  EXPECT_EQ(second.iteration(), 3u);
  resumed_rows += rows_text(second, 3);

  EXPECT_EQ(resumed_rows, straight_rows);
  EXPECT_EQ(serialize_checkpoint(second.checkpoint()), serialize_checkpoint(straight.checkpoint()));
}

TEST(Checkpoint, FingerprintMismatchIsRejected) {
  const Dataset data = small_dataset();
  Trainer t(quick_config(), data);
  TempDir dir("fp");
  save_checkpoint(dir.path() / "a.ckpt", t.checkpoint());
  const Dataset other = small_dataset(61);
  ASSERT_NE(other.stats->fingerprint(), data.stats->fingerprint());
  EXPECT_THROW(load_checkpoint(dir.path() / "a.ckpt", other.stats->fingerprint()), FingerprintMismatch);
  EXPECT_THROW(Trainer(load_checkpoint(dir.path() / "a.ckpt"), other), FingerprintMismatch);
  EXPECT_NO_THROW(load_checkpoint(dir.path() / "a.ckpt", data.stats->fingerprint()));
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), std::runtime_error);
  EXPECT_EQ(fingerprint_hex(0xabcULL), "0000000000000abc");
}

TEST(Train, WritesRowsAndCheckpointsOnCadence) {
  TempDir dir("train");
  Trainer t(quick_config(), small_dataset());
  std::ostringstream csv;
  std::size_t seen = 0;
  TrainRunOptions opts;
  opts.out_dir = dir.path();
  opts.report = &csv;
  opts.on_row = [&](const TrainRow&) { ++seen; };
  train(t, 5, opts);
  EXPECT_EQ(seen, 5u);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ckpt_2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ckpt_4.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "ckpt_5.ckpt"));
  EXPECT_EQ(load_checkpoint(dir.path() / "final.ckpt").iteration, 5u);
}

TEST(GradCheck, TinyGeneratorObjective) {
  Config c = tiny_config();
  const Dataset data = small_dataset();
  GradCheckOptions o;
  o.max_coords = 8;
  for (bool adversarial : {false, true}) {
    const GeneratorGradCheck g = check_generator_gradients(c, data, 3, adversarial, o);
    EXPECT_EQ(g.report.entries.size(), 20u);
    EXPECT_TRUE(g.report.passed) << "adversarial=" << adversarial << " max " << g.report.max_rel_error;
  }
}

namespace {

template <class Params>
std::vector<Tensor> snapshot(Params& p) {
  std::vector<Tensor> out;
  for (const NamedTensor& t : named_params(p)) out.push_back(*t.value);
  return out;
}

}  // namespace

TEST(Trainer, ReportedTotalAccountsForEveryTerm) {
  Trainer t(quick_config(), small_dataset());
  for (int i = 0; i < 3; ++i) {
    const TrainRow row = t.step();
    EXPECT_NEAR(row.total, row.mse + 0.001 * row.l2 + 0.01 * row.adv, 1e-10);
  }
}

TEST(Trainer, StepsOnlyTouchTheirOwnNetwork) {
  Trainer t(quick_config(), small_dataset());
  Rng rng(4);
  const Batch batch = sample_batch(t.data(), 4, 16, 6, rng);
  const auto disc_before = snapshot(t.discriminator());
  const auto gen_before = snapshot(t.generator());
  t.generator_step(batch, 1);
  EXPECT_EQ(snapshot(t.discriminator()), disc_before);
  EXPECT_NE(snapshot(t.generator()), gen_before);

  const auto gen_after = snapshot(t.generator());
  const Tensor real = join_sequences(batch.seeds, batch.targets);
  const Tensor fake = join_sequences(batch.seeds, t.last_prediction());
  t.discriminator_step(real, fake, 2);
  EXPECT_EQ(snapshot(t.generator()), gen_after);
  EXPECT_NE(snapshot(t.discriminator()), disc_before);
}

TEST(Trainer, FixedBatchLossDoesNotIncreaseEarlyOn) {
  Config c = quick_config();
  c.schedule.use_adversarial = false;
  c.hp.dropout = 0;
  const Dataset data = small_dataset();
  int monotone = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    c.schedule.seed = seed;
    Trainer t(c, data);
    Rng rng(100 + seed);
    const Batch batch = sample_batch(data, 4, 16, 6, rng);
    double prev = t.generator_loss(batch, 0).total;
    bool ok = true;
    for (int i = 0; i < 50 && ok; ++i) {
      t.generator_step(batch, 0);
      const double now = t.generator_loss(batch, 0).total;
      ok = now <= prev;
      prev = now;
    }
    monotone += ok;
  }
  EXPECT_GE(monotone, 4);
}

TEST(Batch, EveryActionAppearsOverManyBatches) {
  const Dataset data = small_dataset();
  Rng rng(12);
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i)
    for (std::size_t a : sample_batch(data, 4, 16, 6, rng).actions) seen.insert(a);
  EXPECT_EQ(seen.size(), data.actions.size());
}
