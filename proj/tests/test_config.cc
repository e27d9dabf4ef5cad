#include <gtest/gtest.h>

#include "convseq/config.h"

using namespace convseq;

// Published defaults: lambda_2, lambda_adv, dropout, batch, lr, t, T, window,
// channels, fc width, kernel and stride.
constexpr const char* kGoldenDefault =
    "seed_length = 50\n"
    "target_length = 25\n"
    "window = 20\n"
    "eta = 1\n"
    "lambda_l2 = 0.001\n"
    "lambda_adv = 0.01\n"
    "learning_rate = 0.0002\n"
    "batch_size = 64\n"
    "dropout = 0.5\n"
    "leaky_slope = 0.2\n"
    "adam_beta1 = 0.9\n"
    "adam_beta2 = 0.999\n"
    "adam_eps = 1e-08\n"
    "channels = 64,128,128\n"
    "kernel = 2x7\n"
    "stride = 2x2\n"
    "fc_out = 512\n"
    "decoder_hidden = 512\n"
    "use_long_term = true\n"
    "discriminator_dropout = false\n"
    "iterations = 10000\n"
    "checkpoint_every = 1000\n"
    "seed = 50\n"
    "use_adversarial = true\n"
    "grad_clip = 0\n"
    "eval_sequences = 8\n"
    "eval_seed = 1234567890\n"
    "report_timing = true\n";

TEST(Config, DefaultSerializesToGolden) { EXPECT_EQ(to_config_text(Config{}), kGoldenDefault); }

TEST(Config, DefaultFieldValues) {
  const Config c;
  EXPECT_EQ(c.hp.lambda_l2, 0.001);
  EXPECT_EQ(c.hp.lambda_adv, 0.01);
  EXPECT_EQ(c.hp.dropout, 0.5);
  EXPECT_EQ(c.hp.batch_size, 64u);
  EXPECT_EQ(c.hp.learning_rate, 0.0002);
  EXPECT_EQ(c.hp.seed_length, 50u);
  EXPECT_EQ(c.hp.target_length, 25u);
  EXPECT_EQ(c.hp.window, 20u);
  EXPECT_EQ(c.arch.channels, (std::array<std::size_t, 3>{64, 128, 128}));
  EXPECT_EQ(c.arch.fc_out, 512u);
  EXPECT_EQ(c.arch.kernel, (Extent2{2, 7}));
  EXPECT_EQ(c.arch.stride, (Extent2{2, 2}));
}

TEST(Config, TextRoundTrip) {
  Config c = tiny_config();
  c.hp.eta = 0.25;
  c.arch.kernel = {4, 4};
  c.schedule.use_adversarial = false;
  c.hp.adam_eps = 3.5e-9;
  const Config back = parse_config_text(to_config_text(c));
  EXPECT_EQ(to_config_text(back), to_config_text(c));
}

TEST(Config, PartialFileKeepsBaseAndAllowsComments) {
  const Config c = parse_config_text("# tweak\nwindow = 10\n\nkernel = 7x2\n", tiny_config());
  EXPECT_EQ(c.hp.window, 10u);
  EXPECT_EQ(c.arch.kernel, (Extent2{7, 2}));
  EXPECT_EQ(c.hp.seed_length, tiny_config().hp.seed_length);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config_text("windw = 5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("window = five\n"), ConfigError);
  EXPECT_THROW(parse_config_text("window\n"), ConfigError);
  EXPECT_THROW(parse_config_text("use_long_term = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("channels = 1,2\n"), ConfigError);
  EXPECT_THROW(parse_config_text("eta = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("window = 60\n"), ConfigError);
  EXPECT_THROW(parse_config_text("dropout = 1\n"), ConfigError);
  EXPECT_THROW(parse_kernel("27"), ConfigError);
  EXPECT_THROW(parse_kernel("0x7"), ConfigError);
}

TEST(Config, TinyPreset) {
  const Config t = tiny_config();
  EXPECT_EQ(t.arch.channels, (std::array<std::size_t, 3>{8, 16, 16}));
  EXPECT_EQ(t.arch.fc_out, 64u);
  EXPECT_EQ(t.hp.seed_length, 16u);
  EXPECT_EQ(t.hp.window, 8u);
  EXPECT_EQ(t.hp.target_length, 6u);
  EXPECT_NO_THROW(validate(t));
}

TEST(Config, KernelText) {
  EXPECT_EQ(parse_kernel("2x7"), (Extent2{2, 7}));
  EXPECT_EQ(kernel_str({7, 2}), "7x2");
}
