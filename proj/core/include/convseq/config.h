#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "convseq/ops.h"

namespace convseq {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct HyperParams {
  std::size_t seed_length = 50;    // t
  std::size_t target_length = 25;  // T
  std::size_t window = 20;         // C, short-term encoder input
  double eta = 1.0;                // predicted/ground-truth mix inside the window
  double lambda_l2 = 0.001;
  double lambda_adv = 0.01;
  double learning_rate = 0.0002;
  std::size_t batch_size = 64;
  double dropout = 0.5;
  double leaky_slope = 0.2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct ArchConfig {
  std::array<std::size_t, 3> channels{64, 128, 128};
  Extent2 kernel{2, 7};  // temporal x spatial
  Extent2 stride{2, 2};
  std::size_t fc_out = 512;
  std::size_t decoder_hidden = 512;
  bool use_long_term = true;
  bool discriminator_dropout = false;
};

struct Schedule {
  std::size_t iterations = 10000;
  std::size_t checkpoint_every = 1000;
  std::uint64_t seed = 50;
  bool use_adversarial = true;
  double grad_clip = 0.0;  // max global norm; 0 disables
  std::size_t eval_sequences = 8;
  std::uint64_t eval_seed = 1234567890;
  bool report_timing = true;
};

struct Config {
  HyperParams hp;
  ArchConfig arch;
  Schedule schedule;
};

/// Small configuration for gradient checks and desk-scale training:
/// channels 8/16/16, fc 64, t=16, C=8, T=6, dropout off.
Config tiny_config();

/// Throws ConfigError on out-of-range values (C > t, eta outside [0,1], ...).
void validate(const Config& config);

/// `key = value` lines, one per field, in a fixed order.
std::string to_config_text(const Config& config);
/// Unknown keys and malformed values are rejected; missing keys keep `base`.
Config parse_config_text(std::string_view text, const Config& base = Config{});
Config load_config(const std::filesystem::path& file, const Config& base = Config{});
void set_config_value(Config& config, std::string_view key, std::string_view value);

/// "2x7" style.
Extent2 parse_kernel(std::string_view text);
std::string kernel_str(const Extent2& k);

}  // namespace convseq
