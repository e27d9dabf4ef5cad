#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "convseq/autograd.h"
#include "convseq/config.h"
#include "convseq/gradcheck.h"
#include "convseq/ops.h"
#include "convseq/random.h"

namespace convseq {

/// Convolutional encoding module: three strided convolutions over a
/// (time x pose-dim) single-channel grid, dropout, then an affine map to the code.
struct CemConfig {
  std::size_t input_frames = 50;
  std::size_t pose_dim = 54;
  std::array<std::size_t, 3> channels{64, 128, 128};
  Extent2 kernel{2, 7};
  Extent2 stride{2, 2};
  std::size_t fc_out = 512;
  double dropout = 0.5;
  double leaky_slope = 0.2;

  /// Zero padding that makes each layer produce ceil(extent / stride).
  Extent2 padding(const Extent2& in) const;
  /// Grid extents: the input grid followed by each conv layer's output.
  std::vector<Extent2> grid_trace() const;
  std::size_t flat_dim() const;
};

struct CemParams {
  std::array<Tensor, 3> conv_w;
  std::array<Tensor, 3> conv_b;
  Tensor fc_w;
  Tensor fc_b;
};

struct DecoderParams {
  Tensor fc1_w, fc1_b;  // 2*code -> hidden
  Tensor fc2_w, fc2_b;  // hidden -> pose_dim
};

struct DiscriminatorParams {
  CemParams body;
  Tensor head_w, head_b;  // code -> 1 logit
};

struct GeneratorParams {
  CemParams long_term;
  CemParams short_term;
  DecoderParams decoder;
};

struct GeneratorConfig {
  CemConfig long_term;
  CemConfig short_term;
  std::size_t pose_dim = 54;
  std::size_t decoder_hidden = 512;
  std::size_t seed_length = 50;
  std::size_t target_length = 25;
  std::size_t window = 20;
  double eta = 1.0;
  double dropout = 0.5;
  double leaky_slope = 0.2;
  bool use_long_term = true;

  std::size_t code_dim() const { return long_term.fc_out; }
};

GeneratorConfig generator_config(const Config& config, std::size_t pose_dim);
/// Same layer stack as the encoders, over the (t+T)-frame grid.
CemConfig discriminator_config(const Config& config, std::size_t pose_dim);

// Initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases; the
// decoder output layer starts at zero so a fresh model is the zero-velocity predictor.
CemParams init_cem(const CemConfig& cfg, Rng& rng);
DecoderParams init_decoder(const GeneratorConfig& cfg, Rng& rng, bool zero_output_layer = true);
GeneratorParams init_generator(const GeneratorConfig& cfg, Rng& rng);
DiscriminatorParams init_discriminator(const CemConfig& cfg, Rng& rng);

/// Named references to every tensor, in a stable order used by checkpoints and ADAM.
std::vector<NamedTensor> named_params(GeneratorParams& p);
std::vector<NamedTensor> named_params(DiscriminatorParams& p);
std::vector<NamedTensor> named_params(CemParams& p, const std::string& prefix);
std::size_t param_count(const std::vector<NamedTensor>& params);

// Parameters bound onto a tape.

struct CemVars {
  std::array<Var, 3> conv_w, conv_b;
  Var fc_w, fc_b;
};
struct DecoderVars {
  Var fc1_w, fc1_b, fc2_w, fc2_b;
};
struct GeneratorVars {
  CemVars long_term, short_term;
  DecoderVars decoder;
};
struct DiscriminatorVars {
  CemVars body;
  Var head_w, head_b;
};

CemVars bind(Tape& tape, const CemParams& p, bool trainable);
DecoderVars bind(Tape& tape, const DecoderParams& p, bool trainable);
GeneratorVars bind(Tape& tape, const GeneratorParams& p, bool trainable);
DiscriminatorVars bind(Tape& tape, const DiscriminatorParams& p, bool trainable);
/// Leaf vars in named_params order, for the L2 term and gradient read-out.
std::vector<Var> leaves(const GeneratorVars& v);
std::vector<Var> leaves(const DiscriminatorVars& v);
/// Inverse of leaves(): regroups vars given in named_params order.
GeneratorVars generator_vars(const std::vector<Var>& leaves);

/// frames [B, n, L] -> code [B, fc_out].
Var cem_forward(Var frames, const CemVars& p, const CemConfig& cfg, Mode mode, Rng& rng);

/// One decoder application: prev + W2 * dropout(leaky(W1 [zl, zs] + b1)) + b2.
/// zl, zs: [B, code]; prev: [B, L].
Var decode_step(Var zl, Var zs, Var prev, const DecoderVars& p, const GeneratorConfig& cfg, Mode mode, Rng& rng);

/// Where a frame inside the short-term window came from.
struct FrameSource {
  enum Kind { kSeed, kGenerated } kind = kSeed;
  std::size_t index = 0;  // seed frame (0-based) or decoding step (1-based)
  friend bool operator==(const FrameSource&, const FrameSource&) = default;
};

struct WindowTrace {
  std::vector<std::vector<FrameSource>> sources;  // per step k = 1..T
  std::vector<Tensor> windows;                    // per step, [B, C, L]
};

/// Recursive decoding. The long-term code is computed once from the whole seed;
/// step k encodes the most recent C frames, where frames past the seed are
/// eta * predicted + (1 - eta) * teacher (teacher only in train mode) or purely
/// predicted otherwise. Each prediction is a residual added to the window's last frame.
/// seed [B, t, L], teacher [B, T, L] -> predictions [B, T, L].
Var predict_sequence(Var seed, std::optional<Var> teacher, const GeneratorVars& p, const GeneratorConfig& cfg,
                     Mode mode, Rng& rng, WindowTrace* trace = nullptr);

/// full [B, t+T, L] -> probability real [B, 1].
Var discriminate(Var full, const DiscriminatorVars& p, const CemConfig& cfg, Mode mode, Rng& rng);

// Tape-free conveniences for single sequences in eval mode.

struct HiddenCode {
  enum Origin { kLong, kShort } origin = kLong;
  std::vector<Real> values;
};

HiddenCode encode(const Tensor& frames, const CemParams& p, const CemConfig& cfg, HiddenCode::Origin origin);
/// seed [t, L] -> predicted [T, L]
Tensor predict(const Tensor& seed, const GeneratorParams& p, const GeneratorConfig& cfg);
/// seeds [B, t, L] -> predicted [B, T, L]
Tensor predict_batch(const Tensor& seeds, const GeneratorParams& p, const GeneratorConfig& cfg);

}  // namespace convseq
