#include "convseq/model.h"

#include <cmath>

namespace convseq {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t same_pad(std::size_t in, std::size_t kernel, std::size_t stride) {
  const std::size_t out = ceil_div(in, stride);
  const std::size_t need = (out - 1) * stride + kernel;
  const std::size_t total = need > in ? need - in : 0;
  return ceil_div(total, 2);
}

Tensor uniform_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

void require_frames(const Var& v, std::size_t frames, std::size_t dim, const char* what) {
  const Shape& s = v.shape();
  if (s.size() != 3 || s[1] != frames || s[2] != dim) {
    throw ShapeError(std::string(what) + ": expected [B x " + std::to_string(frames) + " x " + std::to_string(dim) +
                     "], got " + shape_str(s));
  }
}

}  // namespace

Extent2 CemConfig::padding(const Extent2& in) const {
  return {same_pad(in.h, kernel.h, stride.h), same_pad(in.w, kernel.w, stride.w)};
}

std::vector<Extent2> CemConfig::grid_trace() const {
  std::vector<Extent2> trace{{input_frames, pose_dim}};
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const Extent2 in = trace.back();
    const Extent2 pad = padding(in);
    trace.push_back({conv_output_extent(in.h, kernel.h, stride.h, pad.h),
                     conv_output_extent(in.w, kernel.w, stride.w, pad.w)});
  }
  return trace;
}

std::size_t CemConfig::flat_dim() const {
  const Extent2 last = grid_trace().back();
  return channels.back() * last.h * last.w;
}

GeneratorConfig generator_config(const Config& config, std::size_t pose_dim) {
  validate(config);
  GeneratorConfig g;
  CemConfig base;
  base.pose_dim = pose_dim;
  base.channels = config.arch.channels;
  base.kernel = config.arch.kernel;
  base.stride = config.arch.stride;
  base.fc_out = config.arch.fc_out;
  base.dropout = config.hp.dropout;
  base.leaky_slope = config.hp.leaky_slope;
  g.long_term = base;
  g.long_term.input_frames = config.hp.seed_length;
  g.short_term = base;
  g.short_term.input_frames = config.hp.window;
  g.pose_dim = pose_dim;
  g.decoder_hidden = config.arch.decoder_hidden;
  g.seed_length = config.hp.seed_length;
  g.target_length = config.hp.target_length;
  g.window = config.hp.window;
  g.eta = config.hp.eta;
  g.dropout = config.hp.dropout;
  g.leaky_slope = config.hp.leaky_slope;
  g.use_long_term = config.arch.use_long_term;
  return g;
}

CemConfig discriminator_config(const Config& config, std::size_t pose_dim) {
  CemConfig d = generator_config(config, pose_dim).long_term;
  d.input_frames = config.hp.seed_length + config.hp.target_length;
  d.dropout = config.arch.discriminator_dropout ? config.hp.dropout : 0.0;
  return d;
}

CemParams init_cem(const CemConfig& cfg, Rng& rng) {
  CemParams p;
  std::size_t cin = 1;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t cout = cfg.channels[i];
    p.conv_w[i] = uniform_tensor({cout, cin, cfg.kernel.h, cfg.kernel.w}, cin * cfg.kernel.h * cfg.kernel.w, rng);
    p.conv_b[i] = Tensor({cout});
    cin = cout;
  }
  const std::size_t flat = cfg.flat_dim();
  p.fc_w = uniform_tensor({cfg.fc_out, flat}, flat, rng);
  p.fc_b = Tensor({cfg.fc_out});
  return p;
}

DecoderParams init_decoder(const GeneratorConfig& cfg, Rng& rng, bool zero_output_layer) {
  DecoderParams d;
  const std::size_t in = 2 * cfg.code_dim();
  d.fc1_w = uniform_tensor({cfg.decoder_hidden, in}, in, rng);
  d.fc1_b = Tensor({cfg.decoder_hidden});
  d.fc2_w = zero_output_layer ? Tensor({cfg.pose_dim, cfg.decoder_hidden})
                              : uniform_tensor({cfg.pose_dim, cfg.decoder_hidden}, cfg.decoder_hidden, rng);
  d.fc2_b = Tensor({cfg.pose_dim});
  return d;
}

GeneratorParams init_generator(const GeneratorConfig& cfg, Rng& rng) {
  GeneratorParams g;
  g.long_term = init_cem(cfg.long_term, rng);
  g.short_term = init_cem(cfg.short_term, rng);
  g.decoder = init_decoder(cfg, rng);
  return g;
}

DiscriminatorParams init_discriminator(const CemConfig& cfg, Rng& rng) {
  DiscriminatorParams d;
  d.body = init_cem(cfg, rng);
  d.head_w = uniform_tensor({1, cfg.fc_out}, cfg.fc_out, rng);
  d.head_b = Tensor({1});
  return d;
}

std::vector<NamedTensor> named_params(CemParams& p, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string layer = prefix + ".conv" + std::to_string(i + 1);
    out.push_back({layer + ".weight", &p.conv_w[i]});
    out.push_back({layer + ".bias", &p.conv_b[i]});
  }
  out.push_back({prefix + ".fc.weight", &p.fc_w});
  out.push_back({prefix + ".fc.bias", &p.fc_b});
  return out;
}

std::vector<NamedTensor> named_params(GeneratorParams& p) {
  auto out = named_params(p.long_term, "long_term");
  auto s = named_params(p.short_term, "short_term");
  out.insert(out.end(), s.begin(), s.end());
  out.push_back({"decoder.fc1.weight", &p.decoder.fc1_w});
  out.push_back({"decoder.fc1.bias", &p.decoder.fc1_b});
  out.push_back({"decoder.fc2.weight", &p.decoder.fc2_w});
  out.push_back({"decoder.fc2.bias", &p.decoder.fc2_b});
  return out;
}

std::vector<NamedTensor> named_params(DiscriminatorParams& p) {
  auto out = named_params(p.body, "discriminator");
  out.push_back({"discriminator.head.weight", &p.head_w});
  out.push_back({"discriminator.head.bias", &p.head_b});
  return out;
}

std::size_t param_count(const std::vector<NamedTensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->numel();
  return n;
}

CemVars bind(Tape& tape, const CemParams& p, bool trainable) {
  CemVars v;
  for (std::size_t i = 0; i < 3; ++i) {
    v.conv_w[i] = tape.leaf(p.conv_w[i], trainable);
    v.conv_b[i] = tape.leaf(p.conv_b[i], trainable);
  }
  v.fc_w = tape.leaf(p.fc_w, trainable);
  v.fc_b = tape.leaf(p.fc_b, trainable);
  return v;
}

DecoderVars bind(Tape& tape, const DecoderParams& p, bool trainable) {
  return {tape.leaf(p.fc1_w, trainable), tape.leaf(p.fc1_b, trainable), tape.leaf(p.fc2_w, trainable),
          tape.leaf(p.fc2_b, trainable)};
}

GeneratorVars bind(Tape& tape, const GeneratorParams& p, bool trainable) {
  GeneratorVars v;
  v.long_term = bind(tape, p.long_term, trainable);
  v.short_term = bind(tape, p.short_term, trainable);
  v.decoder = bind(tape, p.decoder, trainable);
  return v;
}

DiscriminatorVars bind(Tape& tape, const DiscriminatorParams& p, bool trainable) {
  DiscriminatorVars v;
  v.body = bind(tape, p.body, trainable);
  v.head_w = tape.leaf(p.head_w, trainable);
  v.head_b = tape.leaf(p.head_b, trainable);
  return v;
}

static void append_leaves(std::vector<Var>& out, const CemVars& v) {
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back(v.conv_w[i]);
    out.push_back(v.conv_b[i]);
  }
  out.push_back(v.fc_w);
  out.push_back(v.fc_b);
}

std::vector<Var> leaves(const GeneratorVars& v) {
  std::vector<Var> out;
  append_leaves(out, v.long_term);
  append_leaves(out, v.short_term);
  out.insert(out.end(), {v.decoder.fc1_w, v.decoder.fc1_b, v.decoder.fc2_w, v.decoder.fc2_b});
  return out;
}

std::vector<Var> leaves(const DiscriminatorVars& v) {
  std::vector<Var> out;
  append_leaves(out, v.body);
  out.push_back(v.head_w);
  out.push_back(v.head_b);
  return out;
}

GeneratorVars generator_vars(const std::vector<Var>& in) {
  if (in.size() != 20) throw std::invalid_argument("generator_vars: expected 20 leaves, got " + std::to_string(in.size()));
  std::size_t k = 0;
  auto cem = [&]() {
    CemVars v;
    for (std::size_t i = 0; i < 3; ++i) {
      v.conv_w[i] = in[k++];
      v.conv_b[i] = in[k++];
    }
    v.fc_w = in[k++];
    v.fc_b = in[k++];
    return v;
  };
  GeneratorVars g;
  g.long_term = cem();
  g.short_term = cem();
  g.decoder = {in[k], in[k + 1], in[k + 2], in[k + 3]};
  return g;
}

Var cem_forward(Var frames, const CemVars& p, const CemConfig& cfg, Mode mode, Rng& rng) {
  require_frames(frames, cfg.input_frames, cfg.pose_dim, "cem_forward");
  const std::size_t batch = frames.shape()[0];
  Var x = reshape(frames, {batch, 1, cfg.input_frames, cfg.pose_dim});
  Extent2 grid{cfg.input_frames, cfg.pose_dim};
  for (std::size_t i = 0; i < 3; ++i) {
    const Conv2dOptions opt{cfg.stride, cfg.padding(grid)};
    x = leaky_relu(conv2d(x, p.conv_w[i], p.conv_b[i], opt), static_cast<Real>(cfg.leaky_slope));
    grid = {x.shape()[2], x.shape()[3]};
  }
  x = dropout(x, static_cast<Real>(cfg.dropout), mode, rng);
  x = reshape(x, {batch, cfg.flat_dim()});
  return linear(x, p.fc_w, p.fc_b);
}

Var decode_step(Var zl, Var zs, Var prev, const DecoderVars& p, const GeneratorConfig& cfg, Mode mode, Rng& rng) {
  const std::size_t batch = prev.shape()[0];
  require_shape(zl.value(), {batch, cfg.code_dim()}, "decode_step long-term code");
  require_shape(zs.value(), {batch, cfg.code_dim()}, "decode_step short-term code");
  require_shape(prev.value(), {batch, cfg.pose_dim}, "decode_step previous frame");
  Var h = linear(concat({zl, zs}, 1), p.fc1_w, p.fc1_b);
  h = leaky_relu(h, static_cast<Real>(cfg.leaky_slope));
  h = dropout(h, static_cast<Real>(cfg.dropout), mode, rng);
  return add(linear(h, p.fc2_w, p.fc2_b), prev);
}

Var predict_sequence(Var seed, std::optional<Var> teacher, const GeneratorVars& p, const GeneratorConfig& cfg,
                     Mode mode, Rng& rng, WindowTrace* trace) {
  require_frames(seed, cfg.seed_length, cfg.pose_dim, "predict_sequence seed");
  Tape& tape = *seed.tape;
  const std::size_t batch = seed.shape()[0];
  const std::size_t t = cfg.seed_length, horizon = cfg.target_length, c = cfg.window;
  if (c == 0 || c > t) throw ShapeError("predict_sequence: window must satisfy 0 < C <= t");
  if (teacher) {
    if (mode != Mode::kTrain) throw std::invalid_argument("predict_sequence: teacher frames are train-mode only");
    const Shape& ts = teacher->shape();
    if (ts.size() != 3 || ts[0] != batch || ts[1] != horizon || ts[2] != cfg.pose_dim) {
      throw ShapeError("predict_sequence: teacher has shape " + shape_str(ts) + ", expected [" +
                       std::to_string(batch) + "x" + std::to_string(horizon) + "x" + std::to_string(cfg.pose_dim) +
                       "]");
    }
  }

  const Var zl = cfg.use_long_term ? cem_forward(seed, p.long_term, cfg.long_term, mode, rng)
                                   : tape.constant(Tensor({batch, cfg.code_dim()}));

  std::vector<Var> frames;
  std::vector<FrameSource> sources;
  for (std::size_t i = t - c; i < t; ++i) {
    frames.push_back(select(seed, 1, i));
    sources.push_back({FrameSource::kSeed, i});
  }

  const Real eta = static_cast<Real>(cfg.eta);
  std::vector<Var> preds;
  for (std::size_t k = 1; k <= horizon; ++k) {
    const std::vector<Var> recent(frames.end() - static_cast<std::ptrdiff_t>(c), frames.end());
    const Var window = stack(recent, 1);
    if (trace) {
      trace->sources.emplace_back(sources.end() - static_cast<std::ptrdiff_t>(c), sources.end());
      trace->windows.push_back(window.value());
    }
    const Var zs = cem_forward(window, p.short_term, cfg.short_term, mode, rng);
    const Var pred = decode_step(zl, zs, recent.back(), p.decoder, cfg, mode, rng);
    preds.push_back(pred);
    if (k == horizon) break;

    Var next = pred;
    if (teacher && eta < 1) {
      const Var truth = select(*teacher, 1, k - 1);
      next = eta == 0 ? truth : add(scale(pred, eta), scale(truth, Real(1) - eta));
    }
    frames.push_back(next);
    sources.push_back({FrameSource::kGenerated, k});
  }
  return stack(preds, 1);
}

Var discriminate(Var full, const DiscriminatorVars& p, const CemConfig& cfg, Mode mode, Rng& rng) {
  const Var code = cem_forward(full, p.body, cfg, mode, rng);
  const Var h = leaky_relu(code, static_cast<Real>(cfg.leaky_slope));
  return sigmoid(linear(h, p.head_w, p.head_b));
}

HiddenCode encode(const Tensor& frames, const CemParams& p, const CemConfig& cfg, HiddenCode::Origin origin) {
  if (frames.rank() != 2) throw ShapeError("encode: frames must be a matrix, got " + shape_str(frames.shape()));
  Tape tape;
  Rng rng(0);
  const Var x = tape.constant(frames.reshaped({1, frames.dim(0), frames.dim(1)}));
  const Var z = cem_forward(x, bind(tape, p, false), cfg, Mode::kEval, rng);
  const auto d = z.value().data();
  return {origin, std::vector<Real>(d.begin(), d.end())};
}

Tensor predict_batch(const Tensor& seeds, const GeneratorParams& p, const GeneratorConfig& cfg) {
  Tape tape;
  Rng rng(0);
  const Var seed = tape.constant(seeds);
  return predict_sequence(seed, std::nullopt, bind(tape, p, false), cfg, Mode::kEval, rng).value();
}

Tensor predict(const Tensor& seed, const GeneratorParams& p, const GeneratorConfig& cfg) {
  if (seed.rank() != 2) throw ShapeError("predict: seed must be a matrix, got " + shape_str(seed.shape()));
  const Tensor out = predict_batch(seed.reshaped({1, seed.dim(0), seed.dim(1)}), p, cfg);
  return out.reshaped({cfg.target_length, cfg.pose_dim});
}

}  // namespace convseq
