#include "convseq/eval.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "convseq/rotation.h"

namespace convseq {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

Tensor frame_rows(const Tensor& frames, std::size_t start, std::size_t count) {
  const std::size_t dim = frames.dim(1);
  std::vector<Real> data(frames.data().begin() + static_cast<std::ptrdiff_t>(start * dim),
                         frames.data().begin() + static_cast<std::ptrdiff_t>((start + count) * dim));
  return Tensor({count, dim}, std::move(data));
}

void finish_report(HorizonReport& report) {
  report.average.assign(report.horizons.size(), 0.0);
  for (std::size_t h = 0; h < report.horizons.size(); ++h) {
    double acc = 0;
    for (const auto& row : report.errors) acc += row[h];
    report.average[h] = report.errors.empty() ? 0.0 : acc / static_cast<double>(report.errors.size());
  }
}

std::vector<std::string> actions_of(std::span<const RawTrial> trials) {
  std::vector<std::string> names;
  for (const auto& t : trials) names.push_back(t.action);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

}  // namespace

std::size_t horizon_frame(int ms, double frame_period) {
  const auto period_us = static_cast<long long>(std::llround(frame_period * 1e6));
  if (ms < 0 || period_us <= 0) throw std::invalid_argument("horizon_frame: bad horizon or frame period");
  return static_cast<std::size_t>(static_cast<long long>(ms) * 1000 / period_us);
}

std::vector<Horizon> horizons_for(std::size_t target_length, double frame_period) {
  std::vector<Horizon> out;
  for (int ms : kHorizonsMs) {
    const std::size_t f = horizon_frame(ms, frame_period);
    if (f >= 1 && f <= target_length) out.push_back({ms, f});
  }
  return out;
}

double euler_error(const Tensor& pred, const Tensor& truth, std::size_t frame, const std::vector<bool>& use_dims) {
  if (pred.rank() != 2 || pred.shape() != truth.shape()) {
    throw ShapeError("euler_error: frames " + shape_str(pred.shape()) + " vs " + shape_str(truth.shape()));
  }
  const std::size_t dim = pred.dim(1);
  if (dim % 3 != 0 || use_dims.size() != dim) {
    throw ShapeError("euler_error: raw width " + std::to_string(dim) + " must be a multiple of 3 and match the mask");
  }
  if (frame >= pred.dim(0)) throw std::out_of_range("euler_error: frame index out of range");
  const Real* p = pred.data().data() + frame * dim;
  const Real* g = truth.data().data() + frame * dim;
  double acc = 0;
  for (std::size_t j = 0; j < dim; j += 3) {
    if (!use_dims[j] && !use_dims[j + 1] && !use_dims[j + 2]) continue;
    Vec3 rp{}, rg{};
    for (std::size_t d = 0; d < 3; ++d) {
      rp[d] = use_dims[j + d] ? p[j + d] : 0.0;
      rg[d] = use_dims[j + d] ? g[j + d] : 0.0;
    }
    const Vec3 ep = rotmat_to_euler(expmap_to_rotmat(rp));
    const Vec3 eg = rotmat_to_euler(expmap_to_rotmat(rg));
    for (std::size_t d = 0; d < 3; ++d) {
      if (!use_dims[j + d]) continue;
      const double diff = ep[d] - eg[d];
      acc += diff * diff;
    }
  }
  return std::sqrt(acc);
}

std::vector<std::vector<EvalWindow>> draw_eval_windows(std::span<const RawTrial> trials,
                                                       const std::vector<std::string>& actions, std::size_t per_action,
                                                       std::uint64_t seed, std::size_t seed_length,
                                                       std::size_t target_length) {
  const std::size_t span = seed_length + target_length;
  std::vector<std::vector<EvalWindow>> out;
  for (std::size_t a = 0; a < actions.size(); ++a) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < trials.size(); ++i)
      if (trials[i].action == actions[a] && trials[i].num_frames() >= span) candidates.push_back(i);
    if (candidates.empty()) {
      throw std::runtime_error("no test trial of action '" + actions[a] + "' has " + std::to_string(span) + " frames");
    }
    Rng rng = Rng::stream(seed, 0xe7a1, a);
    std::vector<EvalWindow> windows;
    for (std::size_t s = 0; s < per_action; ++s) {
      const std::size_t trial = candidates[rng.index(candidates.size())];
      windows.push_back({trial, rng.index(trials[trial].num_frames() - span + 1)});
    }
    out.push_back(std::move(windows));
  }
  return out;
}

HorizonReport evaluate_predictor(std::span<const RawTrial> test, const NormalizationStats& stats,
                                 const EvalOptions& options, const RawPredictor& predictor) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  const std::size_t t = options.seed_length, horizon = options.target_length, dim = stats.raw_dim();
  HorizonReport report;
  report.horizons = horizons_for(horizon);
  report.actions = actions_of(test);
  report.sequences_per_action = options.per_action;
  report.seed = options.seed;
  report.windows = draw_eval_windows(test, report.actions, options.per_action, options.seed, t, horizon);

  for (std::size_t a = 0; a < report.actions.size(); ++a) {
    const auto& windows = report.windows[a];
    const std::size_t batch = windows.size();
    Tensor seeds({batch, t, dim});
    for (std::size_t b = 0; b < batch; ++b) {
      const RawTrial& trial = test[windows[b].trial];
      if (trial.width() != dim) throw ShapeError("evaluate: test trial width differs from the statistics");
      std::copy_n(trial.frames.data().data() + windows[b].offset * dim, t * dim, seeds.data().data() + b * t * dim);
    }
    const Tensor preds = predictor(seeds);
    require_shape(preds, {batch, horizon, dim}, "evaluate: predictor output");

    const Tensor pred = preds.reshaped({batch * horizon, dim});
    std::vector<double> sums(report.horizons.size(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const Tensor p = frame_rows(pred, b * horizon, horizon);
      const Tensor truth = frame_rows(test[windows[b].trial].frames, windows[b].offset + t, horizon);
      for (std::size_t h = 0; h < report.horizons.size(); ++h) {
        sums[h] += euler_error(p, truth, report.horizons[h].frame - 1, stats.kept);
      }
      if (!options.dump_dir.empty()) {
        save_frames(options.dump_dir / (report.actions[a] + "_" + std::to_string(b) + ".txt"), p);
      }
    }
    std::vector<double> row;
    for (double s : sums) row.push_back(s / static_cast<double>(batch));
    report.errors.push_back(std::move(row));
  }
  finish_report(report);
  return report;
}

HorizonReport evaluate(const Checkpoint& checkpoint, std::span<const RawTrial> test,
                       const NormalizationStats& data_stats, EvalOptions options) {
  if (checkpoint.stats.fingerprint() != data_stats.fingerprint()) {
    throw FingerprintMismatch("refusing to evaluate: checkpoint stats " +
                              fingerprint_hex(checkpoint.stats.fingerprint()) + " differ from data stats " +
                              fingerprint_hex(data_stats.fingerprint()));
  }
  const GeneratorConfig gcfg = generator_config(checkpoint.config, checkpoint.pose_dim());
  options.seed_length = gcfg.seed_length;
  options.target_length = gcfg.target_length;
  const NormalizationStats& stats = checkpoint.stats;
  const std::size_t raw = stats.raw_dim(), reduced = stats.reduced_dim();
  return evaluate_predictor(test, stats, options, [&](const Tensor& seeds) {
    const std::size_t batch = seeds.dim(0);
    const Tensor norm = normalize_frames(seeds.reshaped({batch * gcfg.seed_length, raw}), stats)
                            .reshaped({batch, gcfg.seed_length, reduced});
    const Tensor pred = predict_batch(norm, checkpoint.generator, gcfg);
    return denormalize_frames(pred.reshaped({batch * gcfg.target_length, reduced}), stats)
        .reshaped({batch, gcfg.target_length, raw});
  });
}

HorizonReport zero_velocity_report(std::span<const RawTrial> test, const NormalizationStats& stats,
                                   const EvalOptions& options) {
  HorizonReport report;
  report.horizons = horizons_for(options.target_length);
  report.actions = actions_of(test);
  report.sequences_per_action = options.per_action;
  report.seed = options.seed;
  report.windows = draw_eval_windows(test, report.actions, options.per_action, options.seed, options.seed_length,
                                     options.target_length);
  for (const auto& windows : report.windows) {
    std::vector<double> row;
    for (const Horizon& h : report.horizons) {
      double acc = 0;
      for (const EvalWindow& w : windows) {
        const Tensor& frames = test[w.trial].frames;
        const Tensor last = frame_rows(frames, w.offset + options.seed_length - 1, 1);
        const Tensor truth = frame_rows(frames, w.offset + options.seed_length + h.frame - 1, 1);
        acc += euler_error(last, truth, 0, stats.kept);
      }
      row.push_back(acc / static_cast<double>(windows.size()));
    }
    report.errors.push_back(std::move(row));
  }
  finish_report(report);
  return report;
}

std::string report_csv(const HorizonReport& report) {
  std::string out = "action,ms,error\n";
  for (std::size_t a = 0; a < report.actions.size(); ++a)
    for (std::size_t h = 0; h < report.horizons.size(); ++h)
      out += report.actions[a] + "," + std::to_string(report.horizons[h].ms) + "," + fmt(report.errors[a][h]) + "\n";
  for (std::size_t h = 0; h < report.horizons.size(); ++h)
    out += "average," + std::to_string(report.horizons[h].ms) + "," + fmt(report.average[h]) + "\n";
  return out;
}

std::string report_table(const HorizonReport& report) {
  std::size_t name_width = 7;
  for (const auto& a : report.actions) name_width = std::max(name_width, a.size());
  auto pad = [&](std::string s) {
    s.resize(name_width + 2, ' ');
    return s;
  };
  char buf[32];
  std::string out = pad("ms");
  for (const auto& h : report.horizons) {
    std::snprintf(buf, sizeof(buf), "%7d", h.ms);
    out += buf;
  }
  out += "\n";
  auto row = [&](const std::string& name, const std::vector<double>& values) {
    out += pad(name);
    for (double v : values) {
      std::snprintf(buf, sizeof(buf), "%7.2f", v);
      out += buf;
    }
    out += "\n";
  };
  for (std::size_t a = 0; a < report.actions.size(); ++a) row(report.actions[a], report.errors[a]);
  row("Average", report.average);
  return out;
}

}  // namespace convseq
