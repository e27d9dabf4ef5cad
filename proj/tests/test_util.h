#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "convseq/autograd.h"
#include "convseq/mocap.h"
#include "convseq/ops.h"
#include "convseq/random.h"

namespace testutil {

using convseq::Real;
using convseq::Shape;
using convseq::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = static_cast<Real>(dist(gen));
  return t;
}

/// Nested-loop cross-correlation with implicit zero padding; NCHW input, OIHW kernel.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t sh, std::size_t sw,
                           std::size_t ph, std::size_t pw) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * ph - kh) / sh + 1, ow = (w + 2 * pw - kw) / sw + 1;
  Tensor y({n, o, oh, ow});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * sh + u) - static_cast<long>(ph);
                const long q = static_cast<long>(j * sw + v) - static_cast<long>(pw);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                acc += x[((in * c + ic) * h + r) * w + q] * k[((oc * c + ic) * kh + u) * kw + v];
              }
          y[((in * o + oc) * oh + i) * ow + j] = static_cast<Real>(acc);
        }
  return y;
}

/// Central differences of a scalar function of several tensors, written without the library's checker.
inline std::vector<Tensor> numeric_grads(const std::function<double(const std::vector<Tensor>&)>& f,
                                         std::vector<Tensor> inputs, double h = 1e-6) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const Real saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double up = f(inputs);
      inputs[k][i] = saved - h;
      const double down = f(inputs);
      inputs[k][i] = saved;
      g[i] = static_cast<Real>((up - down) / (2 * h));
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

/// In-memory synthetic trials labelled like files on disk.
inline std::vector<convseq::RawTrial> synthetic_trials(const convseq::SynthOptions& s) {
  std::vector<convseq::RawTrial> out;
  for (std::size_t sub = 0; sub < s.subjects.size(); ++sub)
    for (std::size_t a = 0; a < s.actions.size(); ++a)
      for (std::size_t t = 0; t < s.trials; ++t) {
        convseq::RawTrial r;
        r.frames = convseq::synth_trial(s, a, sub, t);
        r.subject = s.subjects[sub];
        r.action = s.actions[a];
        r.trial = static_cast<int>(t + 1);
        out.push_back(std::move(r));
      }
  return out;
}

inline convseq::Dataset dataset_from(const std::vector<convseq::RawTrial>& trials) {
  auto stats = std::make_shared<convseq::NormalizationStats>(convseq::fit_stats(trials));
  return convseq::make_dataset(trials, stats);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("convseq-test-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
