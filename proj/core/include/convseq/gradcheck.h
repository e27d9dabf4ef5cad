#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "convseq/autograd.h"

namespace convseq {

struct NamedTensor {
  std::string name;
  Tensor* value = nullptr;
};

/// Builds a scalar loss on a fresh tape from leaf vars (one per parameter, same order).
/// Must be deterministic: any internal randomness is reseeded on every call.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// A probe whose +-step evaluation lands on a different linear piece of a
  /// leaky ReLU or clamp is retried with a step ten times smaller, down to this.
  double min_step = 1e-9;
  double tolerance = 1e-4;
  /// Coordinates checked per parameter; 0 checks every element.
  std::size_t max_coords = 0;
  std::uint64_t sample_seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  /// ||a - n|| / max(||a||, ||n||) over the checked coordinates; decides `passed`.
  double rel_error = 0;
  /// Worst single-coordinate relative_error(), for diagnostics. Near-zero
  /// components are dominated by floating-point noise in the difference quotient.
  double max_elem_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  /// Step reductions made because a probe crossed a breakpoint, and probes
  /// dropped because even min_step crossed one.
  std::size_t kink_retries = 0;
  std::size_t kink_skipped = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;  // max of the per-parameter rel_error
  bool passed = true;
  /// Non-empty when the function is not reproducible between evaluations.
  std::string setup_error;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);
/// ||a - n|| / max(||a||, ||n||, 1e-8) for equally sized vectors.
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// Compares reverse-mode gradients against central differences. Parameters are
/// perturbed in place and restored. Central differences are only meaningful where
/// the loss is smooth, so probes that cross a piecewise-linear breakpoint are
/// retried with a smaller step.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace convseq
