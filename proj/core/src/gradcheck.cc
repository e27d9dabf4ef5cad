#include "convseq/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "convseq/random.h"

namespace convseq {
namespace {

struct Evaluation {
  double value = 0;
  std::uint64_t branches = 0;
};

Evaluation evaluate(const ScalarFn& f, const std::vector<NamedTensor>& params) {
  Tape tape;
  tape.set_track_branches(true);
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(*p.value, false));
  const double value = static_cast<double>(f(tape, vars).value().item());
  return {value, tape.branch_signature()};
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;

  std::vector<Tensor> analytic;
  double base = 0;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf(*p.value, true));
    Var loss = f(tape, vars);
    base = static_cast<double>(loss.value().item());
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }
  const Evaluation reference = evaluate(f, params);
  const double again = reference.value;
  if (again != base) {
    report.passed = false;
    report.setup_error = "function is not deterministic: repeated evaluation gave " + std::to_string(again) +
                         " vs " + std::to_string(base) + " (is a dropout mask being resampled?)";
    return report;
  }

  Rng rng(options.sample_seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = *params[k].value;
    const std::size_t n = value.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords > 0 && options.max_coords < n) {
      // Always include the largest-magnitude analytic entry, then a random subset.
      const auto g = analytic[k].data();
      const std::size_t top = static_cast<std::size_t>(
          std::max_element(g.begin(), g.end(), [](Real a, Real b) { return std::abs(a) < std::abs(b); }) -
          g.begin());
      for (std::size_t i = n - 1; i > 0; --i) std::swap(coords[i], coords[rng.index(i + 1)]);
      coords.resize(options.max_coords);
      if (std::find(coords.begin(), coords.end(), top) == coords.end()) coords.back() = top;
    }

    GradCheckEntry entry;
    entry.name = params[k].name;
    std::vector<double> as, ns;
    for (std::size_t i : coords) {
      const Real saved = value[i];
      double h = options.step, numeric = 0;
      bool smooth = false;
      for (;;) {
        const Real hi = saved + static_cast<Real>(h), lo = saved - static_cast<Real>(h);
        value[i] = hi;
        const Evaluation up = evaluate(f, params);
        value[i] = lo;
        const Evaluation down = evaluate(f, params);
        value[i] = saved;
        numeric = (up.value - down.value) / static_cast<double>(hi - lo);
        smooth = up.branches == reference.branches && down.branches == reference.branches;
        if (smooth || h / 10 < options.min_step) break;
        h /= 10;
        ++entry.kink_retries;
      }
      if (!smooth) {
        ++entry.kink_skipped;
        continue;
      }
      const double a = static_cast<double>(analytic[k][i]);
      as.push_back(a);
      ns.push_back(numeric);
      const double err = relative_error(a, numeric);
      ++entry.checked;
      if (err > entry.max_elem_error || entry.checked == 1) {
        entry.max_elem_error = err;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    entry.rel_error = relative_error(as, ns);
    entry.passed = entry.rel_error <= options.tolerance && (entry.checked > 0 || coords.empty());
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace convseq
