#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "convseq/autograd.h"
#include "convseq/gradcheck.h"
#include "convseq/ops.h"
#include "convseq/random.h"
#include "test_util.h"

using namespace convseq;

TEST(Tensor, ConstructionAndAccess) {
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  for (Real v : t.data()) EXPECT_EQ(v, 0);
  t.at(1, 2) = 5;
  EXPECT_EQ(t[5], 5);
  EXPECT_EQ(Tensor::full({2}, 1.5)[1], 1.5);
  EXPECT_EQ(Tensor::scalar(3).item(), 3);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  Tensor t({2, 3});
  EXPECT_THROW(t.dim(2), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_THROW(Tensor({2, 2, 2}).at(0, 0), ShapeError);
  EXPECT_THROW(require_shape(t, {3, 2}, "x"), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.at(2, 1), 6);
  EXPECT_EQ(shape_str(r.shape()), "[3x2]");
}

TEST(Tensor, FiniteCheck) {
  Tensor t({2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Random, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c = Rng::stream(5, 1, 7), d = Rng::stream(5, 1, 7), e = Rng::stream(5, 1, 8);
  const auto x = c.next_u64();
  EXPECT_EQ(x, d.next_u64());
  EXPECT_NE(x, e.next_u64());
}

TEST(Random, Mt19937ReferenceValue) {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the C++ standard.
  Rng r(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = r.next_u64();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(Random, UniformAndIndexRanges) {
  Rng r(1);
  double acc = 0;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    acc += u;
    const auto k = r.index(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_NEAR(acc / 20000, 0.5, 0.01);
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_THROW(r.index(0), std::invalid_argument);
}

TEST(Random, NormalMoments) {
  Rng r(3);
  double m = 0, s = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    m += x;
    s += x * x;
  }
  m /= n;
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(s / n - m * m, 1.0, 0.03);
}

TEST(Autograd, ChainRuleOnSimpleExpression) {
  // f(a, b) = sum((a*b + a)^2); df/da = 2(ab+a)(b+1), df/db = 2(ab+a)a
  Tape tape;
  Var a = tape.leaf(Tensor({2}, {1.5, -2.0}));
  Var b = tape.leaf(Tensor({2}, {0.5, 3.0}));
  Var f = sum(square(a * b + a));
  tape.backward(f);
  EXPECT_DOUBLE_EQ(tape.grad(a)[0], 2 * (0.75 + 1.5) * 1.5);
  EXPECT_DOUBLE_EQ(tape.grad(a)[1], 2 * (-6.0 - 2.0) * 4.0);
  EXPECT_DOUBLE_EQ(tape.grad(b)[0], 2 * (0.75 + 1.5) * 1.5);
  EXPECT_DOUBLE_EQ(tape.grad(b)[1], 2 * (-6.0 - 2.0) * -2.0);
}

TEST(Autograd, FanOutAccumulates) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, {3.0}));
  Var y = x * x + x * x + x;  // 2x^2 + x
  tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 4 * 3.0 + 1);
}

TEST(Autograd, BackwardVisitsNodesInReverseOrder) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}));
  Var y = square(x);
  Var z = scale(y, 2);
  Var s = sum(z);
  tape.backward(s);
  const auto& trace = tape.backward_trace();
  ASSERT_GE(trace.size(), 3u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GT(trace[i - 1], trace[i]);
  EXPECT_EQ(trace.front(), s.id);
}

TEST(Autograd, ConstantsGetNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor({2}, {1, 2}));
  Var x = tape.leaf(Tensor({2}, {3, 4}));
  tape.backward(sum(c * x));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(tape.grad(c), Tensor({2}));
  EXPECT_EQ(tape.grad(x), Tensor({2}, {1, 2}));
}

TEST(Autograd, NonScalarLossRejected) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}));
  EXPECT_THROW(tape.backward(square(x)), ShapeError);
}

TEST(Autograd, WrongGradientShapeFromCustomOpIsCaught) {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, {1, 2, 3}));
  Var y = tape.record("broken", Tensor({1}, {6.0}), {x},
                      [](const Tape&, const Tensor&) { return std::vector<Tensor>{Tensor({2})}; });
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Autograd, NonFiniteForwardIsReported) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, {1e308}));
  EXPECT_THROW(scale(x, 10), NumericError);
  Tape lenient;
  lenient.set_check_finite(false);
  Var y = lenient.leaf(Tensor({1}, {1e308}));
  EXPECT_NO_THROW(scale(y, 10));
}

TEST(Autograd, MixingTapesIsAnError) {
  Tape t1, t2;
  Var a = t1.leaf(Tensor({1}, {1}));
  Var b = t2.leaf(Tensor({1}, {1}));
  EXPECT_THROW(add(a, b), std::logic_error);
}

TEST(GradCheck, PassesForCorrectGradient) {
  Tensor w({3}, {0.3, -0.7, 1.1});
  GradCheckReport r = grad_check([](Tape&, const std::vector<Var>& v) { return sum(square(v[0])); },
                                 {{"w", &w}});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.entries.at(0).checked, 3u);
  EXPECT_EQ(w, Tensor({3}, {0.3, -0.7, 1.1}));
}

TEST(GradCheck, FlagsWrongGradient) {
  Tensor w({3}, {0.3, -0.7, 1.1});
  auto wrong_square = [](Tape& tape, const std::vector<Var>& v) {
    Tensor out = v[0].value();
    for (auto& x : out.data()) x = x * x;
    Var y = tape.record("bad_square", out, {v[0]}, [v](const Tape& t, const Tensor& g) {
      Tensor d = t.value(v[0].id);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] = 3 * d[i] * g[i];  // should be 2x
      return std::vector<Tensor>{d};
    });
    return sum(y);
  };
  GradCheckReport r = grad_check(wrong_square, {{"w", &w}});
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.entries[0].rel_error, 1.0 / 3.0, 1e-6);
}

TEST(GradCheck, DetectsNondeterministicFunction) {
  Tensor w({2}, {1, 2});
  int calls = 0;
  GradCheckReport r = grad_check(
      [&](Tape&, const std::vector<Var>& v) { return scale(sum(v[0]), static_cast<Real>(1 + ++calls)); },
      {{"w", &w}});
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.setup_error.empty());
}

TEST(GradCheck, SamplingAlwaysIncludesLargestEntry) {
  Tensor w({50});
  for (std::size_t i = 0; i < 50; ++i) w[i] = 0.01 * static_cast<double>(i);
  w[17] = 5;
  GradCheckOptions o;
  o.max_coords = 3;
  GradCheckReport r = grad_check([](Tape&, const std::vector<Var>& v) { return sum(square(v[0])); },
                                 {{"w", &w}}, o);
  EXPECT_EQ(r.entries[0].checked, 3u);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, ShrinksStepNearLeakyReluBreakpoint) {
  // The first two entries sit closer to 0 than the default step, the third is exactly on the kink.
  Tensor w({4}, {3e-6, -2e-6, 0.5, 0.0});
  GradCheckReport r = grad_check([](Tape&, const std::vector<Var>& v) { return sum(leaky_relu(v[0])); }, {{"w", &w}});
  const GradCheckEntry& e = r.entries.at(0);
  EXPECT_EQ(e.kink_retries, 6u);  // one shrink each for the near-kink entries, four for the one on it
  EXPECT_EQ(e.kink_skipped, 1u);
  EXPECT_EQ(e.checked, 3u);
  EXPECT_LT(e.rel_error, 1e-8);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(w, Tensor({4}, {3e-6, -2e-6, 0.5, 0.0}));
}

TEST(GradCheck, FailsWhenEveryProbeIsOnAKink) {
  Tensor w({2}, {0.0, 0.0});
  GradCheckReport r = grad_check([](Tape&, const std::vector<Var>& v) { return sum(leaky_relu(v[0])); }, {{"w", &w}});
  EXPECT_EQ(r.entries.at(0).kink_skipped, 2u);
  EXPECT_FALSE(r.passed);
}

TEST(GradCheck, RelativeErrorDefinitions) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(std::vector<double>{3, 0}, std::vector<double>{0, 4}), 5.0 / 4.0);
}
