#pragma once

#include <cstddef>
#include <vector>

#include "convseq/autograd.h"
#include "convseq/random.h"
#include "convseq/tensor.h"

namespace convseq {

enum class Mode { kTrain, kEval };

struct Extent2 {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct Conv2dOptions {
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
};

/// floor((in + 2*pad - k) / stride) + 1
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// Raw kernels on plain tensors (NCHW). The autodiff ops below call these.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& opt);
/// Returns {d_input, d_kernel, d_bias}.
std::vector<Tensor> conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                    const Conv2dOptions& opt);
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Differentiable operations. None of them broadcast: every extent must match.
Var conv2d(Var input, Var kernel, Var bias, const Conv2dOptions& opt);
Var linear(Var input, Var weight, Var bias);
Var leaky_relu(Var x, Real slope = Real(0.2));
/// Inverted dropout: survivors are scaled by 1/(1-p) in train mode; identity in eval mode.
Var dropout(Var x, Real p, Mode mode, Rng& rng);
Var sigmoid(Var x);
Var log(Var x);
/// Gradient passes through inside [lo, hi] and is zero outside.
Var clamp(Var x, Real lo, Real hi);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, Real s);
Var add_scalar(Var x, Real s);
Var square(Var x);
Var sum(Var x);
Var mean(Var x);
Var sum_squares(Var x);

Var reshape(Var x, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Elements [begin, end) along axis; the axis is kept.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
/// Single index along axis; the axis is removed.
Var select(Var x, std::size_t axis, std::size_t index);
/// Stacks equally shaped parts along a new axis.
Var stack(const std::vector<Var>& parts, std::size_t axis);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Real s, Var x) { return scale(x, s); }

}  // namespace convseq
