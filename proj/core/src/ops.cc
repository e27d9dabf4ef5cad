#include "convseq/ops.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace convseq {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Conv2dOptions& opt) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  if (kernel.dim(1) != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels but kernel " +
                     shape_str(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  }
  if (opt.stride.h == 0 || opt.stride.w == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (g.kh > g.h + 2 * opt.padding.h || g.kw > g.w + 2 * opt.padding.w) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  g.ho = conv_output_extent(g.h, g.kh, opt.stride.h, opt.padding.h);
  g.wo = conv_output_extent(g.w, g.kw, opt.stride.w, opt.padding.w);
  return g;
}

// col[(c*kh + i)*kw + j][oy*wo + ox] = input[c][oy*sh + i - ph][ox*sw + j - pw], zero outside.
void im2col(const Real* in, const ConvGeometry& g, const Conv2dOptions& opt, Real* col) {
  const std::size_t npix = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        Real* row = col + ((c * g.kh + i) * g.kw + j) * npix;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * opt.stride.h + i) -
                                   static_cast<std::ptrdiff_t>(opt.padding.h);
          Real* dst = row + oy * g.wo;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, Real(0));
            continue;
          }
          const Real* src = in + (c * g.h + static_cast<std::size_t>(y)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * opt.stride.w + j) -
                                     static_cast<std::ptrdiff_t>(opt.padding.w);
            dst[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.w)) ? Real(0) : src[x];
          }
        }
      }
    }
  }
}

void col2im_add(const Real* col, const ConvGeometry& g, const Conv2dOptions& opt, Real* in) {
  const std::size_t npix = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const Real* row = col + ((c * g.kh + i) * g.kw + j) * npix;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * opt.stride.h + i) -
                                   static_cast<std::ptrdiff_t>(opt.padding.h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          Real* dst = in + (c * g.h + static_cast<std::size_t>(y)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * opt.stride.w + j) -
                                     static_cast<std::ptrdiff_t>(opt.padding.w);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.w)) dst[x] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

Tensor map_unary(const Tensor& x, auto&& fn) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

// Splits a shape around an axis into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (kernel > in + 2 * pad) throw ShapeError("kernel larger than padded extent");
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& opt) {
  const ConvGeometry g = conv_geometry(input, kernel, opt);
  require_shape(bias, {g.cout}, "conv2d bias");
  Tensor out({g.n, g.cout, g.ho, g.wo});
  const std::size_t patch = g.patch();
  const std::size_t npix = g.pixels();
  std::vector<Real> col(patch * npix);
  const Real* w = kernel.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * g.cin * g.h * g.w, g, opt, col.data());
    Real* o = out.data().data() + n * g.cout * npix;
    for (std::size_t co = 0; co < g.cout; ++co) {
      Real* orow = o + co * npix;
      std::fill(orow, orow + npix, bias[co]);
      for (std::size_t r = 0; r < patch; ++r) {
        const Real wr = w[co * patch + r];
        const Real* crow = col.data() + r * npix;
        for (std::size_t p = 0; p < npix; ++p) orow[p] += wr * crow[p];
      }
    }
  }
  return out;
}

std::vector<Tensor> conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                    const Conv2dOptions& opt) {
  const ConvGeometry g = conv_geometry(input, kernel, opt);
  require_shape(grad_out, {g.n, g.cout, g.ho, g.wo}, "conv2d grad_out");
  const std::size_t patch = g.patch();
  const std::size_t npix = g.pixels();
  Tensor dx(input.shape());
  Tensor dw(kernel.shape());
  Tensor db({g.cout});
  std::vector<Real> col(patch * npix);
  std::vector<Real> dcol(patch * npix);
  const Real* w = kernel.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * g.cin * g.h * g.w, g, opt, col.data());
    const Real* go = grad_out.data().data() + n * g.cout * npix;
    std::fill(dcol.begin(), dcol.end(), Real(0));
    for (std::size_t co = 0; co < g.cout; ++co) {
      const Real* grow = go + co * npix;
      Real bsum = 0;
      for (std::size_t p = 0; p < npix; ++p) bsum += grow[p];
      db[co] += bsum;
      for (std::size_t r = 0; r < patch; ++r) {
        const Real* crow = col.data() + r * npix;
        Real acc = 0;
        for (std::size_t p = 0; p < npix; ++p) acc += grow[p] * crow[p];
        dw[co * patch + r] += acc;
        const Real wr = w[co * patch + r];
        Real* drow = dcol.data() + r * npix;
        for (std::size_t p = 0; p < npix; ++p) drow[p] += wr * grow[p];
      }
    }
    col2im_add(dcol.data(), g, opt, dx.data().data() + n * g.cin * g.h * g.w);
  }
  return {std::move(dx), std::move(dw), std::move(db)};
}

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) {
    throw ShapeError("linear: input width " + std::to_string(din) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  require_shape(bias, {dout}, "linear bias");
  Tensor out({n, dout});
  const Real* x = input.data().data();
  const Real* w = weight.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const Real* xr = x + r * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const Real* wo = w + o * din;
      Real acc = 0;
      for (std::size_t i = 0; i < din; ++i) acc += xr[i] * wo[i];
      out[r * dout + o] = acc + bias[o];
    }
  }
  return out;
}

Var conv2d(Var input, Var kernel, Var bias, const Conv2dOptions& opt) {
  Tape& tape = *input.tape;
  Tensor out = conv2d_forward(input.value(), kernel.value(), bias.value(), opt);
  const std::size_t xi = input.id, ki = kernel.id;
  return tape.record("conv2d", std::move(out), {input, kernel, bias},
                     [xi, ki, opt](const Tape& t, const Tensor& g) {
                       return conv2d_backward(t.value(xi), t.value(ki), g, opt);
                     });
}

Var linear(Var input, Var weight, Var bias) {
  Tape& tape = *input.tape;
  Tensor out = linear_forward(input.value(), weight.value(), bias.value());
  const std::size_t xi = input.id, wi = weight.id;
  return tape.record("linear", std::move(out), {input, weight, bias}, [xi, wi](const Tape& t, const Tensor& g) {
    const Tensor& x = t.value(xi);
    const Tensor& w = t.value(wi);
    const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
    Tensor dx, dw, db;
    if (t.requires_grad(xi)) {
      dx = Tensor({n, din});
      for (std::size_t r = 0; r < n; ++r) {
        Real* dxr = dx.data().data() + r * din;
        for (std::size_t o = 0; o < dout; ++o) {
          const Real gro = g[r * dout + o];
          const Real* wo = w.data().data() + o * din;
          for (std::size_t i = 0; i < din; ++i) dxr[i] += gro * wo[i];
        }
      }
    }
    dw = Tensor({dout, din});
    db = Tensor({dout});
    for (std::size_t r = 0; r < n; ++r) {
      const Real* xr = x.data().data() + r * din;
      for (std::size_t o = 0; o < dout; ++o) {
        const Real gro = g[r * dout + o];
        db[o] += gro;
        Real* dwo = dw.data().data() + o * din;
        for (std::size_t i = 0; i < din; ++i) dwo[i] += gro * xr[i];
      }
    }
    return std::vector<Tensor>{std::move(dx), std::move(dw), std::move(db)};
  });
}

Var leaky_relu(Var x, Real slope) {
  if (!(slope > 0 && slope < 1)) throw std::invalid_argument("leaky_relu slope must be in (0,1)");
  Tensor out = map_unary(x.value(), [slope](Real v) { return v >= 0 ? v : slope * v; });
  if (x.tape->tracking_branches())
    for (Real v : x.value().data()) x.tape->note_branch(v >= 0);
  const std::size_t xi = x.id;
  return x.tape->record("leaky_relu", std::move(out), {x}, [xi, slope](const Tape& t, const Tensor& g) {
    const Tensor& in = t.value(xi);
    Tensor d(g.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = in[i] >= 0 ? g[i] : slope * g[i];
    return std::vector<Tensor>{std::move(d)};
  });
}

Var dropout(Var x, Real p, Mode mode, Rng& rng) {
  if (!(p >= 0 && p < 1)) throw std::invalid_argument("dropout probability must be in [0,1)");
  if (mode == Mode::kEval || p == 0) return x;
  Tensor mask(x.shape());
  const Real keep_scale = Real(1) / (Real(1) - p);
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < p ? Real(0) : keep_scale;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return x.tape->record("dropout", std::move(out), {x}, [mask = std::move(mask)](const Tape&, const Tensor& g) {
    Tensor d = g;
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= mask[i];
    return std::vector<Tensor>{std::move(d)};
  });
}

Var sigmoid(Var x) {
  Tensor out = map_unary(x.value(), [](Real v) {
    if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
    const Real e = std::exp(v);
    return e / (Real(1) + e);
  });
  const std::size_t oi = x.tape->size();
  return x.tape->record("sigmoid", std::move(out), {x}, [oi](const Tape& t, const Tensor& g) {
    const Tensor& s = t.value(oi);
    Tensor d(g.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * s[i] * (Real(1) - s[i]);
    return std::vector<Tensor>{std::move(d)};
  });
}

Var log(Var x) {
  for (Real v : x.value().data()) {
    if (!(v > 0)) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  Tensor out = map_unary(x.value(), [](Real v) { return std::log(v); });
  const std::size_t xi = x.id;
  return x.tape->record("log", std::move(out), {x}, [xi](const Tape& t, const Tensor& g) {
    const Tensor& in = t.value(xi);
    Tensor d(g.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] / in[i];
    return std::vector<Tensor>{std::move(d)};
  });
}

Var clamp(Var x, Real lo, Real hi) {
  Tensor out = map_unary(x.value(), [lo, hi](Real v) { return std::clamp(v, lo, hi); });
  if (x.tape->tracking_branches())
    for (Real v : x.value().data()) x.tape->note_branch(v < lo ? 0 : v > hi ? 2 : 1);
  const std::size_t xi = x.id;
  return x.tape->record("clamp", std::move(out), {x}, [xi, lo, hi](const Tape& t, const Tensor& g) {
    const Tensor& in = t.value(xi);
    Tensor d(g.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = (in[i] >= lo && in[i] <= hi) ? g[i] : Real(0);
    return std::vector<Tensor>{std::move(d)};
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bd[i];
  return a.tape->record("add", std::move(out), {a, b},
                        [](const Tape&, const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bd[i];
  const std::size_t bi = b.id;
  return a.tape->record("sub", std::move(out), {a, b}, [bi](const Tape& t, const Tensor& g) {
    Tensor gb;
    if (t.requires_grad(bi)) {
      gb = g;
      for (auto& v : gb.data()) v = -v;
    }
    return std::vector<Tensor>{g, std::move(gb)};
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bd[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record("mul", std::move(out), {a, b}, [ai, bi](const Tape& t, const Tensor& g) {
    Tensor ga, gb;
    if (t.requires_grad(ai)) {
      ga = g;
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= t.value(bi)[i];
    }
    if (t.requires_grad(bi)) {
      gb = g;
      for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] *= t.value(ai)[i];
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

Var scale(Var x, Real s) {
  Tensor out = map_unary(x.value(), [s](Real v) { return s * v; });
  return x.tape->record("scale", std::move(out), {x}, [s](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{map_unary(g, [s](Real v) { return s * v; })};
  });
}

Var add_scalar(Var x, Real s) {
  Tensor out = map_unary(x.value(), [s](Real v) { return v + s; });
  return x.tape->record("add_scalar", std::move(out), {x},
                        [](const Tape&, const Tensor& g) { return std::vector<Tensor>{g}; });
}

Var square(Var x) {
  Tensor out = map_unary(x.value(), [](Real v) { return v * v; });
  const std::size_t xi = x.id;
  return x.tape->record("square", std::move(out), {x}, [xi](const Tape& t, const Tensor& g) {
    const Tensor& in = t.value(xi);
    Tensor d(g.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = Real(2) * in[i] * g[i];
    return std::vector<Tensor>{std::move(d)};
  });
}

Var sum(Var x) {
  Real acc = 0;
  for (Real v : x.value().data()) acc += v;
  Shape shape = x.shape();
  return x.tape->record("sum", Tensor::scalar(acc), {x}, [shape](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{Tensor::full(shape, g[0])};
  });
}

Var mean(Var x) { return scale(sum(x), Real(1) / static_cast<Real>(x.value().numel())); }

Var sum_squares(Var x) {
  Real acc = 0;
  for (Real v : x.value().data()) acc += v * v;
  const std::size_t xi = x.id;
  return x.tape->record("sum_squares", Tensor::scalar(acc), {x}, [xi](const Tape& t, const Tensor& g) {
    return std::vector<Tensor>{map_unary(t.value(xi), [s = g[0]](Real v) { return Real(2) * s * v; })};
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  Shape original = x.shape();
  return x.tape->record("reshape", std::move(out), {x}, [original](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{g.reshaped(original)};
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(first));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: extent mismatch " + shape_str(s) + " vs " + shape_str(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  Tensor out(out_shape);
  const AxisSplit os = split_axis(out_shape, axis);
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t e = p.shape()[axis];
    const Real* src = p.value().data().data();
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(src + o * e * os.inner, e * os.inner, out.data().data() + (o * os.extent + offset) * os.inner);
    }
    offset += e;
    extents.push_back(e);
  }
  std::vector<Shape> shapes;
  for (const Var& p : parts) shapes.push_back(p.shape());
  return parts.front().tape->record(
      "concat", std::move(out), parts, [os, extents, shapes](const Tape&, const Tensor& g) {
        std::vector<Tensor> grads;
        std::size_t offset = 0;
        for (std::size_t k = 0; k < extents.size(); ++k) {
          Tensor d(shapes[k]);
          const std::size_t e = extents[k];
          for (std::size_t o = 0; o < os.outer; ++o) {
            std::copy_n(g.data().data() + (o * os.extent + offset) * os.inner, e * os.inner,
                        d.data().data() + o * e * os.inner);
          }
          offset += e;
          grads.push_back(std::move(d));
        }
        return grads;
      });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in_shape = x.shape();
  if (axis >= in_shape.size()) throw ShapeError("slice axis out of range for " + shape_str(in_shape));
  if (begin >= end || end > in_shape[axis]) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis " +
                     std::to_string(axis) + " of " + shape_str(in_shape));
  }
  Shape out_shape = in_shape;
  out_shape[axis] = end - begin;
  const AxisSplit is = split_axis(in_shape, axis);
  const std::size_t len = (end - begin) * is.inner;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < is.outer; ++o) {
    std::copy_n(x.value().data().data() + (o * is.extent + begin) * is.inner, len, out.data().data() + o * len);
  }
  return x.tape->record("slice", std::move(out), {x}, [in_shape, is, begin, len](const Tape&, const Tensor& g) {
    Tensor d(in_shape);
    for (std::size_t o = 0; o < is.outer; ++o) {
      std::copy_n(g.data().data() + o * len, len, d.data().data() + (o * is.extent + begin) * is.inner);
    }
    return std::vector<Tensor>{std::move(d)};
  });
}

Var select(Var x, std::size_t axis, std::size_t index) {
  Var s = slice(x, axis, index, index + 1);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  return reshape(s, std::move(shape));
}

Var stack(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  std::vector<Var> expanded;
  expanded.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw ShapeError("stack: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(parts.front().shape()));
    }
    Shape s = p.shape();
    if (axis > s.size()) throw ShapeError("stack axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

}  // namespace convseq
