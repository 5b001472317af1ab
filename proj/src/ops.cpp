#include "abcran/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abcran/errors.hpp"

namespace abcran::ad {
namespace {

Tape& tape_of(const Var& a) {
  if (a.tape == nullptr) throw TapeError("unbound variable");
  return *a.tape;
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw TapeError("operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t dim = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

// C[m x n] += A[m x k] * B[k x n]
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class Fwd, class Deriv>
Var unary(const char* op, Var a, Fwd f, Deriv dydx) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id;
  return t.record(op, std::move(y), {a}, [ia, dydx](Tape& tp, const Tensor& yv, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (ga == nullptr) return;
    const Tensor& xv = tp.value_at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dydx(xv[i], yv[i]);
  });
}

// Valid output positions l with 0 <= l*stride + tap - pad < len.
std::pair<std::size_t, std::size_t> conv_range(std::size_t len, std::size_t out_len, std::size_t stride,
                                               std::size_t tap, std::size_t pad) {
  std::size_t lo = 0;
  if (pad > tap) lo = (pad - tap + stride - 1) / stride;
  std::size_t hi = 0;
  if (len + pad > tap) hi = (len + pad - tap + stride - 1) / stride;
  hi = std::min(hi, out_len);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record("add", std::move(y), {a, b}, [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record("sub", std::move(y), {a, b}, [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
    tp.accumulate(ia, g);
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record("mul", std::move(y), {a, b}, [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
    const Tensor& xv = tp.value_at(ia);
    const Tensor& zv = tp.value_at(ib);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * zv[i];
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * xv[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_eps(Var a, double eps) {
  return unary("sqrt", a, [eps](double x) { return std::sqrt(std::max(x, eps)); },
               [eps](double x, double y) { return x > eps ? 0.5 / y : 0.0; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor y({m, n});
  mm_nn(a.value().data().data(), b.value().data().data(), y.data().data(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return t.record("matmul", std::move(y), {a, b}, [ia, ib, m, k, n](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      mm_nt(g.data().data(), tp.value_at(ib).data().data(), ga->data().data(), m, n, k);
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      mm_tn(tp.value_at(ia).data().data(), g.data().data(), gb->data().data(), k, m, n);
    }
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  Tape& t = tape_of(a, b);
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t bk = transpose_b ? b.shape()[2] : b.shape()[1];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  if (b.shape()[0] != batch || bk != k) {
    throw ShapeError("bmm: incompatible operands " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor y({batch, m, n});
  const double* av = a.value().data().data();
  const double* bv = b.value().data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      mm_nt(av + s * m * k, bv + s * n * k, y.data().data() + s * m * n, m, k, n);
    } else {
      mm_nn(av + s * m * k, bv + s * k * n, y.data().data() + s * m * n, m, k, n);
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return t.record("bmm", std::move(y), {a, b},
                  [ia, ib, batch, m, k, n, transpose_b](Tape& tp, const Tensor&, const Tensor& g) {
                    const double* gv = g.data().data();
                    const double* xa = tp.value_at(ia).data().data();
                    const double* xb = tp.value_at(ib).data().data();
                    Tensor* ga = tp.grad_buffer(ia);
                    Tensor* gb = tp.grad_buffer(ib);
                    for (std::size_t s = 0; s < batch; ++s) {
                      const double* gs = gv + s * m * n;
                      if (transpose_b) {
                        if (ga) mm_nn(gs, xb + s * n * k, ga->data().data() + s * m * k, m, n, k);
                        if (gb) mm_tn(gs, xa + s * m * k, gb->data().data() + s * n * k, n, m, k);
                      } else {
                        if (ga) mm_nt(gs, xb + s * k * n, ga->data().data() + s * m * k, m, n, k);
                        if (gb) mm_tn(xa + s * m * k, gs, gb->data().data() + s * k * n, k, m, n);
                      }
                    }
                  });
}

Var dense(Var x, Var weight, Var bias) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  require_rank(x, 2, "dense");
  require_rank(weight, 2, "dense");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out = weight.shape()[1];
  if (weight.shape()[0] != in || bias.value().size() != out) {
    throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  Tensor y({batch, out});
  const auto bv = bias.value().data();
  for (std::size_t r = 0; r < batch; ++r) std::copy(bv.begin(), bv.end(), y.data().begin() + r * out);
  mm_nn(x.value().data().data(), weight.value().data().data(), y.data().data(), batch, in, out);
  const std::size_t ix = x.id, iw = weight.id, ib = bias.id;
  return t.record("dense", std::move(y), {x, weight, bias},
                  [ix, iw, ib, batch, in, out](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* gx = tp.grad_buffer(ix)) {
                      mm_nt(g.data().data(), tp.value_at(iw).data().data(), gx->data().data(), batch, out, in);
                    }
                    if (Tensor* gw = tp.grad_buffer(iw)) {
                      mm_tn(tp.value_at(ix).data().data(), g.data().data(), gw->data().data(), in, batch, out);
                    }
                    if (Tensor* gb = tp.grad_buffer(ib)) {
                      for (std::size_t r = 0; r < batch; ++r) {
                        for (std::size_t j = 0; j < out; ++j) (*gb)[j] += g[r * out + j];
                      }
                    }
                  });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  require_rank(x, 3, "conv1d");
  require_rank(weight, 3, "conv1d");
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  const std::size_t batch = x.shape()[0], cin = x.shape()[1], len = x.shape()[2];
  const std::size_t cout = weight.shape()[0], ksize = weight.shape()[2];
  if (weight.shape()[1] != cin || bias.value().size() != cout) {
    throw ShapeError("conv1d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  if (len + 2 * pad < ksize) throw ShapeError("conv1d: kernel longer than padded input");
  const std::size_t out_len = (len + 2 * pad - ksize) / stride + 1;

  Tensor y({batch, cout, out_len});
  const double* xv = x.value().data().data();
  const double* wv = weight.value().data().data();
  const double* bv = bias.value().data().data();
  double* yv = y.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* yrow = yv + (b * cout + o) * out_len;
      std::fill(yrow, yrow + out_len, bv[o]);
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xrow = xv + (b * cin + c) * len;
        const double* wrow = wv + (o * cin + c) * ksize;
        for (std::size_t tap = 0; tap < ksize; ++tap) {
          const double w = wrow[tap];
          const auto [lo, hi] = conv_range(len, out_len, stride, tap, pad);
          for (std::size_t l = lo; l < hi; ++l) yrow[l] += w * xrow[l * stride + tap - pad];
        }
      }
    }
  }

  const std::size_t ix = x.id, iw = weight.id, ib = bias.id;
  return t.record(
      "conv1d", std::move(y), {x, weight, bias},
      [=](Tape& tp, const Tensor&, const Tensor& g) {
        const double* gv = g.data().data();
        const double* xin = tp.value_at(ix).data().data();
        const double* win = tp.value_at(iw).data().data();
        Tensor* gx = tp.grad_buffer(ix);
        Tensor* gw = tp.grad_buffer(iw);
        Tensor* gb = tp.grad_buffer(ib);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t o = 0; o < cout; ++o) {
            const double* grow = gv + (b * cout + o) * out_len;
            if (gb) {
              double s = 0.0;
              for (std::size_t l = 0; l < out_len; ++l) s += grow[l];
              (*gb)[o] += s;
            }
            for (std::size_t c = 0; c < cin; ++c) {
              const std::size_t xoff = (b * cin + c) * len;
              const std::size_t woff = (o * cin + c) * ksize;
              for (std::size_t tap = 0; tap < ksize; ++tap) {
                const auto [lo, hi] = conv_range(len, out_len, stride, tap, pad);
                if (gw) {
                  double s = 0.0;
                  for (std::size_t l = lo; l < hi; ++l) s += grow[l] * xin[xoff + l * stride + tap - pad];
                  (*gw)[woff + tap] += s;
                }
                if (gx) {
                  const double w = win[woff + tap];
                  double* gxr = gx->data().data() + xoff;
                  for (std::size_t l = lo; l < hi; ++l) gxr[l * stride + tap - pad] += grow[l] * w;
                }
              }
            }
          }
        }
      });
}

Var maxpool1d(Var x) {
  Tape& t = tape_of(x);
  const Shape& in_shape = x.shape();
  if (in_shape.empty() || in_shape.back() % 2 != 0) {
    throw ShapeError("maxpool1d: last axis must have even length, got " + shape_str(in_shape));
  }
  Shape out_shape = in_shape;
  out_shape.back() /= 2;
  Tensor y(out_shape);
  std::vector<std::size_t> argmax(y.size());
  const Tensor& xv = x.value();
  for (std::size_t j = 0; j < y.size(); ++j) {
    const std::size_t lo = 2 * j;
    const std::size_t pick = xv[lo + 1] > xv[lo] ? lo + 1 : lo;
    argmax[j] = pick;
    y[j] = xv[pick];
  }
  const std::size_t ix = x.id;
  return t.record("maxpool1d", std::move(y), {x},
                  [ix, argmax = std::move(argmax)](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor* gx = tp.grad_buffer(ix);
                    if (gx == nullptr) return;
                    for (std::size_t j = 0; j < g.size(); ++j) (*gx)[argmax[j]] += g[j];
                  });
}

Var upsample1d(Var x) {
  Tape& t = tape_of(x);
  Shape out_shape = x.shape();
  if (out_shape.empty()) throw ShapeError("upsample1d: scalar input");
  out_shape.back() *= 2;
  const Tensor& xv = x.value();
  Tensor y(out_shape);
  for (std::size_t j = 0; j < xv.size(); ++j) {
    y[2 * j] = xv[j];
    y[2 * j + 1] = xv[j];
  }
  const std::size_t ix = x.id;
  return t.record("upsample1d", std::move(y), {x}, [ix](Tape& tp, const Tensor&, const Tensor& g) {
    Tensor* gx = tp.grad_buffer(ix);
    if (gx == nullptr) return;
    for (std::size_t j = 0; j < gx->size(); ++j) (*gx)[j] += g[2 * j] + g[2 * j + 1];
  });
}

Var softmax(Var x, std::size_t axis) {
  Tape& t = tape_of(x);
  const AxisSplit s = split_at(x.shape(), axis, "softmax");
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.dim * s.inner + in;
      double mx = xv[base];
      for (std::size_t d = 1; d < s.dim; ++d) mx = std::max(mx, xv[base + d * s.inner]);
      double z = 0.0;
      for (std::size_t d = 0; d < s.dim; ++d) {
        const double e = std::exp(xv[base + d * s.inner] - mx);
        y[base + d * s.inner] = e;
        z += e;
      }
      for (std::size_t d = 0; d < s.dim; ++d) y[base + d * s.inner] /= z;
    }
  }
  const std::size_t ix = x.id;
  return t.record("softmax", std::move(y), {x}, [ix, s](Tape& tp, const Tensor& yv, const Tensor& g) {
    Tensor* gx = tp.grad_buffer(ix);
    if (gx == nullptr) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.dim * s.inner + in;
        double dot = 0.0;
        for (std::size_t d = 0; d < s.dim; ++d) dot += g[base + d * s.inner] * yv[base + d * s.inner];
        for (std::size_t d = 0; d < s.dim; ++d) {
          const std::size_t k = base + d * s.inner;
          (*gx)[k] += yv[k] * (g[k] - dot);
        }
      }
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = tape_of(parts[0]);
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> dims;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    const Shape& sh = p.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = i == axis || sh[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible part " + shape_str(sh) + " vs " + shape_str(first));
    dims.push_back(sh[axis]);
    out_shape[axis] += sh[axis];
  }
  const AxisSplit s = split_at(out_shape, axis, "concat");
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = parts[p].value();
    const std::size_t block = dims[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data().begin() + o * block, block, y.data().begin() + o * s.dim * s.inner + offset);
    }
    offset += block;
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return t.record("concat", std::move(y), parts, [ids, dims, s](Tape& tp, const Tensor&, const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t block = dims[p] * s.inner;
      if (Tensor* gp = tp.grad_buffer(ids[p])) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = g.data().data() + o * s.dim * s.inner + offset;
          double* dst = gp->data().data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += block;
    }
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(x);
  const AxisSplit s = split_at(x.shape(), axis, "slice");
  if (begin >= end || end > s.dim) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for axis of " +
                     std::to_string(s.dim));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  const Tensor& xv = x.value();
  Tensor y(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data().begin() + o * s.dim * s.inner + begin * s.inner, block, y.data().begin() + o * block);
  }
  const std::size_t ix = x.id;
  return t.record("slice", std::move(y), {x}, [ix, s, begin, block](Tape& tp, const Tensor&, const Tensor& g) {
    Tensor* gx = tp.grad_buffer(ix);
    if (gx == nullptr) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = gx->data().data() + o * s.dim * s.inner + begin * s.inner;
      const double* src = g.data().data() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  Tensor y = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return t.record("reshape", std::move(y), {x}, [ix](Tape& tp, const Tensor&, const Tensor& g) {
    tp.accumulate(ix, g);
  });
}

Var mean(Var x, std::size_t axis) {
  Tape& t = tape_of(x);
  const AxisSplit s = split_at(x.shape(), axis, "mean");
  const Tensor& xv = x.value();
  Tensor y(drop_axis(x.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double acc = 0.0;
      for (std::size_t d = 0; d < s.dim; ++d) acc += xv[(o * s.dim + d) * s.inner + in];
      y[o * s.inner + in] = acc / static_cast<double>(s.dim);
    }
  }
  const std::size_t ix = x.id;
  return t.record("mean", std::move(y), {x}, [ix, s](Tape& tp, const Tensor&, const Tensor& g) {
    Tensor* gx = tp.grad_buffer(ix);
    if (gx == nullptr) return;
    const double inv = 1.0 / static_cast<double>(s.dim);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t d = 0; d < s.dim; ++d) {
        for (std::size_t in = 0; in < s.inner; ++in) (*gx)[(o * s.dim + d) * s.inner + in] += g[o * s.inner + in] * inv;
      }
    }
  });
}

Var variance(Var x, std::size_t axis) {
  Tape& t = tape_of(x);
  const AxisSplit s = split_at(x.shape(), axis, "variance");
  const Tensor& xv = x.value();
  Tensor y(drop_axis(x.shape(), axis));
  Tensor means(y.shape());
  const double inv = 1.0 / static_cast<double>(s.dim);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double m = 0.0;
      for (std::size_t d = 0; d < s.dim; ++d) m += xv[(o * s.dim + d) * s.inner + in];
      m *= inv;
      double v = 0.0;
      for (std::size_t d = 0; d < s.dim; ++d) {
        const double c = xv[(o * s.dim + d) * s.inner + in] - m;
        v += c * c;
      }
      means[o * s.inner + in] = m;
      y[o * s.inner + in] = v * inv;
    }
  }
  const std::size_t ix = x.id;
  return t.record("variance", std::move(y), {x},
                  [ix, s, inv, means = std::move(means)](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor* gx = tp.grad_buffer(ix);
                    if (gx == nullptr) return;
                    const Tensor& xin = tp.value_at(ix);
                    for (std::size_t o = 0; o < s.outer; ++o) {
                      for (std::size_t d = 0; d < s.dim; ++d) {
                        for (std::size_t in = 0; in < s.inner; ++in) {
                          const std::size_t k = (o * s.dim + d) * s.inner + in;
                          const std::size_t r = o * s.inner + in;
                          (*gx)[k] += g[r] * 2.0 * (xin[k] - means[r]) * inv;
                        }
                      }
                    }
                  });
}

Var sum_all(Var x) {
  Tape& t = tape_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t ix = x.id;
  return t.record("sum_all", Tensor::scalar(acc), {x}, [ix](Tape& tp, const Tensor&, const Tensor& g) {
    Tensor* gx = tp.grad_buffer(ix);
    if (gx == nullptr) return;
    for (auto& v : gx->data()) v += g[0];
  });
}

Var mean_all(Var x) {
  const double n = static_cast<double>(x.value().size());
  Tape& t = tape_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t ix = x.id;
  return t.record("mean_all", Tensor::scalar(acc / n), {x}, [ix, n](Tape& tp, const Tensor&, const Tensor& g) {
    Tensor* gx = tp.grad_buffer(ix);
    if (gx == nullptr) return;
    for (auto& v : gx->data()) v += g[0] / n;
  });
}

}  // namespace abcran::ad
