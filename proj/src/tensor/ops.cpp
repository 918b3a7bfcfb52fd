#include "tkp/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "tkp/errors.hpp"
#include "tkp/parallel.hpp"

namespace tkp {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
ConstMatrixMap<T> as_matrix(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Products run on Eigen-owned copies. Eigen starts its vectorized loops at
// the first aligned address, so working on maps of std::vector storage makes
// the summation order (and the last bits of the result) depend on where the
// heap put each buffer.
template <typename T>
RowMatrix<T> owned(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return as_matrix(v, rows, cols);
}

template <typename T>
void add_into(std::vector<T>& dst, const RowMatrix<T>& src) {
  const T* p = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += p[i];
}

template <typename T>
std::vector<T> to_vector(const RowMatrix<T>& m) {
  return std::vector<T>(m.data(), m.data() + m.size());
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_string(s));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> elementwise(ElementwiseKind kind, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError("elementwise: cannot broadcast " + shape_string(b.shape()) + " onto " +
                         shape_string(a.shape()));
  }
  const auto& av = a.node()->values;
  const auto& bv = b.node()->values;
  const std::size_t n = av.size();
  const std::size_t m = bv.size();
  std::vector<T> out(n);
  if (m == 0 && n != 0) throw DimensionError("elementwise: empty broadcast operand");
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i];
    const T y = bv[i % m];
    switch (kind) {
      case ElementwiseKind::add: out[i] = x + y; break;
      case ElementwiseKind::sub: out[i] = x - y; break;
      case ElementwiseKind::mul: out[i] = x * y; break;
    }
  }
  const char* name = kind == ElementwiseKind::add ? "add" : kind == ElementwiseKind::sub ? "sub" : "mul";
  return make_op_result<T>(name, a.shape(), std::move(out), {a, b}, [kind, m](Node<T>& self) {
    auto& in_a = *self.inputs[0];
    auto& in_b = *self.inputs[1];
    const auto& g = self.grad;
    if (in_a.requires_grad) {
      auto& ga = in_a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += kind == ElementwiseKind::mul ? g[i] * in_b.values[i % m] : g[i];
      }
    }
    if (in_b.requires_grad) {
      auto& gb = in_b.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case ElementwiseKind::add: gb[i % m] += g[i]; break;
          case ElementwiseKind::sub: gb[i % m] -= g[i]; break;
          case ElementwiseKind::mul: gb[i % m] += g[i] * in_a.values[i]; break;
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_op_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));
  }
  const RowMatrix<T> A = owned(a.node()->values, m, k);
  const RowMatrix<T> B = owned(b.node()->values, k, n);
  RowMatrix<T> C(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  parallel_for(m, [&](std::size_t lo, std::size_t hi) {
    const auto rows = static_cast<Eigen::Index>(hi - lo);
    C.middleRows(static_cast<Eigen::Index>(lo), rows).noalias() = A.middleRows(static_cast<Eigen::Index>(lo), rows) * B;
  }, 64);
  return make_op_result<T>("matmul", {m, n}, to_vector(C), {a, b}, [m, k, n](Node<T>& self) {
    auto& in_a = *self.inputs[0];
    auto& in_b = *self.inputs[1];
    const RowMatrix<T> G = owned(self.grad, m, n);
    if (in_a.requires_grad) {
      const RowMatrix<T> B = owned(in_b.values, k, n);
      RowMatrix<T> GA(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
      parallel_for(m, [&](std::size_t lo, std::size_t hi) {
        const auto rows = static_cast<Eigen::Index>(hi - lo);
        GA.middleRows(static_cast<Eigen::Index>(lo), rows).noalias() =
            G.middleRows(static_cast<Eigen::Index>(lo), rows) * B.transpose();
      }, 64);
      add_into(in_a.ensure_grad(), GA);
    }
    if (in_b.requires_grad) {
      const RowMatrix<T> A = owned(in_a.values, m, k);
      const RowMatrix<T> GB = A.transpose() * G;
      add_into(in_b.ensure_grad(), GB);
    }
  });
}

namespace {

// Unfolds a C x H x W map into (C*k*k) x (H*W) patch columns.
template <typename T>
void im2col(const std::vector<T>& in, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t k, std::size_t pad, std::vector<T>& cols) {
  cols.assign(channels * k * k * h * w, T(0));
  const auto hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = cols.data() + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad);
        const auto dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
        const std::size_t x_lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
        const std::size_t x_hi = dx > 0 ? (w > static_cast<std::size_t>(dx) ? w - dx : 0) : w;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* src = in.data() + c * hw + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = x_lo; x < x_hi; ++x) {
            dst[y * w + x] = src[static_cast<std::ptrdiff_t>(x) + dx];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patch columns back into a C x H x W map.
template <typename T>
void col2im_add(const std::vector<T>& cols, std::size_t channels, std::size_t h, std::size_t w,
                std::size_t k, std::size_t pad, std::vector<T>& out) {
  const auto hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = cols.data() + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad);
        const auto dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
        const std::size_t x_lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
        const std::size_t x_hi = dx > 0 ? (w > static_cast<std::size_t>(dx) ? w - dx : 0) : w;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = out.data() + c * hw + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = x_lo; x < x_hi; ++x) {
            dst[static_cast<std::ptrdiff_t>(x) + dx] += src[y * w + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                      const BasicTensor<T>& bias, std::size_t padding) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(kernels.shape(), 4, "conv2d kernels");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != c_in) {
    throw DimensionError("conv2d: kernels " + shape_string(kernels.shape()) + " expect " +
                         std::to_string(kernels.dim(1)) + " input channels, input has " +
                         std::to_string(c_in));
  }
  if (kernels.dim(3) != k || k % 2 == 0) {
    throw ContractError("conv2d: kernels must be square with odd size, got " +
                        shape_string(kernels.shape()));
  }
  if (padding != (k - 1) / 2) {
    throw ContractError("conv2d: padding must be (k-1)/2 = " + std::to_string((k - 1) / 2));
  }
  if (bias.numel() != c_out) {
    throw DimensionError("conv2d: bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(c_out) + " output channels");
  }
  const std::size_t hw = h * w;
  const std::size_t patch = c_in * k * k;
  auto cols = std::make_shared<std::vector<T>>();
  im2col(input.node()->values, c_in, h, w, k, padding, *cols);

  const RowMatrix<T> W = owned(kernels.node()->values, c_out, patch);
  const RowMatrix<T> X = owned(*cols, patch, hw);
  RowMatrix<T> Y(static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(hw));
  const auto& bv = bias.node()->values;
  parallel_for(c_out, [&](std::size_t lo, std::size_t hi) {
    const auto rows = static_cast<Eigen::Index>(hi - lo);
    Y.middleRows(static_cast<Eigen::Index>(lo), rows).noalias() = W.middleRows(static_cast<Eigen::Index>(lo), rows) * X;
  });
  std::vector<T> out = to_vector(Y);
  for (std::size_t co = 0; co < c_out; ++co) {
    for (std::size_t i = 0; i < hw; ++i) out[co * hw + i] += bv[co];
  }
  return make_op_result<T>(
      "conv2d", {c_out, h, w}, std::move(out), {input, kernels, bias},
      [cols, c_in, c_out, h, w, k, padding, hw, patch](Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& ker = *self.inputs[1];
        auto& b = *self.inputs[2];
        const RowMatrix<T> G = owned(self.grad, c_out, hw);
        if (ker.requires_grad) {
          const RowMatrix<T> X = owned(*cols, patch, hw);
          const RowMatrix<T> GW = G * X.transpose();
          add_into(ker.ensure_grad(), GW);
        }
        if (b.requires_grad) {
          auto& gb = b.ensure_grad();
          for (std::size_t co = 0; co < c_out; ++co) {
            T acc = 0;
            for (std::size_t i = 0; i < hw; ++i) acc += self.grad[co * hw + i];
            gb[co] += acc;
          }
        }
        if (in.requires_grad) {
          const RowMatrix<T> W = owned(ker.values, c_out, patch);
          const RowMatrix<T> GX = W.transpose() * G;
          col2im_add(to_vector(GX), c_in, h, w, k, padding, in.ensure_grad());
        }
      });
}

namespace {

struct LerpTap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Source taps for doubling a length-n axis with half-pixel centers.
std::vector<LerpTap> upsample_taps(std::size_t n) {
  std::vector<LerpTap> taps(2 * n);
  for (std::size_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > n - 1) lo = n - 1;
    const std::size_t hi = std::min(lo + 1, n - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> upsample_bilinear_2x(const BasicTensor<T>& input) {
  require_rank(input.shape(), 3, "upsample_bilinear_2x");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h == 0 || w == 0) throw DimensionError("upsample_bilinear_2x: empty spatial dims");
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<T> out(c * oh * ow);
  const auto& in = input.node()->values;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = in.data() + ch * h * w;
    T* dst = out.data() + ch * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T fy = static_cast<T>(ty[oy].frac);
      const T* r0 = src + ty[oy].lo * w;
      const T* r1 = src + ty[oy].hi * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T fx = static_cast<T>(tx[ox].frac);
        const T top = (T(1) - fx) * r0[tx[ox].lo] + fx * r0[tx[ox].hi];
        const T bot = (T(1) - fx) * r1[tx[ox].lo] + fx * r1[tx[ox].hi];
        dst[oy * ow + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return make_op_result<T>("upsample_bilinear_2x", {c, oh, ow}, std::move(out), {input},
                           [ty, tx, c, h, w, oh, ow](Node<T>& self) {
                             auto& g_in = self.inputs[0]->ensure_grad();
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               const T* g = self.grad.data() + ch * oh * ow;
                               T* dst = g_in.data() + ch * h * w;
                               for (std::size_t oy = 0; oy < oh; ++oy) {
                                 const T fy = static_cast<T>(ty[oy].frac);
                                 T* r0 = dst + ty[oy].lo * w;
                                 T* r1 = dst + ty[oy].hi * w;
                                 for (std::size_t ox = 0; ox < ow; ++ox) {
                                   const T fx = static_cast<T>(tx[ox].frac);
                                   const T v = g[oy * ow + ox];
                                   r0[tx[ox].lo] += (T(1) - fy) * (T(1) - fx) * v;
                                   r0[tx[ox].hi] += (T(1) - fy) * fx * v;
                                   r1[tx[ox].lo] += fy * (T(1) - fx) * v;
                                   r1[tx[ox].hi] += fy * fx * v;
                                 }
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& input) {
  const auto& in = input.node()->values;
  std::vector<T> out(in.size());
  const char* name = "relu";
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
      break;
    case Activation::sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < in.size(); ++i) {
        // Branch on sign so exp never overflows.
        if (in[i] >= T(0)) {
          out[i] = T(1) / (T(1) + std::exp(-in[i]));
        } else {
          const T e = std::exp(in[i]);
          out[i] = e / (T(1) + e);
        }
      }
      break;
    case Activation::exponential:
      name = "exp";
      for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(std::min(in[i], static_cast<T>(kExpInputCeiling)));
      }
      break;
  }
  return make_op_result<T>(name, input.shape(), std::move(out), {input}, [kind](Node<T>& self) {
    auto& src = *self.inputs[0];
    auto& g_in = src.ensure_grad();
    const auto& y = self.values;
    for (std::size_t i = 0; i < g_in.size(); ++i) {
      switch (kind) {
        case Activation::relu:
          if (src.values[i] > T(0)) g_in[i] += self.grad[i];
          break;
        case Activation::sigmoid:
          g_in[i] += self.grad[i] * y[i] * (T(1) - y[i]);
          break;
        case Activation::exponential:
          if (src.values[i] < static_cast<T>(kExpInputCeiling)) g_in[i] += self.grad[i] * y[i];
          break;
      }
    }
  });
}

namespace {

struct BilinearTap {
  std::size_t i0, i1, j0, j1;
  double wa, wb;  // fractional offsets along each plane axis
};

BilinearTap bilinear_tap(double a, double b, std::size_t ra, std::size_t rb) {
  auto axis = [](double c, std::size_t r, std::size_t& lo, std::size_t& hi) {
    c = std::clamp(c, 0.0, 1.0);
    if (r == 1) {
      lo = hi = 0;
      return 0.0;
    }
    const double pos = c * static_cast<double>(r - 1);
    lo = std::min(static_cast<std::size_t>(std::floor(pos)), r - 2);
    hi = lo + 1;
    return pos - static_cast<double>(lo);
  };
  BilinearTap t{};
  t.wa = axis(a, ra, t.i0, t.i1);
  t.wb = axis(b, rb, t.j0, t.j1);
  return t;
}

}  // namespace

template <typename T>
BasicTensor<T> grid_sample_bilinear(const BasicTensor<T>& plane, const BasicTensor<T>& coords) {
  require_rank(plane.shape(), 3, "grid_sample_bilinear plane");
  require_rank(coords.shape(), 2, "grid_sample_bilinear coords");
  if (coords.dim(1) != 2) {
    throw DimensionError("grid_sample_bilinear: coords must be N x 2, got " + shape_string(coords.shape()));
  }
  const std::size_t d = plane.dim(0), ra = plane.dim(1), rb = plane.dim(2);
  const std::size_t n = coords.dim(0);
  const std::size_t stride = ra * rb;
  const auto& cv = coords.node()->values;
  auto taps = std::make_shared<std::vector<BilinearTap>>(n);
  for (std::size_t q = 0; q < n; ++q) {
    (*taps)[q] = bilinear_tap(static_cast<double>(cv[2 * q]), static_cast<double>(cv[2 * q + 1]), ra, rb);
  }
  std::vector<T> out(n * d);
  const auto& pv = plane.node()->values;
  for (std::size_t q = 0; q < n; ++q) {
    const auto& t = (*taps)[q];
    const T wa = static_cast<T>(t.wa), wb = static_cast<T>(t.wb);
    const T w00 = (T(1) - wa) * (T(1) - wb), w01 = (T(1) - wa) * wb;
    const T w10 = wa * (T(1) - wb), w11 = wa * wb;
    const std::size_t o00 = t.i0 * rb + t.j0, o01 = t.i0 * rb + t.j1;
    const std::size_t o10 = t.i1 * rb + t.j0, o11 = t.i1 * rb + t.j1;
    for (std::size_t c = 0; c < d; ++c) {
      const T* p = pv.data() + c * stride;
      out[q * d + c] = w00 * p[o00] + w01 * p[o01] + w10 * p[o10] + w11 * p[o11];
    }
  }
  return make_op_result<T>("grid_sample_bilinear", {n, d}, std::move(out), {plane, coords},
                           [taps, d, rb, stride](Node<T>& self) {
                             auto& src = *self.inputs[0];
                             if (!src.requires_grad) return;
                             auto& gp = src.ensure_grad();
                             const auto& g = self.grad;
                             for (std::size_t q = 0; q < taps->size(); ++q) {
                               const auto& t = (*taps)[q];
                               const T wa = static_cast<T>(t.wa), wb = static_cast<T>(t.wb);
                               const T w00 = (T(1) - wa) * (T(1) - wb), w01 = (T(1) - wa) * wb;
                               const T w10 = wa * (T(1) - wb), w11 = wa * wb;
                               const std::size_t o00 = t.i0 * rb + t.j0, o01 = t.i0 * rb + t.j1;
                               const std::size_t o10 = t.i1 * rb + t.j0, o11 = t.i1 * rb + t.j1;
                               for (std::size_t c = 0; c < d; ++c) {
                                 T* p = gp.data() + c * stride;
                                 const T v = g[q * d + c];
                                 p[o00] += w00 * v;
                                 p[o01] += w01 * v;
                                 p[o10] += w10 * v;
                                 p[o11] += w11 * v;
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> tensors, std::size_t axis) {
  if (tensors.empty()) throw DimensionError("concat: no tensors");
  const Shape& ref = tensors[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_string(ref));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk(tensors.size());
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const Shape& s = tensors[t].shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) {
      throw DimensionError("concat: " + shape_string(s) + " incompatible with " + shape_string(ref) +
                           " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
    chunk[t] = s[axis] * inner;
  }
  const std::size_t row = out_shape[axis] * inner;
  std::vector<T> out(outer * row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * row;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      const auto& v = tensors[t].node()->values;
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * chunk[t]), chunk[t],
                  out.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += chunk[t];
    }
  }
  std::vector<BasicTensor<T>> inputs(tensors.begin(), tensors.end());
  return make_op_result<T>("concat", std::move(out_shape), std::move(out), inputs,
                           [chunk, outer, row](Node<T>& self) {
                             for (std::size_t o = 0; o < outer; ++o) {
                               std::size_t offset = o * row;
                               for (std::size_t t = 0; t < self.inputs.size(); ++t) {
                                 auto& in = *self.inputs[t];
                                 if (in.requires_grad) {
                                   auto& g = in.ensure_grad();
                                   for (std::size_t i = 0; i < chunk[t]; ++i) {
                                     g[o * chunk[t] + i] += self.grad[offset + i];
                                   }
                                 }
                                 offset += chunk[t];
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin > end || end > a.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t inner = a.dim(0) == 0 ? 0 : a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(begin * inner);
  std::vector<T> out(first, first + static_cast<std::ptrdiff_t>((end - begin) * inner));
  return make_op_result<T>("slice_rows", std::move(shape), std::move(out), {a},
                           [offset = begin * inner](Node<T>& self) {
                             auto& g = self.inputs[0]->ensure_grad();
                             for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
                           });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  return make_op_result<T>("reshape", std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(r * c);
  const auto& v = a.node()->values;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  }
  return make_op_result<T>("transpose", {c, r}, std::move(out), {a}, [r, c](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T total = T(0);
  for (T v : a.values()) total += v;
  return make_op_result<T>("sum", {1}, {total}, {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse_loss: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const auto diff = a - b;
  return mean(diff * diff);
}

#define TKP_INSTANTIATE(T)                                                                              \
  template BasicTensor<T> elementwise<T>(ElementwiseKind, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                            \
  template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                    std::size_t);                                                        \
  template BasicTensor<T> upsample_bilinear_2x<T>(const BasicTensor<T>&);                                \
  template BasicTensor<T> activation<T>(Activation, const BasicTensor<T>&);                              \
  template BasicTensor<T> grid_sample_bilinear<T>(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> concat<T>(std::span<const BasicTensor<T>>, std::size_t);                       \
  template BasicTensor<T> slice_rows<T>(const BasicTensor<T>&, std::size_t, std::size_t);                \
  template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);                                      \
  template BasicTensor<T> transpose<T>(const BasicTensor<T>&);                                           \
  template BasicTensor<T> sum<T>(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> mean<T>(const BasicTensor<T>&);                                                \
  template BasicTensor<T> mse_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);

TKP_INSTANTIATE(float)
TKP_INSTANTIATE(double)

#undef TKP_INSTANTIATE

}  // namespace tkp
