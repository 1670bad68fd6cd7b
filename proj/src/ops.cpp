#include "gcfsr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace gcfsr::ops {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

using Index = Eigen::Index;

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

void require_defined(const Tensor& t, const char* op, const char* what) {
  require(t.defined(), std::string(op) + ": " + what + " is undefined");
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  require(a.dtype() == b.dtype(), std::string(op) + ": dtype mismatch (" +
                                      to_string(a.dtype()) + " vs " +
                                      to_string(b.dtype()) + ")");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
}

Tensor finish(const char* op, Tensor out, std::vector<Tensor> inputs,
              BackwardFn fn) {
  check_finite(out, op);
  if (GradTape* tape = GradTape::active())
    tape->record(op, std::move(inputs), out, std::move(fn));
  return out;
}

template <class T>
detail::Buffer<T>& scratch() {
  thread_local detail::Buffer<T> buf;
  return buf;
}

template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, T* cols) {
  const int plane = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * plane;
        const T* src = x + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* line = src + iy * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? line[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* cols, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, T* dx) {
  const int plane = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row =
            cols + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * plane;
        T* dst = dx + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* line = dst + iy * W;
          const T* src = row + oy * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) line[ix] += src[ox];
          }
        }
      }
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, op, "input");
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto xi = x.data<T>();
    auto yo = out.mutable_data<T>();
    for (std::size_t i = 0; i < xi.size(); ++i) yo[i] = fwd(xi[i]);
  });
  return finish(op, out, {x}, [x, out, deriv](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      if (gx.empty()) return;
      auto g = ctx.grad_output<T>();
      auto xi = x.data<T>();
      auto yo = out.data<T>();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += g[i] * deriv(xi[i], yo[i]);
    });
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad) {
  constexpr const char* op = "conv2d";
  require_defined(input, op, "input");
  require_defined(kernel, op, "kernel");
  require(input.ndim() == 4, "conv2d: input must be 4-D [N,C,H,W], got " +
                                 to_string(input.shape()));
  require(kernel.ndim() == 4, "conv2d: kernel must be 4-D [O,C,k,k], got " +
                                  to_string(kernel.shape()));
  require_same_dtype(input, kernel, op);
  const int N = static_cast<int>(input.dim(0));
  const int C = static_cast<int>(input.dim(1));
  const int H = static_cast<int>(input.dim(2));
  const int W = static_cast<int>(input.dim(3));
  const int O = static_cast<int>(kernel.dim(0));
  const int k = static_cast<int>(kernel.dim(2));
  require(kernel.dim(1) == C, "conv2d: kernel input channels (dim 1) = " +
                                  std::to_string(kernel.dim(1)) +
                                  " but input channels (dim 1) = " +
                                  std::to_string(C));
  require(kernel.dim(3) == k, "conv2d: kernel must be square, dims 2 and 3 are " +
                                  std::to_string(k) + " and " +
                                  std::to_string(kernel.dim(3)));
  require(k % 2 == 1, "conv2d: kernel size (dim 2) must be odd, got " +
                          std::to_string(k));
  require(pad == (k - 1) / 2, "conv2d: pad must be (k-1)/2");
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  if (bias.defined()) {
    require_same_dtype(input, bias, op);
    require(bias.ndim() == 1 && bias.dim(0) == O,
            "conv2d: bias (dim 0) must have " + std::to_string(O) +
                " entries, got shape " + to_string(bias.shape()));
  }
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const bool pointwise = (k == 1 && stride == 1);
  const Index ckk = static_cast<Index>(C) * k * k;
  const Index plane = static_cast<Index>(Ho) * Wo;

  Tensor out = Tensor::zeros({N, O, Ho, Wo}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = input.data<T>().data();
    CMapR<T> wm(kernel.data<T>().data(), O, ckk);
    T* y = out.mutable_data<T>().data();
    auto& cols = scratch<T>();
    if (!pointwise) cols.resize(static_cast<std::size_t>(ckk * plane));
    for (int n = 0; n < N; ++n) {
      const T* xn = x + static_cast<std::ptrdiff_t>(n) * C * H * W;
      const T* cp = xn;
      if (!pointwise) {
        im2col(xn, C, H, W, k, stride, pad, Ho, Wo, cols.data());
        cp = cols.data();
      }
      MapR<T> yn(y + static_cast<std::ptrdiff_t>(n) * O * plane, O, plane);
      yn.noalias() = wm * CMapR<T>(cp, ckk, plane);
      if (bias.defined()) {
        auto b = bias.data<T>();
        for (int o = 0; o < O; ++o) yn.row(o).array() += b[static_cast<std::size_t>(o)];
      }
    }
  });

  return finish(op, out, {input, kernel, bias}, [=](BackwardContext& ctx) {
    dispatch(input.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gy = ctx.grad_output<T>();
      auto gx = ctx.grad_input<T>(0);
      auto gw = ctx.grad_input<T>(1);
      auto gb = ctx.grad_input<T>(2);
      const T* x = input.data<T>().data();
      CMapR<T> wm(kernel.data<T>().data(), O, ckk);
      auto& cols = scratch<T>();
      detail::Buffer<T> dcols;
      if (!pointwise) {
        cols.resize(static_cast<std::size_t>(ckk * plane));
        if (!gx.empty()) dcols.resize(static_cast<std::size_t>(ckk * plane));
      }
      for (int n = 0; n < N; ++n) {
        CMapR<T> gyn(gy.data() + static_cast<std::ptrdiff_t>(n) * O * plane, O,
                     plane);
        const T* xn = x + static_cast<std::ptrdiff_t>(n) * C * H * W;
        if (!gw.empty()) {
          const T* cp = xn;
          if (!pointwise) {
            im2col(xn, C, H, W, k, stride, pad, Ho, Wo, cols.data());
            cp = cols.data();
          }
          MapR<T>(gw.data(), O, ckk).noalias() +=
              gyn * CMapR<T>(cp, ckk, plane).transpose();
        }
        if (!gb.empty())
          for (int o = 0; o < O; ++o)
            gb[static_cast<std::size_t>(o)] += gyn.row(o).sum();
        if (!gx.empty()) {
          T* gxn = gx.data() + static_cast<std::ptrdiff_t>(n) * C * H * W;
          if (pointwise) {
            MapR<T>(gxn, ckk, plane).noalias() += wm.transpose() * gyn;
          } else {
            MapR<T>(dcols.data(), ckk, plane).noalias() = wm.transpose() * gyn;
            col2im(dcols.data(), C, H, W, k, stride, pad, Ho, Wo, gxn);
          }
        }
      }
    });
  });
}

Tensor fully_connected(const Tensor& input, const Tensor& weight,
                       const Tensor& bias) {
  constexpr const char* op = "fully_connected";
  require_defined(input, op, "input");
  require_defined(weight, op, "weight");
  require(input.ndim() == 2, "fully_connected: input must be 2-D [N,D], got " +
                                 to_string(input.shape()));
  require(weight.ndim() == 2, "fully_connected: weight must be 2-D [E,D], got " +
                                  to_string(weight.shape()));
  require_same_dtype(input, weight, op);
  const Index N = input.dim(0), D = input.dim(1), E = weight.dim(0);
  require(weight.dim(1) == D, "fully_connected: weight dim 1 = " +
                                  std::to_string(weight.dim(1)) +
                                  " but input dim 1 = " + std::to_string(D));
  if (bias.defined()) {
    require_same_dtype(input, bias, op);
    require(bias.ndim() == 1 && bias.dim(0) == E,
            "fully_connected: bias dim 0 must be " + std::to_string(E));
  }
  Tensor out = Tensor::zeros({N, E}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    CMapR<T> x(input.data<T>().data(), N, D);
    CMapR<T> w(weight.data<T>().data(), E, D);
    MapR<T> y(out.mutable_data<T>().data(), N, E);
    y.noalias() = x * w.transpose();
    if (bias.defined()) {
      auto b = bias.data<T>();
      for (Index r = 0; r < N; ++r)
        for (Index e = 0; e < E; ++e) y(r, e) += b[static_cast<std::size_t>(e)];
    }
  });
  return finish(op, out, {input, weight, bias}, [=](BackwardContext& ctx) {
    dispatch(input.dtype(), [&](auto tag) {
      using T = decltype(tag);
      CMapR<T> g(ctx.grad_output<T>().data(), N, E);
      if (auto gx = ctx.grad_input<T>(0); !gx.empty())
        MapR<T>(gx.data(), N, D).noalias() +=
            g * CMapR<T>(weight.data<T>().data(), E, D);
      if (auto gw = ctx.grad_input<T>(1); !gw.empty())
        MapR<T>(gw.data(), E, D).noalias() +=
            g.transpose() * CMapR<T>(input.data<T>().data(), N, D);
      if (auto gb = ctx.grad_input<T>(2); !gb.empty())
        for (Index e = 0; e < E; ++e) gb[static_cast<std::size_t>(e)] += g.col(e).sum();
    });
  });
}

Tensor leaky_relu(const Tensor& input, double slope) {
  require(slope > 0.0 && slope < 1.0, "leaky_relu: slope must lie in (0,1)");
  return unary(
      "leaky_relu", input,
      [slope](auto v) {
        using T = decltype(v);
        return v >= T(0) ? v : static_cast<T>(slope) * v;
      },
      [slope](auto v, auto) {
        using T = decltype(v);
        return v >= T(0) ? T(1) : static_cast<T>(slope);
      });
}

namespace {

struct LerpTap {
  int i0, i1;
  double frac;
};

// Half-pixel-center taps for a 2x upscale along one axis, edge clamped.
std::vector<LerpTap> bilinear_taps(int n) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    const double src = (o + 0.5) / 2.0 - 0.5;
    int i0 = static_cast<int>(std::floor(src));
    double frac = src - i0;
    int i1 = i0 + 1;
    i0 = std::clamp(i0, 0, n - 1);
    i1 = std::clamp(i1, 0, n - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, frac};
  }
  return taps;
}

}  // namespace

Tensor upsample2x(const Tensor& input, UpsampleMode mode) {
  require_defined(input, "upsample2x", "input");
  require(input.ndim() == 4, "upsample2x: input must be 4-D, got " +
                                 to_string(input.shape()));
  const int N = static_cast<int>(input.dim(0)), C = static_cast<int>(input.dim(1));
  const int H = static_cast<int>(input.dim(2)), W = static_cast<int>(input.dim(3));
  const int planes = N * C;
  Tensor out = Tensor::zeros({N, C, 2 * H, 2 * W}, input.dtype());

  if (mode == UpsampleMode::nearest) {
    dispatch(input.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* x = input.data<T>().data();
      T* y = out.mutable_data<T>().data();
      for (int p = 0; p < planes; ++p)
        for (int oy = 0; oy < 2 * H; ++oy) {
          const T* src = x + (static_cast<std::ptrdiff_t>(p) * H + oy / 2) * W;
          T* dst = y + (static_cast<std::ptrdiff_t>(p) * 2 * H + oy) * 2 * W;
          for (int ox = 0; ox < 2 * W; ++ox) dst[ox] = src[ox / 2];
        }
    });
    return finish("upsample2x_nearest", out, {input}, [=](BackwardContext& ctx) {
      dispatch(input.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto gx = ctx.grad_input<T>(0);
        if (gx.empty()) return;
        const T* g = ctx.grad_output<T>().data();
        for (int p = 0; p < planes; ++p)
          for (int oy = 0; oy < 2 * H; ++oy) {
            T* dst = gx.data() + (static_cast<std::ptrdiff_t>(p) * H + oy / 2) * W;
            const T* src = g + (static_cast<std::ptrdiff_t>(p) * 2 * H + oy) * 2 * W;
            for (int ox = 0; ox < 2 * W; ++ox) dst[ox / 2] += src[ox];
          }
      });
    });
  }

  const auto ty = bilinear_taps(H);
  const auto tx = bilinear_taps(W);
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = input.data<T>().data();
    T* y = out.mutable_data<T>().data();
    for (int p = 0; p < planes; ++p) {
      const T* src = x + static_cast<std::ptrdiff_t>(p) * H * W;
      T* dst = y + static_cast<std::ptrdiff_t>(p) * 4 * H * W;
      for (int oy = 0; oy < 2 * H; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        const T fy = static_cast<T>(a.frac);
        const T* r0 = src + a.i0 * W;
        const T* r1 = src + a.i1 * W;
        for (int ox = 0; ox < 2 * W; ++ox) {
          const auto& b = tx[static_cast<std::size_t>(ox)];
          const T fx = static_cast<T>(b.frac);
          const T top = r0[b.i0] + fx * (r0[b.i1] - r0[b.i0]);
          const T bot = r1[b.i0] + fx * (r1[b.i1] - r1[b.i0]);
          dst[oy * 2 * W + ox] = top + fy * (bot - top);
        }
      }
    }
  });
  return finish("upsample2x_bilinear", out, {input}, [=](BackwardContext& ctx) {
    dispatch(input.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      if (gx.empty()) return;
      const T* g = ctx.grad_output<T>().data();
      for (int p = 0; p < planes; ++p) {
        T* dst = gx.data() + static_cast<std::ptrdiff_t>(p) * H * W;
        const T* src = g + static_cast<std::ptrdiff_t>(p) * 4 * H * W;
        for (int oy = 0; oy < 2 * H; ++oy) {
          const auto& a = ty[static_cast<std::size_t>(oy)];
          const T fy = static_cast<T>(a.frac);
          T* r0 = dst + a.i0 * W;
          T* r1 = dst + a.i1 * W;
          for (int ox = 0; ox < 2 * W; ++ox) {
            const auto& b = tx[static_cast<std::size_t>(ox)];
            const T fx = static_cast<T>(b.frac);
            const T gv = src[oy * 2 * W + ox];
            const T gtop = (T(1) - fy) * gv;
            const T gbot = fy * gv;
            r0[b.i0] += (T(1) - fx) * gtop;
            r0[b.i1] += fx * gtop;
            r1[b.i0] += (T(1) - fx) * gbot;
            r1[b.i1] += fx * gbot;
          }
        }
      }
    });
  });
}

Tensor avg_pool2x(const Tensor& input) {
  require_defined(input, "avg_pool2x", "input");
  require(input.ndim() == 4, "avg_pool2x: input must be 4-D");
  const int N = static_cast<int>(input.dim(0)), C = static_cast<int>(input.dim(1));
  const int H = static_cast<int>(input.dim(2)), W = static_cast<int>(input.dim(3));
  require(H % 2 == 0 && W % 2 == 0, "avg_pool2x: spatial dims must be even");
  const int Ho = H / 2, Wo = W / 2, planes = N * C;
  Tensor out = Tensor::zeros({N, C, Ho, Wo}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = input.data<T>().data();
    T* y = out.mutable_data<T>().data();
    for (int p = 0; p < planes; ++p)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const T* r0 = x + (static_cast<std::ptrdiff_t>(p) * H + 2 * oy) * W + 2 * ox;
          const T* r1 = r0 + W;
          y[(static_cast<std::ptrdiff_t>(p) * Ho + oy) * Wo + ox] =
              T(0.25) * ((r0[0] + r0[1]) + (r1[0] + r1[1]));
        }
  });
  return finish("avg_pool2x", out, {input}, [=](BackwardContext& ctx) {
    dispatch(input.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      if (gx.empty()) return;
      const T* g = ctx.grad_output<T>().data();
      for (int p = 0; p < planes; ++p)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            const T v = T(0.25) * g[(static_cast<std::ptrdiff_t>(p) * Ho + oy) * Wo + ox];
            T* r0 = gx.data() + (static_cast<std::ptrdiff_t>(p) * H + 2 * oy) * W + 2 * ox;
            T* r1 = r0 + W;
            r0[0] += v;
            r0[1] += v;
            r1[0] += v;
            r1[1] += v;
          }
    });
  });
}

namespace {

enum class Binary { add, sub, mul };

Tensor binary(const char* op, Binary kind, const Tensor& a, const Tensor& b) {
  require_defined(a, op, "lhs");
  require_defined(b, op, "rhs");
  require_same_dtype(a, b, op);
  require_same_shape(a, b, op);
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.mutable_data<T>();
    for (std::size_t i = 0; i < z.size(); ++i) {
      switch (kind) {
        case Binary::add: z[i] = x[i] + y[i]; break;
        case Binary::sub: z[i] = x[i] - y[i]; break;
        case Binary::mul: z[i] = x[i] * y[i]; break;
      }
    }
  });
  return finish(op, out, {a, b}, [=](BackwardContext& ctx) {
    dispatch(a.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = ctx.grad_output<T>();
      auto ga = ctx.grad_input<T>(0);
      auto gb = ctx.grad_input<T>(1);
      if (kind == Binary::mul) {
        auto x = a.data<T>();
        auto y = b.data<T>();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * x[i];
        return;
      }
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      if (kind == Binary::add)
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
      else
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x,
      [factor](auto v) { return static_cast<decltype(v)>(factor) * v; },
      [factor](auto v, auto) { return static_cast<decltype(v)>(factor); });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x,
      [value](auto v) { return v + static_cast<decltype(v)>(value); },
      [](auto v, auto) { return decltype(v)(1); });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](auto v) { return v * v; },
      [](auto v, auto) { return decltype(v)(2) * v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](auto v) { return std::abs(v); },
      [](auto v, auto) {
        using T = decltype(v);
        return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
      });
}

Tensor rsqrt(const Tensor& x) {
  return unary(
      "rsqrt", x, [](auto v) { return decltype(v)(1) / std::sqrt(v); },
      [](auto, auto y) { return decltype(y)(-0.5) * y * y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x,
      [](auto v) {
        using T = decltype(v);
        return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
      },
      [](auto v, auto) {
        using T = decltype(v);
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      });
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  constexpr const char* op = "scale_channels";
  require_defined(x, op, "input");
  require_defined(s, op, "scale");
  require_same_dtype(x, s, op);
  require(x.ndim() >= 2 && s.ndim() == 2 && s.dim(0) == x.dim(0) &&
              s.dim(1) == x.dim(1),
          "scale_channels: scale must be [N,C] = [" + std::to_string(x.dim(0)) +
              "," + std::to_string(x.dim(1)) + "], got " + to_string(s.shape()));
  const std::int64_t NC = x.dim(0) * x.dim(1);
  const std::int64_t inner = x.numel() / NC;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xi = x.data<T>().data();
    const T* si = s.data<T>().data();
    T* y = out.mutable_data<T>().data();
    for (std::int64_t p = 0; p < NC; ++p)
      for (std::int64_t j = 0; j < inner; ++j) y[p * inner + j] = xi[p * inner + j] * si[p];
  });
  return finish(op, out, {x, s}, [=](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = ctx.grad_output<T>().data();
      auto gx = ctx.grad_input<T>(0);
      auto gs = ctx.grad_input<T>(1);
      const T* xi = x.data<T>().data();
      const T* si = s.data<T>().data();
      for (std::int64_t p = 0; p < NC; ++p) {
        if (!gx.empty())
          for (std::int64_t j = 0; j < inner; ++j) gx[static_cast<std::size_t>(p * inner + j)] += g[p * inner + j] * si[p];
        if (!gs.empty()) {
          T acc = 0;
          for (std::int64_t j = 0; j < inner; ++j) acc += g[p * inner + j] * xi[p * inner + j];
          gs[static_cast<std::size_t>(p)] += acc;
        }
      }
    });
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  constexpr const char* op = "add_bias";
  require_defined(x, op, "input");
  require_defined(bias, op, "bias");
  require_same_dtype(x, bias, op);
  require(x.ndim() == 4 && bias.ndim() == 1 && bias.dim(0) == x.dim(1),
          "add_bias: bias must be [C] with C = input dim 1");
  const std::int64_t N = x.dim(0), C = x.dim(1), inner = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xi = x.data<T>().data();
    const T* b = bias.data<T>().data();
    T* y = out.mutable_data<T>().data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t j = 0; j < inner; ++j) {
          const auto i = (n * C + c) * inner + j;
          y[i] = xi[i] + b[c];
        }
  });
  return finish(op, out, {x, bias}, [=](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = ctx.grad_output<T>().data();
      auto gx = ctx.grad_input<T>(0);
      auto gb = ctx.grad_input<T>(1);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      if (gb.empty()) return;
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
          T acc = 0;
          for (std::int64_t j = 0; j < inner; ++j) acc += g[(n * C + c) * inner + j];
          gb[static_cast<std::size_t>(c)] += acc;
        }
    });
  });
}

Tensor add_noise(const Tensor& x, const Tensor& noise, const Tensor& strength) {
  constexpr const char* op = "add_noise";
  require_defined(x, op, "input");
  require_defined(noise, op, "noise");
  require_defined(strength, op, "strength");
  require_same_dtype(x, noise, op);
  require_same_dtype(x, strength, op);
  require(x.ndim() == 4 && noise.ndim() == 4 && noise.dim(0) == x.dim(0) &&
              noise.dim(1) == 1 && noise.dim(2) == x.dim(2) &&
              noise.dim(3) == x.dim(3),
          "add_noise: noise must be [N,1,H,W] matching input, got " +
              to_string(noise.shape()));
  require(strength.numel() == 1, "add_noise: strength must be a scalar");
  const std::int64_t N = x.dim(0), C = x.dim(1), inner = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xi = x.data<T>().data();
    const T* z = noise.data<T>().data();
    const T a = strength.data<T>()[0];
    T* y = out.mutable_data<T>().data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t j = 0; j < inner; ++j) {
          const auto i = (n * C + c) * inner + j;
          y[i] = xi[i] + a * z[n * inner + j];
        }
  });
  return finish(op, out, {x, Tensor(), strength}, [=](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = ctx.grad_output<T>().data();
      auto gx = ctx.grad_input<T>(0);
      auto ga = ctx.grad_input<T>(2);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      if (ga.empty()) return;
      const T* z = noise.data<T>().data();
      T acc = 0;
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t j = 0; j < inner; ++j)
            acc += g[(n * C + c) * inner + j] * z[n * inner + j];
      ga[0] += acc;
    });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape", "input");
  require(numel(shape) == x.numel(), "reshape: cannot view " +
                                         to_string(x.shape()) + " as " +
                                         to_string(shape));
  Tensor out = Tensor::zeros(shape, x.dtype());
  out.node()->data = x.node()->data;
  return finish("reshape", out, {x}, [x](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      auto g = ctx.grad_output<T>();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  });
}

Tensor slice_cols(const Tensor& x, std::int64_t begin, std::int64_t end) {
  require_defined(x, "slice_cols", "input");
  require(x.ndim() == 2, "slice_cols: input must be 2-D");
  const std::int64_t N = x.dim(0), D = x.dim(1);
  require(begin >= 0 && begin < end && end <= D,
          "slice_cols: range [" + std::to_string(begin) + "," +
              std::to_string(end) + ") invalid for dim 1 = " + std::to_string(D));
  const std::int64_t width = end - begin;
  Tensor out = Tensor::zeros({N, width}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xi = x.data<T>().data();
    T* y = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < N; ++r)
      std::copy(xi + r * D + begin, xi + r * D + end, y + r * width);
  });
  return finish("slice_cols", out, {x}, [=](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      if (gx.empty()) return;
      const T* g = ctx.grad_output<T>().data();
      for (std::int64_t r = 0; r < N; ++r)
        for (std::int64_t j = 0; j < width; ++j)
          gx[static_cast<std::size_t>(r * D + begin + j)] += g[r * width + j];
    });
  });
}

Tensor sum_last(const Tensor& x) {
  require_defined(x, "sum_last", "input");
  Shape shape = x.shape();
  const std::int64_t K = shape.back();
  shape.pop_back();
  if (shape.empty()) shape = {1};
  const std::int64_t rows = x.numel() / K;
  Tensor out = Tensor::zeros(shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xi = x.data<T>().data();
    T* y = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      double acc = 0;
      for (std::int64_t j = 0; j < K; ++j) acc += xi[r * K + j];
      y[r] = static_cast<T>(acc);
    }
  });
  return finish("sum_last", out, {x}, [=](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      if (gx.empty()) return;
      const T* g = ctx.grad_output<T>().data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < K; ++j) gx[static_cast<std::size_t>(r * K + j)] += g[r];
    });
  });
}

namespace {

Tensor reduce_all(const char* op, const Tensor& x, bool average) {
  require_defined(x, op, "input");
  const auto n = x.numel();
  Tensor out = Tensor::zeros({1}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0;
    for (T v : x.data<T>()) acc += v;
    if (average) acc /= static_cast<double>(n);
    out.mutable_data<T>()[0] = static_cast<T>(acc);
  });
  return finish(op, out, {x}, [=](BackwardContext& ctx) {
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gx = ctx.grad_input<T>(0);
      if (gx.empty()) return;
      T g = ctx.grad_output<T>()[0];
      if (average) g = static_cast<T>(static_cast<double>(g) / static_cast<double>(n));
      for (auto& v : gx) v += g;
    });
  });
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_all("sum", x, false); }
Tensor mean(const Tensor& x) { return reduce_all("mean", x, true); }

}  // namespace gcfsr::ops
