#include "amfusion/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "amfusion/error.hpp"

namespace amfusion::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tensor& grad_of(const Var& v) { return v.node()->grad_buffer(); }

using Strides = std::array<std::size_t, 4>;

Shape broadcast_shape(const Shape& a, const Shape& b) {
  auto pick = [&](int x, int y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw Error(ErrorKind::BadShape, "cannot broadcast " + a.str() + " with " + b.str());
  };
  return Shape{pick(a.n, b.n), pick(a.c, b.c), pick(a.h, b.h), pick(a.w, b.w)};
}

Strides broadcast_strides(const Shape& s, const Shape& out) {
  const std::size_t sw = 1;
  const std::size_t sh = static_cast<std::size_t>(s.w);
  const std::size_t sc = sh * s.h;
  const std::size_t sn = sc * s.c;
  return {s.n == 1 && out.n != 1 ? 0 : sn, s.c == 1 && out.c != 1 ? 0 : sc,
          s.h == 1 && out.h != 1 ? 0 : sh, s.w == 1 && out.w != 1 ? 0 : sw};
}

template <class F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  std::size_t i = 0;
  for (int n = 0; n < out.n; ++n) {
    for (int c = 0; c < out.c; ++c) {
      for (int h = 0; h < out.h; ++h) {
        const std::size_t ba = n * sa[0] + c * sa[1] + h * sa[2];
        const std::size_t bb = n * sb[0] + c * sb[1] + h * sb[2];
        for (int w = 0; w < out.w; ++w, ++i) f(i, ba + w * sa[3], bb + w * sb[3]);
      }
    }
  }
}

/// Generic broadcasting binary op. `fwd(a, b)` computes the value,
/// `da(a, b, g)` / `db(a, b, g)` the partial derivatives times g.
template <class Fwd, class Da, class Db>
Var binary(const Var& a, const Var& b, Fwd fwd, Da da, Db db) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (as == bs) {
    Tensor out(as);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return make_result(std::move(out), {a, b}, [da, db](Node& node) {
      const Var& pa = node.parents[0];
      const Var& pb = node.parents[1];
      const Tensor& x = pa.value();
      const Tensor& y = pb.value();
      const Tensor& g = node.grad;
      if (pa.requires_grad()) {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da(x[i], y[i], g[i]);
      }
      if (pb.requires_grad()) {
        Tensor& gb = grad_of(pb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db(x[i], y[i], g[i]);
      }
    });
  }
  const Shape os = broadcast_shape(as, bs);
  const Strides sa = broadcast_strides(as, os);
  const Strides sb = broadcast_strides(bs, os);
  Tensor out(os);
  for_each_broadcast(os, sa, sb,
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
  return make_result(std::move(out), {a, b}, [da, db, os, sa, sb](Node& node) {
    const Var& pa = node.parents[0];
    const Var& pb = node.parents[1];
    const Tensor& x = pa.value();
    const Tensor& y = pb.value();
    const Tensor& g = node.grad;
    if (pa.requires_grad()) {
      Tensor& ga = grad_of(pa);
      for_each_broadcast(os, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        ga[ia] += da(x[ia], y[ib], g[i]);
      });
    }
    if (pb.requires_grad()) {
      Tensor& gb = grad_of(pb);
      for_each_broadcast(os, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        gb[ib] += db(x[ia], y[ib], g[i]);
      });
    }
  });
}

template <class Fwd, class Dx>
Var unary(const Var& x, Fwd fwd, Dx dx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(std::move(out), {x}, [dx](Node& node) {
    const Var& p = node.parents[0];
    const Tensor& in = p.value();
    Tensor& gx = grad_of(p);
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += dx(in[i], node.value[i], node.grad[i]);
  });
}

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::BadShape, what);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; }, [](double x, double, double g) { return g * x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double g) { return g / y; },
      [](double x, double y, double g) { return -g * x / (y * y); });
}

Var add_scalar(const Var& x, double s) {
  return unary(
      x, [s](double v) { return v + s; }, [](double, double, double g) { return g; });
}

Var mul_scalar(const Var& x, double s) {
  return unary(
      x, [s](double v) { return v * s; }, [s](double, double, double g) { return g * s; });
}

Var one_minus(const Var& x) {
  return unary(
      x, [](double v) { return 1.0 - v; }, [](double, double, double g) { return -g; });
}

Var square(const Var& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double, double g) { return 2.0 * v * g; });
}

Var sqrt(const Var& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y, double g) { return y > 0.0 ? g / (2.0 * y) : 0.0; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double, double g) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double, double g) { return v > 0.0 ? g : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double, double g) { return v > 0.0 ? g : slope * g; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y, double g) { return g * y * (1.0 - y); });
}

Var sum(const Var& x) {
  return make_result(Tensor::scalar(x.value().sum()), {x}, [](Node& node) {
    const double g = node.grad[0];
    Tensor& gx = grad_of(node.parents[0]);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean(const Var& x) {
  const double count = static_cast<double>(x.value().size());
  return mul_scalar(sum(x), 1.0 / count);
}

Var sum_per_sample(const Var& x) {
  const Shape s = x.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  Tensor out(Shape{s.n, 1, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    const double* p = x.value().data() + n * per;
    out[n] = std::accumulate(p, p + per, 0.0);
  }
  return make_result(std::move(out), {x}, [per](Node& node) {
    Tensor& gx = grad_of(node.parents[0]);
    for (int n = 0; n < node.value.shape().n; ++n) {
      const double g = node.grad[n];
      double* p = gx.data() + n * per;
      for (std::size_t i = 0; i < per; ++i) p[i] += g;
    }
  });
}

namespace {

struct ConvGeometry {
  int cin, h, w, k, stride, pad, ho, wo;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  std::size_t rows() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
};

void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t P = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    const double* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((static_cast<std::size_t>(c) * g.k + ki) * g.k + kj) * P;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          double* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t P = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    double* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((static_cast<std::size_t>(c) * g.k + ki) * g.k + kj) * P;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.wo;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.h == ws.w, "conv2d: kernel must be square, got " + ws.str());
  require(ws.c == xs.c, "conv2d: input " + xs.str() + " does not match weight " + ws.str());
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const bool has_bias = static_cast<bool>(bias);
  if (has_bias) {
    require(bias.shape() == (Shape{1, ws.n, 1, 1}), "conv2d: bias shape " + bias.shape().str());
  }
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, stride, pad, 0, 0};
  g.ho = (xs.h + 2 * pad - g.k) / stride + 1;
  g.wo = (xs.w + 2 * pad - g.k) / stride + 1;
  require(g.ho > 0 && g.wo > 0, "conv2d: input " + xs.str() + " too small for kernel");

  const int cout = ws.n;
  const auto K = static_cast<Eigen::Index>(g.rows());
  const auto P = static_cast<Eigen::Index>(g.cols());
  Tensor out(Shape{xs.n, cout, g.ho, g.wo});
  ConstMapMat W(weight.value().data(), cout, K);
  std::vector<double> cols(g.pointwise() ? 0 : g.rows() * g.cols());
  for (int n = 0; n < xs.n; ++n) {
    const double* src = x.value().plane(n, 0);
    if (!g.pointwise()) im2col(src, g, cols.data());
    ConstMapMat C(g.pointwise() ? src : cols.data(), K, P);
    MapMat Y(out.plane(n, 0), cout, P);
    Y.noalias() = W * C;
    if (has_bias) {
      Eigen::Map<const Eigen::VectorXd> b(bias.value().data(), cout);
      Y.colwise() += b;
    }
  }

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [g, cout, K, P](Node& node) {
    const Var& px = node.parents[0];
    const Var& pw = node.parents[1];
    const bool with_bias = node.parents.size() > 2;
    const int batch = node.value.shape().n;
    ConstMapMat W(pw.value().data(), cout, K);
    std::vector<double> cols(g.pointwise() ? 0 : g.rows() * g.cols());
    std::vector<double> gcols(g.pointwise() ? 0 : g.rows() * g.cols());
    for (int n = 0; n < batch; ++n) {
      ConstMapMat G(node.grad.plane(n, 0), cout, P);
      if (pw.requires_grad()) {
        const double* src = px.value().plane(n, 0);
        if (!g.pointwise()) im2col(src, g, cols.data());
        ConstMapMat C(g.pointwise() ? src : cols.data(), K, P);
        MapMat GW(grad_of(pw).data(), cout, K);
        GW.noalias() += G * C.transpose();
      }
      if (with_bias && node.parents[2].requires_grad()) {
        Eigen::Map<Eigen::VectorXd> gb(grad_of(node.parents[2]).data(), cout);
        gb += G.rowwise().sum();
      }
      if (px.requires_grad()) {
        double* dst = grad_of(px).plane(n, 0);
        if (g.pointwise()) {
          MapMat GX(dst, K, P);
          GX.noalias() += W.transpose() * G;
        } else {
          MapMat GC(gcols.data(), K, P);
          GC.noalias() = W.transpose() * G;
          col2im(gcols.data(), g, dst);
        }
      }
    }
  });
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

Var filter2d(const Var& x, const Tensor& kernel, Padding padding) {
  const Shape xs = x.shape();
  const int kh = kernel.shape().h;
  const int kw = kernel.shape().w;
  require(kernel.shape().n == 1 && kernel.shape().c == 1 && kh % 2 == 1 && kw % 2 == 1,
          "filter2d: kernel must be [1,1,odd,odd]");
  const int rh = kh / 2;
  const int rw = kw / 2;
  int ho = xs.h;
  int wo = xs.w;
  if (padding == Padding::Valid) {
    ho = xs.h - kh + 1;
    wo = xs.w - kw + 1;
  }
  require(ho > 0 && wo > 0, "filter2d: input " + xs.str() + " smaller than kernel");

  // Source row/column for each (output, tap) pair.
  auto rows = std::make_shared<std::vector<int>>(static_cast<std::size_t>(ho) * kh);
  auto colsv = std::make_shared<std::vector<int>>(static_cast<std::size_t>(wo) * kw);
  for (int y = 0; y < ho; ++y) {
    for (int i = 0; i < kh; ++i) {
      (*rows)[y * kh + i] = padding == Padding::Valid ? y + i : reflect_index(y + i - rh, xs.h);
    }
  }
  for (int xw = 0; xw < wo; ++xw) {
    for (int j = 0; j < kw; ++j) {
      (*colsv)[xw * kw + j] = padding == Padding::Valid ? xw + j : reflect_index(xw + j - rw, xs.w);
    }
  }

  Tensor out(Shape{xs.n, xs.c, ho, wo});
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < ho; ++y) {
        for (int xw = 0; xw < wo; ++xw) {
          double acc = 0.0;
          for (int i = 0; i < kh; ++i) {
            const double* srow = src + static_cast<std::size_t>((*rows)[y * kh + i]) * xs.w;
            const double* krow = kernel.data() + i * kw;
            for (int j = 0; j < kw; ++j) acc += krow[j] * srow[(*colsv)[xw * kw + j]];
          }
          dst[y * wo + xw] = acc;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [kernel, rows, colsv, kh, kw](Node& node) {
    const Var& px = node.parents[0];
    const Shape xs = px.shape();
    const Shape os = node.value.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        const double* g = node.grad.plane(n, c);
        double* dst = gx.plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          for (int xw = 0; xw < os.w; ++xw) {
            const double gv = g[y * os.w + xw];
            if (gv == 0.0) continue;
            for (int i = 0; i < kh; ++i) {
              double* drow = dst + static_cast<std::size_t>((*rows)[y * kh + i]) * xs.w;
              const double* krow = kernel.data() + i * kw;
              for (int j = 0; j < kw; ++j) drow[(*colsv)[xw * kw + j]] += krow[j] * gv;
            }
          }
        }
      }
    }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  Shape s = xs.front().shape();
  int total = 0;
  for (const Var& v : xs) {
    const Shape& vs = v.shape();
    require(vs.n == s.n && vs.h == s.h && vs.w == s.w,
            "concat_channels: " + s.str() + " vs " + vs.str());
    total += vs.c;
  }
  s.c = total;
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    int offset = 0;
    for (const Var& v : xs) {
      const int c = v.shape().c;
      std::copy_n(v.value().plane(n, 0), c * s.plane(), out.plane(n, offset));
      offset += c;
    }
  }
  return make_result(std::move(out), xs, [](Node& node) {
    const Shape s = node.value.shape();
    int offset = 0;
    for (const Var& p : node.parents) {
      const int c = p.shape().c;
      if (p.requires_grad()) {
        Tensor& gp = grad_of(p);
        for (int n = 0; n < s.n; ++n) {
          const double* src = node.grad.plane(n, offset);
          double* dst = gp.plane(n, 0);
          for (std::size_t i = 0; i < c * s.plane(); ++i) dst[i] += src[i];
        }
      }
      offset += c;
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  const double inv = 1.0 / static_cast<double>(s.plane());
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      out.at(n, c, 0, 0) = std::accumulate(p, p + s.plane(), 0.0) * inv;
    }
  }
  return make_result(std::move(out), {x}, [inv](Node& node) {
    const Var& px = node.parents[0];
    const Shape s = px.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double g = node.grad.at(n, c, 0, 0) * inv;
        double* p = gx.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] += g;
      }
    }
  });
}

Var global_max_pool(const Var& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, s.c, 1, 1});
  auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      const auto it = std::max_element(p, p + s.plane());
      (*argmax)[n * s.c + c] = static_cast<std::size_t>(it - p);
      out.at(n, c, 0, 0) = *it;
    }
  }
  return make_result(std::move(out), {x}, [argmax](Node& node) {
    const Var& px = node.parents[0];
    const Shape s = px.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        gx.plane(n, c)[(*argmax)[n * s.c + c]] += node.grad.at(n, c, 0, 0);
      }
    }
  });
}

Var channel_mean(const Var& x) {
  const Shape s = x.shape();
  const double inv = 1.0 / s.c;
  Tensor out(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    double* dst = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += p[i];
    }
    for (std::size_t i = 0; i < s.plane(); ++i) dst[i] *= inv;
  }
  return make_result(std::move(out), {x}, [inv](Node& node) {
    const Var& px = node.parents[0];
    const Shape s = px.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < s.n; ++n) {
      const double* g = node.grad.plane(n, 0);
      for (int c = 0; c < s.c; ++c) {
        double* p = gx.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] += g[i] * inv;
      }
    }
  });
}

Var channel_max(const Var& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, 1, s.h, s.w}, -std::numeric_limits<double>::infinity());
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(s.n) * s.plane(), 0);
  for (int n = 0; n < s.n; ++n) {
    double* dst = out.plane(n, 0);
    int* arg = argmax->data() + n * s.plane();
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.value().plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        if (p[i] > dst[i]) {
          dst[i] = p[i];
          arg[i] = c;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax](Node& node) {
    const Var& px = node.parents[0];
    const Shape s = px.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < s.n; ++n) {
      const double* g = node.grad.plane(n, 0);
      const int* arg = argmax->data() + n * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) gx.plane(n, arg[i])[i] += g[i];
    }
  });
}

Var block_mean(const Var& x, int k) {
  const Shape s = x.shape();
  if (k <= 0 || s.h % k != 0 || s.w % k != 0) {
    throw Error(ErrorKind::PatchMismatch,
                "block size " + std::to_string(k) + " does not tile " + s.str());
  }
  const int ho = s.h / k;
  const int wo = s.w / k;
  const double inv = 1.0 / (static_cast<double>(k) * k);
  Tensor out(Shape{s.n, s.c, ho, wo});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int xw = 0; xw < s.w; ++xw) dst[(y / k) * wo + xw / k] += src[y * s.w + xw];
      }
      for (int i = 0; i < ho * wo; ++i) dst[i] *= inv;
    }
  }
  return make_result(std::move(out), {x}, [k, inv, wo](Node& node) {
    const Var& px = node.parents[0];
    const Shape s = px.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* g = node.grad.plane(n, c);
        double* dst = gx.plane(n, c);
        for (int y = 0; y < s.h; ++y) {
          for (int xw = 0; xw < s.w; ++xw) dst[y * s.w + xw] += g[(y / k) * wo + xw / k] * inv;
        }
      }
    }
  });
}

Var upsample_nearest(const Var& x, int factor) {
  require(factor >= 1, "upsample_nearest: factor must be positive");
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        const double* srow = src + (y / factor) * s.w;
        for (int xw = 0; xw < os.w; ++xw) dst[y * os.w + xw] = srow[xw / factor];
      }
    }
  }
  return make_result(std::move(out), {x}, [factor](Node& node) {
    const Var& px = node.parents[0];
    const Shape s = px.shape();
    const Shape os = node.value.shape();
    Tensor& gx = grad_of(px);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* g = node.grad.plane(n, c);
        double* dst = gx.plane(n, c);
        for (int y = 0; y < os.h; ++y) {
          for (int xw = 0; xw < os.w; ++xw) dst[(y / factor) * s.w + xw / factor] += g[y * os.w + xw];
        }
      }
    }
  });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape s = x.shape();
  require(gamma.shape() == (Shape{1, s.c, 1, 1}) && beta.shape() == (Shape{1, s.c, 1, 1}),
          "layer_norm_channels: affine parameters must be [1,C,1,1]");
  const std::size_t plane = s.plane();
  auto xhat = std::make_shared<Tensor>(s);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.n) * plane);
  Tensor out(s);
  const double* gm = gamma.value().data();
  const double* bt = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mu = 0.0;
      for (int c = 0; c < s.c; ++c) mu += x.value().plane(n, c)[i];
      mu /= s.c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double d = x.value().plane(n, c)[i] - mu;
        var += d * d;
      }
      var /= s.c;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[n * plane + i] = is;
      for (int c = 0; c < s.c; ++c) {
        const double xh = (x.value().plane(n, c)[i] - mu) * is;
        xhat->plane(n, c)[i] = xh;
        out.plane(n, c)[i] = gm[c] * xh + bt[c];
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& node) {
    const Var& px = node.parents[0];
    const Var& pg = node.parents[1];
    const Var& pb = node.parents[2];
    const Shape s = px.shape();
    const std::size_t plane = s.plane();
    const double* gm = pg.value().data();
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        double sum_dxh = 0.0;
        double sum_dxh_xh = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const double g = node.grad.plane(n, c)[i];
          const double xh = xhat->plane(n, c)[i];
          if (pg.requires_grad()) grad_of(pg)[c] += g * xh;
          if (pb.requires_grad()) grad_of(pb)[c] += g;
          const double dxh = g * gm[c];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
        }
        if (px.requires_grad()) {
          const double is = (*inv_std)[n * plane + i];
          Tensor& gx = grad_of(px);
          for (int c = 0; c < s.c; ++c) {
            const double dxh = node.grad.plane(n, c)[i] * gm[c];
            const double xh = xhat->plane(n, c)[i];
            gx.plane(n, c)[i] += is * (dxh - sum_dxh / s.c - xh * sum_dxh_xh / s.c);
          }
        }
      }
    }
  });
}

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, int heads,
                         std::vector<Tensor>* probabilities) {
  const Shape qs = q.shape();
  const Shape ks = k.shape();
  require(ks == v.shape(), "attention: key " + ks.str() + " and value " + v.shape().str() + " differ");
  require(qs.n == ks.n && qs.c == ks.c, "attention: query " + qs.str() + " vs key " + ks.str());
  if (heads <= 0 || qs.c % heads != 0) {
    throw Error(ErrorKind::HeadDivisibility,
                "channels " + std::to_string(qs.c) + " not divisible by heads " + std::to_string(heads));
  }
  const int d = qs.c / heads;
  const auto Lq = static_cast<Eigen::Index>(qs.plane());
  const auto Lk = static_cast<Eigen::Index>(ks.plane());
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  auto probs = std::make_shared<std::vector<RowMat>>();
  probs->reserve(static_cast<std::size_t>(qs.n) * heads);
  Tensor out(qs);
  for (int n = 0; n < qs.n; ++n) {
    for (int h = 0; h < heads; ++h) {
      ConstMapMat QT(q.value().plane(n, h * d), d, Lq);
      ConstMapMat KT(k.value().plane(n, h * d), d, Lk);
      ConstMapMat VT(v.value().plane(n, h * d), d, Lk);
      RowMat S = (QT.transpose() * KT) * scale;
      for (Eigen::Index r = 0; r < Lq; ++r) {
        const double m = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - m).exp();
        S.row(r) /= S.row(r).sum();
      }
      MapMat OT(out.plane(n, h * d), d, Lq);
      OT.noalias() = VT * S.transpose();
      if (probabilities != nullptr) {
        Tensor p(Shape{1, 1, static_cast<int>(Lq), static_cast<int>(Lk)});
        MapMat(p.data(), Lq, Lk) = S;
        probabilities->push_back(std::move(p));
      }
      probs->push_back(std::move(S));
    }
  }
  return make_result(std::move(out), {q, k, v}, [probs, heads, d, Lq, Lk, scale](Node& node) {
    const Var& pq = node.parents[0];
    const Var& pk = node.parents[1];
    const Var& pv = node.parents[2];
    const int batch = node.value.shape().n;
    for (int n = 0; n < batch; ++n) {
      for (int h = 0; h < heads; ++h) {
        const RowMat& P = (*probs)[static_cast<std::size_t>(n) * heads + h];
        ConstMapMat GOT(node.grad.plane(n, h * d), d, Lq);
        ConstMapMat QT(pq.value().plane(n, h * d), d, Lq);
        ConstMapMat KT(pk.value().plane(n, h * d), d, Lk);
        ConstMapMat VT(pv.value().plane(n, h * d), d, Lk);
        if (pv.requires_grad()) {
          MapMat GVT(grad_of(pv).plane(n, h * d), d, Lk);
          GVT.noalias() += GOT * P;
        }
        if (pq.requires_grad() || pk.requires_grad()) {
          RowMat dP = GOT.transpose() * VT;
          RowMat dS = P.cwiseProduct(dP);
          Eigen::VectorXd rows = dS.rowwise().sum();
          dS -= P.cwiseProduct(rows.replicate(1, Lk));
          if (pq.requires_grad()) {
            MapMat GQT(grad_of(pq).plane(n, h * d), d, Lq);
            GQT.noalias() += scale * (KT * dS.transpose());
          }
          if (pk.requires_grad()) {
            MapMat GKT(grad_of(pk).plane(n, h * d), d, Lk);
            GKT.noalias() += scale * (QT * dS);
          }
        }
      }
    }
  });
}

}  // namespace amfusion::ops
