#include "clickseg/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "clickseg/guided.hpp"

namespace clickseg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
// Reductions run in double, or in T when T is wider (finite-difference
// reference evaluations).
template <typename T>
using Acc = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

struct ConvGeometry {
  int cin, h, w, k, ho, wo, stride, dilation, pad;
  std::size_t rows() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// Output columns ox with 0 <= ox*stride + offset < limit.
inline void valid_range(int offset, int stride, int limit, int count, int& lo, int& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = limit - offset <= 0 ? 0 : (limit - offset - 1) / stride + 1;
  hi = std::min(hi, count);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t P = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * P;
        const int xoff = kx * g.dilation - g.pad;
        int lo, hi;
        valid_range(xoff, g.stride, g.w, g.wo, lo, hi);
        for (int oy = 0; oy < g.ho; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy) * g.wo;
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          std::fill(dst, dst + lo, T{0});
          if (g.stride == 1) {
            std::memcpy(dst + lo, src + lo + xoff, sizeof(T) * static_cast<std::size_t>(hi - lo));
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + xoff];
          }
          std::fill(dst + hi, dst + g.wo, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * P;
        const int xoff = kx * g.dilation - g.pad;
        int lo, hi;
        valid_range(xoff, g.stride, g.w, g.wo, lo, hi);
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.wo;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride + xoff] += src[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias, ConvSpec spec) {
  const Shape xs = x->shape();
  const Shape ws = weight->shape();
  require(ws.h == ws.w && ws.h % 2 == 1, ErrorCode::Shape, "conv2d: kernel must be square and odd");
  require(ws.c == xs.c, ErrorCode::Shape,
          "conv2d: channel mismatch, input " + xs.str() + " weight " + ws.str());
  require(spec.stride >= 1 && spec.dilation >= 1 && spec.pad >= 0, ErrorCode::InvalidArgument,
          "conv2d: bad stride/dilation/pad");
  if (bias) require(bias->numel() == static_cast<std::size_t>(ws.n), ErrorCode::Shape, "conv2d: bias size");
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, 0, 0, spec.stride, spec.dilation, spec.pad};
  const int span = spec.dilation * (g.k - 1) + 1;
  g.ho = (xs.h + 2 * spec.pad - span) / spec.stride + 1;
  g.wo = (xs.w + 2 * spec.pad - span) / spec.stride + 1;
  require(g.ho > 0 && g.wo > 0, ErrorCode::Shape, "conv2d: input smaller than kernel");

  const int cout = ws.n;
  const std::size_t K = g.rows();
  const std::size_t P = g.cols();
  auto out = make_tensor<T>({xs.n, cout, g.ho, g.wo});
  const bool track = tape.wants_grad(x, weight, bias);
  const bool keep_cols = track && weight->requires_grad() && !g.pointwise();
  auto saved = std::make_shared<std::vector<std::vector<T>>>();
  std::vector<T> scratch;

  ConstMapMat<T> W(weight->data().data(), cout, static_cast<Eigen::Index>(K));
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x->data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* cols_ptr = xn;
    if (!g.pointwise()) {
      std::vector<T>& buf = keep_cols ? saved->emplace_back(K * P) : scratch;
      if (!keep_cols) buf.resize(K * P);
      im2col(xn, g, buf.data());
      cols_ptr = buf.data();
    }
    ConstMapMat<T> C(cols_ptr, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MapMat<T> O(out->data().data() + static_cast<std::size_t>(n) * cout * P, cout,
                static_cast<Eigen::Index>(P));
    O.noalias() = W * C;
    if (bias) {
      for (int o = 0; o < cout; ++o) O.row(o).array() += bias->data()[o];
    }
  }

  if (track) {
    out->set_requires_grad(true);
    tape.record([x, weight, bias, out, g, saved, cout, K, P] {
      const Shape xs = x->shape();
      const auto& dout = out->grad();
      ConstMapMat<T> W(weight->data().data(), cout, static_cast<Eigen::Index>(K));
      std::vector<T> dcols;
      for (int n = 0; n < xs.n; ++n) {
        ConstMapMat<T> dO(dout.data() + static_cast<std::size_t>(n) * cout * P, cout,
                          static_cast<Eigen::Index>(P));
        if (weight->requires_grad()) {
          const T* cols_ptr = g.pointwise()
              ? x->data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane()
              : (*saved)[static_cast<std::size_t>(n)].data();
          ConstMapMat<T> C(cols_ptr, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
          MapMat<T> dW(weight->grad().data(), cout, static_cast<Eigen::Index>(K));
          dW.noalias() += dO * C.transpose();
        }
        if (bias && bias->requires_grad()) {
          auto& db = bias->grad();
          // A plain loop: Eigen's vectorized sum peels by pointer alignment,
          // which would make the rounding depend on heap addresses.
          for (int o = 0; o < cout; ++o) {
            const T* row = dout.data() + (static_cast<std::size_t>(n) * cout + o) * P;
            T s = T{0};
            for (std::size_t p = 0; p < P; ++p) s += row[p];
            db[o] += s;
          }
        }
        if (x->requires_grad()) {
          T* dx = x->grad().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
          if (g.pointwise()) {
            MapMat<T> dX(dx, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
            dX.noalias() += W.transpose() * dO;
          } else {
            dcols.resize(K * P);
            MapMat<T> dC(dcols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
            dC.noalias() = W.transpose() * dO;
            col2im_add(dcols.data(), g, dx);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> weight_standardize(Tape<T>& tape, const TensorPtr<T>& weight, double eps) {
  const Shape ws = weight->shape();
  const std::size_t fan_in = static_cast<std::size_t>(ws.c) * ws.h * ws.w;
  require(fan_in >= 2, ErrorCode::Shape, "weight_standardize: fan-in must be >= 2");
  auto out = make_tensor<T>(ws);
  auto inv_std = std::make_shared<std::vector<T>>(ws.n);
  auto clamped = std::make_shared<std::vector<char>>(ws.n, 0);
  for (int o = 0; o < ws.n; ++o) {
    const T* w = weight->data().data() + o * fan_in;
    Acc<T> mean = 0.0;
    for (std::size_t i = 0; i < fan_in; ++i) mean += w[i];
    mean /= static_cast<Acc<T>>(fan_in);
    Acc<T> var = 0.0;
    for (std::size_t i = 0; i < fan_in; ++i) var += (w[i] - mean) * (w[i] - mean);
    var /= static_cast<Acc<T>>(fan_in);
    (*clamped)[o] = var <= eps;
    const Acc<T> inv = 1.0 / std::sqrt(std::max<Acc<T>>(var, eps));
    (*inv_std)[o] = static_cast<T>(inv);
    T* dst = out->data().data() + o * fan_in;
    for (std::size_t i = 0; i < fan_in; ++i) dst[i] = static_cast<T>((w[i] - mean) * inv);
  }
  if (tape.wants_grad(weight)) {
    out->set_requires_grad(true);
    tape.record([weight, out, inv_std, clamped, fan_in] {
      const auto& dy = out->grad();
      auto& dw = weight->grad();
      const int n_out = weight->shape().n;
      const Acc<T> m = static_cast<Acc<T>>(fan_in);
      for (int o = 0; o < n_out; ++o) {
        const std::size_t base = o * fan_in;
        Acc<T> sum_g = 0.0;
        Acc<T> sum_gy = 0.0;
        for (std::size_t i = 0; i < fan_in; ++i) {
          sum_g += dy[base + i];
          sum_gy += dy[base + i] * out->data()[base + i];
        }
        const Acc<T> inv = (*inv_std)[o];
        const bool fixed_scale = (*clamped)[o] != 0;
        for (std::size_t i = 0; i < fan_in; ++i) {
          Acc<T> g = dy[base + i] - sum_g / m;
          if (!fixed_scale) g -= out->data()[base + i] * sum_gy / m;
          dw[base + i] += static_cast<T>(g * inv);
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> group_norm(Tape<T>& tape, const TensorPtr<T>& x, int groups, const TensorPtr<T>& gamma,
                        const TensorPtr<T>& beta, double eps) {
  const Shape s = x->shape();
  require(groups >= 1 && s.c % groups == 0, ErrorCode::Shape,
          "group_norm: channels " + std::to_string(s.c) + " not divisible by groups " +
              std::to_string(groups));
  require(gamma->numel() == static_cast<std::size_t>(s.c) && beta->numel() == static_cast<std::size_t>(s.c),
          ErrorCode::Shape, "group_norm: affine parameter size");
  const int cpg = s.c / groups;
  const std::size_t group_size = static_cast<std::size_t>(cpg) * s.plane();
  auto out = make_tensor<T>(s);
  auto xhat = std::make_shared<std::vector<T>>(s.numel());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n) * groups);
  for (int n = 0; n < s.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = x->offset(n, gi * cpg, 0, 0);
      const T* src = x->data().data() + base;
      Acc<T> mean = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) mean += src[i];
      mean /= static_cast<Acc<T>>(group_size);
      Acc<T> var = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<Acc<T>>(group_size);
      const Acc<T> inv = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(n) * groups + gi] = static_cast<T>(inv);
      for (int c = 0; c < cpg; ++c) {
        const int ch = gi * cpg + c;
        const T ga = gamma->data()[ch];
        const T be = beta->data()[ch];
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const std::size_t idx = base + c * s.plane() + i;
          const T xh = static_cast<T>((x->data()[idx] - mean) * inv);
          (*xhat)[idx] = xh;
          out->data()[idx] = ga * xh + be;
        }
      }
    }
  }
  if (tape.wants_grad(x, gamma, beta)) {
    out->set_requires_grad(true);
    tape.record([x, gamma, beta, out, xhat, inv_std, groups, cpg, group_size] {
      const Shape s = x->shape();
      const auto& dy = out->grad();
      for (int n = 0; n < s.n; ++n) {
        for (int gi = 0; gi < groups; ++gi) {
          const std::size_t base = x->offset(n, gi * cpg, 0, 0);
          Acc<T> sum_d = 0.0;
          Acc<T> sum_dx = 0.0;
          for (int c = 0; c < cpg; ++c) {
            const int ch = gi * cpg + c;
            const Acc<T> ga = gamma->data()[ch];
            Acc<T> dg = 0.0;
            Acc<T> db = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) {
              const std::size_t idx = base + c * s.plane() + i;
              const Acc<T> d = dy[idx];
              dg += d * (*xhat)[idx];
              db += d;
              sum_d += d * ga;
              sum_dx += d * ga * (*xhat)[idx];
            }
            if (gamma->requires_grad()) gamma->grad()[ch] += static_cast<T>(dg);
            if (beta->requires_grad()) beta->grad()[ch] += static_cast<T>(db);
          }
          if (!x->requires_grad()) continue;
          auto& dx = x->grad();
          const Acc<T> inv = (*inv_std)[static_cast<std::size_t>(n) * groups + gi];
          const Acc<T> m = static_cast<Acc<T>>(group_size);
          for (int c = 0; c < cpg; ++c) {
            const Acc<T> ga = gamma->data()[gi * cpg + c];
            for (std::size_t i = 0; i < s.plane(); ++i) {
              const std::size_t idx = base + c * s.plane() + i;
              const Acc<T> dxh = dy[idx] * ga;
              dx[idx] += static_cast<T>(inv * (dxh - sum_d / m - (*xhat)[idx] * sum_dx / m));
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> leaky_relu(Tape<T>& tape, const TensorPtr<T>& x, double slope) {
  auto out = make_tensor<T>(x->shape());
  const T a = static_cast<T>(slope);
  const auto& xd = x->data();
  auto& od = out->data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > T{0} ? xd[i] : a * xd[i];
  if (tape.wants_grad(x)) {
    out->set_requires_grad(true);
    tape.record([x, out, a] {
      const auto& dy = out->grad();
      auto& dx = x->grad();
      const auto& xd = x->data();
      for (std::size_t i = 0; i < xd.size(); ++i) dx[i] += xd[i] > T{0} ? dy[i] : a * dy[i];
    });
  }
  return out;
}

namespace {

struct Bin {
  int lo, hi;
};

std::vector<Bin> pool_bins(int extent, int bins) {
  std::vector<Bin> out(bins);
  for (int i = 0; i < bins; ++i) {
    out[i].lo = (i * extent) / bins;
    out[i].hi = ((i + 1) * extent + bins - 1) / bins;
  }
  return out;
}

}  // namespace

template <typename T>
TensorPtr<T> adaptive_avg_pool(Tape<T>& tape, const TensorPtr<T>& x, int bins) {
  const Shape s = x->shape();
  require(bins >= 1 && s.h >= bins && s.w >= bins, ErrorCode::Shape,
          "adaptive_avg_pool: input " + s.str() + " smaller than bin count " + std::to_string(bins));
  const auto by = pool_bins(s.h, bins);
  const auto bx = pool_bins(s.w, bins);
  auto out = make_tensor<T>({s.n, s.c, bins, bins});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
          Acc<T> sum = 0.0;
          for (int y = by[i].lo; y < by[i].hi; ++y)
            for (int xx = bx[j].lo; xx < bx[j].hi; ++xx) sum += x->at(n, c, y, xx);
          const Acc<T> count = static_cast<Acc<T>>(by[i].hi - by[i].lo) * (bx[j].hi - bx[j].lo);
          out->at(n, c, i, j) = static_cast<T>(sum / count);
        }
  if (tape.wants_grad(x)) {
    out->set_requires_grad(true);
    tape.record([x, out, bins, by, bx] {
      const Shape s = x->shape();
      auto& dx = x->grad();
      const auto& dy = out->grad();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
          for (int i = 0; i < bins; ++i)
            for (int j = 0; j < bins; ++j) {
              const Acc<T> count = static_cast<Acc<T>>(by[i].hi - by[i].lo) * (bx[j].hi - bx[j].lo);
              const T g = static_cast<T>(dy[out->offset(n, c, i, j)] / count);
              for (int y = by[i].lo; y < by[i].hi; ++y)
                for (int xx = bx[j].lo; xx < bx[j].hi; ++xx) dx[x->offset(n, c, y, xx)] += g;
            }
    });
  }
  return out;
}

namespace {

struct Tap {
  int i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    taps[o] = {i0, std::min(i0 + 1, src - 1), s - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
TensorPtr<T> upsample_bilinear(Tape<T>& tape, const TensorPtr<T>& x, int height, int width) {
  const Shape s = x->shape();
  require(height > 0 && width > 0, ErrorCode::Shape, "upsample_bilinear: bad target size");
  const auto ty = bilinear_taps(s.h, height);
  const auto tx = bilinear_taps(s.w, width);
  auto out = make_tensor<T>({s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x->data().data() + x->offset(n, c, 0, 0);
      T* dst = out->data().data() + out->offset(n, c, 0, 0);
      for (int y = 0; y < height; ++y) {
        const Tap& a = ty[y];
        const T* r0 = src + static_cast<std::size_t>(a.i0) * s.w;
        const T* r1 = src + static_cast<std::size_t>(a.i1) * s.w;
        const T wy1 = static_cast<T>(a.w1);
        const T wy0 = T{1} - wy1;
        for (int xx = 0; xx < width; ++xx) {
          const Tap& b = tx[xx];
          const T wx1 = static_cast<T>(b.w1);
          const T wx0 = T{1} - wx1;
          dst[static_cast<std::size_t>(y) * width + xx] =
              wy0 * (wx0 * r0[b.i0] + wx1 * r0[b.i1]) + wy1 * (wx0 * r1[b.i0] + wx1 * r1[b.i1]);
        }
      }
    }
  if (tape.wants_grad(x)) {
    out->set_requires_grad(true);
    tape.record([x, out, ty, tx, height, width] {
      const Shape s = x->shape();
      const auto& dy = out->grad();
      auto& dx = x->grad();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = dy.data() + out->offset(n, c, 0, 0);
          T* d = dx.data() + x->offset(n, c, 0, 0);
          for (int y = 0; y < height; ++y) {
            const Tap& a = ty[y];
            T* r0 = d + static_cast<std::size_t>(a.i0) * s.w;
            T* r1 = d + static_cast<std::size_t>(a.i1) * s.w;
            const T wy1 = static_cast<T>(a.w1);
            const T wy0 = T{1} - wy1;
            for (int xx = 0; xx < width; ++xx) {
              const Tap& b = tx[xx];
              const T wx1 = static_cast<T>(b.w1);
              const T wx0 = T{1} - wx1;
              const T v = g[static_cast<std::size_t>(y) * width + xx];
              r0[b.i0] += wy0 * wx0 * v;
              r0[b.i1] += wy0 * wx1 * v;
              r1[b.i0] += wy1 * wx0 * v;
              r1[b.i1] += wy1 * wx1 * v;
            }
          }
        }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape, const std::vector<TensorPtr<T>>& xs) {
  require(!xs.empty(), ErrorCode::InvalidArgument, "concat_channels: no inputs");
  const Shape s0 = xs.front()->shape();
  int channels = 0;
  for (const auto& t : xs) {
    const Shape s = t->shape();
    require(s.n == s0.n && s.h == s0.h && s.w == s0.w, ErrorCode::Shape,
            "concat_channels: spatial mismatch " + s.str() + " vs " + s0.str());
    channels += s.c;
  }
  auto out = make_tensor<T>({s0.n, channels, s0.h, s0.w});
  for (int n = 0; n < s0.n; ++n) {
    int c0 = 0;
    for (const auto& t : xs) {
      const std::size_t len = static_cast<std::size_t>(t->shape().c) * s0.plane();
      std::copy_n(t->data().data() + t->offset(n, 0, 0, 0), len,
                  out->data().data() + out->offset(n, c0, 0, 0));
      c0 += t->shape().c;
    }
  }
  bool any = false;
  for (const auto& t : xs) any = any || tape.wants_grad(t);
  if (any) {
    out->set_requires_grad(true);
    tape.record([xs, out] {
      const Shape s0 = out->shape();
      for (int n = 0; n < s0.n; ++n) {
        int c0 = 0;
        for (const auto& t : xs) {
          const std::size_t len = static_cast<std::size_t>(t->shape().c) * s0.plane();
          if (t->requires_grad()) {
            const T* src = out->grad().data() + out->offset(n, c0, 0, 0);
            T* dst = t->grad().data() + t->offset(n, 0, 0, 0);
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
          }
          c0 += t->shape().c;
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> pyramid_pool(Tape<T>& tape, const TensorPtr<T>& x, const std::vector<int>& bins,
                          const std::vector<TensorPtr<T>>& weights, const std::vector<TensorPtr<T>>& biases,
                          double slope) {
  require(bins.size() == weights.size() && bins.size() == biases.size(), ErrorCode::InvalidArgument,
          "pyramid_pool: one weight and bias per bin");
  const Shape s = x->shape();
  std::vector<TensorPtr<T>> parts{x};
  for (std::size_t b = 0; b < bins.size(); ++b) {
    auto pooled = adaptive_avg_pool(tape, x, bins[b]);
    auto branch = leaky_relu(tape, conv2d(tape, pooled, weights[b], biases[b], ConvSpec{}), slope);
    parts.push_back(upsample_bilinear(tape, branch, s.h, s.w));
  }
  return concat_channels(tape, parts);
}

template <typename T>
TensorPtr<T> clip01(Tape<T>& tape, const TensorPtr<T>& x, ClipGrad mode) {
  auto out = make_tensor<T>(x->shape());
  const auto& xd = x->data();
  for (std::size_t i = 0; i < xd.size(); ++i) out->data()[i] = std::clamp(xd[i], T{0}, T{1});
  if (tape.wants_grad(x)) {
    out->set_requires_grad(true);
    tape.record([x, out, mode] {
      const auto& xd = x->data();
      const auto& dy = out->grad();
      auto& dx = x->grad();
      const bool restoring = mode == ClipGrad::Restoring;
      for (std::size_t i = 0; i < xd.size(); ++i) {
        const bool inside = xd[i] >= T{0} && xd[i] <= T{1};
        if (inside || (restoring && ((xd[i] < T{0} && dy[i] < T{0}) || (xd[i] > T{1} && dy[i] > T{0}))))
          dx[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require(a->shape() == b->shape(), ErrorCode::Shape, "add: shape mismatch");
  auto out = make_tensor<T>(a->shape());
  for (std::size_t i = 0; i < out->numel(); ++i) out->data()[i] = a->data()[i] + b->data()[i];
  if (tape.wants_grad(a, b)) {
    out->set_requires_grad(true);
    tape.record([a, b, out] {
      const auto& dy = out->grad();
      if (a->requires_grad())
        for (std::size_t i = 0; i < dy.size(); ++i) a->grad()[i] += dy[i];
      if (b->requires_grad())
        for (std::size_t i = 0; i < dy.size(); ++i) b->grad()[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> soft_iou_click_loss(Tape<T>& tape, const TensorPtr<T>& pred, std::span<const T> gt,
                                 std::span<const LossClick> clicks, double smoothing) {
  const Shape s = pred->shape();
  require(s.n == 1 && s.c == 1, ErrorCode::Shape, "loss: prediction must be [1,1,H,W]");
  require(gt.size() == pred->numel(), ErrorCode::Shape, "loss: prediction/ground-truth size mismatch");
  for (const auto& c : clicks)
    require(c.x >= 0 && c.x < s.w && c.y >= 0 && c.y < s.h, ErrorCode::InvalidArgument,
            "loss: click out of bounds");
  const auto& p = pred->data();
  Acc<T> inter = 0.0;
  Acc<T> uni = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<Acc<T>>(p[i]) * gt[i];
    uni += std::max<Acc<T>>(p[i], gt[i]);
  }
  const Acc<T> num = inter + smoothing;
  const Acc<T> den = uni + smoothing;
  Acc<T> click_term = 0.0;
  for (const auto& c : clicks) {
    const std::size_t i = static_cast<std::size_t>(c.y) * s.w + c.x;
    const Acc<T> d = static_cast<Acc<T>>(p[i]) - gt[i];
    click_term += d * d;
  }
  auto out = make_tensor<T>(Shape{}, static_cast<T>(1.0 - num / den + click_term));
  if (tape.wants_grad(pred)) {
    out->set_requires_grad(true);
    std::vector<T> gt_copy(gt.begin(), gt.end());
    std::vector<LossClick> click_copy(clicks.begin(), clicks.end());
    tape.record([pred, out, gt_copy = std::move(gt_copy), click_copy = std::move(click_copy), num, den] {
      const Acc<T> up = out->grad()[0];
      const auto& p = pred->data();
      auto& dp = pred->grad();
      const int w = pred->shape().w;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const Acc<T> dden = p[i] > gt_copy[i] ? 1.0 : 0.0;
        const Acc<T> g = -(gt_copy[i] * den - num * dden) / (den * den);
        dp[i] += static_cast<T>(up * g);
      }
      for (const auto& c : click_copy) {
        const std::size_t i = static_cast<std::size_t>(c.y) * w + c.x;
        dp[i] += static_cast<T>(up * 2.0 * (static_cast<Acc<T>>(p[i]) - gt_copy[i]));
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> guided_filter_op(Tape<T>& tape, const TensorPtr<T>& input, std::span<const double> guide,
                              int radius, double eps) {
  const Shape s = input->shape();
  require(s.n == 1 && s.c == 1, ErrorCode::Shape, "guided_filter_op: input must be [1,1,H,W]");
  const GuidedFilterParams params{radius, eps};
  std::vector<double> p(input->data().begin(), input->data().end());
  const auto q = guided_filter_raw(guide, p, s.h, s.w, params);
  auto out = make_tensor<T>(s);
  for (std::size_t i = 0; i < q.size(); ++i) out->data()[i] = static_cast<T>(q[i]);
  if (tape.wants_grad(input)) {
    out->set_requires_grad(true);
    std::vector<double> guide_copy(guide.begin(), guide.end());
    tape.record([input, out, guide_copy = std::move(guide_copy), params] {
      const Shape s = input->shape();
      std::vector<double> up(out->grad().begin(), out->grad().end());
      const auto g = guided_filter_raw_backward(guide_copy, up, s.h, s.w, params);
      auto& dx = input->grad();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += static_cast<T>(g[i]);
    });
  }
  return out;
}

#define CLICKSEG_INSTANTIATE_OPS(T)                                                                 \
  template TensorPtr<T> conv2d<T>(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&,              \
                                  const TensorPtr<T>&, ConvSpec);                                   \
  template TensorPtr<T> weight_standardize<T>(Tape<T>&, const TensorPtr<T>&, double);               \
  template TensorPtr<T> group_norm<T>(Tape<T>&, const TensorPtr<T>&, int, const TensorPtr<T>&,      \
                                      const TensorPtr<T>&, double);                                 \
  template TensorPtr<T> leaky_relu<T>(Tape<T>&, const TensorPtr<T>&, double);                       \
  template TensorPtr<T> adaptive_avg_pool<T>(Tape<T>&, const TensorPtr<T>&, int);                   \
  template TensorPtr<T> pyramid_pool<T>(Tape<T>&, const TensorPtr<T>&, const std::vector<int>&,     \
                                        const std::vector<TensorPtr<T>>&,                           \
                                        const std::vector<TensorPtr<T>>&, double);                   \
  template TensorPtr<T> upsample_bilinear<T>(Tape<T>&, const TensorPtr<T>&, int, int);              \
  template TensorPtr<T> concat_channels<T>(Tape<T>&, const std::vector<TensorPtr<T>>&);             \
  template TensorPtr<T> clip01<T>(Tape<T>&, const TensorPtr<T>&, ClipGrad);                               \
  template TensorPtr<T> add<T>(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);                 \
  template TensorPtr<T> soft_iou_click_loss<T>(Tape<T>&, const TensorPtr<T>&, std::span<const T>,   \
                                               std::span<const LossClick>, double);                 \
  template TensorPtr<T> guided_filter_op<T>(Tape<T>&, const TensorPtr<T>&, std::span<const double>, \
                                            int, double);

CLICKSEG_INSTANTIATE_OPS(float)
CLICKSEG_INSTANTIATE_OPS(double)
CLICKSEG_INSTANTIATE_OPS(long double)

#undef CLICKSEG_INSTANTIATE_OPS

}  // namespace clickseg::nn
