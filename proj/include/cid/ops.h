/// @file
/// @brief Differentiable kernels: conv2d, batch norm, pooling, linear,
///        relu, dropout, softmax cross entropy.
///
/// Every kernel comes as a forward/backward pair templated on the scalar
/// type. Training instantiates float; the gradient-check harness
/// instantiates double. Backward functions accumulate parameter gradients
/// into the .grad buffer of the parameter tensor and return the input
/// gradient as a fresh tensor.

#ifndef CID_OPS_H
#define CID_OPS_H

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "cid/rng.h"
#include "cid/tensor.h"

namespace cid {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapM = Eigen::Map<const MatRM<S>>;

namespace detail {

// Shifted copy with zero padding: dst[c][y][x] = src[c][y+sy][x+sx], where
// out-of-range source cells read as zero. sy, sx in {-1, 0, 1}.
template <typename S>
void build_shifted(S* dst, const S* src, int64_t C, int64_t H, int64_t W,
                   int sy, int sx) {
  const int64_t x0 = std::max<int64_t>(0, -sx);
  const int64_t x1 = std::min<int64_t>(W, W - sx);
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t y = 0; y < H; ++y) {
      S* drow = dst + (c * H + y) * W;
      const int64_t ys = y + sy;
      if (ys < 0 || ys >= H || x0 >= x1) {
        std::fill(drow, drow + W, S(0));
        continue;
      }
      if (x0 > 0) std::fill(drow, drow + x0, S(0));
      if (x1 < W) std::fill(drow + x1, drow + W, S(0));
      const S* srow = src + (c * H + ys) * W + x0 + sx;
      std::memcpy(drow + x0, srow, static_cast<size_t>(x1 - x0) * sizeof(S));
    }
  }
}

// Scatter-add with shift: dst[c][y+sy][x+sx] += src[c][y][x] for targets
// inside the image.
template <typename S>
void add_shifted(S* dst, const S* src, int64_t C, int64_t H, int64_t W,
                 int sy, int sx) {
  const int64_t x0 = std::max<int64_t>(0, -sx);
  const int64_t x1 = std::min<int64_t>(W, W - sx);
  if (x0 >= x1) return;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t y = 0; y < H; ++y) {
      const int64_t yt = y + sy;
      if (yt < 0 || yt >= H) continue;
      S* drow = dst + (c * H + yt) * W + x0 + sx;
      const S* srow = src + (c * H + y) * W + x0;
      for (int64_t i = 0; i < x1 - x0; ++i) drow[i] += srow[i];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: 3x3 kernel, stride 1, same padding.
//
// Computed as nine shifted GEMMs: for each kernel offset o the contribution
// is W_o (Cout x Cin) times the zero-padded shifted image (Cin x H*W). This
// keeps peak memory at one image-sized scratch buffer instead of an
// im2col matrix.
// ---------------------------------------------------------------------------

template <typename S>
void conv2d_forward(const TensorT<S>& x, const TensorT<S>& w,
                    const TensorT<S>& b, TensorT<S>& y) {
  if (x.ndim() != 4 || w.ndim() != 4) throw std::invalid_argument("conv2d: need 4-d tensors");
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0);
  if (w.dim(1) != Cin) throw std::invalid_argument("conv2d: channel mismatch");
  if (w.dim(2) != 3 || w.dim(3) != 3) throw std::invalid_argument("conv2d: kernel must be 3x3");
  if (b.numel() != Cout) throw std::invalid_argument("conv2d: bias size mismatch");

  y = TensorT<S>({B, Cout, H, W});
  const int64_t HW = H * W;
  for (int64_t n = 0; n < B; ++n)
    for (int64_t co = 0; co < Cout; ++co) {
      S* row = y.ptr() + (n * Cout + co) * HW;
      std::fill(row, row + HW, b[static_cast<size_t>(co)]);
    }

  std::vector<S> shifted(static_cast<size_t>(Cin * HW));
  std::vector<S> wo(static_cast<size_t>(Cout * Cin));
  for (int dy = 0; dy < 3; ++dy) {
    for (int dx = 0; dx < 3; ++dx) {
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t ci = 0; ci < Cin; ++ci)
          wo[static_cast<size_t>(co * Cin + ci)] =
              w.data[static_cast<size_t>(((co * Cin + ci) * 3 + dy) * 3 + dx)];
      CMapM<S> wmat(wo.data(), Cout, Cin);
      for (int64_t n = 0; n < B; ++n) {
        detail::build_shifted(shifted.data(), x.ptr() + n * Cin * HW, Cin, H, W,
                              dy - 1, dx - 1);
        CMapM<S> smat(shifted.data(), Cin, HW);
        MapM<S> ymat(y.ptr() + n * Cout * HW, Cout, HW);
        ymat.noalias() += wmat * smat;
      }
    }
  }
}

template <typename S>
TensorT<S> conv2d_backward(const TensorT<S>& x, TensorT<S>& w, TensorT<S>& b,
                           const TensorT<S>& dy) {
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0);
  const int64_t HW = H * W;
  w.require_grad();
  b.require_grad();
  TensorT<S> dx({B, Cin, H, W});

  for (int64_t n = 0; n < B; ++n)
    for (int64_t co = 0; co < Cout; ++co) {
      const S* row = dy.ptr() + (n * Cout + co) * HW;
      double s = 0.0;
      for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(row[i]);
      b.grad[static_cast<size_t>(co)] += static_cast<S>(s);
    }

  std::vector<S> shifted(static_cast<size_t>(Cin * HW));
  std::vector<S> gbuf(static_cast<size_t>(Cin * HW));
  std::vector<S> wo(static_cast<size_t>(Cout * Cin));
  MatRM<S> dwo(Cout, Cin);
  for (int dy_k = 0; dy_k < 3; ++dy_k) {
    for (int dx_k = 0; dx_k < 3; ++dx_k) {
      const int sy = dy_k - 1, sx = dx_k - 1;
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t ci = 0; ci < Cin; ++ci)
          wo[static_cast<size_t>(co * Cin + ci)] =
              w.data[static_cast<size_t>(((co * Cin + ci) * 3 + dy_k) * 3 + dx_k)];
      CMapM<S> wmat(wo.data(), Cout, Cin);
      dwo.setZero();
      for (int64_t n = 0; n < B; ++n) {
        CMapM<S> dymat(dy.ptr() + n * Cout * HW, Cout, HW);
        // dW_o += dY * S_o^T
        detail::build_shifted(shifted.data(), x.ptr() + n * Cin * HW, Cin, H, W,
                              sy, sx);
        CMapM<S> smat(shifted.data(), Cin, HW);
        dwo.noalias() += dymat * smat.transpose();
        // dX gets W_o^T * dY scattered back through the shift.
        MapM<S> gmat(gbuf.data(), Cin, HW);
        gmat.noalias() = wmat.transpose() * dymat;
        detail::add_shifted(dx.ptr() + n * Cin * HW, gbuf.data(), Cin, H, W,
                            sy, sx);
      }
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t ci = 0; ci < Cin; ++ci)
          w.grad[static_cast<size_t>(((co * Cin + ci) * 3 + dy_k) * 3 + dx_k)] +=
              dwo(co, ci);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over (B, H, W) per channel.
// ---------------------------------------------------------------------------

template <typename S>
struct BnCache {
  std::vector<S> mean;     // per channel, the stats used by this forward
  std::vector<S> inv_std;
  bool train = false;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9;

template <typename S>
void batch_norm2d_forward(const TensorT<S>& x, const TensorT<S>& gamma,
                          const TensorT<S>& beta, TensorT<S>& running_mean,
                          TensorT<S>& running_var, bool train, TensorT<S>& y,
                          BnCache<S>& cache) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t HW = H * W;
  const int64_t N = B * HW;
  y = TensorT<S>(x.shape);
  cache.mean.assign(static_cast<size_t>(C), S(0));
  cache.inv_std.assign(static_cast<size_t>(C), S(0));
  cache.train = train;

  for (int64_t c = 0; c < C; ++c) {
    double mu, var;
    if (train) {
      double s1 = 0.0, s2 = 0.0;
      for (int64_t n = 0; n < B; ++n) {
        const S* row = x.ptr() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double v = static_cast<double>(row[i]);
          s1 += v;
          s2 += v * v;
        }
      }
      mu = s1 / static_cast<double>(N);
      var = s2 / static_cast<double>(N) - mu * mu;
      if (var < 0.0) var = 0.0;
      running_mean[static_cast<size_t>(c)] = static_cast<S>(
          kBnMomentum * running_mean[static_cast<size_t>(c)] + (1.0 - kBnMomentum) * mu);
      running_var[static_cast<size_t>(c)] = static_cast<S>(
          kBnMomentum * running_var[static_cast<size_t>(c)] + (1.0 - kBnMomentum) * var);
    } else {
      mu = static_cast<double>(running_mean[static_cast<size_t>(c)]);
      var = static_cast<double>(running_var[static_cast<size_t>(c)]);
    }
    const double inv_std = 1.0 / std::sqrt(var + kBnEps);
    cache.mean[static_cast<size_t>(c)] = static_cast<S>(mu);
    cache.inv_std[static_cast<size_t>(c)] = static_cast<S>(inv_std);
    const S g = gamma[static_cast<size_t>(c)], bt = beta[static_cast<size_t>(c)];
    const S a = static_cast<S>(inv_std) * g;
    const S o = static_cast<S>(bt - mu * inv_std * g);
    for (int64_t n = 0; n < B; ++n) {
      const S* row = x.ptr() + (n * C + c) * HW;
      S* out = y.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) out[i] = a * row[i] + o;
    }
  }
}

template <typename S>
TensorT<S> batch_norm2d_backward(const TensorT<S>& x, TensorT<S>& gamma,
                                 TensorT<S>& beta, const TensorT<S>& dy,
                                 const BnCache<S>& cache) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t HW = H * W;
  const int64_t N = B * HW;
  gamma.require_grad();
  beta.require_grad();
  TensorT<S> dx(x.shape);

  for (int64_t c = 0; c < C; ++c) {
    const double mu = static_cast<double>(cache.mean[static_cast<size_t>(c)]);
    const double is = static_cast<double>(cache.inv_std[static_cast<size_t>(c)]);
    const double g = static_cast<double>(gamma[static_cast<size_t>(c)]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t n = 0; n < B; ++n) {
      const S* xr = x.ptr() + (n * C + c) * HW;
      const S* dr = dy.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const double xhat = (static_cast<double>(xr[i]) - mu) * is;
        sum_dy += static_cast<double>(dr[i]);
        sum_dy_xhat += static_cast<double>(dr[i]) * xhat;
      }
    }
    gamma.grad[static_cast<size_t>(c)] += static_cast<S>(sum_dy_xhat);
    beta.grad[static_cast<size_t>(c)] += static_cast<S>(sum_dy);
    if (cache.train) {
      const double m1 = sum_dy / static_cast<double>(N);
      const double m2 = sum_dy_xhat / static_cast<double>(N);
      for (int64_t n = 0; n < B; ++n) {
        const S* xr = x.ptr() + (n * C + c) * HW;
        const S* dr = dy.ptr() + (n * C + c) * HW;
        S* o = dx.ptr() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double xhat = (static_cast<double>(xr[i]) - mu) * is;
          o[i] = static_cast<S>(g * is * (static_cast<double>(dr[i]) - m1 - xhat * m2));
        }
      }
    } else {
      // Frozen statistics: the affine map is the whole dependence on x.
      const S a = static_cast<S>(g * is);
      for (int64_t n = 0; n < B; ++n) {
        const S* dr = dy.ptr() + (n * C + c) * HW;
        S* o = dx.ptr() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) o[i] = a * dr[i];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling.
// ---------------------------------------------------------------------------

template <typename S>
void avg_pool2x2_forward(const TensorT<S>& x, TensorT<S>& y) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < 2 || W < 2) throw std::invalid_argument("avg_pool2x2: H and W must be >= 2");
  const int64_t Ho = H / 2, Wo = W / 2;
  y = TensorT<S>({B, C, Ho, Wo});
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const S* in = x.ptr() + (n * C + c) * H * W;
      S* out = y.ptr() + (n * C + c) * Ho * Wo;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          const S* p = in + 2 * i * W + 2 * j;
          out[i * Wo + j] = static_cast<S>(0.25) * (p[0] + p[1] + p[W] + p[W + 1]);
        }
    }
}

template <typename S>
TensorT<S> avg_pool2x2_backward(const std::vector<int64_t>& x_shape,
                                const TensorT<S>& dy) {
  const int64_t B = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
  const int64_t Ho = H / 2, Wo = W / 2;
  TensorT<S> dx(x_shape);
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c) {
      S* out = dx.ptr() + (n * C + c) * H * W;
      const S* g = dy.ptr() + (n * C + c) * Ho * Wo;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          const S v = static_cast<S>(0.25) * g[i * Wo + j];
          S* p = out + 2 * i * W + 2 * j;
          p[0] += v;
          p[1] += v;
          p[W] += v;
          p[W + 1] += v;
        }
    }
  return dx;
}

/// Max over the spatial plane per (batch, channel); argmax is the first
/// maximal element in row-major order, where the backward gradient lands.
template <typename S>
void global_max_pool_forward(const TensorT<S>& x, TensorT<S>& y,
                             std::vector<int64_t>& argmax) {
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  y = TensorT<S>({B, C});
  argmax.assign(static_cast<size_t>(B * C), 0);
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const S* in = x.ptr() + (n * C + c) * HW;
      S best = in[0];
      int64_t bi = 0;
      for (int64_t i = 1; i < HW; ++i)
        if (in[i] > best) {
          best = in[i];
          bi = i;
        }
      y[static_cast<size_t>(n * C + c)] = best;
      argmax[static_cast<size_t>(n * C + c)] = bi;
    }
}

template <typename S>
TensorT<S> global_max_pool_backward(const std::vector<int64_t>& x_shape,
                                    const TensorT<S>& dy,
                                    const std::vector<int64_t>& argmax) {
  const int64_t B = x_shape[0], C = x_shape[1], HW = x_shape[2] * x_shape[3];
  TensorT<S> dx(x_shape);
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c)
      dx.data[static_cast<size_t>((n * C + c) * HW + argmax[static_cast<size_t>(n * C + c)])] +=
          dy[static_cast<size_t>(n * C + c)];
  return dx;
}

/// Max over time for sequence tensors B x T x D.
template <typename S>
void temporal_max_pool_forward(const TensorT<S>& x, TensorT<S>& y,
                               std::vector<int64_t>& argmax) {
  const int64_t B = x.dim(0), T = x.dim(1), D = x.dim(2);
  y = TensorT<S>({B, D});
  argmax.assign(static_cast<size_t>(B * D), 0);
  for (int64_t n = 0; n < B; ++n)
    for (int64_t d = 0; d < D; ++d) {
      S best = x.data[static_cast<size_t>(n * T * D + d)];
      int64_t bi = 0;
      for (int64_t t = 1; t < T; ++t) {
        const S v = x.data[static_cast<size_t>((n * T + t) * D + d)];
        if (v > best) {
          best = v;
          bi = t;
        }
      }
      y[static_cast<size_t>(n * D + d)] = best;
      argmax[static_cast<size_t>(n * D + d)] = bi;
    }
}

template <typename S>
TensorT<S> temporal_max_pool_backward(const std::vector<int64_t>& x_shape,
                                      const TensorT<S>& dy,
                                      const std::vector<int64_t>& argmax) {
  const int64_t B = x_shape[0], T = x_shape[1], D = x_shape[2];
  TensorT<S> dx(x_shape);
  for (int64_t n = 0; n < B; ++n)
    for (int64_t d = 0; d < D; ++d)
      dx.data[static_cast<size_t>((n * T + argmax[static_cast<size_t>(n * D + d)]) * D + d)] +=
          dy[static_cast<size_t>(n * D + d)];
  return dx;
}

/// Mean over the last (frequency) axis of conv features, transposed to a
/// sequence layout: B x C x H x W -> B x H x C.
template <typename S>
void freq_mean_forward(const TensorT<S>& x, TensorT<S>& y) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  y = TensorT<S>({B, H, C});
  const S inv = static_cast<S>(1.0 / static_cast<double>(W));
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H; ++h) {
        const S* row = x.ptr() + ((n * C + c) * H + h) * W;
        S s = 0;
        for (int64_t w_i = 0; w_i < W; ++w_i) s += row[w_i];
        y.data[static_cast<size_t>((n * H + h) * C + c)] = s * inv;
      }
}

template <typename S>
TensorT<S> freq_mean_backward(const std::vector<int64_t>& x_shape,
                              const TensorT<S>& dy) {
  const int64_t B = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
  TensorT<S> dx(x_shape);
  const S inv = static_cast<S>(1.0 / static_cast<double>(W));
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H; ++h) {
        const S g = dy.data[static_cast<size_t>((n * H + h) * C + c)] * inv;
        S* row = dx.ptr() + ((n * C + c) * H + h) * W;
        for (int64_t w_i = 0; w_i < W; ++w_i) row[w_i] += g;
      }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear, ReLU, dropout.
// ---------------------------------------------------------------------------

/// y = x * w + b with x: B x D, w: D x E, b: E.
template <typename S>
void linear_forward(const TensorT<S>& x, const TensorT<S>& w,
                    const TensorT<S>& b, TensorT<S>& y) {
  const int64_t B = x.dim(0), D = x.dim(1);
  if (w.dim(0) != D) throw std::invalid_argument("linear: shape mismatch");
  const int64_t E = w.dim(1);
  if (b.numel() != E) throw std::invalid_argument("linear: bias size mismatch");
  y = TensorT<S>({B, E});
  CMapM<S> xm(x.ptr(), B, D);
  CMapM<S> wm(w.ptr(), D, E);
  MapM<S> ym(y.ptr(), B, E);
  ym.noalias() = xm * wm;
  for (int64_t n = 0; n < B; ++n)
    for (int64_t e = 0; e < E; ++e) y.data[static_cast<size_t>(n * E + e)] += b[static_cast<size_t>(e)];
}

template <typename S>
TensorT<S> linear_backward(const TensorT<S>& x, TensorT<S>& w, TensorT<S>& b,
                           const TensorT<S>& dy) {
  const int64_t B = x.dim(0), D = x.dim(1), E = w.dim(1);
  w.require_grad();
  b.require_grad();
  TensorT<S> dx({B, D});
  CMapM<S> xm(x.ptr(), B, D);
  CMapM<S> wm(w.ptr(), D, E);
  CMapM<S> dym(dy.ptr(), B, E);
  MapM<S> dxm(dx.ptr(), B, D);
  MapM<S> dwm(w.grad_ptr(), D, E);
  dxm.noalias() = dym * wm.transpose();
  dwm.noalias() += xm.transpose() * dym;
  for (int64_t n = 0; n < B; ++n)
    for (int64_t e = 0; e < E; ++e) b.grad[static_cast<size_t>(e)] += dy[static_cast<size_t>(n * E + e)];
  return dx;
}

template <typename S>
void relu_forward(const TensorT<S>& x, TensorT<S>& y) {
  y = TensorT<S>(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i)
    y.data[i] = x.data[i] > S(0) ? x.data[i] : S(0);
}

template <typename S>
TensorT<S> relu_backward(const TensorT<S>& y, const TensorT<S>& dy) {
  TensorT<S> dx(y.shape);
  for (size_t i = 0; i < y.data.size(); ++i)
    dx.data[i] = y.data[i] > S(0) ? dy.data[i] : S(0);
  return dx;
}

/// Inverted dropout. In train mode kept units are scaled by 1/(1-rate); in
/// eval mode the op is the identity and no mask is drawn.
template <typename S>
void dropout_forward(const TensorT<S>& x, double rate, bool train, Rng& rng,
                     TensorT<S>& y, std::vector<uint8_t>& mask) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) {
    y = x;
    mask.clear();
    return;
  }
  y = TensorT<S>(x.shape);
  mask.assign(x.data.size(), 1);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < x.data.size(); ++i) {
    if (rng.uniform() < rate) {
      mask[i] = 0;
      y.data[i] = S(0);
    } else {
      y.data[i] = x.data[i] * scale;
    }
  }
}

template <typename S>
TensorT<S> dropout_backward(const TensorT<S>& dy, double rate,
                            const std::vector<uint8_t>& mask) {
  if (mask.empty()) return dy;  // identity pass
  TensorT<S> dx(dy.shape);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < dy.data.size(); ++i)
    dx.data[i] = mask[i] ? dy.data[i] * scale : S(0);
  return dx;
}

// ---------------------------------------------------------------------------
// Softmax and categorical cross entropy.
// ---------------------------------------------------------------------------

template <typename S>
void softmax_rows(const TensorT<S>& logits, TensorT<S>& probs) {
  const int64_t B = logits.dim(0), C = logits.dim(1);
  probs = TensorT<S>({B, C});
  for (int64_t n = 0; n < B; ++n) {
    const S* in = logits.ptr() + n * C;
    S* out = probs.ptr() + n * C;
    S mx = in[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double e = std::exp(static_cast<double>(in[c] - mx));
      out[c] = static_cast<S>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int64_t c = 0; c < C; ++c) out[c] = static_cast<S>(static_cast<double>(out[c]) * inv);
  }
}

/// Mean cross entropy over the batch; grad is (softmax - onehot) / B.
template <typename S>
S softmax_crossentropy(const TensorT<S>& logits, const std::vector<int>& labels,
                       TensorT<S>& dlogits) {
  const int64_t B = logits.dim(0), C = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw std::invalid_argument("softmax_crossentropy: label count mismatch");
  TensorT<S> probs;
  softmax_rows(logits, probs);
  dlogits = TensorT<S>({B, C});
  double loss = 0.0;
  const S invb = static_cast<S>(1.0 / static_cast<double>(B));
  for (int64_t n = 0; n < B; ++n) {
    const int lab = labels[static_cast<size_t>(n)];
    if (lab < 0 || lab >= C) throw std::out_of_range("softmax_crossentropy: invalid label");
    const S* p = probs.ptr() + n * C;
    loss -= std::log(std::max(static_cast<double>(p[lab]), 1e-300));
    S* d = dlogits.ptr() + n * C;
    for (int64_t c = 0; c < C; ++c) d[c] = p[c] * invb;
    d[lab] -= invb;
  }
  return static_cast<S>(loss / static_cast<double>(B));
}

}  // namespace cid

#endif  // CID_OPS_H
