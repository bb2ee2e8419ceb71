/// @file
/// @brief Bidirectional gated recurrent unit with manual BPTT.
///
/// Gate equations per direction:
///   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
///   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
///   hc_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
///   h_t = (1 - z_t) * h_{t-1} + z_t * hc_t
/// with h_0 = 0. The reverse direction consumes the time-reversed sequence;
/// the two hidden sequences are concatenated along the feature axis.

#ifndef CID_GRU_H
#define CID_GRU_H

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cid/ops.h"
#include "cid/rng.h"
#include "cid/tensor.h"

namespace cid {

template <typename S>
struct GruDir {
  TensorT<S> w_z, w_r, w_h;  // H x D input weights
  TensorT<S> u_z, u_r, u_h;  // H x H recurrent weights
  TensorT<S> b_z, b_r, b_h;  // H biases
};

namespace detail {

template <typename S>
MatRM<S> orthogonal_matrix(int64_t n, Rng& rng) {
  // Gram-Schmidt on a Gaussian matrix, computed in double.
  Eigen::MatrixXd a(n, n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) a(i, j) = rng.normal();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < i; ++j) a.row(i) -= a.row(i).dot(a.row(j)) * a.row(j);
    const double nrm = a.row(i).norm();
    a.row(i) /= (nrm > 1e-12 ? nrm : 1.0);
  }
  return a.cast<S>();
}

}  // namespace detail

template <typename S>
class BiGru {
 public:
  BiGru() = default;
  BiGru(int64_t input_dim, int64_t hidden) : d_(input_dim), h_(hidden) {
    for (GruDir<S>* dir : {&fwd_, &bwd_}) {
      for (TensorT<S>* w : {&dir->w_z, &dir->w_r, &dir->w_h}) *w = TensorT<S>({h_, d_});
      for (TensorT<S>* u : {&dir->u_z, &dir->u_r, &dir->u_h}) *u = TensorT<S>({h_, h_});
      for (TensorT<S>* b : {&dir->b_z, &dir->b_r, &dir->b_h}) *b = TensorT<S>({h_});
    }
  }

  void init_params(Rng& rng) {
    const double lim = std::sqrt(6.0 / static_cast<double>(d_ + h_));
    for (GruDir<S>* dir : {&fwd_, &bwd_}) {
      for (TensorT<S>* w : {&dir->w_z, &dir->w_r, &dir->w_h})
        for (auto& v : w->data) v = static_cast<S>(rng.uniform(-lim, lim));
      for (TensorT<S>* u : {&dir->u_z, &dir->u_r, &dir->u_h}) {
        MatRM<S> q = detail::orthogonal_matrix<S>(h_, rng);
        std::copy(q.data(), q.data() + h_ * h_, u->data.begin());
      }
    }
  }

  int64_t input_dim() const { return d_; }
  int64_t hidden() const { return h_; }

  /// x: B x T x D -> output B x T x 2H.
  TensorT<S> forward(const TensorT<S>& x, bool keep_cache) {
    if (x.ndim() != 3 || x.dim(2) != d_)
      throw std::invalid_argument("bigru: input dim mismatch");
    const int64_t B = x.dim(0), T = x.dim(1);
    TensorT<S> y({B, T, 2 * h_});
    run_direction(fwd_, x, /*reverse=*/false, keep_cache ? &cache_fwd_ : nullptr, y, 0);
    run_direction(bwd_, x, /*reverse=*/true, keep_cache ? &cache_bwd_ : nullptr, y, h_);
    if (keep_cache) x_cache_ = x;
    return y;
  }

  /// dy: B x T x 2H -> dx B x T x D; parameter gradients accumulate.
  TensorT<S> backward(const TensorT<S>& dy) {
    const int64_t B = x_cache_.dim(0), T = x_cache_.dim(1);
    check_shape(dy.shape, {B, T, 2 * h_}, "bigru backward");
    TensorT<S> dx({B, T, d_});
    back_direction(fwd_, cache_fwd_, dy, /*reverse=*/false, dx, 0);
    back_direction(bwd_, cache_bwd_, dy, /*reverse=*/true, dx, h_);
    return dx;
  }

  GruDir<S>& dir_fwd() { return fwd_; }
  GruDir<S>& dir_bwd() { return bwd_; }

  /// Named parameter references, e.g. for the optimizer and checkpoints.
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, TensorT<S>*>>& out) {
    const char* dn[2] = {"fwd", "bwd"};
    GruDir<S>* dirs[2] = {&fwd_, &bwd_};
    for (int i = 0; i < 2; ++i) {
      out.emplace_back(prefix + "." + dn[i] + ".w_z", &dirs[i]->w_z);
      out.emplace_back(prefix + "." + dn[i] + ".w_r", &dirs[i]->w_r);
      out.emplace_back(prefix + "." + dn[i] + ".w_h", &dirs[i]->w_h);
      out.emplace_back(prefix + "." + dn[i] + ".u_z", &dirs[i]->u_z);
      out.emplace_back(prefix + "." + dn[i] + ".u_r", &dirs[i]->u_r);
      out.emplace_back(prefix + "." + dn[i] + ".u_h", &dirs[i]->u_h);
      out.emplace_back(prefix + "." + dn[i] + ".b_z", &dirs[i]->b_z);
      out.emplace_back(prefix + "." + dn[i] + ".b_r", &dirs[i]->b_r);
      out.emplace_back(prefix + "." + dn[i] + ".b_h", &dirs[i]->b_h);
    }
  }

 private:
  struct Cache {
    std::vector<MatRM<S>> z, r, hc, h_prev;  // one entry per step, B x H
  };

  static S sigmoid(S v) { return S(1) / (S(1) + std::exp(-v)); }

  void run_direction(const GruDir<S>& p, const TensorT<S>& x, bool reverse,
                     Cache* cache, TensorT<S>& y, int64_t out_off) const {
    const int64_t B = x.dim(0), T = x.dim(1);
    CMapM<S> wz(p.w_z.ptr(), h_, d_), wr(p.w_r.ptr(), h_, d_), wh(p.w_h.ptr(), h_, d_);
    CMapM<S> uz(p.u_z.ptr(), h_, h_), ur(p.u_r.ptr(), h_, h_), uh(p.u_h.ptr(), h_, h_);
    Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> bz(p.b_z.ptr(), h_),
        br(p.b_r.ptr(), h_), bh(p.b_h.ptr(), h_);

    // Input projections for all steps at once.
    CMapM<S> xall(x.ptr(), B * T, d_);
    MatRM<S> az = xall * wz.transpose();
    MatRM<S> ar = xall * wr.transpose();
    MatRM<S> ah = xall * wh.transpose();

    if (cache) {
      cache->z.assign(static_cast<size_t>(T), MatRM<S>());
      cache->r.assign(static_cast<size_t>(T), MatRM<S>());
      cache->hc.assign(static_cast<size_t>(T), MatRM<S>());
      cache->h_prev.assign(static_cast<size_t>(T), MatRM<S>());
    }

    MatRM<S> h = MatRM<S>::Zero(B, h_);
    MatRM<S> z(B, h_), r(B, h_), hc(B, h_), rh(B, h_);
    for (int64_t s = 0; s < T; ++s) {
      const int64_t t = reverse ? T - 1 - s : s;
      // Gather this step's input projections (rows n*T + t).
      for (int64_t n = 0; n < B; ++n) {
        z.row(n) = az.row(n * T + t);
        r.row(n) = ar.row(n * T + t);
        hc.row(n) = ah.row(n * T + t);
      }
      z.noalias() += h * uz.transpose();
      r.noalias() += h * ur.transpose();
      z.rowwise() += bz;
      r.rowwise() += br;
      z = z.unaryExpr([](S v) { return sigmoid(v); });
      r = r.unaryExpr([](S v) { return sigmoid(v); });
      rh = r.cwiseProduct(h);
      hc.noalias() += rh * uh.transpose();
      hc.rowwise() += bh;
      hc = hc.array().tanh().matrix();
      if (cache) {
        cache->z[static_cast<size_t>(t)] = z;
        cache->r[static_cast<size_t>(t)] = r;
        cache->hc[static_cast<size_t>(t)] = hc;
        cache->h_prev[static_cast<size_t>(t)] = h;
      }
      h = (MatRM<S>::Ones(B, h_) - z).cwiseProduct(h) + z.cwiseProduct(hc);
      for (int64_t n = 0; n < B; ++n)
        std::copy(h.row(n).data(), h.row(n).data() + h_,
                  y.ptr() + ((n * T + t) * 2 * h_) + out_off);
    }
  }

  void back_direction(GruDir<S>& p, const Cache& cache, const TensorT<S>& dy,
                      bool reverse, TensorT<S>& dx, int64_t out_off) {
    const int64_t B = x_cache_.dim(0), T = x_cache_.dim(1);
    for (TensorT<S>* t : {&p.w_z, &p.w_r, &p.w_h, &p.u_z, &p.u_r, &p.u_h,
                          &p.b_z, &p.b_r, &p.b_h})
      t->require_grad();
    CMapM<S> wz(p.w_z.ptr(), h_, d_), wr(p.w_r.ptr(), h_, d_), wh(p.w_h.ptr(), h_, d_);
    CMapM<S> uz(p.u_z.ptr(), h_, h_), ur(p.u_r.ptr(), h_, h_), uh(p.u_h.ptr(), h_, h_);
    MapM<S> gwz(p.w_z.grad_ptr(), h_, d_), gwr(p.w_r.grad_ptr(), h_, d_),
        gwh(p.w_h.grad_ptr(), h_, d_);
    MapM<S> guz(p.u_z.grad_ptr(), h_, h_), gur(p.u_r.grad_ptr(), h_, h_),
        guh(p.u_h.grad_ptr(), h_, h_);

    MatRM<S> xt(B, d_);
    MatRM<S> dh = MatRM<S>::Zero(B, h_);
    for (int64_t s = T - 1; s >= 0; --s) {
      const int64_t t = reverse ? T - 1 - s : s;
      const MatRM<S>& z = cache.z[static_cast<size_t>(t)];
      const MatRM<S>& r = cache.r[static_cast<size_t>(t)];
      const MatRM<S>& hc = cache.hc[static_cast<size_t>(t)];
      const MatRM<S>& hp = cache.h_prev[static_cast<size_t>(t)];
      for (int64_t n = 0; n < B; ++n) {
        const S* src = dy.ptr() + (n * T + t) * 2 * h_ + out_off;
        for (int64_t k = 0; k < h_; ++k) dh(n, k) += src[k];
        std::copy(x_cache_.ptr() + (n * T + t) * d_,
                  x_cache_.ptr() + (n * T + t) * d_ + d_, xt.row(n).data());
      }
      MatRM<S> dz = dh.cwiseProduct(hc - hp);
      MatRM<S> dhc = dh.cwiseProduct(z);
      MatRM<S> dhp = dh.cwiseProduct(MatRM<S>::Ones(B, h_) - z);

      MatRM<S> dah = dhc.cwiseProduct(MatRM<S>::Ones(B, h_) - hc.cwiseProduct(hc));
      gwh.noalias() += dah.transpose() * xt;
      guh.noalias() += dah.transpose() * r.cwiseProduct(hp);
      for (int64_t n = 0; n < B; ++n)
        for (int64_t k = 0; k < h_; ++k) p.b_h.grad[static_cast<size_t>(k)] += dah(n, k);
      MatRM<S> drh = dah * uh;
      MatRM<S> dr = drh.cwiseProduct(hp);
      dhp += drh.cwiseProduct(r);

      MatRM<S> daz = dz.cwiseProduct(z).cwiseProduct(MatRM<S>::Ones(B, h_) - z);
      MatRM<S> dar = dr.cwiseProduct(r).cwiseProduct(MatRM<S>::Ones(B, h_) - r);
      gwz.noalias() += daz.transpose() * xt;
      gwr.noalias() += dar.transpose() * xt;
      guz.noalias() += daz.transpose() * hp;
      gur.noalias() += dar.transpose() * hp;
      for (int64_t n = 0; n < B; ++n)
        for (int64_t k = 0; k < h_; ++k) {
          p.b_z.grad[static_cast<size_t>(k)] += daz(n, k);
          p.b_r.grad[static_cast<size_t>(k)] += dar(n, k);
        }
      dhp.noalias() += daz * uz;
      dhp.noalias() += dar * ur;

      MatRM<S> dxt = dah * wh + daz * wz + dar * wr;
      for (int64_t n = 0; n < B; ++n) {
        S* dst = dx.ptr() + (n * T + t) * d_;
        for (int64_t k = 0; k < d_; ++k) dst[k] += dxt(n, k);
      }
      dh = dhp;
    }
  }

  int64_t d_ = 0, h_ = 0;
  GruDir<S> fwd_, bwd_;
  TensorT<S> x_cache_;
  Cache cache_fwd_, cache_bwd_;
};

}  // namespace cid

#endif  // CID_GRU_H
