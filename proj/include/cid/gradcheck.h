/// @file
/// @brief Central finite-difference gradient verification (64-bit).
///
/// The analytic gradients live in each tensor's .grad buffer; loss() must
/// recompute the scalar objective from the tensors' current .data. Dropout
/// must be disabled and batch norm frozen so the objective is smooth and
/// deterministic.

#ifndef CID_GRADCHECK_H
#define CID_GRADCHECK_H

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "cid/rng.h"
#include "cid/tensor.h"

namespace cid {

inline constexpr double kGradCheckEps = 1e-3;

/// Relative error with an absolute floor, so near-zero gradient pairs do not
/// blow up the ratio.
inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-3});
  return std::fabs(a - b) / scale;
}

/// Checks up to n_coords distinct coordinates of one tensor. Returns the max
/// relative error between the stored analytic gradient and (f(x+e)-f(x-e))/2e.
inline double check_tensor_grads(const std::function<double()>& loss,
                                 TensorT<double>& t, int n_coords, double eps,
                                 Rng& rng) {
  const size_t n = t.data.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  const size_t k = std::min(n, static_cast<size_t>(n_coords));
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  double worst = 0.0;
  for (size_t i = 0; i < k; ++i) {
    const size_t c = idx[i];
    const double v = t.data[c];
    t.data[c] = v + eps;
    const double lp = loss();
    t.data[c] = v - eps;
    const double lm = loss();
    t.data[c] = v;
    const double numeric = (lp - lm) / (2.0 * eps);
    worst = std::max(worst, rel_err(numeric, t.grad[c]));
  }
  return worst;
}

/// Spreads ~n_coords samples across several tensors (at least a few each).
inline double check_many_tensor_grads(const std::function<double()>& loss,
                                      std::vector<TensorT<double>*> tensors,
                                      int total_coords, double eps, Rng& rng) {
  double worst = 0.0;
  const int per = std::max(1, total_coords / static_cast<int>(tensors.size()));
  for (auto* t : tensors)
    worst = std::max(worst, check_tensor_grads(loss, *t, per, eps, rng));
  return worst;
}

}  // namespace cid

#endif  // CID_GRADCHECK_H
