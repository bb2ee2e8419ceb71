/// @file
/// @brief Adam optimizer with bias correction.

#ifndef CID_ADAM_H
#define CID_ADAM_H

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cid/tensor.h"

namespace cid {

template <typename S>
struct AdamState {
  int64_t step = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<S>> m, v;  // one buffer per parameter
};

/// One update: m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
/// p <- p - lr * mhat / (sqrt(vhat) + eps).
template <typename S>
void adam_step(std::vector<TensorT<S>*>& params, AdamState<S>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->data.size(), S(0));
      state.v[i].assign(params[i]->data.size(), S(0));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state/parameter count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    TensorT<S>& p = *params[i];
    if (p.grad.size() != p.data.size())
      throw std::invalid_argument("adam_step: parameter has no gradient");
    if (state.m[i].size() != p.data.size())
      throw std::invalid_argument("adam_step: moment shape mismatch");
    for (size_t j = 0; j < p.data.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      const double m = state.beta1 * static_cast<double>(state.m[i][j]) + (1.0 - state.beta1) * g;
      const double v = state.beta2 * static_cast<double>(state.v[i][j]) + (1.0 - state.beta2) * g * g;
      state.m[i][j] = static_cast<S>(m);
      state.v[i][j] = static_cast<S>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.data[j] = static_cast<S>(static_cast<double>(p.data[j]) -
                                 state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace cid

#endif  // CID_ADAM_H
