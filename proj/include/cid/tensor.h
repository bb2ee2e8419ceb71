/// @file
/// @brief N-dimensional row-major tensor with an optional gradient buffer.

#ifndef CID_TENSOR_H
#define CID_TENSOR_H

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cid {

template <typename S>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<S> data;   // row-major, size == numel()
  std::vector<S> grad;   // empty, or same size as data

  TensorT() = default;

  explicit TensorT(std::vector<int64_t> dims) : shape(std::move(dims)) {
    data.assign(static_cast<size_t>(numel()), S(0));
  }

  TensorT(std::initializer_list<int64_t> dims)
      : TensorT(std::vector<int64_t>(dims)) {}

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  int64_t dim(size_t i) const { return shape.at(i); }
  size_t ndim() const { return shape.size(); }

  void require_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }
  S* grad_ptr() { return grad.data(); }
  const S* grad_ptr() const { return grad.data(); }

  S& operator[](size_t i) { return data[i]; }
  const S& operator[](size_t i) const { return data[i]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <typename S2>
  TensorT<S2> cast() const {
    TensorT<S2> out(shape);
    for (size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<S2>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline void check_shape(const std::vector<int64_t>& got,
                        const std::vector<int64_t>& want,
                        const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                shape_str(want) + ", got " + shape_str(got));
}

}  // namespace cid

#endif  // CID_TENSOR_H
