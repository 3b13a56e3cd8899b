#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "trisim/common.hpp"
#include "trisim/tensor.hpp"

namespace trisim {

// Named trainable tensor with a paired gradient buffer of the same shape.
// Rank is carried by `dims`; data is flat row-major.
template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<T> value;
  std::vector<T> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<int> d)
      : name(std::move(n)), dims(std::move(d)) {
    std::size_t n_elems = 1;
    for (int x : dims) n_elems *= static_cast<std::size_t>(x);
    value.assign(n_elems, T(0));
    grad.assign(n_elems, T(0));
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  // Row-major matrix view helpers for rank-2 params.
  int rows() const { return dims.size() >= 1 ? dims[0] : 0; }
  int cols() const { return dims.size() >= 2 ? dims[1] : 1; }
};

// Convolution kernel, weights laid out (m, n, d_in, d_out) row-major to match
// the B(i,j,d') = sum A(i+m*r, j+n*r, d) * K(m,n,d,d') indexing. One bias per
// output channel.
template <typename T>
struct ConvKernel {
  int k_h = 1, k_l = 1, d_in = 1, d_out = 1;
  std::vector<T> weights;
  std::vector<T> bias;

  ConvKernel() = default;
  ConvKernel(int kh, int kl, int din, int dout)
      : k_h(kh), k_l(kl), d_in(din), d_out(dout),
        weights(static_cast<std::size_t>(kh) * kl * din * dout, T(0)),
        bias(static_cast<std::size_t>(dout), T(0)) {
    if (kh <= 0 || kl <= 0 || din <= 0 || dout <= 0)
      throw ShapeError("ConvKernel: dims must be positive");
  }

  T& w(int m, int n, int d, int dp) {
    return weights[((static_cast<std::size_t>(m) * k_l + n) * d_in + d) * d_out + dp];
  }
  const T& w(int m, int n, int d, int dp) const {
    return weights[((static_cast<std::size_t>(m) * k_l + n) * d_in + d) * d_out + dp];
  }
};

// Visitation handle for one named parameter: checkpointing and the optimizer
// walk these without caring which module owns the storage.
template <typename T>
struct ParamRef {
  std::string name;
  std::vector<int> dims;
  std::vector<T>* value;
  std::vector<T>* grad;
};

template <typename T>
using ParamVisitor = std::function<void(const ParamRef<T>&)>;

// Glorot-style uniform init, biases stay zero.
template <typename T>
void glorot_init(std::vector<T>& w, int fan_in, int fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : w) x = static_cast<T>(rng.uniform(-a, a));
}

}  // namespace trisim
