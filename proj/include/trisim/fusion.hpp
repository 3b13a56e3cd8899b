#pragma once

#include <string>
#include <vector>

#include "trisim/ops.hpp"
#include "trisim/param.hpp"
#include "trisim/tensor.hpp"

namespace trisim {

// Convolution parameters with paired gradients.
template <typename T>
struct ConvParam {
  std::string name;
  ConvKernel<T> k;
  std::vector<T> gw, gb;

  void init(std::string n, int kh, int kl, int din, int dout, Rng& rng) {
    name = std::move(n);
    k = ConvKernel<T>(kh, kl, din, dout);
    glorot_init(k.weights, kh * kl * din, kh * kl * dout, rng);
    gw.assign(k.weights.size(), T(0));
    gb.assign(k.bias.size(), T(0));
  }

  void visit(const ParamVisitor<T>& f) {
    f({name + ".w", {k.k_h, k.k_l, k.d_in, k.d_out}, &k.weights, &gw});
    f({name + ".b", {k.d_out}, &k.bias, &gb});
  }
};

// -----------------------------------------------------------------------------
// Receptive Field Module. Branch i applies a size-s_i convolution (psi_i,
// D' -> D''), then a fixed-size dilated convolution (phi_i, rate r_i,
// D'' -> D''), then ReLU. A 1x1 shortcut (phi_0, no activation) joins the
// branch outputs in a feature-axis concatenation, squashed once by sigmoid.
// Both sentence branches share one instance.

template <typename T>
struct RfmParams {
  struct Branch {
    ConvParam<T> psi, phi;
    int dilation = 1;
  };
  std::vector<Branch> branches;
  ConvParam<T> shortcut;

  void init(const std::vector<int>& psi_sizes, int phi_size, const std::vector<int>& dilations,
            int d_prime, int d_dprime, Rng& rng) {
    if (psi_sizes.size() != dilations.size() || psi_sizes.empty())
      throw ArgumentError("RfmParams: need matching, non-empty psi sizes and dilation rates");
    branches.clear();
    for (std::size_t i = 0; i < psi_sizes.size(); ++i) {
      Branch b;
      const std::string p = "rfm.branch" + std::to_string(i) + ".";
      b.psi.init(p + "psi", psi_sizes[i], psi_sizes[i], d_prime, d_dprime, rng);
      b.phi.init(p + "phi", phi_size, phi_size, d_dprime, d_dprime, rng);
      b.dilation = dilations[i];
      branches.push_back(std::move(b));
    }
    shortcut.init("rfm.shortcut", 1, 1, d_prime, d_dprime, rng);
  }

  int out_features() const {
    return static_cast<int>(branches.size() + 1) * shortcut.k.d_out;
  }

  void visit(const ParamVisitor<T>& f) {
    for (auto& b : branches) {
      b.psi.visit(f);
      b.phi.visit(f);
    }
    shortcut.visit(f);
  }
};

template <typename T>
struct RfmCache {
  Tensor3<T> input;
  std::vector<Tensor3<T>> psi_out;   // per branch
  std::vector<Tensor3<T>> phi_out;   // per branch, pre-ReLU
  Tensor3<T> out;                    // post-sigmoid
};

template <typename T>
Tensor3<T> rfm_forward(const Tensor3<T>& x, const RfmParams<T>& params, RfmCache<T>& cache) {
  cache.input = x;
  cache.psi_out.clear();
  cache.phi_out.clear();
  std::vector<Tensor3<T>> parts;
  parts.reserve(params.branches.size() + 1);
  for (const auto& b : params.branches) {
    cache.psi_out.push_back(conv2d_dilated(x, b.psi.k, 1));
    cache.phi_out.push_back(conv2d_dilated(cache.psi_out.back(), b.phi.k, b.dilation));
    parts.push_back(relu(cache.phi_out.back()));
  }
  parts.push_back(conv2d_dilated(x, params.shortcut.k, 1));
  std::vector<const Tensor3<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  cache.out = sigmoid(concat_features(ptrs));
  return cache.out;
}

// Returns dX'; kernel gradients accumulate.
template <typename T>
Tensor3<T> rfm_backward(const Tensor3<T>& d_out, RfmParams<T>& params, const RfmCache<T>& cache) {
  const Tensor3<T>& x = cache.input;
  Tensor3<T> dconcat = d_out;
  for (std::size_t i = 0; i < dconcat.size(); ++i) {
    const T y = cache.out.data[i];
    dconcat.data[i] *= y * (T(1) - y);
  }
  Tensor3<T> dx(x.h, x.l, x.d);
  const int dpp = params.shortcut.k.d_out;
  std::vector<Tensor3<T>> dparts;
  for (std::size_t i = 0; i <= params.branches.size(); ++i)
    dparts.emplace_back(x.h, x.l, dpp);
  std::vector<Tensor3<T>*> dptrs;
  for (auto& p : dparts) dptrs.push_back(&p);
  split_features_bwd(dconcat, dptrs);
  for (std::size_t i = 0; i < params.branches.size(); ++i) {
    auto& b = params.branches[i];
    Tensor3<T>& drelu = dparts[i];
    for (std::size_t j = 0; j < drelu.size(); ++j)
      if (cache.phi_out[i].data[j] <= T(0)) drelu.data[j] = T(0);
    Tensor3<T> dpsi(x.h, x.l, b.psi.k.d_out);
    conv2d_dilated_bwd(cache.psi_out[i], b.phi.k, b.dilation, drelu, &dpsi, b.phi.gw, b.phi.gb);
    conv2d_dilated_bwd(x, b.psi.k, 1, dpsi, &dx, b.psi.gw, b.psi.gb);
  }
  conv2d_dilated_bwd(x, params.shortcut.k, 1, dparts.back(), &dx, params.shortcut.gw,
                     params.shortcut.gb);
  return dx;
}

// -----------------------------------------------------------------------------
// Pooling fusion (the Max&Avg-pooling baseline arm): global max/avg pools of
// both tensors plus the elementwise product and absolute difference of the
// averages, concatenated into a 6*D' vector.

template <typename T>
struct PoolingFusionCache {
  int h = 0, l = 0, d = 0;
  std::vector<std::size_t> argmax_x, argmax_y;
  std::vector<T> u_avg, v_avg;
};

template <typename T>
std::vector<T> pooling_fusion(const Tensor3<T>& x, const Tensor3<T>& y,
                              PoolingFusionCache<T>& cache) {
  if (!x.same_shape(y)) throw ShapeError("pooling_fusion: shape mismatch");
  cache.h = x.h;
  cache.l = x.l;
  cache.d = x.d;
  Tensor3<T> umax = pool(x, true, true, PoolMode::max, &cache.argmax_x);
  Tensor3<T> uavg = pool(x, true, true, PoolMode::avg);
  Tensor3<T> vmax = pool(y, true, true, PoolMode::max, &cache.argmax_y);
  Tensor3<T> vavg = pool(y, true, true, PoolMode::avg);
  cache.u_avg.assign(uavg.data.begin(), uavg.data.end());
  cache.v_avg.assign(vavg.data.begin(), vavg.data.end());
  std::vector<T> out;
  out.reserve(6 * x.d);
  out.insert(out.end(), umax.data.begin(), umax.data.end());
  out.insert(out.end(), uavg.data.begin(), uavg.data.end());
  out.insert(out.end(), vmax.data.begin(), vmax.data.end());
  out.insert(out.end(), vavg.data.begin(), vavg.data.end());
  for (int k = 0; k < x.d; ++k) out.push_back(cache.u_avg[k] * cache.v_avg[k]);
  for (int k = 0; k < x.d; ++k) out.push_back(std::abs(cache.u_avg[k] - cache.v_avg[k]));
  return out;
}

// |u-v| uses subgradient 0 at equality.
template <typename T>
std::pair<Tensor3<T>, Tensor3<T>> pooling_fusion_bwd(const std::vector<T>& d_out,
                                                     const PoolingFusionCache<T>& cache) {
  const int h = cache.h, l = cache.l, d = cache.d;
  Tensor3<T> dx(h, l, d), dy(h, l, d);
  std::vector<T> du_avg(d, T(0)), dv_avg(d, T(0));
  for (int k = 0; k < d; ++k) {
    dx.data[cache.argmax_x[k]] += d_out[k];
    du_avg[k] += d_out[d + k];
    dy.data[cache.argmax_y[k]] += d_out[2 * d + k];
    dv_avg[k] += d_out[3 * d + k];
    const T dprod = d_out[4 * d + k];
    du_avg[k] += dprod * cache.v_avg[k];
    dv_avg[k] += dprod * cache.u_avg[k];
    const T diff = cache.u_avg[k] - cache.v_avg[k];
    const T s = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
    du_avg[k] += d_out[5 * d + k] * s;
    dv_avg[k] -= d_out[5 * d + k] * s;
  }
  const T inv = T(1) / static_cast<T>(h * l);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < l; ++j) {
      T* ox = dx.row(i, j);
      T* oy = dy.row(i, j);
      for (int k = 0; k < d; ++k) {
        ox[k] += du_avg[k] * inv;
        oy[k] += dv_avg[k] * inv;
      }
    }
  return {std::move(dx), std::move(dy)};
}

// -----------------------------------------------------------------------------
// Classifier head. For the RFM arm, v = GAP over (h,l) of the feature-axis
// concatenation [X_rfm; Y_rfm; X_rfm .* Y_rfm]; for the pooling arm, v is the
// pooling-fusion vector directly. Either way the label distribution is
// softmax(W2 relu(W1 v + b1) + b2).

template <typename T>
struct HeadParams {
  ParamTensor<T> w1, b1, w2, b2;

  void init(int in_dim, int hidden, int n_labels, Rng& rng) {
    w1 = ParamTensor<T>("head.w1", {hidden, in_dim});
    b1 = ParamTensor<T>("head.b1", {hidden});
    w2 = ParamTensor<T>("head.w2", {n_labels, hidden});
    b2 = ParamTensor<T>("head.b2", {n_labels});
    glorot_init(w1.value, in_dim, hidden, rng);
    glorot_init(w2.value, hidden, n_labels, rng);
  }

  void visit(const ParamVisitor<T>& f) {
    f({w1.name, w1.dims, &w1.value, &w1.grad});
    f({b1.name, b1.dims, &b1.value, &b1.grad});
    f({w2.name, w2.dims, &w2.value, &w2.grad});
    f({b2.name, b2.dims, &b2.value, &b2.grad});
  }
};

template <typename T>
struct HeadCache {
  std::vector<T> v;
  std::vector<T> pre1;
  std::vector<T> probs;
};

// Pool [X; Y; X .* Y] over the spatial axes into the head input vector.
template <typename T>
std::vector<T> gap_concat(const Tensor3<T>& x_rfm, const Tensor3<T>& y_rfm) {
  if (!x_rfm.same_shape(y_rfm)) throw ShapeError("gap_concat: shape mismatch");
  const int d = x_rfm.d;
  std::vector<T> v(3 * d, T(0));
  const T inv = T(1) / static_cast<T>(x_rfm.h * x_rfm.l);
  for (int i = 0; i < x_rfm.h; ++i)
    for (int j = 0; j < x_rfm.l; ++j) {
      const T* a = x_rfm.row(i, j);
      const T* b = y_rfm.row(i, j);
      for (int k = 0; k < d; ++k) {
        v[k] += a[k] * inv;
        v[d + k] += b[k] * inv;
        v[2 * d + k] += a[k] * b[k] * inv;
      }
    }
  return v;
}

// Spreads a head-input gradient back onto the two fused tensors.
template <typename T>
void gap_concat_bwd(const std::vector<T>& dv, const Tensor3<T>& x_rfm, const Tensor3<T>& y_rfm,
                    Tensor3<T>& dx, Tensor3<T>& dy) {
  const int d = x_rfm.d;
  const T inv = T(1) / static_cast<T>(x_rfm.h * x_rfm.l);
  for (int i = 0; i < x_rfm.h; ++i)
    for (int j = 0; j < x_rfm.l; ++j) {
      const T* a = x_rfm.row(i, j);
      const T* b = y_rfm.row(i, j);
      T* ox = dx.row(i, j);
      T* oy = dy.row(i, j);
      for (int k = 0; k < d; ++k) {
        ox[k] += dv[k] * inv + dv[2 * d + k] * inv * b[k];
        oy[k] += dv[d + k] * inv + dv[2 * d + k] * inv * a[k];
      }
    }
}

template <typename T>
std::vector<T> classify_head(const std::vector<T>& v, const HeadParams<T>& params,
                             HeadCache<T>& cache) {
  if (static_cast<int>(v.size()) != params.w1.cols())
    throw ShapeError("classify_head: input dim disagrees with head parameters");
  cache.v = v;
  Matrix<T> w1(params.w1.rows(), params.w1.cols());
  w1.data = params.w1.value;
  Matrix<T> w2(params.w2.rows(), params.w2.cols());
  w2.data = params.w2.value;
  cache.pre1 = affine(v, w1, params.b1.value);
  std::vector<T> hidden = relu(cache.pre1);
  std::vector<T> logits = affine(hidden, w2, params.b2.value);
  Matrix<T> lm(1, static_cast<int>(logits.size()));
  lm.data = logits;
  Matrix<T> sm = softmax_axis(lm, Axis::cols);
  cache.probs = sm.data;
  return cache.probs;
}

// Takes the gradient on the logits (probs - onehot for cross-entropy) and
// returns the gradient on v; head parameter gradients accumulate.
template <typename T>
std::vector<T> classify_head_bwd(const std::vector<T>& d_logits, HeadParams<T>& params,
                                 const HeadCache<T>& cache) {
  Matrix<T> w1(params.w1.rows(), params.w1.cols());
  w1.data = params.w1.value;
  Matrix<T> w2(params.w2.rows(), params.w2.cols());
  w2.data = params.w2.value;
  std::vector<T> hidden = relu(cache.pre1);
  std::vector<T> dhidden(hidden.size(), T(0));
  Matrix<T> dw2(w2.rows, w2.cols);
  std::vector<T> db2(params.b2.size(), T(0));
  affine_bwd(hidden, w2, d_logits, &dhidden, dw2, db2);
  for (std::size_t i = 0; i < cache.pre1.size(); ++i)
    if (cache.pre1[i] <= T(0)) dhidden[i] = T(0);
  std::vector<T> dv(cache.v.size(), T(0));
  Matrix<T> dw1(w1.rows, w1.cols);
  std::vector<T> db1(params.b1.size(), T(0));
  affine_bwd(cache.v, w1, dhidden, &dv, dw1, db1);
  for (std::size_t i = 0; i < dw1.data.size(); ++i) params.w1.grad[i] += dw1.data[i];
  for (std::size_t i = 0; i < db1.size(); ++i) params.b1.grad[i] += db1[i];
  for (std::size_t i = 0; i < dw2.data.size(); ++i) params.w2.grad[i] += dw2.data[i];
  for (std::size_t i = 0; i < db2.size(); ++i) params.b2.grad[i] += db2[i];
  return dv;
}

}  // namespace trisim
