#pragma once

#include <string>
#include <vector>

#include "trisim/ops.hpp"
#include "trisim/param.hpp"
#include "trisim/tensor.hpp"

namespace trisim {

// -----------------------------------------------------------------------------
// Spatial Attention: cross-sentence attention over the flattened (block,
// position) index. K and the X-side values come from X, Q and the Y-side
// values from Y; there are no learned K/Q/V projections, only a shared 1x1
// output convolution mapping D -> D'.

template <typename T>
struct SaParams {
  ParamTensor<T> proj_w;  // D' x D
  ParamTensor<T> proj_b;  // D'
  bool scale_scores = false;

  void init(int d, int d_prime, bool scale, Rng& rng) {
    scale_scores = scale;
    proj_w = ParamTensor<T>("sa.proj.w", {d_prime, d});
    proj_b = ParamTensor<T>("sa.proj.b", {d_prime});
    glorot_init(proj_w.value, d, d_prime, rng);
  }

  void visit(const ParamVisitor<T>& f) {
    f({proj_w.name, proj_w.dims, &proj_w.value, &proj_w.grad});
    f({proj_b.name, proj_b.dims, &proj_b.value, &proj_b.grad});
  }
};

template <typename T>
struct SaCache {
  int h = 0, l = 0, d = 0;
  Matrix<T> k_flat, q_flat;    // N x D views of X and Y
  Matrix<T> scores;            // s[i,j] = K_i . Q_j (post-scaling if enabled)
  Matrix<T> attn_y;            // softmax of scores across j; attn_y[i,j] = M_Y[j,i]
  Matrix<T> attn_x;            // softmax of scores down i;  attn_x[i,j] = M_X[i,j]
  Matrix<T> xsa_pre, ysa_pre;  // N x D, before the output projection
};

// The spec-level view of the two stochastic maps: M_Y indexed [j,i], M_X
// indexed [i,j].
template <typename T>
struct SaMaps {
  Matrix<T> m_y, m_x;
};

template <typename T>
SaMaps<T> sa_maps(const SaCache<T>& cache) {
  SaMaps<T> maps;
  const int n = cache.scores.rows;
  maps.m_y = Matrix<T>(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) maps.m_y.at(j, i) = cache.attn_y.at(i, j);
  maps.m_x = cache.attn_x;
  return maps;
}

template <typename T>
std::pair<Tensor3<T>, Tensor3<T>> sa_forward(const Tensor3<T>& x, const Tensor3<T>& y,
                                             const SaParams<T>& params, SaCache<T>& cache) {
  if (!x.same_shape(y)) throw ArgumentError("sa_forward: X and Y must share (H, L, D)");
  cache.h = x.h;
  cache.l = x.l;
  cache.d = x.d;
  cache.k_flat = flatten(x);
  cache.q_flat = flatten(y);
  cache.scores = matmul_nt(cache.k_flat, cache.q_flat);
  if (params.scale_scores) {
    const T s = T(1) / std::sqrt(static_cast<T>(x.d));
    for (auto& v : cache.scores.data) v *= s;
  }
  cache.attn_y = softmax_axis(cache.scores, Axis::cols);
  cache.attn_x = softmax_axis(cache.scores, Axis::rows);
  cache.xsa_pre = matmul_nn(cache.attn_y, cache.q_flat);   // rows of Y's values
  cache.ysa_pre = matmul_tn(cache.attn_x, cache.k_flat);   // rows of X's values
  Matrix<T> w(params.proj_w.rows(), params.proj_w.cols());
  w.data = params.proj_w.value;
  Tensor3<T> xsa = conv1x1(unflatten(cache.xsa_pre, x.h, x.l), w, params.proj_b.value);
  Tensor3<T> ysa = conv1x1(unflatten(cache.ysa_pre, x.h, x.l), w, params.proj_b.value);
  return {std::move(xsa), std::move(ysa)};
}

// Returns (dX, dY); projection gradients accumulate into params.
template <typename T>
std::pair<Tensor3<T>, Tensor3<T>> sa_backward(const Tensor3<T>& d_xsa, const Tensor3<T>& d_ysa,
                                              SaParams<T>& params, const SaCache<T>& cache) {
  const int h = cache.h, l = cache.l, d = cache.d;
  Matrix<T> w(params.proj_w.rows(), params.proj_w.cols());
  w.data = params.proj_w.value;
  Matrix<T> dw(w.rows, w.cols);
  std::vector<T> db(params.proj_b.size(), T(0));
  Tensor3<T> d_xsa_pre3(h, l, d), d_ysa_pre3(h, l, d);
  conv1x1_bwd(unflatten(cache.xsa_pre, h, l), w, d_xsa, &d_xsa_pre3, dw, db);
  conv1x1_bwd(unflatten(cache.ysa_pre, h, l), w, d_ysa, &d_ysa_pre3, dw, db);
  for (std::size_t i = 0; i < dw.data.size(); ++i) params.proj_w.grad[i] += dw.data[i];
  for (std::size_t i = 0; i < db.size(); ++i) params.proj_b.grad[i] += db[i];

  const Matrix<T> d_xsa_pre = flatten(d_xsa_pre3);
  const Matrix<T> d_ysa_pre = flatten(d_ysa_pre3);
  // Value-path gradients.
  Matrix<T> dq = matmul_tn(cache.attn_y, d_xsa_pre);
  Matrix<T> dk = matmul_nn(cache.attn_x, d_ysa_pre);
  // Attention-weight gradients, then back through the two softmaxes.
  const Matrix<T> d_attn_y = matmul_nt(d_xsa_pre, cache.q_flat);
  const Matrix<T> d_attn_x = matmul_nt(cache.k_flat, d_ysa_pre);
  Matrix<T> d_scores(cache.scores.rows, cache.scores.cols);
  softmax_axis_bwd(cache.attn_y, d_attn_y, Axis::cols, d_scores);
  softmax_axis_bwd(cache.attn_x, d_attn_x, Axis::rows, d_scores);
  if (params.scale_scores) {
    const T s = T(1) / std::sqrt(static_cast<T>(d));
    for (auto& v : d_scores.data) v *= s;
  }
  add_into(dk, matmul_nn(d_scores, cache.q_flat));
  add_into(dq, matmul_tn(d_scores, cache.k_flat));
  return {unflatten(dk, h, l), unflatten(dq, h, l)};
}

// -----------------------------------------------------------------------------
// Feature Attention: channel gating. FA-1 squeezes with average pooling, FA-2
// with average+max pooling; both produce a (0,1)^{D'} gate broadcast over all
// positions. FA-3 pools along each spatial axis separately and recombines the
// projected profiles as a per-channel outer product, so its output is
// position-dependent.

enum class FaVariant { fa1, fa2, fa3 };

template <typename T>
struct FaParams {
  FaVariant variant = FaVariant::fa1;
  // FA-1 / FA-2 bottleneck
  ParamTensor<T> w1, b1, w2, b2;
  // FA-3
  ParamTensor<T> gamma, beta;          // instance-norm scale/shift
  ParamTensor<T> phi_h_w, phi_h_b;     // D' x D projection of the block profile
  ParamTensor<T> phi_l_w, phi_l_b;     // D' x D projection of the position profile

  void init(FaVariant v, int d, int d_reduce, int d_prime, Rng& rng,
            const std::string& prefix = "fa.") {
    variant = v;
    if (v == FaVariant::fa3) {
      gamma = ParamTensor<T>(prefix + "norm.gamma", {d});
      beta = ParamTensor<T>(prefix + "norm.beta", {d});
      std::fill(gamma.value.begin(), gamma.value.end(), T(1));
      phi_h_w = ParamTensor<T>(prefix + "phi_h.w", {d_prime, d});
      phi_h_b = ParamTensor<T>(prefix + "phi_h.b", {d_prime});
      phi_l_w = ParamTensor<T>(prefix + "phi_l.w", {d_prime, d});
      phi_l_b = ParamTensor<T>(prefix + "phi_l.b", {d_prime});
      glorot_init(phi_h_w.value, d, d_prime, rng);
      glorot_init(phi_l_w.value, d, d_prime, rng);
    } else {
      const int in = v == FaVariant::fa2 ? 2 * d : d;
      w1 = ParamTensor<T>(prefix + "w1", {d_reduce, in});
      b1 = ParamTensor<T>(prefix + "b1", {d_reduce});
      w2 = ParamTensor<T>(prefix + "w2", {d_prime, d_reduce});
      b2 = ParamTensor<T>(prefix + "b2", {d_prime});
      glorot_init(w1.value, in, d_reduce, rng);
      glorot_init(w2.value, d_reduce, d_prime, rng);
    }
  }

  void visit(const ParamVisitor<T>& f) {
    auto emit = [&](ParamTensor<T>& p) {
      if (!p.value.empty()) f({p.name, p.dims, &p.value, &p.grad});
    };
    emit(w1);
    emit(b1);
    emit(w2);
    emit(b2);
    emit(gamma);
    emit(beta);
    emit(phi_h_w);
    emit(phi_h_b);
    emit(phi_l_w);
    emit(phi_l_b);
  }
};

template <typename T>
struct FaCache {
  int h = 0, l = 0, d = 0;
  // FA-1/2
  std::vector<T> z;           // squeeze descriptor (D or 2D)
  std::vector<std::size_t> argmax;  // FA-2 max-pool provenance
  std::vector<T> pre1;        // bottleneck pre-activation
  std::vector<T> gate;        // sigmoid output, length D'
  // FA-3
  Matrix<T> sig;              // sigmoid of the concatenated profiles
  InstanceNormCache<T> norm;
  Matrix<T> g_h, g_l;         // split normalized descriptors
  Matrix<T> p, q;             // projected profiles (H x D', L x D')
};

template <typename T>
Tensor3<T> fa_forward(const Tensor3<T>& x, const FaParams<T>& params, FaCache<T>& cache) {
  cache.h = x.h;
  cache.l = x.l;
  cache.d = x.d;
  if (params.variant == FaVariant::fa3) {
    // Directional squeezes: z^h[h,d] = mean over l, z^l[l,d] = mean over h.
    Tensor3<T> zh3 = pool(x, false, true, PoolMode::avg);
    Tensor3<T> zl3 = pool(x, true, false, PoolMode::avg);
    Matrix<T> cat(x.h + x.l, x.d);
    std::copy(zh3.data.begin(), zh3.data.end(), cat.data.begin());
    std::copy(zl3.data.begin(), zl3.data.end(), cat.data.begin() + zh3.data.size());
    for (auto& v : cat.data) v = T(1) / (T(1) + std::exp(-v));
    cache.sig = cat;
    Matrix<T> g = instance_norm(cat, params.gamma.value, params.beta.value, &cache.norm);
    cache.g_h = Matrix<T>(x.h, x.d);
    cache.g_l = Matrix<T>(x.l, x.d);
    std::copy(g.data.begin(), g.data.begin() + cache.g_h.size(), cache.g_h.data.begin());
    std::copy(g.data.begin() + cache.g_h.size(), g.data.end(), cache.g_l.data.begin());
    Matrix<T> phw(params.phi_h_w.rows(), params.phi_h_w.cols());
    phw.data = params.phi_h_w.value;
    Matrix<T> plw(params.phi_l_w.rows(), params.phi_l_w.cols());
    plw.data = params.phi_l_w.value;
    cache.p = linear_rows(cache.g_h, phw, params.phi_h_b.value);
    cache.q = linear_rows(cache.g_l, plw, params.phi_l_b.value);
    const int dp = cache.p.cols;
    Tensor3<T> out(x.h, x.l, dp);
    for (int i = 0; i < x.h; ++i)
      for (int j = 0; j < x.l; ++j) {
        const T* pi = cache.p.row(i);
        const T* qj = cache.q.row(j);
        T* o = out.row(i, j);
        for (int k = 0; k < dp; ++k) o[k] = pi[k] * qj[k];
      }
    return out;
  }
  // FA-1 / FA-2: global squeeze then bottleneck excitation.
  Tensor3<T> zavg = pool(x, true, true, PoolMode::avg);
  cache.z.assign(zavg.data.begin(), zavg.data.end());
  if (params.variant == FaVariant::fa2) {
    Tensor3<T> zmax = pool(x, true, true, PoolMode::max, &cache.argmax);
    cache.z.insert(cache.z.end(), zmax.data.begin(), zmax.data.end());
  }
  Matrix<T> w1(params.w1.rows(), params.w1.cols());
  w1.data = params.w1.value;
  Matrix<T> w2(params.w2.rows(), params.w2.cols());
  w2.data = params.w2.value;
  cache.pre1 = affine(cache.z, w1, params.b1.value);
  std::vector<T> hidden = relu(cache.pre1);
  cache.gate = sigmoid(affine(hidden, w2, params.b2.value));
  const int dp = static_cast<int>(cache.gate.size());
  Tensor3<T> out(x.h, x.l, dp);
  for (int i = 0; i < x.h; ++i)
    for (int j = 0; j < x.l; ++j)
      std::copy(cache.gate.begin(), cache.gate.end(), out.row(i, j));
  return out;
}

// Returns dX; parameter gradients accumulate.
template <typename T>
Tensor3<T> fa_backward(const Tensor3<T>& d_out, FaParams<T>& params, const FaCache<T>& cache) {
  const int h = cache.h, l = cache.l, d = cache.d;
  Tensor3<T> dx(h, l, d);
  if (params.variant == FaVariant::fa3) {
    const int dp = cache.p.cols;
    Matrix<T> dpm(h, dp), dqm(l, dp);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < l; ++j) {
        const T* g = d_out.row(i, j);
        const T* pi = cache.p.row(i);
        const T* qj = cache.q.row(j);
        T* dpi = dpm.row(i);
        T* dqj = dqm.row(j);
        for (int k = 0; k < dp; ++k) {
          dpi[k] += g[k] * qj[k];
          dqj[k] += g[k] * pi[k];
        }
      }
    Matrix<T> phw(params.phi_h_w.rows(), params.phi_h_w.cols());
    phw.data = params.phi_h_w.value;
    Matrix<T> plw(params.phi_l_w.rows(), params.phi_l_w.cols());
    plw.data = params.phi_l_w.value;
    Matrix<T> dgh(h, d), dgl(l, d);
    Matrix<T> dphw(phw.rows, phw.cols), dplw(plw.rows, plw.cols);
    std::vector<T> dphb(params.phi_h_b.size(), T(0)), dplb(params.phi_l_b.size(), T(0));
    linear_rows_bwd(cache.g_h, phw, dpm, &dgh, dphw, dphb);
    linear_rows_bwd(cache.g_l, plw, dqm, &dgl, dplw, dplb);
    for (std::size_t i = 0; i < dphw.data.size(); ++i) params.phi_h_w.grad[i] += dphw.data[i];
    for (std::size_t i = 0; i < dphb.size(); ++i) params.phi_h_b.grad[i] += dphb[i];
    for (std::size_t i = 0; i < dplw.data.size(); ++i) params.phi_l_w.grad[i] += dplw.data[i];
    for (std::size_t i = 0; i < dplb.size(); ++i) params.phi_l_b.grad[i] += dplb[i];
    Matrix<T> dg(h + l, d);
    std::copy(dgh.data.begin(), dgh.data.end(), dg.data.begin());
    std::copy(dgl.data.begin(), dgl.data.end(), dg.data.begin() + dgh.data.size());
    Matrix<T> dsig(h + l, d);
    std::vector<T> dgamma(params.gamma.size(), T(0)), dbeta(params.beta.size(), T(0));
    instance_norm_bwd(cache.norm, params.gamma.value, dg, dsig, dgamma, dbeta);
    for (std::size_t i = 0; i < dgamma.size(); ++i) params.gamma.grad[i] += dgamma[i];
    for (std::size_t i = 0; i < dbeta.size(); ++i) params.beta.grad[i] += dbeta[i];
    // Sigmoid backward, then route the two profile gradients to the means.
    Matrix<T> dcat(h + l, d);
    for (std::size_t i = 0; i < dcat.data.size(); ++i) {
      const T y = cache.sig.data[i];
      dcat.data[i] = dsig.data[i] * y * (T(1) - y);
    }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < l; ++j) {
        T* o = dx.row(i, j);
        for (int k = 0; k < d; ++k)
          o[k] += dcat.at(i, k) / static_cast<T>(l) + dcat.at(h + j, k) / static_cast<T>(h);
      }
    return dx;
  }
  // FA-1 / FA-2
  const int dp = static_cast<int>(cache.gate.size());
  std::vector<T> dgate(dp, T(0));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < l; ++j) {
      const T* g = d_out.row(i, j);
      for (int k = 0; k < dp; ++k) dgate[k] += g[k];
    }
  std::vector<T> dv(dp);
  for (int k = 0; k < dp; ++k) dv[k] = dgate[k] * cache.gate[k] * (T(1) - cache.gate[k]);
  Matrix<T> w1(params.w1.rows(), params.w1.cols());
  w1.data = params.w1.value;
  Matrix<T> w2(params.w2.rows(), params.w2.cols());
  w2.data = params.w2.value;
  std::vector<T> hidden = relu(cache.pre1);
  std::vector<T> dhidden(hidden.size(), T(0));
  Matrix<T> dw2(w2.rows, w2.cols);
  std::vector<T> db2(params.b2.size(), T(0));
  affine_bwd(hidden, w2, dv, &dhidden, dw2, db2);
  for (std::size_t i = 0; i < cache.pre1.size(); ++i)
    if (cache.pre1[i] <= T(0)) dhidden[i] = T(0);
  std::vector<T> dz(cache.z.size(), T(0));
  Matrix<T> dw1(w1.rows, w1.cols);
  std::vector<T> db1(params.b1.size(), T(0));
  affine_bwd(cache.z, w1, dhidden, &dz, dw1, db1);
  for (std::size_t i = 0; i < dw1.data.size(); ++i) params.w1.grad[i] += dw1.data[i];
  for (std::size_t i = 0; i < db1.size(); ++i) params.b1.grad[i] += db1[i];
  for (std::size_t i = 0; i < dw2.data.size(); ++i) params.w2.grad[i] += dw2.data[i];
  for (std::size_t i = 0; i < db2.size(); ++i) params.b2.grad[i] += db2[i];
  const T inv_hl = T(1) / static_cast<T>(h * l);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < l; ++j) {
      T* o = dx.row(i, j);
      for (int k = 0; k < d; ++k) o[k] += dz[k] * inv_hl;
    }
  if (params.variant == FaVariant::fa2) {
    for (int k = 0; k < d; ++k) dx.data[cache.argmax[k]] += dz[d + k];
  }
  return dx;
}

// -----------------------------------------------------------------------------
// Eq-level combiner: X' = SA(X,Y) .* FA(X). Either factor may be absent
// (replaced by all-ones) depending on the configured arm.

template <typename T>
Tensor3<T> combine(const Tensor3<T>& sa_out, const Tensor3<T>& fa_out) {
  return hadamard(sa_out, fa_out);
}

}  // namespace trisim
