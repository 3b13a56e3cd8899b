#pragma once

#include <vector>

#include "trisim/encoder.hpp"
#include "trisim/ops.hpp"
#include "trisim/param.hpp"

namespace trisim {

// Adaptive Feature Extraction: a per-block sigmoid gate network whose
// position-normalized weights rescale each block's representation before the
// blocks are stacked into the H x L x D semantic tensor. One parameter
// quadruple per selected block; the same instance serves both sentences.

template <typename T>
struct AfeParams {
  struct Gate {
    ParamTensor<T> w1, b1, w2, b2;  // w1: Dr x D, w2: D x Dr
  };
  bool adaptive = true;  // false = fixed 1/L weights (the plain-FE arm)
  int reduction = 1;
  std::vector<Gate> gates;  // one per selected block; empty when !adaptive

  void init(const std::vector<int>& block_ids, int d, int d_reduce, bool adaptive_weights,
            Rng& rng) {
    adaptive = adaptive_weights;
    reduction = d_reduce;
    gates.clear();
    if (!adaptive) return;
    for (int h : block_ids) {
      Gate g;
      const std::string p = "afe.block" + std::to_string(h) + ".";
      g.w1 = ParamTensor<T>(p + "w1", {d_reduce, d});
      g.b1 = ParamTensor<T>(p + "b1", {d_reduce});
      g.w2 = ParamTensor<T>(p + "w2", {d, d_reduce});
      g.b2 = ParamTensor<T>(p + "b2", {d});
      glorot_init(g.w1.value, d, d_reduce, rng);
      glorot_init(g.w2.value, d_reduce, d, rng);
      gates.push_back(std::move(g));
    }
  }

  void visit(const ParamVisitor<T>& f) {
    for (auto& g : gates) {
      f({g.w1.name, g.w1.dims, &g.w1.value, &g.w1.grad});
      f({g.b1.name, g.b1.dims, &g.b1.value, &g.b1.grad});
      f({g.w2.name, g.w2.dims, &g.w2.value, &g.w2.grad});
      f({g.b2.name, g.b2.dims, &g.b2.value, &g.b2.grad});
    }
  }
};

template <typename T>
struct AfeCache {
  std::vector<Matrix<T>> blocks;      // raw inputs x^h
  std::vector<Matrix<T>> hidden_pre;  // W1 x + b1, per block (L x Dr)
  std::vector<Matrix<T>> gate_raw;    // sigmoid outputs (L x D)
  std::vector<std::vector<T>> colsum; // per block, per feature column
  std::vector<Matrix<T>> gate_norm;   // normalized weights (L x D)
};

// Unnormalized gates for one block: sigmoid(W2 relu(W1 x_i + b1) + b2) per
// position i. All entries land strictly in (0, 1).
template <typename T>
Matrix<T> afe_gates(const Matrix<T>& block, const typename AfeParams<T>::Gate& g,
                    Matrix<T>* hidden_pre_out = nullptr) {
  Matrix<T> w1(g.w1.rows(), g.w1.cols());
  w1.data = g.w1.value;
  Matrix<T> w2(g.w2.rows(), g.w2.cols());
  w2.data = g.w2.value;
  Matrix<T> pre = linear_rows(block, w1, g.b1.value);
  Matrix<T> hidden = pre;
  for (auto& x : hidden.data) x = x > T(0) ? x : T(0);
  Matrix<T> out = linear_rows(hidden, w2, g.b2.value);
  for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
  if (hidden_pre_out) *hidden_pre_out = std::move(pre);
  return out;
}

// Per feature column d, divide by the sum over positions so columns sum to 1.
template <typename T>
Matrix<T> afe_normalize(const Matrix<T>& gates, std::vector<T>* colsum_out = nullptr) {
  std::vector<T> colsum(gates.cols, T(0));
  for (int i = 0; i < gates.rows; ++i)
    for (int d = 0; d < gates.cols; ++d) colsum[d] += gates.at(i, d);
  Matrix<T> out(gates.rows, gates.cols);
  for (int i = 0; i < gates.rows; ++i)
    for (int d = 0; d < gates.cols; ++d) out.at(i, d) = gates.at(i, d) / colsum[d];
  if (colsum_out) *colsum_out = std::move(colsum);
  return out;
}

// Weighted stacking: X[h,i,d] = alpha^h_i[d] * x^h_i[d].
template <typename T>
Tensor3<T> afe_stack(const std::vector<Matrix<T>>& blocks,
                     const std::vector<Matrix<T>>& norm_gates) {
  if (blocks.empty() || blocks.size() != norm_gates.size())
    throw ShapeError("afe_stack: block/gate count mismatch");
  const int l = blocks[0].rows, d = blocks[0].cols;
  Tensor3<T> out(static_cast<int>(blocks.size()), l, d);
  for (std::size_t h = 0; h < blocks.size(); ++h) {
    if (!blocks[h].same_shape(blocks[0]) || !norm_gates[h].same_shape(blocks[0]))
      throw ShapeError("afe_stack: inconsistent block shapes");
    for (int i = 0; i < l; ++i) {
      const T* x = blocks[h].row(i);
      const T* a = norm_gates[h].row(i);
      T* o = out.row(static_cast<int>(h), i);
      for (int k = 0; k < d; ++k) o[k] = a[k] * x[k];
    }
  }
  return out;
}

template <typename T>
Tensor3<T> afe_forward(const BlockStack<T>& blocks, const AfeParams<T>& params,
                       AfeCache<T>& cache) {
  const int h = static_cast<int>(blocks.size());
  const int l = blocks[0].rows, d = blocks[0].cols;
  cache.blocks = blocks;
  if (!params.adaptive) {
    // Plain feature extraction: constant 1/L weights.
    Tensor3<T> out(h, l, d);
    const T inv = T(1) / static_cast<T>(l);
    for (int b = 0; b < h; ++b)
      for (int i = 0; i < l; ++i) {
        const T* x = blocks[static_cast<std::size_t>(b)].row(i);
        T* o = out.row(b, i);
        for (int k = 0; k < d; ++k) o[k] = x[k] * inv;
      }
    return out;
  }
  if (params.gates.size() != blocks.size())
    throw ShapeError("afe_forward: gate count != block count");
  cache.hidden_pre.resize(blocks.size());
  cache.gate_raw.resize(blocks.size());
  cache.colsum.resize(blocks.size());
  cache.gate_norm.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    cache.gate_raw[b] = afe_gates(blocks[b], params.gates[b], &cache.hidden_pre[b]);
    cache.gate_norm[b] = afe_normalize(cache.gate_raw[b], &cache.colsum[b]);
  }
  return afe_stack(blocks, cache.gate_norm);
}

// Accumulates into the gate parameter gradients. Encoder blocks are frozen
// inputs, so no input gradient is produced.
template <typename T>
void afe_backward(const Tensor3<T>& d_out, AfeParams<T>& params, const AfeCache<T>& cache) {
  if (!params.adaptive) return;
  const int l = d_out.l, d = d_out.d;
  for (std::size_t b = 0; b < params.gates.size(); ++b) {
    const Matrix<T>& x = cache.blocks[b];
    // dAlpha[i,d] = dX[h,i,d] * x[i,d]
    Matrix<T> dalpha(l, d);
    for (int i = 0; i < l; ++i)
      for (int k = 0; k < d; ++k)
        dalpha.at(i, k) = d_out.at(static_cast<int>(b), i, k) * x.at(i, k);
    // Through the column normalization: alpha = g / S, S = column sum of g.
    const Matrix<T>& graw = cache.gate_raw[b];
    const std::vector<T>& colsum = cache.colsum[b];
    Matrix<T> dgate(l, d);
    for (int k = 0; k < d; ++k) {
      T dot = 0;
      for (int i = 0; i < l; ++i) dot += dalpha.at(i, k) * graw.at(i, k);
      const T s = colsum[k];
      for (int i = 0; i < l; ++i)
        dgate.at(i, k) = dalpha.at(i, k) / s - dot / (s * s);
    }
    // Through sigmoid, second affine, relu, first affine.
    auto& g = params.gates[b];
    Matrix<T> dv(l, d);
    for (int i = 0; i < l; ++i)
      for (int k = 0; k < d; ++k) {
        const T y = graw.at(i, k);
        dv.at(i, k) = dgate.at(i, k) * y * (T(1) - y);
      }
    Matrix<T> w2(g.w2.rows(), g.w2.cols());
    w2.data = g.w2.value;
    Matrix<T> hidden = cache.hidden_pre[b];
    for (auto& v : hidden.data) v = v > T(0) ? v : T(0);
    Matrix<T> dhidden(l, params.reduction);
    Matrix<T> dw2(g.w2.rows(), g.w2.cols());
    std::vector<T> db2(g.b2.size(), T(0));
    linear_rows_bwd(hidden, w2, dv, &dhidden, dw2, db2);
    // relu mask from the pre-activation
    for (int i = 0; i < l; ++i)
      for (int k = 0; k < params.reduction; ++k)
        if (cache.hidden_pre[b].at(i, k) <= T(0)) dhidden.at(i, k) = T(0);
    Matrix<T> w1(g.w1.rows(), g.w1.cols());
    w1.data = g.w1.value;
    Matrix<T> dw1(g.w1.rows(), g.w1.cols());
    std::vector<T> db1(g.b1.size(), T(0));
    linear_rows_bwd(x, w1, dhidden, static_cast<Matrix<T>*>(nullptr), dw1, db1);
    for (std::size_t i = 0; i < dw1.data.size(); ++i) g.w1.grad[i] += dw1.data[i];
    for (std::size_t i = 0; i < db1.size(); ++i) g.b1.grad[i] += db1[i];
    for (std::size_t i = 0; i < dw2.data.size(); ++i) g.w2.grad[i] += dw2.data[i];
    for (std::size_t i = 0; i < db2.size(); ++i) g.b2.grad[i] += db2[i];
  }
}

}  // namespace trisim
