#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "trisim/common.hpp"
#include "trisim/param.hpp"
#include "trisim/tensor.hpp"

// Differentiable primitives. Forward functions are pure; backward functions
// accumulate (+=) into the caller's gradient buffers so shared parameters can
// collect contributions from several uses. Callers zero buffers beforehand.

namespace trisim {

enum class Axis { rows, cols };
enum class PoolMode { avg, max };

// ---------------------------------------------------------------------------
// affine: out[j] = sum_i w[j,i] * x[i] + b[j]

template <typename T>
std::vector<T> affine(const std::vector<T>& x, const Matrix<T>& w, const std::vector<T>& b) {
  if (static_cast<int>(x.size()) != w.cols || static_cast<int>(b.size()) != w.rows)
    throw ShapeError("affine: dims disagree");
  std::vector<T> out(b);
  for (int j = 0; j < w.rows; ++j) {
    const T* wr = w.row(j);
    T acc = 0;
    for (int i = 0; i < w.cols; ++i) acc += wr[i] * x[i];
    out[j] += acc;
  }
  return out;
}

// dx may be nullptr when the input gradient is not needed.
template <typename T>
void affine_bwd(const std::vector<T>& x, const Matrix<T>& w, const std::vector<T>& dout,
                std::vector<T>* dx, Matrix<T>& dw, std::vector<T>& db) {
  for (int j = 0; j < w.rows; ++j) {
    const T g = dout[j];
    db[j] += g;
    T* dwr = dw.row(j);
    for (int i = 0; i < w.cols; ++i) dwr[i] += g * x[i];
  }
  if (dx) {
    for (int j = 0; j < w.rows; ++j) {
      const T g = dout[j];
      const T* wr = w.row(j);
      for (int i = 0; i < w.cols; ++i) (*dx)[i] += g * wr[i];
    }
  }
}

// Row-wise affine over a matrix: out[r,:] = w * x[r,:] + b.
template <typename T>
Matrix<T> linear_rows(const Matrix<T>& x, const Matrix<T>& w, const std::vector<T>& b) {
  if (x.cols != w.cols || static_cast<int>(b.size()) != w.rows)
    throw ShapeError("linear_rows: dims disagree");
  Matrix<T> out(x.rows, w.rows);
  for (int r = 0; r < x.rows; ++r) {
    const T* xr = x.row(r);
    T* outr = out.row(r);
    for (int j = 0; j < w.rows; ++j) {
      const T* wr = w.row(j);
      T acc = b[j];
      for (int i = 0; i < w.cols; ++i) acc += wr[i] * xr[i];
      outr[j] = acc;
    }
  }
  return out;
}

template <typename T>
void linear_rows_bwd(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dout,
                     Matrix<T>* dx, Matrix<T>& dw, std::vector<T>& db) {
  for (int r = 0; r < x.rows; ++r) {
    const T* xr = x.row(r);
    const T* doutr = dout.row(r);
    for (int j = 0; j < w.rows; ++j) {
      const T g = doutr[j];
      db[j] += g;
      T* dwr = dw.row(j);
      for (int i = 0; i < w.cols; ++i) dwr[i] += g * xr[i];
    }
    if (dx) {
      T* dxr = dx->row(r);
      for (int j = 0; j < w.rows; ++j) {
        const T g = doutr[j];
        const T* wr = w.row(j);
        for (int i = 0; i < w.cols; ++i) dxr[i] += g * wr[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// softmax over one axis. Axis::cols normalizes across the column index (each
// row slice sums to 1); Axis::rows normalizes down each column. Max is
// subtracted inside each slice for stability.

template <typename T>
Matrix<T> softmax_axis(const Matrix<T>& m, Axis axis) {
  Matrix<T> out(m.rows, m.cols);
  if (axis == Axis::cols) {
    for (int r = 0; r < m.rows; ++r) {
      const T* in = m.row(r);
      T* o = out.row(r);
      T mx = in[0];
      for (int c = 1; c < m.cols; ++c) mx = std::max(mx, in[c]);
      T sum = 0;
      for (int c = 0; c < m.cols; ++c) {
        o[c] = std::exp(in[c] - mx);
        sum += o[c];
      }
      for (int c = 0; c < m.cols; ++c) o[c] /= sum;
    }
  } else {
    for (int c = 0; c < m.cols; ++c) {
      T mx = m.at(0, c);
      for (int r = 1; r < m.rows; ++r) mx = std::max(mx, m.at(r, c));
      T sum = 0;
      for (int r = 0; r < m.rows; ++r) {
        T e = std::exp(m.at(r, c) - mx);
        out.at(r, c) = e;
        sum += e;
      }
      for (int r = 0; r < m.rows; ++r) out.at(r, c) /= sum;
    }
  }
  return out;
}

// Backward from the softmax output s: dIn = s .* (dOut - sum(s .* dOut)).
template <typename T>
void softmax_axis_bwd(const Matrix<T>& s, const Matrix<T>& dout, Axis axis, Matrix<T>& din) {
  if (axis == Axis::cols) {
    for (int r = 0; r < s.rows; ++r) {
      const T* sr = s.row(r);
      const T* dr = dout.row(r);
      T dot = 0;
      for (int c = 0; c < s.cols; ++c) dot += sr[c] * dr[c];
      T* dinr = din.row(r);
      for (int c = 0; c < s.cols; ++c) dinr[c] += sr[c] * (dr[c] - dot);
    }
  } else {
    for (int c = 0; c < s.cols; ++c) {
      T dot = 0;
      for (int r = 0; r < s.rows; ++r) dot += s.at(r, c) * dout.at(r, c);
      for (int r = 0; r < s.rows; ++r)
        din.at(r, c) += s.at(r, c) * (dout.at(r, c) - dot);
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise activations on flat buffers

template <typename T>
std::vector<T> relu(const std::vector<T>& x) {
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

// Subgradient at 0 is 0.
template <typename T>
void relu_bwd(const std::vector<T>& x, const std::vector<T>& dy, std::vector<T>& dx) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
std::vector<T> sigmoid(const std::vector<T>& x) {
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  return y;
}

// Backward from the sigmoid output y.
template <typename T>
void sigmoid_bwd(const std::vector<T>& y, const std::vector<T>& dy, std::vector<T>& dx) {
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
}

template <typename T>
Tensor3<T> relu(const Tensor3<T>& t) {
  Tensor3<T> out = t;
  for (auto& x : out.data) x = x > T(0) ? x : T(0);
  return out;
}

template <typename T>
Tensor3<T> sigmoid(const Tensor3<T>& t) {
  Tensor3<T> out = t;
  for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
  return out;
}

// ---------------------------------------------------------------------------
// pooling over a subset of the spatial axes {h, l}; reduced axes keep extent 1.
// For max pooling the argmax (flat data index per output element) is recorded
// for the backward pass; ties resolve to the first maximum.

template <typename T>
Tensor3<T> pool(const Tensor3<T>& t, bool over_h, bool over_l, PoolMode mode,
                std::vector<std::size_t>* argmax = nullptr) {
  if (!over_h && !over_l) throw ArgumentError("pool: empty axis set");
  const int oh = over_h ? 1 : t.h;
  const int ol = over_l ? 1 : t.l;
  Tensor3<T> out(oh, ol, t.d);
  if (mode == PoolMode::max) {
    std::fill(out.data.begin(), out.data.end(), std::numeric_limits<T>::lowest());
    if (argmax) argmax->assign(out.size(), 0);
  }
  const T scale = T(1) / static_cast<T>((over_h ? t.h : 1) * (over_l ? t.l : 1));
  for (int i = 0; i < t.h; ++i) {
    for (int j = 0; j < t.l; ++j) {
      const T* src = t.row(i, j);
      const int ti = over_h ? 0 : i;
      const int tj = over_l ? 0 : j;
      T* dst = out.row(ti, tj);
      const std::size_t base = (static_cast<std::size_t>(i) * t.l + j) * t.d;
      for (int k = 0; k < t.d; ++k) {
        if (mode == PoolMode::avg) {
          dst[k] += src[k] * scale;
        } else if (src[k] > dst[k]) {
          dst[k] = src[k];
          if (argmax) (*argmax)[(static_cast<std::size_t>(ti) * ol + tj) * t.d + k] = base + k;
        }
      }
    }
  }
  return out;
}

template <typename T>
void pool_avg_bwd(int h, int l, int d, bool over_h, bool over_l, const Tensor3<T>& dout,
                  Tensor3<T>& din) {
  const T scale = T(1) / static_cast<T>((over_h ? h : 1) * (over_l ? l : 1));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < l; ++j) {
      const T* g = dout.row(over_h ? 0 : i, over_l ? 0 : j);
      T* dst = din.row(i, j);
      for (int k = 0; k < d; ++k) dst[k] += g[k] * scale;
    }
}

template <typename T>
void pool_max_bwd(const std::vector<std::size_t>& argmax, const Tensor3<T>& dout,
                  Tensor3<T>& din) {
  for (std::size_t o = 0; o < dout.size(); ++o) din.data[argmax[o]] += dout.data[o];
}

// ---------------------------------------------------------------------------
// dilated 2D convolution over the (h, l) axes with zero "same" padding, so the
// output keeps the input's spatial dims. The pad offset centers the dilated
// span (k-1)*r + 1.

inline int conv_pad(int k, int r) { return ((k - 1) * r) / 2; }

template <typename T>
Tensor3<T> conv2d_dilated(const Tensor3<T>& in, const ConvKernel<T>& ker, int r) {
  if (r < 1) throw ArgumentError("conv2d_dilated: dilation must be >= 1");
  if (ker.d_in != in.d) throw ShapeError("conv2d_dilated: channel mismatch");
  const int ph = conv_pad(ker.k_h, r), pl = conv_pad(ker.k_l, r);
  Tensor3<T> out(in.h, in.l, ker.d_out);
  for (int i = 0; i < in.h; ++i) {
    for (int j = 0; j < in.l; ++j) {
      T* o = out.row(i, j);
      for (int dp = 0; dp < ker.d_out; ++dp) o[dp] = ker.bias[dp];
      for (int m = 0; m < ker.k_h; ++m) {
        const int a = i + m * r - ph;
        if (a < 0 || a >= in.h) continue;
        for (int n = 0; n < ker.k_l; ++n) {
          const int b = j + n * r - pl;
          if (b < 0 || b >= in.l) continue;
          const T* src = in.row(a, b);
          const T* w = &ker.weights[(static_cast<std::size_t>(m) * ker.k_l + n) *
                                    ker.d_in * ker.d_out];
          for (int d = 0; d < ker.d_in; ++d) {
            const T v = src[d];
            const T* wd = w + static_cast<std::size_t>(d) * ker.d_out;
            for (int dp = 0; dp < ker.d_out; ++dp) o[dp] += v * wd[dp];
          }
        }
      }
    }
  }
  return out;
}

// din may be nullptr when the input gradient is not needed.
template <typename T>
void conv2d_dilated_bwd(const Tensor3<T>& in, const ConvKernel<T>& ker, int r,
                        const Tensor3<T>& dout, Tensor3<T>* din, std::vector<T>& dw,
                        std::vector<T>& db) {
  const int ph = conv_pad(ker.k_h, r), pl = conv_pad(ker.k_l, r);
  for (int i = 0; i < in.h; ++i) {
    for (int j = 0; j < in.l; ++j) {
      const T* g = dout.row(i, j);
      for (int dp = 0; dp < ker.d_out; ++dp) db[dp] += g[dp];
      for (int m = 0; m < ker.k_h; ++m) {
        const int a = i + m * r - ph;
        if (a < 0 || a >= in.h) continue;
        for (int n = 0; n < ker.k_l; ++n) {
          const int b = j + n * r - pl;
          if (b < 0 || b >= in.l) continue;
          const T* src = in.row(a, b);
          T* dsrc = din ? din->row(a, b) : nullptr;
          const std::size_t wbase =
              (static_cast<std::size_t>(m) * ker.k_l + n) * ker.d_in * ker.d_out;
          for (int d = 0; d < ker.d_in; ++d) {
            const T v = src[d];
            const T* wd = &ker.weights[wbase + static_cast<std::size_t>(d) * ker.d_out];
            T* dwd = &dw[wbase + static_cast<std::size_t>(d) * ker.d_out];
            T acc = 0;
            for (int dp = 0; dp < ker.d_out; ++dp) {
              dwd[dp] += v * g[dp];
              acc += wd[dp] * g[dp];
            }
            if (dsrc) dsrc[d] += acc;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 1x1 convolution: a per-position affine map over the feature axis.

template <typename T>
Tensor3<T> conv1x1(const Tensor3<T>& in, const Matrix<T>& w, const std::vector<T>& b) {
  if (w.cols != in.d || static_cast<int>(b.size()) != w.rows)
    throw ShapeError("conv1x1: dims disagree");
  Tensor3<T> out(in.h, in.l, w.rows);
  for (int i = 0; i < in.h; ++i)
    for (int j = 0; j < in.l; ++j) {
      const T* x = in.row(i, j);
      T* o = out.row(i, j);
      for (int dp = 0; dp < w.rows; ++dp) {
        const T* wr = w.row(dp);
        T acc = b[dp];
        for (int d = 0; d < w.cols; ++d) acc += wr[d] * x[d];
        o[dp] = acc;
      }
    }
  return out;
}

template <typename T>
void conv1x1_bwd(const Tensor3<T>& in, const Matrix<T>& w, const Tensor3<T>& dout,
                 Tensor3<T>* din, Matrix<T>& dw, std::vector<T>& db) {
  for (int i = 0; i < in.h; ++i)
    for (int j = 0; j < in.l; ++j) {
      const T* x = in.row(i, j);
      const T* g = dout.row(i, j);
      T* dx = din ? din->row(i, j) : nullptr;
      for (int dp = 0; dp < w.rows; ++dp) {
        const T gd = g[dp];
        db[dp] += gd;
        T* dwr = dw.row(dp);
        const T* wr = w.row(dp);
        for (int d = 0; d < w.cols; ++d) {
          dwr[d] += gd * x[d];
          if (dx) dx[d] += gd * wr[d];
        }
      }
    }
}

// ---------------------------------------------------------------------------
// per-channel normalization over the row axis of a (H+L) x D matrix, with
// learned scale/shift. Statistics are per sample, so inference is
// batch-independent.

template <typename T>
struct InstanceNormCache {
  Matrix<T> xhat;
  std::vector<T> inv_std;  // per column
};

template <typename T>
Matrix<T> instance_norm(const Matrix<T>& g, const std::vector<T>& gamma,
                        const std::vector<T>& beta, InstanceNormCache<T>* cache,
                        T eps = T(1e-5)) {
  if (g.rows < 2) throw ArgumentError("instance_norm: needs at least 2 rows");
  if (static_cast<int>(gamma.size()) != g.cols || static_cast<int>(beta.size()) != g.cols)
    throw ShapeError("instance_norm: channel mismatch");
  Matrix<T> out(g.rows, g.cols);
  Matrix<T> xhat(g.rows, g.cols);
  std::vector<T> inv_std(g.cols);
  const T n = static_cast<T>(g.rows);
  for (int c = 0; c < g.cols; ++c) {
    T mean = 0;
    for (int r = 0; r < g.rows; ++r) mean += g.at(r, c);
    mean /= n;
    T var = 0;
    for (int r = 0; r < g.rows; ++r) {
      const T dlt = g.at(r, c) - mean;
      var += dlt * dlt;
    }
    var /= n;
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[c] = is;
    for (int r = 0; r < g.rows; ++r) {
      const T xh = (g.at(r, c) - mean) * is;
      xhat.at(r, c) = xh;
      out.at(r, c) = gamma[c] * xh + beta[c];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
void instance_norm_bwd(const InstanceNormCache<T>& cache, const std::vector<T>& gamma,
                       const Matrix<T>& dout, Matrix<T>& din, std::vector<T>& dgamma,
                       std::vector<T>& dbeta) {
  const int rows = cache.xhat.rows, cols = cache.xhat.cols;
  const T n = static_cast<T>(rows);
  for (int c = 0; c < cols; ++c) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (int r = 0; r < rows; ++r) {
      const T dy = dout.at(r, c);
      dbeta[c] += dy;
      dgamma[c] += dy * cache.xhat.at(r, c);
      sum_dy += dy * gamma[c];
      sum_dy_xhat += dy * gamma[c] * cache.xhat.at(r, c);
    }
    for (int r = 0; r < rows; ++r) {
      const T dxhat = dout.at(r, c) * gamma[c];
      din.at(r, c) +=
          cache.inv_std[c] * (dxhat - sum_dy / n - cache.xhat.at(r, c) * sum_dy_xhat / n);
    }
  }
}

// ---------------------------------------------------------------------------
// plain matrix products (nn = A*B, nt = A*B^T, tn = A^T*B); `acc` variants add
// into an existing matrix

template <typename T>
Matrix<T> matmul_nn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows) throw ShapeError("matmul_nn: inner dims disagree");
  Matrix<T> out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const T* ar = a.row(i);
    T* o = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const T v = ar[k];
      const T* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) o[j] += v * br[j];
    }
  }
  return out;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dims disagree");
  Matrix<T> out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const T* ar = a.row(i);
    T* o = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const T* br = b.row(j);
      T acc = 0;
      for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      o[j] = acc;
    }
  }
  return out;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: inner dims disagree");
  Matrix<T> out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const T* ar = a.row(k);
    const T* br = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const T v = ar[i];
      T* o = out.row(i);
      for (int j = 0; j < b.cols; ++j) o[j] += v * br[j];
    }
  }
  return out;
}

template <typename T>
void add_into(Matrix<T>& dst, const Matrix<T>& src) {
  if (!dst.same_shape(src)) throw ShapeError("add_into: shape mismatch");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// ---------------------------------------------------------------------------
// small helpers shared by the composite modules

template <typename T>
Tensor3<T> hadamard(const Tensor3<T>& a, const Tensor3<T>& b) {
  if (!a.same_shape(b)) throw ArgumentError("hadamard: shape mismatch");
  Tensor3<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

// Concatenate along the feature axis.
template <typename T>
Tensor3<T> concat_features(const std::vector<const Tensor3<T>*>& parts) {
  int dsum = 0;
  for (const auto* p : parts) {
    if (p->h != parts[0]->h || p->l != parts[0]->l)
      throw ShapeError("concat_features: spatial dims disagree");
    dsum += p->d;
  }
  Tensor3<T> out(parts[0]->h, parts[0]->l, dsum);
  for (int i = 0; i < out.h; ++i)
    for (int j = 0; j < out.l; ++j) {
      T* o = out.row(i, j);
      for (const auto* p : parts) {
        const T* src = p->row(i, j);
        o = std::copy(src, src + p->d, o);
      }
    }
  return out;
}

// Split a feature-axis gradient back into per-part gradients (accumulating).
template <typename T>
void split_features_bwd(const Tensor3<T>& dout, const std::vector<Tensor3<T>*>& dparts) {
  for (int i = 0; i < dout.h; ++i)
    for (int j = 0; j < dout.l; ++j) {
      const T* g = dout.row(i, j);
      for (auto* p : dparts) {
        T* dst = p->row(i, j);
        for (int k = 0; k < p->d; ++k) dst[k] += g[k];
        g += p->d;
      }
    }
}

}  // namespace trisim
