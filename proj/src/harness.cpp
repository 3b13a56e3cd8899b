#include "trisim/harness.hpp"

#include <atomic>
#include <memory>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "trisim/checkpoint.hpp"
#include "trisim/dataset.hpp"
#include "trisim/train.hpp"

namespace trisim {

// ---------------------------------------------------------------------------
// gradient checks
//
// Each check exposes the same computation at two precisions: the analytic
// gradient under test runs in double, while the finite-difference oracle can
// evaluate the value function in extended precision so the oracle's own
// rounding stays below the tolerance even for near-zero coordinate gradients.

namespace {

template <typename T>
std::vector<T> cast_vec(const std::vector<double>& v) {
  return std::vector<T>(v.begin(), v.end());
}

template <typename T, typename S>
T dot_cast(const std::vector<double>& c, const std::vector<S>& x) {
  T acc = 0;
  for (std::size_t i = 0; i < c.size(); ++i) acc += static_cast<T>(c[i]) * static_cast<T>(x[i]);
  return acc;
}

struct ParamPack {
  std::vector<ParamRef<double>> refs;

  void append_values(std::vector<double>& point) const {
    for (const auto& r : refs)
      point.insert(point.end(), r.value->begin(), r.value->end());
  }

  void load_values(const std::vector<double>& point, std::size_t offset = 0) const {
    for (const auto& r : refs) {
      std::copy(point.begin() + offset, point.begin() + offset + r.value->size(),
                r.value->begin());
      offset += r.value->size();
    }
  }

  void append_grads(std::vector<double>& out) const {
    for (const auto& r : refs) out.insert(out.end(), r.grad->begin(), r.grad->end());
  }

  void zero_grads() const {
    for (const auto& r : refs) std::fill(r.grad->begin(), r.grad->end(), 0.0);
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& r : refs) n += r.value->size();
    return n;
  }
};

template <typename M>
ParamPack pack_of(M& module) {
  ParamPack pack;
  module.visit([&](const ParamRef<double>& r) { pack.refs.push_back(r); });
  return pack;
}

// Loads a module's parameters (in visit order) from a flat point.
template <typename T, typename M>
std::size_t load_params(M& module, const std::vector<T>& point, std::size_t offset) {
  module.visit([&](const ParamRef<T>& r) {
    std::copy(point.begin() + offset, point.begin() + offset + r.value->size(),
              r.value->begin());
    offset += r.value->size();
  });
  return offset;
}

// Test points and projection weights are kept away from zero so no coordinate
// gradient vanishes by construction.
std::vector<double> signed_point(std::size_t n, Rng& rng, double lo = 0.1, double hi = 1.0) {
  std::vector<double> p(n);
  for (auto& x : p) {
    const double mag = rng.uniform(lo, hi);
    x = rng.next_double() < 0.5 ? -mag : mag;
  }
  return p;
}

std::vector<double> projection(std::size_t n, Rng& rng) {
  return signed_point(n, rng, 0.25, 1.0);
}

struct Check {
  std::string name;
  DiffFunction fn;
  std::vector<double> point;
};

// Wires a templated value functor into both precision slots.
template <typename F>
void set_value(Check& chk, F f) {
  chk.fn.value = [f](const std::vector<double>& p) { return f(p); };
  chk.fn.value_hp = [f](const std::vector<long double>& p) { return f(p); };
}

// ---------------------------------------------------------------------------
// primitive checks

Check check_affine(Rng& rng) {
  const int din = 4, dout = 3;
  const std::vector<double> c = projection(dout, rng);
  Check chk;
  chk.name = "affine";
  chk.point = signed_point(din + dout * din + dout, rng);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    std::vector<T> x(p.begin(), p.begin() + din);
    Matrix<T> w(dout, din);
    std::copy(p.begin() + din, p.begin() + din + dout * din, w.data.begin());
    std::vector<T> b(p.end() - dout, p.end());
    return dot_cast<T>(c, affine(x, w, b));
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    std::vector<double> x(p.begin(), p.begin() + din);
    Matrix<double> w(dout, din);
    std::copy(p.begin() + din, p.begin() + din + dout * din, w.data.begin());
    std::vector<double> dx(din, 0.0), db(dout, 0.0);
    Matrix<double> dw(dout, din);
    affine_bwd(x, w, c, &dx, dw, db);
    std::vector<double> g;
    g.insert(g.end(), dx.begin(), dx.end());
    g.insert(g.end(), dw.data.begin(), dw.data.end());
    g.insert(g.end(), db.begin(), db.end());
    return g;
  };
  return chk;
}

Check check_softmax(Rng& rng, Axis axis) {
  const int rows = 3, cols = 4;
  const std::vector<double> c = projection(rows * cols, rng);
  Check chk;
  chk.name = axis == Axis::cols ? "softmax_cols" : "softmax_rows";
  chk.point = signed_point(rows * cols, rng, 0.1, 2.0);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Matrix<T> m(rows, cols);
    m.data = p;
    return dot_cast<T>(c, softmax_axis(m, axis).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Matrix<double> m(rows, cols);
    m.data = p;
    Matrix<double> s = softmax_axis(m, axis);
    Matrix<double> dout(rows, cols), din(rows, cols);
    dout.data = c;
    softmax_axis_bwd(s, dout, axis, din);
    return din.data;
  };
  return chk;
}

Check check_relu(Rng& rng) {
  const int n = 12;
  const std::vector<double> c = projection(n, rng);
  Check chk;
  chk.name = "relu";
  chk.point = signed_point(n, rng);  // away from the kink
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    return dot_cast<T>(c, relu(p));
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    std::vector<double> dx(n, 0.0);
    relu_bwd(p, c, dx);
    return dx;
  };
  return chk;
}

Check check_sigmoid(Rng& rng) {
  const int n = 12;
  const std::vector<double> c = projection(n, rng);
  Check chk;
  chk.name = "sigmoid";
  chk.point = signed_point(n, rng, 0.1, 3.0);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    return dot_cast<T>(c, sigmoid(p));
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    std::vector<double> y = sigmoid(p);
    std::vector<double> dx(n, 0.0);
    sigmoid_bwd(y, c, dx);
    return dx;
  };
  return chk;
}

Check check_pool(Rng& rng, bool over_h, bool over_l, PoolMode mode, const std::string& name) {
  const int h = 3, l = 4, d = 2;
  const int oh = over_h ? 1 : h, ol = over_l ? 1 : l;
  const std::vector<double> c = projection(static_cast<std::size_t>(oh) * ol * d, rng);
  Check chk;
  chk.name = name;
  chk.point = signed_point(static_cast<std::size_t>(h) * l * d, rng);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Tensor3<T> t(h, l, d);
    t.data = p;
    return dot_cast<T>(c, pool(t, over_h, over_l, mode).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Tensor3<double> t(h, l, d);
    t.data = p;
    Tensor3<double> dout(oh, ol, d), din(h, l, d);
    dout.data = c;
    if (mode == PoolMode::avg) {
      pool_avg_bwd(h, l, d, over_h, over_l, dout, din);
    } else {
      std::vector<std::size_t> argmax;
      pool(t, over_h, over_l, PoolMode::max, &argmax);
      pool_max_bwd(argmax, dout, din);
    }
    return din.data;
  };
  return chk;
}

Check check_conv(Rng& rng, int r, const std::string& name) {
  const int h = 4, l = 5, c_in = 2, c_out = 2, kh = 3, kl = 3;
  const std::vector<double> c = projection(static_cast<std::size_t>(h) * l * c_out, rng);
  const std::size_t nt = static_cast<std::size_t>(h) * l * c_in;
  const std::size_t nw = static_cast<std::size_t>(kh) * kl * c_in * c_out;
  Check chk;
  chk.name = name;
  chk.point = signed_point(nt + nw + c_out, rng);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Tensor3<T> t(h, l, c_in);
    std::copy(p.begin(), p.begin() + nt, t.data.begin());
    ConvKernel<T> k(kh, kl, c_in, c_out);
    std::copy(p.begin() + nt, p.begin() + nt + nw, k.weights.begin());
    std::copy(p.begin() + nt + nw, p.end(), k.bias.begin());
    return dot_cast<T>(c, conv2d_dilated(t, k, r).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Tensor3<double> t(h, l, c_in);
    std::copy(p.begin(), p.begin() + nt, t.data.begin());
    ConvKernel<double> k(kh, kl, c_in, c_out);
    std::copy(p.begin() + nt, p.begin() + nt + nw, k.weights.begin());
    std::copy(p.begin() + nt + nw, p.end(), k.bias.begin());
    Tensor3<double> dout(h, l, c_out);
    dout.data = c;
    Tensor3<double> din(h, l, c_in);
    std::vector<double> dw(nw, 0.0), db(c_out, 0.0);
    conv2d_dilated_bwd(t, k, r, dout, &din, dw, db);
    std::vector<double> g;
    g.insert(g.end(), din.data.begin(), din.data.end());
    g.insert(g.end(), dw.begin(), dw.end());
    g.insert(g.end(), db.begin(), db.end());
    return g;
  };
  return chk;
}

Check check_conv1x1(Rng& rng) {
  const int h = 3, l = 4, c_in = 3, c_out = 2;
  const std::vector<double> c = projection(static_cast<std::size_t>(h) * l * c_out, rng);
  const std::size_t nt = static_cast<std::size_t>(h) * l * c_in;
  Check chk;
  chk.name = "conv1x1";
  chk.point = signed_point(nt + c_out * c_in + c_out, rng);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Tensor3<T> t(h, l, c_in);
    std::copy(p.begin(), p.begin() + nt, t.data.begin());
    Matrix<T> w(c_out, c_in);
    std::copy(p.begin() + nt, p.begin() + nt + w.size(), w.data.begin());
    std::vector<T> b(p.end() - c_out, p.end());
    return dot_cast<T>(c, conv1x1(t, w, b).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Tensor3<double> t(h, l, c_in);
    std::copy(p.begin(), p.begin() + nt, t.data.begin());
    Matrix<double> w(c_out, c_in);
    std::copy(p.begin() + nt, p.begin() + nt + w.size(), w.data.begin());
    std::vector<double> b(p.end() - c_out, p.end());
    Tensor3<double> dout(h, l, c_out);
    dout.data = c;
    Tensor3<double> din(h, l, c_in);
    Matrix<double> dw(c_out, c_in);
    std::vector<double> db(c_out, 0.0);
    conv1x1_bwd(t, w, dout, &din, dw, db);
    std::vector<double> g;
    g.insert(g.end(), din.data.begin(), din.data.end());
    g.insert(g.end(), dw.data.begin(), dw.data.end());
    g.insert(g.end(), db.begin(), db.end());
    return g;
  };
  return chk;
}

Check check_instance_norm(Rng& rng) {
  const int rows = 5, cols = 3;
  const std::vector<double> c = projection(static_cast<std::size_t>(rows) * cols, rng);
  const std::size_t ng = static_cast<std::size_t>(rows) * cols;
  Check chk;
  chk.name = "instance_norm";
  chk.point = signed_point(ng + 2 * cols, rng);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Matrix<T> g(rows, cols);
    std::copy(p.begin(), p.begin() + ng, g.data.begin());
    std::vector<T> gamma(p.begin() + ng, p.begin() + ng + cols);
    std::vector<T> beta(p.end() - cols, p.end());
    return dot_cast<T>(c, instance_norm<T>(g, gamma, beta, nullptr).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Matrix<double> g(rows, cols);
    std::copy(p.begin(), p.begin() + ng, g.data.begin());
    std::vector<double> gamma(p.begin() + ng, p.begin() + ng + cols);
    std::vector<double> beta(p.end() - cols, p.end());
    InstanceNormCache<double> cache;
    instance_norm(g, gamma, beta, &cache);
    Matrix<double> dout(rows, cols), din(rows, cols);
    dout.data = c;
    std::vector<double> dgamma(cols, 0.0), dbeta(cols, 0.0);
    instance_norm_bwd(cache, gamma, dout, din, dgamma, dbeta);
    std::vector<double> grad;
    grad.insert(grad.end(), din.data.begin(), din.data.end());
    grad.insert(grad.end(), dgamma.begin(), dgamma.end());
    grad.insert(grad.end(), dbeta.begin(), dbeta.end());
    return grad;
  };
  return chk;
}

Check check_cross_entropy(Rng& rng) {
  const int n = 3, label = 2;
  Check chk;
  chk.name = "cross_entropy";
  chk.point = signed_point(n, rng, 0.1, 2.0);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Matrix<T> m(1, n);
    m.data = p;
    return cross_entropy(softmax_axis(m, Axis::cols).data, label);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Matrix<double> m(1, n);
    m.data = p;
    return cross_entropy_logit_grad(softmax_axis(m, Axis::cols).data, label);
  };
  return chk;
}

// ---------------------------------------------------------------------------
// composite checks at the desk dims H=2, L=3, D=4, D'=2, D''=2, k=2

RunConfig gradcheck_config(const std::string& fa, const std::string& fusion, bool sa) {
  RunConfig cfg;
  cfg.encoder = {"synth", 2, 3, 4, 8, 99};
  cfg.blocks.strategy = "all";
  cfg.blocks.adaptive = true;
  cfg.attention.sa = sa;
  cfg.attention.fa = fa;
  cfg.attention.d_prime = 2;
  cfg.fusion.mode = fusion;
  cfg.fusion.k = 2;
  cfg.fusion.psi_sizes = {1, 3};
  cfg.fusion.phi_size = 3;
  cfg.fusion.dilations = {1, 2};
  cfg.fusion.d_dprime = 2;
  cfg.head.hidden = 8;
  cfg.head.labels = "binary";
  cfg.train.seed = 7;
  return cfg;
}

Check check_afe(Rng& rng) {
  const int h = 2, l = 3, d = 4;
  const std::uint64_t init_seed = rng.next_u64();
  const std::vector<double> blocks_flat =
      signed_point(static_cast<std::size_t>(h) * l * d, rng);
  const std::vector<double> c = projection(static_cast<std::size_t>(h) * l * d, rng);
  auto make_params = [=]<typename T>(AfeParams<T>& params) {
    Rng r(init_seed);
    params.init({0, 1}, d, 1, true, r);
  };
  auto make_blocks = [=]<typename T>() {
    BlockStack<T> blocks;
    for (int b = 0; b < h; ++b) {
      Matrix<T> m(l, d);
      for (int i = 0; i < l * d; ++i)
        m.data[i] = static_cast<T>(blocks_flat[static_cast<std::size_t>(b) * l * d + i]);
      blocks.push_back(std::move(m));
    }
    return blocks;
  };
  Check chk;
  chk.name = "afe";
  {
    AfeParams<double> params;
    make_params(params);
    pack_of(params).append_values(chk.point);
  }
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    AfeParams<T> params;
    make_params(params);
    load_params(params, p, 0);
    AfeCache<T> cache;
    const BlockStack<T> blocks = make_blocks.template operator()<T>();
    return dot_cast<T>(c, afe_forward(blocks, params, cache).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    AfeParams<double> params;
    make_params(params);
    load_params(params, p, 0);
    AfeCache<double> cache;
    const BlockStack<double> blocks = make_blocks.template operator()<double>();
    afe_forward(blocks, params, cache);
    Tensor3<double> dout(h, l, d);
    dout.data = c;
    afe_backward(dout, params, cache);
    std::vector<double> g;
    pack_of(params).append_grads(g);
    return g;
  };
  return chk;
}

Check check_sa(Rng& rng) {
  const int h = 2, l = 3, d = 4, dp = 2;
  const std::uint64_t init_seed = rng.next_u64();
  const std::size_t nt = static_cast<std::size_t>(h) * l * d;
  const std::vector<double> cx = projection(static_cast<std::size_t>(h) * l * dp, rng);
  const std::vector<double> cy = projection(static_cast<std::size_t>(h) * l * dp, rng);
  auto make_params = [=]<typename T>(SaParams<T>& params) {
    Rng r(init_seed);
    params.init(d, dp, false, r);
  };
  std::size_t np;
  Check chk;
  chk.name = "sa";
  {
    SaParams<double> params;
    make_params(params);
    ParamPack pack = pack_of(params);
    np = pack.total();
    pack.append_values(chk.point);
  }
  const auto inputs = signed_point(2 * nt, rng);
  chk.point.insert(chk.point.end(), inputs.begin(), inputs.end());
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    SaParams<T> params;
    make_params(params);
    load_params(params, p, 0);
    Tensor3<T> x(h, l, d), y(h, l, d);
    std::copy(p.begin() + np, p.begin() + np + nt, x.data.begin());
    std::copy(p.begin() + np + nt, p.end(), y.data.begin());
    SaCache<T> cache;
    auto [xs, ys] = sa_forward(x, y, params, cache);
    return dot_cast<T>(cx, xs.data) + dot_cast<T>(cy, ys.data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    SaParams<double> params;
    make_params(params);
    load_params(params, p, 0);
    Tensor3<double> x(h, l, d), y(h, l, d);
    std::copy(p.begin() + np, p.begin() + np + nt, x.data.begin());
    std::copy(p.begin() + np + nt, p.end(), y.data.begin());
    SaCache<double> cache;
    sa_forward(x, y, params, cache);
    Tensor3<double> dxs(h, l, dp), dys(h, l, dp);
    dxs.data = cx;
    dys.data = cy;
    auto [dx, dy] = sa_backward(dxs, dys, params, cache);
    std::vector<double> g;
    pack_of(params).append_grads(g);
    g.insert(g.end(), dx.data.begin(), dx.data.end());
    g.insert(g.end(), dy.data.begin(), dy.data.end());
    return g;
  };
  return chk;
}

Check check_fa(Rng& rng, FaVariant v, const std::string& name) {
  const int h = 2, l = 3, d = 4, dp = 2;
  const std::uint64_t init_seed = rng.next_u64();
  const std::size_t nt = static_cast<std::size_t>(h) * l * d;
  const std::vector<double> c = projection(static_cast<std::size_t>(h) * l * dp, rng);
  auto make_params = [=]<typename T>(FaParams<T>& params) {
    Rng r(init_seed);
    params.init(v, d, 1, dp, r);
  };
  std::size_t np;
  Check chk;
  chk.name = name;
  {
    FaParams<double> params;
    make_params(params);
    ParamPack pack = pack_of(params);
    np = pack.total();
    pack.append_values(chk.point);
  }
  const auto inputs = signed_point(nt, rng);
  chk.point.insert(chk.point.end(), inputs.begin(), inputs.end());
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    FaParams<T> params;
    make_params(params);
    load_params(params, p, 0);
    Tensor3<T> x(h, l, d);
    std::copy(p.begin() + np, p.end(), x.data.begin());
    FaCache<T> cache;
    return dot_cast<T>(c, fa_forward(x, params, cache).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    FaParams<double> params;
    make_params(params);
    load_params(params, p, 0);
    Tensor3<double> x(h, l, d);
    std::copy(p.begin() + np, p.end(), x.data.begin());
    FaCache<double> cache;
    fa_forward(x, params, cache);
    Tensor3<double> dout(h, l, dp);
    dout.data = c;
    Tensor3<double> dx = fa_backward(dout, params, cache);
    std::vector<double> g;
    pack_of(params).append_grads(g);
    g.insert(g.end(), dx.data.begin(), dx.data.end());
    return g;
  };
  return chk;
}

Check check_rfm(Rng& rng) {
  const int h = 2, l = 3, dp = 2, dpp = 2;
  const std::uint64_t init_seed = rng.next_u64();
  const std::size_t nt = static_cast<std::size_t>(h) * l * dp;
  auto make_params = [=]<typename T>(RfmParams<T>& params) {
    Rng r(init_seed);
    params.init({1, 3}, 3, {1, 2}, dp, dpp, r);
  };
  int n_out;
  std::size_t np;
  Check chk;
  chk.name = "rfm";
  {
    RfmParams<double> params;
    make_params(params);
    n_out = params.out_features();
    ParamPack pack = pack_of(params);
    np = pack.total();
    pack.append_values(chk.point);
  }
  const std::vector<double> c = projection(static_cast<std::size_t>(h) * l * n_out, rng);
  const auto inputs = signed_point(nt, rng);
  chk.point.insert(chk.point.end(), inputs.begin(), inputs.end());
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    RfmParams<T> params;
    make_params(params);
    load_params(params, p, 0);
    Tensor3<T> x(h, l, dp);
    std::copy(p.begin() + np, p.end(), x.data.begin());
    RfmCache<T> cache;
    return dot_cast<T>(c, rfm_forward(x, params, cache).data);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    RfmParams<double> params;
    make_params(params);
    load_params(params, p, 0);
    Tensor3<double> x(h, l, dp);
    std::copy(p.begin() + np, p.end(), x.data.begin());
    RfmCache<double> cache;
    rfm_forward(x, params, cache);
    Tensor3<double> dout(h, l, n_out);
    dout.data = c;
    Tensor3<double> dx = rfm_backward(dout, params, cache);
    std::vector<double> g;
    pack_of(params).append_grads(g);
    g.insert(g.end(), dx.data.begin(), dx.data.end());
    return g;
  };
  return chk;
}

Check check_pooling_fusion(Rng& rng) {
  const int h = 2, l = 3, d = 4;
  const std::size_t nt = static_cast<std::size_t>(h) * l * d;
  const std::vector<double> c = projection(6 * d, rng);
  Check chk;
  chk.name = "pooling_fusion";
  chk.point = signed_point(2 * nt, rng);
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Tensor3<T> x(h, l, d), y(h, l, d);
    std::copy(p.begin(), p.begin() + nt, x.data.begin());
    std::copy(p.begin() + nt, p.end(), y.data.begin());
    PoolingFusionCache<T> cache;
    return dot_cast<T>(c, pooling_fusion(x, y, cache));
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Tensor3<double> x(h, l, d), y(h, l, d);
    std::copy(p.begin(), p.begin() + nt, x.data.begin());
    std::copy(p.begin() + nt, p.end(), y.data.begin());
    PoolingFusionCache<double> cache;
    pooling_fusion(x, y, cache);
    auto [dx, dy] = pooling_fusion_bwd(c, cache);
    std::vector<double> g;
    g.insert(g.end(), dx.data.begin(), dx.data.end());
    g.insert(g.end(), dy.data.begin(), dy.data.end());
    return g;
  };
  return chk;
}

Check check_head(Rng& rng) {
  const int in = 12, hidden = 6, labels = 3, label = 1;
  const std::uint64_t init_seed = rng.next_u64();
  auto make_params = [=]<typename T>(HeadParams<T>& params) {
    Rng r(init_seed);
    params.init(in, hidden, labels, r);
  };
  std::size_t np;
  Check chk;
  chk.name = "head";
  {
    HeadParams<double> params;
    make_params(params);
    ParamPack pack = pack_of(params);
    np = pack.total();
    pack.append_values(chk.point);
  }
  const auto inputs = signed_point(in, rng);
  chk.point.insert(chk.point.end(), inputs.begin(), inputs.end());
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    HeadParams<T> params;
    make_params(params);
    load_params(params, p, 0);
    std::vector<T> v(p.begin() + np, p.end());
    HeadCache<T> cache;
    return cross_entropy(classify_head(v, params, cache), label);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    HeadParams<double> params;
    make_params(params);
    load_params(params, p, 0);
    std::vector<double> v(p.begin() + np, p.end());
    HeadCache<double> cache;
    const auto probs = classify_head(v, params, cache);
    std::vector<double> dv =
        classify_head_bwd(cross_entropy_logit_grad(probs, label), params, cache);
    std::vector<double> g;
    pack_of(params).append_grads(g);
    g.insert(g.end(), dv.begin(), dv.end());
    return g;
  };
  return chk;
}

Check check_model(Rng& rng, const std::string& fa, const std::string& fusion, bool sa,
                  const std::string& name) {
  const RunConfig cfg = gradcheck_config(fa, fusion, sa);
  const int label = 0;
  const std::vector<double> bx = signed_point(2 * 3 * 4, rng);
  const std::vector<double> by = signed_point(2 * 3 * 4, rng);
  auto make_blocks = [=]<typename T>(const std::vector<double>& flat) {
    BlockStack<T> blocks;
    for (int b = 0; b < 2; ++b) {
      Matrix<T> m(3, 4);
      for (int i = 0; i < 12; ++i)
        m.data[i] = static_cast<T>(flat[static_cast<std::size_t>(b) * 12 + i]);
      blocks.push_back(std::move(m));
    }
    return blocks;
  };
  Check chk;
  chk.name = name;
  {
    Model<double> model(cfg);
    model.visit_params([&](const ParamRef<double>& r) {
      chk.point.insert(chk.point.end(), r.value->begin(), r.value->end());
    });
  }
  set_value(chk, [=]<typename T>(const std::vector<T>& p) -> T {
    Model<T> model(cfg);
    std::size_t offset = 0;
    model.visit_params([&](const ParamRef<T>& r) {
      std::copy(p.begin() + offset, p.begin() + offset + r.value->size(), r.value->begin());
      offset += r.value->size();
    });
    ModelCache<T> cache;
    const BlockStack<T> x = make_blocks.template operator()<T>(bx);
    const BlockStack<T> y = make_blocks.template operator()<T>(by);
    return cross_entropy(model.forward(x, y, cache), label);
  });
  chk.fn.gradient = [=](const std::vector<double>& p) {
    Model<double> model(cfg);
    std::size_t offset = 0;
    model.visit_params([&](const ParamRef<double>& r) {
      std::copy(p.begin() + offset, p.begin() + offset + r.value->size(), r.value->begin());
      offset += r.value->size();
    });
    model.zero_grads();
    ModelCache<double> cache;
    const BlockStack<double> x = make_blocks.template operator()<double>(bx);
    const BlockStack<double> y = make_blocks.template operator()<double>(by);
    const auto probs = model.forward(x, y, cache);
    model.backward(cross_entropy_logit_grad(probs, label), cache);
    std::vector<double> g;
    model.visit_params(
        [&](const ParamRef<double>& r) { g.insert(g.end(), r.grad->begin(), r.grad->end()); });
    return g;
  };
  return chk;
}

std::vector<GradCheckRow> run_checks(std::vector<Check> checks, double threshold,
                                     const std::string& inject_fault) {
  std::vector<GradCheckRow> rows;
  for (auto& chk : checks) {
    DiffFunction fn = chk.fn;
    if (chk.name == inject_fault) {
      auto grad = fn.gradient;
      fn.gradient = [grad](const std::vector<double>& p) {
        auto g = grad(p);
        for (auto& x : g) x = -x;
        return g;
      };
    }
    GradCheckRow row;
    row.name = chk.name;
    row.result = grad_check(fn, chk.point);
    row.pass = row.result.finite && row.result.max_rel_err < threshold;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<GradCheckRow> run_primitive_gradchecks(std::uint64_t seed, double threshold,
                                                   const std::string& inject_fault) {
  Rng rng(seed ^ 0xC0FFEEull);
  std::vector<Check> checks;
  checks.push_back(check_affine(rng));
  checks.push_back(check_softmax(rng, Axis::cols));
  checks.push_back(check_softmax(rng, Axis::rows));
  checks.push_back(check_relu(rng));
  checks.push_back(check_sigmoid(rng));
  checks.push_back(check_pool(rng, false, true, PoolMode::avg, "pool_avg_l"));
  checks.push_back(check_pool(rng, true, true, PoolMode::avg, "pool_avg_hl"));
  checks.push_back(check_pool(rng, true, true, PoolMode::max, "pool_max_hl"));
  checks.push_back(check_conv(rng, 1, "conv2d_r1"));
  checks.push_back(check_conv(rng, 2, "conv2d_r2"));
  checks.push_back(check_conv1x1(rng));
  checks.push_back(check_instance_norm(rng));
  checks.push_back(check_cross_entropy(rng));
  return run_checks(std::move(checks), threshold, inject_fault);
}

std::vector<GradCheckRow> run_composite_gradchecks(std::uint64_t seed, double threshold,
                                                   const std::string& inject_fault) {
  Rng rng(seed ^ 0xFEEDull);
  std::vector<Check> checks;
  checks.push_back(check_afe(rng));
  checks.push_back(check_sa(rng));
  checks.push_back(check_fa(rng, FaVariant::fa1, "fa1"));
  checks.push_back(check_fa(rng, FaVariant::fa2, "fa2"));
  checks.push_back(check_fa(rng, FaVariant::fa3, "fa3"));
  checks.push_back(check_rfm(rng));
  checks.push_back(check_pooling_fusion(rng));
  checks.push_back(check_head(rng));
  checks.push_back(check_model(rng, "fa1", "rfm", true, "model_sa_fa1_rfm"));
  checks.push_back(check_model(rng, "fa2", "rfm", true, "model_sa_fa2_rfm"));
  checks.push_back(check_model(rng, "fa3", "rfm", true, "model_sa_fa3_rfm"));
  checks.push_back(check_model(rng, "fa1", "pooling", true, "model_sa_fa1_pooling"));
  checks.push_back(check_model(rng, "fa2", "pooling", true, "model_sa_fa2_pooling"));
  checks.push_back(check_model(rng, "fa3", "pooling", true, "model_sa_fa3_pooling"));
  checks.push_back(check_model(rng, "none", "rfm", true, "model_sa_only_rfm"));
  checks.push_back(check_model(rng, "fa3", "rfm", false, "model_fa3_only_rfm"));
  return run_checks(std::move(checks), threshold, inject_fault);
}

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, double threshold,
                                              const std::string& inject_fault) {
  auto rows = run_primitive_gradchecks(seed, threshold, inject_fault);
  auto comp = run_composite_gradchecks(seed, threshold, inject_fault);
  rows.insert(rows.end(), comp.begin(), comp.end());
  return rows;
}

// ---------------------------------------------------------------------------
// experiment grids

namespace {

int thread_cap() {
  if (const char* env = std::getenv("TRISIM_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string attention_label(const RunConfig& cfg) {
  std::string label;
  if (cfg.attention.sa) label = "sa";
  if (cfg.attention.fa != "none") {
    if (!label.empty()) label += "+";
    label += cfg.attention.fa;
  }
  return label;
}

}  // namespace

GridSpec make_grid(const RunConfig& base, const std::string& grid) {
  GridSpec spec;
  spec.name = grid;
  auto add = [&](const std::string& cell, const RunConfig& cfg) {
    spec.cells.push_back(cell);
    spec.configs.push_back(cfg);
  };
  if (grid == "main") {
    for (const std::string fusion : {"pooling", "rfm"}) {
      for (const std::string fa : {"none", "fa1", "fa2", "fa3"}) {
        RunConfig cfg = base;
        cfg.attention.sa = true;
        cfg.attention.fa = fa;
        cfg.fusion.mode = fusion;
        add(fusion + "/" + attention_label(cfg), cfg);
      }
    }
  } else if (grid == "fa") {
    // standalone FA arms, no SA
    for (const std::string fusion : {"pooling", "rfm"}) {
      for (const std::string fa : {"fa1", "fa2", "fa3"}) {
        RunConfig cfg = base;
        cfg.attention.sa = false;
        cfg.attention.fa = fa;
        cfg.fusion.mode = fusion;
        add(fusion + "/" + fa, cfg);
      }
    }
  } else if (grid == "rfm") {
    // fusion-architecture ablation under the strongest attention combo
    RunConfig pooling = base;
    pooling.attention.sa = true;
    pooling.attention.fa = "fa3";
    pooling.fusion.mode = "pooling";
    add("pooling", pooling);
    RunConfig inception = pooling;
    inception.fusion.mode = "rfm";
    inception.fusion.dilations.assign(inception.fusion.dilations.size(), 1);
    add("inception", inception);
    RunConfig dilated = pooling;
    dilated.fusion.mode = "rfm";
    dilated.fusion.psi_sizes.assign(dilated.fusion.psi_sizes.size(), 3);
    add("dilated", dilated);
    RunConfig rfm = pooling;
    rfm.fusion.mode = "rfm";
    add("rfm", rfm);
  } else {
    throw ArgumentError("unknown grid \"" + grid + "\" (expected main|fa|rfm)");
  }
  return spec;
}

std::vector<CellResult> run_grid(const GridSpec& grid, const std::string& data_dir,
                                 int n_seeds, bool quiet) {
  if (n_seeds < 1) throw ArgumentError("run_grid: need at least one seed");
  // All cells in a grid share encoder settings, so encode once.
  const RunConfig& first = grid.configs.front();
  const auto train_set = load_encoded_split(first, data_dir, "train");
  const auto val_set = load_encoded_split(first, data_dir, "val");
  const auto test_set = load_encoded_split(first, data_dir, "test");

  struct Task {
    std::size_t cell;
    int seed_offset;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < grid.configs.size(); ++c)
    for (int s = 0; s < n_seeds; ++s) tasks.push_back({c, s});

  std::vector<CellResult> results(grid.configs.size());
  std::vector<std::vector<double>> accs(grid.configs.size(),
                                        std::vector<double>(n_seeds, 0.0));
  // Seed-0 models are kept for the sequential latency pass.
  std::vector<std::unique_ptr<Model<float>>> bench_models(grid.configs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      RunConfig cfg = grid.configs[task.cell];
      cfg.train.seed = cfg.train.seed + static_cast<std::uint64_t>(task.seed_offset);
      auto model = std::make_unique<Model<float>>(cfg);
      train_model(*model, train_set, val_set, cfg.train);
      accs[task.cell][task.seed_offset] = evaluate(*model, test_set).accuracy;
      if (task.seed_offset == 0) bench_models[task.cell] = std::move(model);
    }
  };
  const int n_threads = std::min<int>(thread_cap(), static_cast<int>(tasks.size()));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (std::size_t c = 0; c < grid.configs.size(); ++c) {
    CellResult& r = results[c];
    r.cell = grid.cells[c];
    const RunConfig& cfg = grid.configs[c];
    r.feature_extraction = cfg.blocks.adaptive ? "afe" : "fe";
    r.attention = attention_label(cfg);
    r.fusion = cfg.fusion.mode == "rfm" ? "rfm" : "max&avg pooling";
    r.accuracies = accs[c];
    std::vector<double> sorted = accs[c];
    std::sort(sorted.begin(), sorted.end());
    r.accuracy_median = sorted[sorted.size() / 2];
    r.params = bench_models[c]->param_count();
    if (!quiet) {
      std::fprintf(stderr, "[grid %s] %-18s median acc %.4f\n", grid.name.c_str(),
                   r.cell.c_str(), r.accuracy_median);
    }
  }
  // Latency pass: sequential, single-threaded, on the seed-0 models.
  for (std::size_t c = 0; c < grid.configs.size(); ++c)
    results[c].ms_per_pair = bench_latency_ms(*bench_models[c], test_set, 3);
  return results;
}

std::vector<RobustCell> run_robustness(const RunConfig& base, const std::string& data_dir,
                                       int n_seeds, bool quiet) {
  if (n_seeds < 1) throw ArgumentError("run_robustness: need at least one seed");
  const std::vector<std::string> strategies = {"spaced_half", "bottom_half", "top_half", "all"};
  std::vector<RobustCell> cells;
  for (const auto& strategy : strategies)
    for (bool adaptive : {false, true}) {
      RobustCell cell;
      cell.strategy = strategy;
      cell.adaptive = adaptive;
      cells.push_back(cell);
    }

  // Encodings depend only on the strategy; share them across the two arms.
  std::vector<std::vector<EncodedPair<float>>> enc_train(strategies.size());
  std::vector<std::vector<EncodedPair<float>>> enc_val(strategies.size());
  std::vector<std::vector<EncodedPair<float>>> enc_test(strategies.size());
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    RunConfig cfg = base;
    cfg.blocks.strategy = strategies[s];
    enc_train[s] = load_encoded_split(cfg, data_dir, "train");
    enc_val[s] = load_encoded_split(cfg, data_dir, "val");
    enc_test[s] = load_encoded_split(cfg, data_dir, "test");
  }

  struct Task {
    std::size_t cell;
    int seed_offset;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (int s = 0; s < n_seeds; ++s) tasks.push_back({c, s});
  std::vector<std::vector<double>> accs(cells.size(), std::vector<double>(n_seeds, 0.0));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      const std::size_t strat = task.cell / 2;
      RunConfig cfg = base;
      cfg.blocks.strategy = cells[task.cell].strategy;
      cfg.blocks.adaptive = cells[task.cell].adaptive;
      cfg.train.seed = cfg.train.seed + static_cast<std::uint64_t>(task.seed_offset);
      Model<float> model(cfg);
      train_model(model, enc_train[strat], enc_val[strat], cfg.train);
      accs[task.cell][task.seed_offset] = evaluate(model, enc_test[strat]).accuracy;
    }
  };
  const int n_threads = std::min<int>(thread_cap(), static_cast<int>(tasks.size()));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (std::size_t c = 0; c < cells.size(); ++c) {
    RobustCell& cell = cells[c];
    cell.accuracies = accs[c];
    cell.acc_min = *std::min_element(accs[c].begin(), accs[c].end());
    cell.acc_max = *std::max_element(accs[c].begin(), accs[c].end());
    double sum = 0.0;
    for (double a : accs[c]) sum += a;
    cell.mean = sum / static_cast<double>(accs[c].size());
    cell.spread = cell.acc_max - cell.acc_min;
    if (!quiet)
      std::fprintf(stderr, "[robust] %-12s %s mean acc %.4f spread %.4f\n",
                   cell.strategy.c_str(), cell.adaptive ? "afe" : "fe ", cell.mean,
                   cell.spread);
  }
  return cells;
}

void write_grid_csv(const std::string& path, const std::vector<CellResult>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError(path + ": cannot open for writing");
  os << "cell,feature_extraction,attention,fusion,accuracy,params,ms_per_pair,accuracies\n";
  char buf[128];
  for (const auto& r : rows) {
    std::string accs;
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6f", r.accuracies[i]);
      if (i) accs += ';';
      accs += buf;
    }
    std::snprintf(buf, sizeof buf, "%.6f,%zu,%.6f", r.accuracy_median, r.params,
                  r.ms_per_pair);
    os << r.cell << ',' << r.feature_extraction << ',' << r.attention << ',' << r.fusion
       << ',' << buf << ',' << accs << '\n';
  }
}

void write_robust_csv(const std::string& path, const std::vector<RobustCell>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError(path + ": cannot open for writing");
  os << "strategy,adaptive,acc_mean,acc_min,acc_max,acc_spread,accuracies\n";
  char buf[160];
  for (const auto& r : rows) {
    std::string accs;
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6f", r.accuracies[i]);
      if (i) accs += ';';
      accs += buf;
    }
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", r.mean, r.acc_min, r.acc_max,
                  r.spread);
    os << r.strategy << ',' << (r.adaptive ? "true" : "false") << ',' << buf << ',' << accs
       << '\n';
  }
}

std::string format_grid_table(const std::vector<CellResult>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %-6s %-10s %-18s %-10s %-10s %s\n", "cell", "fe",
                "attention", "fusion", "accuracy", "params", "ms/pair");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %-6s %-10s %-18s %-10.4f %-10zu %.4f\n",
                  r.cell.c_str(), r.feature_extraction.c_str(), r.attention.c_str(),
                  r.fusion.c_str(), r.accuracy_median, r.params, r.ms_per_pair);
    out += buf;
  }
  return out;
}

std::string format_robust_table(const std::vector<RobustCell>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %-9s %-10s %-10s %-10s %s\n", "strategy", "weights",
                "mean", "min", "max", "spread");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %-9s %-10.4f %-10.4f %-10.4f %.4f\n",
                  r.strategy.c_str(), r.adaptive ? "adaptive" : "fixed", r.mean, r.acc_min,
                  r.acc_max, r.spread);
    out += buf;
  }
  return out;
}

}  // namespace trisim
