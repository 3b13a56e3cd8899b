#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "trisim/attention.hpp"

using namespace trisim;

namespace {

SaParams<double> identity_projection(int d) {
  SaParams<double> p;
  p.proj_w = ParamTensor<double>("sa.proj.w", {d, d});
  p.proj_b = ParamTensor<double>("sa.proj.b", {d});
  for (int i = 0; i < d; ++i) p.proj_w.value[static_cast<std::size_t>(i) * d + i] = 1.0;
  return p;
}

}  // namespace

TEST_CASE("single-position attention: maps are [1] and branches swap contents") {
  Tensor3<double> x(1, 1, 3), y(1, 1, 3);
  x.data = {1.0, 2.0, 3.0};
  y.data = {-1.0, 0.5, 2.0};
  auto params = identity_projection(3);
  SaCache<double> cache;
  auto [xs, ys] = sa_forward(x, y, params, cache);
  CHECK(cache.attn_y.at(0, 0) == doctest::Approx(1.0));
  CHECK(cache.attn_x.at(0, 0) == doctest::Approx(1.0));
  // with an identity projection, X_sa carries Y's vector and vice versa
  for (int k = 0; k < 3; ++k) {
    CHECK(xs.at(0, 0, k) == doctest::Approx(y.at(0, 0, k)));
    CHECK(ys.at(0, 0, k) == doctest::Approx(x.at(0, 0, k)));
  }
}

TEST_CASE("identical constant tensors give uniform maps and mean-valued rows") {
  const double c = 0.8;
  Tensor3<double> x(2, 2, 3, c), y(2, 2, 3, c);
  auto params = identity_projection(3);
  SaCache<double> cache;
  auto [xs, ys] = sa_forward(x, y, params, cache);
  const int n = 4;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(cache.attn_y.at(i, j) == doctest::Approx(1.0 / n));
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(xs.data[i] == doctest::Approx(c));
}

TEST_CASE("sa_forward matches the double-loop oracle") {
  Rng rng(31);
  auto x = oracle::random_tensor(2, 3, 4, rng);
  auto y = oracle::random_tensor(2, 3, 4, rng);
  auto params = identity_projection(4);
  SaCache<double> cache;
  auto [xs, ys] = sa_forward(x, y, params, cache);
  auto want = oracle::sa_attention(x, y);
  auto maps = sa_maps(cache);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      CHECK(maps.m_y.at(j, i) == doctest::Approx(want.m_y.at(j, i)).epsilon(1e-9));
      CHECK(maps.m_x.at(i, j) == doctest::Approx(want.m_x.at(i, j)).epsilon(1e-9));
    }
  // identity projection leaves the attention output unchanged
  auto xs_flat = flatten(xs);
  auto ys_flat = flatten(ys);
  for (int i = 0; i < 6; ++i)
    for (int d = 0; d < 4; ++d) {
      CHECK(xs_flat.at(i, d) == doctest::Approx(want.x_sa.at(i, d)).epsilon(1e-9));
      CHECK(ys_flat.at(i, d) == doctest::Approx(want.y_sa.at(i, d)).epsilon(1e-9));
    }
}

TEST_CASE("attention maps are stochastic in the right index") {
  Rng rng(37);
  auto x = oracle::random_tensor(2, 4, 3, rng);
  auto y = oracle::random_tensor(2, 4, 3, rng);
  auto params = identity_projection(3);
  SaCache<double> cache;
  sa_forward(x, y, params, cache);
  auto maps = sa_maps(cache);
  const int n = 8;
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (int j = 0; j < n; ++j) sum += maps.m_y.at(j, i);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (int j = 0; j < n; ++j) {
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += maps.m_x.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("X_sa is invariant to permuting the partner's flattened positions") {
  Rng rng(41);
  auto x = oracle::random_tensor(2, 3, 4, rng);
  auto y = oracle::random_tensor(2, 3, 4, rng);
  // permute Y's flattened rows (jointly permutes Q and V^Y)
  const int n = 6;
  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Tensor3<double> yp(2, 3, 4);
  auto yf = flatten(y);
  Matrix<double> ypf(n, 4);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 4; ++d) ypf.at(i, d) = yf.at(perm[i], d);
  yp = unflatten(ypf, 2, 3);
  auto params = identity_projection(4);
  SaCache<double> c1, c2;
  auto [xs1, ys1] = sa_forward(x, y, params, c1);
  auto [xs2, ys2] = sa_forward(x, yp, params, c2);
  for (std::size_t i = 0; i < xs1.size(); ++i)
    CHECK(xs2.data[i] == doctest::Approx(xs1.data[i]).epsilon(1e-6));
}

TEST_CASE("swapping the input pair swaps the outputs exactly") {
  Rng rng(43);
  auto x = oracle::random_tensor(2, 3, 4, rng);
  auto y = oracle::random_tensor(2, 3, 4, rng);
  Rng ir(7);
  SaParams<double> params;
  params.init(4, 2, false, ir);
  SaCache<double> cf, cr;
  auto [xs, ys] = sa_forward(x, y, params, cf);
  auto [ys2, xs2] = sa_forward(y, x, params, cr);
  CHECK(xs.data == xs2.data);
  CHECK(ys.data == ys2.data);
}

TEST_CASE("sa rejects mismatched input shapes") {
  Tensor3<double> x(2, 3, 4), y(2, 3, 5);
  auto params = identity_projection(4);
  SaCache<double> cache;
  CHECK_THROWS_AS(sa_forward(x, y, params, cache), ArgumentError);
}

TEST_CASE("fa1: constant input with zero feedforward gates to 0.5") {
  FaParams<double> params;
  Rng rng(3);
  params.init(FaVariant::fa1, 4, 2, 3, rng);
  std::fill(params.w1.value.begin(), params.w1.value.end(), 0.0);
  std::fill(params.w2.value.begin(), params.w2.value.end(), 0.0);
  Tensor3<double> x(2, 3, 4, 0.9);
  FaCache<double> cache;
  auto out = fa_forward(x, params, cache);
  CHECK(out.d == 3);
  for (double v : out.data) CHECK(v == doctest::Approx(0.5));
  // the squeeze picked up the constant
  for (int d = 0; d < 4; ++d) CHECK(cache.z[d] == doctest::Approx(0.9));
}

TEST_CASE("fa1: output is a broadcast gate and z matches the mean oracle") {
  Rng rng(7);
  FaParams<double> params;
  params.init(FaVariant::fa1, 5, 2, 3, rng);
  auto x = oracle::random_tensor(3, 4, 5, rng);
  FaCache<double> cache;
  auto out = fa_forward(x, params, cache);
  for (int d = 0; d < 5; ++d)
    CHECK(cache.z[d] ==
          doctest::Approx(oracle::mean_over(x, true, true, 0, 0, d)).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 3; ++k) {
        CHECK(out.at(i, j, k) == out.at(0, 0, k));
        CHECK(out.at(i, j, k) > 0.0);
        CHECK(out.at(i, j, k) < 1.0);
      }
}

TEST_CASE("fa2: spike input separates avg and max descriptors") {
  Rng rng(11);
  FaParams<double> params;
  params.init(FaVariant::fa2, 2, 1, 2, rng);
  Tensor3<double> x(2, 5, 2);
  x.at(1, 2, 0) = 10.0;  // a single spike in channel 0
  FaCache<double> cache;
  fa_forward(x, params, cache);
  CHECK(cache.z[0] == doctest::Approx(1.0));       // avg dilutes by 1/(H*L)
  CHECK(cache.z[2] == doctest::Approx(10.0));      // max picks the spike
  CHECK(cache.z[1] == doctest::Approx(0.0));
  CHECK(cache.z[3] == doctest::Approx(0.0));
}

TEST_CASE("fa1/fa2 gates are invariant to spatial permutations") {
  Rng rng(13);
  for (FaVariant v : {FaVariant::fa1, FaVariant::fa2}) {
    FaParams<double> params;
    params.init(v, 3, 1, 2, rng);
    auto x = oracle::random_tensor(2, 3, 3, rng);
    // swap two (h,l) positions
    Tensor3<double> xp = x;
    for (int d = 0; d < 3; ++d) std::swap(xp.at(0, 1, d), xp.at(1, 2, d));
    FaCache<double> c1, c2;
    auto o1 = fa_forward(x, params, c1);
    auto o2 = fa_forward(xp, params, c2);
    for (std::size_t i = 0; i < o1.size(); ++i)
      CHECK(o2.data[i] == doctest::Approx(o1.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("fa3 with H=L=1 matches a hand composition") {
  Rng rng(17);
  FaParams<double> params;
  params.init(FaVariant::fa3, 3, 1, 2, rng);
  auto x = oracle::random_tensor(1, 1, 3, rng);
  FaCache<double> cache;
  auto out = fa_forward(x, params, cache);
  // z^h = z^l = the single vector; g has 2 rows
  Matrix<double> phw(2, 3), plw(2, 3);
  phw.data = params.phi_h_w.value;
  plw.data = params.phi_l_w.value;
  auto want = oracle::fa3(x, params.gamma.value, params.beta.value, phw,
                          params.phi_h_b.value, plw, params.phi_l_b.value);
  REQUIRE(out.size() == want.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
}

TEST_CASE("fa3 matches the step-by-step oracle on random input") {
  Rng rng(19);
  FaParams<double> params;
  params.init(FaVariant::fa3, 5, 1, 3, rng);
  auto x = oracle::random_tensor(3, 4, 5, rng);
  FaCache<double> cache;
  auto out = fa_forward(x, params, cache);
  Matrix<double> phw(3, 5), plw(3, 5);
  phw.data = params.phi_h_w.value;
  plw.data = params.phi_l_w.value;
  auto want = oracle::fa3(x, params.gamma.value, params.beta.value, phw,
                          params.phi_h_b.value, plw, params.phi_l_b.value);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
}

TEST_CASE("fa3 is equivariant under position permutations") {
  Rng rng(23);
  FaParams<double> params;
  params.init(FaVariant::fa3, 4, 1, 2, rng);
  auto x = oracle::random_tensor(2, 4, 4, rng);
  const int perm[4] = {2, 0, 3, 1};
  Tensor3<double> xp(2, 4, 4);
  for (int h = 0; h < 2; ++h)
    for (int j = 0; j < 4; ++j)
      for (int d = 0; d < 4; ++d) xp.at(h, j, d) = x.at(h, perm[j], d);
  FaCache<double> c1, c2;
  auto o1 = fa_forward(x, params, c1);
  auto o2 = fa_forward(xp, params, c2);
  // output permutes along l; the block profile is untouched
  for (int h = 0; h < 2; ++h)
    for (int j = 0; j < 4; ++j)
      for (int d = 0; d < 2; ++d)
        CHECK(o2.at(h, j, d) == doctest::Approx(o1.at(h, perm[j], d)).epsilon(1e-9));
  for (std::size_t i = 0; i < c1.p.data.size(); ++i)
    CHECK(c2.p.data[i] == doctest::Approx(c1.p.data[i]).epsilon(1e-9));
}

TEST_CASE("combine is the elementwise product with identity/annihilator cases") {
  Rng rng(29);
  auto sa_out = oracle::random_tensor(2, 3, 4, rng);
  Tensor3<double> ones(2, 3, 4, 1.0);
  auto kept = combine(sa_out, ones);
  CHECK(kept.data == sa_out.data);

  Tensor3<double> zeros(2, 3, 4);
  auto fa_out = oracle::random_tensor(2, 3, 4, rng);
  auto killed = combine(zeros, fa_out);
  for (double v : killed.data) CHECK(v == 0.0);

  auto a = oracle::random_tensor(2, 3, 4, rng);
  auto b = oracle::random_tensor(2, 3, 4, rng);
  auto ab = combine(a, b);
  auto ba = combine(b, a);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    CHECK(ab.data[i] == doctest::Approx(a.data[i] * b.data[i]).epsilon(1e-12));
    CHECK(ab.data[i] == doctest::Approx(ba.data[i]).epsilon(1e-12));
  }

  Tensor3<double> wrong(2, 3, 5, 1.0);
  CHECK_THROWS_AS(combine(sa_out, wrong), ArgumentError);
}
