#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "trisim/ops.hpp"

using namespace trisim;

TEST_CASE("affine identity and hand-computed cases") {
  Matrix<double> eye(2, 2);
  eye.at(0, 0) = 1;
  eye.at(1, 1) = 1;
  CHECK(affine<double>({1, 2}, eye, {0, 0}) == std::vector<double>{1, 2});

  Matrix<double> w(1, 2);
  w.at(0, 0) = 2;
  w.at(0, 1) = 3;
  CHECK(affine<double>({1, 1}, w, {-5})[0] == doctest::Approx(0.0));
}

TEST_CASE("affine matches the scalar-loop oracle") {
  Rng rng(42);
  auto w = oracle::random_matrix(3, 4, rng);
  std::vector<double> x(4), b(3);
  oracle::fill_random(x, rng);
  oracle::fill_random(b, rng);
  auto got = affine(x, w, b);
  auto want = oracle::affine(x, w, b);
  for (int j = 0; j < 3; ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
}

TEST_CASE("affine rejects mismatched dims") {
  Matrix<double> w(2, 3);
  CHECK_THROWS_AS(affine<double>({1, 2}, w, {0, 0}), ShapeError);
}

TEST_CASE("softmax trivial slices") {
  Matrix<double> zeros(2, 2);
  auto s = softmax_axis(zeros, Axis::cols);
  for (double v : s.data) CHECK(v == doctest::Approx(0.5));

  Matrix<double> m(1, 2);
  m.at(0, 0) = std::log(2.0);
  m.at(0, 1) = std::log(1.0);
  auto r = softmax_axis(m, Axis::cols);
  CHECK(r.at(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(r.at(0, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax matches the naive exp/sum oracle") {
  Rng rng(7);
  auto m = oracle::random_matrix(5, 7, rng, -3.0, 3.0);
  auto s = softmax_axis(m, Axis::cols);
  for (int r = 0; r < 5; ++r) {
    std::vector<double> row(m.row(r), m.row(r) + 7);
    auto want = oracle::softmax_row(row);
    for (int c = 0; c < 7; ++c) CHECK(s.at(r, c) == doctest::Approx(want[c]).epsilon(1e-9));
  }
}

TEST_CASE("softmax slices sum to 1, including large magnitudes") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = oracle::random_matrix(4, 6, rng, -1e4, 1e4);
    for (Axis axis : {Axis::rows, Axis::cols}) {
      auto s = softmax_axis(m, axis);
      if (axis == Axis::cols) {
        for (int r = 0; r < s.rows; ++r) {
          double sum = 0;
          for (int c = 0; c < s.cols; ++c) {
            CHECK(s.at(r, c) >= 0.0);
            sum += s.at(r, c);
          }
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
      } else {
        for (int c = 0; c < s.cols; ++c) {
          double sum = 0;
          for (int r = 0; r < s.rows; ++r) sum += s.at(r, c);
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("relu and sigmoid basics") {
  CHECK(relu<double>({-1.0})[0] == 0.0);
  CHECK(relu<double>({3.0})[0] == 3.0);
  CHECK(sigmoid<double>({0.0})[0] == doctest::Approx(0.5));
  Rng rng(3);
  std::vector<double> x(32);
  oracle::fill_random(x, rng, -5.0, 5.0);
  auto sp = sigmoid(x);
  std::vector<double> nx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) nx[i] = -x[i];
  auto sn = sigmoid(nx);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(sn[i] == doctest::Approx(1.0 - sp[i]).epsilon(1e-12));
}

TEST_CASE("pooling on constants and tiny cases") {
  Tensor3<double> c(3, 4, 2, 2.5);
  auto avg = pool(c, true, true, PoolMode::avg);
  for (double v : avg.data) CHECK(v == doctest::Approx(2.5));

  Tensor3<double> t(1, 2, 1);
  t.at(0, 0, 0) = 1;
  t.at(0, 1, 0) = 3;
  CHECK(pool(t, false, true, PoolMode::avg).at(0, 0, 0) == doctest::Approx(2.0));
  CHECK(pool(t, false, true, PoolMode::max).at(0, 0, 0) == doctest::Approx(3.0));
}

TEST_CASE("pooling rejects an empty axis set") {
  Tensor3<double> t(2, 2, 2, 1.0);
  CHECK_THROWS_AS(pool(t, false, false, PoolMode::avg), ArgumentError);
}

TEST_CASE("average pooling matches the double-loop mean oracle") {
  Rng rng(19);
  auto t = oracle::random_tensor(3, 4, 5, rng);
  auto avg = pool(t, true, true, PoolMode::avg);
  for (int d = 0; d < 5; ++d)
    CHECK(avg.at(0, 0, d) ==
          doctest::Approx(oracle::mean_over(t, true, true, 0, 0, d)).epsilon(1e-12));
  auto avg_l = pool(t, false, true, PoolMode::avg);
  for (int i = 0; i < 3; ++i)
    for (int d = 0; d < 5; ++d)
      CHECK(avg_l.at(i, 0, d) ==
            doctest::Approx(oracle::mean_over(t, false, true, i, 0, d)).epsilon(1e-12));
}

TEST_CASE("conv2d_dilated: 1x1 identity kernel is the identity map") {
  Rng rng(5);
  auto t = oracle::random_tensor(4, 5, 3, rng);
  ConvKernel<double> k(1, 1, 3, 3);
  for (int d = 0; d < 3; ++d) k.w(0, 0, d, d) = 1.0;
  auto out = conv2d_dilated(t, k, 1);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(out.data[i] == t.data[i]);
}

TEST_CASE("conv2d_dilated: averaging kernel reproduces constants away from padding") {
  Tensor3<double> t(5, 5, 1, 3.0);
  ConvKernel<double> k(3, 3, 1, 1);
  for (auto& w : k.weights) w = 1.0 / 9.0;
  auto out = conv2d_dilated(t, k, 1);
  for (int i = 1; i < 4; ++i)
    for (int j = 1; j < 4; ++j) CHECK(out.at(i, j, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("conv2d_dilated matches the quadruple-loop oracle") {
  Rng rng(23);
  auto t = oracle::random_tensor(5, 6, 2, rng);
  for (int r : {1, 2}) {
    ConvKernel<double> k(3, 3, 2, 3);
    oracle::fill_random(k.weights, rng);
    oracle::fill_random(k.bias, rng);
    auto got = conv2d_dilated(t, k, r);
    auto want = oracle::conv2d(t, k, r);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d_dilated rejects dilation < 1") {
  Tensor3<double> t(2, 2, 1, 1.0);
  ConvKernel<double> k(1, 1, 1, 1);
  CHECK_THROWS_AS(conv2d_dilated(t, k, 0), ArgumentError);
}

TEST_CASE("conv1x1 basics and equivalence with a 1x1 conv2d") {
  Rng rng(31);
  auto t = oracle::random_tensor(3, 4, 2, rng);

  Matrix<double> eye(2, 2);
  eye.at(0, 0) = eye.at(1, 1) = 1.0;
  auto id = conv1x1(t, eye, {0.0, 0.0});
  CHECK(id.data == t.data);

  Matrix<double> sum(1, 2);
  sum.at(0, 0) = sum.at(0, 1) = 1.0;
  auto s = conv1x1(t, sum, {0.0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(s.at(i, j, 0) == doctest::Approx(t.at(i, j, 0) + t.at(i, j, 1)));

  Matrix<double> w = oracle::random_matrix(3, 2, rng);
  std::vector<double> b(3);
  oracle::fill_random(b, rng);
  ConvKernel<double> k(1, 1, 2, 3);
  for (int d = 0; d < 2; ++d)
    for (int dp = 0; dp < 3; ++dp) k.w(0, 0, d, dp) = w.at(dp, d);
  k.bias = b;
  auto a = conv1x1(t, w, b);
  auto c = conv2d_dilated(t, k, 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.data[i] == doctest::Approx(c.data[i]).epsilon(1e-12));
}

TEST_CASE("instance_norm trivial and oracle cases") {
  std::vector<double> gamma{1.0}, beta{0.0};
  Matrix<double> ones(4, 1, 1.0);
  auto z = instance_norm<double>(ones, gamma, beta, nullptr);
  for (double v : z.data) CHECK(v == doctest::Approx(0.0));

  Matrix<double> pm(2, 1);
  pm.at(0, 0) = -1;
  pm.at(1, 0) = 1;
  auto n = instance_norm<double>(pm, gamma, beta, nullptr);
  CHECK(n.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(n.at(1, 0) == doctest::Approx(1.0).epsilon(1e-4));

  Rng rng(13);
  auto g = oracle::random_matrix(8, 3, rng);
  std::vector<double> gm(3), bt(3);
  oracle::fill_random(gm, rng, 0.5, 1.5);
  oracle::fill_random(bt, rng);
  auto got = instance_norm(g, gm, bt, static_cast<InstanceNormCache<double>*>(nullptr));
  auto want = oracle::instance_norm(g, gm, bt);
  for (std::size_t i = 0; i < got.data.size(); ++i)
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
}

TEST_CASE("instance_norm rejects a single-row input") {
  Matrix<double> one(1, 2, 1.0);
  CHECK_THROWS_AS(instance_norm<double>(one, {1, 1}, {0, 0}, nullptr), ArgumentError);
}

TEST_CASE("ops are deterministic across repeated calls") {
  Rng rng(99);
  auto t = oracle::random_tensor(4, 4, 3, rng);
  ConvKernel<double> k(3, 3, 3, 2);
  oracle::fill_random(k.weights, rng);
  auto a = conv2d_dilated(t, k, 2);
  auto b = conv2d_dilated(t, k, 2);
  CHECK(a.data == b.data);
  auto s1 = softmax_axis(flatten(t), Axis::rows);
  auto s2 = softmax_axis(flatten(t), Axis::rows);
  CHECK(s1.data == s2.data);
}

TEST_CASE("matmul helpers agree with index-wise sums") {
  Rng rng(55);
  auto a = oracle::random_matrix(3, 4, rng);
  auto b = oracle::random_matrix(4, 5, rng);
  auto c = matmul_nn(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0;
      for (int kk = 0; kk < 4; ++kk) acc += a.at(i, kk) * b.at(kk, j);
      CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  auto d = matmul_nt(a, oracle::random_matrix(2, 4, rng));
  CHECK(d.rows == 3);
  CHECK(d.cols == 2);
  auto e = matmul_tn(a, oracle::random_matrix(3, 2, rng));
  CHECK(e.rows == 4);
  CHECK(e.cols == 2);
}
