#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "trisim/grad_check.hpp"
#include "trisim/harness.hpp"
#include "trisim/ops.hpp"

using namespace trisim;

TEST_CASE("grad_check on x^2 at x=3") {
  DiffFunction f;
  f.value = [](const std::vector<double>& p) { return p[0] * p[0]; };
  f.gradient = [](const std::vector<double>& p) { return std::vector<double>{2.0 * p[0]}; };
  auto res = grad_check(f, {3.0});
  CHECK(res.finite);
  CHECK(res.max_rel_err < 1e-9);
}

TEST_CASE("grad_check flags a wrong gradient") {
  DiffFunction f;
  f.value = [](const std::vector<double>& p) { return p[0] * p[0]; };
  f.gradient = [](const std::vector<double>& p) { return std::vector<double>{-2.0 * p[0]}; };
  auto res = grad_check(f, {3.0});
  CHECK(res.max_rel_err > 0.5);
}

TEST_CASE("grad_check reports non-finite values") {
  DiffFunction f;
  f.value = [](const std::vector<double>& p) { return std::log(p[0]); };
  f.gradient = [](const std::vector<double>&) {
    return std::vector<double>{std::numeric_limits<double>::quiet_NaN()};
  };
  auto res = grad_check(f, {1.0});
  CHECK_FALSE(res.finite);
}

TEST_CASE("d/dx sigmoid(0) = 0.25") {
  std::vector<double> y = sigmoid<double>({0.0});
  std::vector<double> dx(1, 0.0);
  sigmoid_bwd(y, {1.0}, dx);
  CHECK(dx[0] == doctest::Approx(0.25));
}

TEST_CASE("gradient of sum(relu(x)) is the 0/1 mask") {
  std::vector<double> x{-2.0, 3.0, 0.0, 0.5};
  std::vector<double> dx(4, 0.0);
  relu_bwd(x, {1.0, 1.0, 1.0, 1.0}, dx);
  CHECK(dx == std::vector<double>{0.0, 1.0, 0.0, 1.0});
}

// Composed affine -> sigmoid in plain double precision (step 1e-5).
TEST_CASE("affine-sigmoid composition passes a double-precision check") {
  Rng rng(17);
  const int din = 3, dout = 2;
  Matrix<double> w(dout, din);
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
  std::vector<double> b{0.3, -0.2};
  DiffFunction f;
  f.value = [=](const std::vector<double>& p) {
    auto out = sigmoid(affine(p, w, b));
    double acc = 0;
    for (double v : out) acc += v;
    return acc;
  };
  f.gradient = [=](const std::vector<double>& p) {
    auto pre = affine(p, w, b);
    auto y = sigmoid(pre);
    std::vector<double> dpre(dout, 0.0);
    sigmoid_bwd(y, std::vector<double>(dout, 1.0), dpre);
    std::vector<double> dx(din, 0.0), db(dout, 0.0);
    Matrix<double> dw(dout, din);
    affine_bwd(p, w, dpre, &dx, dw, db);
    return dx;
  };
  auto res = grad_check(f, {0.4, -0.7, 0.9});
  CHECK(res.max_rel_err < 1e-6);
}

// Dilated convolution in plain double precision.
TEST_CASE("conv2d_dilated passes a double-precision check") {
  Rng rng(23);
  const int h = 3, l = 4, d = 2;
  ConvKernel<double> k(3, 3, d, 2);
  for (auto& v : k.weights) v = rng.uniform(-0.5, 0.5);
  for (auto& v : k.bias) v = rng.uniform(-0.2, 0.2);
  std::vector<double> c(static_cast<std::size_t>(h) * l * 2);
  for (auto& v : c) v = rng.uniform(0.25, 1.0);
  DiffFunction f;
  f.value = [=](const std::vector<double>& p) {
    Tensor3<double> t(h, l, d);
    t.data = p;
    auto out = conv2d_dilated(t, k, 2);
    double acc = 0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += c[i] * out.data[i];
    return acc;
  };
  f.gradient = [=](const std::vector<double>& p) {
    Tensor3<double> t(h, l, d);
    t.data = p;
    Tensor3<double> dout(h, l, 2), din(h, l, d);
    dout.data = c;
    std::vector<double> dw(k.weights.size(), 0.0), db(2, 0.0);
    conv2d_dilated_bwd(t, k, 2, dout, &din, dw, db);
    return din.data;
  };
  std::vector<double> point(static_cast<std::size_t>(h) * l * d);
  for (auto& v : point) v = rng.uniform(-1.0, 1.0);
  auto res = grad_check(f, point);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("every primitive passes over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto rows = run_primitive_gradchecks(seed);
    for (const auto& row : rows) {
      INFO("seed ", seed, " op ", row.name, " err ", row.result.max_rel_err);
      CHECK(row.pass);
    }
  }
}

TEST_CASE("composite modules and composed models pass at the default seed") {
  auto rows = run_composite_gradchecks(1);
  CHECK(rows.size() >= 16);
  for (const auto& row : rows) {
    INFO("op ", row.name, " err ", row.result.max_rel_err);
    CHECK(row.pass);
  }
}

TEST_CASE("an injected wrong-sign gradient is caught and named") {
  auto rows = run_primitive_gradchecks(1, 1e-6, "conv2d_r1");
  bool found = false;
  for (const auto& row : rows) {
    if (row.name == "conv2d_r1") {
      CHECK_FALSE(row.pass);
      found = true;
    } else {
      CHECK(row.pass);
    }
  }
  CHECK(found);
}
