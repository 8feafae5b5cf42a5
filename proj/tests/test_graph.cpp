#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "fsga/graph.hpp"
#include "fsga/rng.hpp"

using namespace fsga;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float scale = 1.0f) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal_f();
  return t;
}

// Central-difference check of d(scalar op output)/d(input) against the
// tape's gradient. The realized step (float-rounded) is used as the divisor.
void grad_check(const std::function<Value(Graph&, Value)>& build, Tensor input,
                double tol = 2e-2, float step = 1e-2f) {
  Graph g;
  Value x = g.param(&input, true);
  Value loss = build(g, x);
  REQUIRE(g.val(loss).numel() == 1);
  g.backward(loss);
  const Tensor* grad = g.param_grad(&input);
  REQUIRE(grad != nullptr);

  auto eval = [&](const Tensor& t) {
    Graph h;
    Tensor copy = t;
    Value v = h.param(&copy, false);
    return static_cast<double>(h.val(build(h, v))[0]);
  };

  for (int64_t i = 0; i < input.numel(); ++i) {
    Tensor plus = input, minus = input;
    plus[i] += step;
    minus[i] -= step;
    const double h = static_cast<double>(plus[i]) - static_cast<double>(minus[i]);
    const double fd = (eval(plus) - eval(minus)) / h;
    const double an = (*grad)[i];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
    CHECK(std::abs(fd - an) / denom < tol);
  }
}

}  // namespace

TEST_CASE("graph: elementwise forward values") {
  Graph g;
  Value a = g.input(Tensor::from({3}, {1.0f, -2.0f, 3.0f}));
  Value b = g.input(Tensor::from({3}, {0.5f, 4.0f, -1.0f}));
  const Tensor sum = g.val(g.add(a, b));
  CHECK(sum[0] == doctest::Approx(1.5));
  CHECK(sum[1] == doctest::Approx(2.0));
  const Tensor prod = g.val(g.mul(a, b));
  CHECK(prod[2] == doctest::Approx(-3.0));
  const Tensor sp = g.val(g.softplus(g.input(Tensor::from({1}, {0.0f}))));
  CHECK(sp[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("graph: conv2d matches direct convolution on a hand case") {
  // 1x1x3x3 input, 1x1x2x2 kernel, stride 1, pad 0.
  Graph g;
  Value x = g.input(Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Value w = g.input(Tensor::from({1, 1, 2, 2}, {1, 0, 0, -1}));
  Value b = g.input(Tensor::from({1}, {0.5f}));
  const Tensor out = g.val(g.conv2d(x, w, b, 1, 0));
  REQUIRE(out.shape() == std::vector<int>({1, 1, 2, 2}));
  CHECK(out[0] == doctest::Approx(1 - 5 + 0.5));
  CHECK(out[1] == doctest::Approx(2 - 6 + 0.5));
  CHECK(out[2] == doctest::Approx(4 - 8 + 0.5));
  CHECK(out[3] == doctest::Approx(5 - 9 + 0.5));
}

TEST_CASE("graph: upsample2 duplicates pixels and sums gradients") {
  Graph g;
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Value v = g.param(&x, true);
  Value up = g.upsample2(v);
  const Tensor& out = g.val(up);
  REQUIRE(out.shape() == std::vector<int>({1, 1, 4, 4}));
  CHECK(out[0] == 1);
  CHECK(out[1] == 1);
  CHECK(out[2] == 2);   // (0,2) -> source (0,1)
  CHECK(out[5] == 1);   // (1,1) -> source (0,0)
  CHECK(out[8] == 3);   // (2,0) -> source (1,0)
  CHECK(out[10] == 4);  // (2,2) -> source (1,1)
  CHECK(out[15] == 4);
  Value loss = g.mean_all(up);
  g.backward(loss);
  const Tensor* grad = g.param_grad(&x);
  REQUIRE(grad != nullptr);
  for (int64_t i = 0; i < 4; ++i) CHECK((*grad)[i] == doctest::Approx(4.0 / 16.0));
}

TEST_CASE("graph: gradients match finite differences per op") {
  Rng rng(11);
  SUBCASE("dense") {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    grad_check(
        [&](Graph& g, Value v) { return g.mean_all(g.dense(v, g.input(w), g.input(b))); }, x);
  }
  SUBCASE("conv2d + leaky_relu") {
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng, 0.1f);
    grad_check(
        [&](Graph& g, Value v) {
          return g.mean_all(g.leaky_relu(g.conv2d(v, g.input(w), g.input(b), 2, 1), 0.2f));
        },
        x);
  }
  SUBCASE("tanh/softplus/mul chain") {
    Tensor x = random_tensor({6}, rng);
    grad_check(
        [&](Graph& g, Value v) {
          Value t = g.tanh_act(v);
          return g.mean_all(g.mul(g.softplus(v), t));
        },
        x);
  }
  SUBCASE("upsample + mean_per_sample") {
    Tensor x = random_tensor({2, 2, 3, 3}, rng);
    grad_check(
        [&](Graph& g, Value v) {
          return g.mean_all(g.mean_per_sample(g.upsample2(v)));
        },
        x);
  }
  SUBCASE("matmul + reshape") {
    Tensor x = random_tensor({2, 6}, rng);
    Tensor w2 = random_tensor({3, 2}, rng);
    grad_check(
        [&](Graph& g, Value v) {
          Value r = g.reshape(v, {4, 3});
          return g.mean_all(g.matmul(r, g.input(w2)));
        },
        x);
  }
}

TEST_CASE("graph: conv2d weight and bias gradients match finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({2, 2, 4, 4}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  grad_check(
      [&](Graph& g, Value wv) {
        return g.mean_all(g.conv2d(g.input(x), wv, g.input(Tensor({3})), 1, 1));
      },
      w);
}

TEST_CASE("graph: params registered twice share one node and accumulate") {
  Tensor p = Tensor::from({2}, {1.0f, 2.0f});
  Graph g;
  Value a = g.param(&p, true);
  Value b = g.param(&p, true);
  CHECK(a.idx == b.idx);
  Value loss = g.mean_all(g.add(g.mul(a, a), b));
  g.backward(loss);
  const Tensor* grad = g.param_grad(&p);
  REQUIRE(grad != nullptr);
  // d/dp of mean(p*p + p) = (2p + 1) / 2
  CHECK((*grad)[0] == doctest::Approx((2 * 1.0 + 1) / 2));
  CHECK((*grad)[1] == doctest::Approx((2 * 2.0 + 1) / 2));
}

TEST_CASE("graph: non-trainable params receive no gradient") {
  Tensor p = Tensor::from({2}, {1.0f, 2.0f});
  Graph g;
  Value v = g.param(&p, false);
  Value loss = g.mean_all(g.mul(v, v));
  g.backward(loss);
  CHECK(g.param_grad(&p) == nullptr);
}
