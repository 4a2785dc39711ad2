#include <doctest.h>

#include <cmath>

#include "hinet/adam.hpp"
#include "hinet/ops.hpp"
#include "oracles.hpp"

using namespace hinet;

namespace {

Tensor param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = numel_of(shape);
  return Tensor::parameter(std::move(shape), oracle::random_vector(n, rng, lo, hi));
}

}  // namespace

TEST_CASE("matmul identity, annihilator and triple-loop agreement") {
  Rng rng(3);
  const Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor m(Shape{2, 3}, oracle::random_vector(6, rng));
  const Tensor p = matmul(eye, m);
  for (std::size_t i = 0; i < 6; ++i) CHECK(p[i] == m[i]);

  const Tensor z = matmul(Tensor(Shape{2, 3}), Tensor(Shape{3, 4}, oracle::random_vector(12, rng)));
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);

  const auto a = oracle::random_vector(9, rng), b = oracle::random_vector(9, rng);
  const Tensor c = matmul(Tensor(Shape{3, 3}, a), Tensor(Shape{3, 3}, b));
  const auto ref = oracle::matmul(a, b, 3, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), DimensionError);
}

TEST_CASE("matmul gradients are dC B^T and A^T dC") {
  Rng rng(4);
  Tensor a = param({3, 4}, rng), b = param({4, 2}, rng);
  const auto r = oracle::check_gradients([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b}, 20, rng);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("conv1d_causal trivial cases") {
  Rng rng(5);
  const Tensor kernel(Shape{3, 2, 2}, oracle::random_vector(12, rng));
  const Tensor bias(Shape{3}, {0.5, -1.0, 2.0});
  const Tensor out = conv1d_causal(Tensor(Shape{2, 7}), kernel, bias, 2);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t t = 0; t < 7; ++t) CHECK(out[o * 7 + t] == bias[o]);

  const auto xs = oracle::random_vector(10, rng);
  const Tensor ident = conv1d_causal(Tensor(Shape{2, 5}, xs), Tensor(Shape{2, 2, 1}, {1, 0, 0, 1}), Tensor(Shape{2}), 1);
  for (std::size_t i = 0; i < 10; ++i) CHECK(ident[i] == xs[i]);

  CHECK_THROWS_AS(conv1d_causal(Tensor(Shape{2, 5}), kernel, bias, 0), ParameterError);
}

TEST_CASE("conv1d_causal matches direct summation") {
  Rng rng(6);
  const auto x = oracle::random_vector(2 * 16, rng), k = oracle::random_vector(3 * 2 * 3, rng),
             b = oracle::random_vector(3, rng);
  const Tensor out = conv1d_causal(Tensor(Shape{2, 16}, x), Tensor(Shape{3, 2, 3}, k), Tensor(Shape{3}, b), 4);
  const auto ref = oracle::conv1d(x, 2, 16, k, 3, 3, b, 4);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out[i] - ref[i]) <= 1e-12);

  // Batched layout [C, N, T] equals per-sequence convolution.
  const auto x2 = oracle::random_vector(2 * 16, rng);
  std::vector<double> batched(2 * 2 * 16);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 16; ++t) {
      batched[(c * 2 + 0) * 16 + t] = x[c * 16 + t];
      batched[(c * 2 + 1) * 16 + t] = x2[c * 16 + t];
    }
  const Tensor ob = conv1d_causal(Tensor(Shape{2, 2, 16}, batched), Tensor(Shape{3, 2, 3}, k), Tensor(Shape{3}, b), 4);
  const auto ref2 = oracle::conv1d(x2, 2, 16, k, 3, 3, b, 4);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t t = 0; t < 16; ++t) {
      CHECK(std::abs(ob[(o * 2 + 0) * 16 + t] - ref[o * 16 + t]) <= 1e-12);
      CHECK(std::abs(ob[(o * 2 + 1) * 16 + t] - ref2[o * 16 + t]) <= 1e-12);
    }
}

TEST_CASE("conv1d_causal is exactly causal") {
  Rng rng(7);
  auto x = oracle::random_vector(3 * 20, rng);
  const Tensor k(Shape{2, 3, 3}, oracle::random_vector(18, rng));
  const Tensor b(Shape{2}, oracle::random_vector(2, rng));
  const Tensor before = conv1d_causal(Tensor(Shape{3, 20}, x), k, b, 2);
  for (std::size_t cut = 0; cut < 20; ++cut) {
    auto y = x;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = cut + 1; t < 20; ++t) y[c * 20 + t] = rng.uniform(-50.0, 50.0);
    const Tensor after = conv1d_causal(Tensor(Shape{3, 20}, y), k, b, 2);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t t = 0; t <= cut; ++t) CHECK(after[o * 20 + t] == before[o * 20 + t]);
  }
}

TEST_CASE("conv1d_causal gradients") {
  Rng rng(8);
  Tensor x = param({2, 3, 9}, rng), k = param({4, 2, 3}, rng), b = param({4}, rng);
  const auto r = oracle::check_gradients(
      [&] { return sum(mul(conv1d_causal(x, k, b, 2), conv1d_causal(x, k, b, 2))); }, {x, k, b}, 20, rng);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("relu, softmax and log_sum_exp") {
  const Tensor r = relu(Tensor(Shape{3}, {-1, 0, 2}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);

  const Tensor u = softmax(Tensor(Shape{5}, 3.25), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  const Tensor l = log_sum_exp(Tensor(Shape{2}, {1000, 1000}), 0);
  CHECK(l.item() == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));

  Rng rng(9);
  const auto v = oracle::random_vector(4 * 6, rng, -5.0, 5.0);
  auto shifted = v;
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t r2 = 0; r2 < 4; ++r2) shifted[r2 * 6 + c] += 17.5 * static_cast<double>(c);
  const Tensor s = softmax(Tensor(Shape{4, 6}, v), 0);
  const Tensor s2 = softmax(Tensor(Shape{4, 6}, shifted), 0);
  for (std::size_t c = 0; c < 6; ++c) {
    double total = 0.0;
    for (std::size_t r2 = 0; r2 < 4; ++r2) {
      total += s[r2 * 6 + c];
      CHECK(std::abs(s[r2 * 6 + c] - s2[r2 * 6 + c]) < 1e-9);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("relu subgradient at zero is zero") {
  Tensor x = Tensor::parameter({3}, {-1.0, 0.0, 2.0});
  backward(sum(relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("activation and reduction gradients") {
  Rng rng(10);
  Tensor x = param({3, 4, 5}, rng, -2.0, 2.0);
  Tensor w = param({3, 4, 5}, rng);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto r = oracle::check_gradients([&] { return sum(mul(softmax(x, axis), w)); }, {x, w}, 20, rng);
    CHECK(r.max_relative_error < 1e-6);
    r = oracle::check_gradients([&] { return sum(mul(log_sum_exp(x, axis), log_sum_exp(w, axis))); }, {x, w}, 20, rng);
    CHECK(r.max_relative_error < 1e-6);
  }
  auto r = oracle::check_gradients([&] { return mean(mul(relu(x), w)); }, {x, w}, 20, rng);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("mse_loss values and gradient") {
  Rng rng(11);
  const Tensor a(Shape{2, 3}, oracle::random_vector(6, rng));
  CHECK(mse_loss(a, a).item() == 0.0);
  CHECK(mse_loss(Tensor(Shape{7}), Tensor(Shape{7}, 1.0)).item() == 1.0);

  const auto x = oracle::random_vector(40, rng), y = oracle::random_vector(40, rng);
  double ref = 0.0;
  for (std::size_t i = 0; i < 40; ++i) ref += (x[i] - y[i]) * (x[i] - y[i]);
  ref /= 40.0;
  CHECK(std::abs(mse_loss(Tensor(Shape{40}, x), Tensor(Shape{40}, y)).item() - ref) < 1e-12);

  Tensor pred = Tensor::parameter({40}, y);
  backward(mse_loss(Tensor(Shape{40}, x), pred));
  for (std::size_t i = 0; i < 40; ++i) CHECK(std::abs(pred.grad()[i] - 2.0 * (y[i] - x[i]) / 40.0) < 1e-15);
  CHECK_THROWS_AS(mse_loss(Tensor(Shape{3}), Tensor(Shape{4})), DimensionError);
}

TEST_CASE("binary cross entropy analytic values") {
  CHECK(binary_cross_entropy(1.0, 1.0) <= 1.1e-7);
  CHECK(binary_cross_entropy(1.0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(binary_cross_entropy(0.0, 0.9) == doctest::Approx(-std::log(0.1)).epsilon(1e-12));
  CHECK(std::isfinite(binary_cross_entropy(1.0, 0.0)));
  CHECK(std::isfinite(binary_cross_entropy(0.0, 1.0)));

  Rng rng(12);
  Tensor p = param({6}, rng, 0.05, 0.95);
  const std::vector<double> y{1, 0, 1, 1, 0, 0}, w{1, 1, 0, 1, 0.5, 1};
  const auto r = oracle::check_gradients([&] { return binary_cross_entropy(p, y, w); }, {p}, 6, rng);
  CHECK(r.max_relative_error < 1e-6);
  p.zero_grad();
  backward(binary_cross_entropy(p, y, w));
  CHECK(p.grad()[2] == 0.0);
}

TEST_CASE("backward contracts") {
  Rng rng(13);
  Tensor w = param({5}, rng);
  const Tensor x(Shape{5}, oracle::random_vector(5, rng));
  backward(sum(mul(w, x)));
  for (std::size_t i = 0; i < 5; ++i) CHECK(w.grad()[i] == x[i]);

  Tensor unused = param({3}, rng);
  Tensor v = param({2}, rng);
  unused.zero_grad();
  backward(sum(v));
  for (double g : unused.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(backward(mul(v, v)), ContractError);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Tensor x = Tensor::parameter({1}, {0.7});
  // y = f(x) + g(x) with f = x^2 and g = 3x; dy/dx = 2x + 3.
  backward(sum(mul(x, x) + scale(x, 3.0)));
  CHECK(x.grad()[0] == doctest::Approx(2 * 0.7 + 3.0).epsilon(1e-15));

  Tensor y = Tensor::parameter({1}, {1.3});
  const Tensor h = mul(y, y);
  backward(sum(h + h));
  CHECK(y.grad()[0] == doctest::Approx(4 * 1.3).epsilon(1e-15));
}

TEST_CASE("graph visits each node once in topological order") {
  Tensor a = Tensor::parameter({2}, {1, 2});
  const Tensor b = mul(a, a);
  const Tensor c = add(b, b);
  const Tensor loss = sum(add(c, b));
  Graph g(loss);
  CHECK(g.size() == 5);
  const auto& order = g.order();
  auto pos = [&](const Tensor& t) {
    return std::find(order.begin(), order.end(), t.node().get()) - order.begin();
  };
  CHECK(pos(a) < pos(b));
  CHECK(pos(b) < pos(c));
  CHECK(pos(c) < pos(loss));
}

TEST_CASE("no-grad guard records nothing") {
  Tensor a = Tensor::parameter({2}, {1, 2});
  NoGradGuard guard;
  const Tensor b = mul(a, a);
  CHECK_FALSE(b.requires_grad());
}

TEST_CASE("adam first step, zero gradient and monotone descent") {
  Tensor w = Tensor::parameter({3}, {0.5, -0.25, 2.0});
  std::vector<Tensor> params{w};
  AdamState state(params);
  zero_grads(params);
  adam_step(params, state);
  CHECK(w[0] == 0.5);
  CHECK(w[1] == -0.25);
  CHECK(w[2] == 2.0);

  Tensor v = Tensor::parameter({3}, {0.0, 0.0, 0.0});
  std::vector<Tensor> pv{v};
  AdamState sv(pv);
  backward(sum(mul(v, Tensor(Shape{3}, {2.0, -3.0, 0.5}))));
  adam_step(pv, sv);
  CHECK(v[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(v[2] == doctest::Approx(-1e-3).epsilon(1e-6));

  // f(w) = w^2 from w = 1, against the recurrence evaluated by hand.
  Tensor q = Tensor::parameter({1}, {1.0});
  std::vector<Tensor> pq{q};
  AdamState sq(pq);
  double ref = 1.0, m = 0.0, s = 0.0, prev = 1.0;
  for (int step = 1; step <= 3; ++step) {
    zero_grads(pq);
    backward(sum(mul(q, q)));
    adam_step(pq, sq);
    const double g = 2.0 * ref;
    m = 0.9 * m + 0.1 * g;
    s = 0.999 * s + 0.001 * g * g;
    ref -= 1e-3 * (m / (1 - std::pow(0.9, step))) / (std::sqrt(s / (1 - std::pow(0.999, step))) + 1e-8);
    CHECK(q[0] == doctest::Approx(ref).epsilon(1e-14));
    CHECK(q[0] < prev);
    prev = q[0];
  }
  CHECK(sq.step == 3);

  std::vector<Tensor> other{Tensor::parameter({2}, {1, 2})};
  CHECK_THROWS_AS(adam_step(other, sq), DimensionError);
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7);
  }
}
