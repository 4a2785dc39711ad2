#include <doctest.h>

#include <cmath>

#include "hinet/crf.hpp"
#include "hinet/layers.hpp"
#include "oracles.hpp"

using namespace hinet;

namespace {

void fill(Tensor t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// w[o, ...] = g[o] v[o, ...] / ||v[o, ...]||
std::vector<double> normalised_kernel(const CausalConv& conv) {
  const auto v = vec(conv.direction);
  const std::size_t rows = conv.direction.dim(0), width = v.size() / rows;
  std::vector<double> w(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < width; ++i) sq += v[r * width + i] * v[r * width + i];
    for (std::size_t i = 0; i < width; ++i) w[r * width + i] = conv.gain[r] * v[r * width + i] / std::sqrt(sq);
  }
  return w;
}

std::vector<double> block_oracle(const TcnBlock& b, const std::vector<double>& x, std::size_t steps) {
  const std::size_t cin = b.in_channels(), f = b.filters(), k = b.kernel_size();
  auto h = oracle::conv1d(x, cin, steps, normalised_kernel(b.conv1), f, k, vec(b.conv1.bias), b.dilation());
  for (auto& v : h) v = std::max(v, 0.0);
  auto o = oracle::conv1d(h, f, steps, normalised_kernel(b.conv2), f, k, vec(b.conv2.bias), b.dilation());
  for (auto& v : o) v = std::max(v, 0.0);
  std::vector<double> res = x;
  if (b.has_projection) {
    res = oracle::matmul(vec(b.projection.weight), x, f, cin, steps);
    for (std::size_t c = 0; c < f; ++c)
      for (std::size_t t = 0; t < steps; ++t) res[c * steps + t] += b.projection.bias[c];
  }
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += res[i];
  return o;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), oracle::random_vector(n, rng, lo, hi));
}

}  // namespace

TEST_CASE("memory encoding trivial cases") {
  Rng rng(1);
  const Tensor x = random_tensor({4, 6}, rng);
  MemoryBank one = MemoryBank::create(1, 4, rng);
  const auto enc = memory_encode(one, x);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 6; ++t) CHECK(std::abs(enc.output[c * 6 + t] - one.basis[c]) < 1e-15);

  MemoryBank same = MemoryBank::create(5, 4, rng);
  const std::vector<double> c{0.3, -1.2, 2.0, 0.7};
  auto b = same.basis.mutable_data();
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t v = 0; v < 4; ++v) b[j * 4 + v] = c[v];
  const auto enc2 = memory_encode(same, x);
  for (std::size_t v = 0; v < 4; ++v)
    for (std::size_t t = 0; t < 6; ++t) CHECK(std::abs(enc2.output[v * 6 + t] - c[v]) < 1e-12);

  MemoryBank two = MemoryBank::create(2, 2, rng);
  auto bb = two.basis.mutable_data();
  bb[0] = 1; bb[1] = 0; bb[2] = 0; bb[3] = 1;
  const auto enc3 = memory_encode(two, Tensor(Shape{2, 1}, {10.0, 0.0}));
  const double sigma = 1.0 / (1.0 + std::exp(-10.0));
  CHECK(std::abs(enc3.attention[0] - sigma) < 1e-15);
  CHECK(std::abs(enc3.attention[1] - (1.0 - sigma)) < 1e-15);
  CHECK(std::abs(enc3.output[0] - sigma) < 1e-15);
  CHECK(std::abs(enc3.output[1] - (1.0 - sigma)) < 1e-15);

  CHECK_THROWS_AS(memory_encode(two, Tensor(Shape{3, 4})), DimensionError);
}

TEST_CASE("memory encoding output is alpha^T B") {
  Rng rng(2);
  MemoryBank bank = MemoryBank::create(7, 5, rng, 0.5);
  const Tensor x = random_tensor({5, 3, 4}, rng, -2.0, 2.0);
  const auto enc = memory_encode(bank, x);
  CHECK(enc.output.shape() == x.shape());
  CHECK(enc.attention.shape() == Shape{7, 3, 4});
  for (std::size_t p = 0; p < 12; ++p) {
    double total = 0.0;
    for (std::size_t j = 0; j < 7; ++j) total += enc.attention[j * 12 + p];
    CHECK(std::abs(total - 1.0) < 1e-12);
    for (std::size_t v = 0; v < 5; ++v) {
      double a = 0.0;
      for (std::size_t j = 0; j < 7; ++j) a += enc.attention[j * 12 + p] * bank.basis[j * 5 + v];
      CHECK(std::abs(enc.output[v * 12 + p] - a) < 1e-12);
    }
  }
}

TEST_CASE("tcn block passthrough with zero weights") {
  Rng rng(3);
  TcnBlock b = TcnBlock::create(4, 4, 3, 2, 0.0, rng);
  CHECK_FALSE(b.has_projection);
  for (auto* c : {&b.conv1, &b.conv2}) {
    fill(c->direction, 0.0);
    fill(c->gain, 0.0);
    fill(c->bias, 0.0);
  }
  const Tensor x = random_tensor({4, 9}, rng);
  const Tensor y = tcn_block_forward(b, x, Mode::eval);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  CHECK(TcnBlock::create(3, 4, 3, 2, 0.0, rng).has_projection);
}

TEST_CASE("tcn block matches a composition of convolution oracles") {
  Rng rng(4);
  for (std::size_t cin : {3u, 5u}) {
    TcnBlock b = TcnBlock::create(cin, 5, 3, 4, 0.0, rng);
    fill(b.conv1.bias, 0.1);
    fill(b.conv2.bias, -0.05);
    const auto x = oracle::random_vector(cin * 20, rng);
    const Tensor y = tcn_block_forward(b, Tensor(Shape{cin, 20}, x), Mode::eval);
    const auto ref = block_oracle(b, x, 20);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("tcn block is causal and eval mode is deterministic") {
  Rng rng(5);
  TcnBlock b = TcnBlock::create(3, 4, 3, 2, 0.2, rng);
  auto x = oracle::random_vector(3 * 12, rng);
  const Tensor y0 = tcn_block_forward(b, Tensor(Shape{3, 12}, x), Mode::eval);
  const Tensor y1 = tcn_block_forward(b, Tensor(Shape{3, 12}, x), Mode::eval);
  for (std::size_t i = 0; i < y0.numel(); ++i) CHECK(y0[i] == y1[i]);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 7; t < 12; ++t) x[c * 12 + t] += 3.0;
  const Tensor y2 = tcn_block_forward(b, Tensor(Shape{3, 12}, x), Mode::eval);
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t t = 0; t < 7; ++t) CHECK(y2[f * 12 + t] == y0[f * 12 + t]);
  CHECK_THROWS_AS(tcn_block_forward(b, Tensor(Shape{3, 12}, x), Mode::train), ContractError);
}

TEST_CASE("tcn stack validation and receptive field") {
  Rng rng(6);
  const TcnStack s = TcnStack::create(3, 4, 3, {2, 4, 8}, 0.0, rng);
  CHECK(s.receptive_field() == 57);
  CHECK_THROWS_AS(TcnStack::create(3, 4, 3, {2, 3}, 0.0, rng), ParameterError);
  CHECK_THROWS_AS(TcnStack::create(3, 4, 3, {4, 2}, 0.0, rng), ParameterError);

  const Tensor one = random_tensor({3, 1}, rng);
  const auto e1 = tcn_encode(s, one, Mode::eval);
  for (std::size_t f = 0; f < 4; ++f) CHECK(e1.last[f] == e1.hidden[f]);

  // Perturbations older than the receptive field leave the last step alone;
  // a perturbation just inside it does not.
  const std::size_t T = 70;
  auto x = oracle::random_vector(3 * T, rng);
  const auto base = tcn_encode(s, Tensor(Shape{3, T}, x), Mode::eval);
  auto far = x;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t + 57 < T; ++t) far[c * T + t] += 5.0;
  const auto e_far = tcn_encode(s, Tensor(Shape{3, T}, far), Mode::eval);
  for (std::size_t f = 0; f < 4; ++f) CHECK(e_far.last[f] == base.last[f]);
  // ReLU can silence the single longest path for one input, so try several.
  bool changed = false;
  for (int trial = 0; trial < 20 && !changed; ++trial) {
    const auto y = oracle::random_vector(3 * T, rng);
    const auto ref = tcn_encode(s, Tensor(Shape{3, T}, y), Mode::eval);
    auto near = y;
    for (std::size_t c = 0; c < 3; ++c) near[c * T + T - 57] += trial % 2 ? 5.0 : -5.0;
    const auto e_near = tcn_encode(s, Tensor(Shape{3, T}, near), Mode::eval);
    for (std::size_t f = 0; f < 4; ++f) changed = changed || e_near.last[f] != ref.last[f];
  }
  CHECK(changed);

  // Prefix stability.
  const auto prefix = tcn_encode(s, Tensor(Shape{3, 30}, [&] {
                                   std::vector<double> p(3 * 30);
                                   for (std::size_t c = 0; c < 3; ++c)
                                     for (std::size_t t = 0; t < 30; ++t) p[c * 30 + t] = x[c * T + t];
                                   return p;
                                 }()),
                                 Mode::eval);
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t t = 0; t < 30; ++t) CHECK(std::abs(prefix.hidden[f * 30 + t] - base.hidden[f * T + t]) <= 1e-12);
}

TEST_CASE("layer gradients match finite differences") {
  Rng rng(7);
  MemoryBank bank = MemoryBank::create(4, 3, rng, 0.5);
  TcnStack stack = TcnStack::create(3, 4, 3, {1, 2}, 0.0, rng);
  FcBlock fc = FcBlock::create(4, 5, 2, rng);
  Tensor x = Tensor::parameter({3, 2, 6}, oracle::random_vector(36, rng));
  ParameterList params;
  bank.collect("m", params);
  stack.collect("s", params);
  fc.collect("f", params);
  std::vector<Tensor> inputs{x};
  for (auto& p : params) inputs.push_back(p.tensor);
  const Tensor w(Shape{2, 2}, oracle::random_vector(4, rng));
  auto loss = [&] {
    const Tensor a = memory_encode(bank, x).output;
    const Tensor z = tcn_encode(stack, a, Mode::eval).last;
    return sum(mul(fc.forward(z), w));
  };
  const auto r = oracle::check_gradients(loss, inputs, 20, rng);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("crf trivial partition and likelihood values") {
  const CrfParams crf = CrfParams::create(2);
  CHECK(crf_log_partition(Tensor(Shape{2, 2}), crf).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  const Tensor single(Shape{2, 1}, {0.3, -1.1});
  CHECK(crf_log_partition(single, crf).item() ==
        doctest::Approx(std::log(std::exp(0.3) + std::exp(-1.1))).epsilon(1e-14));
  for (const std::vector<int>& u : {std::vector<int>{0, 0}, {0, 1}, {1, 0}, {1, 1}})
    CHECK(crf_nll(Tensor(Shape{2, 2}), u, crf).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK_THROWS_AS(crf_log_partition(Tensor(Shape{2, 0}), crf), ContractError);
  CHECK_THROWS_AS(crf_nll(Tensor(Shape{2, 2}), std::vector<int>{0, 2}, crf), ParameterError);
}

TEST_CASE("crf matches exhaustive enumeration") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t W = 1 + rng.below(8);
    CrfParams crf = CrfParams::create(2);
    const auto tr = oracle::random_vector(4, rng, -2.0, 2.0), st = oracle::random_vector(2, rng, -2.0, 2.0);
    std::copy(tr.begin(), tr.end(), crf.transitions.mutable_data().begin());
    std::copy(st.begin(), st.end(), crf.start.mutable_data().begin());
    const auto em = oracle::random_vector(2 * W, rng, -3.0, 3.0);
    const Tensor e(Shape{2, W}, em);
    const double logz = oracle::crf_log_partition(em, 2, W, tr, st);
    CHECK(std::abs(crf_log_partition(e, crf).item() - logz) < 1e-8);

    std::vector<int> u(W);
    for (auto& v : u) v = static_cast<int>(rng.below(2));
    const double nll = crf_nll(e, u, crf).item();
    CHECK(nll >= 0.0);
    CHECK(std::abs(nll - (logz - oracle::crf_score(em, 2, W, tr, st, u))) < 1e-8);

    const auto path = crf_viterbi(e, crf);
    CHECK(std::abs(oracle::crf_score(em, 2, W, tr, st, path) - oracle::crf_best_score(em, 2, W, tr, st)) < 1e-12);
    for (int alt = 0; alt < 100; ++alt) {
      for (auto& v : u) v = static_cast<int>(rng.below(2));
      CHECK(crf_sequence_score(em, W, crf, path) >= crf_sequence_score(em, W, crf, u));
    }

    // Shifting every emission at one step by c shifts log Z by c.
    auto shifted = em;
    const std::size_t k = rng.below(W);
    shifted[k] += 4.5;
    shifted[W + k] += 4.5;
    CHECK(std::abs(crf_log_partition(Tensor(Shape{2, W}, shifted), crf).item() - (logz + 4.5)) < 1e-9);
  }
}

TEST_CASE("viterbi degenerate cases and batch decoding") {
  const CrfParams crf = CrfParams::create(2);
  std::vector<double> em(2 * 6, 0.0);
  for (std::size_t k = 0; k < 6; ++k) em[6 + k] = 5.0;
  for (int v : crf_viterbi(Tensor(Shape{2, 6}, em), crf)) CHECK(v == 1);
  for (int v : crf_viterbi(Tensor(Shape{2, 6}), crf)) CHECK(v == 0);

  Rng rng(9);
  const auto a = oracle::random_vector(2 * 5, rng), b = oracle::random_vector(2 * 5, rng);
  std::vector<double> batched(2 * 2 * 5);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 5; ++k) {
      batched[(s * 2 + 0) * 5 + k] = a[s * 5 + k];
      batched[(s * 2 + 1) * 5 + k] = b[s * 5 + k];
    }
  const auto paths = crf_viterbi_batch(Tensor(Shape{2, 2, 5}, batched), crf);
  CHECK(paths[0] == crf_viterbi(Tensor(Shape{2, 5}, a), crf));
  CHECK(paths[1] == crf_viterbi(Tensor(Shape{2, 5}, b), crf));
}

TEST_CASE("crf gradients match finite differences") {
  Rng rng(10);
  CrfParams crf = CrfParams::create(2);
  for (auto& v : crf.transitions.mutable_data()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : crf.start.mutable_data()) v = rng.uniform(-1.0, 1.0);
  Tensor em = Tensor::parameter({2, 3, 6}, oracle::random_vector(36, rng, -2.0, 2.0));
  std::vector<int> u(18);
  for (auto& v : u) v = static_cast<int>(rng.below(2));
  const std::vector<double> w{1.0, 0.0, 0.5};
  const auto r = oracle::check_gradients([&] { return crf_nll(em, u, crf, w); },
                                         {em, crf.transitions, crf.start}, 20, rng);
  CHECK(r.max_relative_error < 1e-4);
}
