#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "evf/errors.hpp"
#include "evf/fft.hpp"
#include "evf/optim.hpp"
#include "evf/tensor.hpp"
#include "support.hpp"

using namespace evf;
using evf::testing::grad_check;
using evf::testing::project;

namespace {

constexpr double kOpTol = 1e-4;

Tensor rand_t(Shape s, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  return Tensor::randn(std::move(s), sd, rng);
}

std::vector<double> naive_dft_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::abs(acc);
  }
  return out;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("matmul examples") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor m({2, 2}, {1, 2, 3, 4});
    const Tensor p = matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.at(i) == m.at(i));
    CHECK(matmul(Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {0, 1})).item() == 0.0);
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  }

  TEST_CASE("matmul gradient of sum equals ones times b transposed") {
    Tensor a = rand_t({3, 4}, 1);
    const Tensor b = rand_t({4, 2}, 2);
    a.set_requires_grad(true);
    backward(sum(matmul(a, b)));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) CHECK(a.grad()[i * 4 + k] == doctest::Approx(b.at(k, 0) + b.at(k, 1)));
    const auto gc = grad_check([&] { return project(matmul(a, b)); }, {a});
    CHECK(gc.worst < kOpTol);
  }

  TEST_CASE("conv1d examples") {
    const Tensor ones({1, 4}, {1, 1, 1, 1});
    const Tensor y = conv1d(ones, Tensor({1, 1, 1}, std::vector<double>{1.0}), 1, 0);
    CHECK(y.shape() == Shape{1, 4});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == 1.0);
    const Tensor d = conv1d(Tensor({1, 3}, {1, 2, 3}), Tensor({1, 1, 2}, {1, -1}), 1, 0);
    CHECK(d.shape() == Shape{1, 2});
    CHECK(d.at(0) == -1.0);
    CHECK(d.at(1) == -1.0);
    const Tensor z = conv1d(rand_t({2, 9}, 3), Tensor({3, 2, 3}), 2, 1);
    CHECK(z.shape() == Shape{3, 5});
    for (double v : z.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(conv1d(Tensor({1, 2}), Tensor({1, 1, 5}), 1, 1), DimensionError);
  }

  TEST_CASE("softmax, gelu and layer norm examples") {
    const Tensor s = softmax(Tensor({1, 3}, {0, 0, 0}));
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(gelu(Tensor({1}, std::vector<double>{0.0})).item() == 0.0);
    const Tensor ln = layer_norm(Tensor({1, 3}, {1, 2, 3}), Tensor({3}, {1, 1, 1}), Tensor({3}));
    double mu = 0.0, var = 0.0;
    for (double v : ln.data()) mu += v / 3.0;
    for (double v : ln.data()) var += (v - mu) * (v - mu) / 3.0;
    CHECK(std::abs(mu) < 1e-9);
    // eps = 1e-5 keeps the variance just under one.
    CHECK(std::abs(var - 1.0) < 1e-4);
    const Tensor ln0 = layer_norm(Tensor({1, 3}, {1, 2, 3}), Tensor({3}, {1, 1, 1}), Tensor({3}), -1, 1e-300);
    var = 0.0;
    for (double v : ln0.data()) var += v * v / 3.0;
    CHECK(std::abs(var - 1.0) < 1e-9);
  }

  TEST_CASE("softmax rows sum to one") {
    const Tensor s = softmax(rand_t({5, 7}, 4, 10.0));
    for (std::size_t r = 0; r < 5; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 7; ++c) acc += s.at(r, c);
      CHECK(std::abs(acc - 1.0) < 1e-12);
    }
  }

  TEST_CASE("dropout") {
    const Tensor x = rand_t({4, 50}, 5);
    Rng rng(1);
    const Tensor e = dropout(x, 0.3, rng, false);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(e.at(i) == x.at(i));
    const Tensor t = dropout(x, 0.5, rng, true);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (t.at(i) != 0.0) {
        ++kept;
        CHECK(t.at(i) == doctest::Approx(2.0 * x.at(i)));
      }
    }
    CHECK(kept > 60);
    CHECK(kept < 140);
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ConfigError);
  }

  TEST_CASE("rfft magnitude examples") {
    const Tensor z = rfft_magnitude(Tensor({8}));
    CHECK(z.shape() == Shape{5});
    for (double v : z.data()) CHECK(v == 0.0);
    std::vector<double> c(8);
    for (std::size_t n = 0; n < 8; ++n) c[n] = std::cos(2.0 * std::numbers::pi * 2.0 * static_cast<double>(n) / 8.0);
    const Tensor m = rfft_magnitude(Tensor({8}, c));
    for (std::size_t k = 0; k < 5; ++k) {
      if (k == 2) CHECK(m.at(k) == doctest::Approx(4.0).epsilon(1e-12));
      else CHECK(m.at(k) < 1e-9);
    }
    const Tensor one = rfft_magnitude(Tensor({8}, std::vector<double>(8, 1.0)));
    CHECK(one.at(0) == doctest::Approx(8.0));
    for (std::size_t k = 1; k < 5; ++k) CHECK(one.at(k) < 1e-9);
    CHECK_THROWS_AS(rfft_magnitude(Tensor({6})), ConfigError);
  }

  TEST_CASE("rfft magnitude matches naive DFT for all power-of-two lengths") {
    for (std::size_t len = 8; len <= 2048; len *= 2) {
      const Tensor x = rand_t({2, len}, len);
      const Tensor m = rfft_magnitude(x);
      for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> row(x.data().begin() + static_cast<std::ptrdiff_t>(r * len),
                                x.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * len));
        const auto ref = naive_dft_magnitude(row);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) {
          const double d = m.at(r, k) - ref[k];
          num += d * d;
          den += ref[k] * ref[k];
        }
        CHECK(std::sqrt(num / den) < 1e-9);
      }
    }
  }

  TEST_CASE("fft round trip for arbitrary lengths") {
    for (std::size_t len : {5u, 12u, 64u}) {
      std::vector<double> x(len);
      Rng rng(len);
      std::normal_distribution<double> g;
      for (double& v : x) v = g(rng);
      const auto spec = fft::rfft(x);
      const auto back = fft::irfft(spec, len);
      for (std::size_t i = 0; i < len; ++i) CHECK(back[i] / static_cast<double>(len) == doctest::Approx(x[i]));
    }
  }

  TEST_CASE("backward examples and contracts") {
    Tensor p({2}, {1, 2}, true);
    backward(sum(p));
    CHECK(p.grad()[0] == 1.0);
    CHECK(p.grad()[1] == 1.0);
    p.zero_grad();
    backward(sum(square(p)));
    CHECK(p.grad()[0] == 2.0);
    CHECK(p.grad()[1] == 4.0);

    const Tensor loss = sum(square(p));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), ContractError);
    CHECK_THROWS_AS(backward(square(p)), ContractError);
    CHECK_THROWS_AS(backward(sum(Tensor({2}, {1, 2}))), ContractError);
  }

  TEST_CASE("no-grad guard builds no graph") {
    Tensor p({2}, {1, 2}, true);
    {
      NoGradGuard g;
      CHECK_FALSE(sum(p).requires_grad());
    }
    CHECK(sum(p).requires_grad());
  }

  TEST_CASE("per-op finite-difference gradient checks") {
    Tensor a = rand_t({3, 4}, 11);
    Tensor b = rand_t({3, 4}, 12);
    Tensor c = rand_t({4, 5}, 13);
    Tensor v = rand_t({4}, 14);
    Tensor g = rand_t({4}, 15);
    Tensor x3 = rand_t({2, 3, 12}, 16);
    Tensor k3 = rand_t({4, 3, 5}, 17);
    Tensor tok = rand_t({9, 4}, 18);
    Tensor dw = rand_t({5, 4}, 19);
    Tensor sig = rand_t({2, 16}, 20);
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    const std::vector<int> labels{1, 0, 1};
    Rng drng(5);

    struct Case {
      const char* name;
      std::function<Tensor()> f;
      std::vector<Tensor> params;
    };
    const std::vector<Case> cases = {
        {"add", [&] { return project(add(a, b)); }, {a, b}},
        {"sub", [&] { return project(sub(a, b)); }, {a, b}},
        {"mul", [&] { return project(mul(a, b)); }, {a, b}},
        {"affine", [&] { return project(affine(a, 1.7, -0.3)); }, {a}},
        {"square", [&] { return project(square(a)); }, {a}},
        {"add_bias", [&] { return project(add_bias(a, v)); }, {a, v}},
        {"gelu", [&] { return project(gelu(a)); }, {a}},
        {"dropout", [&] {
           Rng r(3);
           return project(dropout(a, 0.4, r, true));
         }, {a}},
        {"mean", [&] { return mean(square(a)); }, {a}},
        {"mean_rows", [&] { return project(mean_rows(a)); }, {a}},
        {"matmul", [&] { return project(matmul(a, c)); }, {a, c}},
        {"matmul_nt", [&] { return project(matmul_nt(a, b)); }, {a, b}},
        {"transpose", [&] { return project(transpose(a)); }, {a}},
        {"softmax rows", [&] { return project(softmax(a, -1)); }, {a}},
        {"softmax cols", [&] { return project(softmax(a, 0)); }, {a}},
        {"layer_norm", [&] { return project(layer_norm(a, g, v)); }, {a, g, v}},
        {"cross_entropy", [&] { return cross_entropy(slice_cols(a, 0, 2), labels); }, {a}},
        {"row_normalize", [&] { return project(row_normalize(a)); }, {a}},
        {"reshape", [&] { return project(reshape(a, {2, 6})); }, {a}},
        {"concat rows", [&] { return project(concat({a, b}, 0)); }, {a, b}},
        {"concat cols", [&] { return project(concat({a, b}, 1)); }, {a, b}},
        {"gather_rows", [&] { return project(gather_rows(a, idx)); }, {a}},
        {"slice_cols", [&] { return project(slice_cols(a, 1, 2)); }, {a}},
        {"slice_rows", [&] { return project(slice_rows(a, 1, 2)); }, {a}},
        {"conv1d", [&] { return project(conv1d(x3, k3, 2, 2)); }, {x3, k3}},
        {"depthwise_conv1d", [&] { return project(depthwise_conv1d(tok, dw)); }, {tok, dw}},
        {"rfft_magnitude", [&] { return project(rfft_magnitude(sig)); }, {sig}},
    };
    for (const auto& cs : cases) {
      CAPTURE(cs.name);
      const auto gc = grad_check(cs.f, cs.params);
      CHECK(gc.checked > 0);
      CHECK(gc.worst < kOpTol);
    }
  }

  TEST_CASE("shape errors name both shapes") {
    try {
      add(Tensor({2, 3}), Tensor({3, 2}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[3x2]") != std::string::npos);
    }
  }
}

TEST_SUITE("optim") {
  TEST_CASE("cosine schedule endpoints and monotonicity") {
    CHECK(cosine_lr(0, 100, 1e-4, 1e-6) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(cosine_lr(100, 100, 1e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-15));
    double prev = cosine_lr(0, 100, 1e-4, 1e-6);
    for (std::size_t s = 1; s <= 100; ++s) {
      const double lr = cosine_lr(s, 100, 1e-4, 1e-6);
      CHECK(lr <= prev);
      CHECK(lr >= 1e-6);
      prev = lr;
    }
  }

  TEST_CASE("one AdamW step matches the hand-computed update") {
    Tensor w({1}, {1.0}, true);
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.lr_min = 0.1;
    cfg.weight_decay = 0.0;
    cfg.total_steps = 10;
    AdamW opt({{"w", w}}, cfg);
    backward(sum(square(w)));
    opt.step();
    // g = 2; m = 0.2, v = 0.004; bias-corrected m_hat = 2, v_hat = 4.
    const double m_hat = 2.0, v_hat = 4.0;
    CHECK(opt.first_moments()[0][0] == doctest::Approx(0.2));
    CHECK(opt.second_moments()[0][0] == doctest::Approx(0.004));
    CHECK(w.at(0) == doctest::Approx(1.0 - 0.1 * m_hat / (std::sqrt(v_hat) + cfg.eps)));
  }

  TEST_CASE("weight decay is decoupled from the moments") {
    Tensor w({1}, {2.0}, true);
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.lr_min = 0.01;
    cfg.weight_decay = 0.5;
    AdamW opt({{"w", w}}, cfg);
    w.mutable_grad()[0] = 0.0;
    opt.step();
    CHECK(opt.first_moments()[0][0] == 0.0);
    CHECK(opt.second_moments()[0][0] == 0.0);
    CHECK(w.at(0) == doctest::Approx(2.0 * (1.0 - 0.01 * 0.5)));
  }

  TEST_CASE("missing gradient is a contract error") {
    Tensor w({1}, {1.0}, true);
    AdamW opt({{"w", w}}, AdamWConfig{});
    CHECK_THROWS_AS(opt.step(), ContractError);
  }
}
