#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ferau/errors.hpp"
#include "ferau/rng.hpp"
#include "ferau/tensor.hpp"

using namespace ferau;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng,
                     bool requires_grad = true) {
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("conv2d forward values") {
  SUBCASE("zero input stays zero") {
    Tensor x = Tensor::zeros({1, 3, 3});
    Tensor k = Tensor::full({1, 1, 3, 3}, 0.7);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, k, b, 1, 1);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("1x1 identity kernel") {
    Tensor x = Tensor::from_data({1, 2, 2}, {1.0, -2.0, 3.0, 4.0});
    Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, k, b, 1, 0);
    CHECK(y.data() == x.data());
  }
  SUBCASE("all-ones 3x3 kernel sums the window") {
    Tensor x = Tensor::from_data({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, k, b, 1, 0);
    REQUIRE(y.size() == 1);
    CHECK(y.at(0) == doctest::Approx(45.0).epsilon(1e-15));
  }
  SUBCASE("shape mismatch is a dimension error") {
    Tensor x = Tensor::zeros({2, 3, 3});
    Tensor k = Tensor::zeros({1, 1, 3, 3});  // expects 2 input channels
    Tensor b = Tensor::zeros({1});
    CHECK_THROWS_AS(conv2d(x, k, b, 1, 1), DimensionError);
  }
}

TEST_CASE("relu forward and subgradient") {
  Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0}, true);
  Tensor y = relu(x);
  CHECK(y.data() == std::vector<double>{0.0, 0.0, 2.0});

  sum(y).backward();
  CHECK(x.grad() == std::vector<double>{0.0, 0.0, 1.0});

  Tensor p = Tensor::from_data({2}, {0.5, 3.0});
  CHECK(relu(p).data() == p.data());
}

TEST_CASE("maxpool2d") {
  SUBCASE("constant map") {
    Tensor x = Tensor::full({1, 4, 4}, 0.25);
    Tensor y = maxpool2d(x, 2, 2);
    for (double v : y.data()) CHECK(v == 0.25);
  }
  SUBCASE("2x2 max") {
    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    CHECK(maxpool2d(x, 2, 2).at(0) == 4.0);
  }
  SUBCASE("gradient routes only to the argmax") {
    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4}, true);
    sum(maxpool2d(x, 2, 2)).backward();
    CHECK(x.grad() == std::vector<double>{0, 0, 0, 1});
  }
  SUBCASE("tie goes to the first row-major element") {
    Tensor x = Tensor::full({1, 2, 2}, 5.0, true);
    sum(maxpool2d(x, 2, 2)).backward();
    CHECK(x.grad() == std::vector<double>{1, 0, 0, 0});
  }
  SUBCASE("oversized window rejected") {
    Tensor x = Tensor::zeros({1, 2, 2});
    CHECK_THROWS_AS(maxpool2d(x, 3, 1), DimensionError);
  }
}

TEST_CASE("linear forward values") {
  SUBCASE("identity weight returns input") {
    Tensor x = Tensor::from_data({2}, {3.0, -1.0});
    Tensor w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::zeros({2});
    CHECK(linear(x, w, b).data() == x.data());
  }
  SUBCASE("zero weight returns bias") {
    Tensor x = Tensor::from_data({2}, {3.0, -1.0});
    Tensor w = Tensor::zeros({3, 2});
    Tensor b = Tensor::from_data({3}, {1.0, 2.0, 3.0});
    CHECK(linear(x, w, b).data() == b.data());
  }
  SUBCASE("hand dot product") {
    Tensor x = Tensor::from_data({2}, {3.0, 4.0});
    Tensor w = Tensor::from_data({1, 2}, {1.0, 2.0});
    Tensor b = Tensor::from_data({1}, {1.0});
    CHECK(linear(x, w, b).at(0) == doctest::Approx(12.0).epsilon(1e-15));
  }
}

TEST_CASE("global_avg_pool") {
  SUBCASE("constant channel") {
    Tensor x = Tensor::full({3, 4, 4}, 0.5);
    Tensor pooled = global_avg_pool(x);
    for (double v : pooled.data()) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("hand mean") {
    Tensor x = Tensor::from_data({1, 2, 2}, {0, 2, 4, 6});
    CHECK(global_avg_pool(x).at(0) == doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("zero tensor") {
    Tensor x = Tensor::zeros({2, 3, 3});
    Tensor pooled = global_avg_pool(x);
    for (double v : pooled.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("channel_mean") {
  SUBCASE("single channel is identity") {
    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    CHECK(channel_mean(x).data() == x.data());
  }
  SUBCASE("two-channel elementwise average") {
    Tensor x = Tensor::from_data({2, 2, 2}, {1, 3, 2, 4, 3, 1, 4, 2});
    CHECK(channel_mean(x).data() == std::vector<double>{2, 2, 3, 3});
  }
  SUBCASE("zero features give a zero map") {
    Tensor x = Tensor::zeros({4, 3, 3});
    Tensor mean = channel_mean(x);
    for (double v : mean.data()) CHECK(v == 0.0);
  }
  SUBCASE("linearity") {
    Rng rng(11);
    Tensor f = random_tensor({3, 4, 4}, rng, false);
    Tensor g = random_tensor({3, 4, 4}, rng, false);
    Tensor fg = add(f, g);
    const auto lhs = channel_mean(fg).data();
    const auto mf = channel_mean(f).data();
    const auto mg = channel_mean(g).data();
    for (size_t i = 0; i < lhs.size(); ++i)
      CHECK(std::abs(lhs[i] - (mf[i] + mg[i])) < 1e-12);
  }
}

TEST_CASE("cosine_sim_map values") {
  SUBCASE("self-similarity is 1") {
    // not exactly 1.0: dot(t,t) and |t|*|t| round differently
    Tensor t = Tensor::from_data({2, 2}, {0.3, 0.1, 0.7, 0.2});
    CHECK(std::abs(cosine_sim_map(t, t).value() - 1.0) < 1e-10);
  }
  SUBCASE("disjoint support is 0") {
    Tensor t = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    Tensor a = Tensor::from_data({2, 2}, {0, 0, 0, 1});
    CHECK(std::abs(cosine_sim_map(t, a).value()) < 1e-12);
  }
  SUBCASE("hand value 0.5") {
    Tensor t = Tensor::from_data({2, 2}, {1, 1, 1, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    CHECK(std::abs(cosine_sim_map(t, a).value() - 0.5) < 1e-12);
  }
  SUBCASE("scale invariance") {
    Rng rng(3);
    Tensor t = random_tensor({4, 4}, rng, false);
    Tensor a = random_tensor({4, 4}, rng, false);
    const double base = cosine_sim_map(t, a).value();
    for (double alpha : {0.25, 3.0, 1e4}) {
      Tensor ts = affine(t, alpha, 0.0);
      Tensor as = affine(a, 7.5, 0.0);
      CHECK(std::abs(cosine_sim_map(ts, as).value() - base) < 1e-10);
    }
  }
  SUBCASE("range bounds over random maps") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor t = random_tensor({3, 5}, rng, false);
      Tensor a = random_tensor({3, 5}, rng, false);
      const double r = cosine_sim_map(t, a).value();
      CHECK(r >= -1.0 - 1e-12);
      CHECK(r <= 1.0 + 1e-12);
    }
    // nonnegative maps never go below zero
    for (int trial = 0; trial < 50; ++trial) {
      Tensor t = random_tensor({3, 5}, rng, false);
      Tensor a = random_tensor({3, 5}, rng, false);
      CHECK(cosine_sim_map(relu(t), relu(a)).value() >= -1e-12);
    }
  }
  SUBCASE("shape mismatch rejected") {
    Tensor t = Tensor::zeros({2, 2});
    Tensor a = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(cosine_sim_map(t, a), DimensionError);
  }
}

TEST_CASE("softmax_cross_entropy values") {
  SUBCASE("uniform logits give ln(c)") {
    for (int c : {2, 5, 6}) {
      Tensor logits = Tensor::full({c}, 0.3);
      CHECK(softmax_cross_entropy(logits, 0).value() ==
            doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
    }
  }
  SUBCASE("large logits do not overflow") {
    Tensor logits = Tensor::from_data({2}, {1000.0, 0.0});
    const double v = softmax_cross_entropy(logits, 0).value();
    CHECK(std::isfinite(v));
    CHECK(v < 1e-300);
  }
  SUBCASE("hand value for [1,1,4], y=2") {
    Tensor logits = Tensor::from_data({3}, {1.0, 1.0, 4.0});
    const double expected =
        -std::log(std::exp(4.0) /
                  (std::exp(1.0) + std::exp(1.0) + std::exp(4.0)));
    const double v = softmax_cross_entropy(logits, 2).value();
    CHECK(v == doctest::Approx(expected).epsilon(1e-13));
    CHECK(v == doctest::Approx(0.09492).epsilon(1e-4));
  }
  SUBCASE("label out of range rejected") {
    Tensor logits = Tensor::zeros({3});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, 3), ParamError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, -1), ParamError);
  }
}

TEST_CASE("backward semantics") {
  SUBCASE("sum gives all-ones gradient") {
    Rng rng(5);
    Tensor x = random_tensor({2, 3}, rng);
    sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("cosine with itself is stationary") {
    Tensor t = Tensor::from_data({2, 2}, {0.4, 0.9, 0.2, 0.5}, true);
    cosine_sim_map(t, t.detach()).backward();
    for (double g : t.grad()) CHECK(std::abs(g) < 1e-10);
  }
  SUBCASE("repeated backward accumulates") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor root = sum(x);
    root.backward();
    root.backward();
    CHECK(x.grad() == std::vector<double>{2.0, 2.0});
    x.zero_grad();
    root.backward();
    CHECK(x.grad() == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("non-scalar root rejected") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(relu(x).backward(), ContractError);
  }
  SUBCASE("relu-of-linear matches finite differences tightly") {
    Rng rng(23);
    Tensor w = random_tensor({3, 4}, rng, false);
    Tensor b = random_tensor({3}, rng, false);
    Tensor x = random_tensor({4}, rng);
    auto f = [&](const Tensor& v) { return sum(relu(linear(v, w, b))); };
    CHECK(grad_check(f, x) < 1e-6);
  }
}

TEST_CASE("gradient suite: finite differences per op") {
  // 100 seeded random trials per operation, inputs in [-1, 1].
  const int kTrials = 100;
  const double kTol = 1e-4;

  SUBCASE("conv2d w.r.t. input, kernel, bias") {
    Rng rng(101);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor x = random_tensor({2, 5, 5}, rng);
      Tensor k = random_tensor({3, 2, 3, 3}, rng);
      Tensor b = random_tensor({3}, rng);
      CHECK(grad_check(
                [&](const Tensor& v) { return sum(conv2d(v, k, b, 1, 1)); },
                x) < kTol);
      if (trial % 10 == 0) {
        CHECK(grad_check(
                  [&](const Tensor& v) { return sum(conv2d(x, v, b, 2, 1)); },
                  k) < kTol);
        CHECK(grad_check(
                  [&](const Tensor& v) { return sum(conv2d(x, k, v, 1, 0)); },
                  b) < kTol);
      }
    }
  }
  SUBCASE("relu") {
    Rng rng(102);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor x = random_tensor({7}, rng);
      CHECK(grad_check([](const Tensor& v) { return sum(relu(v)); }, x) <
            kTol);
    }
  }
  SUBCASE("maxpool2d") {
    Rng rng(103);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor x = random_tensor({2, 4, 4}, rng);
      CHECK(grad_check(
                [](const Tensor& v) { return sum(maxpool2d(v, 2, 2)); }, x) <
            kTol);
    }
  }
  SUBCASE("linear") {
    Rng rng(104);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor x = random_tensor({5}, rng);
      Tensor w = random_tensor({3, 5}, rng);
      Tensor b = random_tensor({3}, rng);
      CHECK(grad_check([&](const Tensor& v) { return sum(linear(v, w, b)); },
                       x) < kTol);
      CHECK(grad_check([&](const Tensor& v) { return sum(linear(x, v, b)); },
                       w) < kTol);
      CHECK(grad_check([&](const Tensor& v) { return sum(linear(x, w, v)); },
                       b) < kTol);
    }
  }
  SUBCASE("global_avg_pool and channel_mean") {
    Rng rng(105);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor x = random_tensor({3, 4, 4}, rng);
      CHECK(grad_check(
                [](const Tensor& v) { return sum(global_avg_pool(v)); }, x) <
            kTol);
      CHECK(grad_check(
                [](const Tensor& v) { return sum(channel_mean(v)); }, x) <
            kTol);
    }
  }
  SUBCASE("cosine_sim_map away from zero") {
    Rng rng(106);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor t = random_tensor({4, 4}, rng);
      Tensor a = random_tensor({4, 4}, rng, false);
      CHECK(grad_check([&](const Tensor& v) { return cosine_sim_map(v, a); },
                       t) < kTol);
    }
  }
  SUBCASE("softmax_cross_entropy") {
    Rng rng(107);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor logits = random_tensor({6}, rng);
      const int y = static_cast<int>(rng.below(6));
      CHECK(grad_check(
                [&](const Tensor& v) { return softmax_cross_entropy(v, y); },
                logits) < kTol);
    }
  }
  SUBCASE("add, affine, index_scalar, flatten") {
    Rng rng(108);
    for (int trial = 0; trial < kTrials; ++trial) {
      Tensor x = random_tensor({2, 3}, rng);
      Tensor other = random_tensor({2, 3}, rng, false);
      CHECK(grad_check([&](const Tensor& v) { return sum(add(v, other)); },
                       x) < kTol);
      CHECK(grad_check(
                [](const Tensor& v) { return sum(affine(v, 2.5, -0.7)); },
                x) < kTol);
      CHECK(grad_check([](const Tensor& v) { return index_scalar(v, 4); },
                       x) < kTol);
      CHECK(grad_check([](const Tensor& v) { return sum(flatten(v)); }, x) <
            kTol);
    }
  }
}

TEST_CASE("grad_check contract") {
  Rng rng(9);
  Tensor x = random_tensor({4}, rng);
  // exact for linear functions up to rounding
  CHECK(grad_check([](const Tensor& v) { return sum(v); }, x) < 1e-9);
  CHECK(grad_check(
            [](const Tensor& v) { return softmax_cross_entropy(v, 1); }, x) <
        1e-5);
  Tensor a = random_tensor({2, 2}, rng, false);
  Tensor t = random_tensor({2, 2}, rng);
  CHECK(grad_check([&](const Tensor& v) { return cosine_sim_map(v, a); }, t) <
        1e-5);
  // non-scalar objective is rejected
  CHECK_THROWS_AS(grad_check([](const Tensor& v) { return relu(v); }, x),
                  ContractError);
}

TEST_CASE("determinism of forward and backward") {
  auto run = [] {
    Rng rng(77);
    Tensor x = random_tensor({2, 6, 6}, rng);
    Tensor k = random_tensor({4, 2, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor a = relu(random_tensor({3, 3}, rng, false));
    Tensor t = channel_mean(relu(maxpool2d(conv2d(x, k, b, 1, 1), 2, 2)));
    Tensor loss = add(cosine_sim_map(t, a), sum(affine(t, 0.01, 0.0)));
    loss.backward();
    return std::make_pair(loss.value(), x.grad());
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}
