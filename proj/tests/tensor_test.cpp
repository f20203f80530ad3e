#include "tactfl/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "tactfl/errors.hpp"
#include "tactfl/rng.hpp"

using namespace tactfl;

TEST(Tensor, ShapeAndAccess) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  t(1, 2) = 5.0;
  EXPECT_EQ(t(1, 2), 5.0);
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), shape_error);
}

TEST(Matmul, IdentityPassthrough) {
  const Tensor a({2, 2}, {3, 4, 5, 6});
  const Tensor r = matmul(Tensor::identity(2), a);
  EXPECT_EQ(r.data, a.data);
}

TEST(Matmul, HandValue) {
  const Tensor a({1, 2}, {1, 2});
  const Tensor b({2, 1}, {3, 4});
  const Tensor r = matmul(a, b);
  ASSERT_EQ(r.shape, (std::vector<std::size_t>{1, 1}));
  EXPECT_DOUBLE_EQ(r(0, 0), 11.0);
}

TEST(Matmul, ZeroAnnihilates) {
  SplitMix64 rng(3);
  Tensor b({2, 2});
  for (auto& v : b.data) v = rng.next_gaussian();
  const Tensor r = matmul(Tensor::zeros({2, 2}), b);
  for (double v : r.data) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), shape_error);
}

TEST(Matmul, AssociativityOnRandomChains) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.next_below(5);
    const std::size_t k = 1 + rng.next_below(5);
    const std::size_t l = 1 + rng.next_below(5);
    const std::size_t n = 1 + rng.next_below(5);
    Tensor a({m, k}), b({k, l}), c({l, n});
    for (auto& v : a.data) v = rng.next_gaussian();
    for (auto& v : b.data) v = rng.next_gaussian();
    for (auto& v : c.data) v = rng.next_gaussian();
    const Tensor lhs = matmul(matmul(a, b), c);
    const Tensor rhs = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double scale = std::max(1.0, std::abs(lhs.data[i]));
      EXPECT_NEAR(lhs.data[i], rhs.data[i], 1e-9 * scale);
    }
  }
}

TEST(Cosine, KnownValues) {
  EXPECT_DOUBLE_EQ(cosine(Tensor({2}, {1, 0}), Tensor({2}, {1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine(Tensor({2}, {1, 0}), Tensor({2}, {0, 1})), 0.0);
  EXPECT_NEAR(cosine(Tensor({2}, {1, 0}), Tensor({2}, {1, 1})),
              1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, ZeroVectorGivesZero) {
  EXPECT_EQ(cosine(Tensor({2}), Tensor({2}, {1, 2})), 0.0);
  EXPECT_EQ(cosine(Tensor({2}), Tensor({2})), 0.0);
}

TEST(Cosine, StaysInRange) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor u({4}), v({4});
    for (auto& x : u.data) x = 1e8 * rng.next_gaussian();
    for (auto& x : v.data) x = 1e8 * rng.next_gaussian();
    const double c = cosine(u, v);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(RowSoftmax, KnownValues) {
  const Tensor flat = row_softmax(Tensor({1, 2}, {0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(flat(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(flat(0, 1), 0.5);

  const Tensor sharp = row_softmax(Tensor({1, 2}, {1, 0}), 1.0);
  EXPECT_NEAR(sharp(0, 0), 0.73105858, 1e-8);
  EXPECT_NEAR(sharp(0, 1), 0.26894142, 1e-8);

  const Tensor cold = row_softmax(Tensor({1, 2}, {1, 0}), 0.1);
  EXPECT_NEAR(cold(0, 0), 0.99995460, 1e-8);
  EXPECT_NEAR(cold(0, 1), 0.00004540, 1e-8);
}

TEST(RowSoftmax, RowsSumToOne) {
  SplitMix64 rng(23);
  Tensor logits({5, 7});
  for (auto& v : logits.data) v = 50.0 * rng.next_gaussian();
  const Tensor p = row_softmax(logits, 0.7);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      EXPECT_GE(p(i, j), 0.0);
      sum += p(i, j);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(RowSoftmax, RejectsBadTemperature) {
  EXPECT_THROW(row_softmax(Tensor({1, 2}), 0.0), parameter_error);
  EXPECT_THROW(row_softmax(Tensor({1, 2}), -1.0), parameter_error);
}

TEST(CheckGradient, QuadraticIsExact) {
  Tensor x({3}, {1.0, -2.0, 0.5});
  auto f = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return s;
  };
  Tensor grad({3});
  for (std::size_t i = 0; i < 3; ++i) grad(i) = 2.0 * x(i);
  EXPECT_LT(check_gradient(f, x, grad, 1e-5), 1e-6);
}

TEST(CheckGradient, LinearIsExact) {
  Tensor x({4}, {0.3, -1.1, 2.0, 0.0});
  auto f = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s;
  };
  Tensor grad({4}, {1, 1, 1, 1});
  EXPECT_LT(check_gradient(f, x, grad, 1e-5), 1e-9);
}

TEST(CheckGradient, DetectsWrongGradient) {
  Tensor x({2}, {1.0, 2.0});
  auto f = [](const Tensor& t) { return t(0) * t(0) + t(1); };
  Tensor wrong({2}, {5.0, 5.0});
  EXPECT_GT(check_gradient(f, x, wrong, 1e-5), 0.1);
}
