// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "ctnet/numkern/grad_check.hpp"
#include "ctnet/numkern/ops.hpp"
#include "ctnet/numkern/rng.hpp"

namespace ctnet {
namespace {

Tensor2D random_tensor(RngStream& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  Tensor2D t(r, c);
  for (double& x : t.data()) x = rng.normal(0.0, sd);
  return t;
}

// Triple loop, accumulated in long double as an independent reference.
Tensor2D matmul_oracle(const Tensor2D& a, const Tensor2D& b) {
  Tensor2D c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  }
  return c;
}

TEST(Matmul, MatchesTripleLoopOracle) {
  RngStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = 1 + rng.below(7), k = 1 + rng.below(7), n = 1 + rng.below(7);
    const Tensor2D a = random_tensor(rng, m, k);
    const Tensor2D b = random_tensor(rng, k, n);
    const Tensor2D c = matmul(a, b);
    const Tensor2D o = matmul_oracle(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.data()[i], o.data()[i], 1e-12);
  }
}

TEST(Matmul, IdentityIsExact) {
  RngStream rng(3);
  const Tensor2D a = random_tensor(rng, 4, 5);
  EXPECT_EQ(matmul(a, Tensor2D::identity(5)), a);
  EXPECT_EQ(matmul(Tensor2D::identity(4), a), a);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    (void)matmul(Tensor2D(2, 3), Tensor2D(4, 5));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4x5)"), std::string::npos) << msg;
  }
}

TEST(Relu, ForwardAndSubgradientAtZero) {
  const Tensor2D x{{-1.0, 0.0, 2.5}};
  EXPECT_EQ(relu(x), (Tensor2D{{0.0, 0.0, 2.5}}));
  EXPECT_EQ(relu_backward(x, Tensor2D{{7.0, 7.0, 7.0}}), (Tensor2D{{0.0, 0.0, 7.0}}));
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(-800.0), -1.0);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_NEAR(sigmoid(3.0), 1.0 / (1.0 + std::exp(-3.0)), 1e-16);
}

TEST(Bce, WorkedValueAtLogitThree) {
  const auto r = bce_with_logits(3.0, 1);
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(r.loss, 0.048587, 1e-6);
  EXPECT_NEAR(r.dloss_dlogit, sigmoid(3.0) - 1.0, 1e-15);
}

TEST(Bce, FiniteForHugeLogits) {
  for (double z : {-1e4, -50.0, 50.0, 1e4}) {
    for (int y : {0, 1}) {
      const auto r = bce_with_logits(z, y);
      EXPECT_TRUE(std::isfinite(r.loss));
      EXPECT_GE(r.loss, 0.0);
    }
  }
  EXPECT_NEAR(bce_with_logits(1e4, 0).loss, 1e4, 1e-9);
  EXPECT_THROW(bce_with_logits(0.0, 2), std::invalid_argument);
}

TEST(Bce, DerivativeMatchesFiniteDifference) {
  for (double z : {-4.0, -0.3, 0.0, 1.7}) {
    for (int y : {0, 1}) {
      const double h = 1e-6;
      const double fd = (bce_with_logits(z + h, y).loss - bce_with_logits(z - h, y).loss) / (2 * h);
      EXPECT_NEAR(bce_with_logits(z, y).dloss_dlogit, fd, 1e-8);
    }
  }
}

// Scalar reference for one GLU output unit.
double glu_oracle(const Tensor2D& u1, const Tensor2D& u2, const Tensor2D& z, std::size_t i) {
  double a = 0, b = 0;
  for (std::size_t j = 0; j < z.rows(); ++j) {
    a += u1(i, j) * z(j, 0);
    b += u2(i, j) * z(j, 0);
  }
  return a / (1.0 + std::exp(-b));
}

TEST(Glu, ForwardMatchesScalarOracle) {
  RngStream rng(5);
  const Tensor2D u1 = random_tensor(rng, 3, 4), u2 = random_tensor(rng, 3, 4), z = random_tensor(rng, 4, 1);
  const Tensor2D g = glu_forward(u1, u2, z);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g(i, 0), glu_oracle(u1, u2, z, i), 1e-14);
}

TEST(Glu, ZeroU1GivesExactZeros) {
  RngStream rng(6);
  const Tensor2D u2 = random_tensor(rng, 3, 4, 1e-3), z = random_tensor(rng, 4, 1);
  const Tensor2D g = glu_forward(Tensor2D(3, 4), u2, z);
  for (double x : g.data()) EXPECT_EQ(x, 0.0);
}

TEST(Glu, BackwardMatchesFiniteDifference) {
  RngStream rng(7);
  Tensor2D u1 = random_tensor(rng, 3, 4), u2 = random_tensor(rng, 3, 4), z = random_tensor(rng, 4, 1);
  const Tensor2D up = random_tensor(rng, 3, 1);
  const auto g = glu_backward(u1, u2, z, up);
  auto loss = [&] {
    const Tensor2D o = glu_forward(u1, u2, z);
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i) s += o(i, 0) * up(i, 0);
    return s;
  };
  const double h = 1e-6;
  for (auto [t, gt] : {std::pair{&u1, &g.grad_u1}, std::pair{&u2, &g.grad_u2}, std::pair{&z, &g.grad_z}}) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double orig = t->data()[i];
      t->data()[i] = orig + h;
      const double a = loss();
      t->data()[i] = orig - h;
      const double b = loss();
      t->data()[i] = orig;
      EXPECT_NEAR(gt->data()[i], (a - b) / (2 * h), 1e-8);
    }
  }
}

TEST(LinearAdapter, ForwardBackward) {
  RngStream rng(8);
  const Tensor2D u = random_tensor(rng, 2, 3), z = random_tensor(rng, 3, 1), up = random_tensor(rng, 2, 1);
  EXPECT_EQ(linear_adapter_forward(u, z), matmul(u, z));
  const auto g = linear_adapter_backward(u, z, up);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g.grad_u(i, j), up(i, 0) * z(j, 0));
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g.grad_z(j, 0), u(0, j) * up(0, 0) + u(1, j) * up(1, 0), 1e-15);
  EXPECT_THROW(linear_adapter_backward(u, Tensor2D(4, 1), up), DimensionError);
}

TEST(Adagrad, OneStepWorkedValue) {
  Parameter p("w", Tensor2D{{1.0}});
  p.grad(0, 0) = 1.0;
  adagrad_step(p, 0.01);
  EXPECT_NEAR(p.value(0, 0), 0.99, 1e-9);
  EXPECT_DOUBLE_EQ(p.value(0, 0), 1.0 - 0.01 / (1.0 + kAdagradEps));
  EXPECT_EQ(p.accum(0, 0), 1.0);
  EXPECT_EQ(p.grad(0, 0), 0.0);
}

TEST(Adagrad, AccumulatorIsSumOfSquares) {
  Parameter p("w", 1, 1);
  double expected = 0;
  for (double g : {0.5, -2.0, 3.0}) {
    p.grad(0, 0) = g;
    adagrad_step(p, 0.1);
    expected += g * g;
  }
  EXPECT_DOUBLE_EQ(p.accum(0, 0), expected);
}

TEST(Adagrad, RowSparseLeavesOtherRowsBitIdentical) {
  RngStream rng(9);
  Parameter p("emb", random_tensor(rng, 6, 3));
  p.accum.fill(0.25);
  const Parameter before = p;
  for (double& g : p.grad.data()) g = 1.0;  // dirty but untouched rows must not move
  const std::uint32_t rows[] = {1, 4};
  adagrad_step_rows(p, rows, 0.01);
  for (std::uint32_t r = 0; r < 6; ++r) {
    const bool touched = r == 1 || r == 4;
    for (std::size_t c = 0; c < 3; ++c) {
      if (touched) {
        EXPECT_NE(p.value(r, c), before.value(r, c));
      } else {
        EXPECT_EQ(p.value(r, c), before.value(r, c));
        EXPECT_EQ(p.accum(r, c), before.accum(r, c));
      }
    }
  }
}

TEST(Adagrad, FrozenParameterIsAContractViolation) {
  Parameter p("frozen", 2, 2);
  p.trainable = false;
  EXPECT_THROW(adagrad_step(p, 0.01), ContractViolation);
  const std::uint32_t rows[] = {0};
  EXPECT_THROW(adagrad_step_rows(p, rows, 0.01), ContractViolation);
}

TEST(RoundToStorage, IdempotentFloat32) {
  Parameter p("w", Tensor2D{{0.1, 1.0 / 3.0}});
  round_to_storage(p);
  EXPECT_EQ(p.value(0, 0), static_cast<double>(0.1f));
  const Parameter once = p;
  round_to_storage(p);
  EXPECT_EQ(p.value, once.value);
}

TEST(Rng, SameSeedSameStream) {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitStreamsDifferAndAreReproducible) {
  const RngStream root(1);
  RngStream s1 = root.split(1), s2 = root.split(2), s1b = root.split(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10; ++i) {
    const auto x = s1.next_u64();
    EXPECT_EQ(x, s1b.next_u64());
    seen.insert(x);
    seen.insert(s2.next_u64());
  }
  EXPECT_EQ(seen.size(), 20u);
}

TEST(Rng, UniformBelowAndNormalMoments) {
  RngStream r(77);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  std::vector<int> counts(5, 0);
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    ++counts[r.below(5)];
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.2, 0.005);
}

TEST(GradCheck, QuadraticExactAndFrozenSkipped) {
  Parameter a("a", Tensor2D{{1.0, -2.0}});
  Parameter b("b", Tensor2D{{0.5}});
  b.trainable = false;
  auto loss = [&] { return a.value(0, 0) * a.value(0, 0) + 3 * a.value(0, 1) * b.value(0, 0); };
  auto backward = [&] {
    a.grad(0, 0) = 2 * a.value(0, 0);
    a.grad(0, 1) = 3 * b.value(0, 0);
  };
  Parameter* params[] = {&a, &b};
  const auto rep = grad_check(loss, backward, params, 1e-6);
  EXPECT_TRUE(rep.passed());
  EXPECT_TRUE(rep.find("b")->skipped);
  EXPECT_EQ(rep.find("a")->checked, 2u);
}

TEST(GradCheck, DetectsWrongGradient) {
  Parameter a("a", Tensor2D{{1.0}});
  auto loss = [&] { return a.value(0, 0) * a.value(0, 0); };
  auto backward = [&] { a.grad(0, 0) = 3 * a.value(0, 0); };
  Parameter* params[] = {&a};
  EXPECT_FALSE(grad_check(loss, backward, params, 1e-4).passed());
}

TEST(GradCheck, NonFiniteNamesParameter) {
  Parameter a("alpha", Tensor2D{{1.0}});
  auto loss = [&] { return std::numeric_limits<double>::quiet_NaN(); };
  auto backward = [] {};
  Parameter* params[] = {&a};
  try {
    grad_check(loss, backward, params, 1e-4);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
}

TEST(Matmul, Annihilation) {
  EXPECT_EQ(matmul(Tensor2D{{1.0, 0.0}, {0.0, 0.0}}, Tensor2D{{0.0}, {5.0}}), (Tensor2D{{0.0}, {0.0}}));
}

TEST(Sigmoid, SymmetryAndDeepTail) {
  RngStream rng(2);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-30.0, 30.0);
    EXPECT_NEAR(sigmoid(x), 1.0 - sigmoid(-x), 1e-15);
  }
  const double tail = sigmoid(-100.0);
  EXPECT_GT(tail, 0.0);
  EXPECT_LE(tail, 1e-40);
  EXPECT_NEAR(tail / std::exp(-100.0), 1.0, 1e-12);
}

TEST(Bce, LogitZero) {
  EXPECT_NEAR(bce_with_logits(0.0, 1).loss, std::log(2.0), 1e-15);
  EXPECT_EQ(bce_with_logits(0.0, 1).dloss_dlogit, -0.5);
  EXPECT_EQ(bce_with_logits(0.0, 0).dloss_dlogit, 0.5);
}

TEST(Glu, IdentityU1ZeroU2HalvesInput) {
  const Tensor2D g = glu_forward(Tensor2D::identity(2), Tensor2D(2, 2), Tensor2D{{2.0}, {-4.0}});
  EXPECT_EQ(g, (Tensor2D{{1.0}, {-2.0}}));
}

TEST(Glu, ZeroU1KillsGateAndInputGradients) {
  RngStream rng(12);
  const Tensor2D u2 = random_tensor(rng, 3, 2), z = random_tensor(rng, 2, 1), up = random_tensor(rng, 3, 1);
  const auto g = glu_backward(Tensor2D(3, 2), u2, z, up);
  for (double x : g.grad_u2.data()) EXPECT_EQ(x, 0.0);
  for (double x : g.grad_z.data()) EXPECT_EQ(x, 0.0);
  double norm = 0;
  for (double x : g.grad_u1.data()) norm += std::fabs(x);
  EXPECT_GT(norm, 0.0);
  const auto zero_up = glu_backward(random_tensor(rng, 3, 2), u2, z, Tensor2D(3, 1));
  for (const auto* t : {&zero_up.grad_u1, &zero_up.grad_u2, &zero_up.grad_z}) {
    for (double x : t->data()) EXPECT_EQ(x, 0.0);
  }
}

TEST(LinearAdapter, ZeroAndIdentity) {
  const Tensor2D z{{1.5}, {-2.0}};
  EXPECT_EQ(linear_adapter_forward(Tensor2D(3, 2), z), Tensor2D(3, 1));
  EXPECT_EQ(linear_adapter_forward(Tensor2D::identity(2), z), z);
}

TEST(Adagrad, WorkedValueGradTwo) {
  Parameter p("w", Tensor2D{{1.0}});
  p.grad(0, 0) = 2.0;
  adagrad_step(p, 0.01);
  EXPECT_EQ(p.accum(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(p.value(0, 0), 1.0 - 0.01 * 2.0 / (2.0 + 1e-8));
  EXPECT_NEAR(p.value(0, 0), 0.99, 1e-9);
}

TEST(Adagrad, ZeroGradIsNoOpAndUpdatesShrink) {
  Parameter p("w", Tensor2D{{0.3}});
  adagrad_step(p, 0.01);
  EXPECT_EQ(p.value(0, 0), 0.3);
  EXPECT_EQ(p.accum(0, 0), 0.0);
  p.grad(0, 0) = 1.0;
  adagrad_step(p, 0.01);
  const double first = 0.3 - p.value(0, 0);
  const double mid = p.value(0, 0);
  p.grad(0, 0) = 1.0;
  adagrad_step(p, 0.01);
  EXPECT_LT(mid - p.value(0, 0), first);
}

TEST(Kernels, FiniteClosureFuzz) {
  RngStream rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor2D u1 = random_tensor(rng, 3, 4, 1e3), u2 = random_tensor(rng, 3, 4, 1e3);
    const Tensor2D z = random_tensor(rng, 4, 1, 1e3);
    for (const Tensor2D& t : {glu_forward(u1, u2, z), matmul(u1, z), relu(u1)}) {
      for (double x : t.data()) ASSERT_TRUE(std::isfinite(x));
    }
    const auto g = glu_backward(u1, u2, z, random_tensor(rng, 3, 1, 1e3));
    for (double x : g.grad_u2.data()) ASSERT_TRUE(std::isfinite(x));
    const double l = rng.uniform(-1e3, 1e3);
    ASSERT_TRUE(std::isfinite(bce_with_logits(l, 1).loss));
    ASSERT_TRUE(std::isfinite(sigmoid(l)));
  }
}

TEST(Relu, FiniteDifferenceAwayFromKink) {
  RngStream rng(31);
  for (int i = 0; i < 100; ++i) {
    double x = rng.uniform(-3.0, 3.0);
    if (std::fabs(x) < 1e-4) continue;
    const double h = 1e-6;
    const double fdv = (relu(x + h) - relu(x - h)) / (2 * h);
    const double an = relu_backward(Tensor2D{{x}}, Tensor2D{{1.0}})(0, 0);
    EXPECT_NEAR(an, fdv, 1e-6);
  }
}

TEST(GradCheck, LinearLayerWithBce) {
  RngStream rng(41);
  Parameter w("w", random_tensor(rng, 1, 3));
  Parameter b("b", 1, 1);
  const Tensor2D x = random_tensor(rng, 8, 3);
  const int y[8] = {1, 0, 0, 1, 1, 0, 1, 0};
  auto logit = [&](std::size_t i) { return dot(w.value.data(), x.row(i)) + b.value(0, 0); };
  auto loss = [&] {
    double s = 0;
    for (std::size_t i = 0; i < 8; ++i) s += bce_with_logits(logit(i), y[i]).loss;
    return s / 8;
  };
  auto backward = [&] {
    for (std::size_t i = 0; i < 8; ++i) {
      const double d = bce_with_logits(logit(i), y[i]).dloss_dlogit / 8;
      for (std::size_t j = 0; j < 3; ++j) w.grad(0, j) += d * x(i, j);
      b.grad(0, 0) += d;
    }
  };
  Parameter* params[] = {&w, &b};
  EXPECT_LT(grad_check(loss, backward, params, 1e-5).max_rel_error(), 1e-5);
}

}  // namespace
}  // namespace ctnet
