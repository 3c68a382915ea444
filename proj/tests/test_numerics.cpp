// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "rsed/numerics.hpp"
#include "rsed/random.hpp"

using namespace rsed;

TEST(Sigmoid, Examples) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  const double big = sigmoid(709.0);
  EXPECT_TRUE(std::isfinite(big));
  // 1 - 1e-300 rounds to 1.0 in binary64; the closest representable bound is 1 - 2^-53.
  EXPECT_GE(big, 1.0 - 0x1p-53);
  EXPECT_LE(big, 1.0);
  const double tiny = sigmoid(-709.0);
  EXPECT_GT(tiny, 0.0);
  EXPECT_NEAR(tiny, std::exp(-709.0), 1e-300);
  EXPECT_TRUE(std::isfinite(sigmoid(1000.0)));
  EXPECT_TRUE(std::isfinite(sigmoid(-1000.0)));
}

TEST(Sigmoid, ComplementSymmetry) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double z = rng.uniform(-700.0, 700.0);
    EXPECT_NEAR(sigmoid(z) + sigmoid(-z), 1.0, 1e-15) << z;
  }
}

TEST(Affine, Examples) {
  const Vector zero2{0.0, 0.0};
  EXPECT_EQ(affine(Matrix::identity(2), Vector{3, 4}, zero2), (Vector{3, 4}));
  EXPECT_EQ(affine(Matrix(2, 3), Vector{7, -1, 2}, Vector{1, 2}), (Vector{1, 2}));
  EXPECT_EQ(affine(Matrix(2, 2, Vector{1, 2, 3, 4}), Vector{1, 1}, zero2), (Vector{3, 7}));
}

TEST(Affine, DimensionMismatchIsContractError) {
  EXPECT_THROW(affine(Matrix(2, 2), Vector{1, 2, 3}, Vector{0, 0}), ContractError);
  EXPECT_THROW(affine(Matrix(2, 2), Vector{1, 2}, Vector{0}), ContractError);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  const Vector params{1.5, -2.0, 0.25};
  const AdamResult r = adam_step(params, Vector(3, 0.0), AdamState::fresh(3));
  EXPECT_EQ(r.params, params);
  EXPECT_EQ(r.state.t, 1u);
}

TEST(Adam, FirstStepMagnitudeIsStepsize) {
  // t = 1: m_hat = g, v_hat = g^2, so the step is eta * g / (|g| + eps).
  for (double eta : {1e-4, 3e-3}) {
    const AdamResult r = adam_step(Vector{0.0}, Vector{1.0}, AdamState::fresh(1, AdamConfig{eta}));
    const double expected = eta * 1.0 / (1.0 + 1e-8);
    EXPECT_NEAR(-r.params[0], expected, 1e-15);
    EXPECT_NEAR(-r.params[0] / eta, 1.0, 1e-6);
  }
}

TEST(Adam, ConstantPositiveGradientDecreasesEachStep) {
  AdamState s = AdamState::fresh(1);
  Vector p{0.3};
  for (int k = 0; k < 2; ++k) {
    AdamResult r = adam_step(p, Vector{2.5}, s);
    EXPECT_LT(r.params[0], p[0]);
    p = r.params;
    s = r.state;
  }
  EXPECT_EQ(s.t, 2u);
}

TEST(Adam, InputsAreNotModified) {
  const Vector p{1.0, 2.0}, g{0.5, -0.5};
  const AdamState s = AdamState::fresh(2);
  const AdamState copy = s;
  (void)adam_step(p, g, s);
  EXPECT_EQ(s.m, copy.m);
  EXPECT_EQ(s.v, copy.v);
  EXPECT_EQ(s.t, copy.t);
}

TEST(Adam, NegatedGradientNegatesDelta) {
  Rng rng(11);
  const std::size_t n = 64;
  Vector p(n), g(n), neg(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = rng.uniform(-1, 1);
    g[i] = rng.normal();
    neg[i] = -g[i];
  }
  AdamState a = AdamState::fresh(n, AdamConfig{1e-2});
  AdamState b = a;
  Vector pa = p, pb = p;
  for (int step = 0; step < 5; ++step) {
    AdamResult ra = adam_step(pa, g, a), rb = adam_step(pb, neg, b);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(ra.params[i] - p[i], -(rb.params[i] - p[i]), 1e-15);
    pa = ra.params, pb = rb.params, a = ra.state, b = rb.state;
  }
}

TEST(Adam, LengthMismatchIsContractError) {
  EXPECT_THROW(adam_step(Vector{1.0}, Vector{1.0, 2.0}, AdamState::fresh(1)), ContractError);
  EXPECT_THROW(adam_step(Vector{1.0}, Vector{1.0}, AdamState::fresh(2)), ContractError);
}

namespace {
struct TwoBlocks {
  Matrix a{2, 3};
  Vector b = Vector(4);
};
template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, TwoBlocks>
void for_each_block(P& p, F&& f) {
  f(std::span(p.a.values()));
  f(std::span(p.b));
}
}  // namespace

TEST(Flatten, RoundTripIsExact) {
  Rng rng(3);
  TwoBlocks x;
  for (double& v : x.a.values()) v = rng.normal();
  for (double& v : x.b) v = rng.normal();
  EXPECT_EQ(parameter_count(x), 10u);
  const Vector flat = flatten(x);
  TwoBlocks y;
  unflatten(flat, y);
  EXPECT_EQ(y.a, x.a);
  EXPECT_EQ(y.b, x.b);
  EXPECT_EQ(flatten(y), flat);
  EXPECT_THROW(unflatten(Vector(9), y), ContractError);
  set_zero(y);
  EXPECT_EQ(flatten(y), Vector(10, 0.0));
}

TEST(Rng, SubstreamsDifferAndRepeat) {
  EXPECT_EQ(substream_seed(5, 1), substream_seed(5, 1));
  EXPECT_NE(substream_seed(5, 1), substream_seed(5, 2));
  EXPECT_NE(substream_seed(5, 1), substream_seed(6, 1));
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.bits(), b.bits());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng rng(9);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    ASSERT_LT(rng.below(7), 7u);
  }
  EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
  Rng rng(10);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}
