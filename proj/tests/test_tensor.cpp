// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "test_util.hpp"
#include "tpareto/tensor.hpp"

using namespace tpareto;
using namespace tpareto::testing;

TEST(Backward, SumOfSquares) {
  ParameterGroup g(GroupId::Theta1);
  g.add("x", Tensor::parameter({3}, {1, 2, 3}));
  const Tensor x = g.get("x");
  const ParameterGroup groups[] = {g};
  const auto grads = backward(sum(mul(x, x)), groups);
  EXPECT_EQ(grads.at(GroupId::Theta1).values, (std::vector<double>{2, 4, 6}));
}

TEST(Backward, ConstantLossGivesZeros) {
  ParameterGroup a(GroupId::Theta1), b(GroupId::Theta2);
  a.add("x", Tensor::parameter({2}, {1, 2}));
  b.add("y", Tensor::parameter({1, 3}, {1, 2, 3}));
  const ParameterGroup groups[] = {a, b};
  const auto grads = backward(Tensor::scalar(5.0), groups);
  EXPECT_EQ(grads.at(GroupId::Theta1).values, (std::vector<double>{0, 0}));
  EXPECT_EQ(grads.at(GroupId::Theta2).values, (std::vector<double>{0, 0, 0}));
}

TEST(Backward, SoftmaxCrossEntropyMatchesFiniteDiff) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ParameterGroup g(GroupId::Theta1);
    g.add("W", rand_param(rng, {4, 3}));
    const Tensor x = rand_const(rng, {5, 4});
    const std::vector<int> y{0, 2, 1, 1, 0};
    auto build = [&](const ParameterGroup& p) { return cross_entropy(softmax(matmul(x, p.get("W")), 1), y); };
    EXPECT_LE(fd_check(build, g), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, RejectsNonScalarAndDuplicateGroups) {
  ParameterGroup g(GroupId::Theta1);
  g.add("x", Tensor::parameter({2}, {1, 2}));
  const ParameterGroup one[] = {g};
  EXPECT_THROW(backward(g.get("x"), one), std::invalid_argument);
  const ParameterGroup dup[] = {g, g};
  EXPECT_THROW(backward(sum(g.get("x")), dup), std::invalid_argument);
}

TEST(Backward, NonDifferentiableOpThrows) {
  ParameterGroup g(GroupId::Theta1);
  g.add("x", Tensor::parameter({3}, {-1, 0.5, 2}));
  const ParameterGroup groups[] = {g};
  const Tensor h = heaviside(g.get("x"));
  EXPECT_EQ(std::vector<double>(h.data().begin(), h.data().end()), (std::vector<double>{0, 1, 1}));
  EXPECT_THROW(backward(sum(h), groups), NonDifferentiableError);
}

TEST(Backward, NonFiniteForwardThrows) {
  const Tensor big = Tensor::parameter({1}, {1e308});
  EXPECT_THROW(scale(big, 10.0), NumericError);
}

TEST(FiniteDiff, Quadratic) {
  ParameterGroup g(GroupId::Theta1);
  g.add("t", Tensor::parameter({1}, {3.0}));
  const auto fd = finite_diff(
      [](const ParameterGroup& p) {
        const double t = p.get("t").item();
        return t * t;
      },
      g, 1e-5);
  EXPECT_NEAR(fd.values[0], 6.0, 1e-6);
}

TEST(FiniteDiff, ConstantIsZero) {
  ParameterGroup g(GroupId::Theta1);
  g.add("t", Tensor::parameter({4}, {1, 2, 3, 4}));
  const auto fd = finite_diff([](const ParameterGroup&) { return 7.0; }, g, 1e-5);
  EXPECT_EQ(fd.values, (std::vector<double>(4, 0.0)));
}

TEST(FiniteDiff, RejectsBadStep) {
  ParameterGroup g(GroupId::Theta1);
  g.add("t", Tensor::parameter({1}, {1}));
  EXPECT_THROW(finite_diff([](const ParameterGroup&) { return 0.0; }, g, 0.0), std::invalid_argument);
}

TEST(FiniteDiff, AttentionReadoutDim8) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    ParameterGroup g(GroupId::Theta1);
    g.add("wq", rand_param(rng, {8, 8}));
    g.add("wk", rand_param(rng, {8, 8}));
    const Tensor x = rand_const(rng, {3, 8});
    auto build = [&](const ParameterGroup& p) {
      const Tensor s = batched_scores(matmul(x, p.get("wq")), matmul(x, p.get("wk")), 1);
      return readout(batched_mix(softmax(s, 1), x, 1), seed);
    };
    EXPECT_LE(fd_check(build, g), 1e-4);
  }
}

TEST(Softmax, Values) {
  auto vals = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  const auto u = vals(softmax(Tensor::constant({3}, {0, 0, 0}), 0));
  for (double v : u) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  const auto big = vals(softmax(Tensor::constant({2}, {1000, 0}), 0));
  EXPECT_DOUBLE_EQ(big[0], 1.0);
  EXPECT_DOUBLE_EQ(big[1], 0.0);
  const auto s = vals(softmax(Tensor::constant({3}, {1, 2, 3}), 0));
  // exp(k)/sum evaluated independently
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(s[0], 0.09003, 1e-5);
  EXPECT_NEAR(s[1], 0.24473, 1e-5);
  EXPECT_NEAR(s[2], 0.66524, 1e-5);
}

TEST(Softmax, AxisZeroOfMatrixNormalisesColumns) {
  const Tensor p = softmax(Tensor::constant({2, 2}, {0, 1, 0, 3}), 0);
  EXPECT_DOUBLE_EQ(p.at(0, 0) + p.at(1, 0), 1.0);
  EXPECT_NEAR(p.at(0, 1) + p.at(1, 1), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(p.at(0, 0), 0.5);
}

TEST(CrossEntropy, KnownValues) {
  const std::vector<int> y{0, 1};
  EXPECT_NEAR(cross_entropy(Tensor::constant({2, 2}, {0, 0, 0, 0}), y).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::constant({2, 2}, {50, -50, -50, 50}), y).item(), 0.0, 1e-12);
}

// ---- per-op finite-difference property test ---------------------------------

namespace {

struct OpCase {
  std::string name;
  std::function<Tensor(const ParameterGroup&, std::uint64_t)> build;
  std::function<ParameterGroup(Rng&)> params;
};

ParameterGroup two(Rng& rng, Shape a, Shape b) {
  ParameterGroup g(GroupId::Theta1);
  g.add("a", rand_param(rng, std::move(a)));
  g.add("b", rand_param(rng, std::move(b)));
  return g;
}

ParameterGroup one(Rng& rng, Shape a) {
  ParameterGroup g(GroupId::Theta1);
  g.add("a", rand_param(rng, std::move(a)));
  return g;
}

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cs;
  auto A = [](const ParameterGroup& p) { return p.get("a"); };
  auto B = [](const ParameterGroup& p) { return p.get("b"); };
  cs.push_back({"matmul", [=](auto& p, auto s) { return readout(matmul(A(p), B(p)), s); },
                [](Rng& r) { return two(r, {4, 5}, {5, 3}); }});
  cs.push_back({"transpose", [=](auto& p, auto s) { return readout(transpose(A(p)), s); },
                [](Rng& r) { return one(r, {3, 6}); }});
  cs.push_back({"add", [=](auto& p, auto s) { return readout(add(A(p), B(p)), s); },
                [](Rng& r) { return two(r, {3, 4}, {3, 4}); }});
  cs.push_back({"sub", [=](auto& p, auto s) { return readout(sub(A(p), B(p)), s); },
                [](Rng& r) { return two(r, {3, 4}, {3, 4}); }});
  cs.push_back({"mul", [=](auto& p, auto s) { return readout(mul(A(p), B(p)), s); },
                [](Rng& r) { return two(r, {3, 4}, {3, 4}); }});
  cs.push_back({"scale", [=](auto& p, auto s) { return readout(scale(A(p), -1.7), s); },
                [](Rng& r) { return one(r, {2, 5}); }});
  cs.push_back({"add_row", [=](auto& p, auto s) { return readout(add_row(A(p), B(p)), s); },
                [](Rng& r) { return two(r, {4, 3}, {1, 3}); }});
  cs.push_back({"tanh", [=](auto& p, auto s) { return readout(tpareto::tanh(A(p)), s); },
                [](Rng& r) { return one(r, {4, 4}); }});
  cs.push_back({"softmax_rows", [=](auto& p, auto s) { return readout(softmax(A(p), 1), s); },
                [](Rng& r) { return one(r, {3, 5}); }});
  cs.push_back({"softmax_cols", [=](auto& p, auto s) { return readout(softmax(A(p), 0), s); },
                [](Rng& r) { return one(r, {4, 3}); }});
  cs.push_back({"sum", [=](auto& p, auto) { return scale(sum(mul(A(p), A(p))), 0.5); },
                [](Rng& r) { return one(r, {8, 8}); }});
  cs.push_back({"mean_rows", [=](auto& p, auto s) { return readout(mean_rows(A(p)), s); },
                [](Rng& r) { return one(r, {5, 3}); }});
  cs.push_back({"segment_mean", [=](auto& p, auto s) { return readout(segment_mean(A(p), 3), s); },
                [](Rng& r) { return one(r, {6, 4}); }});
  cs.push_back({"row_sum", [=](auto& p, auto s) { return readout(row_sum(A(p)), s); },
                [](Rng& r) { return one(r, {4, 5}); }});
  cs.push_back({"scale_segments", [=](auto& p, auto s) { return readout(scale_segments(A(p), B(p), 2), s); },
                [](Rng& r) { return two(r, {6, 3}, {3, 1}); }});
  cs.push_back({"concat_cols",
                [=](auto& p, auto s) {
                  const Tensor parts[] = {A(p), B(p)};
                  return readout(concat_cols(parts), s);
                },
                [](Rng& r) { return two(r, {3, 2}, {3, 4}); }});
  cs.push_back({"concat_rows",
                [=](auto& p, auto s) {
                  const Tensor parts[] = {A(p), B(p)};
                  return readout(concat_rows(parts), s);
                },
                [](Rng& r) { return two(r, {2, 3}, {4, 3}); }});
  cs.push_back({"slice_cols", [=](auto& p, auto s) { return readout(slice_cols(A(p), 1, 4), s); },
                [](Rng& r) { return one(r, {3, 6}); }});
  cs.push_back({"reshape", [=](auto& p, auto s) { return readout(tpareto::tanh(reshape(A(p), {3, 4})), s); },
                [](Rng& r) { return one(r, {6, 2}); }});
  cs.push_back({"batched_scores", [=](auto& p, auto s) { return readout(batched_scores(A(p), B(p), 2), s); },
                [](Rng& r) { return two(r, {4, 3}, {6, 3}); }});
  cs.push_back({"batched_mix", [=](auto& p, auto s) { return readout(batched_mix(A(p), B(p), 2), s); },
                [](Rng& r) { return two(r, {4, 3}, {6, 5}); }});
  cs.push_back({"cross_entropy",
                [=](auto& p, auto) {
                  const std::vector<int> y{1, 0, 2, 1};
                  return cross_entropy(A(p), y);
                },
                [](Rng& r) { return one(r, {4, 3}); }});
  return cs;
}

}  // namespace

TEST(BackwardProperty, EveryOpMatchesFiniteDiffOver100Seeds) {
  for (const auto& c : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(mix64(seed, fnv1a(c.name)));
      const ParameterGroup g = c.params(rng);
      worst = std::max(worst, fd_check([&](const ParameterGroup& p) { return c.build(p, seed); }, g));
    }
    EXPECT_LE(worst, 1e-4) << c.name;
  }
}

TEST(BackwardProperty, Linearity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ParameterGroup g(GroupId::Theta1);
    g.add("W", rand_param(rng, {4, 4}));
    const Tensor x = rand_const(rng, {3, 4});
    const ParameterGroup groups[] = {g};
    const Tensor h = tpareto::tanh(matmul(x, g.get("W")));
    const Tensor l1 = readout(h, 1), l2 = readout(softmax(h, 1), 2);
    const auto ga = backward(l1, groups).at(GroupId::Theta1).values;
    const auto gb = backward(l2, groups).at(GroupId::Theta1).values;
    const auto gs = backward(add(l1, l2), groups).at(GroupId::Theta1).values;
    for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_NEAR(gs[i], ga[i] + gb[i], 1e-10);
  }
}

TEST(BackwardProperty, ForwardIsBitDeterministic) {
  auto run = [] {
    Rng rng(42);
    const Tensor a = rand_param(rng, {5, 6});
    const Tensor b = rand_param(rng, {6, 4});
    const Tensor y = softmax(tpareto::tanh(matmul(a, b)), 1);
    return std::vector<double>(y.data().begin(), y.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, UntouchedGroupIsZero) {
  Rng rng(3);
  ParameterGroup a = one(rng, {2, 2});
  ParameterGroup b(GroupId::Theta2);
  b.add("w", rand_param(rng, {3}));
  const ParameterGroup groups[] = {a, b};
  const auto grads = backward(sum(a.get("a")), groups);
  EXPECT_EQ(grads.at(GroupId::Theta2).values, (std::vector<double>(3, 0.0)));
  EXPECT_EQ(grads.at(GroupId::Theta1).values, (std::vector<double>(4, 1.0)));
}

TEST(ParameterGroup, FlattenFollowsDeclarationOrder) {
  ParameterGroup g(GroupId::Theta1);
  g.add("z", Tensor::parameter({1, 2}, {1, 2}));
  g.add("a", Tensor::parameter({2, 1}, {3, 4}));
  EXPECT_EQ(g.flatten(), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(g.dim(), 4u);
  const auto h = g.with_values(std::vector<double>{5, 6, 7, 8});
  EXPECT_EQ(h.flatten(), (std::vector<double>{5, 6, 7, 8}));
  EXPECT_EQ(h.get("a").shape(), (Shape{2, 1}));
  EXPECT_THROW(g.get("missing"), std::out_of_range);
}

TEST(NoGrad, GuardStopsTaping) {
  const Tensor p = Tensor::parameter({2}, {1, 2});
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(mul(p, p).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(mul(p, p).requires_grad());
}
