#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shsnet/autodiff.hpp"

using namespace shsnet;
using namespace shsnet::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Per-operator tolerance.
constexpr double kOpTol = 1e-4;

}  // namespace

TEST(Ops, SoftmaxUniform) {
  Graph g;
  Var x = g.constant({3}, {0.0, 0.0, 0.0});
  Var y = softmax(x, 0);
  for (double v : y.value()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Ops, MaxReduceRecordsArgmax) {
  Graph g;
  Var y = max_reduce(g.constant({3}, {1.0, 5.0, 2.0}), 0);
  EXPECT_EQ(y.shape(), Shape{});
  EXPECT_EQ(y.item(), 5.0);
  EXPECT_EQ(g.node(y.id()).argmax, std::vector<std::size_t>{1});
}

TEST(Ops, MaxReduceTieGoesToLowestIndex) {
  Graph g;
  Var x = g.param(Tensor({4}, {2.0, 7.0, 7.0, 1.0}));
  Var y = max_reduce(x, 0);
  g.backward(y);
  EXPECT_EQ(g.grad(x).data, (ad::Buffer{0, 1, 0, 0}));
}

TEST(Ops, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  Graph g;
  Var c = matmul(g.constant(a), g.constant(b));
  ASSERT_EQ(c.shape(), (Shape{4, 2}));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 3; ++k) ref += a[i * 3 + k] * b[k * 2 + j];
      EXPECT_NEAR(c.value()[i * 2 + j], ref, 1e-12);
    }
}

TEST(Ops, BatchedMatmulMatchesTripleLoop) {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor({2, 1, 5}, rng);
  Tensor b = random_tensor({2, 5, 3}, rng);
  Graph g;
  Var c = matmul(g.constant(a), g.constant(b));
  ASSERT_EQ(c.shape(), (Shape{2, 1, 3}));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t j = 0; j < 3; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 5; ++k) ref += a[t * 5 + k] * b[t * 15 + k * 3 + j];
      EXPECT_NEAR(c.value()[t * 3 + j], ref, 1e-12);
    }
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor::zeros({2, 3}));
  Var b = g.constant(Tensor::zeros({4, 2}));
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
    EXPECT_NE(msg.find("(4, 2)"), std::string::npos);
  }
  EXPECT_THROW(add(a, b), ShapeMismatch);
  EXPECT_THROW(concat(a, b, 0), ShapeMismatch);
  EXPECT_THROW(softmax(a, 2), ShapeMismatch);
  EXPECT_THROW(cross(b, b), ShapeMismatch);
}

TEST(Ops, BroadcastingAddAndMul) {
  Graph g;
  Var a = g.constant({2, 3}, {1, 2, 3, 4, 5, 6});
  Var bias = g.constant({3}, {10, 20, 30});
  Var col = g.constant({2, 1}, {2, 3});
  auto s = add(a, bias).value();
  EXPECT_EQ(std::vector<double>(s.begin(), s.end()), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  auto m = mul(a, col).value();
  EXPECT_EQ(std::vector<double>(m.begin(), m.end()), (std::vector<double>{2, 4, 6, 12, 15, 18}));
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  Var x = g.param(Tensor::filled({2, 3, 4}, 0.5));
  g.backward(sum_all(x));
  for (double v : g.grad(x).data) EXPECT_EQ(v, 1.0);
}

TEST(Backward, ReluGate) {
  Graph g;
  Var x = g.param(Tensor({2}, {-1.0, 2.0}));
  g.backward(sum_all(relu(x)));
  EXPECT_EQ(g.grad(x).data, (ad::Buffer{0.0, 1.0}));
}

TEST(Backward, RequiresScalarLoss) {
  Graph g;
  Var x = g.param(Tensor::zeros({2}));
  EXPECT_THROW(g.backward(relu(x)), NotScalar);
}

TEST(Backward, DuplicatedInputsAccumulate) {
  Graph g;
  Var x = g.param(Tensor({3}, {1.0, -2.0, 0.5}));
  g.backward(sum_all(add(x, x)));
  for (double v : g.grad(x).data) EXPECT_EQ(v, 2.0);
  Graph h;
  Var y = h.param(Tensor({2}, {3.0, -1.0}));
  h.backward(sum_all(mul(y, y)));
  EXPECT_EQ(h.grad(y).data, (ad::Buffer{6.0, -2.0}));
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(Tensor::filled({2}, 1.0));
  Var p = g.param(Tensor::filled({2}, 2.0));
  g.backward(sum_all(mul(c, p)));
  EXPECT_TRUE(g.node(c.id()).grad.empty());
  EXPECT_EQ(g.grad(p).data, (ad::Buffer{1.0, 1.0}));
}

TEST(Graph, InputsPrecedeConsumers) {
  Graph g;
  Var x = g.param(Tensor::filled({3}, 1.0));
  Var y = sum_all(square(relu(x)));
  for (std::size_t id = 0; id < g.size(); ++id)
    for (std::size_t in : g.node(id).inputs) EXPECT_LT(in, id);
  EXPECT_EQ(y.id(), g.size() - 1);
}

TEST(GradCheck, SquareOfScalar) {
  auto f = [](Graph&, const std::vector<Var>& p) { return sum_all(square(p[0])); };
  auto report = grad_check(f, {Tensor::scalar(3.0)});
  EXPECT_NEAR(report.analytic, 6.0, 1e-12);
  EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST(GradCheck, SigmoidOfMatmul) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({5, 4}, rng);
  auto f = [x](Graph& g, const std::vector<Var>& p) { return sum_all(sigmoid(matmul(g.constant(x), p[0]))); };
  EXPECT_LT(grad_check(f, {random_tensor({4, 3}, rng)}).max_relative_error, 1e-6);
}

TEST(GradCheck, FlagsMaxTie) {
  auto f = [](Graph&, const std::vector<Var>& p) { return max_reduce(p[0], 0); };
  auto report = grad_check(f, {Tensor({2}, {1.0, 1.0})});
  EXPECT_GT(report.max_relative_error, 0.1);
}

// Each operator, individually, against central differences.
TEST(GradCheck, EveryOperator) {
  std::mt19937_64 rng(5);
  const Tensor w = random_tensor({2, 3, 4}, rng);  // fixed projection so outputs mix
  auto project = [w](Graph& g, Var v) { return sum_all(mul(v, g.constant(w))); };
  struct Case {
    const char* name;
    std::vector<Tensor> params;
    LossBuilder f;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", {random_tensor({2, 3, 5}, rng), random_tensor({5, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, matmul(p[0], p[1])); }});
  cases.push_back({"add", {random_tensor({2, 3, 4}, rng), random_tensor({4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, add(p[0], p[1])); }});
  cases.push_back({"sub", {random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 1}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, sub(p[0], p[1])); }});
  cases.push_back({"mul", {random_tensor({2, 3, 4}, rng), random_tensor({2, 1, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, mul(p[0], p[1])); }});
  cases.push_back({"div", {random_tensor({2, 3, 4}, rng), random_tensor({3, 1}, rng, 0.5, 2.0)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, div(p[0], p[1])); }});
  cases.push_back({"concat", {random_tensor({2, 3, 1}, rng), random_tensor({2, 3, 3}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, concat(p[0], p[1], 2)); }});
  cases.push_back({"relu", {random_tensor({2, 3, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, relu(p[0])); }});
  cases.push_back({"sigmoid", {random_tensor({2, 3, 4}, rng, -3, 3)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, sigmoid(p[0])); }});
  cases.push_back({"softplus", {random_tensor({2, 3, 4}, rng, -3, 3)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, softplus(p[0])); }});
  cases.push_back({"softmax", {random_tensor({2, 3, 4}, rng, -2, 2)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, softmax(p[0], 1)); }});
  cases.push_back({"max_reduce", {random_tensor({2, 5, 3, 4}, rng)}, [&](Graph& g, const std::vector<Var>& p) {
                     return project(g, max_reduce(p[0], 1));
                   }});
  cases.push_back({"mean_reduce", {random_tensor({2, 3, 6, 4}, rng)}, [&](Graph& g, const std::vector<Var>& p) {
                     return project(g, mean_reduce(p[0], 2));
                   }});
  cases.push_back({"sum_reduce", {random_tensor({2, 3, 4, 2}, rng)}, [&](Graph& g, const std::vector<Var>& p) {
                     return project(g, sum_reduce(p[0], 3));
                   }});
  cases.push_back({"square", {random_tensor({2, 3, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, square(p[0])); }});
  cases.push_back({"sqrt", {random_tensor({2, 3, 4}, rng, 0.2, 2.0)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, sqrt(p[0])); }});
  cases.push_back({"slice", {random_tensor({2, 5, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, slice(p[0], 1, 1, 4)); }});
  cases.push_back({"reshape", {random_tensor({6, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, reshape(p[0], {2, 3, 4})); }});
  cases.push_back({"broadcast_to", {random_tensor({2, 1, 4}, rng)}, [&](Graph& g, const std::vector<Var>& p) {
                     return project(g, broadcast_to(p[0], {2, 3, 4}));
                   }});
  cases.push_back({"scale", {random_tensor({2, 3, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, scale(p[0], -1.7)); }});
  cases.push_back({"cross", {random_tensor({2, 4, 3}, rng), random_tensor({2, 4, 3}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, reshape(cross(p[0], p[1]), {2, 3, 4})); }});
  cases.push_back({"normalize", {random_tensor({2, 4, 3}, rng)}, [&](Graph& g, const std::vector<Var>& p) {
                     return project(g, reshape(normalize(p[0]), {2, 3, 4}));
                   }});
  cases.push_back({"batched_matmul", {random_tensor({2, 3, 5}, rng), random_tensor({2, 5, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, matmul(p[0], p[1])); }});
  cases.push_back({"linear", {random_tensor({2, 3, 5}, rng), random_tensor({5, 4}, rng), random_tensor({4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, linear(p[0], p[1], &p[2], true)); }});
  cases.push_back({"linear_group_bias",
                   {random_tensor({2, 3, 5}, rng), random_tensor({5, 4}, rng), random_tensor({2, 1, 4}, rng)},
                   [&](Graph& g, const std::vector<Var>& p) { return project(g, linear(p[0], p[1], &p[2], false)); }});
  cases.push_back({"pooled_linear",
                   {random_tensor({2, 6, 5}, rng), random_tensor({5, 12}, rng), random_tensor({12}, rng),
                    random_tensor({2, 6, 1}, rng, 0.2, 1.0)},
                   [&](Graph& g, const std::vector<Var>& p) {
                     return project(g, reshape(pooled_linear(p[0], p[1], p[2], &p[3]), {2, 3, 4}));
                   }});
  for (const auto& c : cases) {
    EXPECT_LT(grad_check(c.f, c.params).max_relative_error, kOpTol) << c.name;
  }
}

// A three-layer MLP touching every operator on the way to a scalar loss.
TEST(GradCheck, ThreeLayerMlpAllOps) {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({2, 6, 3}, rng);
  const Tensor target = random_tensor({2, 3}, rng);
  auto f = [&](Graph& g, const std::vector<Var>& p) {
    Var in = g.constant(x);
    Var h1 = relu(add(matmul(in, p[0]), p[1]));                   // (2,6,8)
    Var h2 = sigmoid(add(matmul(h1, p[2]), p[3]));                // (2,6,8)
    Var fused = concat(h1, h2, 2);                                // (2,6,16)
    Var attn = softmax(matmul(fused, p[4]), 1);                   // (2,6,1)
    Var pooled = max_reduce(mul(fused, attn), 1);                 // (2,16)
    Var avg = mean_reduce(fused, 1);                              // (2,16)
    Var out = matmul(add(pooled, avg), p[5]);                     // (2,3)
    Var n = normalize(out);
    Var sinl = sqrt(sum_reduce(square(cross(n, g.constant(target))), 1));
    return add(mean_all(sinl), scale(sum_all(square(sub(out, g.constant(target)))), 0.1));
  };
  std::vector<Tensor> params{random_tensor({3, 8}, rng), random_tensor({8}, rng),  random_tensor({8, 8}, rng),
                             random_tensor({8}, rng),    random_tensor({16, 1}, rng), random_tensor({16, 3}, rng)};
  EXPECT_LT(grad_check(f, params).max_relative_error, kOpTol);
}

TEST(Ops, LinearMatchesComposition) {
  std::mt19937_64 rng(13);
  Graph g;
  Var x = g.constant(random_tensor({3, 4, 5}, rng));
  Var w = g.constant(random_tensor({5, 6}, rng));
  Var b = g.constant(random_tensor({6}, rng));
  const auto fused = linear(x, w, &b, true).value();
  const auto plain = relu(add(matmul(x, w), b)).value();
  ASSERT_EQ(fused.size(), plain.size());
  for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused[i], plain[i], 1e-12);
}

TEST(Ops, PooledLinearMatchesComposition) {
  std::mt19937_64 rng(14);
  Graph g;
  Var x = g.constant(random_tensor({3, 7, 5}, rng));
  Var w = g.constant(random_tensor({5, 6}, rng));
  Var b = g.constant(random_tensor({6}, rng));
  Var s = g.constant(random_tensor({3, 7, 1}, rng, 0.1, 1.0));
  const auto fused = pooled_linear(x, w, b, &s).value();
  const auto plain = max_reduce(relu(add(matmul(mul(x, s), w), b)), 1).value();
  ASSERT_EQ(fused.size(), plain.size());
  for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused[i], plain[i], 1e-12);
}

TEST(Ops, FastProductsStayCloseToExact) {
  std::mt19937_64 rng(15);
  const Tensor x = random_tensor({4, 8, 16}, rng);
  const Tensor w = random_tensor({16, 8}, rng, -0.3, 0.3);
  auto run = [&](MatmulPrecision p) {
    Graph g;
    g.set_matmul_precision(p);
    Var wv = g.param(w);
    Var loss = sum_all(square(matmul(g.constant(x), wv)));
    g.backward(loss);
    return std::make_pair(loss.item(), g.grad(wv));
  };
  const auto [le, ge] = run(MatmulPrecision::exact);
  const auto [lf, gf] = run(MatmulPrecision::fast);
  EXPECT_NEAR(lf, le, 1e-5 * std::abs(le));
  for (std::size_t i = 0; i < ge.size(); ++i) EXPECT_NEAR(gf[i], ge[i], 1e-4 * (1.0 + std::abs(ge[i])));
}

TEST(Ops, InnerBroadcastMatchesGeneralPath) {
  std::mt19937_64 rng(16);
  Graph g;
  const Tensor a = random_tensor({2, 3, 4}, rng);
  const Tensor b = random_tensor({2, 3, 1}, rng);
  const auto v = mul(g.constant(a), g.constant(b)).value();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        EXPECT_DOUBLE_EQ(v[(i * 3 + j) * 4 + k], a[(i * 3 + j) * 4 + k] * b[i * 3 + j]);
}

TEST(Normalize, UnitLengthProperty) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> gdist(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double mag = std::pow(10.0, -6 + 12 * (t / 100.0));
    Graph g;
    Var v = g.constant({3}, {mag * gdist(rng), mag * gdist(rng), mag * gdist(rng)});
    auto y = normalize(v).value();
    EXPECT_NEAR(std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]), 1.0, 1e-12);
  }
}

TEST(Graph, DeterministicForwardValues) {
  auto run = [] {
    std::mt19937_64 rng(77);
    Graph g;
    Var a = g.constant(random_tensor({16, 32}, rng));
    Var b = g.constant(random_tensor({32, 8}, rng));
    Var y = softmax(relu(matmul(a, b)), 0);
    return std::vector<double>(y.value().begin(), y.value().end());
  };
  EXPECT_EQ(run(), run());
}
