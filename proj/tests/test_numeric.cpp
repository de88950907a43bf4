#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "copyhan/errors.hpp"
#include "copyhan/grad_check.hpp"
#include "copyhan/ops.hpp"

using namespace copyhan;

namespace {

Tensor random_param(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

// Weighted sum so every output entry gets a distinct upstream gradient.
Tensor probe(const Tensor& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return sum(mul(y, Tensor::from_data(y.shape(), w)));
}

void expect_gradients_match(const std::function<Tensor()>& f, const std::vector<NamedTensor>& params) {
  const auto report = grad_check(f, params, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << "worst " << report.worst_param << "[" << report.worst_index
                             << "] analytic=" << report.worst_analytic << " numeric=" << report.worst_numeric
                             << " rel=" << report.max_rel_error;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto y = matmul(eye, x);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, HandExample) {
  auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  auto y = matmul(a, b);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, ZeroAnnihilates) {
  auto z = Tensor::zeros({2, 2});
  auto x = Tensor::from_data({2, 2}, {1.5, -2, 3, 4});
  const auto y = matmul(z, x);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[2x2]"), std::string::npos);
  }
}

TEST(Matmul, IdentityAssociativity) {
  std::mt19937_64 rng(3);
  auto a = random_param({3, 4}, rng);
  auto b = random_param({4, 2}, rng);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  auto id = Tensor::from_data({4, 4}, eye);
  auto lhs = matmul(matmul(a, id), b);
  auto rhs = matmul(a, matmul(id, b));
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.data()[i], rhs.data()[i], 1e-12);
}

TEST(Softmax, SymmetricInput) {
  auto y = softmax_lastdim(Tensor::row({0, 0}));
  EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 0.5);
}

TEST(Softmax, HandComputedValues) {
  // e^k / (e + e^2 + e^3) for k = 1, 2, 3.
  auto y = softmax_lastdim(Tensor::row({1, 2, 3}));
  EXPECT_NEAR(y.data()[0], 0.09003, 1e-5);
  EXPECT_NEAR(y.data()[1], 0.24473, 1e-5);
  EXPECT_NEAR(y.data()[2], 0.66524, 1e-5);
}

TEST(Softmax, LargeLogitsAreStable) {
  auto y = softmax_lastdim(Tensor::row({1000, 1000}));
  EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 0.5);
}

TEST(Softmax, RowsAreDistributions) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_param({4, 7}, rng, -20, 20);
    auto y = softmax_lastdim(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GE(y.at(r, c), 0.0);
        s += y.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, FullyMaskedRowIsContractError) {
  auto x = masked_fill(Tensor::row({1, 2}), {true, true}, -INFINITY);
  EXPECT_THROW(softmax_lastdim(x), ContractError);
}

TEST(Sigmoid, CenterAndSaturation) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  const double low = sigmoid(Tensor::scalar(-50.0)).item();
  EXPECT_GT(low, 0.0);
  EXPECT_LT(low, 1e-20);
}

TEST(Sigmoid, SymmetryIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng);
    EXPECT_NEAR(sigmoid(Tensor::scalar(x)).item() + sigmoid(Tensor::scalar(-x)).item(), 1.0, 1e-15);
  }
}

TEST(Backward, SumGivesOnes) {
  auto w = Tensor::parameter({3}, {0.5, -1, 2});
  sum(w).backward();
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceInput) {
  auto w = Tensor::parameter({2}, {1, 2});
  sum(mul(w, w)).backward();
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 4.0);
}

TEST(Backward, ReusedLeafAccumulates) {
  auto w = Tensor::parameter({1, 2}, {1, 2});
  auto loss = add(sum(scale(w, 3.0)), sum(scale(w, 4.0)));
  loss.backward();
  EXPECT_EQ(w.grad()[0], 7.0);
  EXPECT_EQ(w.grad()[1], 7.0);
}

TEST(Backward, NonScalarIsContractError) {
  auto w = Tensor::parameter({1, 2}, {1, 2});
  EXPECT_THROW(scale(w, 2.0).backward(), ContractError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  auto w = Tensor::parameter({1, 2}, {1, 2});
  NoGradGuard guard;
  auto y = scale(w, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, QuadraticIsNearlyExact) {
  auto w = Tensor::parameter({1, 3}, {0.3, -1.2, 2.0});
  auto f = [&] { return sum(mul(mul(w, w), Tensor::row({1.0, 2.0, 3.0}))); };
  const auto report = grad_check(f, {{"w", w}}, 1e-5, 1e-8);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  auto w = Tensor::parameter({1, 2}, {1, 2});
  auto f = [&] { return sum(Tensor::row({3.0, 4.0})); };
  const auto report = grad_check(f, {{"w", w}}, 1e-5, 1e-8);
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsNondeterminism) {
  auto w = Tensor::parameter({1, 2}, {1, 2});
  double drift = 0.0;
  auto f = [&] {
    drift += 1.0;
    return sum(affine(w, 1.0, drift));
  };
  EXPECT_THROW(grad_check(f, {{"w", w}}, 1e-5, 1e-4), ContractError);
}

TEST(GradCheck, RejectsStepOutsideRange) {
  auto w = Tensor::parameter({1}, {1});
  EXPECT_THROW(grad_check([&] { return sum(w); }, {{"w", w}}, 1e-2, 1e-4), ContractError);
}

// Property: every primitive's registered gradient agrees with central differences.
TEST(OpGradients, AllPrimitivesMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_param({3, 4}, rng);
    auto b = random_param({4, 2}, rng);
    auto c = random_param({3, 4}, rng);
    auto bias = random_param({1, 4}, rng);
    auto col = random_param({3, 1}, rng, 0.5, 1.5);
    auto pos = random_param({3, 4}, rng, 0.2, 2.0);
    auto gain = random_param({1, 4}, rng, 0.5, 1.5);
    auto table = random_param({5, 4}, rng);
    const std::vector<std::int32_t> ids{3, 0, 3};

    expect_gradients_match([&] { return probe(matmul(a, b)); }, {{"a", a}, {"b", b}});
    expect_gradients_match([&] { return probe(transpose(a)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(add(a, c)); }, {{"a", a}, {"c", c}});
    expect_gradients_match([&] { return probe(sub(a, c)); }, {{"a", a}, {"c", c}});
    expect_gradients_match([&] { return probe(mul(a, c)); }, {{"a", a}, {"c", c}});
    expect_gradients_match([&] { return probe(affine(a, -1.7, 0.4)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(add_row_bias(a, bias)); }, {{"a", a}, {"bias", bias}});
    expect_gradients_match([&] { return probe(scale_rows(a, col)); }, {{"a", a}, {"col", col}});
    expect_gradients_match([&] { return probe(rowwise_dot(a, c)); }, {{"a", a}, {"c", c}});
    expect_gradients_match([&] { return probe(normalize_rows(pos)); }, {{"pos", pos}});
    expect_gradients_match([&] { return probe(mean(a, 0)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(mean(a, 1)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(concat_cols({a, c, col})); }, {{"a", a}, {"c", c}, {"col", col}});
    expect_gradients_match([&] { return probe(concat_rows({a, c})); }, {{"a", a}, {"c", c}});
    expect_gradients_match([&] { return probe(slice_cols(a, 1, 2)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(slice_rows(a, 1, 2)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(relu(a)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(sigmoid(a)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(log_clamped(pos, 1e-12)); }, {{"pos", pos}});
    expect_gradients_match([&] { return probe(softmax_lastdim(a)); }, {{"a", a}});
    expect_gradients_match([&] { return probe(embedding(table, ids)); }, {{"table", table}});
    expect_gradients_match([&] { return probe(layer_norm(a, gain, bias)); },
                           {{"a", a}, {"gain", gain}, {"bias", bias}});
    std::vector<bool> mask{true, false, false, true, false, false, false, false, false, true, false, false};
    expect_gradients_match([&] { return probe(softmax_lastdim(masked_fill(a, mask, -INFINITY))); }, {{"a", a}});
  }
}

TEST(Dropout, DisabledAtEvaluation) {
  std::mt19937_64 rng(1);
  auto x = Tensor::row({1, 2, 3});
  auto y = dropout(x, 0.5, false, rng);
  EXPECT_EQ(y.id(), x.id());
}

TEST(Dropout, InvertedScalingAndSeededMask) {
  std::mt19937_64 r1(9), r2(9);
  auto x = Tensor::filled({1, 200}, 1.0);
  auto y1 = dropout(x, 0.25, true, r1);
  auto y2 = dropout(x, 0.25, true, r2);
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_EQ(y1.data()[i], y2.data()[i]);
    EXPECT_TRUE(y1.data()[i] == 0.0 || std::abs(y1.data()[i] - 1.0 / 0.75) < 1e-15);
  }
}

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::zeros({0, 2}), DimensionError);
  auto w = Tensor::parameter({2, 3}, std::vector<double>(6, 1.0));
  sum(w).backward();
  EXPECT_EQ(w.grad().size(), w.numel());
}
