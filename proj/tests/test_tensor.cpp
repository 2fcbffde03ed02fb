#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cardioclr/ops.hpp"
#include "cardioclr/tape.hpp"
#include "cardioclr/tensor.hpp"

using namespace cardioclr;

TEST(Tensor, NumelMatchesShape) {
  Tensor<float> t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(Tensor<float>::scalar(3.0f).numel(), 1u);
}

TEST(Tensor, LengthMismatchIsConfigError) {
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), ConfigError);
}

TEST(Tensor, BuffersAreCacheLineAligned) {
  for (std::size_t n : {1u, 3u, 17u, 4096u}) {
    Tensor<float> t(Shape{n});
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.data()) % 64, 0u);
  }
}

TEST(Tensor, ItemRequiresSingleElement) {
  EXPECT_THROW(Tensor<float>(Shape{2}).item(), UsageError);
  EXPECT_EQ(Tensor<float>::scalar(2.5f).item(), 2.5f);
}

TEST(Tensor, CastRoundTripAndBitwiseEquality) {
  Tensor<float> a(Shape{3}, std::vector<float>{0.1f, -2.0f, 3.5f});
  EXPECT_EQ(a.cast<double>().cast<float>(), a);
  Tensor<float> b = a;
  b[1] = -2.0000002f;
  EXPECT_FALSE(a == b);
}

TEST(Tape, NonFiniteLeafIsNumericError) {
  Tape<double> tape;
  Tensor<double> bad(Shape{2}, std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(tape.leaf(bad), NumericError);
}

TEST(Tape, NonFiniteForwardResultIsNumericError) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1e308, 1e308}));
  EXPECT_THROW(ops::scale(tape, x, 10.0), NumericError);
}

TEST(Backward, SumGivesOnesGradient) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0, -2.0, 3.0}));
  tape.backward(ops::sum(tape, x));
  for (double g : tape.grad(x).values()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ZeroTimesXGivesZeroGradient) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0, -2.0, 3.0}));
  tape.backward(ops::sum(tape, ops::scale(tape, x, 0.0)));
  for (double g : tape.grad(x).values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0, 2.0}));
  auto y = ops::scale(tape, x, 2.0);
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(Backward, NonParticipatingLeafGetsNoGradient) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0, 2.0}));
  auto unused = tape.leaf(Tensor<double>::vector({5.0}));
  tape.backward(ops::sum(tape, x));
  EXPECT_FALSE(tape.has_grad(unused));
  EXPECT_THROW(tape.grad(unused), UsageError);
}

TEST(Backward, SharedInputAccumulates) {
  // loss = sum(x) + sum(2x) -> grad 3
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0, 2.0}));
  auto a = ops::sum(tape, x);
  auto b = ops::sum(tape, ops::scale(tape, x, 2.0));
  tape.backward(ops::mean(tape, {a, b}));
  for (double g : tape.grad(x).values()) EXPECT_DOUBLE_EQ(g, 1.5);
}

TEST(Backward, SecondSweepIsRejected) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0}));
  auto l = ops::sum(tape, x);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), UsageError);
}

TEST(Backward, ConstantsNeverRecordBackwardRules) {
  Tape<double> tape;
  auto c = tape.constant(Tensor<double>::vector({1.0, 2.0}));
  ops::sum(tape, ops::relu(tape, c));
  EXPECT_EQ(tape.ops_with_grad(), 0u);
}

TEST(Determinism, RepeatedForwardIsBitwiseIdentical) {
  auto run = [] {
    Tape<float> tape;
    Tensor<float> x(Shape{2, 8, 8});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = std::sin(static_cast<float>(i));
    Tensor<float> k(Shape{3, 2, 3, 3});
    for (std::size_t i = 0; i < k.numel(); ++i) k[i] = std::cos(static_cast<float>(i));
    auto y = ops::conv2d(tape, tape.constant(x), tape.constant(k), tape.constant(Tensor<float>(Shape{3})), 1, 1);
    return tape.value(y);
  };
  EXPECT_EQ(run(), run());
}
