#include <gtest/gtest.h>

#include <cmath>

#include "avdf/optimizer.hpp"

using namespace avdf;

namespace {

// Reference Adam on one scalar.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Adam, MatchesReferenceOnQuadratic) {
  ParameterStore store;
  Parameter& p = store.add("x", Tensor::vector({3.0, -2.0}));
  Adam adam(AdamConfig{0.1});
  ScalarAdam r0{0.1}, r1{0.1};
  double x0 = 3.0, x1 = -2.0;
  for (int i = 0; i < 50; ++i) {
    // f = x0^2 + 3 x1^2
    p.grad = Tensor::vector({2 * p.value[0], 6 * p.value[1]});
    adam.step(store);
    x0 = r0.step(x0, 2 * x0);
    x1 = r1.step(x1, 6 * x1);
    EXPECT_NEAR(p.value[0], x0, 1e-14);
    EXPECT_NEAR(p.value[1], x1, 1e-14);
  }
  EXPECT_EQ(adam.step_count(), 50u);
  EXPECT_LT(std::abs(p.value[0]), 0.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore store;
  Parameter& p = store.add("x", Tensor::vector({1.0, 1.0}));
  p.grad = Tensor::vector({0.5, -40.0});
  Adam(AdamConfig{0.01}).step(store);
  EXPECT_NEAR(p.value[0], 0.99, 1e-9);
  EXPECT_NEAR(p.value[1], 1.01, 1e-9);
}

TEST(Adam, FrozenParametersDoNotMove) {
  ParameterStore store;
  Parameter& a = store.add("a", Tensor::vector({1.0}));
  Parameter& b = store.add("b", Tensor::vector({1.0}));
  b.trainable = false;
  a.grad[0] = b.grad[0] = 1.0;
  Adam adam;
  adam.step(store);
  EXPECT_LT(a.value[0], 1.0);
  EXPECT_EQ(b.value[0], 1.0);
}

TEST(Adam, NonFiniteGradientLeavesEverythingUntouched) {
  ParameterStore s1, s2;
  Parameter& a = s1.add("a", Tensor::vector({1.0}));
  Parameter& b = s2.add("b", Tensor::vector({1.0}));
  a.grad[0] = 1.0;
  b.grad[0] = std::nan("");
  Adam adam;
  EXPECT_THROW(adam.step({&s1, &s2}), NumericalError);
  EXPECT_EQ(a.value[0], 1.0);
  EXPECT_EQ(adam.step_count(), 0u);
  b.grad = Tensor(Shape{2});
  EXPECT_THROW(adam.step({&s1, &s2}), ShapeError);
}
