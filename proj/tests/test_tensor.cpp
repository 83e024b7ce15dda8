#include <gtest/gtest.h>

#include <cmath>

#include "avdf/parameters.hpp"
#include "avdf/tensor.hpp"

using namespace avdf;

TEST(Tensor, ShapeAndFill) {
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  for (double v : t.values()) EXPECT_EQ(v, 1.5);
  t.at(1, 2) = 4.0;
  EXPECT_EQ(t[5], 4.0);
}

TEST(Tensor, ValueCountMustMatchShape) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::vector({1, 2}).reshaped(Shape{3}), ShapeError);
  EXPECT_THROW(Tensor::vector({1, 2}).item(), ShapeError);
  EXPECT_EQ(Tensor::scalar(3.0).item(), 3.0);
}

TEST(Tensor, ReshapeKeepsRowMajorOrder) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor r = m.reshaped(Shape{3, 2});
  EXPECT_EQ(r.at(1, 0), 3.0);
  EXPECT_EQ(r.at(2, 1), 6.0);
}

TEST(Tensor, FiniteCheck) {
  Tensor t(Shape{3});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  t[1] = INFINITY;
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, Norms) {
  const std::vector<double> a{3, 4}, b{0, 0}, c{1};
  EXPECT_DOUBLE_EQ(l2_norm(a), 5.0);
  EXPECT_DOUBLE_EQ(euclidean(a, b), 5.0);
  EXPECT_THROW(euclidean(a, c), ShapeError);
}

TEST(Parameters, StoreRejectsDuplicates) {
  ParameterStore s;
  s.add("w", Tensor(Shape{2}));
  EXPECT_THROW(s.add("w", Tensor(Shape{2})), StateError);
  EXPECT_THROW(s.get("missing"), StateError);
  EXPECT_EQ(s.get("w").grad.shape(), Shape{2});
}

TEST(Parameters, GlorotBound) {
  std::mt19937_64 rng(3);
  const Tensor t = glorot_uniform(Shape{40, 60}, 60, 40, rng);
  const double limit = std::sqrt(6.0 / 100.0);
  double lo = 1, hi = -1;
  for (double v : t.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, -limit);
  EXPECT_LE(hi, limit);
  EXPECT_LT(lo, -0.9 * limit);
  EXPECT_GT(hi, 0.9 * limit);
}

TEST(Parameters, StableHashIsFnv1a) {
  // Reference FNV-1a 64 test vectors.
  EXPECT_EQ(stable_hash(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(stable_hash("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(stable_hash("foobar"), 0x85944171f73967e8ull);
}

TEST(Parameters, DerivedStreamsAreReproducibleAndDistinct) {
  auto a = derived_rng(7, 1), b = derived_rng(7, 1), c = derived_rng(7, 2), d = derived_rng(8, 1);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}
