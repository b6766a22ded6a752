#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "qso_lab/simplex.hpp"

using namespace qso;

namespace {

void expect_on_simplex(const SimplexPoint& x) {
  for (double c : x) EXPECT_GE(c, 0.0);
  EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 1.0, 1e-12);
}

SimplexPoint permuted(const SimplexPoint& x, std::mt19937_64& rng) {
  std::vector<double> v = x.vec();
  std::shuffle(v.begin(), v.end(), rng);
  return make_point(v, Normalization::strict);
}

}  // namespace

TEST(MakePoint, StrictAcceptsPointOnSimplex) {
  const auto x = make_point({0.2, 0.3, 0.5}, Normalization::strict);
  EXPECT_EQ(x.dim(), 3U);
  EXPECT_DOUBLE_EQ(x[2], 0.5);
}

TEST(MakePoint, RenormalizeRescalesDrift) {
  const auto x = make_point({0.2, 0.3, 0.5000000001}, Normalization::renormalize);
  const double s = 1.0000000001;
  EXPECT_NEAR(x[0], 0.2 / s, 1e-16);
  EXPECT_NEAR(x[1], 0.3 / s, 1e-16);
  EXPECT_NEAR(x[2], 0.5000000001 / s, 1e-16);
  expect_on_simplex(x);
}

TEST(MakePoint, StrictRejectsNegative) {
  EXPECT_THROW(make_point({0.5, -1e-8, 0.5}, Normalization::strict), Error);
}

TEST(MakePoint, StrictRejectsSumOffByMoreThanTolerance) {
  EXPECT_THROW(make_point({0.2, 0.3, 0.5000001}, Normalization::strict), Error);
}

TEST(MakePoint, RenormalizeClampsTinyNegatives) {
  const auto x = make_point({0.5, -1e-10, 0.5});
  EXPECT_EQ(x[1], 0.0);
  expect_on_simplex(x);
}

TEST(MakePoint, RenormalizeRejectsLargeNegatives) {
  EXPECT_THROW(make_point({0.5, -1e-6, 0.5}), Error);
}

TEST(MakePoint, RejectsEmptyZeroAndNonFinite) {
  EXPECT_THROW(make_point({}), Error);
  EXPECT_THROW(make_point({0.0, 0.0}), Error);
  EXPECT_THROW(make_point({std::nan(""), 1.0}), Error);
}

TEST(MakePoint, ErrorKindIsInvalidArgument) {
  try {
    make_point({0.5, -1e-8, 0.5}, Normalization::strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
}

TEST(Rearrangement, SortsDecreasing) {
  EXPECT_EQ(decreasing_rearrangement(make_point({0.2, 0.5, 0.3})).vec(),
            (std::vector<double>{0.5, 0.3, 0.2}));
  const auto b = barycenter(3);
  EXPECT_EQ(decreasing_rearrangement(b), b);
  EXPECT_EQ(decreasing_rearrangement(vertex(3, 1)), vertex(3, 0));
}

TEST(Majorization, HandComputedPair) {
  const auto y = make_point({0.6, 0.3, 0.1});
  const auto x = make_point({0.5, 0.3, 0.2});
  EXPECT_TRUE(majorizes(y, x));
  EXPECT_FALSE(majorizes(x, y));
}

TEST(Majorization, VertexAndBarycenterExtremes) {
  std::mt19937_64 rng(11);
  for (std::size_t m = 1; m <= 8; ++m) {
    for (int t = 0; t < 50; ++t) {
      const auto x = sample_uniform(m, rng);
      for (std::size_t i = 0; i < m; ++i) EXPECT_TRUE(majorizes(vertex(m, i), x));
      EXPECT_TRUE(majorizes(x, barycenter(m)));
    }
  }
}

TEST(Majorization, ReflexiveTransitivePermutationInvariant) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t m = 2 + t % 6;
    const auto a = sample_uniform(m, rng);
    const auto b = sample_uniform(m, rng);
    const auto c = sample_uniform(m, rng);
    EXPECT_TRUE(majorizes(a, a));
    if (majorizes(a, b) && majorizes(b, c)) EXPECT_TRUE(majorizes(a, c));
    EXPECT_EQ(majorizes(a, b), majorizes(permuted(a, rng), permuted(b, rng)));
  }
}

TEST(Vertices, BasicConstructors) {
  const auto vs = vertices(3);
  ASSERT_EQ(vs.size(), 3U);
  EXPECT_EQ(vs[0].vec(), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(vs[2].vec(), (std::vector<double>{0, 0, 1}));
  for (double c : barycenter(3)) EXPECT_DOUBLE_EQ(c, 1.0 / 3.0);
  EXPECT_FALSE(is_interior(vertex(3, 0), 1e-9));
  EXPECT_TRUE(is_interior(barycenter(3), 1e-9));
  EXPECT_THROW(vertex(3, 3), Error);
}

TEST(Vertices, FaceBarycenter) {
  const auto f = face_barycenter(4, 0b0101);
  EXPECT_EQ(f.vec(), (std::vector<double>{0.5, 0, 0.5, 0}));
}

TEST(Distance, SupNorm) {
  const auto a = make_point({0.2, 0.3, 0.5});
  const auto b = make_point({0.25, 0.3, 0.45});
  EXPECT_NEAR(distance(a, b), 0.05, 1e-15);
  EXPECT_THROW(distance(a, barycenter(4)), Error);
}

TEST(Sampling, UniformDrawsLieOnSimplex) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) expect_on_simplex(sample_uniform(1 + t % 10, rng));
}

TEST(Sampling, UniformMeanIsBarycenter) {
  std::mt19937_64 rng(9);
  std::vector<double> mean(4, 0.0);
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    const auto x = sample_uniform(4, rng);
    for (std::size_t i = 0; i < 4; ++i) mean[i] += x[i] / n;
  }
  for (double v : mean) EXPECT_NEAR(v, 0.25, 0.01);
}

TEST(Sampling, SeededDrawsReproduce) {
  std::mt19937_64 a(42);
  std::mt19937_64 b(42);
  EXPECT_EQ(sample_uniform(5, a), sample_uniform(5, b));
}
