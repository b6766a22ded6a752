#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "qso_lab/families.hpp"
#include "qso_lab/tensor.hpp"
#include "support.hpp"

using namespace qso;
using qso::testing::random_tensor;

namespace {

HeredityTensor v0() { return build_three_state(ThreeState::v0); }
HeredityTensor v1() { return build_three_state(ThreeState::v1); }

bool has_kind(const std::vector<Violation>& vs, Violation::Kind k) {
  return std::any_of(vs.begin(), vs.end(), [k](const Violation& v) { return v.kind == k; });
}

}  // namespace

TEST(Apply, V0FixesBarycenter) {
  const auto y = apply(v0(), barycenter(3));
  for (double c : y) EXPECT_NEAR(c, 1.0 / 3.0, 1e-15);
}

TEST(Apply, VertexImageIsDiagonalRow) {
  std::mt19937_64 rng(1);
  for (std::size_t m = 2; m <= 6; ++m) {
    const auto p = random_tensor(m, rng);
    const auto y = apply(p, vertex(m, 0));
    for (std::size_t k = 0; k < m; ++k) EXPECT_NEAR(y[k], p(0, 0, k), 1e-15);
  }
}

TEST(Apply, V1FixesVertices) {
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(apply(v1(), vertex(3, i)), vertex(3, i));
}

TEST(Apply, PreservesSimplex) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 500; ++t) {
    const std::size_t m = 2 + t % 9;
    const auto p = random_tensor(m, rng);
    const auto x = sample_uniform(m, rng);
    const auto raw = apply_raw(p, x.coords());
    EXPECT_NEAR(std::accumulate(raw.begin(), raw.end(), 0.0), 1.0, 1e-12);
    for (double c : raw) EXPECT_GE(c, -1e-9);
  }
}

TEST(Apply, SymmetrizationLeavesMapUnchanged) {
  std::mt19937_64 rng(3);
  const std::size_t m = 4;
  // Asymmetric staging array whose symmetrization is a valid tensor.
  CubicArray raw(m);
  CubicArray sym(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const auto r1 = sample_uniform(m, rng);
      const auto r2 = sample_uniform(m, rng);
      for (std::size_t k = 0; k < m; ++k) {
        raw(i, j, k) = r1[k];
        raw(j, i, k) = i == j ? r1[k] : r2[k];
        sym.set_sym(i, j, k, i == j ? r1[k] : 0.5 * (r1[k] + r2[k]));
      }
    }
  const auto p = HeredityTensor::make(sym);
  for (int t = 0; t < 50; ++t) {
    const auto x = sample_uniform(m, rng);
    std::vector<double> direct(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < m; ++k) direct[k] += raw(i, j, k) * x[i] * x[j];
    EXPECT_LE(distance(direct, apply_raw(p, x.coords())), 1e-15);
  }
}

TEST(Apply, QuadraticAlongSegments) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 3 + t % 4;
    const auto p = random_tensor(m, rng);
    const auto u = sample_uniform(m, rng);
    const auto v = sample_uniform(m, rng);
    auto at = [&](double s) {
      std::vector<double> x(m);
      for (std::size_t i = 0; i < m; ++i) x[i] = (1 - s) * u[i] + s * v[i];
      return apply_raw(p, x);
    };
    const auto f0 = at(0.0);
    const auto fh = at(0.5);
    const auto f1 = at(1.0);
    const auto f3 = at(0.3);
    for (std::size_t k = 0; k < m; ++k) {
      // Lagrange interpolation through s = 0, 0.5, 1 evaluated at 0.3.
      const double s = 0.3;
      const double l0 = (s - 0.5) * (s - 1.0) / ((0.0 - 0.5) * (0.0 - 1.0));
      const double lh = (s - 0.0) * (s - 1.0) / ((0.5 - 0.0) * (0.5 - 1.0));
      const double l1 = (s - 0.0) * (s - 0.5) / ((1.0 - 0.0) * (1.0 - 0.5));
      EXPECT_NEAR(l0 * f0[k] + lh * fh[k] + l1 * f1[k], f3[k], 1e-14);
    }
  }
}

TEST(Validate, V0HasNoViolations) { EXPECT_TRUE(validate(v0().entries()).empty()); }

TEST(Validate, ReportsAsymmetry) {
  CubicArray p = identity_tensor(3).entries();
  p(0, 1, 0) = 0.6;
  p(0, 1, 1) = 0.4;
  p(1, 0, 0) = 0.4;
  p(1, 0, 1) = 0.6;
  const auto vs = validate(p);
  ASSERT_TRUE(has_kind(vs, Violation::Kind::asymmetric));
  EXPECT_FALSE(has_kind(vs, Violation::Kind::not_stochastic));
  const auto& v = *std::find_if(vs.begin(), vs.end(),
                                [](const Violation& x) { return x.kind == Violation::Kind::asymmetric; });
  EXPECT_NEAR(v.magnitude, 0.2, 1e-15);
  EXPECT_NE(v.describe().find("P[1][2][1]"), std::string::npos);
}

TEST(Validate, ReportsStochasticityDeficit) {
  CubicArray p = identity_tensor(3).entries();
  p(0, 0, 0) = 0.9;
  const auto vs = validate(p);
  ASSERT_EQ(vs.size(), 1U);
  EXPECT_EQ(vs[0].kind, Violation::Kind::not_stochastic);
  EXPECT_NEAR(vs[0].magnitude, 0.1, 1e-15);
}

TEST(Validate, ReportsNegatives) {
  CubicArray p = identity_tensor(2).entries();
  p(0, 0, 0) = 1.5;
  p(0, 0, 1) = -0.5;
  EXPECT_TRUE(has_kind(validate(p), Violation::Kind::negative));
}

TEST(HeredityTensorMake, StrictThrowsValidation) {
  CubicArray p(2, 0.25);
  try {
    HeredityTensor::make(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
}

TEST(HeredityTensorMake, RepairFixesDrift) {
  CubicArray p = identity_tensor(3).entries();
  p(0, 1, 0) += 1e-11;
  p(0, 0, 2) = -1e-11;
  const auto t = HeredityTensor::make(p, TensorPolicy::repair);
  EXPECT_EQ(t(0, 1, 0), t(1, 0, 0));
  EXPECT_GE(t(0, 0, 2), 0.0);
}

TEST(HeredityTensorMake, SymmetryIsExact) {
  std::mt19937_64 rng(5);
  const auto p = random_tensor(5, rng);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(p(i, j, k), p(j, i, k));
}

TEST(Classify, V0IsVolterra) {
  const auto r = classify(v0());
  EXPECT_TRUE(r.is_volterra);
  ASSERT_TRUE(r.ell.has_value());
  EXPECT_EQ(*r.ell, 3U);
  EXPECT_FALSE(r.is_strictly_non_volterra);
}

TEST(Classify, StrictlyNonVolterraFamily) {
  const auto r = classify(build_strictly_nv_s2(0.5, 0.5, 0.5, 0.5, 0.5, 0.5));
  EXPECT_TRUE(r.is_strictly_non_volterra);
  EXPECT_FALSE(r.is_volterra);
}

TEST(Classify, V1IsNotVolterra) {
  const auto r = classify(v1());
  EXPECT_FALSE(r.is_volterra);
  EXPECT_FALSE(r.ell.has_value());
}

TEST(Classify, EllVolterraLevel) {
  // First coordinate Volterra, second and third not.
  CubicArray p(3);
  p(0, 0, 0) = 1.0;
  p(1, 1, 2) = 1.0;
  p(2, 2, 1) = 1.0;
  p.set_sym(0, 1, 0, 0.5);
  p.set_sym(0, 1, 2, 0.5);
  p.set_sym(0, 2, 0, 0.5);
  p.set_sym(0, 2, 1, 0.5);
  p.set_sym(1, 2, 1, 1.0);
  const auto t = HeredityTensor::make(p);
  ASSERT_TRUE(volterra_level(t).has_value());
  EXPECT_EQ(*volterra_level(t), 1U);
  EXPECT_FALSE(classify(t).is_volterra);
}

TEST(Classify, SufficientConditionSkippedAboveBound) {
  const auto r = classify(identity_tensor(13));
  EXPECT_FALSE(r.bistochastic_sufficient_ok.has_value());
  EXPECT_TRUE(r.bistochastic_necessary_ok);
}

TEST(Bistochastic, IdentityPassesAll) {
  const auto bc = bistochastic_conditions(identity_tensor(4));
  EXPECT_TRUE(bc.a_ok);
  EXPECT_TRUE(bc.b_ok);
  ASSERT_TRUE(bc.c_ok.has_value());
  EXPECT_TRUE(*bc.c_ok);
}

TEST(Bistochastic, V1ConditionA) {
  const auto p = v1();
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) s += p(i, j, 0);
  EXPECT_DOUBLE_EQ(s, 3.0);
  EXPECT_TRUE(bistochastic_conditions(p).a_ok);
}

TEST(Bistochastic, VolterraWithStrongNegativeCoefficientFailsB) {
  // x'_1 = x_1 (1 - 0.9 x_2): row (2,1) of coordinate 1 sums to 0.05.
  CubicArray p(2);
  p(0, 0, 0) = 1.0;
  p(1, 1, 1) = 1.0;
  p.set_sym(0, 1, 0, 0.05);
  p.set_sym(0, 1, 1, 0.95);
  const auto bc = bistochastic_conditions(HeredityTensor::make(p));
  EXPECT_FALSE(bc.b_ok);
  ASSERT_TRUE(bc.b_witness_ik.has_value());
  EXPECT_EQ(*bc.b_witness_ik, (std::pair<std::size_t, std::size_t>{1, 0}));
}

TEST(Bistochastic, LimitOnSubsetEnumeration) {
  EXPECT_THROW(bistochastic_conditions(identity_tensor(13)), Error);
  EXPECT_NO_THROW(bistochastic_conditions(identity_tensor(13), false));
}

TEST(MajorizationProbe, IdentityHolds) {
  EXPECT_TRUE(majorization_probe(identity_tensor(4), 500, 0).holds);
}

TEST(MajorizationProbe, V0HasCounterexample) {
  const auto r = majorization_probe(v0(), 1000, 0);
  EXPECT_FALSE(r.holds);
  ASSERT_TRUE(r.counterexample.has_value());
  EXPECT_FALSE(majorizes(*r.counterexample, apply(v0(), *r.counterexample)));
}

TEST(MajorizationProbe, ConditionCImpliesProbe) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto p = convex_combination(identity_tensor(3), uniform_tensor(3), lambda);
    const auto bc = bistochastic_conditions(p);
    ASSERT_TRUE(bc.c_ok.value());
    EXPECT_TRUE(majorization_probe(p, 300, static_cast<std::uint64_t>(t)).holds);
  }
}

TEST(ExtremeCandidate, Examples) {
  EXPECT_TRUE(is_extreme_candidate(identity_tensor(3)));
  EXPECT_FALSE(is_extreme_candidate(build_three_state(ThreeState::mix, 0.3)));
  CubicArray p = identity_tensor(2).entries();
  p(0, 0, 0) = 0.5;
  p(0, 0, 1) = 0.5;
  EXPECT_FALSE(is_extreme_candidate(HeredityTensor::make(p)));
}

TEST(Idempotence, Examples) {
  // m = 1 F-QSO: everything maps to the empty body.
  CubicArray c(2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) c(i, j, 0) = 1.0;
  EXPECT_TRUE(is_idempotent(HeredityTensor::make(c), 2, 200, 0, 1e-14).holds);
  EXPECT_TRUE(is_idempotent(identity_tensor(3), 2, 200, 0, 1e-14).holds);
  EXPECT_FALSE(is_idempotent(v0(), 2, 200, 0, 1e-6).holds);
}

TEST(Regularity, Margins) {
  EXPECT_NEAR(regularity_margin(uniform_tensor(3)), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(regularity_margin(v0()), -1.0 / 6.0, 1e-15);
  EXPECT_NEAR(regularity_margin(uniform_tensor(2)), 0.25, 1e-15);
  // Smallest entry 1/2 sits above the m = 2 regularity threshold (3 - sqrt 7) / 2.
  EXPECT_GT(regularity_margin(uniform_tensor(2)) + 0.25, (3.0 - std::sqrt(7.0)) / 2.0);
}

TEST(ConvexCombination, Endpoints) {
  EXPECT_EQ(convex_combination(v0(), v1(), 1.0), v0());
  EXPECT_EQ(convex_combination(v0(), v1(), 0.0), v1());
  EXPECT_DOUBLE_EQ(convex_combination(v0(), v1(), 0.5)(0, 0, 0), 1.0);
  EXPECT_THROW(convex_combination(v0(), v1(), 1.5), Error);
}
