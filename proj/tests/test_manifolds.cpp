#include <doctest.h>

#include <cmath>

#include "golde/manifolds.hpp"
#include "golde/selfcheck.hpp"

using namespace golde;

TEST_CASE("reparameterizations hit their targets exactly") {
  const double p_raw = reparam_raw_for(1.0, kEllipticWeightFloor);
  CHECK(elliptic_weight_from_raw(p_raw) == 1.0);
  const double beta_raw = reparam_raw_for(1.0, kCurvatureFloor);
  CHECK(curvature_from_raw(beta_raw) == 1.0);
  // floors keep the images positive however negative the raw value gets
  CHECK(elliptic_weight_from_raw(-80.0) >= kEllipticWeightFloor);
  CHECK(curvature_from_raw(-80.0) >= kCurvatureFloor);
}

TEST_CASE("elliptic_transform") {
  Rng rng(21);
  const std::size_t k = 5;
  const VecD p = checks::random_positive_weights(rng, k);
  const VecD e = checks::random_vec(rng, k);

  ReflectorSet idrows(k, k);  // zero rows: identity
  CHECK(elliptic_transform(idrows, p, e) == e);

  // with p = 1 this is the plain Euclidean reflection composition
  const ReflectorSet u = checks::random_reflectors(rng, k, k);
  CHECK(elliptic_transform(u, euclidean_weights(k), e) == orth_apply(u, euclidean_weights(k), e));

  // quadratic-norm invariance oracle
  const VecD out = elliptic_transform(u, p, e);
  const double before = quad_inner(e, e, p);
  const double after = quad_inner(out, out, p);
  CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, std::abs(before)));

  CHECK_THROWS_AS(elliptic_transform(u, VecD{1, -1, 1, 1, 1}, e), UnsupportedSignatureError);
}

TEST_CASE("elliptic_distance") {
  const VecD p{4, 1};
  CHECK(elliptic_distance(VecD{1, 2}, VecD{1, 2}, p) == 0.0);
  CHECK(elliptic_distance(VecD{1, 0}, VecD{0, 0}, p) == 2.0);  // sqrt(4)
  CHECK(elliptic_distance(VecD{3, 4}, VecD{0, 0}, euclidean_weights(2)) == 5.0);
  CHECK_THROWS_AS(elliptic_distance(VecD{1}, VecD{1, 2}, p), DimensionError);
}

TEST_CASE("exp_map lifts tangent vectors onto the sheet") {
  const HyperbolicPoint origin = exp_map(VecD{0, 0, 0}, 1.0);
  CHECK(origin.coords == VecD{1, 0, 0, 0});

  const double s = 0.8;
  const HyperbolicPoint axis = exp_map(VecD{s, 0}, 1.0);
  CHECK(axis.coords[0] == doctest::Approx(std::cosh(s)).epsilon(1e-14));
  CHECK(axis.coords[1] == doctest::Approx(std::sinh(s)).epsilon(1e-14));
  CHECK(axis.coords[2] == 0.0);

  CHECK_THROWS_AS(exp_map(VecD{1, 2}, 0.0), ContractError);
  CHECK_THROWS_AS(exp_map(VecD{1, 2}, -1.0), ContractError);

  // membership and positivity across the norm/curvature grid
  CHECK(checks::exp_map_membership(201) <= 1e-9);
}

TEST_CASE("boost_apply") {
  Rng rng(22);
  const std::size_t k = 5;

  SUBCASE("zero boost is the identity") {
    const VecD x = checks::random_vec(rng, k);
    CHECK(boost_apply(VecD(k - 1, 0.0), x) == x);
  }

  SUBCASE("preserves the sheet and the sign of the first coordinate") {
    for (int t = 0; t < 50; ++t) {
      const double beta = rng.uniform(0.1, 3.0);
      const HyperbolicPoint p = exp_map(checks::random_vec(rng, k - 1), beta);
      const VecD b = checks::random_vec(rng, k - 1);
      const VecD y = boost_apply(b, p.coords);
      CHECK(y[0] > 0.0);
      CHECK(hyperboloid_residual(y, beta) <= 1e-9);
    }
  }

  SUBCASE("materialized boost is Lorentz-orthogonal with first element >= 1") {
    for (int t = 0; t < 50; ++t) {
      const VecD b = checks::random_vec(rng, k - 1);
      const Mat m = boost_matrix(b);
      CHECK(orthogonality_defect(m, lorentz_weights(k)) <= 1e-9);
      CHECK(m(0, 0) >= 1.0);
    }
  }
}

TEST_CASE("hyperbolic_orth_apply") {
  Rng rng(23);
  const std::size_t k = 5;
  const double beta = 1.3;
  const HyperbolicPoint x = exp_map(checks::random_vec(rng, k - 1), beta);

  SUBCASE("identity parameters leave the point unchanged") {
    ReflectorSet idrows(k - 1, k - 1);
    const HyperbolicPoint y = hyperbolic_orth_apply(idrows, VecD(k - 1, 0.0), x);
    CHECK(y.coords == x.coords);
  }

  SUBCASE("preserves the Lorentz form within tolerance") {
    for (int t = 0; t < 50; ++t) {
      const ReflectorSet u = checks::random_reflectors(rng, k - 1, k - 1);
      const VecD b = checks::random_vec(rng, k - 1);
      const HyperbolicPoint y = hyperbolic_orth_apply(u, b, x);
      const double before = lorentz_inner(x.coords, x.coords);
      const double after = lorentz_inner(y.coords, y.coords);
      CHECK(std::abs(after - before) <= 1e-9 * std::abs(before));
      CHECK(y.coords[0] > 0.0);
    }
  }

  SUBCASE("off-sheet input violates the contract") {
    HyperbolicPoint bad = x;
    bad.coords[0] *= 1.5;
    ReflectorSet u(k - 1, k - 1);
    CHECK_THROWS_AS(hyperbolic_orth_apply(u, VecD(k - 1, 0.0), bad), ContractError);
  }
}

TEST_CASE("hyperbolic_distance") {
  const HyperbolicPoint a{VecD{1, 0}, 1.0};
  const HyperbolicPoint b{VecD{std::cosh(1.0), std::sinh(1.0)}, 1.0};
  CHECK(hyperbolic_distance(a, a, 1.0) == 0.0);
  CHECK(hyperbolic_distance(a, b, 1.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(hyperbolic_distance(a, b, 1.0) == hyperbolic_distance(b, a, 1.0));

  HyperbolicPoint other = b;
  other.beta = 2.0;
  CHECK_THROWS_AS(hyperbolic_distance(a, other, 1.0), ContractError);

  const auto axioms = checks::hyperbolic_distance_axioms(300, 202);
  CHECK(axioms.asymmetry == 0.0);
  CHECK(axioms.diagonal == 0.0);
  CHECK(axioms.triangle_violation <= 1e-8);
}

TEST_CASE("elliptic transform equals the scaled-Euclidean reformulation") {
  CHECK(checks::elliptic_scaled_equivalence(200, 203) <= 1e-9);
}

TEST_CASE("boost closed forms") {
  const auto bf = checks::boost_closed_forms(200, 204);
  CHECK(bf.sqrt_error <= 1e-10);
  CHECK(bf.velocity_error <= 1e-10);
}

TEST_CASE("restricted hyperbolic transforms stay in the positive subgroup") {
  const auto pt = checks::positive_transforms(300, 205);
  CHECK(pt.lorentz_defect <= 1e-9);
  CHECK(pt.min_first_element >= 1.0 - 1e-12);
  CHECK(pt.sheet_residual <= 1e-8);
}
