#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rgfm/ccs.hpp"
#include "rgfm/trig.hpp"
#include "support.hpp"

using namespace rgfm;
using test::random_point;
using test::random_tangent;

namespace {

CurvedPoint pt(const SpaceSpec& spec, Vec v) { return CurvedPoint::on(spec, std::move(v)); }
TangentVector tv(const SpaceSpec& spec, const CurvedPoint& x, Vec v) { return TangentVector::at(spec, x, std::move(v)); }
Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

const double kPi = std::numbers::pi;

}  // namespace

TEST_CASE("curvature inner product") {
  const SpaceSpec h2(2, -1.0), s2(2, 1.0);
  CHECK(curvature_inner(vec({1, 0, 0}), vec({1, 0, 0}), h2) == -1.0);
  CHECK(curvature_inner(vec({0, 1, 0}), vec({0, 0, 1}), s2) == 0.0);
  CHECK(curvature_inner(vec({std::sqrt(2.0), 1, 0}), vec({std::sqrt(2.0), 0, 1}), h2) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK_THROWS_AS(curvature_inner(vec({1, 0}), vec({1, 0, 0}), h2), DimensionError);
}

TEST_CASE("north pole") {
  CHECK(north_pole(SpaceSpec(2, -1.0)).coords() == vec({1, 0, 0}));
  CHECK(north_pole(SpaceSpec(2, 4.0)).coords() == vec({0.5, 0, 0}));
  CHECK(north_pole(SpaceSpec(2, 0.0)).coords() == vec({0, 0, 0}));
}

TEST_CASE("point and tangent validation") {
  const SpaceSpec h2(2, -1.0), s2(2, 1.0);
  CHECK_THROWS_AS(pt(h2, vec({2, 0, 0})), ManifoldError);
  CHECK_THROWS_AS(pt(h2, vec({-1, 0, 0})), ManifoldError);
  CHECK_NOTHROW(pt(s2, vec({-1, 0, 0})));  // the sphere accepts the lower hemisphere
  CHECK_THROWS_AS(tv(h2, north_pole(h2), vec({1, 0, 0})), TangencyError);
  CHECK_THROWS_AS(SpaceSpec(0, 1.0), ArgumentError);
}

TEST_CASE("quarter circle on the unit circle") {
  const SpaceSpec s1(1, 1.0);
  const CurvedPoint x = pt(s1, vec({1, 0}));
  const CurvedPoint y = pt(s1, vec({0, 1}));
  const CurvedPoint e = exp_map(x, tv(s1, x, vec({0, kPi / 2})), s1);
  CHECK(e.coords()[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(e.coords()[1] == doctest::Approx(1.0));
  const TangentVector l = log_map(x, y, s1);
  CHECK(std::abs(l.vec()[0]) < 1e-15);
  CHECK(l.vec()[1] == doctest::Approx(kPi / 2));
  CHECK(geodesic_distance(x, y, s1) == doctest::Approx(kPi / 2));
  CHECK(ambient_sq_distance(x, y, s1) == doctest::Approx(2.0));
}

TEST_CASE("zero vectors and coincident points") {
  Engine rng(1);
  for (double k : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
    const SpaceSpec spec(3, k);
    const CurvedPoint x = CurvedPoint::unchecked(random_point(spec, rng));
    const Vec zero = Vec::Zero(4);
    CHECK(exp_map(x, TangentVector::unchecked(x, zero), spec).coords() == x.coords());
    CHECK(log_map(x, x, spec).vec().norm() <= 1e-9 * std::max(1.0, x.coords().squaredNorm()));
    CHECK(log_map(north_pole(spec), north_pole(spec), spec).vec().norm() <= 1e-15);
    CHECK(geodesic_distance(x, x, spec) <= 1e-9);
    if (k != 0.0) CHECK(ambient_sq_distance(x, x, spec) == doctest::Approx(0.0).epsilon(1e-12));
    const CurvedPoint y = CurvedPoint::unchecked(random_point(spec, rng));
    CHECK(parallel_transport(x, y, TangentVector::unchecked(x, zero), spec).vec().norm() == 0.0);
    const TangentVector v = TangentVector::unchecked(x, random_tangent(spec, x.coords(), rng));
    CHECK((parallel_transport(x, x, v, spec).vec() - v.vec()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("ambient squared distance by direct evaluation") {
  const SpaceSpec h2(2, -1.0);
  const double d = ambient_sq_distance(north_pole(h2), pt(h2, vec({std::sqrt(2.0), 1, 0})), h2);
  CHECK(d == doctest::Approx(-2.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(ambient_sq_distance(north_pole(SpaceSpec(2, 0.0)), north_pole(SpaceSpec(2, 0.0)), SpaceSpec(2, 0.0)),
                  UnsupportedModeError);
}

TEST_CASE("project to tangent") {
  Engine rng(2);
  const SpaceSpec h3(3, -1.0);
  const CurvedPoint x = CurvedPoint::unchecked(random_point(h3, rng));
  CHECK(project_to_tangent(x, x.coords(), h3).vec().cwiseAbs().maxCoeff() <= 1e-12);
  for (double k : {-1.5, 1.5}) {
    const SpaceSpec spec(3, k);
    const CurvedPoint p = CurvedPoint::unchecked(random_point(spec, rng));
    for (int i = 0; i < 100; ++i) {
      const TangentVector t = project_to_tangent(p, test::gaussian(4, rng), spec);
      CHECK(tangency_residual(p.coords(), t.vec(), spec) <= 1e-10);
      const double scale = std::max(1.0, p.coords().squaredNorm() * t.vec().norm());
      CHECK((project_to_tangent(p, t.vec(), spec).vec() - t.vec()).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
  }
}

TEST_CASE("exp map lands on the manifold and is unit-speed consistent") {
  Engine rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double k = (i % 2 == 0) ? -1.0 : 1.3;
    const SpaceSpec spec(2 + i % 5, k);
    const CurvedPoint x = CurvedPoint::unchecked(random_point(spec, rng));
    Vec v = random_tangent(spec, x.coords(), rng);
    const double len = std::sqrt(curvature_inner(v, v, spec));
    if (len > 2.0) v *= 2.0 / len;
    if (spec.spherical() && std::sqrt(k) * std::min(len, 2.0) > 2.5) v *= 0.5;
    const CurvedPoint y = exp_map(x, TangentVector::unchecked(x, v), spec);
    REQUIRE(manifold_residual(y.coords(), spec) <= 1e-9 * std::max(1.0, y.coords().squaredNorm()));
    const TangentVector back = log_map(x, y, spec);
    REQUIRE((back.vec() - v).cwiseAbs().maxCoeff() <= 1e-5);
  }
  const SpaceSpec h(4, -1.0);
  const CurvedPoint o = north_pole(h);
  for (int i = 0; i < 100; ++i) {
    Vec v = Vec::Zero(5);
    v.tail(4) = test::gaussian(4, rng, 0.7);
    const double len = v.norm();
    CHECK(geodesic_distance(o, exp_map(o, TangentVector::unchecked(o, v), h), h) == doctest::Approx(len).epsilon(1e-6));
  }
}

TEST_CASE("sphere maps refuse what they cannot represent") {
  const SpaceSpec s1(1, 1.0);
  const CurvedPoint x = pt(s1, vec({1, 0}));
  const CurvedPoint antipode = pt(s1, vec({-1, 0}));
  CHECK_THROWS_AS(log_map(x, antipode, s1), DegeneratePairError);
  CHECK_THROWS_AS(exp_map(x, tv(s1, x, vec({0, 4.0})), s1), InjectivityError);
}

TEST_CASE("transport isometry and tangency") {
  Engine rng(4);
  for (int i = 0; i < 10000; ++i) {
    const SpaceSpec spec(2 + i % 4, i % 2 == 0 ? -1.0 : 0.7);
    const CurvedPoint x = CurvedPoint::unchecked(random_point(spec, rng));
    const CurvedPoint y = CurvedPoint::unchecked(random_point(spec, rng));
    const TangentVector u = TangentVector::unchecked(x, random_tangent(spec, x.coords(), rng));
    const TangentVector v = TangentVector::unchecked(x, random_tangent(spec, x.coords(), rng));
    const TangentVector pu = parallel_transport(x, y, u, spec);
    const TangentVector pv = parallel_transport(x, y, v, spec);
    REQUIRE(std::abs(curvature_inner(pu.vec(), pv.vec(), spec) - curvature_inner(u.vec(), v.vec(), spec)) <= 1e-8);
    REQUIRE(tangency_residual(y.coords(), pv.vec(), spec) <= 1e-8);
  }
}

TEST_CASE("distance symmetry and identity") {
  Engine rng(5);
  for (int i = 0; i < 10000; ++i) {
    const SpaceSpec spec(3, i % 2 == 0 ? -0.5 : 2.0);
    const CurvedPoint x = CurvedPoint::unchecked(random_point(spec, rng));
    const CurvedPoint y = CurvedPoint::unchecked(random_point(spec, rng));
    REQUIRE(std::abs(geodesic_distance(x, y, spec) - geodesic_distance(y, x, spec)) <= 1e-9);
    REQUIRE(geodesic_distance(x, x, spec) <= 1e-9);
  }
}

TEST_CASE("Euclidean mode reduces to vector arithmetic") {
  Engine rng(6);
  const SpaceSpec e3(3, 0.0);
  const CurvedPoint x = CurvedPoint::unchecked(random_point(e3, rng));
  const CurvedPoint y = CurvedPoint::unchecked(random_point(e3, rng));
  const Vec v = random_tangent(e3, x.coords(), rng);
  CHECK(exp_map(x, TangentVector::unchecked(x, v), e3).coords() == x.coords() + v);
  CHECK(log_map(x, y, e3).vec() == y.coords() - x.coords());
  CHECK(parallel_transport(x, y, TangentVector::unchecked(x, v), e3).vec() == v);
  CHECK(geodesic_distance(x, y, e3) == doctest::Approx((y.coords() - x.coords()).norm()));
}

TEST_CASE("curvature trigonometry") {
  CHECK(cos_k(0.0, -1.0) == 1.0);
  CHECK(cos_k(0.0, 3.0) == 1.0);
  CHECK(sin_k(1.0, -1.0) == doctest::Approx(1.17520).epsilon(1e-5));
  for (double t = 0.05; t < 1.0; t += 0.05) {
    for (double k : {-1.0, 1.0}) CHECK(std::abs(acos_k(cos_k(t, k), k) - t) <= 1e-10);
  }
  CHECK(acos_k(1.0 + 1e-17, 1.0) == 0.0);
  CHECK(acos_k(0.5, -1.0) == 0.0);
  CHECK(acos_k_derivative(1.0, 1.0) == 0.0);
  CHECK(acos_k_derivative(1.0, -1.0) == 0.0);
  CHECK(std::isfinite(acos_k_derivative(1.0 - 1e-13, 1.0)));
}
