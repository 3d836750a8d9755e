#include <doctest.h>

#include <random>

#include "chargegame/errors.hpp"
#include "chargegame/feasible_sets.hpp"
#include "chargegame/qp.hpp"
#include "support/oracles.hpp"

using namespace chargegame;

namespace {

Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

FeasibleSet random_ev_set(std::mt19937_64& rng, Eigen::Index n, bool with_ramp) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x_tilde = random_vector(rng, n, 0.5, 3.0);
  // Some slots closed, as outside a charging window.
  for (Eigen::Index t = 0; t < n; ++t) {
    if (u(rng) < 0.15) x_tilde(t) = 0.0;
  }
  std::optional<double> ramp;
  if (with_ramp) ramp = 0.3 + 1.5 * u(rng);
  FeasibleSet probe = FeasibleSet::ev_charging(x_tilde, 0.0, ramp);
  const Vector env = *probe.check_nonempty().witness;
  (void)env;
  double capacity = 0.0;
  {
    // Largest feasible energy from the envelope witness with theta = 0 is not
    // available, so use the nonemptiness test on a scan of theta.
    double lo = 0.0;
    double hi = x_tilde.sum();
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (FeasibleSet::ev_charging(x_tilde, mid, ramp).check_nonempty().nonempty) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    capacity = lo;
  }
  return FeasibleSet::ev_charging(x_tilde, capacity * u(rng), ramp);
}

FeasibleSet random_polytope(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  // Rows around a known interior point keep the polytope nonempty and bounded.
  const Vector center = random_vector(rng, n, -1.0, 1.0);
  Matrix A(m + 2 * n, n);
  Vector b(m + 2 * n);
  for (Eigen::Index i = 0; i < m; ++i) {
    A.row(i) = random_vector(rng, n, -1.0, 1.0).transpose();
    b(i) = A.row(i).dot(center) + random_vector(rng, 1, 0.05, 1.0)(0);
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    A.row(m + t) = Vector::Unit(n, t).transpose();
    b(m + t) = center(t) + 2.0;
    A.row(m + n + t) = -Vector::Unit(n, t).transpose();
    b(m + n + t) = -center(t) + 2.0;
  }
  return FeasibleSet::polytope(A, b);
}

}  // namespace

TEST_CASE("dual active-set projection") {
  SUBCASE("KKT residual on random polytopes") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const auto set = random_polytope(rng, 6, 10);
      const Vector y = random_vector(rng, 6, -5.0, 5.0);
      const auto res = qp::project_dual_active_set(set.halfspace_matrix(), set.halfspace_rhs(), y);
      REQUIRE(res.status == qp::Status::Optimal);
      CHECK(qp::kkt_residual(set.halfspace_matrix(), set.halfspace_rhs(), y, res.x, res.lambda) <= 1e-9);
    }
  }
  SUBCASE("Dykstra fallback reaches the same point") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
      const auto set = random_polytope(rng, 4, 6);
      const Vector y = random_vector(rng, 4, -4.0, 4.0);
      const auto gi = qp::project_dual_active_set(set.halfspace_matrix(), set.halfspace_rhs(), y);
      const auto dy = qp::project_dykstra(set.halfspace_matrix(), set.halfspace_rhs(), y, 1e-14);
      REQUIRE(dy.status == qp::Status::Optimal);
      CHECK((gi.x - dy.x).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
  }
  SUBCASE("infeasible system yields a Farkas certificate") {
    Matrix A(3, 2);
    A << 1.0, 0.0, -1.0, 0.0, 0.0, 1.0;
    const Vector b = (Vector(3) << 1.0, -2.0, 5.0).finished();  // x <= 1 and x >= 2
    const auto res = qp::project_dual_active_set(A, b, Vector::Zero(2));
    REQUIRE(res.status == qp::Status::Infeasible);
    CHECK((res.certificate.array() >= -1e-12).all());
    CHECK((A.transpose() * res.certificate).norm() <= 1e-12);
    CHECK(b.dot(res.certificate) < 0.0);
  }
}

TEST_CASE("project") {
  SUBCASE("point inside is unchanged") {
    const auto set = FeasibleSet::ev_charging(Vector::Constant(4, 2.0), 3.0, 1.0);
    const Vector y = (Vector(4) << 0.5, 1.0, 1.2, 0.8).finished();
    CHECK((set.project(y) - y).norm() <= 1e-14);
  }
  SUBCASE("energy constraint splits evenly by symmetry") {
    const auto set = FeasibleSet::ev_charging(Vector::Ones(2), 1.5);
    const Vector x = set.project(Vector::Zero(2));
    CHECK(x(0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(x(1) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("EV sets with ramp against the LDP oracle") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
      const auto set = random_ev_set(rng, 12, true);
      const Vector y = random_vector(rng, 12, -3.0, 4.0);
      const auto ref = oracle::project_ldp(set.halfspace_matrix(), set.halfspace_rhs(), y);
      REQUIRE(ref.has_value());
      CHECK((set.project(y) - *ref).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
  }
  SUBCASE("EV sets without ramp against the LDP oracle") {
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<int> coarse(-4, 6);
    for (int trial = 0; trial < 300; ++trial) {
      const auto set = random_ev_set(rng, 12, false);
      Vector y = random_vector(rng, 12, -3.0, 4.0);
      // Coarse values create tied breakpoints.
      if (trial % 2 == 0) {
        for (Eigen::Index t = 0; t < 12; ++t) y(t) = 0.5 * coarse(rng);
      }
      const auto ref = oracle::project_ldp(set.halfspace_matrix(), set.halfspace_rhs(), y);
      REQUIRE(ref.has_value());
      CHECK((set.project(y) - *ref).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
  }
  SUBCASE("affine slab against the LDP oracle") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 100; ++trial) {
      const Vector base = random_vector(rng, 3, 0.2, 2.0);
      const auto set = FeasibleSet::affine_slab(base, random_vector(rng, 3, -2.0, 2.0), random_vector(rng, 3, -2.0, 2.0));
      const Vector y = random_vector(rng, 3, -3.0, 4.0);
      const auto ref = oracle::project_ldp(set.halfspace_matrix(), set.halfspace_rhs(), y);
      REQUIRE(ref.has_value());
      const Vector x = set.project(y);
      CHECK((x - *ref).lpNorm<Eigen::Infinity>() <= 1e-8);
      CHECK(set.contains(x, 1e-9));
    }
  }
  SUBCASE("empty polytope throws with certificate") {
    Matrix A(2, 1);
    A << 1.0, -1.0;
    const auto set = FeasibleSet::polytope(A, (Vector(2) << 0.0, -1.0).finished());
    try {
      set.project(Vector::Zero(1));
      FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
      CHECK_FALSE(e.certificate().empty());
    }
  }
}

TEST_CASE("projection invariants") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<FeasibleSet> sets = {
        random_ev_set(rng, 10, trial % 2 == 0),
        random_polytope(rng, 5, 7),
        FeasibleSet::box(random_vector(rng, 5, -2.0, 0.0), random_vector(rng, 5, 0.0, 2.0)),
        FeasibleSet::affine_slab(random_vector(rng, 4, 0.5, 1.5), random_vector(rng, 4, -1.0, 1.0),
                                 random_vector(rng, 4, -1.0, 1.0)),
    };
    for (const auto& set : sets) {
      const Eigen::Index n = set.dimension();
      const Vector a = random_vector(rng, n, -4.0, 4.0);
      const Vector b = random_vector(rng, n, -4.0, 4.0);
      const Vector pa = set.project(a);
      const Vector pb = set.project(b);
      CHECK((set.project(pa) - pa).norm() <= 1e-10);
      CHECK((pa - pb).norm() <= (a - b).norm() + 1e-10);
      CHECK(set.contains(pa, 1e-9));
      CHECK(set.contains(pa, 1e-8));
      // Non-members move under projection.
      if (!set.contains(a, 1e-9)) CHECK((pa - a).norm() > 1e-9);
    }
  }
}

TEST_CASE("EV projections satisfy every charging constraint") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_ev_set(rng, 24, true);
    const auto& ev = std::get<EVChargingSet>(set.descriptor());
    const Vector x = set.project(random_vector(rng, 24, -2.0, 3.0));
    CHECK(x.minCoeff() >= -1e-9);
    CHECK(((x - ev.x_tilde).array() <= 1e-9).all());
    CHECK(x.sum() >= ev.theta - 1e-9);
    for (Eigen::Index t = 0; t + 1 < 24; ++t) CHECK(std::abs(x(t + 1) - x(t)) <= *ev.ramp + 1e-9);
  }
}

TEST_CASE("contains") {
  const auto box = FeasibleSet::box(Vector::Zero(2), Vector::Ones(2));
  CHECK(box.contains(Vector::Zero(2), 0.0));
  CHECK_FALSE(box.contains(Vector::Constant(2, 1.1), 0.05));

  const Eigen::Index n = 5;
  const auto over = FeasibleSet::ev_charging(Vector::Ones(n), static_cast<double>(n) + 1.0);
  for (double tol : {0.0, 0.5, 0.99}) CHECK_FALSE(over.contains(Vector::Ones(n), tol));
}

TEST_CASE("check_nonempty") {
  CHECK_FALSE(FeasibleSet::ev_charging(Vector::Zero(24), 1.0).check_nonempty().nonempty);

  const auto nine = FeasibleSet::ev_charging(Vector::Ones(24), 9.0).check_nonempty();
  REQUIRE(nine.nonempty);
  REQUIRE(nine.witness.has_value());
  CHECK(nine.witness->sum() == doctest::Approx(9.0));
  CHECK((nine.witness->array() > 0.0).count() == 9);

  SUBCASE("ramp feasibility against a grid search") {
    // Exhaustive search over profiles on a 0.25 grid for n = 4.
    std::mt19937_64 rng(27);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double step = 0.25;
    for (int trial = 0; trial < 60; ++trial) {
      Vector x_tilde(4);
      for (int t = 0; t < 4; ++t) x_tilde(t) = step * std::floor(u(rng) * 9.0);
      const double ramp = step * (1.0 + std::floor(u(rng) * 4.0));
      const double theta = step * std::floor(u(rng) * 33.0);
      double best = -1.0;
      for (int a = 0; a <= 8; ++a)
        for (int b = 0; b <= 8; ++b)
          for (int c = 0; c <= 8; ++c)
            for (int d = 0; d <= 8; ++d) {
              const Vector x = (Vector(4) << a, b, c, d).finished() * step;
              if (((x - x_tilde).array() > 1e-12).any()) continue;
              bool ok = true;
              for (int t = 0; t < 3; ++t) ok = ok && std::abs(x(t + 1) - x(t)) <= ramp + 1e-12;
              if (ok) best = std::max(best, x.sum());
            }
      const bool grid_feasible = best >= theta - 1e-12;
      const auto result = FeasibleSet::ev_charging(x_tilde, theta, ramp).check_nonempty();
      CHECK(result.nonempty == grid_feasible);
      if (result.nonempty) CHECK(FeasibleSet::ev_charging(x_tilde, theta, ramp).contains(*result.witness, 1e-12));
    }
  }
  SUBCASE("empty EV set with ramp produces a certificate") {
    const auto set = FeasibleSet::ev_charging((Vector(3) << 0.0, 5.0, 0.0).finished(), 2.0, 1.0);
    const auto res = set.check_nonempty();
    CHECK_FALSE(res.nonempty);
    REQUIRE(res.certificate.has_value());
    CHECK(set.halfspace_rhs().dot(*res.certificate) < 0.0);
  }
  SUBCASE("slab witness") {
    const auto set = FeasibleSet::affine_slab((Vector(2) << 1.0, 2.0).finished(), (Vector(2) << 3.0, 4.0).finished(),
                                              (Vector(2) << 4.0, -3.0).finished());
    const auto res = set.check_nonempty();
    REQUIRE(res.nonempty);
    CHECK(set.contains(*res.witness, 1e-12));
  }
}

TEST_CASE("malformed descriptors") {
  CHECK_THROWS_AS(FeasibleSet::ev_charging(Vector::Constant(3, -1.0), 1.0), ValidationError);
  CHECK_THROWS_AS(FeasibleSet::ev_charging(Vector::Ones(3), 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(FeasibleSet::box(Vector::Zero(2), Vector::Zero(3)), ValidationError);
  CHECK_THROWS_AS(FeasibleSet::affine_slab(Vector::Ones(2), Vector::Ones(2), Vector::Constant(2, 2.0)), ValidationError);
}

TEST_CASE("norm bounds") {
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    const auto set = random_polytope(rng, 3, 4);
    const double bound = set.norm_bound();
    for (int k = 0; k < 20; ++k) CHECK(set.project(random_vector(rng, 3, -50.0, 50.0)).norm() <= bound + 1e-9);
  }
  const auto ev = FeasibleSet::ev_charging(Vector::Constant(4, 3.0), 2.0, 1.0);
  CHECK(ev.norm_bound() <= Vector::Constant(4, 3.0).norm());
}
