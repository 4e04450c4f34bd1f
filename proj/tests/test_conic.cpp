#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>

#include "iscc/conic.hpp"
#include "iscc/rng.hpp"
#include "iscc/scenario.hpp"

using namespace iscc;
using namespace iscc::conic;

namespace {

CMat random_hermitian(int n, std::uint64_t seed) {
  Philox rng(seed, 0);
  CMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.cnormal();
  return 0.5 * (m + m.adjoint().eval());
}

CMat random_pd(int n, std::uint64_t seed, double ridge = 0.3) {
  Philox rng(seed, 1);
  CMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.cnormal();
  return m * m.adjoint() + ridge * CMat::Identity(n, n);
}

double min_eig(const CMat& h) {
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  return es.eigenvalues().minCoeff();
}

// Pin every entry of a PSD block to the given Hermitian value.
void pin_block(ConicProblem& p, int blk, const CMat& val) {
  const int n = static_cast<int>(val.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      p.add_eq(p.entry_re(blk, i, j), val(i, j).real(), "pin_re");
      if (i != j) p.add_eq(p.entry_im(blk, i, j), val(i, j).imag(), "pin_im");
    }
  }
}

}  // namespace

TEST_CASE("complex embedding doubles the spectrum") {
  CMat h(2, 2);
  h << cdouble(0, 0), cdouble(0, 1), cdouble(0, -1), cdouble(0, 0);
  const RMat e = embed_complex(h);
  Eigen::SelfAdjointEigenSolver<RMat> es(e);
  REQUIRE(es.eigenvalues().size() == 4);
  CHECK(es.eigenvalues()(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(es.eigenvalues()(1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(es.eigenvalues()(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(es.eigenvalues()(3) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("complex embedding preserves inner products up to a factor two") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const CMat h1 = random_hermitian(3, 10 + seed);
    const CMat h2 = random_hermitian(3, 20 + seed);
    const double complex_ip = (h1 * h2).trace().real();
    const double real_ip = (embed_complex(h1).array() * embed_complex(h2).array()).sum();
    CHECK(real_ip == doctest::Approx(2.0 * complex_ip).epsilon(1e-12));
  }
}

TEST_CASE("unit-trace toy problem solves to one") {
  ConicProblem p;
  const int x = p.add_psd_block(2, "x");
  p.add_eq(p.trace_term(x, CMat::Identity(2, 2)), 1.0, "trace");
  p.minimize(p.trace_term(x, CMat::Identity(2, 2)));
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.objective - 1.0) <= 1e-7);
  CHECK(std::abs(sol.psd_values[x].trace().real() - 1.0) <= 1e-7);
  CHECK(min_eig(sol.psd_values[x]) >= -1e-9);
}

TEST_CASE("tied linear matrix inequality reproduces the hand optimum") {
  // minimize x subject to [[x, 1], [1, x]] >= 0, i.e. x >= 1.
  ConicProblem p;
  const int x = p.add_scalar("x");
  const int lmi = p.add_psd_block(2, "lmi");
  p.add_eq(p.entry_re(lmi, 0, 0) - p.scalar_term(x), 0.0, "tie00");
  p.add_eq(p.entry_re(lmi, 1, 1) - p.scalar_term(x), 0.0, "tie11");
  p.add_eq(p.entry_re(lmi, 0, 1), 1.0, "tie01re");
  p.add_eq(p.entry_im(lmi, 0, 1), 0.0, "tie01im");
  p.minimize(p.scalar_term(x));
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.objective - 1.0) <= 1e-6);
  CHECK(std::abs(sol.scalar_values[x] - 1.0) <= 1e-6);
}

TEST_CASE("minimum eigenvalue oracle over random Hermitian objectives") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CMat c = random_hermitian(4, 100 + seed);
    ConicProblem p;
    const int x = p.add_psd_block(4, "x");
    p.add_eq(p.trace_term(x, CMat::Identity(4, 4)), 1.0, "trace");
    p.minimize(p.trace_term(x, c));
    const ConicSolution sol = solve(p);
    const double lmin = min_eig(c);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(std::abs(sol.objective - lmin) <= 1e-6 * (1.0 + std::abs(lmin)));
    // Strong duality and a PSD primal certificate.
    CHECK(std::abs(sol.objective - sol.dual_objective) <= 1e-6 * (1.0 + std::abs(sol.objective)));
    CHECK(min_eig(sol.psd_values[x]) >= -1e-9);
  }
}

TEST_CASE("random equality-form problems satisfy the optimality conditions") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const int n = 3, m = 4;
    const CMat c = random_hermitian(n, 300 + seed);
    const CMat x0 = random_pd(n, 400 + seed);
    std::vector<CMat> a(m);
    ConicProblem p;
    const int x = p.add_psd_block(n, "x");
    // Pin the trace so the feasible set is compact and the problem bounded.
    a[0] = CMat::Identity(n, n);
    for (int i = 1; i < m; ++i) a[i] = random_hermitian(n, 500 + 10 * seed + i);
    for (int i = 0; i < m; ++i)
      p.add_eq(p.trace_term(x, a[i]), (a[i] * x0).trace().real(), "row");
    p.minimize(p.trace_term(x, c));
    const ConicSolution sol = solve(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    const CMat& xs = sol.psd_values[x];
    for (int i = 0; i < m; ++i) {
      const double lhs = (a[i] * xs).trace().real();
      const double rhs = (a[i] * x0).trace().real();
      CHECK(std::abs(lhs - rhs) <= 1e-6 * (1.0 + std::abs(rhs)));
    }
    // Dual slack from the reported multipliers, and complementarity.
    CMat s = c;
    for (int i = 0; i < m; ++i) s -= sol.dual_y[i] * a[i];
    CHECK(min_eig(s) >= -1e-6);
    CHECK(std::abs((s * xs).trace().real()) <= 1e-5 * (1.0 + std::abs(sol.objective)));
    CHECK(std::abs(sol.objective - sol.dual_objective) <= 1e-6 * (1.0 + std::abs(sol.objective)));
  }
}

TEST_CASE("inactive inequalities get vanishing multipliers") {
  // minimize tr(diag(-1, 2) X) with tr(X) <= 1 active and tr(X) <= 2 slack.
  ConicProblem p;
  const int x = p.add_psd_block(2, "x");
  CMat c = CMat::Zero(2, 2);
  c(0, 0) = -1.0;
  c(1, 1) = 2.0;
  p.add_le(p.trace_term(x, CMat::Identity(2, 2)), 1.0, "tight");
  p.add_le(p.trace_term(x, CMat::Identity(2, 2)), 2.0, "loose");
  p.minimize(p.trace_term(x, c));
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.objective + 1.0) <= 1e-6);
  CHECK(sol.multiplier(p, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::abs(sol.multiplier(p, 1)) <= 1e-6);
  // Complementarity: multiplier times slack vanishes on both rows.
  const double trace_x = sol.psd_values[x].trace().real();
  CHECK(std::abs(sol.multiplier(p, 0) * (1.0 - trace_x)) <= 1e-6);
  CHECK(std::abs(sol.multiplier(p, 1) * (2.0 - trace_x)) <= 1e-6);
}

TEST_CASE("infeasible inequality is certified by phase one") {
  ConicProblem p;
  const int x = p.add_psd_block(2, "x");
  p.add_le(p.trace_term(x, CMat::Identity(2, 2)), -1.0, "impossible");
  p.minimize(p.trace_term(x, CMat::Identity(2, 2)));
  const ConicSolution sol = solve(p);
  CHECK(sol.status == SolveStatus::infeasible);
  CHECK(sol.phase1_certificate > 1e-7);

  const Phase1Result ph = phase1_start(p);
  CHECK(!ph.feasible);
  CHECK(ph.certificate > 1e-7);
}

TEST_CASE("marginally infeasible bound is still certified") {
  ConicProblem p;
  const int x = p.add_psd_block(2, "x");
  p.add_le(p.trace_term(x, CMat::Identity(2, 2)), -1e-3, "slightly_impossible");
  p.minimize(p.trace_term(x, CMat::Identity(2, 2)));
  const ConicSolution sol = solve(p);
  CHECK(sol.status == SolveStatus::infeasible);
  CHECK(sol.phase1_certificate > 1e-7);
}

TEST_CASE("phase one on an unconstrained block returns an interior point") {
  ConicProblem p;
  const int x = p.add_psd_block(3, "x");
  p.minimize(p.trace_term(x, CMat::Identity(3, 3)));
  const Phase1Result ph = phase1_start(p);
  CHECK(ph.feasible);
  CHECK(ph.certificate < 0.0);
  CHECK(min_eig(ph.psd_values[x]) > 0.0);
}

TEST_CASE("square lift reproduces the squared pinned value") {
  ConicProblem p;
  const int y = p.add_scalar("y");
  p.add_eq(p.scalar_term(y), 3.0, "pin_y");
  const LinExpr u = p.lift_square(p.scalar_term(y));
  p.minimize(u);
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.objective - 9.0) <= 1e-6 * 10.0);
  CHECK(std::abs(sol.value(u) - 9.0) <= 1e-5);
}

TEST_CASE("square lift with a caller-supplied epigraph variable") {
  ConicProblem p;
  const int y = p.add_scalar("y");
  const int u = p.add_scalar("u");
  p.add_eq(p.scalar_term(y), 3.0, "pin_y");
  p.lift_square(p.scalar_term(y), p.scalar_term(u));
  p.minimize(p.scalar_term(u));
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.scalar_values[u] - 9.0) <= 1e-5);
}

TEST_CASE("inverse lift and the chained inverse-square epigraph") {
  ConicProblem p;
  const int g = p.add_scalar("g");
  p.add_eq(p.scalar_term(g), 2.0, "pin_g");
  const LinExpr w = p.lift_inverse(p.scalar_term(g));    // w >= 1/g
  const LinExpr v = p.lift_square(w);                    // v >= w^2 >= 1/g^2
  p.minimize(w + v);
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.value(w) - 0.5) <= 1e-6);
  CHECK(std::abs(sol.value(v) - 0.25) <= 1e-6);
}

TEST_CASE("trace-inverse lift on a fixed diagonal matrix") {
  ConicProblem p;
  const int r = p.add_psd_block(2, "r");
  CMat fixed = CMat::Zero(2, 2);
  fixed(0, 0) = 1.0;
  fixed(1, 1) = 2.0;
  pin_block(p, r, fixed);
  const int u = p.lift_trace_inverse(r);
  p.minimize(p.trace_term(u, CMat::Identity(2, 2)));
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.objective - 1.5) <= 1e-6);
}

TEST_CASE("trace-inverse lift matches the explicit inverse on random matrices") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const CMat r_val = random_pd(3, 700 + seed);
    const CMat r_inv = r_val.inverse();
    ConicProblem p;
    const int r = p.add_psd_block(3, "r");
    pin_block(p, r, r_val);
    const int u = p.lift_trace_inverse(r);
    p.minimize(p.trace_term(u, CMat::Identity(3, 3)));
    const ConicSolution sol = solve(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    const double want = r_inv.trace().real();
    CHECK(std::abs(sol.objective - want) <= 1e-6 * (1.0 + want));
    // At the optimum the epigraph is tight: U recovers the matrix inverse.
    CHECK((sol.psd_values[u] - r_inv).cwiseAbs().maxCoeff() <= 1e-4 * (1.0 + want));
  }
}

TEST_CASE("greater-equal sugar flips into the canonical form") {
  ConicProblem p;
  const int x = p.add_scalar("x");
  p.add_ge(p.scalar_term(x), 5.0, "floor");
  p.minimize(p.scalar_term(x));
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(std::abs(sol.objective - 5.0) <= 1e-6 * 6.0);
}

TEST_CASE("solves are deterministic down to the bit") {
  const CMat c = random_hermitian(4, 900);
  auto build = [&]() {
    ConicProblem p;
    const int x = p.add_psd_block(4, "x");
    p.add_eq(p.trace_term(x, CMat::Identity(4, 4)), 1.0, "trace");
    p.minimize(p.trace_term(x, c));
    return p;
  };
  const ConicProblem p1 = build();
  const ConicProblem p2 = build();
  const ConicSolution s1 = solve(p1);
  const ConicSolution s2 = solve(p2);
  CHECK(s1.objective == s2.objective);
  CHECK(s1.iterations == s2.iterations);
  CHECK((s1.psd_values[0] - s2.psd_values[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("objective rescaling leaves the argmin unchanged") {
  const CMat c = random_hermitian(3, 950);
  auto solve_scaled = [&](double scale) {
    ConicProblem p;
    const int x = p.add_psd_block(3, "x");
    p.add_eq(p.trace_term(x, CMat::Identity(3, 3)), 1.0, "trace");
    p.minimize(p.trace_term(x, CMat(scale * c)));
    return solve(p);
  };
  const ConicSolution s1 = solve_scaled(1.0);
  const ConicSolution s1000 = solve_scaled(1000.0);
  REQUIRE(s1.status == SolveStatus::optimal);
  REQUIRE(s1000.status == SolveStatus::optimal);
  CHECK(std::abs(s1000.objective - 1000.0 * s1.objective) <=
        1e-5 * (1.0 + std::abs(1000.0 * s1.objective)));
  CHECK((s1.psd_values[0] - s1000.psd_values[0]).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("input validation rejects malformed coefficients") {
  ConicProblem p;
  const int x = p.add_psd_block(2, "x");
  const int s = p.add_scalar("s");
  CMat bad(2, 2);
  bad << 1.0, cdouble(0, 1), cdouble(0, 1), 2.0;  // not Hermitian
  CHECK_THROWS_AS((void)p.trace_term(x, bad), std::invalid_argument);
  CHECK_THROWS_AS((void)p.trace_term(x, CMat::Identity(3, 3)), std::invalid_argument);
  CHECK_THROWS_AS((void)p.entry_im(x, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)p.entry_re(x, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS((void)p.trace_term(s, CMat::Identity(1, 1)), std::invalid_argument);
  CHECK_THROWS_AS((void)p.scalar_term(x), std::invalid_argument);
  CHECK_THROWS_AS((void)p.add_psd_block(0, "zero"), std::invalid_argument);
}

TEST_CASE("dump and load round-trip byte for byte") {
  ConicProblem p;
  const int x = p.add_psd_block(2, "cov matrix");
  const int s = p.add_scalar("budget");
  const CMat c = random_hermitian(2, 990);
  p.add_eq(p.trace_term(x, CMat::Identity(2, 2)) + p.scalar_term(s, 2.0), 1.5, "mixed row");
  p.add_le(p.trace_term(x, c) + LinExpr(0.25), 3.0, "bounded row");
  p.minimize(p.trace_term(x, c) + p.scalar_term(s, -1.0));

  std::stringstream first;
  p.dump(first);
  std::istringstream reread(first.str());
  const ConicProblem q = ConicProblem::load(reread);
  std::stringstream second;
  q.dump(second);
  CHECK(first.str() == second.str());

  const ConicSolution sp = solve(p);
  const ConicSolution sq = solve(q);
  CHECK(sp.objective == sq.objective);
  CHECK(sp.iterations == sq.iterations);
}
