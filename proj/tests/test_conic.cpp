#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "corsma/conic.hpp"
#include "corsma/conic_solver.hpp"

using namespace corsma;
using namespace corsma::conic;

namespace {

SolveResult run(const ConicProgram& p, ExpMode mode = ExpMode::OuterCuts,
                ExpCutCarry* carry = nullptr) {
  SolveOptions opts;
  opts.exp_mode = mode;
  return solve(p, opts, carry);
}

}  // namespace

TEST_CASE("scalar linear program hits its bound with the right dual") {
  ConicProgram p;
  int x = p.new_var(-1.0);  // maximize x
  p.add_nonneg(LinExpr(3.0).add(x, -1.0));
  p.add_nonneg(LinExpr(0.0).add(x, 1.0));
  auto r = run(p);
  REQUIRE(r.ok());
  CHECK(r.x[x] == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(-3.0).epsilon(1e-7));
  CHECK(r.z[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.z[1] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("two variable linear program") {
  ConicProgram p;
  int x = p.new_var(1.0), y = p.new_var(2.0);
  p.add_nonneg(LinExpr(-1.0).add(x, 1.0).add(y, 1.0));
  p.add_nonneg(LinExpr().add(x, 1.0));
  p.add_nonneg(LinExpr().add(y, 1.0));
  auto r = run(p);
  REQUIRE(r.ok());
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.x[x] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x[y] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("box linear programs against closed form over seeds") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(500 + seed);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    const int n = 6;
    ConicProgram p;
    VecX c(n), lo(n), hi(n);
    std::vector<int> xs;
    for (int i = 0; i < n; ++i) {
      c[i] = U(rng);
      if (std::abs(c[i]) < 0.1) c[i] = 0.3;
      double a = U(rng), b2 = U(rng);
      lo[i] = std::min(a, b2);
      hi[i] = std::max(a, b2) + 0.5;
      xs.push_back(p.new_var(c[i]));
      p.add_nonneg(LinExpr(-lo[i]).add(xs[i], 1.0));
      p.add_nonneg(LinExpr(hi[i]).add(xs[i], -1.0));
    }
    auto r = run(p);
    REQUIRE(r.ok());
    double expect = 0.0;
    for (int i = 0; i < n; ++i) expect += c[i] * (c[i] > 0 ? lo[i] : hi[i]);
    CHECK(r.objective == doctest::Approx(expect).epsilon(1e-6));
    CHECK(r.s.dot(r.z) < 1e-5 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("second order cone: linear objective over a ball") {
  for (int seed = 0; seed < 12; ++seed) {
    std::mt19937_64 rng(900 + seed);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    const int n = 4;
    VecX a(n), c(n);
    for (int i = 0; i < n; ++i) {
      a[i] = U(rng);
      c[i] = U(rng);
    }
    if (c.norm() < 0.2) c[0] += 1.0;
    const double rad = 0.3 + std::abs(U(rng));
    ConicProgram p;
    auto xs = p.new_vars(n);
    for (int i = 0; i < n; ++i) p.set_objective(xs[i], c[i]);
    std::vector<LinExpr> rows{LinExpr(rad)};
    for (int i = 0; i < n; ++i) rows.push_back(LinExpr(-a[i]).add(xs[i], 1.0));
    p.add_soc(rows);
    auto r = run(p);
    REQUIRE(r.ok());
    CHECK(r.objective == doctest::Approx(c.dot(a) - rad * c.norm()).epsilon(1e-6));
    for (int i = 0; i < n; ++i)
      CHECK(r.x[xs[i]] == doctest::Approx(a[i] - rad * c[i] / c.norm()).epsilon(1e-4));
  }
}

TEST_CASE("point to plane distance as a second order program") {
  ConicProgram p;
  int t = p.new_var(1.0);
  auto xs = p.new_vars(3);
  const VecX a = (VecX(3) << 1.0, -2.0, 0.5).finished();
  const VecX b = (VecX(3) << 1.0, 2.0, 2.0).finished();
  const double d = 9.0;
  LinExpr plane(-d);
  for (int i = 0; i < 3; ++i) plane.add(xs[i], b[i]);
  p.add_nonneg(plane);
  LinExpr nplane(d);
  for (int i = 0; i < 3; ++i) nplane.add(xs[i], -b[i]);
  p.add_nonneg(nplane);
  std::vector<LinExpr> rows{LinExpr().add(t, 1.0)};
  for (int i = 0; i < 3; ++i) rows.push_back(LinExpr(-a[i]).add(xs[i], 1.0));
  p.add_soc(rows);
  auto r = run(p);
  REQUIRE(r.ok());
  CHECK(r.objective == doctest::Approx(std::abs(b.dot(a) - d) / b.norm()).epsilon(1e-6));
}

TEST_CASE("rotated cone models a sum of squares bound") {
  ConicProgram p;
  int t = p.new_var(1.0);
  int x1 = p.new_var(), x2 = p.new_var();
  p.add_nonneg(LinExpr(-3.0).add(x1, 1.0));
  p.add_nonneg(LinExpr(-4.0).add(x2, 1.0));
  p.add_rotated_soc(LinExpr().add(t, 1.0), LinExpr(1.0),
                    {LinExpr().add(x1, 1.0), LinExpr().add(x2, 1.0)});
  auto r = run(p);
  REQUIRE(r.ok());
  CHECK(r.objective == doctest::Approx(25.0).epsilon(1e-6));
}

TEST_CASE("real semidefinite program recovers the top eigenvalue") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> N(0.0, 1.0);
  const int d = 5;
  MatX Mraw(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) Mraw(i, j) = N(rng);
  MatX Msym = 0.5 * (Mraw + Mraw.transpose());
  ConicProgram p;
  int t = p.new_var(1.0);
  std::vector<LinExpr> rows;
  const double rt2 = std::sqrt(2.0);
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i) {
      LinExpr e(i == j ? -Msym(i, j) : -rt2 * Msym(i, j));
      if (i == j) e.add(t, 1.0);
      rows.push_back(e);
    }
  p.add_psd(d, rows);
  auto r = run(p);
  REQUIRE(r.ok());
  Eigen::SelfAdjointEigenSolver<MatX> es(Msym, Eigen::EigenvaluesOnly);
  CHECK(r.objective == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-6));
}

TEST_CASE("hermitian embedding doubles the spectrum and keeps traces") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> N(0.0, 1.0);
  const int d = 4;
  CMatX H(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) H(i, j) = cplx(N(rng), N(rng));
  CMatX Herm = 0.5 * (H + H.adjoint());
  MatX Y = hermitian_to_real_embedding(Herm);
  CHECK((Y - Y.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(Y.trace() == doctest::Approx(2.0 * Herm.trace().real()).epsilon(1e-12));
  Eigen::SelfAdjointEigenSolver<CMatX> eh(Herm, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<MatX> ey(Y, Eigen::EigenvaluesOnly);
  VecX lh = eh.eigenvalues(), ly = ey.eigenvalues();
  for (int i = 0; i < d; ++i) {
    CHECK(ly[2 * i] == doctest::Approx(lh[i]).epsilon(1e-9));
    CHECK(ly[2 * i + 1] == doctest::Approx(lh[i]).epsilon(1e-9));
  }
  VecX v = svec(Y);
  MatX back = smat(v);
  CHECK((back - Y).cwiseAbs().maxCoeff() < 1e-12);
  MatX Z = MatX::Random(2 * d, 2 * d);
  MatX Zs = 0.5 * (Z + Z.transpose());
  CHECK(svec(Y).dot(svec(Zs)) == doctest::Approx((Y * Zs).trace()).epsilon(1e-9));
}

TEST_CASE("complex semidefinite program through the embedding helpers") {
  std::mt19937_64 rng(321);
  std::normal_distribution<double> N(0.0, 1.0);
  const int d = 3;
  CMatX H(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) H(i, j) = cplx(N(rng), N(rng));
  CMatX Herm = 0.5 * (H + H.adjoint());

  ConicProgram p;
  auto params = p.new_vars(hermitian_param_count(d));
  LinExpr obj = hermitian_trace_form(Herm, params);
  obj.scale(-1.0);  // maximize tr(Herm X)
  for (const auto& [var, coef] : obj.terms) p.set_objective(var, coef);
  LinExpr tr = hermitian_trace_form(CMatX::Identity(d, d), params);
  LinExpr tr_hi(1.0);
  for (auto& [var, coef] : tr.terms) tr_hi.add(var, -coef);
  p.add_nonneg(tr_hi);
  LinExpr tr_lo(-1.0);
  for (auto& [var, coef] : tr.terms) tr_lo.add(var, coef);
  p.add_nonneg(tr_lo);
  p.add_psd(2 * d, hermitian_embedding_rows(d, params));

  auto r = run(p);
  REQUIRE(r.ok());
  Eigen::SelfAdjointEigenSolver<CMatX> es(Herm);
  CHECK(-r.objective == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-6));
  CMatX X = hermitian_from_params(d, r.x, params);
  CHECK(X.trace().real() == doctest::Approx(1.0).epsilon(1e-6));
  Eigen::SelfAdjointEigenSolver<CMatX> ex(X, Eigen::EigenvaluesOnly);
  CHECK(ex.eigenvalues().minCoeff() > -1e-6);
}

TEST_CASE("exponential rows via outer cuts reach the analytic optimum") {
  ConicProgram p;
  int x = p.new_var(-1.0);
  p.add_exp(LinExpr().add(x, 1.0), LinExpr(5.0), 0.0, 3.0);
  auto r = run(p);
  REQUIRE(r.ok());
  CHECK(r.x[x] == doctest::Approx(std::log(5.0)).epsilon(1e-6));
  CHECK(r.exp_violation < 1e-8);
}

TEST_CASE("exponential rows via inner chords stay conservative") {
  ConicProgram p;
  int x = p.new_var(-1.0);
  p.add_exp(LinExpr().add(x, 1.0), LinExpr(5.0), 0.0, 3.0);
  auto r = run(p, ExpMode::InnerChords);
  REQUIRE(r.ok());
  CHECK(r.x[x] <= std::log(5.0) + 1e-8);
  CHECK(r.x[x] > std::log(5.0) - 0.01);
}

TEST_CASE("cut carry reuses tangents on a repeated solve") {
  ExpCutCarry carry;
  ConicProgram p;
  int x = p.new_var(-1.0);
  int y = p.new_var(-1.0);
  p.add_exp(LinExpr().add(x, 1.0), LinExpr(4.0), -1.0, 3.0);
  std::vector<LinExpr> soc{LinExpr(3.0), LinExpr().add(y, 1.0)};
  p.add_soc(soc);
  auto r1 = run(p, ExpMode::OuterCuts, &carry);
  REQUIRE(r1.ok());
  auto r2 = run(p, ExpMode::OuterCuts, &carry);
  REQUIRE(r2.ok());
  CHECK(r2.cut_rounds <= r1.cut_rounds);
  CHECK(r1.objective == doctest::Approx(-(std::log(4.0) + 3.0)).epsilon(1e-6));
  CHECK(r2.objective == doctest::Approx(r1.objective).epsilon(1e-9));
}

TEST_CASE("mixed cone program with exp, soc and nonneg rows") {
  ConicProgram p;
  int x = p.new_var(-1.0), y = p.new_var(-1.0), slack = p.new_var();
  p.add_exp(LinExpr().add(x, 1.0), LinExpr(4.0), -2.0, 2.0);
  p.add_soc({LinExpr(3.0), LinExpr().add(y, 1.0)});
  p.add_nonneg(LinExpr(10.0).add(slack, -1.0));
  p.add_nonneg(LinExpr().add(slack, 1.0));
  auto r = run(p);
  REQUIRE(r.ok());
  CHECK(-r.objective == doctest::Approx(std::log(4.0) + 3.0).epsilon(1e-6));
}

TEST_CASE("conflicting bounds yield a primal infeasibility certificate") {
  ConicProgram p;
  int x = p.new_var(1.0);
  p.add_nonneg(LinExpr(-1.0).add(x, 1.0));   // x >= 1
  p.add_nonneg(LinExpr(0.0).add(x, -1.0));   // x <= 0
  auto r = run(p);
  CHECK(r.status == SolveStatus::PrimalInfeasible);
}

TEST_CASE("unbounded objective yields a dual infeasibility certificate") {
  ConicProgram p;
  int x = p.new_var(-1.0);
  p.add_nonneg(LinExpr().add(x, 1.0));
  auto r = run(p);
  CHECK(r.status == SolveStatus::DualInfeasible);
}

TEST_CASE("solves are deterministic") {
  auto build = [] {
    ConicProgram p;
    int x = p.new_var(-1.0), y = p.new_var(0.5);
    p.add_exp(LinExpr().add(x, 1.0).add(y, -0.2), LinExpr(6.0), -3.0, 3.0);
    p.add_soc({LinExpr(2.0).add(y, 0.5), LinExpr(-0.3).add(x, 1.0), LinExpr().add(y, 1.0)});
    p.add_nonneg(LinExpr(5.0).add(y, -1.0).add(x, -0.25));
    p.add_nonneg(LinExpr(5.0).add(y, 1.0));
    return p;
  };
  auto a = run(build()), b2 = run(build());
  REQUIRE(a.ok());
  REQUIRE(b2.ok());
  CHECK(a.x == b2.x);
  CHECK(a.objective == b2.objective);
}

TEST_CASE("program dump lists every row") {
  ConicProgram p;
  int x = p.new_var(1.0);
  p.add_nonneg(LinExpr(1.0).add(x, -1.0));
  p.add_exp(LinExpr().add(x, 1.0), LinExpr(2.0), -1.0, 1.0);
  auto text = p.dump();
  CHECK(text.find("vars 1") != std::string::npos);
  CHECK(text.find("nonneg") != std::string::npos);
  CHECK(text.find("exp") != std::string::npos);
}
