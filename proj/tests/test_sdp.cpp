#include <random>
#include <sstream>

#include "doctest.h"
#include "lpvsd/sdp.hpp"
#include "support.hpp"

using namespace lpvsd;
using namespace lpvsd::sdp;

namespace {

Constraint dense_constraint(const Matrix& f0, const std::vector<Matrix>& fj) {
  Constraint c;
  c.dim = static_cast<int>(f0.rows());
  c.f0 = SymSparse::from_dense(f0);
  for (std::size_t j = 0; j < fj.size(); ++j) {
    auto s = SymSparse::from_dense(fj[j]);
    if (!s.empty()) c.terms.push_back({static_cast<int>(j), s});
  }
  return c;
}

Problem one_var(const std::vector<std::pair<Matrix, Matrix>>& cons, double cost = 1.0) {
  Problem p;
  p.m = 1;
  p.c = Vector::Constant(1, cost);
  for (const auto& [f0, f1] : cons) p.constraints.push_back(dense_constraint(f0, {f1}));
  return p;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Smallest x on a fine scan with lambda_max(F0 + x F1) <= 0 for all constraints.
double scan_minimum(const Problem& p, double lo, double hi, int steps) {
  for (int i = 0; i <= steps; ++i) {
    const double x = lo + (hi - lo) * i / steps;
    const auto r = residual(p, Vector::Constant(1, x));
    if (*std::max_element(r.begin(), r.end()) <= 1e-12) return x;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TEST_CASE("scalar constraint 1 - gamma <= 0") {
  const auto p = one_var({{mat({{1.0}}), mat({{-1.0}})}});
  const auto s = solve(p);
  CHECK(s.status == Status::optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.max_residual <= 1e-7);
}

TEST_CASE("contradictory scalars are infeasible") {
  // diag(2 - x, x) <= 0 needs x >= 2 and x <= 0.
  const auto p = one_var({{mat({{2.0, 0.0}, {0.0, 0.0}}), mat({{-1.0, 0.0}, {0.0, 1.0}})}});
  const auto s = solve(p);
  CHECK(s.status == Status::infeasible);
}

TEST_CASE("2x2 boundary |x| <= 1 matches a brute-force scan") {
  const auto p = one_var({{mat({{-1.0, 0.0}, {0.0, -1.0}}), mat({{0.0, 1.0}, {1.0, 0.0}})}});
  const auto s = solve(p);
  CHECK(s.status == Status::optimal);
  CHECK(s.x[0] == doctest::Approx(-1.0).epsilon(1e-6));
  const double scan = scan_minimum(p, -2.0, 2.0, 40000);
  CHECK(scan == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(std::abs(s.x[0] - scan) <= 1e-4);
}

TEST_CASE("multi-variable problem against a known optimum") {
  // minimize x0 + x1 s.t. [[-x0, 1], [1, -x1]] <= 0  ->  x0 x1 >= 1, optimum 2 at (1, 1).
  Problem p;
  p.m = 2;
  p.c = Vector::Ones(2);
  p.constraints.push_back(dense_constraint(mat({{0.0, 1.0}, {1.0, 0.0}}),
                                           {mat({{-1.0, 0.0}, {0.0, 0.0}}), mat({{0.0, 0.0}, {0.0, -1.0}})}));
  const auto s = solve(p);
  CHECK(s.status == Status::optimal);
  CHECK(s.objective == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(s.x[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("largest eigenvalue minimization") {
  // minimize t s.t. S - t I <= 0; optimum is lambda_max(S).
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = Matrix::NullaryExpr(6, 6, [&] { return g(rng); });
    const Matrix S = 0.5 * (a + a.transpose());
    const auto p = one_var({{S, -Matrix::Identity(6, 6)}});
    const auto s = solve(p);
    CHECK(s.status == Status::optimal);
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(S).eigenvalues().maxCoeff();
    CHECK(s.x[0] == doctest::Approx(lmax).epsilon(1e-6));
  }
}

TEST_CASE("residual examples") {
  Problem p;
  p.m = 2;
  p.c = Vector::Zero(2);
  for (int k = 0; k < 3; ++k) {
    p.constraints.push_back(dense_constraint(-Matrix::Identity(3, 3),
                                             {Matrix::Identity(3, 3) * (k + 1), Matrix::Zero(3, 3)}));
  }
  for (double r : residual(p, Vector::Zero(2))) CHECK(r == doctest::Approx(-1.0));

  const Vector x = (Vector(2) << 0.25, -3.0).finished();
  auto forward = residual(p, x);
  auto q = p;
  std::reverse(q.constraints.begin(), q.constraints.end());
  auto backward = residual(q, x);
  std::reverse(backward.begin(), backward.end());
  CHECK(forward == backward);

  auto scaled = p;
  for (auto& c : scaled.constraints) {
    for (auto& e : c.f0.entries) e.value *= 10;
    for (auto& t : c.terms)
      for (auto& e : t.coeff.entries) e.value *= 10;
  }
  const auto r10 = residual(scaled, x);
  for (std::size_t i = 0; i < r10.size(); ++i) CHECK(r10[i] == doctest::Approx(10 * forward[i]).epsilon(1e-12));
}

TEST_CASE("solver residual contract and determinism") {
  const auto p = one_var({{mat({{-1.0, 0.0}, {0.0, -1.0}}), mat({{0.0, 1.0}, {1.0, 0.0}})},
                          {mat({{0.5}}), mat({{-1.0}})}},
                         -1.0);
  const auto a = solve(p);
  const auto b = solve(p);
  REQUIRE((a.status == Status::optimal || a.status == Status::feasible));
  const auto r = residual(p, a.x);
  CHECK(*std::max_element(r.begin(), r.end()) <= 1e-7);
  CHECK(a.x == b.x);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("text format round trip is exact") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  Problem p;
  p.m = 3;
  p.c = Vector::NullaryExpr(3, [&] { return u(rng); });
  for (int k = 0; k < 4; ++k) {
    const int d = 2 + k;
    std::vector<Matrix> fj;
    for (int j = 0; j < 3; ++j) {
      Matrix a = Matrix::NullaryExpr(d, d, [&] { return u(rng) / 3.0; });
      fj.push_back(a + a.transpose());
    }
    Matrix f0 = Matrix::NullaryExpr(d, d, [&] { return u(rng) * 1e-17; });
    p.constraints.push_back(dense_constraint(f0 + f0.transpose(), fj));
  }
  std::stringstream ss;
  write_text(ss, p);
  const Problem q = read_text(ss);
  CHECK(q == p);
  std::stringstream again;
  write_text(again, q);
  std::stringstream first;
  write_text(first, p);
  CHECK(again.str() == first.str());
}

TEST_CASE("malformed problems are rejected") {
  Problem p;
  p.m = 1;
  p.c = Vector::Zero(2);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  std::stringstream bad("lpvsd-sdp 7\n");
  CHECK_THROWS(read_text(bad));
}
