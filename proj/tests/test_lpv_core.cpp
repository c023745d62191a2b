#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "lpvsd/engine_afr.hpp"
#include "lpvsd/lpv_core.hpp"
#include "support.hpp"

using namespace lpvsd;

namespace {

ScheduleSet box(double lo, double hi) {
  ScheduleSet s;
  s.lower = Vector::Constant(1, lo);
  s.upper = Vector::Constant(1, hi);
  s.rate_bound = Vector::Zero(1);
  return s;
}

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST_CASE("eval_affine examples") {
  const auto s = box(-1e4, 1e4);
  AffineMatrixFn f(m1(1.0), {m1(2.0)});
  CHECK(eval_affine(f, Vector::Zero(1), s).value(0, 0) == 1.0);

  AffineMatrixFn g(m1(0.0), {m1(-1.0 / 100.0)});
  CHECK(eval_affine(g, Vector::Constant(1, 1000.0), s).value(0, 0) == doctest::Approx(-10.0).epsilon(1e-15));

  AffineMatrixFn id(Matrix::Identity(2, 2), {Matrix::Zero(2, 2)});
  CHECK(eval_affine(id, Vector::Constant(1, 1234.5), s).value == Matrix::Identity(2, 2));
}

TEST_CASE("eval_affine flags out-of-box points and rejects bad parameter length") {
  AffineMatrixFn f(m1(1.0), {m1(2.0)});
  const auto e = eval_affine(f, Vector::Constant(1, 5.0), box(0, 1));
  CHECK(e.outside_schedule);
  CHECK(e.value(0, 0) == 11.0);
  CHECK_FALSE(eval_affine(f, Vector::Constant(1, 0.5), box(0, 1)).outside_schedule);
  CHECK_THROWS_AS(f(Vector::Zero(2)), std::invalid_argument);
  CHECK_THROWS_AS(AffineMatrixFn(m1(1.0), {Matrix::Zero(2, 2)}), std::invalid_argument);
}

TEST_CASE("eval_affine is affine along segments") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix base = Matrix::NullaryExpr(3, 4, [&] { return u(rng); });
    std::vector<Matrix> slopes{Matrix::NullaryExpr(3, 4, [&] { return u(rng); }),
                               Matrix::NullaryExpr(3, 4, [&] { return u(rng); })};
    AffineMatrixFn f(base, slopes);
    const Vector r1 = Vector::NullaryExpr(2, [&] { return 10.0 * u(rng); });
    const Vector r2 = Vector::NullaryExpr(2, [&] { return 10.0 * u(rng); });
    const double a = 0.5 * (u(rng) + 1.0);
    const Matrix lhs = f(a * r1 + (1.0 - a) * r2);
    const Matrix rhs = a * f(r1) + (1.0 - a) * f(r2);
    CHECK(testing::max_abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("make_grid examples") {
  const auto g = make_grid(box(800, 4000), {5});
  REQUIRE(g.size() == 5);
  const double expected[] = {800, 1600, 2400, 3200, 4000};
  for (int i = 0; i < 5; ++i) CHECK(g.points[static_cast<std::size_t>(i)][0] == expected[i]);

  const auto g2 = make_grid(box(0, 1), {2});
  REQUIRE(g2.size() == 2);
  CHECK(g2.points[0][0] == 0.0);
  CHECK(g2.points[1][0] == 1.0);

  ScheduleSet two;
  two.lower = Vector::Zero(2);
  two.upper = Vector::Ones(2);
  two.rate_bound = Vector::Zero(2);
  CHECK(make_grid(two, {2, 3}).size() == 6);

  CHECK_THROWS_AS(make_grid(box(0, 1), {1}), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(two, {3}), std::invalid_argument);
}

TEST_CASE("grid points are sorted, in the box and contain the bounds") {
  ScheduleSet s;
  s.lower = (Vector(2) << -3.0, 10.0).finished();
  s.upper = (Vector(2) << 2.0, 11.0).finished();
  s.rate_bound = Vector::Zero(2);
  for (int c0 : {2, 3, 7}) {
    for (int c1 : {2, 5}) {
      const auto g = make_grid(s, {c0, c1});
      CHECK(g.size() == static_cast<std::size_t>(c0 * c1));
      for (int axis = 0; axis < 2; ++axis) {
        std::set<double> vals;
        for (const auto& p : g.points) {
          CHECK(s.contains(p));
          vals.insert(p[axis]);
        }
        CHECK(*vals.begin() == s.lower[axis]);
        CHECK(*vals.rbegin() == s.upper[axis]);
      }
    }
  }
}

TEST_CASE("vertex_signs enumerates distinct sign vectors") {
  for (int n = 1; n <= 5; ++n) {
    const auto v = vertex_signs(n);
    CHECK(v.size() == (std::size_t{1} << n));
    std::set<std::vector<int>> uniq(v.begin(), v.end());
    CHECK(uniq.size() == v.size());
    for (const auto& s : v) {
      CHECK(static_cast<int>(s.size()) == n);
      for (int x : s) CHECK((x == 1 || x == -1));
    }
  }
  const auto one = vertex_signs(1);
  CHECK(one[0] == std::vector<int>{1});
  CHECK(one[1] == std::vector<int>{-1});
  CHECK_THROWS_AS(vertex_signs(0), std::invalid_argument);
}

TEST_CASE("validate_plant on the engine plant and forced errors") {
  const auto& p = testing::afr_plant();
  CHECK(validate_plant(p).ok());

  auto bad = p;
  bad.B2 = AffineMatrixFn::zero(3, 1, 1);
  const auto r = validate_plant(bad);
  CHECK(r.findings.size() == 1);
  CHECK(r.count(Finding::Kind::dimension) == 1);

  auto neg = p;
  neg.delay.value = [](const Vector&) { return -1.0; };
  neg.delay.gradient = [](const Vector&) { return Vector::Zero(1); };
  CHECK(validate_plant(neg).count(Finding::Kind::delay_bound) >= 1);

  auto wrong_grad = p;
  wrong_grad.delay.gradient = [](const Vector& r) { return Vector::Constant(1, 180.0 / (r[0] * r[0])); };
  CHECK(validate_plant(wrong_grad).count(Finding::Kind::derivative) >= 1);
}

TEST_CASE("schedule set invariants") {
  auto s = box(1, 0);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  auto t = box(0, 1);
  t.rate_bound[0] = -1;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}
