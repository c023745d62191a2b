#include <random>

#include "doctest.h"
#include "lpvsd/synthesis.hpp"
#include "support.hpp"

using namespace lpvsd;
using namespace lpvsd::synthesis;

namespace {

Matrix sym(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix a = Matrix::NullaryExpr(d, d, [&] { return u(rng); });
  return a + a.transpose();
}

Matrix rnd(int r, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  return Matrix::NullaryExpr(r, c, [&] { return u(rng); });
}

DecisionVars<Matrix> random_vars(int n, int n_u, int n_y, std::mt19937_64& rng) {
  DecisionVars<Matrix> v;
  v.P = sym(2 * n, rng);
  v.dP = {sym(2 * n, rng)};
  v.X = sym(n, rng);
  v.Y = sym(n, rng);
  v.Q_tau = sym(2 * n, rng);
  v.Q_samp = sym(2 * n, rng);
  v.R_tau = sym(2 * n, rng);
  v.R_samp = sym(2 * n, rng);
  v.T_tau = sym(2 * n, rng);
  v.A_hat = rnd(n, n, rng);
  v.A_tau_hat = rnd(n, n, rng);
  v.A_samp_hat = rnd(n, n, rng);
  v.B_hat = rnd(n, n_y, rng);
  v.C_hat = rnd(n_u, n, rng);
  v.D_K = rnd(n_u, n_y, rng);
  v.gamma = rnd(1, 1, rng);
  return v;
}

DecisionVars<Matrix> scaled(const DecisionVars<Matrix>& v, double s) {
  DecisionVars<Matrix> o = v;
  for (Matrix* m : {&o.P, &o.X, &o.Y, &o.Q_tau, &o.Q_samp, &o.R_tau, &o.R_samp, &o.T_tau, &o.A_hat,
                    &o.A_tau_hat, &o.A_samp_hat, &o.B_hat, &o.C_hat, &o.D_K, &o.gamma}) {
    *m *= s;
  }
  for (auto& d : o.dP) d *= s;
  return o;
}

PlantAt afr_at(double w) { return PlantAt::evaluate(testing::afr_plant(), Vector::Constant(1, w)); }

}  // namespace

TEST_CASE("assembled LMI size for the engine plant") {
  std::mt19937_64 rng(1);
  const auto v = random_vars(4, 1, 1, rng);
  const Matrix M = assemble_blocks(afr_at(2400), v, Lambdas{1, 2, 3, 0.5},
                                   horizons_of(testing::afr_plant()), {1});
  CHECK(M.rows() == 45);
  CHECK(M.cols() == 45);
}

TEST_CASE("assembled LMI is exactly symmetric") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = random_vars(4, 1, 1, rng);
    for (int s : {1, -1}) {
      const Matrix M = assemble_blocks(afr_at(800 + 160 * trial), v, Lambdas{0.1, 1, 10, 0.3},
                                       horizons_of(testing::afr_plant()), {s});
      CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("assembled LMI is affine in the decision variables") {
  std::mt19937_64 rng(3);
  const auto h = horizons_of(testing::afr_plant());
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = random_vars(4, 1, 1, rng);
    const auto pl = afr_at(1000 + 100 * trial);
    const Lambdas lam{0.1, 1, 10, 0};
    const Matrix m1 = assemble_blocks(pl, v, lam, h, {1});
    const Matrix m2 = assemble_blocks(pl, scaled(v, 2.0), lam, h, {1});
    const Matrix m0 = assemble_blocks(pl, scaled(v, 0.0), lam, h, {1});
    CHECK((m2 - 2 * m1 + m0).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("hand-evaluated blocks on a zero plant") {
  const int n = 4;
  PlantAt pl;
  pl.A = pl.A_tau = Matrix::Zero(n, n);
  pl.B1 = Matrix::Zero(n, 2);
  pl.B2 = Matrix::Zero(n, 1);
  pl.C1 = pl.C1_tau = Matrix::Zero(3, n);
  pl.D11 = Matrix::Zero(3, 2);
  pl.D12 = Matrix::Zero(3, 1);
  pl.C2 = Matrix::Zero(1, n);
  pl.delay_gradient = pl.sampling_gradient = pl.rate_bound = Vector::Zero(1);

  DecisionVars<Matrix> v;
  const Matrix I2 = Matrix::Identity(2 * n, 2 * n);
  v.P = I2;
  v.dP = {Matrix::Zero(2 * n, 2 * n)};
  v.X = v.Y = Matrix::Identity(n, n);
  v.Q_tau = v.Q_samp = v.R_tau = v.R_samp = v.T_tau = I2;
  v.A_hat = v.A_tau_hat = v.A_samp_hat = Matrix::Zero(n, n);
  v.B_hat = Matrix::Zero(n, 1);
  v.C_hat = Matrix::Zero(1, n);
  v.D_K = Matrix::Zero(1, 1);
  v.gamma = Matrix::Constant(1, 1, 2.5);
  const Horizons h{0.225, 0.0157};
  const auto b = lmi_blocks<Matrix>(pl, v, Lambdas{0, 0, 0, 0}, h, {1});
  CHECK(testing::max_abs(b[0][0] - h.delay * h.delay * I2) <= 1e-15);
  CHECK(testing::max_abs(b[6][6] + 2.5 * Matrix::Identity(3, 3)) == 0.0);
  CHECK(testing::max_abs(b[5][5] + 2.5 * Matrix::Identity(2, 2)) == 0.0);
  CHECK_THROWS_AS(lmi_blocks<Matrix>(pl, v, Lambdas{}, h, {1, 1}), std::invalid_argument);
}

TEST_CASE("gamma block does not depend on rho") {
  std::mt19937_64 rng(4);
  const auto v = random_vars(4, 1, 1, rng);
  const auto h = horizons_of(testing::afr_plant());
  const auto a = lmi_blocks<Matrix>(afr_at(800), v, Lambdas{}, h, {1});
  const auto b = lmi_blocks<Matrix>(afr_at(4000), v, Lambdas{}, h, {-1});
  CHECK(a[6][6] == b[6][6]);
  CHECK(a[6][6] == -v.gamma(0, 0) * Matrix::Identity(3, 3));
}

TEST_CASE("symbolic SDP constraints agree with numeric assembly") {
  const auto& plant = testing::afr_plant();
  SynthesisOptions opts;
  const Lambdas lam{0.1, 1, 10, 0};
  const auto grid = make_grid(plant.schedule, opts.grid_counts);
  const auto built = build_sdp(plant, grid, opts, lam);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const Vector x = Vector::NullaryExpr(built.problem.m, [&] { return u(rng); });

  const auto& L = built.layout;
  std::size_t con = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Vector& rho = grid.points[g];
    DecisionVars<Matrix> v;
    const auto P = L.extract("P", x);
    v.P = P(rho);
    v.dP = {P.slope(0)};
    auto at = [&](const char* name) { return L.extract(name, x)(rho); };
    v.X = at("X");
    v.Y = at("Y");
    v.Q_tau = at("Q_tau");
    v.Q_samp = at("Q_samp");
    v.R_tau = at("R_tau");
    v.R_samp = at("R_samp");
    v.T_tau = at("T_tau");
    v.A_hat = at("A_hat");
    v.A_tau_hat = at("A_tau_hat");
    v.A_samp_hat = at("A_samp_hat");
    v.B_hat = at("B_hat");
    v.C_hat = at("C_hat");
    v.D_K = at("D_K");
    v.gamma = Matrix::Constant(1, 1, x[L.gamma_index]);
    for (int s : {1, -1}) {
      const Matrix numeric = assemble_blocks(PlantAt::evaluate(plant, rho), v, lam,
                                             horizons_of(plant), {s});
      const Matrix symbolic = built.problem.constraints[con].evaluate(x);
      const Matrix shifted = numeric + opts.margin * Matrix::Identity(45, 45);
      CHECK((symbolic - shifted).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + numeric.cwiseAbs().maxCoeff()));
      ++con;
    }
    con += (g == 0) ? 2 : 1;  // P positivity, and V positivity once
  }
}

TEST_CASE("constraint counts and deduplication") {
  auto plant = testing::afr_plant();
  SynthesisOptions opts;
  const auto grid = make_grid(plant.schedule, {5});
  const auto built = build_sdp(plant, grid, opts, Lambdas{1, 1, 1, 0});
  CHECK(built.main_constraints == 10);
  CHECK(built.grid_points == 5);

  plant.schedule.rate_bound = Vector::Zero(1);
  const auto flat = build_sdp(plant, grid, opts, Lambdas{1, 1, 1, 0});
  CHECK(flat.main_constraints == 5);

  CHECK(distinct_sign_vertices(Vector::Zero(2)).size() == 1);
  CHECK(distinct_sign_vertices((Vector(2) << 1.0, 0.0).finished()).size() == 2);
  CHECK(distinct_sign_vertices((Vector(2) << 1.0, 3.0).finished()).size() == 4);
  CHECK_THROWS_AS(build_sdp(plant, Grid{}, opts, Lambdas{}), std::invalid_argument);
}

TEST_CASE("decision variable layout for all-affine dependence") {
  const auto& plant = testing::afr_plant();
  SynthesisOptions opts;
  opts.dependence.X = opts.dependence.Y = Dependence::affine;
  const auto built = build_sdp(plant, make_grid(plant.schedule, {3}), opts, Lambdas{});
  for (const auto& v : built.layout.variables) {
    const bool constant = v.name == "Q_tau" || v.name == "Q_samp" || v.name == "R_tau" ||
                          v.name == "R_samp" || v.name == "T_tau";
    CHECK(v.index_sets.size() == (constant ? 1u : 2u));
  }
}

TEST_CASE("horizons are the law maxima") {
  const auto h = horizons_of(testing::afr_plant());
  CHECK(h.delay == doctest::Approx(0.225).epsilon(1e-15));
  CHECK(h.sampling == doctest::Approx(4.0 * 3.141592653589793 / 800.0).epsilon(1e-15));
}

TEST_CASE("engine certificate: finite gamma, self-check and tightness") {
  const auto& cert = testing::afr_certificate();
  const auto& plant = testing::afr_plant();
  REQUIRE(cert.trials.size() == 1);
  CHECK(cert.trials[0].solver_feasible());
  CHECK(std::isfinite(cert.gamma));
  CHECK(cert.gamma > 0.0);

  const auto own = check_certificate(cert, plant, cert.grid);
  CHECK(own.pass);
  CHECK(own.max_lmi_eigenvalue <= -cert.options.margin + 1e-6);

  const auto dense = check_certificate(cert, plant, make_grid(plant.schedule, {50}));
  CHECK(dense.pass);
  CHECK(dense.points_checked == 50);

  auto lowered = cert;
  lowered.gamma *= 0.5;
  CHECK_FALSE(check_certificate(lowered, plant, cert.grid).pass);
}

TEST_CASE("tighter delay bound does not raise gamma") {
  const auto& base = testing::afr_certificate();
  auto plant = testing::afr_plant();
  SynthesisOptions opts;
  // Shrink the delay law by 20%; the horizon follows the law.
  const auto tau = plant.delay.value;
  const auto grad = plant.delay.gradient;
  plant.delay.value = [tau](const Vector& r) { return 0.8 * tau(r); };
  plant.delay.gradient = [grad](const Vector& r) -> Vector { return 0.8 * grad(r); };
  plant.delay.upper_bound *= 0.8;
  const auto cert = synthesize_at(plant, opts, base.lambda);
  CHECK(cert.gamma <= base.gamma * (1.0 + 1e-6));
}

TEST_CASE("search over a 3x3x3 lambda product") {
  const auto plant = testing::scalar_plant(-1.0, 0.2, 1.0, 1.0, 0.1, 0.05);
  SynthesisOptions opts;
  opts.grid_counts = {2};
  opts.verification_counts = {3};
  const auto cert = synthesize(plant, opts);
  CHECK(cert.trials.size() == 27);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : cert.trials)
    if (t.solver_feasible()) best = std::min(best, t.gamma);
  CHECK(cert.gamma == best);
}

TEST_CASE("unstable plant without actuation is infeasible everywhere") {
  const auto plant = testing::scalar_plant(1.0, 0.0, 1.0, 0.0, 0.1, 0.05);
  SynthesisOptions opts;
  opts.grid_counts = {2};
  opts.lambda2 = {0.1, 1.0};
  opts.lambda3 = {1.0};
  opts.lambda4 = {0.1, 10.0};
  try {
    (void)synthesize(plant, opts);
    FAIL("expected infeasibility");
  } catch (const InfeasibleEverywhere& e) {
    CHECK(e.trials().size() == 4);
    for (const auto& t : e.trials()) CHECK_FALSE(t.solver_feasible());
  }
}

TEST_CASE("option validation") {
  SynthesisOptions o;
  o.lambda2.clear();
  CHECK_THROWS_AS(o.validate(), std::invalid_argument);
  SynthesisOptions m;
  m.margin = 0.0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}
