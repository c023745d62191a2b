#include "lpvsd/engine_afr.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lpvsd::engine {

namespace {

void require_positive_speed(double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("engine speed must be positive");
}

}  // namespace

SamplingConvention parse_convention(const std::string& name) {
  if (name == "literal-4pi") return SamplingConvention::literal_4pi;
  if (name == "physical-120") return SamplingConvention::physical_120;
  throw std::invalid_argument("unknown sampling convention '" + name +
                              "' (expected literal-4pi or physical-120)");
}

std::string to_string(SamplingConvention c) {
  return c == SamplingConvention::literal_4pi ? "literal-4pi" : "physical-120";
}

void EngineConfig::validate() const {
  if (cylinders < 2) throw std::invalid_argument("engine needs at least two cylinders");
  if (!(omega_gain > 0.0) || !(lambda_pole > 0.0)) {
    throw std::invalid_argument("actuator gain and pole must be positive");
  }
  if (!(eps1 > 0.0) || !(eps2 > 0.0)) {
    throw std::invalid_argument("integrator regularization eps1, eps2 must be positive");
  }
  if (weight_tracking < 0.0 || weight_oxygen < 0.0 || weight_effort < 0.0) {
    throw std::invalid_argument("performance weights must be nonnegative");
  }
  if (!(speed_min > 0.0) || !(speed_min < speed_max)) {
    throw std::invalid_argument("speed range must satisfy 0 < speed_min < speed_max");
  }
  if (!(speed_rate >= 0.0)) throw std::invalid_argument("speed rate bound must be nonnegative");
}

double time_constant(double omega, int cylinders) {
  require_positive_speed(omega);
  return 120.0 * (cylinders - 1) / (cylinders * omega);
}

double delay_law(double omega) {
  require_positive_speed(omega);
  return 180.0 / omega;
}

double delay_law_derivative(double omega) {
  require_positive_speed(omega);
  return -180.0 / (omega * omega);
}

double sampling_law(double omega, SamplingConvention c) {
  require_positive_speed(omega);
  return c == SamplingConvention::literal_4pi ? 4.0 * std::numbers::pi / omega : 120.0 / omega;
}

double sampling_law_derivative(double omega, SamplingConvention c) {
  require_positive_speed(omega);
  const double k = c == SamplingConvention::literal_4pi ? 4.0 * std::numbers::pi : 120.0;
  return -k / (omega * omega);
}

LPVDelayPlant build_afr_plant(const EngineConfig& cfg) {
  cfg.validate();
  constexpr int n = 4, n_w = 2, n_u = 1, n_z = 3, n_y = 1, s = 1;
  // -1/T(omega) is linear in omega.
  const double lag_slope = -static_cast<double>(cfg.cylinders) / (120.0 * (cfg.cylinders - 1));

  LPVDelayPlant p;
  p.n = n;
  p.n_w = n_w;
  p.n_u = n_u;
  p.n_z = n_z;
  p.n_y = n_y;

  Matrix a0 = Matrix::Zero(n, n), a1 = Matrix::Zero(n, n);
  a1(0, 0) = lag_slope;
  a0(1, 1) = -cfg.lambda_pole;
  a0(2, 0) = -1.0;
  a0(2, 2) = -cfg.eps1;
  a0(3, 2) = 1.0;
  a0(3, 3) = -cfg.eps2;
  p.A = AffineMatrixFn(a0, {a1});

  Matrix at1 = Matrix::Zero(n, n);
  at1(0, 1) = -lag_slope;
  p.A_tau = AffineMatrixFn(Matrix::Zero(n, n), {at1});

  Matrix b1 = Matrix::Zero(n, n_w);
  b1(2, 0) = 1.0;
  b1(2, 1) = -1.0;
  p.B1 = AffineMatrixFn::constant(b1, s);

  Matrix b2 = Matrix::Zero(n, n_u);
  b2(1, 0) = cfg.omega_gain;
  p.B2 = AffineMatrixFn::constant(b2, s);

  Matrix c1 = Matrix::Zero(n_z, n);
  c1(0, 2) = cfg.weight_tracking;
  c1(1, 3) = cfg.weight_oxygen;
  p.C1 = AffineMatrixFn::constant(c1, s);
  p.C1_tau = AffineMatrixFn::zero(n_z, n, s);
  p.D11 = AffineMatrixFn::zero(n_z, n_w, s);

  Matrix d12 = Matrix::Zero(n_z, n_u);
  d12(2, 0) = cfg.weight_effort;
  p.D12 = AffineMatrixFn::constant(d12, s);

  Matrix c2 = Matrix::Zero(n_y, n);
  c2(0, 2) = 1.0;
  p.C2 = AffineMatrixFn::constant(c2, s);

  p.schedule.lower = Vector::Constant(1, cfg.speed_min);
  p.schedule.upper = Vector::Constant(1, cfg.speed_max);
  p.schedule.rate_bound = Vector::Constant(1, cfg.speed_rate);

  // Both laws decrease in omega, so their maxima sit at speed_min.
  p.delay.value = [](const Vector& rho) { return delay_law(rho[0]); };
  p.delay.gradient = [](const Vector& rho) {
    return Vector::Constant(1, delay_law_derivative(rho[0]));
  };
  p.delay.upper_bound = delay_law(cfg.speed_min);
  p.delay.rate_bound = std::abs(delay_law_derivative(cfg.speed_min)) * cfg.speed_rate;

  const auto conv = cfg.convention;
  p.sampling.value = [conv](const Vector& rho) { return sampling_law(rho[0], conv); };
  p.sampling.gradient = [conv](const Vector& rho) {
    return Vector::Constant(1, sampling_law_derivative(rho[0], conv));
  };
  p.sampling.upper_bound = sampling_law(cfg.speed_min, conv);

  p.initial_history = Vector::Zero(n);
  return p;
}

TwcState twc_step(const TwcState& s, double delta_lambda_up, double dt) {
  TwcState next = s;
  next.stored_oxygen += s.upstream_flow * delta_lambda_up * dt;
  return next;
}

}  // namespace lpvsd::engine
