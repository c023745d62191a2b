#include "lpvsd/realization.hpp"

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace lpvsd::realization {

using synthesis::PlantAt;
using synthesis::SynthesisCertificate;

Factorization factorize(const Matrix& X, const Matrix& Y) {
  const auto n = X.rows();
  Matrix N = Matrix::Identity(n, n) - X * Y;
  Eigen::JacobiSVD<Matrix> svd(N);
  const auto& s = svd.singularValues();
  double smin = s(s.size() - 1);
  if (!(smin > 0.0) || s(0) / smin > 1e12) {
    throw FactorizationError(
        "I - XY is numerically singular; the coupling matrix [[Y, I], [I, X]] is not "
        "positive definite at this point");
  }
  return {std::move(N), Matrix::Identity(n, n)};
}

ControllerAt realize(const SynthesisCertificate& cert, const LPVDelayPlant& plant,
                     const Vector& rho, const Factorization& f) {
  const PlantAt p = PlantAt::evaluate(plant, rho);
  const auto v = cert.at(rho);
  const auto Ninv = f.N.partialPivLu();
  const Matrix Mit = f.M.transpose().inverse();  // M^{-T}
  const Matrix& X = v.X;
  const Matrix& Y = v.Y;

  ControllerAt k;
  k.D_K = v.D_K;
  k.A_K = Ninv.solve(v.A_hat - X * p.A * Y) * Mit;
  k.A_tau_K = Ninv.solve(v.A_tau_hat - X * p.A_tau * Y) * Mit;
  k.B_K = Ninv.solve(v.B_hat - X * p.B2 * k.D_K);
  k.C_K = (v.C_hat - k.D_K * p.C2 * Y) * Mit;
  k.A_samp_K = Ninv.solve(v.A_samp_hat - X * p.B2 * k.D_K * p.C2 * Y -
                          f.N * k.B_K * p.C2 * Y - X * p.B2 * k.C_K * f.M.transpose()) *
               Mit;
  return k;
}

ControllerAt realize(const SynthesisCertificate& cert, const LPVDelayPlant& plant,
                     const Vector& rho) {
  const auto v = cert.at(rho);
  return realize(cert, plant, rho, factorize(v.X, v.Y));
}

double HatResidual::max() const {
  return std::max({A_hat, A_tau_hat, A_samp_hat, B_hat, C_hat});
}

namespace {

double rel(const Matrix& rebuilt, const Matrix& hat) {
  double scale = std::max(hat.norm(), 1e-300);
  return (rebuilt - hat).norm() / scale;
}

}  // namespace

HatResidual reconstruction_residual(const SynthesisCertificate& cert, const LPVDelayPlant& plant,
                                    const Vector& rho, const ControllerAt& k,
                                    const Factorization& f) {
  const PlantAt p = PlantAt::evaluate(plant, rho);
  const auto v = cert.at(rho);
  const Matrix Mt = f.M.transpose();
  HatResidual r;
  r.A_hat = rel(v.X * p.A * v.Y + f.N * k.A_K * Mt, v.A_hat);
  r.A_tau_hat = rel(v.X * p.A_tau * v.Y + f.N * k.A_tau_K * Mt, v.A_tau_hat);
  r.B_hat = rel(v.X * p.B2 * k.D_K + f.N * k.B_K, v.B_hat);
  r.C_hat = rel(k.D_K * p.C2 * v.Y + k.C_K * Mt, v.C_hat);
  r.A_samp_hat = rel(v.X * p.B2 * k.D_K * p.C2 * v.Y + f.N * k.B_K * p.C2 * v.Y +
                         v.X * p.B2 * k.C_K * Mt + f.N * k.A_samp_K * Mt,
                     v.A_samp_hat);
  return r;
}

ContinuousController::ContinuousController(SynthesisCertificate cert, LPVDelayPlant plant)
    : cert_(std::move(cert)), plant_(std::move(plant)) {
  constant_factorization_ = cert_.options.dependence.X == synthesis::Dependence::constant &&
                            cert_.options.dependence.Y == synthesis::Dependence::constant;
  if (constant_factorization_) {
    factorization_ = factorize(cert_.X.base(), cert_.Y.base());
  }
}

ControllerAt ContinuousController::at(const Vector& rho) const {
  if (constant_factorization_) return realize(cert_, plant_, rho, factorization_);
  return realize(cert_, plant_, rho);
}

PhiPair matrix_phi(const Matrix& A, double h) {
  const auto n = A.rows();
  if (A.cols() != n) throw std::invalid_argument("matrix_phi: A must be square");
  if (!(h >= 0.0)) throw std::invalid_argument("matrix_phi: h must be nonnegative");
  Matrix aug = Matrix::Zero(2 * n, 2 * n);
  aug.topLeftCorner(n, n) = A * h;
  aug.topRightCorner(n, n) = Matrix::Identity(n, n) * h;
  Matrix ex = aug.exp();
  return {ex.topLeftCorner(n, n), ex.topRightCorner(n, n)};
}

InterpCoeffs interp_coeffs(double t_k, double t_k1, double tau_k, double t_l, double t_l1,
                           double t_l2) {
  if (!(t_l1 > t_l) || !(t_l2 > t_l1)) {
    throw std::invalid_argument("interp_coeffs: sample instants must increase strictly");
  }
  const double a = t_k - tau_k;
  const double b = t_k1 - tau_k;
  InterpCoeffs c;
  c.c1 = (t_l1 - a) / (t_l1 - t_l);
  c.c2 = (a - t_l) / (t_l1 - t_l);
  c.c3 = (t_l2 - b) / (t_l2 - t_l1);
  c.c4 = (b - t_l1) / (t_l2 - t_l1);
  return c;
}

DigitalTaps discretize_step(const ControllerAt& k, double t_k, double t_k1, double tau_k,
                            std::span<const double> sample_times) {
  if (sample_times.empty()) throw std::invalid_argument("discretize_step: empty sample history");
  if (!(t_k1 > t_k)) throw std::invalid_argument("discretize_step: t_k1 must exceed t_k");
  if (!(tau_k > 0.0)) throw std::invalid_argument("discretize_step: delay must be positive");
  if (std::abs(sample_times.back() - t_k) > 1e-12 * std::max(1.0, std::abs(t_k))) {
    throw std::invalid_argument("discretize_step: sample history must end at t_k");
  }

  DigitalTaps out;
  out.t_k = t_k;
  out.t_k1 = t_k1;
  out.tau_k = tau_k;

  const double h = t_k1 - t_k;
  const auto Eh = matrix_phi(k.A_K, h);
  out.A_d = Eh.E + Eh.Phi * k.A_samp_K;
  out.B_d = Eh.Phi * k.B_K;
  out.C_d = k.C_K;
  out.D_d = k.D_K;

  // Sample instant by signed index; before the first recorded sample the grid
  // is extended backwards with the first period (those samples hold the
  // initial controller state).
  const auto count = static_cast<long>(sample_times.size());
  const double back_step = count > 1 ? sample_times[1] - sample_times[0] : h;
  auto time_at = [&](long i) {
    if (i >= 0) return sample_times[static_cast<std::size_t>(i)];
    return sample_times[0] + static_cast<double>(i) * back_step;
  };

  const double a = t_k - tau_k;
  long l;
  if (a >= sample_times[0]) {
    auto it = std::upper_bound(sample_times.begin(), sample_times.end(), a);
    l = static_cast<long>(it - sample_times.begin()) - 1;
  } else {
    l = static_cast<long>(std::floor((a - sample_times[0]) / back_step));
  }
  // t_{l+2} must already be sampled.
  if (l + 2 > count - 1) {
    l = count - 3;
    out.clamped = true;
  }

  double t_l = time_at(l), t_l1 = time_at(l + 1), t_l2 = time_at(l + 2);
  double a_used = std::clamp(a, t_l, t_l1);
  double b_used = std::clamp(t_k1 - tau_k, t_l1, t_l2);
  if (a_used != a || b_used != t_k1 - tau_k) out.clamped = true;

  const InterpCoeffs c = interp_coeffs(a_used, b_used, 0.0, t_l, t_l1, t_l2);
  out.coeffs = c;

  // (e^{sA} - I) A^{-1} is replaced by Phi(s) so singular A_K is fine.
  const double s = b_used - t_l1;
  const Matrix Phi_s = matrix_phi(k.A_K, s).Phi;
  const Matrix& Phi_h = Eh.Phi;
  out.taps[0].gain = 0.5 * c.c1 * (Phi_h - Phi_s) * k.A_tau_K;
  out.taps[1].gain = (0.5 * (1.0 + c.c2) * Phi_h - 0.5 * (c.c2 - c.c3) * Phi_s) * k.A_tau_K;
  out.taps[2].gain = 0.5 * c.c4 * Phi_s * k.A_tau_K;

  const double first = sample_times[0];
  const double stamps[3] = {t_l, t_l1, t_l2};
  for (int i = 0; i < 3; ++i) {
    bool missing = (l + i) < 0;
    out.taps[i].from_initial_history = missing;
    out.taps[i].timestamp = missing ? first : stamps[i];
    out.warmup = out.warmup || missing;
  }
  return out;
}

}  // namespace lpvsd::realization
