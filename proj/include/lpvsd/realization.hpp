#pragma once

#include <array>
#include <span>
#include <stdexcept>

#include "lpvsd/lpv_core.hpp"
#include "lpvsd/synthesis.hpp"

namespace lpvsd::realization {

/// N M^T = I - X Y.
struct Factorization {
  Matrix N;
  Matrix M;
};

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Chooses M = I, N = I - XY. Throws FactorizationError when I - XY is
/// numerically singular (condition number above 1e12), which means the
/// coupling matrix [[Y, I], [I, X]] was not positive definite.
Factorization factorize(const Matrix& X, const Matrix& Y);

/// Continuous-time controller matrices frozen at one parameter value:
///   dx_K = A_K x_K + A_tau_K x_K(t - tau) + A_samp_K x_K(t_k) + B_K y(t_k)
///   u    = C_K x_K(t_k) + D_K y(t_k)
struct ControllerAt {
  Matrix A_K, A_tau_K, A_samp_K, B_K, C_K, D_K;
};

/// Recovers the controller from the certificate at rho.
ControllerAt realize(const synthesis::SynthesisCertificate& cert, const LPVDelayPlant& plant,
                     const Vector& rho, const Factorization& f);
ControllerAt realize(const synthesis::SynthesisCertificate& cert, const LPVDelayPlant& plant,
                     const Vector& rho);

/// Relative Frobenius error of the hat variables rebuilt from a realized controller.
struct HatResidual {
  double A_hat = 0.0, A_tau_hat = 0.0, A_samp_hat = 0.0, B_hat = 0.0, C_hat = 0.0;
  double max() const;
};

HatResidual reconstruction_residual(const synthesis::SynthesisCertificate& cert,
                                    const LPVDelayPlant& plant, const Vector& rho,
                                    const ControllerAt& k, const Factorization& f);

/// Gain-scheduled controller bound to its certificate and plant.
class ContinuousController {
 public:
  ContinuousController(synthesis::SynthesisCertificate cert, LPVDelayPlant plant);

  ControllerAt at(const Vector& rho) const;
  int order() const { return cert_.n; }
  const synthesis::SynthesisCertificate& certificate() const { return cert_; }
  const LPVDelayPlant& plant() const { return plant_; }

 private:
  synthesis::SynthesisCertificate cert_;
  LPVDelayPlant plant_;
  bool constant_factorization_ = true;
  Factorization factorization_;
};

/// E = e^{A h} and Phi = int_0^h e^{A s} ds, from the exponential of the
/// augmented block [[A, I], [0, 0]] h. Valid for singular A.
struct PhiPair {
  Matrix E;
  Matrix Phi;
};
PhiPair matrix_phi(const Matrix& A, double h);

struct InterpCoeffs {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0;
};

/// Linear-interpolation weights of the delayed controller state at
/// t_k - tau_k inside [t_l, t_l1] and at t_k1 - tau_k inside [t_l1, t_l2].
InterpCoeffs interp_coeffs(double t_k, double t_k1, double tau_k, double t_l, double t_l1,
                           double t_l2);

struct DelayedTap {
  double timestamp = 0.0;
  Matrix gain;
  bool from_initial_history = false;  // refers to a sample before the first one
};

/// One step of the exact digital controller on [t_k, t_k1]:
///   x_d(k+1) = A_d x_d(k) + sum_taps gain * x_d(at timestamp) + B_d y(k)
///   u(k)     = C_d x_d(k) + D_d y(k)
struct DigitalTaps {
  Matrix A_d, B_d, C_d, D_d;
  std::array<DelayedTap, 3> taps;
  InterpCoeffs coeffs;
  double t_k = 0.0, t_k1 = 0.0, tau_k = 0.0;
  bool clamped = false;  // delayed instants fell outside their nominal brackets
  bool warmup = false;   // some tap refers to the initial history
};

/// `sample_times` holds past sampling instants in increasing order and ends at t_k.
DigitalTaps discretize_step(const ControllerAt& k, double t_k, double t_k1, double tau_k,
                            std::span<const double> sample_times);

}  // namespace lpvsd::realization
