#include "lpvsd/baseline.hpp"

#include <stdexcept>

namespace lpvsd::baseline {

namespace {

bool column_used(const AffineMatrixFn& m, int j) {
  if (!m.base().col(j).isZero(0.0)) return true;
  for (const auto& s : m.slopes()) {
    if (!s.col(j).isZero(0.0)) return true;
  }
  return false;
}

}  // namespace

PadeAugmentedPlant pade_augment(const LPVDelayPlant& plant, int order) {
  if (order != 1) throw std::invalid_argument("only first-order Pade is supported");
  PadeAugmentedPlant out;
  out.source = plant;
  out.order = order;
  for (int j = 0; j < plant.n; ++j) {
    if (column_used(plant.A_tau, j) || column_used(plant.C1_tau, j)) {
      out.delayed_channels.push_back(j);
    }
  }
  return out;
}

PadeAugmentedPlant::Frozen PadeAugmentedPlant::at(const Vector& rho) const {
  const auto& p = source;
  const int n0 = p.n;
  const int na = n();
  const double tau = p.delay.value(rho);
  if (!(tau > 0.0)) throw std::invalid_argument("Pade augmentation needs a positive delay");

  const Matrix Ad = p.A_tau(rho);
  const Matrix Cd = p.C1_tau(rho);
  Frozen f;
  f.A = Matrix::Zero(na, na);
  f.A.topLeftCorner(n0, n0) = p.A(rho);
  f.C1 = Matrix::Zero(p.n_z, na);
  f.C1.leftCols(n0) = p.C1(rho);
  for (std::size_t c = 0; c < delayed_channels.size(); ++c) {
    const int j = delayed_channels[c];
    const int q = n0 + static_cast<int>(c);
    f.A.block(0, j, n0, 1) -= Ad.col(j);
    f.A.block(0, q, n0, 1) += (4.0 / tau) * Ad.col(j);
    f.C1.col(j) -= Cd.col(j);
    f.C1.col(q) += (4.0 / tau) * Cd.col(j);
    f.A(q, j) = 1.0;
    f.A(q, q) = -2.0 / tau;
  }
  f.B1 = Matrix::Zero(na, p.n_w);
  f.B1.topRows(n0) = p.B1(rho);
  f.B2 = Matrix::Zero(na, p.n_u);
  f.B2.topRows(n0) = p.B2(rho);
  f.C2 = Matrix::Zero(p.n_y, na);
  f.C2.leftCols(n0) = p.C2(rho);
  f.D11 = p.D11(rho);
  f.D12 = p.D12(rho);
  return f;
}

std::complex<double> pade_factor(double tau, std::complex<double> s) {
  return (1.0 - 0.5 * tau * s) / (1.0 + 0.5 * tau * s);
}

DiscreteMatrices tustin_discretize(const realization::ControllerAt& k, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("tustin_discretize: h must be positive");
  const auto n = k.A_K.rows();
  const Matrix A = k.A_K + k.A_tau_K + k.A_samp_K;
  const Matrix I = Matrix::Identity(n, n);
  const Matrix lhs = I - 0.5 * h * A;
  Eigen::FullPivLU<Matrix> lu(lhs);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    throw std::invalid_argument("tustin_discretize: I - (h/2)A is singular");
  }
  DiscreteMatrices d;
  d.A_d = lu.solve(I + 0.5 * h * A);
  d.B_d = lu.solve(h * k.B_K);
  d.C_d = k.C_K;
  d.D_d = k.D_K;
  return d;
}

TustinController::TustinController(std::shared_ptr<const realization::ContinuousController> ctrl)
    : ctrl_(std::move(ctrl)) {
  if (!ctrl_) throw std::invalid_argument("TustinController: null controller");
  reset();
}

void TustinController::reset() {
  current_ = Vector::Zero(ctrl_->order());
  held_ = current_;
  clamped_steps = 0;
  warmup_steps = 0;
}

Vector TustinController::sample(double t_k, double t_k1, const Vector& rho_k, double /*tau_k*/,
                                const Vector& y_k) {
  const auto d = tustin_discretize(ctrl_->at(rho_k), t_k1 - t_k);
  held_ = current_;
  Vector u = d.C_d * held_ + d.D_d * y_k;
  current_ = d.A_d * held_ + d.B_d * y_k;
  return u;
}

}  // namespace lpvsd::baseline
