#include "support.hpp"

namespace lpvsd::testing {

const LPVDelayPlant& afr_plant() {
  static const LPVDelayPlant p = engine::build_afr_plant(engine::EngineConfig{});
  return p;
}

const synthesis::SynthesisCertificate& afr_certificate() {
  static const synthesis::SynthesisCertificate c = [] {
    synthesis::SynthesisOptions opts;
    return synthesis::synthesize_at(afr_plant(), opts, synthesis::Lambdas{0.1, 0.1, 0.1, 0.0});
  }();
  return c;
}

std::shared_ptr<const realization::ContinuousController> afr_controller() {
  static const auto c =
      std::make_shared<const realization::ContinuousController>(afr_certificate(), afr_plant());
  return c;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

LPVDelayPlant scalar_plant(double a, double a_tau, double b1, double b2, double tau,
                           double sampling, double lo, double hi) {
  auto c = [](double v) { return AffineMatrixFn::constant(Matrix::Constant(1, 1, v), 1); };
  LPVDelayPlant p;
  p.n = p.n_w = p.n_u = p.n_y = p.n_z = 1;
  p.A = c(a);
  p.A_tau = c(a_tau);
  p.B1 = c(b1);
  p.B2 = c(b2);
  p.C1 = c(1.0);
  p.C1_tau = c(0.0);
  p.D11 = c(0.0);
  p.D12 = c(0.0);
  p.C2 = c(1.0);
  p.schedule.lower = Vector::Constant(1, lo);
  p.schedule.upper = Vector::Constant(1, hi);
  p.schedule.rate_bound = Vector::Zero(1);
  p.delay.value = [tau](const Vector&) { return tau; };
  p.delay.gradient = [](const Vector&) { return Vector::Zero(1); };
  p.delay.upper_bound = tau;
  p.sampling.value = [sampling](const Vector&) { return sampling; };
  p.sampling.gradient = [](const Vector&) { return Vector::Zero(1); };
  p.sampling.upper_bound = sampling;
  p.initial_history = Vector::Zero(1);
  return p;
}

}  // namespace lpvsd::testing
