#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "lpvsd/hybrid_sim.hpp"
#include "lpvsd/lpv_core.hpp"
#include "lpvsd/realization.hpp"

namespace lpvsd::baseline {

/// Delay-free plant where each delayed state channel x_j(t - tau) is replaced
/// by the first-order Pade output -x_j + (4/tau) q_j, dq_j = -(2/tau) q_j + x_j.
struct PadeAugmentedPlant {
  LPVDelayPlant source;
  int order = 1;
  std::vector<int> delayed_channels;  // state indices read through the delay

  int n() const { return source.n + static_cast<int>(delayed_channels.size()); }

  struct Frozen {
    Matrix A, B1, B2, C1, D11, D12, C2;
  };
  /// Matrices at rho, with tau = tau(rho). A_tau is absorbed, so none is returned.
  Frozen at(const Vector& rho) const;
};

/// Throws std::invalid_argument for order != 1.
PadeAugmentedPlant pade_augment(const LPVDelayPlant& plant, int order = 1);

/// (1 - tau s/2) / (1 + tau s/2)
std::complex<double> pade_factor(double tau, std::complex<double> s);

struct DiscreteMatrices {
  Matrix A_d, B_d, C_d, D_d;
};

/// Bilinear map of the controller with A_tau_K and A_samp_K folded into A_K.
/// Throws std::invalid_argument when I - (h/2) A is singular.
DiscreteMatrices tustin_discretize(const realization::ControllerAt& k, double h);

/// Frozen-rho Tustin controller rediscretized at each local sampling period.
class TustinController : public sim::DigitalController {
 public:
  explicit TustinController(std::shared_ptr<const realization::ContinuousController> ctrl);

  std::string name() const override { return "baseline"; }
  int order() const override { return ctrl_->order(); }
  void reset() override;
  Vector sample(double t_k, double t_k1, const Vector& rho_k, double tau_k,
                const Vector& y_k) override;
  const Vector& state() const override { return held_; }

 private:
  std::shared_ptr<const realization::ContinuousController> ctrl_;
  Vector current_;
  Vector held_;
};

}  // namespace lpvsd::baseline
