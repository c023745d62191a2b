#pragma once

#include <string>

#include "lpvsd/lpv_core.hpp"

namespace lpvsd::engine {

enum class SamplingConvention {
  literal_4pi,   // T = 4*pi/omega with omega in rpm, as printed
  physical_120,  // T = 120/omega, two crankshaft revolutions at omega rpm
};

SamplingConvention parse_convention(const std::string& name);
std::string to_string(SamplingConvention c);

struct EngineConfig {
  int cylinders = 6;
  double omega_gain = 50.0;    // actuator numerator gain
  double lambda_pole = 50.0;   // actuator pole
  double eps1 = 1e-3;
  double eps2 = 1e-3;
  double weight_tracking = 1.0;   // on x3
  double weight_oxygen = 0.1;     // on x4
  double weight_effort = 0.1;     // on u
  double speed_min = 800.0;       // rpm
  double speed_max = 4000.0;      // rpm
  double speed_rate = 400.0;      // |d omega/dt| bound, rpm/s
  SamplingConvention convention = SamplingConvention::literal_4pi;

  void validate() const;  // throws std::invalid_argument
};

/// First-order fuel-path lag 120(cyl-1)/(cyl*omega); 100/omega for six cylinders.
double time_constant(double omega_rpm, int cylinders = 6);

/// Cycle plus gas transport delay, 180/omega.
double delay_law(double omega_rpm);
double delay_law_derivative(double omega_rpm);

double sampling_law(double omega_rpm, SamplingConvention convention);
double sampling_law_derivative(double omega_rpm, SamplingConvention convention);

/// Four-state delayed LPV plant: x = [afr, actuator, integrated error, double integral].
/// w = [r, d], y = x3, z = [phi*x3, psi*x4, xi*u], rho = omega (rpm).
LPVDelayPlant build_afr_plant(const EngineConfig& cfg);

/// Oxygen storage of the catalyst as a pure integrator of the upstream AFR deviation.
struct TwcState {
  double stored_oxygen = 0.0;   // delta m_O2, normalized
  double upstream_flow = 1.0;   // m_O2,up
};

TwcState twc_step(const TwcState& s, double delta_lambda_up, double dt);

}  // namespace lpvsd::engine
