#pragma once

#include <memory>

#include "lpvsd/engine_afr.hpp"
#include "lpvsd/realization.hpp"
#include "lpvsd/synthesis.hpp"

namespace lpvsd::testing {

/// Default engine plant.
const LPVDelayPlant& afr_plant();

/// Certificate from a single lambda tuple (0.1, 0.1, 0.1) on the default
/// grid; solved once per process.
const synthesis::SynthesisCertificate& afr_certificate();

std::shared_ptr<const realization::ContinuousController> afr_controller();

/// Maximum absolute entry.
double max_abs(const Matrix& m);

/// Scalar plant with one state, one disturbance, one input, one output and
/// the given delay law constant tau; schedule [lo, hi].
LPVDelayPlant scalar_plant(double a, double a_tau, double b1, double b2, double tau,
                           double sampling, double lo = 0.0, double hi = 1.0);

}  // namespace lpvsd::testing
