#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpvsd/lpv_core.hpp"
#include "lpvsd/realization.hpp"

namespace lpvsd::sim {

/// Scalar time signal.
///   constant:         value of the first breakpoint for all t
///   step_sequence:    value of the latest breakpoint with time <= t (first value before)
///   pulse_train:      amplitude v_i on [t_i, t_i + width), zero elsewhere
///   piecewise_linear: linear between breakpoints, held beyond the ends
struct SignalSpec {
  enum class Kind { constant, step_sequence, pulse_train, piecewise_linear };
  Kind kind = Kind::constant;
  std::vector<std::pair<double, double>> breakpoints{{0.0, 0.0}};
  double width = 0.0;  // pulse_train only

  static SignalSpec constant(double v);
  static SignalSpec steps(std::vector<std::pair<double, double>> bp);
  static SignalSpec pulses(std::vector<std::pair<double, double>> bp, double width);
  static SignalSpec linear(std::vector<std::pair<double, double>> bp);

  double value(double t) const;
  /// Instants where the signal or its slope jumps.
  std::vector<double> discontinuities() const;
  void validate() const;  // throws std::invalid_argument
};

std::string to_string(SignalSpec::Kind k);
SignalSpec::Kind parse_signal_kind(const std::string& s);

enum class Interpolation { linear, cubic };

/// Past plant states x(t) on the integration mesh; before the first entry
/// the constant initial history applies.
class HistoryBuffer {
 public:
  HistoryBuffer(Vector initial_history, double t0, double keep_span);

  void push(double t, Vector x);
  double newest_time() const { return entries_.back().first; }
  const Vector& newest() const { return entries_.back().second; }
  double oldest_time() const { return entries_.front().first; }
  const Vector& initial_history() const { return phi_; }
  std::size_t size() const { return entries_.size(); }
  const std::pair<double, Vector>& entry(std::size_t i) const { return entries_[i]; }

 private:
  Vector phi_;
  double keep_span_;
  std::deque<std::pair<double, Vector>> entries_;
};

/// x(t) from the buffer. Throws std::out_of_range beyond the newest entry.
Vector history_lookup(const HistoryBuffer& buf, double t,
                      Interpolation mode = Interpolation::linear);

class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TimeFn = std::function<Vector(double)>;

/// One RK4 step of the delayed plant from buf.newest_time() to +h with u held.
/// Delayed states are read from the buffer at each stage time. Appends and
/// returns x(t+h); throws InstabilityError on nonfinite values.
Vector dde_step(const LPVDelayPlant& plant, HistoryBuffer& buf, const TimeFn& rho_of,
                const TimeFn& w_of, const Vector& u_held, double h,
                Interpolation mode = Interpolation::linear);

/// Sampled controller driven by the event loop.
class DigitalController {
 public:
  virtual ~DigitalController() = default;
  virtual std::string name() const = 0;
  virtual int order() const = 0;
  virtual void reset() = 0;
  /// Called at t_k with rho(t_k), tau_k and y(t_k); returns u held on [t_k, t_k1).
  virtual Vector sample(double t_k, double t_k1, const Vector& rho_k, double tau_k,
                        const Vector& y_k) = 0;
  /// Controller state x_d(k) used for the latest output.
  virtual const Vector& state() const = 0;

  std::size_t clamped_steps = 0;
  std::size_t warmup_steps = 0;
};

/// Exact discretization of the gain-scheduled controller with delayed taps.
class ExactDigitalController : public DigitalController {
 public:
  explicit ExactDigitalController(std::shared_ptr<const realization::ContinuousController> ctrl);

  std::string name() const override { return "proposed"; }
  int order() const override { return ctrl_->order(); }
  void reset() override;
  Vector sample(double t_k, double t_k1, const Vector& rho_k, double tau_k,
                const Vector& y_k) override;
  const Vector& state() const override { return held_state_; }

 private:
  std::shared_ptr<const realization::ContinuousController> ctrl_;
  std::vector<double> times_;
  std::vector<Vector> states_;
  Vector current_;     // x_d(k+1), waiting for the next instant
  Vector held_state_;  // x_d(k)
  Vector initial_;
};

struct Scenario {
  std::string name;
  double duration = 10.0;
  SignalSpec speed = SignalSpec::constant(800.0);  // rpm
  SignalSpec reference = SignalSpec::constant(0.0);
  SignalSpec disturbance = SignalSpec::constant(0.0);
  double step = 0.0;  // 0 selects min(tau_bar, T_bar)/20
  // The plant is a deviation model: w = [r - operating_lambda, d] and the
  // reported lambda is operating_lambda + x1 + d. The loop starts at rest there.
  double operating_lambda = 0.0;
  Interpolation interpolation = Interpolation::linear;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument.
  void validate(const LPVDelayPlant& plant) const;
  double effective_step(const LPVDelayPlant& plant) const;
};

/// Names of the built-in scenarios.
std::vector<std::string> preset_names();
/// Throws std::out_of_range for an unknown name.
Scenario preset(const std::string& name);

struct SimulationTrace {
  std::vector<double> t;
  std::vector<Vector> x;      // plant state
  std::vector<Vector> x_d;    // controller state behind the held output
  std::vector<Vector> u;
  std::vector<Vector> y;
  std::vector<Vector> z;
  std::vector<double> r, d, omega, tau;
  std::vector<double> lambda_up;  // operating_lambda + x1 + d
  std::vector<double> dm_o2;  // trapezoidal integral of lambda_up - operating_lambda
  std::vector<char> sample_flag;

  std::string controller;
  double operating_lambda = 0.0;
  double gamma_reference = 0.0;  // unused by the simulator, carried for reports
  bool halted = false;
  double halt_time = 0.0;
  std::string halt_reason;
  std::size_t clamped_steps = 0;
  std::size_t warmup_steps = 0;
  std::size_t samples = 0;

  std::size_t size() const { return t.size(); }
};

/// Hybrid closed loop: plant advanced by dde_step between sampling instants,
/// controller sampled at t_k with t_{k+1} = t_k + T(rho(t_k)). Instability
/// halts the run and returns the partial trace with `halted` set.
SimulationTrace simulate(const Scenario& sc, const LPVDelayPlant& plant, DigitalController& ctrl);

/// CSV with a header row; doubles printed with 17 significant digits.
void write_csv(std::ostream& os, const SimulationTrace& tr);

struct Window {
  double t0 = 0.0;
  double t1 = 0.0;
};

struct StepMetrics {
  Window window;
  double reference = 0.0;
  double overshoot_pct = 0.0;
  std::optional<double> settling_time;  // from window start; empty if no step in window
  double steady_state_error = 0.0;      // r - y at the window end
};

/// Step response of y on a window (samples t, y). Final value is y at the
/// window end, initial value y at its start; the 2% band is relative to
/// the step size. The reference is r at the window start; overshoot and
/// settling stay empty when it equals the initial y (no commanded change).
StepMetrics step_metrics(const std::vector<double>& t, const std::vector<double>& y,
                         const std::vector<double>& r, Window w);

struct Metrics {
  Window window;
  std::vector<StepMetrics> segments;  // between reference changes
  double z_norm = 0.0;
  double w_norm = 0.0;
  std::optional<double> l2_gain;  // empty when w vanishes
  double max_abs_dm_o2 = 0.0;
  double final_abs_dm_o2 = 0.0;
  /// Per disturbance pulse: seconds after its end until |dm_o2| stays <= tol.
  std::vector<std::optional<double>> dm_o2_recovery;
  double dm_o2_tolerance = 0.01;
};

/// L2 norm over the window by trapezoidal quadrature.
double l2_norm(const std::vector<double>& t, const std::vector<Vector>& v, Window w);

Metrics metrics(const SimulationTrace& tr, const Scenario& sc, std::optional<Window> w = {});

/// Time after `t_from` until |v| stays <= tol to the end of the trace.
std::optional<double> recovery_time(const std::vector<double>& t, const std::vector<double>& v,
                                    double t_from, double tol);

}  // namespace lpvsd::sim
