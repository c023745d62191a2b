#include "lpvsd/hybrid_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "lpvsd/engine_afr.hpp"

namespace lpvsd::sim {

// ---------------------------------------------------------------- signals

SignalSpec SignalSpec::constant(double v) {
  SignalSpec s;
  s.kind = Kind::constant;
  s.breakpoints = {{0.0, v}};
  return s;
}

SignalSpec SignalSpec::steps(std::vector<std::pair<double, double>> bp) {
  SignalSpec s;
  s.kind = Kind::step_sequence;
  s.breakpoints = std::move(bp);
  return s;
}

SignalSpec SignalSpec::pulses(std::vector<std::pair<double, double>> bp, double width) {
  SignalSpec s;
  s.kind = Kind::pulse_train;
  s.breakpoints = std::move(bp);
  s.width = width;
  return s;
}

SignalSpec SignalSpec::linear(std::vector<std::pair<double, double>> bp) {
  SignalSpec s;
  s.kind = Kind::piecewise_linear;
  s.breakpoints = std::move(bp);
  return s;
}

double SignalSpec::value(double t) const {
  const auto& bp = breakpoints;
  switch (kind) {
    case Kind::constant:
      return bp.front().second;
    case Kind::step_sequence: {
      auto it = std::upper_bound(bp.begin(), bp.end(), t,
                                 [](double v, const auto& p) { return v < p.first; });
      if (it == bp.begin()) return bp.front().second;
      return std::prev(it)->second;
    }
    case Kind::pulse_train: {
      double v = 0.0;
      for (const auto& [t0, a] : bp) {
        if (t >= t0 && t < t0 + width) v += a;
      }
      return v;
    }
    case Kind::piecewise_linear: {
      if (t <= bp.front().first) return bp.front().second;
      if (t >= bp.back().first) return bp.back().second;
      auto it = std::upper_bound(bp.begin(), bp.end(), t,
                                 [](double v, const auto& p) { return v < p.first; });
      const auto& [t1, v1] = *it;
      const auto& [t0, v0] = *std::prev(it);
      return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
    }
  }
  return 0.0;
}

std::vector<double> SignalSpec::discontinuities() const {
  std::vector<double> out;
  switch (kind) {
    case Kind::constant:
      break;
    case Kind::step_sequence:
      for (std::size_t i = 1; i < breakpoints.size(); ++i) out.push_back(breakpoints[i].first);
      break;
    case Kind::pulse_train:
      for (const auto& p : breakpoints) {
        out.push_back(p.first);
        out.push_back(p.first + width);
      }
      break;
    case Kind::piecewise_linear:
      for (const auto& p : breakpoints) out.push_back(p.first);
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void SignalSpec::validate() const {
  if (breakpoints.empty()) throw std::invalid_argument("signal needs at least one breakpoint");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!std::isfinite(breakpoints[i].first) || !std::isfinite(breakpoints[i].second)) {
      throw std::invalid_argument("signal breakpoints must be finite");
    }
    if (i > 0 && !(breakpoints[i].first > breakpoints[i - 1].first)) {
      throw std::invalid_argument("signal breakpoint times must increase strictly");
    }
  }
  if (kind == Kind::pulse_train && !(width > 0.0)) {
    throw std::invalid_argument("pulse width must be positive");
  }
}

std::string to_string(SignalSpec::Kind k) {
  switch (k) {
    case SignalSpec::Kind::constant:
      return "constant";
    case SignalSpec::Kind::step_sequence:
      return "step-sequence";
    case SignalSpec::Kind::pulse_train:
      return "pulse-train";
    case SignalSpec::Kind::piecewise_linear:
      return "piecewise-linear";
  }
  return "?";
}

SignalSpec::Kind parse_signal_kind(const std::string& s) {
  if (s == "constant") return SignalSpec::Kind::constant;
  if (s == "step-sequence") return SignalSpec::Kind::step_sequence;
  if (s == "pulse-train") return SignalSpec::Kind::pulse_train;
  if (s == "piecewise-linear") return SignalSpec::Kind::piecewise_linear;
  throw std::invalid_argument("unknown signal kind '" + s + "'");
}

// ---------------------------------------------------------------- history

HistoryBuffer::HistoryBuffer(Vector initial_history, double t0, double keep_span)
    : phi_(std::move(initial_history)), keep_span_(keep_span) {
  entries_.emplace_back(t0, phi_);
}

void HistoryBuffer::push(double t, Vector x) {
  if (!(t > newest_time())) throw std::invalid_argument("history timestamps must increase");
  entries_.emplace_back(t, std::move(x));
  const double cutoff = t - keep_span_;
  while (entries_.size() > 2 && entries_[1].first <= cutoff) entries_.pop_front();
}

Vector history_lookup(const HistoryBuffer& buf, double t, Interpolation mode) {
  const double newest = buf.newest_time();
  if (t > newest + 1e-12 * (1.0 + std::abs(newest))) {
    throw std::out_of_range("history lookup beyond the newest state");
  }
  const double first = buf.oldest_time();
  if (t <= first) {
    if (buf.size() == 1 || t < first) return buf.initial_history();
    return buf.entry(0).second;
  }
  if (t >= newest) return buf.newest();

  // Index of the first entry strictly after t.
  std::size_t lo = 0, hi = buf.size() - 1;
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    if (buf.entry(mid).first <= t) lo = mid;
    else hi = mid;
  }
  const auto& [t0, x0] = buf.entry(lo);
  const auto& [t1, x1] = buf.entry(hi);
  if (t == t0) return x0;

  if (mode == Interpolation::cubic && lo >= 1 && hi + 1 < buf.size()) {
    const double ts[4] = {buf.entry(lo - 1).first, t0, t1, buf.entry(hi + 1).first};
    const Vector* xs[4] = {&buf.entry(lo - 1).second, &x0, &x1, &buf.entry(hi + 1).second};
    Vector out = Vector::Zero(x0.size());
    for (int i = 0; i < 4; ++i) {
      double w = 1.0;
      for (int j = 0; j < 4; ++j) {
        if (j != i) w *= (t - ts[j]) / (ts[i] - ts[j]);
      }
      out += w * *xs[i];
    }
    return out;
  }
  const double a = (t - t0) / (t1 - t0);
  return (1.0 - a) * x0 + a * x1;
}

// ---------------------------------------------------------------- integrator

namespace {

bool finite_and_bounded(const Vector& v, double bound = 1e8) {
  return v.allFinite() && v.lpNorm<Eigen::Infinity>() < bound;
}

}  // namespace

Vector dde_step(const LPVDelayPlant& plant, HistoryBuffer& buf, const TimeFn& rho_of,
                const TimeFn& w_of, const Vector& u_held, double h, Interpolation mode) {
  if (!(h > 0.0)) throw std::invalid_argument("dde_step: h must be positive");
  const double t = buf.newest_time();
  const Vector x = buf.newest();

  auto f = [&](double s, const Vector& xs) -> Vector {
    const Vector rho = rho_of(s);
    Vector dx = plant.A(rho) * xs + plant.B1(rho) * w_of(s) + plant.B2(rho) * u_held;
    const Matrix Ad = plant.A_tau(rho);
    if (!Ad.isZero(0.0)) {
      const double lag = s - plant.delay.value(rho);
      if (lag > t + 1e-12 * (1.0 + std::abs(t))) {
        throw std::invalid_argument("dde_step: step longer than the current delay");
      }
      dx += Ad * history_lookup(buf, std::min(lag, t), mode);
    }
    return dx;
  };

  const Vector k1 = f(t, x);
  const Vector k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const Vector k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const Vector k4 = f(t + h, x + h * k3);
  Vector next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!finite_and_bounded(next)) {
    std::ostringstream msg;
    msg << "plant state diverged at t=" << t + h;
    throw InstabilityError(msg.str());
  }
  buf.push(t + h, next);
  return next;
}

// ---------------------------------------------------------------- controller

ExactDigitalController::ExactDigitalController(
    std::shared_ptr<const realization::ContinuousController> ctrl)
    : ctrl_(std::move(ctrl)) {
  if (!ctrl_) throw std::invalid_argument("ExactDigitalController: null controller");
  initial_ = Vector::Zero(ctrl_->order());
  reset();
}

void ExactDigitalController::reset() {
  times_.clear();
  states_.clear();
  current_ = initial_;
  held_state_ = initial_;
  clamped_steps = 0;
  warmup_steps = 0;
}

Vector ExactDigitalController::sample(double t_k, double t_k1, const Vector& rho_k, double tau_k,
                                      const Vector& y_k) {
  // current_ holds x_d(k) computed at the previous instant.
  if (!times_.empty() && !(t_k > times_.back())) {
    throw std::invalid_argument("sampling instants must increase");
  }
  times_.push_back(t_k);
  states_.push_back(current_);

  const auto k = ctrl_->at(rho_k);
  const auto taps = realization::discretize_step(k, t_k, t_k1, tau_k, times_);
  if (taps.clamped) ++clamped_steps;
  if (taps.warmup) ++warmup_steps;

  const Vector& xk = states_.back();
  Vector u = taps.C_d * xk + taps.D_d * y_k;

  Vector next = taps.A_d * xk + taps.B_d * y_k;
  for (const auto& tap : taps.taps) {
    if (tap.from_initial_history) {
      next += tap.gain * initial_;
      continue;
    }
    auto it = std::lower_bound(times_.begin(), times_.end(), tap.timestamp);
    next += tap.gain * states_[static_cast<std::size_t>(it - times_.begin())];
  }
  current_ = std::move(next);
  held_state_ = xk;
  return u;
}

// ---------------------------------------------------------------- scenarios

namespace {

std::pair<double, double> value_range(const SignalSpec& s) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : s.breakpoints) {
    lo = std::min(lo, p.second);
    hi = std::max(hi, p.second);
  }
  if (s.kind == SignalSpec::Kind::pulse_train) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  return {lo, hi};
}

}  // namespace

double Scenario::effective_step(const LPVDelayPlant& plant) const {
  if (step > 0.0) return step;
  return std::min(plant.delay.upper_bound, plant.sampling.upper_bound) / 20.0;
}

void Scenario::validate(const LPVDelayPlant& plant) const {
  if (!(duration > 0.0)) throw std::invalid_argument("scenario duration must be positive");
  if (plant.n_params() != 1) {
    throw std::invalid_argument("scenarios schedule on a single speed parameter");
  }
  if (plant.n_w != 2) throw std::invalid_argument("scenarios drive w = [r, d]");
  speed.validate();
  reference.validate();
  disturbance.validate();

  if (speed.kind == SignalSpec::Kind::pulse_train ||
      (speed.kind == SignalSpec::Kind::step_sequence && speed.breakpoints.size() > 1)) {
    throw std::invalid_argument("speed profile must be constant or piecewise-linear");
  }
  const auto [lo, hi] = value_range(speed);
  Vector vlo(1), vhi(1);
  vlo << lo;
  vhi << hi;
  if (!plant.schedule.contains(vlo, 1e-9) || !plant.schedule.contains(vhi, 1e-9)) {
    throw std::invalid_argument("speed profile leaves the schedule range");
  }
  if (speed.kind == SignalSpec::Kind::piecewise_linear) {
    const double nu = plant.schedule.rate_bound[0];
    for (std::size_t i = 1; i < speed.breakpoints.size(); ++i) {
      const auto& [t0, v0] = speed.breakpoints[i - 1];
      const auto& [t1, v1] = speed.breakpoints[i];
      if (std::abs(v1 - v0) / (t1 - t0) > nu * (1.0 + 1e-12)) {
        throw std::invalid_argument("speed profile exceeds the rate bound");
      }
    }
  }

  const double h = effective_step(plant);
  if (!(h > 0.0)) throw std::invalid_argument("integration step must be positive");
  // The fastest sampling happens at an extreme of the profile.
  double t_min = std::min(plant.sampling.value(vlo), plant.sampling.value(vhi));
  if (h > t_min / 4.0 * (1.0 + 1e-9)) {
    throw std::invalid_argument("integration step exceeds a quarter of the sampling period");
  }
  double tau_min = std::min(plant.delay.value(vlo), plant.delay.value(vhi));
  if (h > tau_min) throw std::invalid_argument("integration step exceeds the delay");
}

namespace {

// Idle, ramps and cruise over [800, 4000] rpm; every slope stays below 400 rpm/s
// and each 20 s reference window ends on a constant-speed stretch.
SignalSpec drive_profile() {
  return SignalSpec::linear({{0, 800},
                             {5, 800},
                             {10, 2000},
                             {25, 2000},
                             {33, 4000},
                             {45, 4000},
                             {50, 3000},
                             {65, 3000},
                             {72, 1500},
                             {85, 1500},
                             {90, 800},
                             {100, 800}});
}

SignalSpec tracking_reference() {
  return SignalSpec::steps({{0, 1.0}, {20, 1.1}, {40, 0.9}, {60, 1.1}, {80, 0.9}});
}

Scenario make(std::string name, double duration, SignalSpec speed, SignalSpec r, SignalSpec d) {
  Scenario s;
  s.name = std::move(name);
  // Tracking presets command absolute lambda; the loop starts at rest at lambda = 1.
  s.operating_lambda = r.kind == SignalSpec::Kind::step_sequence ? 1.0 : 0.0;
  s.duration = duration;
  s.speed = std::move(speed);
  s.reference = std::move(r);
  s.disturbance = std::move(d);
  return s;
}

const std::map<std::string, Scenario>& presets() {
  static const std::map<std::string, Scenario> table = [] {
    std::map<std::string, Scenario> m;
    auto add = [&](Scenario s) { m.emplace(s.name, std::move(s)); };
    add(make("tracking-no-disturbance", 100.0, drive_profile(), tracking_reference(),
             SignalSpec::constant(0.0)));
    add(make("tracking-with-disturbance", 100.0, drive_profile(), tracking_reference(),
             SignalSpec::pulses({{10, 0.05}, {30, -0.05}, {50, 0.05}, {70, -0.05}, {90, 0.05}},
                                2.0)));
    auto oxygen = SignalSpec::pulses({{5, 0.05}, {25, -0.05}}, 2.0);
    add(make("oxygen-800rpm", 40.0, SignalSpec::constant(800.0), SignalSpec::constant(0.0),
             oxygen));
    add(make("oxygen-3000rpm", 40.0, SignalSpec::constant(3000.0), SignalSpec::constant(0.0),
             oxygen));
    add(make("energy-disturbance-pulse", 40.0, SignalSpec::constant(2000.0),
             SignalSpec::constant(0.0), SignalSpec::pulses({{1, 0.05}}, 2.0)));
    add(make("energy-reference-pulse", 40.0, SignalSpec::linear({{0, 800}, {16, 4000}}),
             SignalSpec::pulses({{1, 0.1}}, 1.0), SignalSpec::constant(0.0)));
    add(make("energy-mixed", 40.0, SignalSpec::linear({{0, 3000}, {10, 1000}}),
             SignalSpec::pulses({{0.5, 0.05}, {4, -0.05}}, 1.5),
             SignalSpec::linear({{0, 0}, {2, 0.04}, {5, -0.03}, {8, 0}})));
    return m;
  }();
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : presets()) out.push_back(name);
  return out;
}

Scenario preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw std::out_of_range("unknown scenario '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------- simulation

SimulationTrace simulate(const Scenario& sc, const LPVDelayPlant& plant, DigitalController& ctrl) {
  sc.validate(plant);
  const double h = sc.effective_step(plant);
  const double snap = 1e-9 * h;

  auto rho_of = [&](double t) {
    Vector r(1);
    r << sc.speed.value(t);
    return r;
  };
  auto w_of = [&](double t) {
    Vector w(2);
    w << sc.reference.value(t) - sc.operating_lambda, sc.disturbance.value(t);
    return w;
  };

  std::vector<double> events;
  for (const auto* s : {&sc.speed, &sc.reference, &sc.disturbance}) {
    for (double e : s->discontinuities()) {
      if (e > 0.0 && e < sc.duration) events.push_back(e);
    }
  }
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  std::size_t next_event = 0;

  SimulationTrace tr;
  tr.controller = ctrl.name();
  tr.operating_lambda = sc.operating_lambda;
  ctrl.reset();

  HistoryBuffer buf(plant.initial_history, 0.0, plant.delay.upper_bound + 10.0 * h);
  engine::TwcState twc;

  double t = 0.0;
  double next_sample = 0.0;
  Vector u = Vector::Zero(plant.n_u);
  std::size_t mesh_index = 0;

  auto record = [&](bool flagged) {
    const Vector& x = buf.newest();
    const Vector rho = rho_of(t);
    const Vector w = w_of(t);
    const double tau = plant.delay.value(rho);
    Vector z = plant.C1(rho) * x + plant.D11(rho) * w + plant.D12(rho) * u;
    const Matrix C1t = plant.C1_tau(rho);
    if (!C1t.isZero(0.0)) z += C1t * history_lookup(buf, t - tau, sc.interpolation);
    const double lam = sc.operating_lambda + x[0] + w[1];
    if (!tr.t.empty()) {
      const double dl = 0.5 * (tr.lambda_up.back() + lam) - sc.operating_lambda;
      twc = engine::twc_step(twc, dl, t - tr.t.back());
    }
    tr.t.push_back(t);
    tr.x.push_back(x);
    tr.x_d.push_back(ctrl.state());
    tr.u.push_back(u);
    tr.y.push_back(plant.C2(rho) * x);
    tr.z.push_back(std::move(z));
    tr.r.push_back(w[0] + sc.operating_lambda);
    tr.d.push_back(w[1]);
    tr.omega.push_back(rho[0]);
    tr.tau.push_back(tau);
    tr.lambda_up.push_back(lam);
    tr.dm_o2.push_back(twc.stored_oxygen);
    tr.sample_flag.push_back(flagged ? 1 : 0);
  };

  try {
    while (true) {
      bool flagged = false;
      if (t >= next_sample - snap) {
        const Vector rho_k = rho_of(t);
        const double tau_k = plant.delay.value(rho_k);
        const double t_k1 = t + plant.sampling.value(rho_k);
        const Vector y_k = plant.C2(rho_k) * buf.newest();
        u = ctrl.sample(t, t_k1, rho_k, tau_k, y_k);
        if (!finite_and_bounded(u)) throw InstabilityError("controller output diverged");
        next_sample = t_k1;
        flagged = true;
        ++tr.samples;
      }
      record(flagged);
      if (t >= sc.duration - snap) break;

      while (next_event < events.size() && events[next_event] <= t + snap) ++next_event;
      while (static_cast<double>(mesh_index) * h <= t + snap) ++mesh_index;
      double t_next = std::min({static_cast<double>(mesh_index) * h, next_sample, sc.duration});
      if (next_event < events.size()) t_next = std::min(t_next, events[next_event]);

      dde_step(plant, buf, rho_of, w_of, u, t_next - t, sc.interpolation);
      t = t_next;
    }
  } catch (const InstabilityError& e) {
    tr.halted = true;
    tr.halt_time = t;
    tr.halt_reason = e.what();
  }
  tr.clamped_steps = ctrl.clamped_steps;
  tr.warmup_steps = ctrl.warmup_steps;
  return tr;
}

void write_csv(std::ostream& os, const SimulationTrace& tr) {
  auto width = [&](const std::vector<Vector>& v) { return v.empty() ? 0 : v.front().size(); };
  const auto nx = width(tr.x), nd = width(tr.x_d), nu = width(tr.u), ny = width(tr.y),
             nz = width(tr.z);
  os << "t";
  for (Eigen::Index i = 0; i < nx; ++i) os << ",x" << i + 1;
  for (Eigen::Index i = 0; i < nd; ++i) os << ",xd" << i + 1;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",u" << i + 1;
  for (Eigen::Index i = 0; i < ny; ++i) os << ",y" << i + 1;
  for (Eigen::Index i = 0; i < nz; ++i) os << ",z" << i + 1;
  os << ",r,d,omega,tau,lambda_up,dm_o2,sample\n";

  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  auto put_vec = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      os << ',';
      put(v[i]);
    }
  };
  for (std::size_t k = 0; k < tr.size(); ++k) {
    put(tr.t[k]);
    put_vec(tr.x[k]);
    put_vec(tr.x_d[k]);
    put_vec(tr.u[k]);
    put_vec(tr.y[k]);
    put_vec(tr.z[k]);
    for (double v : {tr.r[k], tr.d[k], tr.omega[k], tr.tau[k], tr.lambda_up[k], tr.dm_o2[k]}) {
      os << ',';
      put(v);
    }
    os << ',' << static_cast<int>(tr.sample_flag[k]) << '\n';
  }
}

// ---------------------------------------------------------------- metrics

namespace {

std::pair<std::size_t, std::size_t> window_indices(const std::vector<double>& t, Window w) {
  if (t.empty()) throw std::invalid_argument("empty trace");
  const double eps = 1e-12 * (1.0 + std::abs(w.t1));
  if (w.t0 < t.front() - eps || w.t1 > t.back() + eps || !(w.t1 > w.t0)) {
    throw std::invalid_argument("metrics window outside the trace");
  }
  auto lo = std::lower_bound(t.begin(), t.end(), w.t0 - eps);
  auto hi = std::upper_bound(t.begin(), t.end(), w.t1 + eps);
  std::size_t i0 = static_cast<std::size_t>(lo - t.begin());
  std::size_t i1 = static_cast<std::size_t>(hi - t.begin());
  if (i1 <= i0) throw std::invalid_argument("metrics window holds no samples");
  return {i0, i1 - 1};
}

}  // namespace

StepMetrics step_metrics(const std::vector<double>& t, const std::vector<double>& y,
                         const std::vector<double>& r, Window w) {
  const auto [i0, i1] = window_indices(t, w);
  StepMetrics m;
  m.window = w;
  // r is right-continuous, so the row at the window end may already carry
  // the next reference value.
  m.reference = r[i0];
  m.steady_state_error = r[i0] - y[i1];
  const double y0 = y[i0];
  const double yf = y[i1];
  const double step = yf - y0;
  // No commanded change in the window: nothing to settle.
  if (std::abs(r[i0] - y0) < 1e-9 || std::abs(step) < 1e-12) return m;

  const double dir = step > 0 ? 1.0 : -1.0;
  double peak = 0.0;
  for (std::size_t i = i0; i <= i1; ++i) peak = std::max(peak, dir * (y[i] - yf));
  m.overshoot_pct = 100.0 * peak / std::abs(step);

  const double band = 0.02 * std::abs(step);
  std::size_t last_out = i1 + 1;
  for (std::size_t i = i1 + 1; i-- > i0;) {
    if (std::abs(y[i] - yf) > band) {
      last_out = i;
      break;
    }
  }
  m.settling_time = last_out > i1 ? 0.0 : t[last_out + 1] - t[i0];
  return m;
}

double l2_norm(const std::vector<double>& t, const std::vector<Vector>& v, Window w) {
  const auto [i0, i1] = window_indices(t, w);
  double acc = 0.0;
  for (std::size_t i = i0 + 1; i <= i1; ++i) {
    acc += 0.5 * (t[i] - t[i - 1]) * (v[i].squaredNorm() + v[i - 1].squaredNorm());
  }
  return std::sqrt(acc);
}

std::optional<double> recovery_time(const std::vector<double>& t, const std::vector<double>& v,
                                    double t_from, double tol) {
  std::optional<std::size_t> last_out;
  for (std::size_t i = t.size(); i-- > 0;) {
    if (t[i] < t_from) break;
    if (std::abs(v[i]) > tol) {
      last_out = i;
      break;
    }
  }
  if (!last_out) return 0.0;
  if (*last_out + 1 >= t.size()) return std::nullopt;
  return t[*last_out + 1] - t_from;
}

Metrics metrics(const SimulationTrace& tr, const Scenario& sc, std::optional<Window> w) {
  if (tr.t.empty()) throw std::invalid_argument("empty trace");
  Metrics m;
  m.window = w.value_or(Window{tr.t.front(), tr.t.back()});

  std::vector<double> cuts{m.window.t0};
  for (double e : sc.reference.discontinuities()) {
    if (e > m.window.t0 && e < m.window.t1) cuts.push_back(e);
  }
  cuts.push_back(m.window.t1);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    m.segments.push_back(step_metrics(tr.t, tr.lambda_up, tr.r, {cuts[i], cuts[i + 1]}));
  }

  std::vector<Vector> wv(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    wv[i] = Vector(2);
    wv[i] << tr.r[i] - tr.operating_lambda, tr.d[i];
  }
  m.z_norm = l2_norm(tr.t, tr.z, m.window);
  m.w_norm = l2_norm(tr.t, wv, m.window);
  if (m.w_norm > 1e-12) m.l2_gain = m.z_norm / m.w_norm;

  const auto [i0, i1] = window_indices(tr.t, m.window);
  for (std::size_t i = i0; i <= i1; ++i) {
    m.max_abs_dm_o2 = std::max(m.max_abs_dm_o2, std::abs(tr.dm_o2[i]));
  }
  m.final_abs_dm_o2 = std::abs(tr.dm_o2[i1]);

  std::vector<double> ends;
  if (sc.disturbance.kind == SignalSpec::Kind::pulse_train) {
    for (const auto& p : sc.disturbance.breakpoints) ends.push_back(p.first + sc.disturbance.width);
  } else if (sc.disturbance.kind != SignalSpec::Kind::constant) {
    ends.push_back(sc.disturbance.breakpoints.back().first);
  }
  for (double e : ends) {
    if (e > m.window.t1) continue;
    // Measure only up to the next pulse start so later pulses do not count.
    double stop = m.window.t1;
    for (const auto& p : sc.disturbance.breakpoints) {
      if (p.first >= e) {
        stop = std::min(stop, p.first);
        break;
      }
    }
    const auto [j0, j1] = window_indices(tr.t, {m.window.t0, stop});
    std::vector<double> ts(tr.t.begin() + static_cast<long>(j0), tr.t.begin() + static_cast<long>(j1) + 1);
    std::vector<double> vs(tr.dm_o2.begin() + static_cast<long>(j0),
                           tr.dm_o2.begin() + static_cast<long>(j1) + 1);
    m.dm_o2_recovery.push_back(recovery_time(ts, vs, e, m.dm_o2_tolerance));
  }
  return m;
}

}  // namespace lpvsd::sim
