#include "lpvsd/lpv_core.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lpvsd {

bool ScheduleSet::contains(const Vector& rho, double tol) const {
  if (rho.size() != lower.size()) return false;
  for (int i = 0; i < rho.size(); ++i) {
    if (rho[i] < lower[i] - tol || rho[i] > upper[i] + tol) return false;
  }
  return true;
}

void ScheduleSet::validate() const {
  if (lower.size() < 1) throw std::invalid_argument("schedule set needs at least one parameter");
  if (upper.size() != lower.size() || rate_bound.size() != lower.size()) {
    throw std::invalid_argument("schedule set bounds have inconsistent lengths");
  }
  for (int i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      std::ostringstream os;
      os << "schedule axis " << i << ": lower bound " << lower[i] << " must be below upper bound "
         << upper[i];
      throw std::invalid_argument(os.str());
    }
    if (!(rate_bound[i] >= 0.0)) {
      throw std::invalid_argument("schedule rate bounds must be nonnegative");
    }
  }
}

AffineMatrixFn::AffineMatrixFn(Matrix base, std::vector<Matrix> slopes)
    : base_(std::move(base)), slopes_(std::move(slopes)) {
  for (const auto& s : slopes_) {
    if (s.rows() != base_.rows() || s.cols() != base_.cols()) {
      throw std::invalid_argument("affine matrix coefficients must share dimensions");
    }
  }
}

AffineMatrixFn AffineMatrixFn::constant(const Matrix& value, int n_params) {
  return AffineMatrixFn(value, std::vector<Matrix>(static_cast<std::size_t>(n_params),
                                                   Matrix::Zero(value.rows(), value.cols())));
}

AffineMatrixFn AffineMatrixFn::zero(int rows, int cols, int n_params) {
  return constant(Matrix::Zero(rows, cols), n_params);
}

Matrix AffineMatrixFn::operator()(const Vector& rho) const {
  if (rho.size() != n_params()) {
    std::ostringstream os;
    os << "parameter vector has length " << rho.size() << ", affine function expects "
       << n_params();
    throw std::invalid_argument(os.str());
  }
  Matrix out = base_;
  for (int i = 0; i < n_params(); ++i) out += rho[i] * slopes_[static_cast<std::size_t>(i)];
  return out;
}

AffineEval eval_affine(const AffineMatrixFn& m, const Vector& rho, const ScheduleSet& set) {
  AffineEval out;
  out.value = m(rho);
  out.outside_schedule = !set.contains(rho);
  return out;
}

Grid make_grid(const ScheduleSet& set, const std::vector<int>& counts) {
  if (static_cast<int>(counts.size()) != set.size()) {
    throw std::invalid_argument("grid needs one point count per schedule axis");
  }
  for (int c : counts) {
    if (c < 2) throw std::invalid_argument("grid counts must be at least 2 per axis");
  }
  std::vector<std::vector<double>> axes;
  for (int i = 0; i < set.size(); ++i) {
    const int c = counts[static_cast<std::size_t>(i)];
    std::vector<double> axis(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) {
      // Endpoints are assigned exactly so they never drift by rounding.
      if (k == 0) {
        axis[0] = set.lower[i];
      } else if (k == c - 1) {
        axis[static_cast<std::size_t>(k)] = set.upper[i];
      } else {
        axis[static_cast<std::size_t>(k)] =
            set.lower[i] + (set.upper[i] - set.lower[i]) * static_cast<double>(k) / (c - 1);
      }
    }
    axes.push_back(std::move(axis));
  }

  Grid grid;
  grid.counts = counts;
  std::vector<int> idx(counts.size(), 0);
  while (true) {
    Vector p(set.size());
    for (int i = 0; i < set.size(); ++i) p[i] = axes[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    grid.points.push_back(p);
    int axis = set.size() - 1;
    while (axis >= 0) {
      auto& k = idx[static_cast<std::size_t>(axis)];
      if (++k < counts[static_cast<std::size_t>(axis)]) break;
      k = 0;
      --axis;
    }
    if (axis < 0) break;
  }
  return grid;
}

std::vector<std::vector<int>> vertex_signs(int n_s) {
  if (n_s < 1) throw std::invalid_argument("vertex_signs needs at least one parameter");
  const std::size_t total = std::size_t{1} << n_s;
  std::vector<std::vector<int>> out;
  out.reserve(total);
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<int> s(static_cast<std::size_t>(n_s));
    for (int i = 0; i < n_s; ++i) {
      const bool minus = (code >> (n_s - 1 - i)) & 1U;
      s[static_cast<std::size_t>(i)] = minus ? -1 : 1;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t ValidationReport::count(Finding::Kind kind) const {
  std::size_t c = 0;
  for (const auto& f : findings) c += (f.kind == kind) ? 1 : 0;
  return c;
}

namespace {

void check_dims(ValidationReport& r, const char* name, const AffineMatrixFn& m, int rows, int cols,
                int n_params) {
  if (m.rows() != rows || m.cols() != cols || m.n_params() != n_params) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << " with " << m.n_params()
       << " parameter slopes, expected " << rows << "x" << cols << " with " << n_params;
    r.findings.push_back({Finding::Kind::dimension, os.str()});
  }
}

Grid probe_grid(const ScheduleSet& set, int probe_points) {
  return make_grid(set, std::vector<int>(static_cast<std::size_t>(set.size()), probe_points));
}

void check_gradient(ValidationReport& r, const char* name, const ScalarLaw& f,
                    const GradientLaw& g, const Vector& rho) {
  const Vector grad = g(rho);
  if (grad.size() != rho.size()) {
    r.findings.push_back({Finding::Kind::derivative,
                          std::string(name) + " gradient has the wrong length"});
    return;
  }
  for (int i = 0; i < rho.size(); ++i) {
    const double step = 1e-5 * std::max(1.0, std::abs(rho[i]));
    Vector hi = rho, lo = rho;
    hi[i] += step;
    lo[i] -= step;
    const double fd = (f(hi) - f(lo)) / (2.0 * step);
    if (std::abs(grad[i] - fd) > 1e-6 * std::max(1.0, std::abs(grad[i]))) {
      std::ostringstream os;
      os << name << " derivative along axis " << i << " at rho=" << rho.transpose() << " is "
         << grad[i] << ", central difference gives " << fd;
      r.findings.push_back({Finding::Kind::derivative, os.str()});
    }
  }
}

}  // namespace

double law_maximum(const ScalarLaw& law, const ScheduleSet& set, int probe_points) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : probe_grid(set, probe_points).points) best = std::max(best, law(p));
  return best;
}

ValidationReport validate_plant(const LPVDelayPlant& p, int probe_points) {
  ValidationReport r;
  try {
    p.schedule.validate();
  } catch (const std::exception& e) {
    r.findings.push_back({Finding::Kind::schedule, e.what()});
    return r;
  }
  const int s = p.n_params();
  check_dims(r, "A", p.A, p.n, p.n, s);
  check_dims(r, "A_tau", p.A_tau, p.n, p.n, s);
  check_dims(r, "B1", p.B1, p.n, p.n_w, s);
  check_dims(r, "B2", p.B2, p.n, p.n_u, s);
  check_dims(r, "C1", p.C1, p.n_z, p.n, s);
  check_dims(r, "C1_tau", p.C1_tau, p.n_z, p.n, s);
  check_dims(r, "D11", p.D11, p.n_z, p.n_w, s);
  check_dims(r, "D12", p.D12, p.n_z, p.n_u, s);
  check_dims(r, "C2", p.C2, p.n_y, p.n, s);
  if (p.initial_history.size() != p.n) {
    r.findings.push_back({Finding::Kind::dimension, "initial history length differs from n"});
  }

  if (!p.delay.value || !p.delay.gradient) {
    r.findings.push_back({Finding::Kind::delay_bound, "delay law is not defined"});
  }
  if (!p.sampling.value || !p.sampling.gradient) {
    r.findings.push_back({Finding::Kind::sampling_bound, "sampling law is not defined"});
  }
  if (!r.ok() && (r.count(Finding::Kind::delay_bound) || r.count(Finding::Kind::sampling_bound))) {
    return r;
  }

  const Grid probe = probe_grid(p.schedule, probe_points);
  bool delay_flagged = false, sampling_flagged = false;
  for (const auto& rho : probe.points) {
    const double tau = p.delay.value(rho);
    if (!delay_flagged && !(tau >= 0.0 && tau <= p.delay.upper_bound * (1.0 + 1e-12))) {
      std::ostringstream os;
      os << "delay " << tau << " at rho=" << rho.transpose() << " is outside [0, "
         << p.delay.upper_bound << "]";
      r.findings.push_back({Finding::Kind::delay_bound, os.str()});
      delay_flagged = true;
    }
    const double period = p.sampling.value(rho);
    if (!sampling_flagged && !(period > 0.0 && period <= p.sampling.upper_bound * (1.0 + 1e-12))) {
      std::ostringstream os;
      os << "sampling period " << period << " at rho=" << rho.transpose()
         << " is outside (0, " << p.sampling.upper_bound << "]";
      r.findings.push_back({Finding::Kind::sampling_bound, os.str()});
      sampling_flagged = true;
    }
  }
  // One derivative finding per law is enough to flag a broken gradient.
  for (const auto& rho : probe.points) {
    const auto before = r.findings.size();
    check_gradient(r, "delay law", p.delay.value, p.delay.gradient, rho);
    if (r.findings.size() != before) break;
  }
  for (const auto& rho : probe.points) {
    const auto before = r.findings.size();
    check_gradient(r, "sampling law", p.sampling.value, p.sampling.gradient, rho);
    if (r.findings.size() != before) break;
  }
  return r;
}

}  // namespace lpvsd
