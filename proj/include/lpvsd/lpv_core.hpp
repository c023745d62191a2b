#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lpvsd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Box of admissible scheduling parameters with per-axis rate bounds.
struct ScheduleSet {
  Vector lower;
  Vector upper;
  Vector rate_bound;  // nu_i >= 0, same units as the parameter per second

  int size() const { return static_cast<int>(lower.size()); }
  bool contains(const Vector& rho, double tol = 0.0) const;
  void validate() const;  // throws std::invalid_argument
};

using ScalarLaw = std::function<double(const Vector&)>;
using GradientLaw = std::function<Vector(const Vector&)>;

/// tau(rho) with its gradient and bounds.
struct DelayLaw {
  ScalarLaw value;
  GradientLaw gradient;
  double upper_bound = 0.0;
  double rate_bound = 0.0;
};

/// Sampling period T(rho) with its gradient and upper bound.
struct SamplingLaw {
  ScalarLaw value;
  GradientLaw gradient;
  double upper_bound = 0.0;
};

/// M(rho) = M0 + sum_i rho_i M_i.
class AffineMatrixFn {
 public:
  AffineMatrixFn() = default;
  AffineMatrixFn(Matrix base, std::vector<Matrix> slopes);

  /// Constant function with `n_params` zero slopes.
  static AffineMatrixFn constant(const Matrix& value, int n_params);
  static AffineMatrixFn zero(int rows, int cols, int n_params);

  Matrix operator()(const Vector& rho) const;

  const Matrix& base() const { return base_; }
  const std::vector<Matrix>& slopes() const { return slopes_; }
  const Matrix& slope(int i) const { return slopes_.at(static_cast<std::size_t>(i)); }
  int rows() const { return static_cast<int>(base_.rows()); }
  int cols() const { return static_cast<int>(base_.cols()); }
  int n_params() const { return static_cast<int>(slopes_.size()); }

 private:
  Matrix base_;
  std::vector<Matrix> slopes_;
};

struct AffineEval {
  Matrix value;
  bool outside_schedule = false;
};

/// Evaluates M at rho and flags evaluation outside `set` instead of failing.
AffineEval eval_affine(const AffineMatrixFn& m, const Vector& rho, const ScheduleSet& set);

struct LPVDelayPlant {
  AffineMatrixFn A, A_tau, B1, B2, C1, C1_tau, D11, D12, C2;
  int n = 0, n_w = 0, n_u = 0, n_z = 0, n_y = 0;
  ScheduleSet schedule;
  DelayLaw delay;
  SamplingLaw sampling;
  Vector initial_history;  // constant phi(theta) on [-tau_bar, 0]

  int n_params() const { return schedule.size(); }
};

struct Grid {
  std::vector<Vector> points;
  std::vector<int> counts;

  std::size_t size() const { return points.size(); }
};

/// Uniform tensor grid including both endpoints on each axis.
Grid make_grid(const ScheduleSet& set, const std::vector<int>& counts);

/// All 2^n_s sign vectors in {+1,-1}^n_s, first axis varying slowest.
std::vector<std::vector<int>> vertex_signs(int n_s);

struct Finding {
  enum class Kind { dimension, delay_bound, sampling_bound, derivative, schedule };
  Kind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  std::size_t count(Finding::Kind kind) const;
};

/// Dimension, law-bound and derivative consistency checks. Never throws.
ValidationReport validate_plant(const LPVDelayPlant& plant, int probe_points = 101);

/// Upper bound of a law over the schedule box, taken on a dense probe grid
/// plus the box corners.
double law_maximum(const ScalarLaw& law, const ScheduleSet& set, int probe_points = 101);

}  // namespace lpvsd
