#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lpvsd/lpv_core.hpp"

namespace lpvsd::sdp {

/// One stored upper-triangle entry (row <= col) of a symmetric matrix.
struct Entry {
  int row = 0;
  int col = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Sparse symmetric matrix kept as its upper triangle.
struct SymSparse {
  std::vector<Entry> entries;

  /// Adds v at (i, j); (j, i) is implied. Duplicate positions accumulate.
  void add(int i, int j, double v);
  /// Sorts by (row, col), merges duplicates and drops exact zeros.
  void compress();
  bool empty() const { return entries.empty(); }
  Matrix dense(int dim) const;
  /// Adds scale * this to a dense symmetric matrix.
  void accumulate(Matrix& out, double scale) const;
  static SymSparse from_dense(const Matrix& m, double drop = 0.0);

  friend bool operator==(const SymSparse&, const SymSparse&) = default;
};

struct Term {
  int var = 0;
  SymSparse coeff;

  friend bool operator==(const Term&, const Term&) = default;
};

/// F0 + sum_j x_j F_j <= 0 (negative semidefinite).
struct Constraint {
  int dim = 0;
  SymSparse f0;
  std::vector<Term> terms;  // sorted by var, one entry per variable at most
  std::string label;

  Matrix evaluate(const Vector& x) const;
  /// F_j for a variable, or nullptr when the variable does not enter.
  const SymSparse* coeff(int var) const;

  friend bool operator==(const Constraint&, const Constraint&) = default;
};

/// minimize c'x subject to every constraint.
struct Problem {
  int m = 0;
  Vector c;
  std::vector<Constraint> constraints;
  std::vector<std::string> var_names;

  void validate() const;  // throws std::invalid_argument
  int total_dim() const;

  friend bool operator==(const Problem& a, const Problem& b);
};

enum class Status { optimal, feasible, infeasible, numerical_failure };
std::string to_string(Status s);

struct Tolerances {
  double feas = 1e-7;
  double gap = 1e-6;
  int max_iterations = 120;
};

struct Solution {
  Vector x;
  double objective = 0.0;
  Status status = Status::numerical_failure;
  int iterations = 0;
  double max_residual = 0.0;  // max over constraints of lambda_max(F(x))
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double relative_gap = 0.0;
};

/// Largest eigenvalue of F0 + sum_j x_j F_j for each constraint.
std::vector<double> residual(const Problem& p, const Vector& x);

enum class Kernel { reference, parallel };

struct SolverOptions {
  Tolerances tol;
  Kernel kernel = Kernel::parallel;
  bool verbose = false;
};

/// Infeasible-start primal-dual interior-point method (HKM direction with a
/// Mehrotra corrector) on the block-diagonal standard form.
Solution solve(const Problem& p, const SolverOptions& opts = {});

/// Plain-text sparse exchange format.
///   lpvsd-sdp 1
///   m <m> constraints <K>
///   dims <d_1> ... <d_K>
///   c <c_1> ... <c_m>
///   <constraint> <j> <row> <col> <value>     (j = 0 is F0, 1-based var index otherwise)
void write_text(std::ostream& os, const Problem& p);
Problem read_text(std::istream& is);

}  // namespace lpvsd::sdp
