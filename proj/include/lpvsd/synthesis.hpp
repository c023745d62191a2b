#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpvsd/lpv_core.hpp"
#include "lpvsd/sdp.hpp"

namespace lpvsd::synthesis {

enum class Dependence { constant, affine };

/// Parameter dependence of each decision matrix. Q, R and T are always constant.
struct VariableDependence {
  Dependence P = Dependence::affine;
  Dependence X = Dependence::constant;
  Dependence Y = Dependence::constant;
  Dependence A_hat = Dependence::affine;
  Dependence A_tau_hat = Dependence::affine;
  Dependence A_samp_hat = Dependence::affine;
  Dependence B_hat = Dependence::affine;
  Dependence C_hat = Dependence::affine;
  Dependence D_K = Dependence::affine;
};

struct SynthesisOptions {
  std::vector<int> grid_counts{5};
  std::vector<double> lambda2{0.1, 1.0, 10.0};
  std::vector<double> lambda3{0.1, 1.0, 10.0};
  std::vector<double> lambda4{0.1, 1.0, 10.0};
  double lambda5 = 0.0;
  double margin = 1e-7;  // strict inequalities become >= margin*I
  std::vector<int> verification_counts{50};
  VariableDependence dependence;
  sdp::SolverOptions solver;

  void validate() const;  // throws std::invalid_argument
};

struct Lambdas {
  double l2 = 1.0, l3 = 1.0, l4 = 1.0, l5 = 0.0;
};

/// Plant data frozen at one parameter value.
struct PlantAt {
  Matrix A, A_tau, B1, B2, C1, C1_tau, D11, D12, C2;
  Vector delay_gradient;     // d tau / d rho_i
  Vector sampling_gradient;  // d T / d rho_i
  Vector rate_bound;         // nu_i

  static PlantAt evaluate(const LPVDelayPlant& plant, const Vector& rho);
};

/// Decision variables frozen at one parameter value; T is Matrix for numeric
/// evaluation or LinExpr while building the SDP.
template <class T>
struct DecisionVars {
  T P;
  std::vector<T> dP;  // d P / d rho_i
  T X, Y;
  T Q_tau, Q_samp, R_tau, R_samp, T_tau;
  T A_hat, A_tau_hat, A_samp_hat, B_hat, C_hat, D_K;
  T gamma;  // 1x1
};

/// Delay and sampling upper bounds used in the LMI.
struct Horizons {
  double delay = 0.0;
  double sampling = 0.0;
};

/// The 7x7 block LMI matrix (must be negative definite). Total size
/// 5*(2n) + n_w + n_z; the sign vector resolves the +/- rate terms per axis.
template <class T>
std::array<std::array<T, 7>, 7> lmi_blocks(const PlantAt& plant, const DecisionVars<T>& v,
                                           const Lambdas& lam, const Horizons& h,
                                           const std::vector<int>& signs);

Matrix assemble_blocks(const PlantAt& plant, const DecisionVars<Matrix>& v, const Lambdas& lam,
                       const Horizons& h, const std::vector<int>& signs);

/// [[Y, I], [I, X]]
Matrix coupling_matrix(const Matrix& X, const Matrix& Y);

/// Where each decision matrix lives in the SDP vector.
struct MatrixVariable {
  std::string name;
  int rows = 0, cols = 0;
  bool symmetric = false;
  Dependence dependence = Dependence::constant;
  // index_sets[k][e]: SDP variable for element e of coefficient k (k=0 base,
  // k=i+1 slope along normalized axis i). Elements are upper-triangle
  // (column-major) for symmetric matrices, column-major otherwise.
  std::vector<std::vector<int>> index_sets;
};

/// Normalized coordinate theta = (rho - center) / half_width used inside the SDP.
struct ParameterScaling {
  Vector center;
  Vector half_width;

  static ParameterScaling of(const ScheduleSet& set);
  Vector normalize(const Vector& rho) const;
};

struct SdpLayout {
  ParameterScaling scaling;
  std::vector<MatrixVariable> variables;
  int gamma_index = 0;

  const MatrixVariable& find(const std::string& name) const;
  /// Affine function in physical rho coordinates from a solution vector.
  AffineMatrixFn extract(const std::string& name, const Vector& x) const;
};

struct BuiltSdp {
  sdp::Problem problem;
  SdpLayout layout;
  int main_constraints = 0;  // grid points x distinct sign vertices
  std::size_t grid_points = 0;
};

BuiltSdp build_sdp(const LPVDelayPlant& plant, const Grid& grid, const SynthesisOptions& opts,
                   const Lambdas& lam);

/// Exact maxima of the delay and sampling laws over the schedule box.
Horizons horizons_of(const LPVDelayPlant& plant);

struct TrialRecord {
  Lambdas lambda;
  double gamma = 0.0;
  sdp::Status status = sdp::Status::numerical_failure;
  int iterations = 0;
  double max_residual = 0.0;
  double seconds = 0.0;

  bool solver_feasible() const {
    return status == sdp::Status::optimal || status == sdp::Status::feasible;
  }
};

struct SynthesisCertificate {
  AffineMatrixFn P;  // 2n x 2n
  AffineMatrixFn X, Y;
  Matrix Q_tau, Q_samp, R_tau, R_samp, T_tau;
  AffineMatrixFn A_hat, A_tau_hat, A_samp_hat, B_hat, C_hat, D_K;
  Lambdas lambda;
  double gamma = 0.0;
  Horizons horizons;

  // provenance
  Grid grid;
  SynthesisOptions options;
  std::vector<TrialRecord> trials;
  int n = 0, n_w = 0, n_u = 0, n_z = 0, n_y = 0, n_params = 0;

  DecisionVars<Matrix> at(const Vector& rho) const;
};

class InfeasibleEverywhere : public std::runtime_error {
 public:
  explicit InfeasibleEverywhere(std::vector<TrialRecord> trials);
  const std::vector<TrialRecord>& trials() const { return trials_; }

 private:
  std::vector<TrialRecord> trials_;
};

/// Solves one SDP per (l2, l3, l4) in the Cartesian product of the search
/// lists and keeps the smallest gamma. Throws InfeasibleEverywhere.
SynthesisCertificate synthesize(const LPVDelayPlant& plant, const SynthesisOptions& opts);

/// Solves for a single lambda tuple; the certificate's trials hold one record.
SynthesisCertificate synthesize_at(const LPVDelayPlant& plant, const SynthesisOptions& opts,
                                   const Lambdas& lam);

struct MarginReport {
  double max_lmi_eigenvalue = 0.0;
  double min_P_eigenvalue = 0.0;
  double min_V_eigenvalue = 0.0;
  double min_constant_eigenvalue = 0.0;  // over Q, R, T
  Vector worst_point;
  std::size_t points_checked = 0;
  std::size_t lmis_checked = 0;
  bool pass = false;
};

/// Re-evaluates the LMI with the certificate's variables on every point of
/// `grid` and every sign vertex. Pass: max LMI eigenvalue <= lmi_tol and all
/// positivity eigenvalues >= -pos_tol.
MarginReport check_certificate(const SynthesisCertificate& cert, const LPVDelayPlant& plant,
                               const Grid& grid, double lmi_tol = 1e-6, double pos_tol = 1e-9);

/// Sign vertices for the axes with a nonzero rate bound; axes with nu_i = 0
/// get +1 only since their sign cannot change the LMI.
std::vector<std::vector<int>> distinct_sign_vertices(const Vector& rate_bound);

}  // namespace lpvsd::synthesis
