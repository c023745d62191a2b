#include "lpvsd/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <sstream>

#include "lpvsd/linexpr.hpp"

namespace lpvsd::synthesis {

void SynthesisOptions::validate() const {
  if (lambda2.empty() || lambda3.empty() || lambda4.empty()) {
    throw std::invalid_argument("lambda search lists must be nonempty");
  }
  if (!(margin > 0.0)) throw std::invalid_argument("feasibility margin must be positive");
  for (int c : grid_counts) {
    if (c < 2) throw std::invalid_argument("synthesis grid counts must be at least 2 per axis");
  }
  for (int c : verification_counts) {
    if (c < 2) throw std::invalid_argument("verification grid counts must be at least 2 per axis");
  }
}

PlantAt PlantAt::evaluate(const LPVDelayPlant& p, const Vector& rho) {
  PlantAt out;
  out.A = p.A(rho);
  out.A_tau = p.A_tau(rho);
  out.B1 = p.B1(rho);
  out.B2 = p.B2(rho);
  out.C1 = p.C1(rho);
  out.C1_tau = p.C1_tau(rho);
  out.D11 = p.D11(rho);
  out.D12 = p.D12(rho);
  out.C2 = p.C2(rho);
  out.delay_gradient = p.delay.gradient(rho);
  out.sampling_gradient = p.sampling.gradient(rho);
  out.rate_bound = p.schedule.rate_bound;
  return out;
}

Matrix coupling_matrix(const Matrix& X, const Matrix& Y) {
  const auto n = X.rows();
  const Matrix I = Matrix::Identity(n, n);
  return block_matrix({{Y, I}, {I, X}});
}

template <class T>
std::array<std::array<T, 7>, 7> lmi_blocks(const PlantAt& pl, const DecisionVars<T>& v,
                                           const Lambdas& lam, const Horizons& h,
                                           const std::vector<int>& signs) {
  const int n = static_cast<int>(pl.A.rows());
  const int n_w = static_cast<int>(pl.B1.cols());
  const int n_z = static_cast<int>(pl.C1.rows());
  const auto s = pl.rate_bound.size();
  if (signs.size() != static_cast<std::size_t>(s)) {
    throw std::invalid_argument("sign vector length differs from the number of parameters");
  }
  if (v.dP.size() != static_cast<std::size_t>(s)) {
    throw std::invalid_argument("one P derivative per parameter is required");
  }
  auto c = [](const Matrix& m) { return constant_like<T>(m); };
  const Matrix I = Matrix::Identity(n, n);

  const T V = block_matrix(std::vector<std::vector<T>>{{v.Y, c(I)}, {c(I), v.X}});
  const T a_cal = block_matrix(
      std::vector<std::vector<T>>{{pl.A * v.Y, c(pl.A)}, {v.A_hat, v.X * pl.A}});
  const T a_tau = block_matrix(
      std::vector<std::vector<T>>{{pl.A_tau * v.Y, c(pl.A_tau)}, {v.A_tau_hat, v.X * pl.A_tau}});
  const T a_samp = block_matrix(std::vector<std::vector<T>>{
      {pl.B2 * v.C_hat, pl.B2 * v.D_K * pl.C2}, {v.A_samp_hat, v.B_hat * pl.C2}});
  const T b_cal = block_matrix(std::vector<std::vector<T>>{{c(pl.B1)}, {v.X * pl.B1}});
  const T c_cal = block_matrix(std::vector<std::vector<T>>{{pl.C1 * v.Y, c(pl.C1)}});
  const T c_tau = block_matrix(std::vector<std::vector<T>>{{pl.C1_tau * v.Y, c(pl.C1_tau)}});
  const T c_samp =
      block_matrix(std::vector<std::vector<T>>{{pl.D12 * v.C_hat, pl.D12 * v.D_K * pl.C2}});

  T rate_p = zero_like<T>(2 * n, 2 * n);
  double rate_tau = 0.0, rate_samp = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(s); ++i) {
    const double sn = signs[i] * pl.rate_bound[static_cast<Eigen::Index>(i)];
    rate_p = rate_p + sn * v.dP[i];
    rate_tau += sn * pl.delay_gradient[static_cast<Eigen::Index>(i)];
    rate_samp += sn * pl.sampling_gradient[static_cast<Eigen::Index>(i)];
  }

  const T a_cal_t = transpose_of(a_cal);
  const T a_tau_t = transpose_of(a_tau);
  const T a_samp_t = transpose_of(a_samp);
  const double tb2 = h.delay * h.delay;
  const double sb2 = h.sampling * h.sampling;

  std::array<std::array<T, 7>, 7> b;
  b[0][0] = rate_p + v.Q_tau - v.R_tau + tb2 * v.T_tau + v.Q_samp - v.R_samp + (a_cal + a_cal_t);
  b[0][1] = v.P - V + lam.l2 * a_cal_t;
  b[0][2] = v.R_tau + a_tau + lam.l3 * a_cal_t;
  b[0][3] = v.R_samp + a_samp + lam.l4 * a_cal_t;
  b[0][4] = lam.l5 * a_cal_t;
  b[0][5] = b_cal;
  b[0][6] = transpose_of(c_cal);

  b[1][1] = tb2 * v.R_tau + sb2 * v.R_samp - 2.0 * lam.l2 * V;
  b[1][2] = lam.l2 * a_tau - lam.l3 * V;
  b[1][3] = lam.l2 * a_samp - lam.l4 * V;
  b[1][4] = -lam.l5 * V;
  b[1][5] = lam.l2 * b_cal;
  b[1][6] = zero_like<T>(2 * n, n_z);

  b[2][2] = -(1.0 - rate_tau) * v.Q_tau - v.R_tau + lam.l3 * (a_tau + a_tau_t);
  b[2][3] = lam.l3 * a_samp + lam.l4 * a_tau_t;
  b[2][4] = lam.l5 * a_tau_t;
  b[2][5] = lam.l3 * b_cal;
  b[2][6] = transpose_of(c_tau);

  b[3][3] = -(1.0 - rate_samp) * v.Q_samp - v.R_samp + lam.l4 * (a_samp + a_samp_t);
  b[3][4] = lam.l5 * a_samp_t;
  b[3][5] = lam.l4 * b_cal;
  b[3][6] = transpose_of(c_samp);

  b[4][4] = -v.T_tau;
  b[4][5] = lam.l5 * b_cal;
  b[4][6] = zero_like<T>(2 * n, n_z);

  b[5][5] = -scaled_identity(v.gamma, n_w);
  b[5][6] = c(pl.D11.transpose());

  b[6][6] = -scaled_identity(v.gamma, n_z);

  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < i; ++j) b[i][j] = transpose_of(b[j][i]);
  }
  return b;
}

template std::array<std::array<Matrix, 7>, 7> lmi_blocks<Matrix>(const PlantAt&,
                                                                 const DecisionVars<Matrix>&,
                                                                 const Lambdas&, const Horizons&,
                                                                 const std::vector<int>&);
template std::array<std::array<LinExpr, 7>, 7> lmi_blocks<LinExpr>(const PlantAt&,
                                                                   const DecisionVars<LinExpr>&,
                                                                   const Lambdas&, const Horizons&,
                                                                   const std::vector<int>&);

Matrix assemble_blocks(const PlantAt& plant, const DecisionVars<Matrix>& v, const Lambdas& lam,
                       const Horizons& h, const std::vector<int>& signs) {
  const auto b = lmi_blocks<Matrix>(plant, v, lam, h, signs);
  std::vector<std::vector<Matrix>> grid(7);
  for (int i = 0; i < 7; ++i) grid[static_cast<std::size_t>(i)].assign(b[i].begin(), b[i].end());
  return block_matrix(grid);
}

std::vector<std::vector<int>> distinct_sign_vertices(const Vector& rate_bound) {
  std::vector<int> active;
  for (int i = 0; i < rate_bound.size(); ++i) {
    if (rate_bound[i] != 0.0) active.push_back(i);
  }
  const std::vector<int> base(static_cast<std::size_t>(rate_bound.size()), 1);
  if (active.empty()) return {base};
  std::vector<std::vector<int>> out;
  for (const auto& signs : vertex_signs(static_cast<int>(active.size()))) {
    auto v = base;
    for (std::size_t k = 0; k < active.size(); ++k) v[static_cast<std::size_t>(active[k])] = signs[k];
    out.push_back(std::move(v));
  }
  return out;
}

ParameterScaling ParameterScaling::of(const ScheduleSet& set) {
  ParameterScaling s;
  s.center = 0.5 * (set.lower + set.upper);
  s.half_width = 0.5 * (set.upper - set.lower);
  return s;
}

Vector ParameterScaling::normalize(const Vector& rho) const {
  return (rho - center).cwiseQuotient(half_width);
}

const MatrixVariable& SdpLayout::find(const std::string& name) const {
  for (const auto& v : variables) {
    if (v.name == name) return v;
  }
  throw std::out_of_range("no decision matrix named " + name);
}

namespace {

// Basis matrix for element e of a (possibly symmetric) variable.
Matrix element_basis(const MatrixVariable& mv, int e) {
  Matrix m = Matrix::Zero(mv.rows, mv.cols);
  if (mv.symmetric) {
    int col = 0, rem = e;
    while (rem > col) {
      rem -= col + 1;
      ++col;
    }
    const int row = rem;
    m(row, col) = 1.0;
    m(col, row) = 1.0;
  } else {
    m(e % mv.rows, e / mv.rows) = 1.0;
  }
  return m;
}

int element_count(int rows, int cols, bool symmetric) {
  return symmetric ? rows * (rows + 1) / 2 : rows * cols;
}

Matrix coefficient_value(const MatrixVariable& mv, int k, const Vector& x) {
  Matrix m = Matrix::Zero(mv.rows, mv.cols);
  const auto& idx = mv.index_sets[static_cast<std::size_t>(k)];
  for (std::size_t e = 0; e < idx.size(); ++e) {
    m += x[idx[e]] * element_basis(mv, static_cast<int>(e));
  }
  return m;
}

// k-th coefficient as a symbolic expression scaled by w.
LinExpr coefficient_expr(const MatrixVariable& mv, int k, double w) {
  LinExpr out(mv.rows, mv.cols);
  const auto& idx = mv.index_sets[static_cast<std::size_t>(k)];
  for (std::size_t e = 0; e < idx.size(); ++e) {
    out += LinExpr::variable(idx[e], w * element_basis(mv, static_cast<int>(e)));
  }
  return out;
}

LinExpr value_expr(const MatrixVariable& mv, const Vector& theta) {
  LinExpr out = coefficient_expr(mv, 0, 1.0);
  if (mv.dependence == Dependence::affine) {
    for (int i = 0; i < theta.size(); ++i) out += coefficient_expr(mv, i + 1, theta[i]);
  }
  return out;
}

// d/d rho_i in physical units.
LinExpr derivative_expr(const MatrixVariable& mv, const ParameterScaling& sc, int i) {
  if (mv.dependence == Dependence::constant) return LinExpr(mv.rows, mv.cols);
  return coefficient_expr(mv, i + 1, 1.0 / sc.half_width[i]);
}

class LayoutBuilder {
 public:
  explicit LayoutBuilder(int n_params) : n_params_(n_params) {}

  void add(const std::string& name, int rows, int cols, bool symmetric, Dependence dep) {
    MatrixVariable mv;
    mv.name = name;
    mv.rows = rows;
    mv.cols = cols;
    mv.symmetric = symmetric;
    mv.dependence = dep;
    const int coeffs = dep == Dependence::affine ? 1 + n_params_ : 1;
    const int count = element_count(rows, cols, symmetric);
    for (int k = 0; k < coeffs; ++k) {
      std::vector<int> idx(static_cast<std::size_t>(count));
      for (int e = 0; e < count; ++e) {
        idx[static_cast<std::size_t>(e)] = next_++;
        std::ostringstream os;
        os << name << "[" << k << "]." << e;
        names_.push_back(os.str());
      }
      mv.index_sets.push_back(std::move(idx));
    }
    layout_.variables.push_back(std::move(mv));
  }

  void add_gamma() {
    layout_.gamma_index = next_++;
    names_.push_back("gamma");
  }

  SdpLayout take(const ParameterScaling& sc) {
    layout_.scaling = sc;
    return std::move(layout_);
  }
  int count() const { return next_; }
  std::vector<std::string> names() const { return names_; }

 private:
  int n_params_;
  int next_ = 0;
  SdpLayout layout_;
  std::vector<std::string> names_;
};

// Upper triangle of a symmetric block grid, shifted by margin*I, as an SDP constraint.
sdp::Constraint to_constraint(const std::vector<std::vector<const LinExpr*>>& grid, double margin,
                              std::string label) {
  std::vector<int> offsets{0};
  for (const auto& row : grid) offsets.push_back(offsets.back() + row.front()->rows());
  sdp::Constraint con;
  con.dim = offsets.back();
  con.label = std::move(label);
  std::map<int, sdp::SymSparse> per_var;

  auto place = [&](const Matrix& m, int r0, int c0, bool diagonal, sdp::SymSparse& out) {
    for (int b = 0; b < m.cols(); ++b) {
      for (int a = 0; a < (diagonal ? b + 1 : m.rows()); ++a) {
        if (m(a, b) != 0.0) out.entries.push_back({r0 + a, c0 + b, m(a, b)});
      }
    }
  };
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i; j < grid.size(); ++j) {
      const LinExpr& e = *grid[i][j];
      const bool diag = i == j;
      place(e.constant(), offsets[i], offsets[j], diag, con.f0);
      for (const auto& [var, coeff] : e.terms()) {
        place(coeff, offsets[i], offsets[j], diag, per_var[var]);
      }
    }
  }
  for (int d = 0; d < con.dim; ++d) con.f0.entries.push_back({d, d, margin});
  con.f0.compress();
  for (auto& [var, s] : per_var) {
    s.compress();
    if (!s.empty()) con.terms.push_back({var, std::move(s)});
  }
  return con;
}

sdp::Constraint negated_psd(const LinExpr& m, double margin, std::string label) {
  const LinExpr neg = -m;
  return to_constraint({{&neg}}, margin, std::move(label));
}

}  // namespace

AffineMatrixFn SdpLayout::extract(const std::string& name, const Vector& x) const {
  const auto& mv = find(name);
  const int s = static_cast<int>(scaling.center.size());
  Matrix base = coefficient_value(mv, 0, x);
  std::vector<Matrix> slopes(static_cast<std::size_t>(s), Matrix::Zero(mv.rows, mv.cols));
  if (mv.dependence == Dependence::affine) {
    for (int i = 0; i < s; ++i) {
      const Matrix raw = coefficient_value(mv, i + 1, x);
      slopes[static_cast<std::size_t>(i)] = raw / scaling.half_width[i];
      base -= (scaling.center[i] / scaling.half_width[i]) * raw;
    }
  }
  return AffineMatrixFn(base, slopes);
}

Horizons horizons_of(const LPVDelayPlant& plant) {
  return {plant.delay.upper_bound, plant.sampling.upper_bound};
}

BuiltSdp build_sdp(const LPVDelayPlant& plant, const Grid& grid, const SynthesisOptions& opts,
                   const Lambdas& lam) {
  if (grid.points.empty()) throw std::invalid_argument("synthesis grid is empty");
  opts.validate();
  const int n = plant.n, s = plant.n_params();
  const auto& dep = opts.dependence;
  const ParameterScaling sc = ParameterScaling::of(plant.schedule);

  LayoutBuilder lb(s);
  lb.add("P", 2 * n, 2 * n, true, dep.P);
  lb.add("X", n, n, true, dep.X);
  lb.add("Y", n, n, true, dep.Y);
  lb.add("Q_tau", 2 * n, 2 * n, true, Dependence::constant);
  lb.add("Q_samp", 2 * n, 2 * n, true, Dependence::constant);
  lb.add("R_tau", 2 * n, 2 * n, true, Dependence::constant);
  lb.add("R_samp", 2 * n, 2 * n, true, Dependence::constant);
  lb.add("T_tau", 2 * n, 2 * n, true, Dependence::constant);
  lb.add("A_hat", n, n, false, dep.A_hat);
  lb.add("A_tau_hat", n, n, false, dep.A_tau_hat);
  lb.add("A_samp_hat", n, n, false, dep.A_samp_hat);
  lb.add("B_hat", n, plant.n_y, false, dep.B_hat);
  lb.add("C_hat", plant.n_u, n, false, dep.C_hat);
  lb.add("D_K", plant.n_u, plant.n_y, false, dep.D_K);
  lb.add_gamma();

  BuiltSdp out;
  out.problem.m = lb.count();
  out.problem.var_names = lb.names();
  out.layout = lb.take(sc);
  out.grid_points = grid.size();
  const auto& L = out.layout;
  out.problem.c = Vector::Zero(out.problem.m);
  out.problem.c[L.gamma_index] = 1.0;

  const Horizons h = horizons_of(plant);
  const auto vertices = distinct_sign_vertices(plant.schedule.rate_bound);
  const Vector zero_theta = Vector::Zero(s);

  auto vars_at = [&](const Vector& theta) {
    DecisionVars<LinExpr> v;
    v.P = value_expr(L.find("P"), theta);
    for (int i = 0; i < s; ++i) v.dP.push_back(derivative_expr(L.find("P"), sc, i));
    v.X = value_expr(L.find("X"), theta);
    v.Y = value_expr(L.find("Y"), theta);
    v.Q_tau = value_expr(L.find("Q_tau"), theta);
    v.Q_samp = value_expr(L.find("Q_samp"), theta);
    v.R_tau = value_expr(L.find("R_tau"), theta);
    v.R_samp = value_expr(L.find("R_samp"), theta);
    v.T_tau = value_expr(L.find("T_tau"), theta);
    v.A_hat = value_expr(L.find("A_hat"), theta);
    v.A_tau_hat = value_expr(L.find("A_tau_hat"), theta);
    v.A_samp_hat = value_expr(L.find("A_samp_hat"), theta);
    v.B_hat = value_expr(L.find("B_hat"), theta);
    v.C_hat = value_expr(L.find("C_hat"), theta);
    v.D_K = value_expr(L.find("D_K"), theta);
    v.gamma = LinExpr::variable(L.gamma_index, Matrix::Identity(1, 1));
    return v;
  };

  const bool xy_vary = dep.X == Dependence::affine || dep.Y == Dependence::affine;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Vector& rho = grid.points[g];
    const Vector theta = sc.normalize(rho);
    const PlantAt pl = PlantAt::evaluate(plant, rho);
    const auto v = vars_at(theta);
    for (std::size_t k = 0; k < vertices.size(); ++k) {
      const auto blocks = lmi_blocks<LinExpr>(pl, v, lam, h, vertices[k]);
      std::vector<std::vector<const LinExpr*>> ptrs(7, std::vector<const LinExpr*>(7));
      for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) ptrs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = &blocks[i][j];
      }
      std::ostringstream label;
      label << "lmi@" << rho.transpose() << "#" << k;
      out.problem.constraints.push_back(to_constraint(ptrs, opts.margin, label.str()));
      ++out.main_constraints;
    }
    std::ostringstream lp;
    lp << "P>0@" << rho.transpose();
    out.problem.constraints.push_back(negated_psd(v.P, opts.margin, lp.str()));
    if (xy_vary || g == 0) {
      const LinExpr I(Matrix(Matrix::Identity(n, n)));
      const LinExpr V = LinExpr::blocks({{v.Y, I}, {I, v.X}});
      std::ostringstream lv;
      lv << "V>0@" << rho.transpose();
      out.problem.constraints.push_back(negated_psd(V, opts.margin, lv.str()));
    }
  }
  const auto v0 = vars_at(zero_theta);
  const std::pair<const char*, const LinExpr*> constants[] = {
      {"Q_tau", &v0.Q_tau}, {"Q_samp", &v0.Q_samp}, {"R_tau", &v0.R_tau},
      {"R_samp", &v0.R_samp}, {"T_tau", &v0.T_tau}};
  for (const auto& [name, e] : constants) {
    out.problem.constraints.push_back(negated_psd(*e, opts.margin, std::string(name) + ">0"));
  }
  return out;
}

DecisionVars<Matrix> SynthesisCertificate::at(const Vector& rho) const {
  DecisionVars<Matrix> v;
  v.P = P(rho);
  for (int i = 0; i < P.n_params(); ++i) v.dP.push_back(P.slope(i));
  v.X = X(rho);
  v.Y = Y(rho);
  v.Q_tau = Q_tau;
  v.Q_samp = Q_samp;
  v.R_tau = R_tau;
  v.R_samp = R_samp;
  v.T_tau = T_tau;
  v.A_hat = A_hat(rho);
  v.A_tau_hat = A_tau_hat(rho);
  v.A_samp_hat = A_samp_hat(rho);
  v.B_hat = B_hat(rho);
  v.C_hat = C_hat(rho);
  v.D_K = D_K(rho);
  v.gamma = Matrix::Constant(1, 1, gamma);
  return v;
}

InfeasibleEverywhere::InfeasibleEverywhere(std::vector<TrialRecord> trials)
    : std::runtime_error("infeasible-everywhere: no lambda combination gave a feasible SDP"),
      trials_(std::move(trials)) {}

namespace {

Grid synthesis_grid(const LPVDelayPlant& plant, const std::vector<int>& counts) {
  std::vector<int> c = counts;
  if (c.size() == 1 && plant.n_params() > 1) c.assign(static_cast<std::size_t>(plant.n_params()), counts[0]);
  return make_grid(plant.schedule, c);
}

struct TrialOutcome {
  TrialRecord record;
  Vector x;
};

TrialOutcome run_trial(const LPVDelayPlant& plant, const Grid& grid, const SynthesisOptions& opts,
                       const Lambdas& lam, BuiltSdp* keep) {
  const auto t0 = std::chrono::steady_clock::now();
  BuiltSdp built = build_sdp(plant, grid, opts, lam);
  const auto sol = sdp::solve(built.problem, opts.solver);
  TrialOutcome out;
  out.record.lambda = lam;
  out.record.status = sol.status;
  out.record.iterations = sol.iterations;
  out.record.max_residual = sol.max_residual;
  out.record.gamma = sol.x[built.layout.gamma_index];
  out.record.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.x = sol.x;
  if (keep) *keep = std::move(built);
  return out;
}

SynthesisCertificate make_certificate(const LPVDelayPlant& plant, const Grid& grid,
                                      const SynthesisOptions& opts, const SdpLayout& L,
                                      const Vector& x, const Lambdas& lam) {
  SynthesisCertificate cert;
  cert.P = L.extract("P", x);
  cert.X = L.extract("X", x);
  cert.Y = L.extract("Y", x);
  cert.Q_tau = L.extract("Q_tau", x).base();
  cert.Q_samp = L.extract("Q_samp", x).base();
  cert.R_tau = L.extract("R_tau", x).base();
  cert.R_samp = L.extract("R_samp", x).base();
  cert.T_tau = L.extract("T_tau", x).base();
  cert.A_hat = L.extract("A_hat", x);
  cert.A_tau_hat = L.extract("A_tau_hat", x);
  cert.A_samp_hat = L.extract("A_samp_hat", x);
  cert.B_hat = L.extract("B_hat", x);
  cert.C_hat = L.extract("C_hat", x);
  cert.D_K = L.extract("D_K", x);
  cert.gamma = x[L.gamma_index];
  cert.lambda = lam;
  cert.horizons = horizons_of(plant);
  cert.grid = grid;
  cert.options = opts;
  cert.n = plant.n;
  cert.n_w = plant.n_w;
  cert.n_u = plant.n_u;
  cert.n_z = plant.n_z;
  cert.n_y = plant.n_y;
  cert.n_params = plant.n_params();
  return cert;
}

}  // namespace

SynthesisCertificate synthesize_at(const LPVDelayPlant& plant, const SynthesisOptions& opts,
                                   const Lambdas& lam) {
  opts.validate();
  const Grid grid = synthesis_grid(plant, opts.grid_counts);
  BuiltSdp built;
  auto outcome = run_trial(plant, grid, opts, lam, &built);
  if (!outcome.record.solver_feasible()) throw InfeasibleEverywhere({outcome.record});
  auto cert = make_certificate(plant, grid, opts, built.layout, outcome.x, lam);
  cert.trials = {outcome.record};
  return cert;
}

SynthesisCertificate synthesize(const LPVDelayPlant& plant, const SynthesisOptions& opts) {
  opts.validate();
  const Grid grid = synthesis_grid(plant, opts.grid_counts);
  std::vector<Lambdas> combos;
  for (double l2 : opts.lambda2) {
    for (double l3 : opts.lambda3) {
      for (double l4 : opts.lambda4) combos.push_back({l2, l3, l4, opts.lambda5});
    }
  }
  std::vector<TrialOutcome> outcomes(combos.size());
  const int total = static_cast<int>(combos.size());
#ifdef LPVSD_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int k = 0; k < total; ++k) {
    outcomes[static_cast<std::size_t>(k)] =
        run_trial(plant, grid, opts, combos[static_cast<std::size_t>(k)], nullptr);
  }

  std::vector<TrialRecord> trials;
  int best = -1;
  for (int k = 0; k < total; ++k) {
    const auto& rec = outcomes[static_cast<std::size_t>(k)].record;
    trials.push_back(rec);
    if (rec.solver_feasible() &&
        (best < 0 || rec.gamma < outcomes[static_cast<std::size_t>(best)].record.gamma)) {
      best = k;
    }
  }
  if (best < 0) throw InfeasibleEverywhere(std::move(trials));

  // Rebuilding is cheap and gives the layout without keeping 27 problems alive.
  const auto& win = outcomes[static_cast<std::size_t>(best)];
  const BuiltSdp layout_only = build_sdp(plant, grid, opts, win.record.lambda);
  auto cert = make_certificate(plant, grid, opts, layout_only.layout, win.x, win.record.lambda);
  cert.trials = std::move(trials);
  return cert;
}

MarginReport check_certificate(const SynthesisCertificate& cert, const LPVDelayPlant& plant,
                               const Grid& grid, double lmi_tol, double pos_tol) {
  MarginReport r;
  r.max_lmi_eigenvalue = -std::numeric_limits<double>::infinity();
  r.min_P_eigenvalue = std::numeric_limits<double>::infinity();
  r.min_V_eigenvalue = std::numeric_limits<double>::infinity();
  const Horizons h = cert.horizons;
  const auto vertices = distinct_sign_vertices(plant.schedule.rate_bound);
  auto min_eig = [](const Matrix& m) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  for (const auto& rho : grid.points) {
    const PlantAt pl = PlantAt::evaluate(plant, rho);
    const auto v = cert.at(rho);
    for (const auto& signs : vertices) {
      const Matrix M = assemble_blocks(pl, v, cert.lambda, h, signs);
      const double e =
          Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
      if (e > r.max_lmi_eigenvalue) {
        r.max_lmi_eigenvalue = e;
        r.worst_point = rho;
      }
      ++r.lmis_checked;
    }
    r.min_P_eigenvalue = std::min(r.min_P_eigenvalue, min_eig(v.P));
    r.min_V_eigenvalue = std::min(r.min_V_eigenvalue, min_eig(coupling_matrix(v.X, v.Y)));
    ++r.points_checked;
  }
  r.min_constant_eigenvalue = std::min({min_eig(cert.Q_tau), min_eig(cert.Q_samp),
                                        min_eig(cert.R_tau), min_eig(cert.R_samp),
                                        min_eig(cert.T_tau)});
  r.pass = r.max_lmi_eigenvalue <= lmi_tol && r.min_P_eigenvalue >= -pos_tol &&
           r.min_V_eigenvalue >= -pos_tol && r.min_constant_eigenvalue >= -pos_tol;
  return r;
}

}  // namespace lpvsd::synthesis
