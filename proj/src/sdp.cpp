#include "lpvsd/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lpvsd/sdp_kernels.hpp"

namespace lpvsd::sdp {

void SymSparse::add(int i, int j, double v) {
  if (i > j) std::swap(i, j);
  entries.push_back({i, j, v});
}

void SymSparse::compress() {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Entry> merged;
  merged.reserve(entries.size());
  for (const auto& e : entries) {
    if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col) {
      merged.back().value += e.value;
    } else {
      merged.push_back(e);
    }
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const Entry& e) { return e.value == 0.0; }),
               merged.end());
  entries = std::move(merged);
}

Matrix SymSparse::dense(int dim) const {
  Matrix out = Matrix::Zero(dim, dim);
  accumulate(out, 1.0);
  return out;
}

void SymSparse::accumulate(Matrix& out, double scale) const {
  for (const auto& e : entries) {
    out(e.row, e.col) += scale * e.value;
    if (e.row != e.col) out(e.col, e.row) += scale * e.value;
  }
}

SymSparse SymSparse::from_dense(const Matrix& m, double drop) {
  SymSparse s;
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i <= j; ++i) {
      if (std::abs(m(i, j)) > drop) s.entries.push_back({i, j, m(i, j)});
    }
  }
  return s;
}

Matrix Constraint::evaluate(const Vector& x) const {
  Matrix out = f0.dense(dim);
  for (const auto& t : terms) t.coeff.accumulate(out, x[t.var]);
  return out;
}

const SymSparse* Constraint::coeff(int var) const {
  auto it = std::lower_bound(terms.begin(), terms.end(), var,
                             [](const Term& t, int v) { return t.var < v; });
  return (it != terms.end() && it->var == var) ? &it->coeff : nullptr;
}

void Problem::validate() const {
  if (m < 1) throw std::invalid_argument("SDP needs at least one decision variable");
  if (c.size() != m) throw std::invalid_argument("SDP cost vector length differs from m");
  if (constraints.empty()) throw std::invalid_argument("SDP has no constraints");
  auto check = [](const SymSparse& s, int dim, std::size_t k) {
    for (const auto& e : s.entries) {
      if (e.row < 0 || e.col < e.row || e.col >= dim) {
        std::ostringstream os;
        os << "constraint " << k << " has an entry (" << e.row << "," << e.col
           << ") outside its upper triangle of size " << dim;
        throw std::invalid_argument(os.str());
      }
      if (!std::isfinite(e.value)) throw std::invalid_argument("SDP data must be finite");
    }
  };
  for (std::size_t k = 0; k < constraints.size(); ++k) {
    const auto& con = constraints[k];
    if (con.dim < 1) throw std::invalid_argument("SDP constraint with empty dimension");
    check(con.f0, con.dim, k);
    int last = -1;
    for (const auto& t : con.terms) {
      if (t.var <= last || t.var >= m) {
        throw std::invalid_argument("SDP constraint terms must be sorted by variable and in range");
      }
      last = t.var;
      check(t.coeff, con.dim, k);
    }
  }
}

int Problem::total_dim() const {
  int n = 0;
  for (const auto& con : constraints) n += con.dim;
  return n;
}

bool operator==(const Problem& a, const Problem& b) {
  if (a.m != b.m || a.c.size() != b.c.size()) return false;
  for (int i = 0; i < a.c.size(); ++i) {
    if (a.c[i] != b.c[i]) return false;
  }
  return a.constraints == b.constraints && a.var_names == b.var_names;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::feasible: return "feasible";
    case Status::infeasible: return "infeasible";
    case Status::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

std::vector<double> residual(const Problem& p, const Vector& x) {
  if (x.size() != p.m) throw std::invalid_argument("residual: x has the wrong length");
  std::vector<double> out;
  out.reserve(p.constraints.size());
  for (const auto& con : p.constraints) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(con.evaluate(x), Eigen::EigenvaluesOnly);
    out.push_back(es.eigenvalues().maxCoeff());
  }
  return out;
}

namespace {

using Blocks = std::vector<Matrix>;

double frob2(const Blocks& b) {
  double s = 0.0;
  for (const auto& m : b) s += m.squaredNorm();
  return s;
}

double inner(const Blocks& a, const Blocks& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k]).sum();
  return s;
}

// Largest alpha with X + alpha*D >= 0 given a Cholesky factor of X (inf if unbounded).
double max_step(const std::vector<Eigen::LLT<Matrix>>& chol, const Blocks& d) {
  double alpha = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto& llt = chol[k];
    Matrix w = llt.matrixL().solve(d[k]);
    w = llt.matrixL().solve(w.transpose()).transpose();
    w = 0.5 * (w + w.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(w, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
  }
  return alpha;
}

struct Workspace {
  const Problem& p;
  std::vector<kernels::BlockTerms> blocks;
  Blocks c;      // C = -F0
  Vector b;      // b = -c
  int n_total = 0;

  explicit Workspace(const Problem& prob) : p(prob), blocks(kernels::collect_block_terms(prob)) {
    b = -prob.c;
    for (const auto& con : prob.constraints) {
      c.push_back(-con.f0.dense(con.dim));
      n_total += con.dim;
    }
  }

  // A(G)_i = sum_b tr(A_ib G_b)
  Vector apply(const Blocks& g) const {
    Vector out = Vector::Zero(p.m);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      for (std::size_t a = 0; a < blocks[k].vars.size(); ++a) {
        out[blocks[k].vars[a]] += kernels::trace_product(*blocks[k].coeffs[a], g[k]);
      }
    }
    return out;
  }

  // A^T(y) = sum_i y_i A_i
  Blocks adjoint(const Vector& y) const {
    Blocks out;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      Matrix m = Matrix::Zero(blocks[k].dim, blocks[k].dim);
      for (std::size_t a = 0; a < blocks[k].vars.size(); ++a) {
        blocks[k].coeffs[a]->accumulate(m, y[blocks[k].vars[a]]);
      }
      out.push_back(std::move(m));
    }
    return out;
  }
};

bool factor_all(const Blocks& x, std::vector<Eigen::LLT<Matrix>>& out) {
  out.clear();
  for (const auto& m : x) {
    out.emplace_back(m);
    if (out.back().info() != Eigen::Success) return false;
  }
  return true;
}

Blocks symmetrized(Blocks x) {
  for (auto& m : x) m = 0.5 * (m + m.transpose()).eval();
  return x;
}

}  // namespace

Solution solve(const Problem& p, const SolverOptions& opts) {
  p.validate();
  const Workspace ws(p);
  const int m = p.m;
  const auto nb = ws.c.size();

  // Infeasible starting point scaled to the data.
  Blocks z(nb), s(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    const int n = ws.blocks[k].dim;
    const double sqn = std::sqrt(static_cast<double>(n));
    double amax = ws.c[k].norm();
    double ratio = 0.0;
    for (std::size_t a = 0; a < ws.blocks[k].vars.size(); ++a) {
      const double an = ws.blocks[k].coeffs[a]->dense(n).norm();
      amax = std::max(amax, an);
      ratio = std::max(ratio, (1.0 + std::abs(ws.b[ws.blocks[k].vars[a]])) / (1.0 + an));
    }
    const double xi = std::max({10.0, sqn, sqn * ratio});
    const double eta = std::max({10.0, sqn, amax});
    z[k] = xi * Matrix::Identity(n, n);
    s[k] = eta * Matrix::Identity(n, n);
  }
  Vector y = Vector::Zero(m);

  const double norm_b = ws.b.norm();
  const double norm_c = std::sqrt(frob2(ws.c));
  Solution sol;
  sol.x = y;

  Matrix schur;
  std::vector<Eigen::LLT<Matrix>> chol_z, chol_s;
  Blocks s_inv(nb);
  double best_merit = std::numeric_limits<double>::infinity();
  Vector best_y = y;
  bool have_best = false;

  for (int it = 0; it <= opts.tol.max_iterations; ++it) {
    sol.iterations = it;
    const Blocks aty = ws.adjoint(y);
    Blocks rd(nb);
    for (std::size_t k = 0; k < nb; ++k) rd[k] = ws.c[k] - s[k] - aty[k];
    const Vector rp = ws.b - ws.apply(z);
    const double pobj = inner(ws.c, z);
    const double dobj = ws.b.dot(y);
    const double zs = inner(z, s);
    const double mu = zs / ws.n_total;
    const double pinf = rp.norm() / (1.0 + norm_b);
    const double dinf = std::sqrt(frob2(rd)) / (1.0 + norm_c);
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double comp = zs / (1.0 + std::abs(pobj) + std::abs(dobj));
    sol.primal_infeasibility = pinf;
    sol.dual_infeasibility = dinf;
    sol.relative_gap = std::max(gap, comp);

    if (opts.verbose) {
      std::cerr << "it " << it << " pobj " << pobj << " dobj " << dobj << " pinf " << pinf
                << " dinf " << dinf << " gap " << gap << " mu " << mu << "\n";
    }

    // Track the most feasible dual iterate in case the run stalls.
    if (dinf < 1e-3) {
      const double merit = dinf * 1e3 + std::max(gap, comp);
      if (merit < best_merit) {
        best_merit = merit;
        best_y = y;
        have_best = true;
      }
    }

    if (pinf < opts.tol.feas && dinf < 0.1 * opts.tol.feas && gap < opts.tol.gap &&
        comp < opts.tol.gap) {
      sol.status = Status::optimal;
      break;
    }
    // Z normalized by -tr(CZ) nearly satisfies A(Z) = 0: the LMI has no solution.
    if (pobj < 0.0) {
      const double az = (ws.b - rp).norm();
      const double znorm = std::sqrt(frob2(z));
      if (az / -pobj < 1e-8 || (znorm > 1e10 && az / -pobj < 1e-5 && dinf > 1e-6)) {
        sol.status = Status::infeasible;
        break;
      }
    }
    if (it == opts.tol.max_iterations) break;

    if (!factor_all(s, chol_s) || !factor_all(z, chol_z)) break;
    for (std::size_t k = 0; k < nb; ++k) {
      s_inv[k] = chol_s[k].solve(Matrix::Identity(s[k].rows(), s[k].cols()));
      s_inv[k] = 0.5 * (s_inv[k] + s_inv[k].transpose()).eval();
    }
    if (opts.kernel == Kernel::reference) {
      kernels::schur_reference(ws.blocks, z, s_inv, m, schur);
    } else {
      kernels::schur_parallel(ws.blocks, z, s_inv, m, schur);
    }
    Eigen::LLT<Matrix> chol_m(schur);
    if (chol_m.info() != Eigen::Success) {
      const double reg = 1e-14 * std::max(1.0, schur.diagonal().maxCoeff());
      schur.diagonal().array() += reg;
      chol_m.compute(schur);
      if (chol_m.info() != Eigen::Success) break;
    }

    // Z Rd S^-1 is shared by predictor and corrector.
    Blocks z_rd_sinv(nb);
    for (std::size_t k = 0; k < nb; ++k) z_rd_sinv[k] = z[k] * rd[k] * s_inv[k];

    auto direction = [&](const Blocks& target, Vector& dy, Blocks& ds, Blocks& dz) {
      // target = sigma*mu*S^-1 - Z - (second-order term) - Z Rd S^-1
      dy = chol_m.solve(rp - ws.apply(target));
      const Blocks atdy = ws.adjoint(dy);
      ds.resize(nb);
      dz.resize(nb);
      for (std::size_t k = 0; k < nb; ++k) {
        ds[k] = rd[k] - atdy[k];
        dz[k] = target[k] + z_rd_sinv[k] - z[k] * ds[k] * s_inv[k];
      }
      dz = symmetrized(std::move(dz));
    };

    Blocks target(nb);
    for (std::size_t k = 0; k < nb; ++k) target[k] = -z[k] - z_rd_sinv[k];
    Vector dy_p;
    Blocks ds_p, dz_p;
    direction(target, dy_p, ds_p, dz_p);
    const double ap = std::min(1.0, max_step(chol_z, dz_p));
    const double ad = std::min(1.0, max_step(chol_s, ds_p));
    double zs_aff = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
      zs_aff += (z[k] + ap * dz_p[k]).cwiseProduct(s[k] + ad * ds_p[k]).sum();
    }
    const double ratio = std::clamp(zs_aff / zs, 0.0, 1.0);
    const double sigma = std::pow(ratio, 3);

    for (std::size_t k = 0; k < nb; ++k) {
      target[k] = sigma * mu * s_inv[k] - z[k] - dz_p[k] * ds_p[k] * s_inv[k] - z_rd_sinv[k];
    }
    Vector dy;
    Blocks ds, dz;
    direction(target, dy, ds, dz);
    const double step = 0.9 + 0.09 * std::min(ap, ad);
    const double alpha_p = std::min(1.0, step * max_step(chol_z, dz));
    const double alpha_d = std::min(1.0, step * max_step(chol_s, ds));
    if (!(alpha_p > 0.0) || !(alpha_d > 0.0) || !std::isfinite(alpha_p + alpha_d)) break;
    for (std::size_t k = 0; k < nb; ++k) {
      z[k] += alpha_p * dz[k];
      s[k] += alpha_d * ds[k];
    }
    y += alpha_d * dy;
    if (alpha_p < 1e-10 && alpha_d < 1e-10) break;
  }

  if (sol.status != Status::optimal && sol.status != Status::infeasible && have_best) y = best_y;
  sol.x = y;
  sol.objective = p.c.dot(y);
  const auto res = residual(p, y);
  sol.max_residual = *std::max_element(res.begin(), res.end());
  if (sol.status == Status::optimal && sol.max_residual > opts.tol.feas) {
    sol.status = Status::numerical_failure;
  } else if (sol.status == Status::numerical_failure && sol.max_residual <= opts.tol.feas) {
    sol.status = Status::feasible;
  }
  return sol;
}

namespace {

void write_matrix(std::ostream& os, std::size_t k, int j, const SymSparse& s) {
  char buf[96];
  for (const auto& e : s.entries) {
    std::snprintf(buf, sizeof buf, "%zu %d %d %d %.17g\n", k, j, e.row, e.col, e.value);
    os << buf;
  }
}

[[noreturn]] void parse_error(int line, const std::string& what) {
  std::ostringstream os;
  os << "SDP text line " << line << ": " << what;
  throw std::runtime_error(os.str());
}

}  // namespace

void write_text(std::ostream& os, const Problem& p) {
  char buf[64];
  os << "lpvsd-sdp 1\n";
  os << "m " << p.m << " constraints " << p.constraints.size() << "\n";
  os << "dims";
  for (const auto& con : p.constraints) os << ' ' << con.dim;
  os << "\nc";
  for (int i = 0; i < p.c.size(); ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", p.c[i]);
    os << buf;
  }
  os << "\n";
  for (std::size_t j = 0; j < p.var_names.size(); ++j) {
    os << "var " << j + 1 << ' ' << p.var_names[j] << "\n";
  }
  for (std::size_t k = 0; k < p.constraints.size(); ++k) {
    if (!p.constraints[k].label.empty()) os << "label " << k << ' ' << p.constraints[k].label << "\n";
  }
  for (std::size_t k = 0; k < p.constraints.size(); ++k) {
    const auto& con = p.constraints[k];
    write_matrix(os, k, 0, con.f0);
    for (const auto& t : con.terms) write_matrix(os, k, t.var + 1, t.coeff);
  }
}

Problem read_text(std::istream& is) {
  Problem p;
  std::string line;
  int lineno = 0;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty()) return true;
    }
    return false;
  };

  if (!next() || line != "lpvsd-sdp 1") parse_error(lineno, "missing 'lpvsd-sdp 1' header");
  std::size_t n_con = 0;
  {
    if (!next()) parse_error(lineno, "missing size line");
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a >> p.m >> b >> n_con) || a != "m" || b != "constraints") {
      parse_error(lineno, "expected 'm <m> constraints <K>'");
    }
  }
  p.constraints.resize(n_con);
  {
    if (!next()) parse_error(lineno, "missing dims line");
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "dims") parse_error(lineno, "expected 'dims'");
    for (auto& con : p.constraints) {
      if (!(ls >> con.dim)) parse_error(lineno, "too few constraint dimensions");
    }
  }
  {
    if (!next()) parse_error(lineno, "missing cost line");
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "c") parse_error(lineno, "expected 'c'");
    p.c.resize(p.m);
    for (int i = 0; i < p.m; ++i) {
      std::string tok;
      if (!(ls >> tok)) parse_error(lineno, "too few cost entries");
      p.c[i] = std::strtod(tok.c_str(), nullptr);
    }
  }
  while (next()) {
    if (line.rfind("var ", 0) == 0) {
      std::istringstream ls(line.substr(4));
      std::size_t j = 0;
      ls >> j;
      std::string name;
      std::getline(ls >> std::ws, name);
      if (j < 1) parse_error(lineno, "variable index must be 1-based");
      if (p.var_names.size() < j) p.var_names.resize(j);
      p.var_names[j - 1] = name;
      continue;
    }
    if (line.rfind("label ", 0) == 0) {
      std::istringstream ls(line.substr(6));
      std::size_t k = 0;
      ls >> k;
      if (k >= n_con) parse_error(lineno, "label for unknown constraint");
      std::getline(ls >> std::ws, p.constraints[k].label);
      continue;
    }
    std::istringstream ls(line);
    std::size_t k = 0;
    int j = 0;
    Entry e;
    std::string val;
    if (!(ls >> k >> j >> e.row >> e.col >> val)) parse_error(lineno, "malformed entry");
    if (k >= n_con) parse_error(lineno, "constraint index out of range");
    e.value = std::strtod(val.c_str(), nullptr);
    auto& con = p.constraints[k];
    if (j == 0) {
      con.f0.entries.push_back(e);
    } else {
      const int var = j - 1;
      if (con.terms.empty() || con.terms.back().var != var) con.terms.push_back({var, {}});
      con.terms.back().coeff.entries.push_back(e);
    }
  }
  p.validate();
  return p;
}

}  // namespace lpvsd::sdp
