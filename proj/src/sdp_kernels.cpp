#include "lpvsd/sdp_kernels.hpp"

#ifdef LPVSD_HAVE_OPENMP
#include <omp.h>
#endif

namespace lpvsd::sdp::kernels {

std::vector<BlockTerms> collect_block_terms(const Problem& p) {
  std::vector<BlockTerms> out(p.constraints.size());
  for (std::size_t b = 0; b < p.constraints.size(); ++b) {
    const auto& con = p.constraints[b];
    out[b].dim = con.dim;
    for (const auto& t : con.terms) {
      if (t.coeff.empty()) continue;
      out[b].vars.push_back(t.var);
      out[b].coeffs.push_back(&t.coeff);
    }
  }
  return out;
}

double trace_product(const SymSparse& a, const Matrix& g) {
  double acc = 0.0;
  for (const auto& e : a.entries) {
    acc += e.row == e.col ? e.value * g(e.row, e.row)
                          : e.value * (g(e.row, e.col) + g(e.col, e.row));
  }
  return acc;
}

void schur_reference(const std::vector<BlockTerms>& blocks, const std::vector<Matrix>& z,
                     const std::vector<Matrix>& s_inv, int m, Matrix& out) {
  out.setZero(m, m);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    std::vector<Matrix> dense;
    dense.reserve(blk.coeffs.size());
    for (const auto* c : blk.coeffs) dense.push_back(c->dense(blk.dim));
    for (std::size_t a = 0; a < dense.size(); ++a) {
      const Matrix t = s_inv[b] * dense[a] * z[b];
      for (std::size_t c = 0; c < dense.size(); ++c) {
        out(blk.vars[a], blk.vars[c]) += dense[c].cwiseProduct(t.transpose()).sum();
      }
    }
  }
}

namespace {

// T = S^-1 A Z for a sparse symmetric A.
void sandwich(const SymSparse& a, const Matrix& s_inv, const Matrix& z, Matrix& t, Matrix& work) {
  const auto n = s_inv.rows();
  const auto k = static_cast<Eigen::Index>(a.entries.size());
  if (4 * k > n) {
    work.setZero(n, n);
    for (const auto& e : a.entries) {
      work.row(e.row).noalias() += e.value * z.row(e.col);
      if (e.row != e.col) work.row(e.col).noalias() += e.value * z.row(e.row);
    }
    t.noalias() = s_inv * work;
    return;
  }
  t.setZero(n, n);
  for (const auto& e : a.entries) {
    t.noalias() += e.value * s_inv.col(e.row) * z.row(e.col);
    if (e.row != e.col) t.noalias() += e.value * s_inv.col(e.col) * z.row(e.row);
  }
}

}  // namespace

void schur_parallel(const std::vector<BlockTerms>& blocks, const std::vector<Matrix>& z,
                    const std::vector<Matrix>& s_inv, int m, Matrix& out) {
  out.setZero(m, m);
  // Per variable: the (block, local slot) pairs where it appears.
  std::vector<std::vector<std::pair<int, int>>> where(static_cast<std::size_t>(m));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t a = 0; a < blocks[b].vars.size(); ++a) {
      where[static_cast<std::size_t>(blocks[b].vars[a])].emplace_back(static_cast<int>(b),
                                                                       static_cast<int>(a));
    }
  }

#ifdef LPVSD_HAVE_OPENMP
#pragma omp parallel
#endif
  {
    Matrix t, work;
#ifdef LPVSD_HAVE_OPENMP
#pragma omp for schedule(dynamic, 4)
#endif
    for (int i = 0; i < m; ++i) {
      for (const auto& [b, a] : where[static_cast<std::size_t>(i)]) {
        const auto& blk = blocks[static_cast<std::size_t>(b)];
        sandwich(*blk.coeffs[static_cast<std::size_t>(a)], s_inv[static_cast<std::size_t>(b)],
                 z[static_cast<std::size_t>(b)], t, work);
        for (std::size_t c = 0; c < blk.vars.size(); ++c) {
          const int j = blk.vars[c];
          if (j < i) continue;
          out(i, j) += trace_product(*blk.coeffs[c], t);
        }
      }
    }
  }
  out.triangularView<Eigen::StrictlyLower>() = out.transpose().triangularView<Eigen::StrictlyLower>();
}

int max_threads() {
#ifdef LPVSD_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace lpvsd::sdp::kernels
