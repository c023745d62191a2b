#pragma once

#include <vector>

#include "lpvsd/sdp.hpp"

// Schur-complement kernels of the interior-point solver. The reference
// kernel is a dense serial transcription of M_ij = sum_b tr(A_i Z A_j S^-1);
// the parallel kernel exploits the sparsity of the A_i and distributes rows
// of M over OpenMP threads. Both must agree to rounding.
namespace lpvsd::sdp::kernels {

/// Coefficient matrices that touch one diagonal block.
struct BlockTerms {
  int dim = 0;
  std::vector<int> vars;
  std::vector<const SymSparse*> coeffs;
};

std::vector<BlockTerms> collect_block_terms(const Problem& p);

/// tr(A G) for symmetric sparse A and a general dense G.
double trace_product(const SymSparse& a, const Matrix& g);

void schur_reference(const std::vector<BlockTerms>& blocks, const std::vector<Matrix>& z,
                     const std::vector<Matrix>& s_inv, int m, Matrix& out);

void schur_parallel(const std::vector<BlockTerms>& blocks, const std::vector<Matrix>& z,
                    const std::vector<Matrix>& s_inv, int m, Matrix& out);

/// Number of OpenMP threads the parallel kernel would use (1 without OpenMP).
int max_threads();

}  // namespace lpvsd::sdp::kernels
