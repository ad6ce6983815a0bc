#pragma once

#include <vector>

namespace dsgd {

/// Eigenvalues of a dense symmetric matrix, sorted descending.
///
/// Cyclic Jacobi sweeps; deterministic rotation order, so results are
/// identical across runs. `a` is row-major n*n and is consumed by the solver.
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n);

}  // namespace dsgd
