#pragma once

#include "abcsmc/linalg.hpp"

namespace abcsmc {

// Exact order-p Wasserstein distance between the empirical measures of the
// row sets a (n x d) and b (m x d) with uniform weights, Euclidean ground
// cost. Solved by a dense network simplex on the complete bipartite graph;
// the balanced 1-D case short-circuits to the sorted-quantile formula.
double wasserstein(const Matrix& a, const Matrix& b, int order = 1);

}  // namespace abcsmc
