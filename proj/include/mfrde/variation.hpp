#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "mfrde/grid.hpp"

namespace mfrde {

// |g| of a two-index increment over grid indices (a, b); callers plug in
// whatever norm their object carries (vector l2, matrix Frobenius, empirical
// L^q moment, ...).
using IncrementNorm = std::function<double(Index, Index)>;

// Exact p'-variation on a grid. The supremum over dissections is a maximum
// over subsets of grid points, computed by dynamic programming:
//   V[j] = max_{a <= i < j} ( V[i] + |g(i,j)|^e ),  V[a] = 0,
// so V[b] is the maximal power sum over all dissections of [a, b]. One sweep
// from anchor a yields every right endpoint at once; rows are memoized.
class VariationTable {
public:
    VariationTable(IncrementNorm norm, double exponent, Index n_points);

    // maximal sum of |g|^e over dissections of [a, b] (the power sum, no root)
    double power_sum(Index a, Index b) const;

    // power_sum^(1/e)
    double variation(Index a, Index b) const;

    double exponent() const { return exponent_; }

private:
    const std::vector<double>& row(Index a) const;

    IncrementNorm norm_;
    double exponent_;
    Index n_;
    mutable std::unordered_map<Index, std::vector<double>> rows_;
};

// p-variation of a path (increments g_t - g_s are formed first).
double p_variation(const GridPath& g, Index a, Index b, double p);

// p-variation of a two-index array.
double p_variation(const TwoIndexArray& g, Index a, Index b, double p);

// p-variation in L^q across an ensemble: each increment is replaced by its
// weighted empirical L^q norm before the dissection supremum.
double lq_p_variation(const Ensemble& e, Index a, Index b, double p, double q);

// Brute-force oracle: enumerates all 2^(n-2) dissections of [a, b]. Test-grade
// reference for the DP above; n kept small by the caller.
double p_variation_brute_force(const IncrementNorm& norm, Index a, Index b, double p);

// empirical L^q norm of a weighted sample of scalars |x_i|
double empirical_lq(const std::vector<double>& abs_values, const std::vector<double>& weights,
                    double q);

// Greedy stopping times of a nondecreasing two-index function varpi:
//   tau_0 = s,  tau_{n+1} = first grid index u >= tau_n with varpi(tau_n,u) >= alpha.
// Returns the indices tau_1, tau_2, ... that exist within the grid (the +inf
// sentinel is dropped); ties resolve to the smallest grid index.
std::vector<Index> accumulation_times(const IncrementNorm& varpi, Index n_points, Index s,
                                      double alpha);

// Local accumulation N([s,t], alpha): number of tau_n (n >= 1) landing in
// [s, t]; equivalently the largest number of disjoint subintervals of [s,t]
// on which varpi >= alpha.
Index local_accumulation(const IncrementNorm& varpi, Index n_points, Index s, Index t,
                         double alpha);

}  // namespace mfrde
