#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace mfrde {

using Index = std::size_t;

// Dissection of [0, T]: strictly increasing points, first one at 0. All
// two-index objects below are indexed by pairs (i, j) of grid indices with
// i <= j (simplex storage).
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points);

    static TimeGrid uniform(double T, Index n_points);

    Index size() const { return points_.size(); }
    double operator[](Index k) const { return points_[k]; }
    double horizon() const { return points_.back(); }
    double spacing(Index k) const { return points_[k + 1] - points_[k]; }
    std::span<const double> points() const { return points_; }

private:
    std::vector<double> points_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

// Vector-valued path sampled on a grid; values stored row-major [point][dim].
class GridPath {
public:
    GridPath() = default;
    GridPath(GridPtr grid, Index dim);
    GridPath(GridPtr grid, Index dim, std::vector<double> values);

    const TimeGrid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    Index dim() const { return dim_; }
    Index points() const { return grid_->size(); }

    double* at(Index k) { return values_.data() + k * dim_; }
    const double* at(Index k) const { return values_.data() + k * dim_; }
    double& value(Index k, Index a) { return values_[k * dim_ + a]; }
    double value(Index k, Index a) const { return values_[k * dim_ + a]; }

    // increment g_t - g_s written into out[dim]
    void increment(Index s, Index t, double* out) const;

    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

private:
    GridPtr grid_;
    Index dim_ = 0;
    std::vector<double> values_;
};

// Two-index function G_{s,t} on the simplex {(i,j): i <= j} of grid-index
// pairs, each entry a d1 x d2 block. Diagonal entries are zero by convention.
class TwoIndexArray {
public:
    TwoIndexArray() = default;
    TwoIndexArray(GridPtr grid, Index d1, Index d2);

    const TimeGrid& grid() const { return *grid_; }
    Index d1() const { return d1_; }
    Index d2() const { return d2_; }
    Index block_size() const { return d1_ * d2_; }

    Index pair_index(Index i, Index j) const;

    double* at(Index i, Index j) { return values_.data() + pair_index(i, j) * block_size(); }
    const double* at(Index i, Index j) const {
        return values_.data() + pair_index(i, j) * block_size();
    }

    // max |diagonal entry|; the class keeps diagonals zero, this is a guard
    double max_diagonal_abs() const;

private:
    GridPtr grid_;
    Index d1_ = 0, d2_ = 0;
    std::vector<double> values_;
};

// Weighted particle ensemble of paths sharing one grid. Weights form a
// probability vector; empirical L^q moments use them throughout.
struct Ensemble {
    std::vector<GridPath> members;
    std::vector<double> weights;

    Index size() const { return members.size(); }

    static std::vector<double> uniform_weights(Index M);
    void validate() const;
};

// small dense helpers, row-major layout everywhere
double l2_norm(const double* v, Index n);
double l2_dist(const double* a, const double* b, Index n);

}  // namespace mfrde
