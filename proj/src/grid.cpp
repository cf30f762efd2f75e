#include "mfrde/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mfrde {

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("TimeGrid: need at least 2 points");
    if (points_.front() != 0.0) throw std::invalid_argument("TimeGrid: first point must be 0");
    for (Index k = 0; k + 1 < points_.size(); ++k) {
        if (!(points_[k] < points_[k + 1]))
            throw std::invalid_argument("TimeGrid: points must be strictly increasing at index " +
                                        std::to_string(k));
    }
}

TimeGrid TimeGrid::uniform(double T, Index n_points) {
    if (n_points < 2) throw std::invalid_argument("TimeGrid: need at least 2 points");
    if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
    std::vector<double> pts(n_points);
    for (Index k = 0; k < n_points; ++k)
        pts[k] = T * static_cast<double>(k) / static_cast<double>(n_points - 1);
    pts.front() = 0.0;
    pts.back() = T;
    return TimeGrid(std::move(pts));
}

GridPath::GridPath(GridPtr grid, Index dim)
    : grid_(std::move(grid)), dim_(dim), values_(grid_->size() * dim, 0.0) {}

GridPath::GridPath(GridPtr grid, Index dim, std::vector<double> values)
    : grid_(std::move(grid)), dim_(dim), values_(std::move(values)) {
    if (values_.size() != grid_->size() * dim_)
        throw std::invalid_argument("GridPath: values length does not match grid");
}

void GridPath::increment(Index s, Index t, double* out) const {
    const double* a = at(s);
    const double* b = at(t);
    for (Index i = 0; i < dim_; ++i) out[i] = b[i] - a[i];
}

TwoIndexArray::TwoIndexArray(GridPtr grid, Index d1, Index d2)
    : grid_(std::move(grid)), d1_(d1), d2_(d2) {
    const Index n = grid_->size();
    values_.assign(n * (n + 1) / 2 * d1 * d2, 0.0);
}

Index TwoIndexArray::pair_index(Index i, Index j) const {
    const Index n = grid_->size();
    if (i > j || j >= n) throw std::out_of_range("TwoIndexArray: bad pair");
    return i * n - i * (i - 1) / 2 + (j - i);
}

double TwoIndexArray::max_diagonal_abs() const {
    double m = 0.0;
    for (Index i = 0; i < grid_->size(); ++i) {
        const double* b = at(i, i);
        for (Index e = 0; e < block_size(); ++e) m = std::max(m, std::fabs(b[e]));
    }
    return m;
}

std::vector<double> Ensemble::uniform_weights(Index M) {
    return std::vector<double>(M, 1.0 / static_cast<double>(M));
}

void Ensemble::validate() const {
    if (members.empty()) throw std::invalid_argument("Ensemble: empty");
    if (weights.size() != members.size())
        throw std::invalid_argument("Ensemble: weights size mismatch");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("Ensemble: negative weight");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("Ensemble: weights must sum to 1 (got " + std::to_string(sum) +
                                    ")");
    const TimeGrid* g = &members.front().grid();
    for (const auto& p : members)
        if (&p.grid() != g) throw std::invalid_argument("Ensemble: members on different grids");
}

double l2_norm(const double* v, Index n) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

double l2_dist(const double* a, const double* b, Index n) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace mfrde
