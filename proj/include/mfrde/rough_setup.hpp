#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfrde/grid.hpp"
#include "mfrde/rng.hpp"

namespace mfrde {

enum class DriverKind { Brownian, Fbm, Deterministic };

// Convention for the diagonal second level. Piecewise-linear lifts are
// geometric (Stratonovich-consistent); the Ito variant subtracts the bracket
// 1/2 (t-s) Id on the diagonal, which keeps Chen's relations intact since the
// correction is additive in interval length.
enum class SecondLevelConvention { StratonovichLinear, ItoCorrection };

enum class CrossMode { MaterializeSteps, OnDemand };

struct DriverSpec {
    DriverKind kind = DriverKind::Brownian;
    Index dimension = 1;
    double hurst = 0.5;  // fbm only; must be > 1/3
    std::uint64_t seed = 0;
    SecondLevelConvention convention = SecondLevelConvention::StratonovichLinear;
    // Append a deterministic time coordinate as the last driver component, so
    // a drift coefficient can ride in the corresponding column of F. The Ito
    // bracket correction never touches this coordinate.
    bool time_augmented = false;
    // Deterministic drivers replicate this table across the ensemble.
    std::optional<GridPath> deterministic_table;

    // total driver dimension including the time coordinate
    Index total_dimension() const { return dimension + (time_augmented ? 1 : 0); }

    void validate() const;
};

// Exact fBm covariance R(s,t) = (s^2H + t^2H - |t-s|^2H)/2 on the grid points
// t_1..t_{n-1} (the origin is pinned at zero). Row-major (n-1)^2.
std::vector<double> fbm_covariance_matrix(double hurst, const TimeGrid& grid);

// Exact finite-dimensional sampling of the driver on the grid, one stream per
// particle so the result is independent of any parallel schedule.
Ensemble sample_gaussian_driver(const DriverSpec& spec, GridPtr grid, Index M);

// Iterated integral of the piecewise-linear interpolants over [s,t]:
//   sum over cells [u,u+1] of  W^i_{s,u} (x) W^j_{u,u+1} + 1/2 W^i_{u,u+1} (x) W^j_{u,u+1},
// i the integrand path, j the integrator. For i == j this is the geometric
// diagonal level; for i != j the cross level. Writes an m x m block.
void lift_piecewise_linear(const Ensemble& paths, Index i, Index j, Index a, Index b,
                           double* out);

// The probabilistic rough structure over a particle ensemble: level-1 paths,
// diagonal second levels, and pairwise cross second levels. Second levels are
// exact functions of level 1 (piecewise-linear lift) and are evaluated on
// demand; consecutive-step blocks may be materialized for the solver.
class RoughSetup {
public:
    RoughSetup(DriverSpec spec, GridPtr grid, Index M, double p, double q, CrossMode mode,
               std::size_t memory_budget_bytes = std::size_t(2) << 30);

    // Wrap externally supplied level-1 paths (coarsened drivers, handmade
    // ensembles); the second levels stay the exact piecewise-linear lifts of
    // the given paths.
    RoughSetup(DriverSpec spec, GridPtr grid, Ensemble paths, double p, double q, CrossMode mode,
               std::size_t memory_budget_bytes = std::size_t(2) << 30);

    const TimeGrid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    Index driver_dim() const { return m_; }
    Index particles() const { return M_; }
    double p() const { return p_; }
    double q() const { return q_; }
    const DriverSpec& spec() const { return spec_; }
    SecondLevelConvention convention() const { return spec_.convention; }
    CrossMode cross_mode() const { return mode_; }
    const Ensemble& level1() const { return paths_; }
    const std::vector<double>& weights() const { return paths_.weights; }

    // W_{a,b}(particle i) into out[m]
    void increment(Index i, Index a, Index b, double* out) const;

    // diagonal second level with the declared convention, m x m
    void second_level(Index i, Index a, Index b, double* out) const;

    // cross level, i integrand / j integrator; i == j falls back to the
    // diagonal (convention applied)
    void cross_level(Index i, Index j, Index a, Index b, double* out) const;

    // consecutive-step block (a, a+1); served from the materialized table
    // when available
    void cross_level_step(Index i, Index j, Index k, double* out) const;

    // full simplex table of the (i,j) second level, convention applied on the
    // diagonal pair; O(n^2 m^2), intended for desk-scale diagnostics
    TwoIndexArray pair_simplex_table(Index i, Index j) const;

private:
    void materialize_steps(std::size_t budget);

    DriverSpec spec_;
    GridPtr grid_;
    Index M_;
    Index m_;
    double p_, q_;
    CrossMode mode_;
    Ensemble paths_;
    std::vector<double> step_cross_;  // [(i*M + j)*steps + k] * m^2, MaterializeSteps only
};

RoughSetup build_setup(const DriverSpec& spec, GridPtr grid, Index M, double p, double q,
                       CrossMode mode = CrossMode::OnDemand,
                       std::size_t memory_budget_bytes = std::size_t(2) << 30);

// Default variation exponent: 2.5 for Brownian-like drivers, inside (2 rho, 3)
// with rho = 1/(2H) for fBm.
double default_p(const DriverSpec& spec);

// Max relative residual of the four algebraic consistency relations tying
// second-level increments across window splits, over all particles/pairs and
// all strict grid triples r < s < t. Lines 2-4 aggregate the off-diagonal
// sections in L^q / double-L^q as the objects themselves do.
struct ChenReport {
    double line[4] = {0.0, 0.0, 0.0, 0.0};
    double max_residual() const;
};

ChenReport chen_residual(const RoughSetup& setup);

// Desk-scale verification of the covariance rho-variation bound: exhaustively
// searches all sub-windows and dissection pairs of a small grid and returns
// the smallest constant K with  sup sum |cov|^rho <= K |t-s|.
double covariance_rho_variation_check(const DriverSpec& spec, const TimeGrid& grid, double rho);

}  // namespace mfrde
