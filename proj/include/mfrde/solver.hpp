#pragma once

#include <vector>

#include "mfrde/controlled.hpp"
#include "mfrde/fields.hpp"

namespace mfrde {

enum class Scheme { ExplicitStep, Picard };
enum class WindowPolicy { Fixed, Accumulation };

struct PicardOptions {
    Index max_iters = 50;
    double tol = 1e-10;
    WindowPolicy policy = WindowPolicy::Fixed;
    double fixed_h = 0.0;  // 0: single window over the whole horizon
    double L = 2.0;        // accumulation policy threshold alpha = 1/(4L) on w^{1/p}
    bool exact_control = false;  // full control tables instead of the step envelope
};

struct SolveConfig {
    const MeanFieldField* field = nullptr;
    const RoughSetup* setup = nullptr;
    std::vector<double> X0;  // flattened M x d
    Scheme scheme = Scheme::ExplicitStep;
    PicardOptions picard;
};

struct WindowDiagnostics {
    Index begin = 0, end = 0;
    std::vector<double> residual_max;  // per iteration, max star-norm over particles
    std::vector<double> residual_l8;   // advisory empirical L^8 across particles
    bool converged = false;
};

struct Solution {
    std::vector<GridPath> X;   // per particle, d
    std::vector<GridPath> dx;  // F along the solution, d x m
    std::vector<WindowDiagnostics> windows;
};

// One-pass stepper from the solution expansion: per step and particle
//   X_{k+1} = X_k + F W_{k,k+1} + dxF (F WW_{k,k+1})
//             + sum_j w_j D_mu F(X_k, mu_k)(X^j_k) (F(X^j_k, mu_k) WWcross^{j,i}_{k,k+1}),
// the remainder of the expansion being the germ-order error the convergence
// study measures.
Solution explicit_step_solve(const SolveConfig& cfg);

// Picard iteration on the solution map over a window partition of [0, T],
// re-basing the initial condition at each boundary. Residuals are star
// triple norms of consecutive iterates; three consecutive non-contracting
// ratios abort with a suggestion to shrink the window.
Solution picard_solve(const SolveConfig& cfg);

// Window partition used by the Picard scheme (exposed for tests/diagnostics):
// fixed time width, or greedy maximal windows with max_i w(i,s,u)^{1/p} < alpha.
std::vector<Index> picard_windows(const SolveConfig& cfg, const Control& control);

// Classical Euler-Maruyama particle scheme on a refined grid (each cell split
// into `substeps` with Brownian-bridge refinement of the shared increments).
// Against a Stratonovich set-up the Ito drift correction 1/2 dxF.F is added,
// so the oracle always approximates the same equation the rough solver
// discretizes. Brownian drivers only.
std::vector<GridPath> mckean_vlasov_oracle(const MeanFieldField& field,
                                           const std::vector<double>& X0,
                                           const RoughSetup& setup, Index substeps);

struct ConvergenceRow {
    Index steps = 0;
    double h = 0.0;
    double strong_error = 0.0;
    double weak_error = 0.0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    bool fitted = false;
    double strong_slope = 0.0;
    double weak_slope = 0.0;
};

// Strong/weak error under grid refinement with shared driver samples: the
// driver is sampled once on the finest grid and coarsened by summing
// increments; the reference is either a caller-supplied exact terminal state
// or the refined oracle itself.
using ReferenceFn =
    std::function<std::vector<double>(const RoughSetup& finest_setup)>;  // M x d terminal

ConvergenceTable convergence_study(const MeanFieldField& field, const DriverSpec& spec, double T,
                                   const std::vector<Index>& step_counts, Index M,
                                   const std::vector<double>& X0, Scheme scheme,
                                   const ReferenceFn& reference, double p, double q);

// least-squares slope of log(y) against log(x); pairs with y <= 0 are dropped
double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mfrde
