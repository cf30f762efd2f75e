#pragma once

#include <vector>

#include "mfrde/grid.hpp"

namespace mfrde {

// Empirical tail diagnostics for Monte Carlo samples of the accumulation
// counter N or of the control mass w(0,T). Qualitative hypothesis probes,
// never proofs: the solver's well-posedness regime asks for a sub-exponential
// tail of w(0,T) and a super-exponential (Weibull-like) tail of N.
struct TailPoint {
    double level = 0.0;
    double survival = 0.0;
    double log_survival = 0.0;
};

struct TailReport {
    std::vector<TailPoint> points;       // survival at distinct sample values
    std::vector<double> decay_slopes;    // -(log S(n_{k+1}) - log S(n_k)) / (n_{k+1} - n_k)
    bool reliable = false;               // >= 64 samples
    bool degenerate = false;             // all samples equal
    bool concave_log_survival = false;   // decay slopes monotone nondecreasing
    double log_linear_slope = 0.0;       // fit of log S against the level
    double log_log_slope = 0.0;          // fit of log(-log S) against log(level)
};

// Samples may be integer counts (N) or positive reals (w). Points with too
// little mass (fewer than min_tail_count samples above the level) are dropped
// before slopes are formed.
TailReport tail_estimate(std::vector<double> samples, Index min_tail_count = 4);

}  // namespace mfrde
