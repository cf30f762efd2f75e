#pragma once

#include <memory>
#include <vector>

#include "mfrde/rough_setup.hpp"
#include "mfrde/variation.hpp"

namespace mfrde {

// Control lookup used by norm denominators and window selection. Two
// implementations: the exact table below (desk scale) and the additive
// per-step envelope (any scale).
class Control {
public:
    virtual ~Control() = default;
    virtual double w(Index particle, Index a, Index b) const = 0;
    double w_root(Index particle, Index a, Index b, double p) const {
        return std::pow(w(particle, a, b), 1.0 / p);
    }
};

struct ControlConfig {
    // Cross-term moment sums iterate over ordered pairs; above this ensemble
    // size the pair set (and the inner index of the one-sided terms) is
    // subsampled to 'subsample' deterministically chosen entries.
    Index subsample_threshold = 16;
    Index subsample = 64;
};

// Exact control on the full simplex:
//   v(s,t,i) = |W(i)|^p_{p-var} + <W>^p_{q,p-var} + |WW(i)|^{p/2}_{p/2-var}
//            + <cross(i,.)>^{p/2}_{q,p/2-var} + <cross(.,i)>^{p/2}_{q,p/2-var}
//            + <<cross(.,.)>>^{p/2}_{q,p/2-var},
//   w(s,t,i) = v(s,t,i) + onevar(s,t),
// where onevar is the exact 1-variation (dissection supremum, computed by the
// same DP) of (s,t) -> <v(s,t,.)>_q. This guarantees both control contracts:
// superadditivity, and <w(s,t,.)>_q <= 2 w(s,t,i) for every particle, since
// the trivial dissection participates in the supremum.
//
// Everything is memoized; intended for small/medium grids and ensembles where
// the O(M^2 K^2) cross-moment tables fit.
class ControlTable : public Control {
public:
    ControlTable(const RoughSetup& setup, ControlConfig cfg = {});

    // the memoized tables close over this, so the object must stay put
    ControlTable(const ControlTable&) = delete;
    ControlTable& operator=(const ControlTable&) = delete;

    double v(Index particle, Index a, Index b) const;
    double w(Index particle, Index a, Index b) const override;
    double vq(Index a, Index b) const;      // <v(a,b,.)>_q
    double onevar(Index a, Index b) const;  // 1-variation of vq by dissection DP

private:
    void build_cross_moment_tables();
    Index cell(Index a, Index b) const { return a * n_ + b; }

    const RoughSetup& setup_;
    ControlConfig cfg_;
    Index n_, M_;
    double p_, q_;

    // simplex tables of increment moments for the cross terms, indexed [a*n+b]
    std::vector<std::vector<double>> cross_left_;   // per particle: <cross(i,.)>_q
    std::vector<std::vector<double>> cross_right_;  // per particle: <cross(.,i)>_q
    std::vector<double> cross_both_;                // <<cross(.,.)>>_q

    mutable std::vector<std::unique_ptr<VariationTable>> t_level1_;  // per particle
    mutable std::unique_ptr<VariationTable> t_level1_lq_;
    mutable std::vector<std::unique_ptr<VariationTable>> t_level2_;  // per particle
    mutable std::vector<std::unique_ptr<VariationTable>> t_cross_left_;
    mutable std::vector<std::unique_ptr<VariationTable>> t_cross_right_;
    mutable std::unique_ptr<VariationTable> t_cross_both_;
    mutable std::unique_ptr<VariationTable> t_onevar_;
};

// Exact single-step controls and their additive envelope
//   w_env(a,b,i) = sum_{k in [a,b)} [ v(k,k+1,i) + <v(k,k+1,.)>_q ].
// On one grid cell the dissection supremum is trivial, so the step values are
// exact; the envelope is superadditive and satisfies <w>_q <= 2 w, but it sits
// below the full control on long windows. This is the scalable variant used
// by the solver and the tail diagnostics when full tables are out of reach.
class StepControlEnvelope : public Control {
public:
    StepControlEnvelope(const RoughSetup& setup, ControlConfig cfg = {});

    double step_v(Index particle, Index k) const;   // v on cell k
    double step_vq(Index k) const;                  // <v(k,k+1,.)>_q
    double step_w(Index particle, Index k) const {  // exact w on cell k
        return step_v(particle, k) + step_vq(k);
    }
    double w(Index particle, Index a, Index b) const override;

private:
    const RoughSetup& setup_;
    Index n_;
    std::vector<double> prefix_;   // [particle][point] prefix sums of step_w
    std::vector<double> step_v_;   // [particle][step]
    std::vector<double> step_vq_;  // [step]
};

}  // namespace mfrde
