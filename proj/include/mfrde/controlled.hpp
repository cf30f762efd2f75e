#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfrde/control.hpp"
#include "mfrde/rough_setup.hpp"

namespace mfrde {

// Weighted point cloud standing in for a probability measure. Common moments
// are computed once at construction so field evaluations stay cheap.
struct EmpiricalMeasure {
    const double* states = nullptr;  // M x d row-major
    const double* weights = nullptr;
    Index M = 0, d = 0;
    std::vector<double> mean;
    double second_moment = 0.0;  // sum_j w_j |y_j|^2

    EmpiricalMeasure() = default;
    EmpiricalMeasure(const double* st, const double* w, Index M_, Index d_);
    const double* point(Index j) const { return states + j * d; }
};

// Coefficient F(x, mu) with its state derivative and Lions derivative against
// an empirical measure. Tensor layouts are row-major:
//   eval  -> d x m           [i*m + j]
//   dx    -> d x m x d       [(i*m + j)*d + l]
//   dmu   -> d x m x d       [(i*m + j)*d + l]   (z-derivative representation)
// Higher derivatives are optional and consumed only by the derivative checker.
class MeanFieldField {
public:
    virtual ~MeanFieldField() = default;

    virtual Index state_dim() const = 0;
    virtual Index driver_dim() const = 0;
    virtual std::string name() const = 0;

    virtual void eval(const double* x, const EmpiricalMeasure& mu, double* out) const = 0;
    virtual void dx(const double* x, const EmpiricalMeasure& mu, double* out) const = 0;
    virtual void dmu(const double* x, const EmpiricalMeasure& mu, const double* z,
                     double* out) const = 0;

    // structural facts the solver exploits
    virtual bool dmu_is_zero() const { return false; }
    virtual bool dmu_z_independent() const { return false; }
    virtual double bound() const { return 1.0; }  // declared Lambda

    // optional: d x m x d x d, last index = x direction
    virtual bool has_dx_dmu() const { return false; }
    virtual void dx_dmu(const double*, const EmpiricalMeasure&, const double*, double*) const {
        throw std::runtime_error("field '" + name() + "' does not supply dx_dmu");
    }
    // optional: d x m x d x d, last index = z direction
    virtual bool has_dz_dmu() const { return false; }
    virtual void dz_dmu(const double*, const EmpiricalMeasure&, const double*, double*) const {
        throw std::runtime_error("field '" + name() + "' does not supply dz_dmu");
    }
};

// Family of controlled paths over the particle ensemble: base values, the
// state (Gubinelli) derivative against the driver, and the measure derivative,
// which is either structurally zero, a general callback, or the composed form
// dmu(om, om', t) = dmu_factor(om, t) . dx(om', t) whose z-independence the
// integral exploits. The remainder is defined by the controlled decomposition
// and evaluated on demand.
class ControlledFamily {
public:
    enum class DmuKind { Zero, General, ZIndependent };

    // dmu(om, omp, k, out): value_dim x m block
    using DmuFn = std::function<void(Index, Index, Index, double*)>;
    // dmu_factor(om, k, out): value_dim x d_underlying block (ZIndependent only)
    using DmuFactorFn = std::function<void(Index, Index, double*)>;

    ControlledFamily() = default;
    ControlledFamily(GridPtr grid, Index M, Index value_dim, Index driver_dim);

    Index particles() const { return base.size(); }
    Index value_dim() const { return vd_; }
    Index driver_dim() const { return m_; }

    bool dmu_zero() const { return dmu_kind == DmuKind::Zero; }
    void eval_dmu(Index om, Index omp, Index k, double* out) const;

    // R_{a,b}(om) = base_{a,b} - dx_a W_{a,b}(om) - <dmu_a(om,.) W_{a,b}(.)>
    void remainder(const RoughSetup& setup, Index om, Index a, Index b, double* out) const;

    std::vector<GridPath> base;  // per particle, value_dim
    std::vector<GridPath> dx;    // per particle, value_dim x m
    DmuKind dmu_kind = DmuKind::Zero;
    DmuFn dmu;
    DmuFactorFn dmu_factor;
    // ZIndependent only: state derivative of the underlying path, d x m block
    std::function<const double*(Index, Index)> underlying_dx;
    Index factor_inner_dim = 0;  // d of the underlying state path

private:
    Index vd_ = 0, m_ = 0;
};

// The four variation components of a controlled path plus the star variant
// that adds the initial magnitudes. Ratios against w^{1/p} (w^{2/p} for the
// remainder); a zero denominator against a nonzero numerator is reported as
// +inf with the offending pair.
struct TripleNorm {
    double x_var = 0.0, dx_var = 0.0, dmu_var = 0.0, remainder_var = 0.0;
    double star = 0.0;
    bool finite = true;
    Index bad_a = 0, bad_b = 0;

    double seminorm() const { return x_var + dx_var + dmu_var + remainder_var; }
};

TripleNorm triple_norm(const ControlledFamily& X, Index om, const RoughSetup& setup,
                       const Control& control, Index a, Index b, double dmu_exponent = 4.0 / 3.0);

// F composed with a controlled family (null measure derivative required):
// base F(X_t, mu_t), state derivative dF.dxX, measure derivative
// D_mu F(X_t(om), mu_t)(X_t(om')) dxX(om'), remainder by the decomposition.
ControlledFamily compose_field(const MeanFieldField& field, const ControlledFamily& X,
                               const RoughSetup& setup);

// Rough integral of a (d x m)-valued controlled family against the set-up,
// as a compensated sum of cellwise germs
//   Y_u W_{u,v} + dxY_u WW_{u,v} + < dmuY_u(om,.) WWcross_{u,v}(.,om) >
// (matrix products traced against the driver index).
struct IntegralDiagnostics {
    double max_germ_deviation = 0.0;
};

// accumulated integral along [a,b], one (d-dim) path per particle, zero at a
std::vector<GridPath> rough_integral_path(const ControlledFamily& Y, const RoughSetup& setup,
                                          Index a, Index b);

// window value at a dyadic refinement depth (2^depth subwindows snapped to
// grid indices); flattened M x d
std::vector<double> rough_integral_window(const ControlledFamily& Y, const RoughSetup& setup,
                                          Index a, Index b, Index depth);

// |I_full(a,b) - germ(a,b)| per particle: the sewing deviation of the window
std::vector<double> germ_deviation(const ControlledFamily& Y, const RoughSetup& setup, Index a,
                                   Index b);

// One application of the solution map on [a,b]:
//   ( X0 + int_a^t F(X_s, mu_s) dW_s ; F(X_t, mu_t) ; 0 ).
// X0 is flattened M x d; entries of the output outside [a,b] are left zero.
ControlledFamily gamma_map(const std::vector<double>& X0, const ControlledFamily& X,
                           const MeanFieldField& field, const RoughSetup& setup, Index a,
                           Index b);

// Finite-difference verification of the Lions derivative: gradient of the
// lifted map Z -> F(x, law(Z)) in each cloud member j against
// w_j D_mu F(x, mu)(z_j), plus the mixed-derivative symmetry when the field
// supplies dx_dmu. Entries above tol land in the report.
struct LionsCheckEntry {
    std::string what;
    Index member = 0, entry = 0;
    double analytic = 0.0, finite_difference = 0.0, rel_error = 0.0;
};

struct LionsCheckReport {
    double max_rel_error = 0.0;
    bool pass = true;
    std::vector<LionsCheckEntry> failures;
};

LionsCheckReport lions_derivative_check(const MeanFieldField& field,
                                        const std::vector<double>& cloud_states,
                                        const std::vector<double>& cloud_weights,
                                        const std::vector<double>& x, double tol,
                                        double fd_step = 1e-5);

}  // namespace mfrde
