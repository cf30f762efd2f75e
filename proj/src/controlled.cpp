#include "mfrde/controlled.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace mfrde {

EmpiricalMeasure::EmpiricalMeasure(const double* st, const double* w, Index M_, Index d_)
    : states(st), weights(w), M(M_), d(d_), mean(d_, 0.0) {
    for (Index j = 0; j < M; ++j) {
        const double* z = point(j);
        double n2 = 0.0;
        for (Index c = 0; c < d; ++c) {
            mean[c] += weights[j] * z[c];
            n2 += z[c] * z[c];
        }
        second_moment += weights[j] * n2;
    }
}

ControlledFamily::ControlledFamily(GridPtr grid, Index M, Index value_dim, Index driver_dim)
    : vd_(value_dim), m_(driver_dim) {
    base.reserve(M);
    dx.reserve(M);
    for (Index i = 0; i < M; ++i) {
        base.emplace_back(grid, value_dim);
        dx.emplace_back(grid, value_dim * driver_dim);
    }
}

void ControlledFamily::eval_dmu(Index om, Index omp, Index k, double* out) const {
    if (dmu_kind == DmuKind::Zero) {
        std::fill(out, out + vd_ * m_, 0.0);
        return;
    }
    dmu(om, omp, k, out);
}

void ControlledFamily::remainder(const RoughSetup& setup, Index om, Index a, Index b,
                                 double* out) const {
    const Index m = m_;
    std::vector<double> dW(m);
    base[om].increment(a, b, out);
    setup.increment(om, a, b, dW.data());
    const double* dxa = dx[om].at(a);
    for (Index r = 0; r < vd_; ++r)
        for (Index j = 0; j < m; ++j) out[r] -= dxa[r * m + j] * dW[j];
    if (dmu_kind != DmuKind::Zero) {
        const Index M = base.size();
        const auto& weights = setup.weights();
        std::vector<double> block(vd_ * m);
        for (Index omp = 0; omp < M; ++omp) {
            eval_dmu(om, omp, a, block.data());
            setup.increment(omp, a, b, dW.data());
            const double w = weights[omp];
            for (Index r = 0; r < vd_; ++r)
                for (Index j = 0; j < m; ++j) out[r] -= w * block[r * m + j] * dW[j];
        }
    }
}

TripleNorm triple_norm(const ControlledFamily& X, Index om, const RoughSetup& setup,
                       const Control& control, Index a, Index b, double dmu_exponent) {
    const Index vd = X.value_dim();
    const Index m = X.driver_dim();
    const Index M = X.particles();
    const double p = setup.p();
    const auto& weights = setup.weights();

    TripleNorm out;
    std::vector<double> buf(std::max(vd * m, vd)), blk_s(vd * m), blk_t(vd * m);

    auto ratio = [&](double num, double wst, double expo, Index s, Index t, double& target) {
        if (num == 0.0) return;
        if (wst <= 0.0) {
            out.finite = false;
            out.bad_a = s;
            out.bad_b = t;
            target = std::numeric_limits<double>::infinity();
            return;
        }
        target = std::max(target, num / std::pow(wst, expo));
    };

    for (Index s = a; s < b; ++s) {
        for (Index t = s + 1; t <= b; ++t) {
            const double wst = control.w(om, s, t);
            X.base[om].increment(s, t, buf.data());
            ratio(l2_norm(buf.data(), vd), wst, 1.0 / p, s, t, out.x_var);
            X.dx[om].increment(s, t, buf.data());
            ratio(l2_norm(buf.data(), vd * m), wst, 1.0 / p, s, t, out.dx_var);
            if (!X.dmu_zero()) {
                double acc = 0.0;
                for (Index omp = 0; omp < M; ++omp) {
                    X.eval_dmu(om, omp, s, blk_s.data());
                    X.eval_dmu(om, omp, t, blk_t.data());
                    for (Index e = 0; e < vd * m; ++e) blk_t[e] -= blk_s[e];
                    acc += weights[omp] * std::pow(l2_norm(blk_t.data(), vd * m), dmu_exponent);
                }
                ratio(std::pow(acc, 1.0 / dmu_exponent), wst, 1.0 / p, s, t, out.dmu_var);
            }
            X.remainder(setup, om, s, t, buf.data());
            ratio(l2_norm(buf.data(), vd), wst, 2.0 / p, s, t, out.remainder_var);
        }
    }

    double init = l2_norm(X.base[om].at(a), vd) + l2_norm(X.dx[om].at(a), vd * m);
    if (!X.dmu_zero()) {
        double acc = 0.0;
        for (Index omp = 0; omp < M; ++omp) {
            X.eval_dmu(om, omp, a, blk_s.data());
            acc += weights[omp] * std::pow(l2_norm(blk_s.data(), vd * m), dmu_exponent);
        }
        init += std::pow(acc, 1.0 / dmu_exponent);
    }
    out.star = init + out.seminorm();
    return out;
}

namespace {

// Shared state captured by the measure-derivative callbacks of a composed
// family: states and state derivatives reorganized by time, plus per-time
// empirical measures.
struct ComposeContext {
    const MeanFieldField* field;
    Index d, m, M, K;
    std::vector<double> weights;
    std::vector<double> states;  // [k][i][d]
    std::vector<double> xdx;     // [k][i][d*m]
    std::vector<EmpiricalMeasure> measures;

    const double* state(Index k, Index i) const { return states.data() + (k * M + i) * d; }
    const double* state_dx(Index k, Index i) const { return xdx.data() + (k * M + i) * d * m; }
};

}  // namespace

ControlledFamily compose_field(const MeanFieldField& field, const ControlledFamily& X,
                               const RoughSetup& setup) {
    if (!X.dmu_zero())
        throw std::invalid_argument("compose_field: input must have null measure derivative");
    const Index d = field.state_dim();
    const Index m = field.driver_dim();
    if (X.value_dim() != d || m != setup.driver_dim())
        throw std::invalid_argument("compose_field: dimension mismatch");
    const Index M = X.particles();
    const Index K = setup.grid().size();

    auto ctx = std::make_shared<ComposeContext>();
    ctx->field = &field;
    ctx->d = d;
    ctx->m = m;
    ctx->M = M;
    ctx->K = K;
    ctx->weights = setup.weights();
    ctx->states.resize(K * M * d);
    ctx->xdx.resize(K * M * d * m);
    for (Index k = 0; k < K; ++k)
        for (Index i = 0; i < M; ++i) {
            std::memcpy(ctx->states.data() + (k * M + i) * d, X.base[i].at(k),
                        d * sizeof(double));
            std::memcpy(ctx->xdx.data() + (k * M + i) * d * m, X.dx[i].at(k),
                        d * m * sizeof(double));
        }
    ctx->measures.reserve(K);
    for (Index k = 0; k < K; ++k)
        ctx->measures.emplace_back(ctx->states.data() + k * M * d, ctx->weights.data(), M, d);

    ControlledFamily out(setup.grid_ptr(), M, d * m, m);
    std::vector<double> F(d * m), P(d * m * d);
    for (Index k = 0; k < K; ++k) {
        const EmpiricalMeasure& mu = ctx->measures[k];
        for (Index i = 0; i < M; ++i) {
            field.eval(ctx->state(k, i), mu, F.data());
            std::memcpy(out.base[i].at(k), F.data(), d * m * sizeof(double));
            field.dx(ctx->state(k, i), mu, P.data());
            const double* xdx = ctx->state_dx(k, i);
            double* dst = out.dx[i].at(k);
            for (Index r = 0; r < d * m; ++r)
                for (Index kk = 0; kk < m; ++kk) {
                    double s = 0.0;
                    for (Index l = 0; l < d; ++l) s += P[r * d + l] * xdx[l * m + kk];
                    dst[r * m + kk] = s;
                }
        }
    }

    if (field.dmu_is_zero()) {
        out.dmu_kind = ControlledFamily::DmuKind::Zero;
        return out;
    }

    out.dmu = [ctx](Index om, Index omp, Index k, double* res) {
        const Index d = ctx->d, m = ctx->m;
        std::vector<double> D(d * m * d);
        ctx->field->dmu(ctx->state(k, om), ctx->measures[k], ctx->state(k, omp), D.data());
        const double* xdx = ctx->state_dx(k, omp);
        for (Index r = 0; r < d * m; ++r)
            for (Index kk = 0; kk < m; ++kk) {
                double s = 0.0;
                for (Index l = 0; l < d; ++l) s += D[r * d + l] * xdx[l * m + kk];
                res[r * m + kk] = s;
            }
    };
    if (field.dmu_z_independent()) {
        out.dmu_kind = ControlledFamily::DmuKind::ZIndependent;
        out.factor_inner_dim = d;
        out.dmu_factor = [ctx](Index om, Index k, double* res) {
            ctx->field->dmu(ctx->state(k, om), ctx->measures[k], ctx->state(k, om), res);
        };
        out.underlying_dx = [ctx](Index omp, Index k) { return ctx->state_dx(k, omp); };
    } else {
        out.dmu_kind = ControlledFamily::DmuKind::General;
    }
    return out;
}

namespace {

// cellwise germ accumulation shared by the path and window variants
void add_window_germ(const ControlledFamily& Y, const RoughSetup& setup, Index u, Index v,
                     Index om, double* acc, std::vector<double>& scratch) {
    const Index m = Y.driver_dim();
    const Index vd = Y.value_dim();
    const Index d = vd / m;
    const Index M = Y.particles();
    const auto& weights = setup.weights();

    scratch.resize(m + m * m + vd * m);
    double* dW = scratch.data();
    double* blk = dW + m;
    double* dmu = blk + m * m;

    setup.increment(om, u, v, dW);
    const double* val = Y.base[om].at(u);
    for (Index i = 0; i < d; ++i) {
        double s = 0.0;
        for (Index j = 0; j < m; ++j) s += val[i * m + j] * dW[j];
        acc[i] += s;
    }
    setup.second_level(om, u, v, blk);
    const double* dxv = Y.dx[om].at(u);
    for (Index i = 0; i < d; ++i) {
        double s = 0.0;
        for (Index j = 0; j < m; ++j)
            for (Index k = 0; k < m; ++k) s += dxv[(i * m + j) * m + k] * blk[k * m + j];
        acc[i] += s;
    }
    if (!Y.dmu_zero()) {
        for (Index omp = 0; omp < M; ++omp) {
            Y.eval_dmu(om, omp, u, dmu);
            setup.cross_level(omp, om, u, v, blk);
            const double w = weights[omp];
            for (Index i = 0; i < d; ++i) {
                double s = 0.0;
                for (Index j = 0; j < m; ++j)
                    for (Index k = 0; k < m; ++k) s += dmu[(i * m + j) * m + k] * blk[k * m + j];
                acc[i] += w * s;
            }
        }
    }
}

}  // namespace

std::vector<GridPath> rough_integral_path(const ControlledFamily& Y, const RoughSetup& setup,
                                          Index a, Index b) {
    const Index m = Y.driver_dim();
    const Index vd = Y.value_dim();
    if (vd % m != 0) throw std::invalid_argument("rough_integral_path: integrand must be d x m");
    const Index d = vd / m;
    const Index M = Y.particles();
    const auto& weights = setup.weights();

    std::vector<GridPath> out;
    out.reserve(M);
    for (Index i = 0; i < M; ++i) out.emplace_back(setup.grid_ptr(), d);

    const bool fast = Y.dmu_kind == ControlledFamily::DmuKind::ZIndependent;
    const Index du = fast ? Y.factor_inner_dim : 0;

    std::vector<double> dW(M * m), s_vec(du), own(du), factor(vd * du), blk(m * m),
        corr(m * m), scratch;

    for (Index k = a; k < b; ++k) {
        if (fast) {
            // dW per particle and the ensemble-weighted contraction
            // s[l] = sum_omp w' (dx_underlying(omp) . dW^omp)[l]
            std::fill(s_vec.begin(), s_vec.end(), 0.0);
            for (Index omp = 0; omp < M; ++omp) {
                setup.increment(omp, k, k + 1, dW.data() + omp * m);
                const double* xdx = Y.underlying_dx(omp, k);
                const double* w_inc = dW.data() + omp * m;
                for (Index l = 0; l < du; ++l) {
                    double t = 0.0;
                    for (Index kk = 0; kk < m; ++kk) t += xdx[l * m + kk] * w_inc[kk];
                    s_vec[l] += weights[omp] * t;
                }
            }
        }
        for (Index om = 0; om < M; ++om) {
            double* acc = out[om].at(k + 1);
            std::memcpy(acc, out[om].at(k), d * sizeof(double));
            if (!fast) {
                add_window_germ(Y, setup, k, k + 1, om, acc, scratch);
                continue;
            }
            // level one and diagonal terms as in the general branch
            const double* w_inc = dW.data() + om * m;
            const double* val = Y.base[om].at(k);
            for (Index i = 0; i < d; ++i) {
                double s = 0.0;
                for (Index j = 0; j < m; ++j) s += val[i * m + j] * w_inc[j];
                acc[i] += s;
            }
            setup.second_level(om, k, k + 1, blk.data());
            const double* dxv = Y.dx[om].at(k);
            for (Index i = 0; i < d; ++i) {
                double s = 0.0;
                for (Index j = 0; j < m; ++j)
                    for (Index kk = 0; kk < m; ++kk)
                        s += dxv[(i * m + j) * m + kk] * blk[kk * m + j];
                acc[i] += s;
            }
            // Mean-field term: the cellwise cross block for om' != om is the
            // separable 1/2 dW^omp (x) dW^om, so the whole ensemble average
            // collapses onto s_vec; the diagonal om' = om is put back with its
            // true block.
            Y.dmu_factor(om, k, factor.data());
            const double* xdx_own = Y.underlying_dx(om, k);
            for (Index l = 0; l < du; ++l) {
                double t = 0.0;
                for (Index kk = 0; kk < m; ++kk) t += xdx_own[l * m + kk] * w_inc[kk];
                own[l] = s_vec[l] - weights[om] * t;
            }
            for (Index i = 0; i < d; ++i) {
                double s = 0.0;
                for (Index j = 0; j < m; ++j) {
                    double t = 0.0;
                    for (Index l = 0; l < du; ++l) t += factor[(i * m + j) * du + l] * own[l];
                    s += 0.5 * t * w_inc[j];
                }
                acc[i] += s;
            }
            // exact diagonal correction
            for (Index r = 0; r < m; ++r)
                for (Index c = 0; c < m; ++c) corr[r * m + c] = blk[r * m + c];
            for (Index i = 0; i < d; ++i) {
                double s = 0.0;
                for (Index j = 0; j < m; ++j)
                    for (Index kk = 0; kk < m; ++kk) {
                        double t = 0.0;
                        for (Index l = 0; l < du; ++l)
                            t += factor[(i * m + j) * du + l] * xdx_own[l * m + kk];
                        s += t * corr[kk * m + j];
                    }
                acc[i] += weights[om] * s;
            }
        }
    }
    return out;
}

std::vector<double> rough_integral_window(const ControlledFamily& Y, const RoughSetup& setup,
                                          Index a, Index b, Index depth) {
    const Index m = Y.driver_dim();
    const Index vd = Y.value_dim();
    if (vd % m != 0)
        throw std::invalid_argument("rough_integral_window: integrand must be d x m");
    if (a > b || b >= setup.grid().size())
        throw std::out_of_range("rough_integral_window: bad window");
    const Index d = vd / m;
    const Index M = Y.particles();

    // dyadic split of the index range, snapped to grid points
    std::vector<Index> cuts;
    const Index pieces = (depth >= 60) ? (b - a) : std::min<Index>(b - a, Index(1) << depth);
    cuts.push_back(a);
    for (Index k = 1; k <= pieces && pieces > 0; ++k) {
        const Index pt = a + (k * (b - a)) / pieces;
        if (pt > cuts.back()) cuts.push_back(pt);
    }
    if (cuts.back() != b) cuts.push_back(b);

    std::vector<double> out(M * d, 0.0);
    std::vector<double> scratch;
    for (Index om = 0; om < M; ++om)
        for (Index c = 0; c + 1 < cuts.size(); ++c)
            add_window_germ(Y, setup, cuts[c], cuts[c + 1], om, out.data() + om * d, scratch);
    return out;
}

std::vector<double> germ_deviation(const ControlledFamily& Y, const RoughSetup& setup, Index a,
                                   Index b) {
    const Index d = Y.value_dim() / Y.driver_dim();
    const Index M = Y.particles();
    std::vector<double> full = rough_integral_window(Y, setup, a, b, 60);
    std::vector<double> germ = rough_integral_window(Y, setup, a, b, 0);
    std::vector<double> out(M);
    for (Index om = 0; om < M; ++om) out[om] = l2_dist(full.data() + om * d, germ.data() + om * d, d);
    return out;
}

ControlledFamily gamma_map(const std::vector<double>& X0, const ControlledFamily& X,
                           const MeanFieldField& field, const RoughSetup& setup, Index a,
                           Index b) {
    const Index d = field.state_dim();
    const Index M = X.particles();
    if (X0.size() != M * d) throw std::invalid_argument("gamma_map: X0 size mismatch");

    ControlledFamily composed = compose_field(field, X, setup);
    std::vector<GridPath> integral = rough_integral_path(composed, setup, a, b);

    ControlledFamily out(setup.grid_ptr(), M, d, setup.driver_dim());
    for (Index i = 0; i < M; ++i) {
        for (Index k = a; k <= b; ++k) {
            double* dst = out.base[i].at(k);
            const double* inc = integral[i].at(k);
            for (Index c = 0; c < d; ++c) dst[c] = X0[i * d + c] + inc[c];
            std::memcpy(out.dx[i].at(k), composed.base[i].at(k),
                        d * setup.driver_dim() * sizeof(double));
        }
    }
    out.dmu_kind = ControlledFamily::DmuKind::Zero;
    return out;
}

LionsCheckReport lions_derivative_check(const MeanFieldField& field,
                                        const std::vector<double>& cloud_states,
                                        const std::vector<double>& cloud_weights,
                                        const std::vector<double>& x, double tol,
                                        double fd_step) {
    const Index d = field.state_dim();
    const Index m = field.driver_dim();
    const Index M = cloud_weights.size();
    if (cloud_states.size() != M * d)
        throw std::invalid_argument("lions_derivative_check: cloud shape mismatch");

    LionsCheckReport rep;
    auto record = [&](const std::string& what, Index member, Index entry, double an, double fd) {
        const double scale = std::max(std::fabs(an), std::fabs(fd));
        const double rel = (scale > 1e-8) ? std::fabs(an - fd) / scale : std::fabs(an - fd);
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        if (rel > tol) {
            rep.pass = false;
            rep.failures.push_back({what, member, entry, an, fd, rel});
        }
    };

    std::vector<double> work = cloud_states;
    std::vector<double> fplus(d * m), fminus(d * m), analytic(d * m * d);
    EmpiricalMeasure mu(cloud_states.data(), cloud_weights.data(), M, d);

    for (Index j = 0; j < M; ++j) {
        field.dmu(x.data(), mu, cloud_states.data() + j * d, analytic.data());
        for (Index c = 0; c < d; ++c) {
            const double save = work[j * d + c];
            work[j * d + c] = save + fd_step;
            EmpiricalMeasure mp(work.data(), cloud_weights.data(), M, d);
            field.eval(x.data(), mp, fplus.data());
            work[j * d + c] = save - fd_step;
            EmpiricalMeasure mm(work.data(), cloud_weights.data(), M, d);
            field.eval(x.data(), mm, fminus.data());
            work[j * d + c] = save;
            for (Index e = 0; e < d * m; ++e) {
                const double fd = (fplus[e] - fminus[e]) / (2.0 * fd_step);
                record("lifted-gradient", j, e * d + c, cloud_weights[j] * analytic[e * d + c],
                       fd);
            }
        }
    }

    if (field.has_dx_dmu()) {
        // mixed derivative two ways: d/dx of dmu, and the transposed Lions
        // derivative of dx; both must match the supplied tensor
        std::vector<double> an2(d * m * d * d), dplus(d * m * d), dminus(d * m * d);
        std::vector<double> xp(x), gplus(d * m * d), gminus(d * m * d);
        for (Index j = 0; j < std::min<Index>(M, 4); ++j) {
            const double* z = cloud_states.data() + j * d;
            field.dx_dmu(x.data(), mu, z, an2.data());
            for (Index lx = 0; lx < d; ++lx) {
                xp = x;
                xp[lx] += fd_step;
                field.dmu(xp.data(), mu, z, dplus.data());
                xp[lx] -= 2.0 * fd_step;
                field.dmu(xp.data(), mu, z, dminus.data());
                for (Index e = 0; e < d * m * d; ++e) {
                    const double fd = (dplus[e] - dminus[e]) / (2.0 * fd_step);
                    record("dx-of-dmu", j, e * d + lx, an2[e * d + lx], fd);
                }
            }
            // D_mu(dxF) via the lifted map, compared against the transpose
            for (Index lz = 0; lz < d; ++lz) {
                const double save = work[j * d + lz];
                work[j * d + lz] = save + fd_step;
                EmpiricalMeasure mp(work.data(), cloud_weights.data(), M, d);
                field.dx(x.data(), mp, gplus.data());
                work[j * d + lz] = save - fd_step;
                EmpiricalMeasure mm(work.data(), cloud_weights.data(), M, d);
                field.dx(x.data(), mm, gminus.data());
                work[j * d + lz] = save;
                for (Index i = 0; i < d; ++i)
                    for (Index jj = 0; jj < m; ++jj)
                        for (Index lx = 0; lx < d; ++lx) {
                            const double fd = (gplus[(i * m + jj) * d + lx] -
                                               gminus[(i * m + jj) * d + lx]) /
                                              (2.0 * fd_step) / cloud_weights[j];
                            const double an =
                                an2[((i * m + jj) * d + lz) * d + lx];  // transposed access
                            record("dmu-of-dx-transpose", j, ((i * m + jj) * d + lz) * d + lx,
                                   an, fd);
                        }
            }
        }
    }

    if (field.has_dz_dmu()) {
        std::vector<double> an2(d * m * d * d), dplus(d * m * d), dminus(d * m * d), zp(d);
        for (Index j = 0; j < std::min<Index>(M, 4); ++j) {
            const double* z = cloud_states.data() + j * d;
            field.dz_dmu(x.data(), mu, z, an2.data());
            for (Index lz = 0; lz < d; ++lz) {
                std::copy(z, z + d, zp.begin());
                zp[lz] += fd_step;
                field.dmu(x.data(), mu, zp.data(), dplus.data());
                zp[lz] -= 2.0 * fd_step;
                field.dmu(x.data(), mu, zp.data(), dminus.data());
                for (Index e = 0; e < d * m * d; ++e) {
                    const double fd = (dplus[e] - dminus[e]) / (2.0 * fd_step);
                    record("dz-of-dmu", j, e * d + lz, an2[e * d + lz], fd);
                }
            }
        }
    }
    return rep;
}

}  // namespace mfrde
