#include "mfrde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfrde {

namespace {

void check_config(const SolveConfig& cfg) {
    if (!cfg.field || !cfg.setup) throw std::invalid_argument("SolveConfig: field/setup missing");
    const Index M = cfg.setup->particles();
    const Index d = cfg.field->state_dim();
    if (cfg.field->driver_dim() != cfg.setup->driver_dim())
        throw std::invalid_argument("SolveConfig: driver dimension mismatch");
    if (cfg.X0.size() != M * d)
        throw std::invalid_argument("SolveConfig: X0 has " + std::to_string(cfg.X0.size()) +
                                    " entries, expected M*d = " + std::to_string(M * d));
}

}  // namespace

Solution explicit_step_solve(const SolveConfig& cfg) {
    check_config(cfg);
    const MeanFieldField& field = *cfg.field;
    const RoughSetup& setup = *cfg.setup;
    const Index M = setup.particles();
    const Index m = setup.driver_dim();
    const Index d = field.state_dim();
    const Index steps = setup.grid().size() - 1;
    const auto& weights = setup.weights();
    const bool no_mf = field.dmu_is_zero();
    const bool z_indep = field.dmu_z_independent();

    Solution sol;
    sol.X.reserve(M);
    sol.dx.reserve(M);
    for (Index i = 0; i < M; ++i) {
        sol.X.emplace_back(setup.grid_ptr(), d);
        sol.dx.emplace_back(setup.grid_ptr(), d * m);
    }

    std::vector<double> cur(cfg.X0), next(M * d);
    for (Index i = 0; i < M; ++i) std::memcpy(sol.X[i].at(0), cur.data() + i * d, d * sizeof(double));

    std::vector<double> F(M * d * m), dW(M * m), B(M * d);  // B_j = F_j dW_j
    std::vector<double> half_sum(d);                        // sum_j w_j B_j (fast path)

    for (Index k = 0; k < steps; ++k) {
        EmpiricalMeasure mu(cur.data(), weights.data(), M, d);
        for (Index j = 0; j < M; ++j) {
            field.eval(cur.data() + j * d, mu, F.data() + j * d * m);
            setup.increment(j, k, k + 1, dW.data() + j * m);
            const double* Fj = F.data() + j * d * m;
            const double* dWj = dW.data() + j * m;
            for (Index r = 0; r < d; ++r) {
                double s = 0.0;
                for (Index c = 0; c < m; ++c) s += Fj[r * m + c] * dWj[c];
                B[j * d + r] = s;
            }
            std::memcpy(sol.dx[j].at(k), Fj, d * m * sizeof(double));
        }
        if (!no_mf && z_indep) {
            std::fill(half_sum.begin(), half_sum.end(), 0.0);
            for (Index j = 0; j < M; ++j)
                for (Index r = 0; r < d; ++r) half_sum[r] += weights[j] * B[j * d + r];
        }

#ifdef _OPENMP
#pragma omp parallel
#endif
        {
            std::vector<double> P(d * m * d), WW(m * m), D(d * m * d), A(d * m), rest(d);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (long long ii = 0; ii < static_cast<long long>(M); ++ii) {
            const Index i = static_cast<Index>(ii);
            const double* Fi = F.data() + i * d * m;
            const double* dWi = dW.data() + i * m;
            double* out = next.data() + i * d;

            for (Index r = 0; r < d; ++r) out[r] = cur[i * d + r] + B[i * d + r];

            // dxF (F WW): sum over l,j,k of dxF^{r,j}_l F^{l,k} WW^{k,j}
            field.dx(cur.data() + i * d, mu, P.data());
            setup.second_level(i, k, k + 1, WW.data());
            for (Index r = 0; r < d; ++r) {
                double s = 0.0;
                for (Index j = 0; j < m; ++j)
                    for (Index kk = 0; kk < m; ++kk) {
                        double t = 0.0;
                        for (Index l = 0; l < d; ++l)
                            t += P[(r * m + j) * d + l] * Fi[l * m + kk];
                        s += t * WW[kk * m + j];
                    }
                out[r] += s;
            }

            if (!no_mf) {
                if (z_indep) {
                    // cross blocks are separable per cell; the diagonal term is
                    // restored with its exact block
                    field.dmu(cur.data() + i * d, mu, cur.data() + i * d, D.data());
                    for (Index r = 0; r < d; ++r)
                        rest[r] = half_sum[r] - weights[i] * B[i * d + r];
                    for (Index r = 0; r < d; ++r) {
                        double s = 0.0;
                        for (Index j = 0; j < m; ++j) {
                            double t = 0.0;
                            for (Index l = 0; l < d; ++l) t += D[(r * m + j) * d + l] * rest[l];
                            s += 0.5 * t * dWi[j];
                        }
                        out[r] += s;
                    }
                    // diagonal: D . (F_i WW_conv(i))
                    for (Index r = 0; r < d; ++r) {
                        double s = 0.0;
                        for (Index j = 0; j < m; ++j)
                            for (Index kk = 0; kk < m; ++kk) {
                                double t = 0.0;
                                for (Index l = 0; l < d; ++l)
                                    t += D[(r * m + j) * d + l] * Fi[l * m + kk];
                                s += t * WW[kk * m + j];
                            }
                        out[r] += weights[i] * s;
                    }
                } else {
                    for (Index j2 = 0; j2 < M; ++j2) {
                        field.dmu(cur.data() + i * d, mu, cur.data() + j2 * d, D.data());
                        // A = F_{j2} cross(j2, i); separable off the diagonal
                        if (j2 == i) {
                            for (Index l = 0; l < d; ++l)
                                for (Index j = 0; j < m; ++j) {
                                    double s = 0.0;
                                    const double* Fj = F.data() + j2 * d * m;
                                    for (Index kk = 0; kk < m; ++kk)
                                        s += Fj[l * m + kk] * WW[kk * m + j];
                                    A[l * m + j] = s;
                                }
                        } else {
                            for (Index l = 0; l < d; ++l)
                                for (Index j = 0; j < m; ++j)
                                    A[l * m + j] = 0.5 * B[j2 * d + l] * dWi[j];
                        }
                        const double w = weights[j2];
                        for (Index r = 0; r < d; ++r) {
                            double s = 0.0;
                            for (Index j = 0; j < m; ++j)
                                for (Index l = 0; l < d; ++l)
                                    s += D[(r * m + j) * d + l] * A[l * m + j];
                            out[r] += w * s;
                        }
                    }
                }
            }
        }
        }

        for (Index i = 0; i < M; ++i) {
            for (Index r = 0; r < d; ++r)
                if (!std::isfinite(next[i * d + r]))
                    throw std::runtime_error("explicit_step_solve: non-finite state at step " +
                                             std::to_string(k) + ", particle " +
                                             std::to_string(i));
            std::memcpy(sol.X[i].at(k + 1), next.data() + i * d, d * sizeof(double));
        }
        cur.swap(next);
    }

    // Gubinelli derivative at the terminal point
    EmpiricalMeasure mu(cur.data(), weights.data(), M, d);
    std::vector<double> Fend(d * m);
    for (Index i = 0; i < M; ++i) {
        field.eval(cur.data() + i * d, mu, Fend.data());
        std::memcpy(sol.dx[i].at(steps), Fend.data(), d * m * sizeof(double));
    }
    return sol;
}

std::vector<Index> picard_windows(const SolveConfig& cfg, const Control& control) {
    const RoughSetup& setup = *cfg.setup;
    const Index n = setup.grid().size();
    const Index M = setup.particles();
    std::vector<Index> bounds{0};
    if (cfg.picard.policy == WindowPolicy::Fixed) {
        if (cfg.picard.fixed_h <= 0.0) {
            bounds.push_back(n - 1);
            return bounds;
        }
        double next_t = cfg.picard.fixed_h;
        for (Index k = 1; k + 1 < n; ++k) {
            if (setup.grid()[k] >= next_t - 1e-12) {
                bounds.push_back(k);
                while (next_t <= setup.grid()[k] + 1e-12) next_t += cfg.picard.fixed_h;
            }
        }
        bounds.push_back(n - 1);
        return bounds;
    }
    // accumulation policy: greedy maximal windows with max_i w^{1/p} < alpha,
    // the common refinement over particles
    const double alpha = 1.0 / (4.0 * cfg.picard.L);
    const double p = setup.p();
    Index s = 0;
    while (s + 1 < n) {
        Index u = s + 1;  // always advance at least one cell
        while (u + 1 < n) {
            double worst = 0.0;
            for (Index i = 0; i < M; ++i)
                worst = std::max(worst, control.w(i, s, u + 1));
            if (std::pow(worst, 1.0 / p) >= alpha) break;
            ++u;
        }
        bounds.push_back(u);
        s = u;
    }
    if (bounds.back() != n - 1) bounds.push_back(n - 1);
    return bounds;
}

Solution picard_solve(const SolveConfig& cfg) {
    check_config(cfg);
    const MeanFieldField& field = *cfg.field;
    const RoughSetup& setup = *cfg.setup;
    const Index M = setup.particles();
    const Index m = setup.driver_dim();
    const Index d = field.state_dim();
    const auto& weights = setup.weights();

    std::unique_ptr<Control> control;
    if (cfg.picard.exact_control)
        control = std::make_unique<ControlTable>(setup);
    else
        control = std::make_unique<StepControlEnvelope>(setup);

    const std::vector<Index> bounds = picard_windows(cfg, *control);

    Solution sol;
    sol.X.reserve(M);
    sol.dx.reserve(M);
    for (Index i = 0; i < M; ++i) {
        sol.X.emplace_back(setup.grid_ptr(), d);
        sol.dx.emplace_back(setup.grid_ptr(), d * m);
    }

    std::vector<double> base_state(cfg.X0);
    for (Index i = 0; i < M; ++i)
        std::memcpy(sol.X[i].at(0), base_state.data() + i * d, d * sizeof(double));

    for (Index wi = 0; wi + 1 < bounds.size(); ++wi) {
        const Index wa = bounds[wi], wb = bounds[wi + 1];

        // initial guess: frozen initial condition with zero derivatives
        ControlledFamily X(setup.grid_ptr(), M, d, m);
        for (Index i = 0; i < M; ++i)
            for (Index k = wa; k <= wb; ++k)
                std::memcpy(X.base[i].at(k), base_state.data() + i * d, d * sizeof(double));

        WindowDiagnostics diag;
        diag.begin = wa;
        diag.end = wb;

        Index bad_streak = 0;
        for (Index it = 0; it < cfg.picard.max_iters; ++it) {
            ControlledFamily Xn = gamma_map(base_state, X, field, setup, wa, wb);

            // residual: star triple norm of the difference, max over particles
            ControlledFamily delta(setup.grid_ptr(), M, d, m);
            for (Index i = 0; i < M; ++i)
                for (Index k = wa; k <= wb; ++k) {
                    const double* a = Xn.base[i].at(k);
                    const double* b = X.base[i].at(k);
                    double* o = delta.base[i].at(k);
                    for (Index c = 0; c < d; ++c) o[c] = a[c] - b[c];
                    const double* da = Xn.dx[i].at(k);
                    const double* db = X.dx[i].at(k);
                    double* od = delta.dx[i].at(k);
                    for (Index c = 0; c < d * m; ++c) od[c] = da[c] - db[c];
                }
            double res_max = 0.0, res_l8 = 0.0;
            for (Index i = 0; i < M; ++i) {
                const TripleNorm tn = triple_norm(delta, i, setup, *control, wa, wb);
                const double star = tn.star;
                res_max = std::max(res_max, star);
                res_l8 += weights[i] * std::pow(star, 8.0);
            }
            res_l8 = std::pow(res_l8, 1.0 / 8.0);
            diag.residual_max.push_back(res_max);
            diag.residual_l8.push_back(res_l8);

            X = std::move(Xn);

            if (res_max < cfg.picard.tol) {
                diag.converged = true;
                break;
            }
            const Index nres = diag.residual_max.size();
            if (nres >= 2 && diag.residual_max[nres - 1] >= diag.residual_max[nres - 2]) {
                if (++bad_streak >= 3)
                    throw std::runtime_error(
                        "picard_solve: no contraction on window [" + std::to_string(wa) + "," +
                        std::to_string(wb) +
                        "] (3 consecutive non-decreasing residuals); shrink the window "
                        "(smaller fixed_h or larger L)");
            } else {
                bad_streak = 0;
            }
        }

        for (Index i = 0; i < M; ++i)
            for (Index k = wa; k <= wb; ++k) {
                std::memcpy(sol.X[i].at(k), X.base[i].at(k), d * sizeof(double));
                std::memcpy(sol.dx[i].at(k), X.dx[i].at(k), d * m * sizeof(double));
            }
        for (Index i = 0; i < M; ++i)
            std::memcpy(base_state.data() + i * d, X.base[i].at(wb), d * sizeof(double));
        sol.windows.push_back(std::move(diag));
    }
    return sol;
}

std::vector<GridPath> mckean_vlasov_oracle(const MeanFieldField& field,
                                           const std::vector<double>& X0,
                                           const RoughSetup& setup, Index substeps) {
    if (setup.spec().kind != DriverKind::Brownian)
        throw std::runtime_error("mckean_vlasov_oracle: unsupported driver (brownian only)");
    if (substeps < 1) throw std::invalid_argument("mckean_vlasov_oracle: substeps >= 1");
    const Index M = setup.particles();
    const Index m = setup.driver_dim();
    const Index d = field.state_dim();
    const Index steps = setup.grid().size() - 1;
    const auto& weights = setup.weights();
    const bool strat = setup.convention() == SecondLevelConvention::StratonovichLinear;

    std::vector<GridPath> out;
    out.reserve(M);
    for (Index i = 0; i < M; ++i) out.emplace_back(setup.grid_ptr(), d);

    std::vector<double> cur(X0), next(M * d);
    for (Index i = 0; i < M; ++i) std::memcpy(out[i].at(0), cur.data() + i * d, d * sizeof(double));

    // Brownian-bridge split of each shared coarse increment; the last substep
    // takes the exact remainder so the refined path pins the coarse one.
    Rng master(setup.spec().seed);
    std::vector<Rng> streams;
    streams.reserve(M);
    for (Index i = 0; i < M; ++i) streams.push_back(master.labeled("bridge", i));

    // deterministic coordinates (the appended clock) split linearly, without
    // bridge noise
    const Index brownian_dims = setup.spec().dimension;

    std::vector<double> rem(M * m), dws(M * m), F(d * m), P(d * m * d);
    for (Index k = 0; k < steps; ++k) {
        const double H = setup.grid().spacing(k);
        for (Index i = 0; i < M; ++i) setup.increment(i, k, k + 1, rem.data() + i * m);
        double tau = H;
        for (Index s = 0; s < substeps; ++s) {
            const double delta = H / static_cast<double>(substeps);
            for (Index i = 0; i < M; ++i) {
                for (Index c = 0; c < m; ++c) {
                    double inc;
                    if (s + 1 == substeps) {
                        inc = rem[i * m + c];
                    } else if (c >= brownian_dims) {
                        inc = rem[i * m + c] * delta / tau;
                        rem[i * m + c] -= inc;
                    } else {
                        const double mean = rem[i * m + c] * delta / tau;
                        const double var = delta * (tau - delta) / tau;
                        inc = mean + std::sqrt(var) * streams[i].normal();
                        rem[i * m + c] -= inc;
                    }
                    dws[i * m + c] = inc;
                }
            }
            EmpiricalMeasure mu(cur.data(), weights.data(), M, d);
            for (Index i = 0; i < M; ++i) {
                field.eval(cur.data() + i * d, mu, F.data());
                double* o = next.data() + i * d;
                std::memcpy(o, cur.data() + i * d, d * sizeof(double));
                for (Index r = 0; r < d; ++r) {
                    double sum = 0.0;
                    for (Index c = 0; c < m; ++c) sum += F[r * m + c] * dws[i * m + c];
                    o[r] += sum;
                }
                if (strat) {
                    field.dx(cur.data() + i * d, mu, P.data());
                    for (Index r = 0; r < d; ++r) {
                        double corr = 0.0;
                        for (Index l = 0; l < d; ++l)
                            for (Index c = 0; c < m; ++c)
                                corr += P[(r * m + c) * d + l] * F[l * m + c];
                        o[r] += 0.5 * corr * delta;
                    }
                }
            }
            cur.swap(next);
            tau -= delta;
        }
        for (Index i = 0; i < M; ++i)
            std::memcpy(out[i].at(k + 1), cur.data() + i * d, d * sizeof(double));
    }
    return out;
}

double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    Index n = 0;
    for (Index i = 0; i < x.size(); ++i) {
        if (!(y[i] > 0.0) || !(x[i] > 0.0)) continue;
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / den;
}

ConvergenceTable convergence_study(const MeanFieldField& field, const DriverSpec& spec, double T,
                                   const std::vector<Index>& step_counts, Index M,
                                   const std::vector<double>& X0, Scheme scheme,
                                   const ReferenceFn& reference, double p, double q) {
    if (step_counts.empty()) throw std::invalid_argument("convergence_study: no refinements");
    Index finest = 0;
    for (Index s : step_counts) finest = std::max(finest, s);
    for (Index s : step_counts)
        if (finest % s != 0)
            throw std::invalid_argument("convergence_study: step counts must divide the finest");

    auto fine_grid = std::make_shared<TimeGrid>(TimeGrid::uniform(T, finest + 1));
    RoughSetup fine_setup(spec, fine_grid, M, p, q, CrossMode::OnDemand);

    const std::vector<double> ref = reference(fine_setup);
    const Index d = field.state_dim();
    const auto& weights = fine_setup.weights();

    ConvergenceTable table;
    for (Index s : step_counts) {
        const Index stride = finest / s;
        auto grid = std::make_shared<TimeGrid>(TimeGrid::uniform(T, s + 1));
        Ensemble coarse;
        coarse.weights = fine_setup.weights();
        for (Index i = 0; i < M; ++i) {
            GridPath pth(grid, fine_setup.driver_dim());
            for (Index k = 0; k <= s; ++k)
                for (Index c = 0; c < fine_setup.driver_dim(); ++c)
                    pth.value(k, c) = fine_setup.level1().members[i].value(k * stride, c);
            coarse.members.push_back(std::move(pth));
        }
        RoughSetup setup(spec, grid, std::move(coarse), p, q, CrossMode::OnDemand);

        SolveConfig cfg;
        cfg.field = &field;
        cfg.setup = &setup;
        cfg.X0 = X0;
        cfg.scheme = scheme;
        Solution sol =
            (scheme == Scheme::ExplicitStep) ? explicit_step_solve(cfg) : picard_solve(cfg);

        double strong = 0.0, mean_num = 0.0, mean_ref = 0.0;
        for (Index i = 0; i < M; ++i) {
            const double* xt = sol.X[i].at(s);
            const double* rt = ref.data() + i * d;
            double d2 = 0.0;
            for (Index c = 0; c < d; ++c) d2 += (xt[c] - rt[c]) * (xt[c] - rt[c]);
            strong += weights[i] * d2;
            mean_num += weights[i] * xt[0];
            mean_ref += weights[i] * rt[0];
        }
        table.rows.push_back({s, T / static_cast<double>(s), std::sqrt(strong),
                              std::fabs(mean_num - mean_ref)});
    }
    std::sort(table.rows.begin(), table.rows.end(),
              [](const ConvergenceRow& a, const ConvergenceRow& b) { return a.h < b.h; });
    if (table.rows.size() >= 3) {
        std::vector<double> hs, se, we;
        for (const auto& r : table.rows) {
            hs.push_back(r.h);
            se.push_back(r.strong_error);
            we.push_back(r.weak_error);
        }
        table.strong_slope = fit_log_slope(hs, se);
        table.weak_slope = fit_log_slope(hs, we);
        table.fitted = std::isfinite(table.strong_slope);
    }
    return table;
}

}  // namespace mfrde
