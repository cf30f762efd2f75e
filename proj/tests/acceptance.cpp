// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and runtime budgets are pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mfrde/controlled.hpp"
#include "mfrde/diagnostics.hpp"
#include "mfrde/solver.hpp"

using namespace mfrde;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail,
            double elapsed_s, double budget_s) {
    const bool in_budget = elapsed_s < budget_s;
    if (!pass || !in_budget) ++g_failures;
    std::printf("[%s] %2d %-28s %s (%.2fs / %.0fs)\n",
                (pass && in_budget) ? "PASS" : "FAIL", number, name.c_str(), detail.c_str(),
                elapsed_s, budget_s);
    std::fflush(stdout);
}

template <typename F>
void criterion(int number, const std::string& name, double budget_s, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
        pass = body(detail);
    } catch (const std::exception& err) {
        detail = std::string("exception: ") + err.what();
    }
    const double elapsed = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    report(number, name, pass, detail, elapsed, budget_s);
}

GridPtr uniform_grid(double T, Index n) {
    return std::make_shared<TimeGrid>(TimeGrid::uniform(T, n));
}

DriverSpec brownian(Index m, std::uint64_t seed,
                    SecondLevelConvention conv = SecondLevelConvention::StratonovichLinear) {
    DriverSpec s;
    s.kind = DriverKind::Brownian;
    s.dimension = m;
    s.seed = seed;
    s.convention = conv;
    return s;
}

ControlledFamily driver_as_controlled(const RoughSetup& setup, double (*phi)(double),
                                      double (*dphi)(double)) {
    const Index M = setup.particles();
    ControlledFamily fam(setup.grid_ptr(), M, 1, 1);
    for (Index i = 0; i < M; ++i)
        for (Index k = 0; k < setup.grid().size(); ++k) {
            const double w = setup.level1().members[i].value(k, 0);
            fam.base[i].value(k, 0) = phi(w);
            fam.dx[i].value(k, 0) = dphi(w);
        }
    return fam;
}

double ident(double x) { return x; }
double one(double) { return 1.0; }

std::vector<double> gaussian_initial(Index M, double mean, double std, std::uint64_t seed) {
    Rng rng = Rng(seed).labeled("initial");
    std::vector<double> x(M);
    for (auto& v : x) v = mean + std * rng.normal();
    return x;
}

// ---------------------------------------------------------------- criteria

bool chen_exactness(std::string& detail) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (Index M : {Index(1), Index(8)})
            for (Index steps : {Index(16), Index(64)}) {
                RoughSetup setup(brownian(2, seed), uniform_grid(1.0, steps + 1), M, 2.5, 8.0,
                                 CrossMode::OnDemand);
                worst = std::max(worst, chen_residual(setup).max_residual());
            }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "max relative residual %.2e", worst);
    detail = buf;
    return worst <= 1e-10;
}

bool pvariation_oracle(std::string& detail) {
    Rng rng(2024);
    Index checked = 0;
    for (Index n = 2; n <= 8; ++n) {
        for (int trial = 0; trial < 100; ++trial) {
            auto grid = uniform_grid(1.0, n);
            std::vector<double> vals(n);
            for (auto& v : vals) v = 2.0 * rng.uniform01() - 1.0;
            GridPath path(grid, 1, vals);
            const double p = 1.0 + 2.0 * rng.uniform01();
            auto norm = [&](Index i, Index j) { return std::fabs(vals[j] - vals[i]); };
            if (p_variation(path, 0, n - 1, p) != p_variation_brute_force(norm, 0, n - 1, p)) {
                detail = "mismatch at n=" + std::to_string(n);
                return false;
            }
            ++checked;
        }
    }
    detail = std::to_string(checked) + " grids, exact equality";
    return true;
}

bool control_contracts(std::string& detail) {
    const Index M = 4, n = 13;
    double worst_super = 0.0, worst_moment = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RoughSetup setup(brownian(1, 100 + seed), uniform_grid(1.0, n), M, 2.5, 8.0,
                         CrossMode::OnDemand);
        ControlTable ct(setup);
        const double q = setup.q();
        for (Index i = 0; i < M; ++i)
            for (Index r = 0; r < n; ++r)
                for (Index s = r; s < n; ++s)
                    for (Index t = s; t < n; ++t) {
                        const double defect =
                            ct.w(i, r, s) + ct.w(i, s, t) - ct.w(i, r, t);
                        worst_super = std::max(worst_super,
                                               defect / std::max(1.0, ct.w(i, r, t)));
                    }
        for (Index a = 0; a < n; ++a)
            for (Index b = a + 1; b < n; ++b) {
                double wq = 0.0;
                for (Index i = 0; i < M; ++i) wq += 0.25 * std::pow(ct.w(i, a, b), q);
                wq = std::pow(wq, 1.0 / q);
                for (Index i = 0; i < M; ++i)
                    worst_moment =
                        std::max(worst_moment, wq / (2.0 * ct.w(i, a, b)) - 1.0);
            }
    }
    char buf[100];
    std::snprintf(buf, sizeof(buf), "superadditivity defect %.2e, moment excess %.2e",
                  worst_super, worst_moment);
    detail = buf;
    return worst_super <= 1e-12 && worst_moment <= 1e-12;
}

bool accumulation_bound(std::string& detail) {
    // Provable transfer form N_{v1+v2}(alpha) <= N1(alpha/2) + N2(alpha/2);
    // the stronger max-form printed in the source text fails for concentrated
    // mass (see the unit suite), so the sum form is the asserted contract.
    Rng rng(7);
    const Index n = 14;
    Index max_form_holds = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> lin(n - 1), base(n - 1);
        for (auto& v : lin) v = rng.uniform01();
        for (auto& v : base) v = rng.uniform01();
        const double lam = 0.5 + rng.uniform01();
        const double beta = 1.0 + rng.uniform01();
        std::vector<double> lin2(n - 1), base2(n - 1);
        for (auto& v : lin2) v = rng.uniform01();
        for (auto& v : base2) v = rng.uniform01();
        const double lam2 = 0.5 + rng.uniform01();
        const double beta2 = 1.0 + rng.uniform01();
        auto eval = [&](const std::vector<double>& l, const std::vector<double>& b, double la,
                        double be, Index s, Index t) {
            double x = 0.0, y = 0.0;
            for (Index k = s; k < t; ++k) {
                x += l[k];
                y += b[k];
            }
            return x + la * std::pow(y, be);
        };
        auto v1 = [&](Index a, Index b) { return eval(lin, base, lam, beta, a, b); };
        auto v2 = [&](Index a, Index b) { return eval(lin2, base2, lam2, beta2, a, b); };
        auto sum = [&](Index a, Index b) { return v1(a, b) + v2(a, b); };
        const double alpha = 0.5 + 3.0 * rng.uniform01();
        const Index ns = local_accumulation(sum, n, 0, n - 1, alpha);
        const Index n1 = local_accumulation(v1, n, 0, n - 1, alpha / 2.0);
        const Index n2 = local_accumulation(v2, n, 0, n - 1, alpha / 2.0);
        if (n1 + n2 < ns) {
            detail = "sum form violated at trial " + std::to_string(trial);
            return false;
        }
        if (std::max(n1, n2) >= ns) ++max_form_holds;
    }
    detail = "sum form exact on 100 pairs (max form held on " +
             std::to_string(max_form_holds) + "/100)";
    return true;
}

bool sewing_rate(std::string& detail) {
    const Index M = 6, steps = 512;
    RoughSetup setup(brownian(1, 11), uniform_grid(1.0, steps + 1), M, 2.5, 8.0,
                     CrossMode::OnDemand);
    const double p = setup.p();

    // stated case: the driver controlled by itself telescopes exactly, so the
    // deviation must sit at the rounding floor on every window
    ControlledFamily YW = driver_as_controlled(setup, ident, one);
    double worst_exact = 0.0;
    for (Index len : {Index(8), Index(64), Index(448)})
        for (Index a = 0; a + len <= steps; a += 224) {
            std::vector<double> dev = germ_deviation(YW, setup, a, a + len);
            for (double v : dev) worst_exact = std::max(worst_exact, v);
        }
    if (worst_exact > 1e-12) {
        detail = "driver integrand not exact: " + std::to_string(worst_exact);
        return false;
    }

    // rate case: a remainder-bearing integrand meets the w^{3/p} sewing scale
    ControlledFamily Y = driver_as_controlled(setup, std::sin, std::cos);
    ControlTable control(setup);
    std::vector<double> ws, devs;
    double wmin = 1e300, wmax = 0.0;
    for (Index len : {Index(4), Index(8), Index(16), Index(32), Index(64), Index(128),
                      Index(256), Index(448)})
        for (Index a = 0; a + len <= steps; a += 224) {
            std::vector<double> dev = germ_deviation(Y, setup, a, a + len);
            for (Index i = 0; i < M; ++i) {
                const double w = control.w(i, a, a + len);
                ws.push_back(w);
                devs.push_back(dev[i]);
                wmin = std::min(wmin, w);
                wmax = std::max(wmax, w);
            }
        }
    const double slope = fit_log_slope(ws, devs);
    const double decades = std::log10(wmax / wmin);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "driver exact at %.1e; sin slope %.3f (need %.3f) over %.1f decades",
                  worst_exact, slope, 3.0 / p - 0.1, decades);
    detail = buf;
    return slope >= 3.0 / p - 0.1 && decades >= 2.0;
}

bool exact_identities(std::string& detail) {
    // deterministic ramp
    {
        auto grid = uniform_grid(1.0, 101);
        DriverSpec spec;
        spec.kind = DriverKind::Deterministic;
        spec.dimension = 1;
        GridPath lin(grid, 1);
        for (Index k = 0; k < 101; ++k) lin.value(k, 0) = (*grid)[k];
        spec.deterministic_table = lin;
        RoughSetup setup(spec, grid, Index(1), 2.5, 8.0, CrossMode::OnDemand);
        ControlledFamily Y = driver_as_controlled(setup, ident, one);
        std::vector<double> val = rough_integral_window(Y, setup, 0, 100, 60);
        if (std::fabs(val[0] - 0.5) > 1e-14) {
            detail = "ramp integral error " + std::to_string(std::fabs(val[0] - 0.5));
            return false;
        }
    }
    // geometric Brownian identity at three refinements
    const Index M = 64;
    std::vector<double> errs;
    for (Index steps : {Index(1024), Index(2048), Index(4096)}) {
        RoughSetup setup(brownian(1, 31), uniform_grid(1.0, steps + 1), M, 2.5, 8.0,
                         CrossMode::OnDemand);
        ControlledFamily Y = driver_as_controlled(setup, ident, one);
        std::vector<double> val = rough_integral_window(Y, setup, 0, steps, 60);
        double worst = 0.0;
        for (Index i = 0; i < M; ++i) {
            const double wT = setup.level1().members[i].value(steps, 0);
            worst = std::max(worst, std::fabs(val[i] - 0.5 * wT * wT));
        }
        errs.push_back(worst);
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "ramp exact; strat errors %.2e %.2e %.2e", errs[0], errs[1],
                  errs[2]);
    detail = buf;
    // decreasing under refinement, clamped at the rounding floor
    const double floor = 1e-12;
    const bool decreasing = errs[1] <= errs[0] + floor && errs[2] <= errs[1] + floor;
    return errs[2] <= 1e-3 && decreasing;
}

bool lions_checks(std::string& detail) {
    Rng rng(501);
    const Index M = 16;
    std::vector<double> cloud(M), weights(M, 1.0 / M), x{0.4};
    for (auto& v : cloud) v = 2.0 * rng.uniform01() - 1.0;

    double worst = 0.0;
    auto gm = make_g_of_mean_field(1, "sin", 0.9, 0.1, 0.8);
    auto ck = make_conv_kernel_field(1, 0.8, 0.6);
    auto sm = make_second_moment_field(1);
    for (const MeanFieldField* f : {gm.get(), ck.get(), sm.get()}) {
        auto rep = lions_derivative_check(*f, cloud, weights, x, 1e-6);
        worst = std::max(worst, rep.max_rel_error);
        if (!rep.pass) {
            detail = "field " + f->name() + " rel error " + std::to_string(rep.max_rel_error);
            return false;
        }
    }
    // the worked example: derivative of the second moment at z is 2z
    EmpiricalMeasure mu(cloud.data(), weights.data(), M, 1);
    for (Index j = 0; j < M; ++j) {
        double d;
        sm->dmu(x.data(), mu, cloud.data() + j, &d);
        if (std::fabs(d - 2.0 * cloud[j]) > 1e-12) {
            detail = "second-moment derivative is not 2z";
            return false;
        }
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "3 fields, max rel error %.2e", worst);
    detail = buf;
    return true;
}

bool mckean_vlasov_consistency(std::string& detail) {
    const Index M = 2048, steps = 256;
    const double T = 0.5;
    auto field = make_g_of_mean_field(1, "bilinear", 1.0, 1.0, 0.0);
    std::vector<double> X0 = gaussian_initial(M, 1.0, 0.2, 77);
    DriverSpec spec = brownian(1, 313, SecondLevelConvention::ItoCorrection);

    RoughSetup setup(spec, uniform_grid(T, steps + 1), M, 2.5, 8.0, CrossMode::OnDemand);
    SolveConfig cfg;
    cfg.field = field.get();
    cfg.setup = &setup;
    cfg.X0 = X0;
    Solution sol = explicit_step_solve(cfg);
    auto oracle = mckean_vlasov_oracle(*field, X0, setup, 8);

    double mr = 0.0, mo = 0.0;
    for (Index i = 0; i < M; ++i) {
        mr += sol.X[i].value(steps, 0) / M;
        mo += oracle[i].value(steps, 0) / M;
    }
    double vr = 0.0, vo = 0.0, m4 = 0.0;
    for (Index i = 0; i < M; ++i) {
        const double dr = sol.X[i].value(steps, 0) - mr;
        const double doo = oracle[i].value(steps, 0) - mo;
        vr += dr * dr / M;
        vo += doo * doo / M;
        m4 += doo * doo * doo * doo / M;
    }
    const double se_mean = std::sqrt(vo / M);
    const double se_var = std::sqrt(std::max(m4 - vo * vo, 0.0) / M);
    const bool mean_ok = std::fabs(mr - mo) <= 3.0 * se_mean;
    const bool var_ok = std::fabs(vr - vo) <= 3.0 * se_var;

    // Rate study against the refined oracle. The oracle is first order in the
    // mean square only through its substep resolution, so the refinement
    // levels must sit above that floor: 16/32/64 coarse steps against the
    // same 2048 effective oracle steps the stated 256 x 8 run uses.
    auto reference = [&](const RoughSetup& fine) {
        auto paths = mckean_vlasov_oracle(*field, X0, fine, 32);
        std::vector<double> out(M);
        const Index last = fine.grid().size() - 1;
        for (Index i = 0; i < M; ++i) out[i] = paths[i].value(last, 0);
        return out;
    };
    ConvergenceTable table = convergence_study(*field, spec, T, {16, 32, 64}, M, X0,
                                               Scheme::ExplicitStep, reference, 2.5, 8.0);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "mean gap %.2e (3se %.2e), var gap %.2e (3se %.2e), slope %.2f", mr - mo,
                  3.0 * se_mean, vr - vo, 3.0 * se_var, table.strong_slope);
    detail = buf;
    return mean_ok && var_ok && table.fitted && table.strong_slope >= 0.4;
}

bool exact_solution_rate(std::string& detail) {
    const Index M = 512;
    auto field = make_linear_x_field(1, 1.0);
    std::vector<double> X0(M, 1.0);
    auto reference = [&](const RoughSetup& fine) {
        std::vector<double> out(M);
        const Index last = fine.grid().size() - 1;
        for (Index i = 0; i < M; ++i)
            out[i] = std::exp(fine.level1().members[i].value(last, 0));
        return out;
    };
    ConvergenceTable table = convergence_study(*field, brownian(1, 1001), 1.0,
                                               {64, 128, 256, 512}, M, X0, Scheme::ExplicitStep,
                                               reference, 2.5, 8.0);
    char buf[120];
    std::snprintf(buf, sizeof(buf), "strong slope %.3f over 4 refinements",
                  table.strong_slope);
    detail = buf;
    return table.fitted && table.strong_slope >= 0.9;
}

bool picard_contraction(std::string& detail) {
    const Index M = 32, steps = 64;
    const double L = 1.0;
    std::vector<std::unique_ptr<MeanFieldField>> fields;
    fields.push_back(make_mean_field(1, 1.0));
    fields.push_back(make_conv_kernel_field(1, 0.8, 0.6));
    fields.push_back(make_g_of_mean_field(1, "sin", 0.9, 0.1, 0.8));

    std::string note;
    for (auto& field : fields) {
        RoughSetup setup(brownian(1, 2222), uniform_grid(0.5, steps + 1), M, 2.5, 8.0,
                         CrossMode::OnDemand);
        SolveConfig cfg;
        cfg.field = field.get();
        cfg.setup = &setup;
        cfg.X0 = gaussian_initial(M, 1.0, 0.2, 5);
        cfg.scheme = Scheme::Picard;
        cfg.picard.policy = WindowPolicy::Accumulation;
        cfg.picard.L = L;
        cfg.picard.exact_control = true;
        cfg.picard.tol = 1e-10;
        cfg.picard.max_iters = 80;

        ControlTable control(setup);
        std::vector<Index> bounds = picard_windows(cfg, control);
        const double alpha = 1.0 / (4.0 * L);
        for (Index w = 0; w + 1 < bounds.size(); ++w) {
            if (bounds[w + 1] != bounds[w] + 1) {  // non-forced windows obey the premise
                for (Index i = 0; i < M; ++i)
                    if (std::pow(control.w(i, bounds[w], bounds[w + 1]), 1.0 / setup.p()) >=
                        alpha) {
                        detail = "window premise violated";
                        return false;
                    }
            }
        }

        Solution sol = picard_solve(cfg);
        Index max_iters_seen = 0;
        for (const auto& win : sol.windows) {
            if (!win.converged) {
                detail = field->name() + ": window missed tol";
                return false;
            }
            max_iters_seen = std::max<Index>(max_iters_seen, win.residual_max.size());
            for (Index n2 = 1; n2 < win.residual_max.size(); ++n2) {
                if (!(win.residual_max[n2] < win.residual_max[n2 - 1]) &&
                    win.residual_max[n2] >= cfg.picard.tol) {
                    detail = field->name() + ": ratio >= 1 at iteration " + std::to_string(n2);
                    return false;
                }
            }
        }
        note += field->name() + "(" + std::to_string(sol.windows.size()) + "w," +
                std::to_string(max_iters_seen) + "it) ";
    }
    detail = "all ratios < 1 to 1e-10: " + note;
    return true;
}

bool cross_scheme_agreement(std::string& detail) {
    const Index M = 2048, steps = 256;
    const double T = 0.5;
    auto field = make_g_of_mean_field(1, "bilinear", 1.0, 1.0, 0.0);
    std::vector<double> X0 = gaussian_initial(M, 1.0, 0.2, 77);
    DriverSpec spec = brownian(1, 313, SecondLevelConvention::ItoCorrection);
    RoughSetup setup(spec, uniform_grid(T, steps + 1), M, 2.5, 8.0, CrossMode::OnDemand);

    SolveConfig cfg;
    cfg.field = field.get();
    cfg.setup = &setup;
    cfg.X0 = X0;
    Solution ex = explicit_step_solve(cfg);

    cfg.scheme = Scheme::Picard;
    cfg.picard.policy = WindowPolicy::Fixed;
    cfg.picard.fixed_h = T / 16.0;
    cfg.picard.tol = 1e-11;
    Solution pi = picard_solve(cfg);

    // Germ-scale budget: per particle, (1 + |||X|||^2) sum_k w_k^{3/p} with the
    // seminorm taken over the solve windows (where the sewing estimate acts).
    StepControlEnvelope env(setup);
    const double p = setup.p();
    const Index window_cells = 16;
    double worst_diff = 0.0, worst_bound = 0.0;
    for (Index i = 0; i < M; ++i) {
        double germ_mass = 0.0;
        for (Index k = 0; k < steps; ++k) germ_mass += std::pow(env.step_w(i, k), 3.0 / p);
        ControlledFamily fam(setup.grid_ptr(), 1, 1, 1);
        fam.base[0] = ex.X[i];
        fam.dx[0] = ex.dx[i];
        struct Wrap : Control {
            const StepControlEnvelope* env;
            Index particle;
            double w(Index, Index a, Index b) const override {
                return env->w(particle, a, b);
            }
        } wrap;
        wrap.env = &env;
        wrap.particle = i;
        double norm2 = 0.0;
        for (Index wa = 0; wa < steps; wa += steps / window_cells) {
            const TripleNorm tn =
                triple_norm(fam, 0, setup, wrap, wa, wa + steps / window_cells);
            norm2 = std::max(norm2, tn.seminorm() * tn.seminorm());
        }
        const double bound = 10.0 * (1.0 + norm2) * germ_mass;
        worst_bound = std::max(worst_bound, bound);
        worst_diff = std::max(worst_diff,
                              std::fabs(ex.X[i].value(steps, 0) - pi.X[i].value(steps, 0)));
    }
    char buf[140];
    std::snprintf(buf, sizeof(buf), "terminal gap %.3e vs bound %.3e", worst_diff, worst_bound);
    detail = buf;
    return worst_diff <= worst_bound;
}

bool tail_probe(std::string& detail) {
    const Index M = 512, steps = 64, batches = 64;
    const double alpha = 0.9;
    Rng master(909);
    std::vector<double> samples;
    samples.reserve(M * batches);
    for (Index b = 0; b < batches; ++b) {
        DriverSpec spec = brownian(1, master.labeled("tail-batch", b).next_u64());
        RoughSetup setup(spec, uniform_grid(1.0, steps + 1), M, 2.5, 8.0, CrossMode::OnDemand);
        StepControlEnvelope env(setup);
        for (Index i = 0; i < M; ++i) {
            auto varpi = [&](Index a, Index c) {
                return std::pow(env.w(i, a, c), 1.0 / setup.p());
            };
            samples.push_back(
                static_cast<double>(local_accumulation(varpi, steps + 1, 0, steps, alpha)));
        }
    }
    TailReport rep = tail_estimate(samples, 8);
    double lo = 1e300, hi = 0.0;
    for (double s : samples) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "N in [%g,%g], %zu survival points, slopes increasing: %s",
                  lo, hi, rep.points.size(), rep.concave_log_survival ? "yes" : "no");
    detail = buf;
    return rep.reliable && !rep.degenerate && rep.points.size() >= 4 &&
           rep.concave_log_survival;
}

}  // namespace

int main() {
    std::printf("acceptance suite\n----------------\n");
    criterion(1, "chen-exactness", 10.0, chen_exactness);
    criterion(2, "p-variation-oracle", 5.0, pvariation_oracle);
    criterion(3, "control-contracts", 30.0, control_contracts);
    criterion(4, "accumulation-bound", 5.0, accumulation_bound);
    criterion(5, "sewing-rate", 60.0, sewing_rate);
    criterion(6, "exact-identities", 60.0, exact_identities);
    criterion(7, "lions-derivatives", 10.0, lions_checks);
    criterion(8, "mckean-vlasov-consistency", 600.0, mckean_vlasov_consistency);
    criterion(9, "exact-solution-rate", 300.0, exact_solution_rate);
    criterion(10, "picard-contraction", 300.0, picard_contraction);
    criterion(11, "cross-scheme-agreement", 300.0, cross_scheme_agreement);
    criterion(12, "tail-probe", 300.0, tail_probe);
    std::printf("----------------\n%d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
