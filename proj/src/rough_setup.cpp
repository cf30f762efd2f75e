#include "mfrde/rough_setup.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mfrde {

void DriverSpec::validate() const {
    if (dimension < 1) throw std::invalid_argument("DriverSpec: dimension must be >= 1");
    if (kind == DriverKind::Fbm) {
        if (!(hurst > 1.0 / 3.0 && hurst <= 1.0))
            throw std::invalid_argument("DriverSpec: fbm requires hurst in (1/3, 1]");
    }
    if (kind == DriverKind::Deterministic && !deterministic_table)
        throw std::invalid_argument("DriverSpec: deterministic driver needs a path table");
    if (kind == DriverKind::Deterministic && time_augmented)
        throw std::invalid_argument(
            "DriverSpec: put the time coordinate in the deterministic table directly");
    if (convention == SecondLevelConvention::ItoCorrection && kind != DriverKind::Brownian)
        throw std::invalid_argument("DriverSpec: ito-correction only defined for brownian");
}

std::vector<double> fbm_covariance_matrix(double hurst, const TimeGrid& grid) {
    const Index n = grid.size() - 1;  // origin pinned at zero
    const double twoH = 2.0 * hurst;
    std::vector<double> R(n * n);
    for (Index r = 0; r < n; ++r) {
        const double s = grid[r + 1];
        for (Index c = 0; c < n; ++c) {
            const double t = grid[c + 1];
            R[r * n + c] =
                0.5 * (std::pow(s, twoH) + std::pow(t, twoH) - std::pow(std::fabs(t - s), twoH));
        }
    }
    return R;
}

namespace {

// In-place lower Cholesky with PSD tolerance: exactly semidefinite directions
// (e.g. H = 1) get a zero column instead of failing. A genuinely negative
// pivot is reported with its index.
void cholesky_psd(std::vector<double>& A, Index n) {
    double scale = 0.0;
    for (Index i = 0; i < n; ++i) scale = std::max(scale, std::fabs(A[i * n + i]));
    const double tol = 1e-12 * std::max(scale, 1.0);
    for (Index j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (Index k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (d < -tol)
            throw std::runtime_error("fbm covariance factorization failed at pivot " +
                                     std::to_string(j) + " (value " + std::to_string(d) + ")");
        if (d <= tol) {
            A[j * n + j] = 0.0;
            for (Index i = j + 1; i < n; ++i) A[i * n + j] = 0.0;
            continue;
        }
        const double l = std::sqrt(d);
        A[j * n + j] = l;
        for (Index i = j + 1; i < n; ++i) {
            double v = A[i * n + j];
            for (Index k = 0; k < j; ++k) v -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = v / l;
        }
        for (Index k = j + 1; k < n; ++k) A[j * n + k] = 0.0;
    }
}

}  // namespace

Ensemble sample_gaussian_driver(const DriverSpec& spec, GridPtr grid, Index M) {
    spec.validate();
    if (M < 1) throw std::invalid_argument("sample_gaussian_driver: M must be >= 1");
    const Index n = grid->size();
    const Index m = spec.dimension;
    const Index mt = spec.total_dimension();

    Ensemble e;
    e.weights = Ensemble::uniform_weights(M);
    e.members.reserve(M);

    auto append_time = [&](GridPath& p) {
        if (!spec.time_augmented) return;
        for (Index k = 0; k < n; ++k) p.value(k, mt - 1) = (*grid)[k];
    };

    if (spec.kind == DriverKind::Deterministic) {
        const GridPath& table = *spec.deterministic_table;
        if (table.points() != n || table.dim() != m)
            throw std::invalid_argument("sample_gaussian_driver: table shape mismatch");
        for (Index i = 0; i < M; ++i) {
            GridPath p(grid, m, table.raw());
            e.members.push_back(std::move(p));
        }
        return e;
    }

    if (spec.kind == DriverKind::Brownian) {
        Rng master(spec.seed);
        for (Index i = 0; i < M; ++i) {
            Rng rng = master.labeled("driver", i);
            GridPath p(grid, mt);
            for (Index k = 0; k + 1 < n; ++k) {
                const double sdt = std::sqrt(grid->spacing(k));
                for (Index a = 0; a < m; ++a)
                    p.value(k + 1, a) = p.value(k, a) + sdt * rng.normal();
            }
            append_time(p);
            e.members.push_back(std::move(p));
        }
        return e;
    }

    // fbm: dense factorization of the exact covariance, one factor shared by
    // all components and particles
    std::vector<double> L = fbm_covariance_matrix(spec.hurst, *grid);
    const Index nf = n - 1;
    cholesky_psd(L, nf);

    Rng master(spec.seed);
    std::vector<double> z(nf);
    for (Index i = 0; i < M; ++i) {
        Rng rng = master.labeled("driver", i);
        GridPath p(grid, mt);
        for (Index a = 0; a < m; ++a) {
            for (Index k = 0; k < nf; ++k) z[k] = rng.normal();
            for (Index r = 0; r < nf; ++r) {
                double v = 0.0;
                for (Index c = 0; c <= r; ++c) v += L[r * nf + c] * z[c];
                p.value(r + 1, a) = v;
            }
        }
        append_time(p);
        e.members.push_back(std::move(p));
    }
    return e;
}

void lift_piecewise_linear(const Ensemble& paths, Index i, Index j, Index a, Index b,
                           double* out) {
    const GridPath& wi = paths.members[i];
    const GridPath& wj = paths.members[j];
    const Index m = wi.dim();
    std::fill(out, out + m * m, 0.0);
    const double* wia = wi.at(a);
    for (Index k = a; k < b; ++k) {
        const double* u = wi.at(k);
        const double* un = wi.at(k + 1);
        const double* v = wj.at(k);
        const double* vn = wj.at(k + 1);
        for (Index r = 0; r < m; ++r) {
            const double left = u[r] - wia[r];
            const double di = un[r] - u[r];
            for (Index c = 0; c < m; ++c) {
                const double dj = vn[c] - v[c];
                out[r * m + c] += left * dj + 0.5 * di * dj;
            }
        }
    }
}

namespace {
void check_exponents(const DriverSpec& spec, double p, double q) {
    if (!(p >= 2.0 && p < 3.0)) throw std::invalid_argument("RoughSetup: p must lie in [2,3)");
    if (spec.kind == DriverKind::Fbm) {
        const double rho = 1.0 / (2.0 * spec.hurst);
        if (!(p > 2.0 * rho))
            throw std::invalid_argument("RoughSetup: fbm requires p in (2 rho, 3), rho = 1/(2H)");
    }
    if (q < 1.0) throw std::invalid_argument("RoughSetup: q must be >= 1");
}
}  // namespace

RoughSetup::RoughSetup(DriverSpec spec, GridPtr grid, Index M, double p, double q, CrossMode mode,
                       std::size_t memory_budget_bytes)
    : spec_(std::move(spec)), grid_(std::move(grid)), M_(M), m_(spec_.total_dimension()),
      p_(p), q_(q), mode_(mode) {
    spec_.validate();
    check_exponents(spec_, p_, q_);
    paths_ = sample_gaussian_driver(spec_, grid_, M_);
    if (mode_ == CrossMode::MaterializeSteps) materialize_steps(memory_budget_bytes);
}

RoughSetup::RoughSetup(DriverSpec spec, GridPtr grid, Ensemble paths, double p, double q,
                       CrossMode mode, std::size_t memory_budget_bytes)
    : spec_(std::move(spec)), grid_(std::move(grid)), M_(paths.size()),
      m_(spec_.total_dimension()), p_(p), q_(q), mode_(mode), paths_(std::move(paths)) {
    check_exponents(spec_, p_, q_);
    paths_.validate();
    if (paths_.members.front().dim() != m_)
        throw std::invalid_argument("RoughSetup: path dimension does not match spec");
    if (&paths_.members.front().grid() != grid_.get())
        throw std::invalid_argument("RoughSetup: paths not on the given grid");
    if (mode_ == CrossMode::MaterializeSteps) materialize_steps(memory_budget_bytes);
}

void RoughSetup::materialize_steps(std::size_t budget) {
    const Index steps = grid_->size() - 1;
    const std::size_t needed = std::size_t(M_) * M_ * steps * m_ * m_ * sizeof(double);
    if (needed > budget)
        throw std::runtime_error("RoughSetup: materialize-steps needs " + std::to_string(needed) +
                                 " bytes, budget is " + std::to_string(budget));
    step_cross_.assign(needed / sizeof(double), 0.0);
    const Index bs = m_ * m_;
    for (Index i = 0; i < M_; ++i)
        for (Index j = 0; j < M_; ++j)
            for (Index k = 0; k < steps; ++k)
                lift_piecewise_linear(paths_, i, j, k, k + 1,
                                      step_cross_.data() + ((i * M_ + j) * steps + k) * bs);
}

void RoughSetup::increment(Index i, Index a, Index b, double* out) const {
    paths_.members[i].increment(a, b, out);
}

void RoughSetup::second_level(Index i, Index a, Index b, double* out) const {
    lift_piecewise_linear(paths_, i, i, a, b, out);
    if (spec_.convention == SecondLevelConvention::ItoCorrection) {
        const double half_len = 0.5 * ((*grid_)[b] - (*grid_)[a]);
        for (Index r = 0; r < spec_.dimension; ++r) out[r * m_ + r] -= half_len;
    }
}

void RoughSetup::cross_level(Index i, Index j, Index a, Index b, double* out) const {
    if (i == j) {
        second_level(i, a, b, out);
        return;
    }
    lift_piecewise_linear(paths_, i, j, a, b, out);
}

void RoughSetup::cross_level_step(Index i, Index j, Index k, double* out) const {
    if (i == j) {
        second_level(i, k, k + 1, out);
        return;
    }
    if (!step_cross_.empty()) {
        const Index steps = grid_->size() - 1;
        const Index bs = m_ * m_;
        std::memcpy(out, step_cross_.data() + ((i * M_ + j) * steps + k) * bs,
                    bs * sizeof(double));
        return;
    }
    lift_piecewise_linear(paths_, i, j, k, k + 1, out);
}

TwoIndexArray RoughSetup::pair_simplex_table(Index i, Index j) const {
    const Index n = grid_->size();
    TwoIndexArray tab(grid_, m_, m_);
    const GridPath& wi = paths_.members[i];
    const GridPath& wj = paths_.members[j];
    // extend along rows: G_{a,b+1} = G_{a,b} + W^i_{a,b} (x) dW^j_b + 1/2 dW^i_b (x) dW^j_b
    std::vector<double> acc(m_ * m_);
    for (Index a = 0; a < n; ++a) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (Index b = a; b + 1 < n; ++b) {
            const double* ua = wi.at(a);
            const double* ub = wi.at(b);
            const double* ubn = wi.at(b + 1);
            const double* vb = wj.at(b);
            const double* vbn = wj.at(b + 1);
            for (Index r = 0; r < m_; ++r) {
                const double left = ub[r] - ua[r];
                const double di = ubn[r] - ub[r];
                for (Index c = 0; c < m_; ++c) {
                    const double dj = vbn[c] - vb[c];
                    acc[r * m_ + c] += left * dj + 0.5 * di * dj;
                }
            }
            double* dst = tab.at(a, b + 1);
            std::copy(acc.begin(), acc.end(), dst);
            if (i == j && spec_.convention == SecondLevelConvention::ItoCorrection) {
                const double half_len = 0.5 * ((*grid_)[b + 1] - (*grid_)[a]);
                for (Index r = 0; r < spec_.dimension; ++r) dst[r * m_ + r] -= half_len;
            }
        }
    }
    return tab;
}

RoughSetup build_setup(const DriverSpec& spec, GridPtr grid, Index M, double p, double q,
                       CrossMode mode, std::size_t memory_budget_bytes) {
    return RoughSetup(spec, std::move(grid), M, p, q, mode, memory_budget_bytes);
}

double default_p(const DriverSpec& spec) {
    if (spec.kind == DriverKind::Fbm) {
        const double rho = 1.0 / (2.0 * spec.hurst);
        return std::min(2.9, 0.5 * (2.0 * rho + 3.0));
    }
    return 2.5;
}

double ChenReport::max_residual() const {
    return std::max(std::max(line[0], line[1]), std::max(line[2], line[3]));
}

ChenReport chen_residual(const RoughSetup& setup) {
    const Index n = setup.grid().size();
    const Index M = setup.particles();
    const Index m = setup.driver_dim();
    const double q = setup.q();
    const auto& w = setup.weights();

    ChenReport rep;
    if (n < 3) return rep;

    // strict triples r < s < t
    std::vector<std::array<Index, 3>> triples;
    for (Index r = 0; r + 2 < n; ++r)
        for (Index s = r + 1; s + 1 < n; ++s)
            for (Index t = s + 1; t < n; ++t) triples.push_back({r, s, t});
    const Index nt = triples.size();

    std::vector<double> dWl(m), dWr(m);
    std::vector<double> res_q(nt), lhs_q(nt);          // per-integrand aggregation (line 2)
    std::vector<double> res_qq(nt, 0.0), lhs_qq(nt, 0.0);  // double aggregation (line 4)

    auto pair_residuals = [&](Index i, Index j, const TwoIndexArray& tab, Index t_idx,
                              double& res_norm, double& lhs_norm) {
        const auto [r, s, t] = triples[t_idx];
        setup.increment(i, r, s, dWl.data());
        setup.increment(j, s, t, dWr.data());
        const double* Grt = tab.at(r, t);
        const double* Grs = tab.at(r, s);
        const double* Gst = tab.at(s, t);
        double rs = 0.0, ls = 0.0;
        for (Index a = 0; a < m; ++a)
            for (Index b = 0; b < m; ++b) {
                const double lhs = Grt[a * m + b];
                const double d = lhs - Grs[a * m + b] - Gst[a * m + b] - dWl[a] * dWr[b];
                rs += d * d;
                ls += lhs * lhs;
            }
        res_norm = std::sqrt(rs);
        lhs_norm = std::sqrt(ls);
    };

    // pass grouped by integrator j: lines 1, 2 and 4
    for (Index j = 0; j < M; ++j) {
        std::fill(res_q.begin(), res_q.end(), 0.0);
        std::fill(lhs_q.begin(), lhs_q.end(), 0.0);
        for (Index i = 0; i < M; ++i) {
            TwoIndexArray tab = setup.pair_simplex_table(i, j);
            for (Index t_idx = 0; t_idx < nt; ++t_idx) {
                double rn, ln;
                pair_residuals(i, j, tab, t_idx, rn, ln);
                if (i == j) rep.line[0] = std::max(rep.line[0], rn / (1.0 + ln));
                res_q[t_idx] += w[i] * std::pow(rn, q);
                lhs_q[t_idx] += w[i] * std::pow(ln, q);
                res_qq[t_idx] += w[i] * w[j] * std::pow(rn, q);
                lhs_qq[t_idx] += w[i] * w[j] * std::pow(ln, q);
            }
        }
        for (Index t_idx = 0; t_idx < nt; ++t_idx) {
            const double rn = std::pow(res_q[t_idx], 1.0 / q);
            const double ln = std::pow(lhs_q[t_idx], 1.0 / q);
            rep.line[1] = std::max(rep.line[1], rn / (1.0 + ln));
        }
    }
    for (Index t_idx = 0; t_idx < nt; ++t_idx) {
        const double rn = std::pow(res_qq[t_idx], 1.0 / q);
        const double ln = std::pow(lhs_qq[t_idx], 1.0 / q);
        rep.line[3] = std::max(rep.line[3], rn / (1.0 + ln));
    }

    // pass grouped by integrand i: line 3 (sections with the integrator varying)
    for (Index i = 0; i < M; ++i) {
        std::fill(res_q.begin(), res_q.end(), 0.0);
        std::fill(lhs_q.begin(), lhs_q.end(), 0.0);
        for (Index j = 0; j < M; ++j) {
            TwoIndexArray tab = setup.pair_simplex_table(i, j);
            for (Index t_idx = 0; t_idx < nt; ++t_idx) {
                double rn, ln;
                pair_residuals(i, j, tab, t_idx, rn, ln);
                res_q[t_idx] += w[j] * std::pow(rn, q);
                lhs_q[t_idx] += w[j] * std::pow(ln, q);
            }
        }
        for (Index t_idx = 0; t_idx < nt; ++t_idx) {
            const double rn = std::pow(res_q[t_idx], 1.0 / q);
            const double ln = std::pow(lhs_q[t_idx], 1.0 / q);
            rep.line[2] = std::max(rep.line[2], rn / (1.0 + ln));
        }
    }
    return rep;
}

double covariance_rho_variation_check(const DriverSpec& spec, const TimeGrid& grid, double rho) {
    if (grid.size() > 13)
        throw std::invalid_argument("covariance_rho_variation_check: grid too large (<= 13)");
    if (rho < 1.0) throw std::invalid_argument("covariance_rho_variation_check: rho must be >= 1");

    const double H = (spec.kind == DriverKind::Fbm) ? spec.hurst : 0.5;
    const bool constant = (spec.kind == DriverKind::Deterministic);
    const double twoH = 2.0 * H;
    auto cov = [&](double a, double b, double c, double d) {
        if (constant) return 0.0;
        // E[(W_b - W_a)(W_d - W_c)] for a one-dimensional component
        auto R = [&](double s, double t) {
            return 0.5 *
                   (std::pow(s, twoH) + std::pow(t, twoH) - std::pow(std::fabs(t - s), twoH));
        };
        return R(b, d) - R(b, c) - R(a, d) + R(a, c);
    };

    const Index n = grid.size();
    double K = 0.0;
    for (Index s = 0; s + 1 < n; ++s) {
        for (Index t = s + 1; t < n; ++t) {
            const Index interior = t - s - 1;
            const Index count = Index(1) << interior;
            std::vector<Index> cuts1, cuts2;
            double best = 0.0;
            for (Index m1 = 0; m1 < count; ++m1) {
                cuts1.clear();
                cuts1.push_back(s);
                for (Index k = 0; k < interior; ++k)
                    if (m1 & (Index(1) << k)) cuts1.push_back(s + 1 + k);
                cuts1.push_back(t);
                for (Index m2 = 0; m2 < count; ++m2) {
                    cuts2.clear();
                    cuts2.push_back(s);
                    for (Index k = 0; k < interior; ++k)
                        if (m2 & (Index(1) << k)) cuts2.push_back(s + 1 + k);
                    cuts2.push_back(t);
                    double sum = 0.0;
                    for (Index a = 0; a + 1 < cuts1.size(); ++a)
                        for (Index b = 0; b + 1 < cuts2.size(); ++b)
                            sum += std::pow(std::fabs(cov(grid[cuts1[a]], grid[cuts1[a + 1]],
                                                          grid[cuts2[b]], grid[cuts2[b + 1]])),
                                            rho);
                    if (sum > best) best = sum;
                }
            }
            const double len = grid[t] - grid[s];
            K = std::max(K, best / len);
        }
    }
    return K;
}

}  // namespace mfrde
