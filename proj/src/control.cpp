#include "mfrde/control.hpp"

#include <cmath>
#include <stdexcept>

namespace mfrde {

namespace {

// deterministic subsample of {0..count-1}, evenly strided
std::vector<Index> strided_subset(Index count, Index want) {
    std::vector<Index> out;
    if (count <= want) {
        out.resize(count);
        for (Index i = 0; i < count; ++i) out[i] = i;
        return out;
    }
    out.reserve(want);
    for (Index k = 0; k < want; ++k) out.push_back((k * count) / want);
    return out;
}

}  // namespace

ControlTable::ControlTable(const RoughSetup& setup, ControlConfig cfg)
    : setup_(setup), cfg_(cfg), n_(setup.grid().size()), M_(setup.particles()), p_(setup.p()),
      q_(setup.q()) {
    build_cross_moment_tables();

    const Ensemble& paths = setup_.level1();
    const Index m = setup_.driver_dim();

    t_level1_.resize(M_);
    t_level2_.resize(M_);
    t_cross_left_.resize(M_);
    t_cross_right_.resize(M_);

    // diagonal second-level simplex tables, one per particle
    std::vector<TwoIndexArray> diag;
    diag.reserve(M_);
    for (Index i = 0; i < M_; ++i) diag.push_back(setup_.pair_simplex_table(i, i));
    auto diag_shared = std::make_shared<std::vector<TwoIndexArray>>(std::move(diag));

    for (Index i = 0; i < M_; ++i) {
        t_level1_[i] = std::make_unique<VariationTable>(
            [&paths, i, m](Index a, Index b) {
                double s = 0.0;
                for (Index c = 0; c < m; ++c) {
                    const double d = paths.members[i].value(b, c) - paths.members[i].value(a, c);
                    s += d * d;
                }
                return std::sqrt(s);
            },
            p_, n_);
        t_level2_[i] = std::make_unique<VariationTable>(
            [diag_shared, i, m](Index a, Index b) {
                return l2_norm((*diag_shared)[i].at(a, b), m * m);
            },
            p_ / 2.0, n_);
        t_cross_left_[i] = std::make_unique<VariationTable>(
            [this, i](Index a, Index b) { return cross_left_[i][cell(a, b)]; }, p_ / 2.0, n_);
        t_cross_right_[i] = std::make_unique<VariationTable>(
            [this, i](Index a, Index b) { return cross_right_[i][cell(a, b)]; }, p_ / 2.0, n_);
    }

    t_level1_lq_ = std::make_unique<VariationTable>(
        [this, &paths, m](Index a, Index b) {
            double s = 0.0;
            for (Index i = 0; i < M_; ++i) {
                double d2 = 0.0;
                for (Index c = 0; c < m; ++c) {
                    const double d = paths.members[i].value(b, c) - paths.members[i].value(a, c);
                    d2 += d * d;
                }
                s += paths.weights[i] * std::pow(std::sqrt(d2), q_);
            }
            return std::pow(s, 1.0 / q_);
        },
        p_, n_);
    t_cross_both_ = std::make_unique<VariationTable>(
        [this](Index a, Index b) { return cross_both_[cell(a, b)]; }, p_ / 2.0, n_);
    t_onevar_ = std::make_unique<VariationTable>(
        [this](Index a, Index b) { return vq(a, b); }, 1.0, n_);
}

void ControlTable::build_cross_moment_tables() {
    const Index m = setup_.driver_dim();
    const Index bs = m * m;
    const auto& weights = setup_.weights();

    cross_left_.assign(M_, std::vector<double>(n_ * n_, 0.0));
    cross_right_.assign(M_, std::vector<double>(n_ * n_, 0.0));
    cross_both_.assign(n_ * n_, 0.0);

    const bool subsampled = M_ > cfg_.subsample_threshold;
    const std::vector<Index> inner =
        subsampled ? strided_subset(M_, cfg_.subsample) : strided_subset(M_, M_);
    const double inner_w = subsampled ? 1.0 / static_cast<double>(inner.size()) : -1.0;

    auto accumulate_pair = [&](Index i, Index j, std::vector<double>* left,
                               std::vector<double>* right, double wl, double wr, double wb) {
        TwoIndexArray tab = setup_.pair_simplex_table(i, j);
        for (Index a = 0; a < n_; ++a)
            for (Index b = a + 1; b < n_; ++b) {
                const double g = std::pow(l2_norm(tab.at(a, b), bs), q_);
                if (left) (*left)[cell(a, b)] += wl * g;
                if (right) (*right)[cell(a, b)] += wr * g;
                if (wb > 0.0) cross_both_[cell(a, b)] += wb * g;
            }
    };

    if (!subsampled) {
        // one sweep over all ordered pairs feeds the two one-sided sections
        // and the double moment
        for (Index i = 0; i < M_; ++i)
            for (Index j = 0; j < M_; ++j)
                accumulate_pair(i, j, &cross_left_[i], &cross_right_[j], weights[j], weights[i],
                                weights[i] * weights[j]);
    } else {
        for (Index i = 0; i < M_; ++i)
            for (Index j : inner) {
                accumulate_pair(i, j, &cross_left_[i], nullptr, inner_w, 0.0, 0.0);
                accumulate_pair(j, i, nullptr, &cross_right_[i], 0.0, inner_w, 0.0);
            }
        const std::vector<Index> pairs = strided_subset(M_ * M_, cfg_.subsample);
        const double pw = 1.0 / static_cast<double>(pairs.size());
        for (Index pk : pairs) accumulate_pair(pk / M_, pk % M_, nullptr, nullptr, 0.0, 0.0, pw);
    }

    const double inv_q = 1.0 / q_;
    for (Index i = 0; i < M_; ++i)
        for (Index c = 0; c < n_ * n_; ++c) {
            cross_left_[i][c] = std::pow(cross_left_[i][c], inv_q);
            cross_right_[i][c] = std::pow(cross_right_[i][c], inv_q);
        }
    for (Index c = 0; c < n_ * n_; ++c) cross_both_[c] = std::pow(cross_both_[c], inv_q);
}

double ControlTable::v(Index particle, Index a, Index b) const {
    if (a == b) return 0.0;
    return t_level1_[particle]->power_sum(a, b) + t_level1_lq_->power_sum(a, b) +
           t_level2_[particle]->power_sum(a, b) + t_cross_left_[particle]->power_sum(a, b) +
           t_cross_right_[particle]->power_sum(a, b) + t_cross_both_->power_sum(a, b);
}

double ControlTable::vq(Index a, Index b) const {
    if (a == b) return 0.0;
    const auto& weights = setup_.weights();
    double s = 0.0;
    for (Index i = 0; i < M_; ++i) s += weights[i] * std::pow(v(i, a, b), q_);
    return std::pow(s, 1.0 / q_);
}

double ControlTable::onevar(Index a, Index b) const {
    if (a == b) return 0.0;
    return t_onevar_->power_sum(a, b);
}

double ControlTable::w(Index particle, Index a, Index b) const {
    if (a == b) return 0.0;
    return v(particle, a, b) + onevar(a, b);
}

StepControlEnvelope::StepControlEnvelope(const RoughSetup& setup, ControlConfig)
    : setup_(setup), n_(setup.grid().size()) {
    const Index M = setup.particles();
    const Index m = setup.driver_dim();
    const Index steps = n_ - 1;
    const double p = setup.p();
    const double q = setup.q();
    const auto& weights = setup.weights();

    step_v_.assign(M * steps, 0.0);
    step_vq_.assign(steps, 0.0);

    std::vector<double> dw(M), diag_norm(M), buf(m), block(m * m);
    for (Index k = 0; k < steps; ++k) {
        double lq_dw = 0.0;   // sum_j w_j |dW_j|^q
        double lq_dwq = 0.0;  // sum_j w_j^2 |dW_j|^{2q}, for the exact double moment
        for (Index j = 0; j < M; ++j) {
            setup.increment(j, k, k + 1, buf.data());
            dw[j] = l2_norm(buf.data(), m);
            setup.second_level(j, k, k + 1, block.data());
            diag_norm[j] = l2_norm(block.data(), m * m);
            lq_dw += weights[j] * std::pow(dw[j], q);
            lq_dwq += weights[j] * weights[j] * std::pow(dw[j], 2.0 * q);
        }
        // On one cell the cross block is 1/2 dW_i (x) dW_j, so its Frobenius
        // norm is 1/2 |dW_i||dW_j| and all the L^q moments close in O(M).
        const double half_q = std::pow(0.5, q);
        double diag_q = 0.0;  // sum_i w_i^2 |diag_i|^q
        for (Index i = 0; i < M; ++i)
            diag_q += weights[i] * weights[i] * std::pow(diag_norm[i], q);
        const double both_q = half_q * (lq_dw * lq_dw - lq_dwq) + diag_q;
        const double cross_both = std::pow(std::max(both_q, 0.0), 1.0 / q);

        double vq_acc = 0.0;
        for (Index i = 0; i < M; ++i) {
            const double own_q = weights[i] * std::pow(dw[i], q);
            const double left_q = half_q * std::pow(dw[i], q) * (lq_dw - own_q) +
                                  weights[i] * std::pow(diag_norm[i], q);
            const double right_q = left_q;  // |cross(i,j)| = |cross(j,i)| cellwise
            const double vi = std::pow(dw[i], p) + std::pow(std::pow(lq_dw, 1.0 / q), p) +
                              std::pow(diag_norm[i], p / 2.0) +
                              std::pow(std::pow(left_q, 1.0 / q), p / 2.0) +
                              std::pow(std::pow(right_q, 1.0 / q), p / 2.0) +
                              std::pow(cross_both, p / 2.0);
            step_v_[i * steps + k] = vi;
            vq_acc += weights[i] * std::pow(vi, q);
        }
        step_vq_[k] = std::pow(vq_acc, 1.0 / q);
    }

    prefix_.assign(M * n_, 0.0);
    for (Index i = 0; i < M; ++i)
        for (Index k = 0; k < steps; ++k)
            prefix_[i * n_ + k + 1] = prefix_[i * n_ + k] + step_v_[i * steps + k] + step_vq_[k];
}

double StepControlEnvelope::step_v(Index particle, Index k) const {
    return step_v_[particle * (n_ - 1) + k];
}

double StepControlEnvelope::step_vq(Index k) const { return step_vq_[k]; }

double StepControlEnvelope::w(Index particle, Index a, Index b) const {
    if (a > b || b >= n_) throw std::out_of_range("StepControlEnvelope: bad window");
    return prefix_[particle * n_ + b] - prefix_[particle * n_ + a];
}

}  // namespace mfrde
