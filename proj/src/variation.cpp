#include "mfrde/variation.hpp"

#include <cmath>
#include <stdexcept>

namespace mfrde {

VariationTable::VariationTable(IncrementNorm norm, double exponent, Index n_points)
    : norm_(std::move(norm)), exponent_(exponent), n_(n_points) {
    if (exponent_ < 1.0) throw std::invalid_argument("VariationTable: exponent must be >= 1");
}

const std::vector<double>& VariationTable::row(Index a) const {
    auto it = rows_.find(a);
    if (it != rows_.end()) return it->second;
    std::vector<double> V(n_ - a, 0.0);
    for (Index j = a + 1; j < n_; ++j) {
        double best = 0.0;
        for (Index i = a; i < j; ++i) {
            const double cand = V[i - a] + std::pow(norm_(i, j), exponent_);
            if (cand > best) best = cand;
        }
        V[j - a] = best;
    }
    return rows_.emplace(a, std::move(V)).first->second;
}

double VariationTable::power_sum(Index a, Index b) const {
    if (a > b || b >= n_) throw std::out_of_range("VariationTable: bad window");
    if (a == b) return 0.0;
    return row(a)[b - a];
}

double VariationTable::variation(Index a, Index b) const {
    return std::pow(power_sum(a, b), 1.0 / exponent_);
}

double p_variation(const GridPath& g, Index a, Index b, double p) {
    if (p < 1.0) throw std::invalid_argument("p_variation: p must be >= 1");
    if (a > b || b >= g.points()) throw std::out_of_range("p_variation: bad window");
    std::vector<double> buf(g.dim());
    VariationTable t(
        [&g, &buf](Index i, Index j) {
            g.increment(i, j, buf.data());
            return l2_norm(buf.data(), g.dim());
        },
        p, g.points());
    return t.variation(a, b);
}

double p_variation(const TwoIndexArray& g, Index a, Index b, double p) {
    if (p < 1.0) throw std::invalid_argument("p_variation: p must be >= 1");
    if (a > b || b >= g.grid().size()) throw std::out_of_range("p_variation: bad window");
    VariationTable t([&g](Index i, Index j) { return l2_norm(g.at(i, j), g.block_size()); }, p,
                     g.grid().size());
    return t.variation(a, b);
}

double empirical_lq(const std::vector<double>& abs_values, const std::vector<double>& weights,
                    double q) {
    double s = 0.0;
    for (Index i = 0; i < abs_values.size(); ++i) s += weights[i] * std::pow(abs_values[i], q);
    return std::pow(s, 1.0 / q);
}

double lq_p_variation(const Ensemble& e, Index a, Index b, double p, double q) {
    if (p < 1.0) throw std::invalid_argument("lq_p_variation: p must be >= 1");
    if (q < 1.0) throw std::invalid_argument("lq_p_variation: q must be >= 1");
    e.validate();
    const Index n = e.members.front().points();
    if (a > b || b >= n) throw std::out_of_range("lq_p_variation: bad window");
    const Index dim = e.members.front().dim();
    std::vector<double> buf(dim), abs(e.size());
    VariationTable t(
        [&](Index i, Index j) {
            for (Index m = 0; m < e.size(); ++m) {
                e.members[m].increment(i, j, buf.data());
                abs[m] = l2_norm(buf.data(), dim);
            }
            return empirical_lq(abs, e.weights, q);
        },
        p, n);
    return t.variation(a, b);
}

double p_variation_brute_force(const IncrementNorm& norm, Index a, Index b, double p) {
    if (p < 1.0) throw std::invalid_argument("p_variation_brute_force: p must be >= 1");
    if (a == b) return 0.0;
    const Index interior = b - a - 1;
    if (interior > 24) throw std::invalid_argument("p_variation_brute_force: window too large");
    double best = 0.0;
    const Index count = Index(1) << interior;
    for (Index mask = 0; mask < count; ++mask) {
        double sum = 0.0;
        Index prev = a;
        for (Index k = 0; k < interior; ++k) {
            if (mask & (Index(1) << k)) {
                const Index pt = a + 1 + k;
                sum += std::pow(norm(prev, pt), p);
                prev = pt;
            }
        }
        sum += std::pow(norm(prev, b), p);
        if (sum > best) best = sum;
    }
    return std::pow(best, 1.0 / p);
}

std::vector<Index> accumulation_times(const IncrementNorm& varpi, Index n_points, Index s,
                                      double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("accumulation_times: alpha must be positive");
    if (s >= n_points) throw std::out_of_range("accumulation_times: bad start index");
    std::vector<Index> taus{s};  // tau_0
    Index cur = s;
    while (true) {
        Index next = n_points;  // sentinel: no crossing
        for (Index u = cur; u < n_points; ++u) {
            if (varpi(cur, u) >= alpha) {
                next = u;
                break;
            }
        }
        if (next == n_points) break;
        if (next == cur)
            throw std::runtime_error("accumulation_times: varpi(u,u) >= alpha, sequence stalls");
        taus.push_back(next);
        cur = next;
    }
    return taus;
}

Index local_accumulation(const IncrementNorm& varpi, Index n_points, Index s, Index t,
                         double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("local_accumulation: alpha must be positive");
    if (s > t || t >= n_points) throw std::out_of_range("local_accumulation: bad window");
    Index count = 0;
    Index cur = s;
    while (true) {
        Index next = n_points;
        for (Index u = cur; u <= t; ++u) {
            if (varpi(cur, u) >= alpha) {
                next = u;
                break;
            }
        }
        if (next == n_points) break;
        if (next == cur)
            throw std::runtime_error("local_accumulation: varpi(u,u) >= alpha, sequence stalls");
        ++count;
        cur = next;
    }
    return count;
}

}  // namespace mfrde
