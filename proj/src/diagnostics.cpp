#include "mfrde/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "mfrde/solver.hpp"

namespace mfrde {

TailReport tail_estimate(std::vector<double> samples, Index min_tail_count) {
    TailReport rep;
    const Index n = samples.size();
    if (n == 0) return rep;
    rep.reliable = n >= 64;
    std::sort(samples.begin(), samples.end());
    rep.degenerate = samples.front() == samples.back();
    if (rep.degenerate) return rep;

    // survival S(v) = P(sample >= v) at the distinct values
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j < n && samples[j] == samples[i]) ++j;
        const Index above = n - i;  // samples >= value
        if (above >= min_tail_count) {
            TailPoint pt;
            pt.level = samples[i];
            pt.survival = static_cast<double>(above) / static_cast<double>(n);
            pt.log_survival = std::log(pt.survival);
            rep.points.push_back(pt);
        }
        i = j;
    }
    if (rep.points.size() < 2) return rep;

    for (Index k = 0; k + 1 < rep.points.size(); ++k) {
        const double dn = rep.points[k + 1].level - rep.points[k].level;
        rep.decay_slopes.push_back(
            -(rep.points[k + 1].log_survival - rep.points[k].log_survival) / dn);
    }
    rep.concave_log_survival = true;
    for (Index k = 0; k + 1 < rep.decay_slopes.size(); ++k)
        if (rep.decay_slopes[k + 1] < rep.decay_slopes[k] * (1.0 - 1e-12))
            rep.concave_log_survival = false;

    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        Index cnt = 0;
        for (const auto& pt : rep.points) {
            sx += pt.level;
            sy += pt.log_survival;
            sxx += pt.level * pt.level;
            sxy += pt.level * pt.log_survival;
            ++cnt;
        }
        const double den = cnt * sxx - sx * sx;
        rep.log_linear_slope = (den != 0.0) ? (cnt * sxy - sx * sy) / den : 0.0;
    }
    {
        std::vector<double> xs, ys;
        for (const auto& pt : rep.points) {
            if (pt.level > 0.0 && pt.survival < 1.0) {
                xs.push_back(pt.level);
                ys.push_back(-pt.log_survival);
            }
        }
        rep.log_log_slope = fit_log_slope(xs, ys);
    }
    return rep;
}

}  // namespace mfrde
