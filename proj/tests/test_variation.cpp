#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfrde/diagnostics.hpp"
#include "mfrde/rng.hpp"
#include "mfrde/variation.hpp"

using namespace mfrde;

namespace {

GridPtr uniform_grid(double T, Index n) {
    return std::make_shared<TimeGrid>(TimeGrid::uniform(T, n));
}

GridPath scalar_path(GridPtr g, std::vector<double> vals) {
    return GridPath(std::move(g), 1, std::move(vals));
}

}  // namespace

TEST_CASE("p-variation of simple paths") {
    auto g3 = uniform_grid(1.0, 3);

    SUBCASE("constant path vanishes for any p") {
        GridPath c = scalar_path(g3, {2.0, 2.0, 2.0});
        CHECK(p_variation(c, 0, 2, 1.0) == 0.0);
        CHECK(p_variation(c, 0, 2, 2.0) == 0.0);
        CHECK(p_variation(c, 0, 2, 2.5) == 0.0);
    }
    SUBCASE("zigzag (0,1,0) with p = 2 picks the fine dissection") {
        GridPath z = scalar_path(g3, {0.0, 1.0, 0.0});
        CHECK(p_variation(z, 0, 2, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    }
    SUBCASE("monotone path with p = 1 gives the total rise") {
        auto g4 = uniform_grid(1.0, 4);
        GridPath mono = scalar_path(g4, {0.0, 1.0, 2.0, 3.0});
        CHECK(p_variation(mono, 0, 3, 1.0) == doctest::Approx(3.0).epsilon(1e-15));
    }
    SUBCASE("degenerate window is zero") {
        GridPath z = scalar_path(g3, {0.0, 1.0, 0.0});
        CHECK(p_variation(z, 1, 1, 2.0) == 0.0);
    }
    SUBCASE("parameter validation") {
        GridPath z = scalar_path(g3, {0.0, 1.0, 0.0});
        CHECK_THROWS_AS(p_variation(z, 0, 2, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(p_variation(z, 2, 0, 2.0), std::out_of_range);
    }
}

TEST_CASE("dynamic program matches exhaustive dissection enumeration") {
    Rng rng(91);
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 3 + (rng.next_u64() % 6);  // 3..8 points
        auto g = uniform_grid(1.0, n);
        std::vector<double> vals(n);
        for (auto& v : vals) v = 2.0 * rng.uniform01() - 1.0;
        GridPath path = scalar_path(g, vals);
        const double p = 1.0 + 2.0 * rng.uniform01();

        auto norm = [&](Index i, Index j) { return std::fabs(vals[j] - vals[i]); };
        const double brute = p_variation_brute_force(norm, 0, n - 1, p);
        const double dp = p_variation(path, 0, n - 1, p);
        CHECK(dp == brute);  // same finite max over the same float sums
    }
}

TEST_CASE("L^q p-variation across an ensemble") {
    auto g2 = uniform_grid(1.0, 2);

    SUBCASE("identical members reduce to the single-path value") {
        auto g5 = uniform_grid(1.0, 5);
        std::vector<double> vals{0.0, 0.7, 0.2, 0.9, 0.4};
        Ensemble e;
        for (int i = 0; i < 3; ++i) e.members.push_back(scalar_path(g5, vals));
        e.weights = Ensemble::uniform_weights(3);
        const double single = p_variation(e.members[0], 0, 4, 2.5);
        CHECK(lq_p_variation(e, 0, 4, 2.5, 8.0) == doctest::Approx(single).epsilon(1e-13));
    }
    SUBCASE("two opposite unit increments, q = 2, p = 1") {
        Ensemble e;
        e.members.push_back(scalar_path(g2, {0.0, 1.0}));
        e.members.push_back(scalar_path(g2, {0.0, -1.0}));
        e.weights = Ensemble::uniform_weights(2);
        CHECK(lq_p_variation(e, 0, 1, 1.0, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("random ensemble matches the brute-force oracle") {
        Rng rng(17);
        auto g5 = uniform_grid(1.0, 5);
        for (int trial = 0; trial < 20; ++trial) {
            Ensemble e;
            for (int mem = 0; mem < 4; ++mem) {
                std::vector<double> vals(5);
                for (auto& v : vals) v = 2.0 * rng.uniform01() - 1.0;
                e.members.push_back(scalar_path(g5, vals));
            }
            e.weights = Ensemble::uniform_weights(4);
            const double p = 1.0 + 2.0 * rng.uniform01();
            const double q = 1.0 + 7.0 * rng.uniform01();
            auto norm = [&](Index i, Index j) {
                std::vector<double> abs(4);
                for (Index mem = 0; mem < 4; ++mem)
                    abs[mem] = std::fabs(e.members[mem].value(j, 0) - e.members[mem].value(i, 0));
                return empirical_lq(abs, e.weights, q);
            };
            CHECK(lq_p_variation(e, 0, 4, p, q) == p_variation_brute_force(norm, 0, 4, p));
        }
    }
    SUBCASE("q below one is rejected") {
        Ensemble e;
        e.members.push_back(scalar_path(g2, {0.0, 1.0}));
        e.weights = Ensemble::uniform_weights(1);
        CHECK_THROWS_AS(lq_p_variation(e, 0, 1, 2.0, 0.5), std::invalid_argument);
    }
}

TEST_CASE("greedy stopping times and local accumulation") {
    // varpi(s,t) = t - s on [0,1] with 11 uniform points
    const Index n = 11;
    auto varpi = [](Index a, Index b) { return 0.1 * static_cast<double>(b - a); };

    SUBCASE("crossings at 0.3, 0.6, 0.9") {
        auto taus = accumulation_times(varpi, n, 0, 0.3);
        REQUIRE(taus.size() == 4);
        CHECK(taus[0] == 0);
        CHECK(taus[1] == 3);
        CHECK(taus[2] == 6);
        CHECK(taus[3] == 9);
        CHECK(local_accumulation(varpi, n, 0, n - 1, 0.3) == 3);
    }
    SUBCASE("threshold above the total mass") {
        auto taus = accumulation_times(varpi, n, 0, 2.0);
        REQUIRE(taus.size() == 1);
        CHECK(taus[0] == 0);
        CHECK(local_accumulation(varpi, n, 0, n - 1, 2.0) == 0);
    }
    SUBCASE("alpha must be positive") {
        CHECK_THROWS_AS(accumulation_times(varpi, n, 0, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(local_accumulation(varpi, n, 0, n - 1, -1.0), std::invalid_argument);
    }
}

namespace {

// random superadditive two-index function: additive load plus a convex power
// of another additive load
struct SuperAdditive {
    std::vector<double> lin, pow_base;
    double lambda, beta;

    double operator()(Index a, Index b) const {
        double s = 0.0, t = 0.0;
        for (Index k = a; k < b; ++k) {
            s += lin[k];
            t += pow_base[k];
        }
        return s + lambda * std::pow(t, beta);
    }
};

SuperAdditive random_superadditive(Rng& rng, Index steps) {
    SuperAdditive f;
    f.lin.resize(steps);
    f.pow_base.resize(steps);
    for (auto& v : f.lin) v = rng.uniform01();
    for (auto& v : f.pow_base) v = rng.uniform01();
    f.lambda = 0.5 + rng.uniform01();
    f.beta = 1.0 + rng.uniform01();
    return f;
}

}  // namespace

TEST_CASE("greedy construction replay on random superadditive functions") {
    Rng rng(5);
    const Index n = 16;
    for (int trial = 0; trial < 50; ++trial) {
        SuperAdditive f = random_superadditive(rng, n - 1);
        const double alpha = 0.3 + 2.0 * rng.uniform01();
        auto varpi = [&f](Index a, Index b) { return f(a, b); };
        auto taus = accumulation_times(varpi, n, 0, alpha);
        for (Index k = 0; k + 1 < taus.size(); ++k) {
            CHECK(f(taus[k], taus[k + 1]) >= alpha);
            if (taus[k + 1] > taus[k] + 1) CHECK(f(taus[k], taus[k + 1] - 1) < alpha);
        }
        CHECK(local_accumulation(varpi, n, 0, n - 1, alpha) == taus.size() - 1);

        // nonincreasing in alpha, window-superadditive up to one interval
        const Index n1 = local_accumulation(varpi, n, 0, n - 1, alpha);
        const Index n2 = local_accumulation(varpi, n, 0, n - 1, alpha * 2.0);
        CHECK(n2 <= n1);
        const Index mid = n / 2;
        const Index whole = local_accumulation(varpi, n, 0, n - 1, alpha);
        const Index left = local_accumulation(varpi, n, 0, mid, alpha);
        const Index right = local_accumulation(varpi, n, mid, n - 1, alpha);
        CHECK(whole + 1 >= left + right);
    }
}

TEST_CASE("accumulation of a sum against its parts") {
    // Transfer bound N_{v1+v2}(alpha) <= N_1(alpha/2) + N_2(alpha/2): on each
    // greedy interval of the sum one of the two parts carries at least alpha/2,
    // and the greedy count dominates any disjoint family. Exact on the grid.
    Rng rng(23);
    const Index n = 14;
    for (int trial = 0; trial < 100; ++trial) {
        SuperAdditive f1 = random_superadditive(rng, n - 1);
        SuperAdditive f2 = random_superadditive(rng, n - 1);
        const double alpha = 0.5 + 3.0 * rng.uniform01();
        auto v1 = [&f1](Index a, Index b) { return f1(a, b); };
        auto v2 = [&f2](Index a, Index b) { return f2(a, b); };
        auto sum = [&](Index a, Index b) { return f1(a, b) + f2(a, b); };
        const Index n_sum = local_accumulation(sum, n, 0, n - 1, alpha);
        const Index n1 = local_accumulation(v1, n, 0, n - 1, alpha / 2.0);
        const Index n2 = local_accumulation(v2, n, 0, n - 1, alpha / 2.0);
        CHECK(n1 + n2 >= n_sum);
        CHECK(2 * std::max(n1, n2) >= n_sum);
    }
}

TEST_CASE("tail estimate edge cases") {
    SUBCASE("constant samples are flagged degenerate") {
        std::vector<double> samples(100, 3.0);
        TailReport rep = tail_estimate(samples);
        CHECK(rep.degenerate);
        CHECK(rep.reliable);
        CHECK(rep.points.empty());
    }
    SUBCASE("small batches are marked unreliable") {
        std::vector<double> samples{1.0, 2.0, 3.0, 2.0};
        TailReport rep = tail_estimate(samples, 1);
        CHECK_FALSE(rep.reliable);
    }
    SUBCASE("a gaussian-like bulk has concave log-survival above the mode") {
        Rng rng(77);
        std::vector<double> samples(4096);
        for (auto& s : samples) s = std::floor(4.0 + 1.5 * rng.normal());
        TailReport rep = tail_estimate(samples, 16);
        CHECK(rep.reliable);
        CHECK_FALSE(rep.degenerate);
        CHECK(rep.points.size() >= 4);
        // decay slopes of the survival function increase across the support
        for (Index k = 0; k + 1 < rep.decay_slopes.size(); ++k)
            CHECK(rep.decay_slopes[k + 1] >= rep.decay_slopes[k] - 1e-9);
    }
    SUBCASE("a geometric tail has flat decay slopes") {
        // survival of a geometric variable is exactly exponential, the
        // boundary case between sub- and super-exponential
        Rng rng(78);
        std::vector<double> samples(8192);
        for (auto& s : samples) {
            double n = 0.0;
            while (rng.uniform01() < 0.5) n += 1.0;
            s = n;
        }
        TailReport rep = tail_estimate(samples, 64);
        REQUIRE(rep.decay_slopes.size() >= 2);
        const double expected = std::log(2.0);
        for (double d : rep.decay_slopes) CHECK(d == doctest::Approx(expected).epsilon(0.35));
    }
}

TEST_CASE("max-form of the sum bound fails for concentrated mass") {
    // Regression: with the whole mass of v1 on one cell and of v2 on a distant
    // cell, the sum accumulates twice at threshold alpha while each part can
    // only accumulate once at alpha/2. Only the sum form of the transfer bound
    // is valid in general.
    const Index n = 5;
    const double alpha = 1.0;
    auto v1 = [&](Index a, Index b) { return (a <= 0 && b >= 1) ? alpha : 0.0; };
    auto v2 = [&](Index a, Index b) { return (a <= 3 && b >= 4) ? alpha : 0.0; };
    auto sum = [&](Index a, Index b) { return v1(a, b) + v2(a, b); };
    const Index n_sum = local_accumulation(sum, n, 0, n - 1, alpha);
    const Index n1 = local_accumulation(v1, n, 0, n - 1, alpha / 2.0);
    const Index n2 = local_accumulation(v2, n, 0, n - 1, alpha / 2.0);
    CHECK(n_sum == 2);
    CHECK(std::max(n1, n2) == 1);   // max form violated
    CHECK(n1 + n2 >= n_sum);        // sum form holds
}
