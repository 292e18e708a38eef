#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "logkg/analysis.hpp"
#include "logkg/stability.hpp"

using namespace logkg;

namespace {

constexpr double pi = std::numbers::pi;

// Sixth-order central second derivative.
template <typename F>
double d2(F f, double x, double d) {
    const double c0 = -49.0 / 18.0, c1 = 1.5, c2 = -0.15, c3 = 1.0 / 90.0;
    return (c0 * f(x) + c1 * (f(x + d) + f(x - d)) + c2 * (f(x + 2 * d) + f(x - 2 * d)) +
            c3 * (f(x + 3 * d) + f(x - 3 * d))) /
           (d * d);
}

// Naive long-double potential gap, straight from the two primitives.
double naive_gap(const GridFunction& u0, double eps, double lambda) {
    const long double e2 = static_cast<long double>(eps) * eps;
    long double sum = 0.0L;
    for (std::size_t j = 0; j < u0.cells(); ++j) {
        const long double rho = static_cast<long double>(u0[j]) * u0[j];
        const long double Feps = (e2 + rho) * std::log(e2 + rho) - e2 * std::log(e2) - rho;
        const long double Flog = rho > 0.0L ? rho * std::log(rho) - rho : 0.0L;
        sum += Feps - Flog;
    }
    return std::abs(static_cast<double>(lambda * sum * u0.grid().h()));
}

// Random smooth data: a few Gaussian bumps with amplitudes in [0, 5].
GridFunction smooth_random(const Grid1D& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(0.0, 5.0), centre(g.a() + 2.0, g.b() - 2.0), width(0.3, 2.0),
        sign(-1.0, 1.0);
    const int bumps = 1 + static_cast<int>(rng() % 4);
    std::vector<std::tuple<double, double, double>> b;
    for (int i = 0; i < bumps; ++i) b.emplace_back(amp(rng) * (sign(rng) < 0 ? -1.0 : 1.0), centre(rng), width(rng));
    return GridFunction::sample(g, [&](double x) {
        double v = 0.0;
        for (const auto& [a, c, w] : b) v += a * std::exp(-(x - c) * (x - c) / (w * w));
        return v;
    });
}

// Largest |xi| over all modes of the frozen-coefficient SIEFD linearization
// u_tt - u_xx + (1 + alpha) u = 0 with the semi-implicit mass term.
double max_amplification(double h, std::size_t n, double tau, double alpha) {
    double worst = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        const double s = 2.0 / h * std::sin(pi * static_cast<double>(l) / static_cast<double>(n));
        const double theta = (2.0 - s * s * tau * tau) / (2.0 + tau * tau * (1.0 + alpha));
        // roots of xi^2 - 2 theta xi + 1
        const double mag = std::abs(theta) <= 1.0 ? 1.0 : std::abs(theta) + std::sqrt(theta * theta - 1.0);
        worst = std::max(worst, mag);
    }
    return worst;
}

}  // namespace

TEST(Gausson, Examples) {
    const GaussonParams gp;
    EXPECT_EQ(gausson(0.0, 0.0, gp), 1.0);
    for (double t : {0.0, 0.3, 2.5}) EXPECT_DOUBLE_EQ(gausson(gp.c * t / gp.k, t, gp), 1.0);
    EXPECT_NEAR(gausson(1.0, 0.0, gp), std::exp(-1.0 / 6.0), 1e-15);
    EXPECT_NEAR(gausson_dt(1.0, 0.0, gp), 2.0 / 3.0 * std::exp(-1.0 / 6.0), 1e-15);
    EXPECT_THROW(gausson(0.0, 0.0, {1.0, 1.0}), DomainError);
}

TEST(Gausson, TimeDerivativeMatchesDifferences) {
    const GaussonParams gp{3.0, 1.5};
    const double d = 1e-5;
    for (double x : {-2.0, -0.3, 0.0, 1.1}) {
        for (double t : {0.0, 0.4}) {
            const double fd = (gausson(x, t + d, gp) - gausson(x, t - d, gp)) / (2.0 * d);
            EXPECT_NEAR(gausson_dt(x, t, gp), fd, 1e-9);
        }
    }
}

TEST(ContinuousEnergy, Examples) {
    const Grid1D g(-2.0, 2.0, 40);
    const auto zero = GridFunction::zeros(g);
    EXPECT_EQ(continuous_energy_log(zero, zero, 1.0), 0.0);
    EXPECT_EQ(continuous_energy_reg(zero, zero, {1.0, 0.1}), 0.0);
    const auto one = GridFunction::constant(g, 1.0);
    const NonlinearityParams p{1.0, 0.5};
    EXPECT_NEAR(continuous_energy_reg(one, zero, p), 4.0 * (1.0 + F_eps(1.0, p)), 1e-14);
    EXPECT_NEAR(continuous_energy_log(one, zero, 1.0), 0.0, 1e-14);
    EXPECT_THROW(continuous_energy_log(one, GridFunction::zeros(Grid1D(-2.0, 2.0, 8)), 1.0), std::invalid_argument);
}

TEST(ContinuousEnergy, GaussonGapWithinBound) {
    const Grid1D g(-16.0, 16.0, 1024);
    const GaussonParams gp;
    const auto phi = GridFunction::sample(g, [&](double x) { return gausson(x, 0.0, gp); });
    const auto gamma = GridFunction::sample(g, [&](double x) { return gausson_dt(x, 0.0, gp); });
    const NonlinearityParams p{1.0, 0.01};
    const double diff = std::abs(continuous_energy_reg(phi, gamma, p) - continuous_energy_log(phi, gamma, 1.0));
    EXPECT_LE(diff, 0.04 * quad_l1(phi));
    const auto gap = energy_gap_bound(phi, p);
    EXPECT_NEAR(gap.gap, diff, 1e-12);
    EXPECT_NEAR(gap.bound, 0.04 * quad_l1(phi), 1e-15);
    EXPECT_TRUE(gap.within_bound());
}

TEST(EnergyGap, ZeroData) {
    const Grid1D g(0.0, 1.0, 16);
    const auto gap = energy_gap_bound(GridFunction::zeros(g), {1.0, 0.1});
    EXPECT_EQ(gap.gap, 0.0);
    EXPECT_EQ(gap.bound, 0.0);
    EXPECT_TRUE(gap.within_bound());
}

TEST(EnergyGap, MatchesNaiveOracle) {
    std::mt19937_64 rng(40);
    const Grid1D g(-10.0, 10.0, 400);
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        const auto u0 = smooth_random(g, rng);
        const double ref = naive_gap(u0, eps, -1.5);
        EXPECT_NEAR(energy_gap_bound(u0, {-1.5, eps}).gap, ref, 1e-9 * ref) << "eps=" << eps;
    }
}

TEST(EnergyGap, DecaysFasterThanFirstOrder) {
    // the gap behaves like eps^2 ln(1/eps), so the fitted slope sits above 1
    const Grid1D g(-16.0, 16.0, 2048);
    const auto phi = GridFunction::sample(g, [](double x) { return gausson(x, 0.0, GaussonParams{}); });
    std::vector<std::pair<double, double>> samples;
    for (double eps = 1e-2; eps >= 1e-5; eps *= 0.5) samples.emplace_back(eps, energy_gap_bound(phi, {1.0, eps}).gap);
    const double slope = fitted_slope(samples);
    EXPECT_GT(slope, 1.5);
    EXPECT_LT(slope, 2.0);
}

TEST(SigmaMax, Examples) {
    const Grid1D g(0.0, 1.0, 8);
    const NonlinearityParams p{1.0, 0.1};
    EXPECT_NEAR(sigma_max(GridFunction::zeros(g), p), 4.605170185988091, 1e-13);
    EXPECT_NEAR(sigma_max(GridFunction::constant(g, -1.0), p), 4.605170185988091, 1e-13);
    EXPECT_NEAR(sigma_max(GridFunction::constant(g, 10.0), p), std::log(100.01), 1e-13);
    EXPECT_THROW(sigma_max(GridFunction::zeros(g), {1.0, 0.0}), DomainError);
}

TEST(TauBound, Examples) {
    EXPECT_TRUE(siefd_tau_bound(2.0, 0.0).unconditional);
    const auto b = siefd_tau_bound(0.1, 4.60517);
    EXPECT_FALSE(b.unconditional);
    EXPECT_NEAR(b.tau, 0.100709, 2e-6);
    EXPECT_NEAR(b.tau, 0.2 / std::sqrt(4.0 - 0.01 * 5.60517), 1e-15);
    EXPECT_TRUE(siefd_tau_bound(0.1, std::numeric_limits<double>::infinity()).unconditional);
    EXPECT_TRUE(cnfd_tau_bound().unconditional);
    EXPECT_TRUE(cnfd_tau_bound().admits(1e6));
    EXPECT_TRUE(b.admits(0.1));
    EXPECT_FALSE(b.admits(0.11));
    EXPECT_THROW(siefd_tau_bound(0.0, 1.0), DomainError);
    EXPECT_THROW(siefd_tau_bound(0.1, -1.0), DomainError);
}

TEST(ErrorReport, Examples) {
    const Grid1D g(0.0, 1.0, 16);
    const auto u = GridFunction::sample(g, [](double x) { return std::sin(2.0 * pi * x); });
    const auto r = error_report(u, u);
    EXPECT_EQ(r.l2, 0.0);
    EXPECT_EQ(r.linf, 0.0);
    EXPECT_EQ(r.h1, 0.0);
    const auto s = error_report(u, GridFunction::zeros(g), Truth::reference_rlogkge);
    EXPECT_EQ(s.against, Truth::reference_rlogkge);
    EXPECT_GE(s.h1, s.l2);
    EXPECT_NEAR(s.linf, 1.0, 1e-15);
}

TEST(ObservedOrder, Examples) {
    const auto o = observed_order({{0.1, 4e-3}, {0.05, 1e-3}});
    ASSERT_EQ(o.size(), 1u);
    EXPECT_NEAR(o[0], 2.0, 1e-14);

    const std::vector<double> errs{1.15e-3, 2.94e-4, 7.43e-5, 1.87e-5, 4.70e-6};
    std::vector<std::pair<double, double>> rows;
    for (std::size_t i = 0; i < errs.size(); ++i) rows.emplace_back(0.1 / std::pow(2.0, i), errs[i]);
    const auto rates = observed_order(rows);
    const std::vector<double> expected{1.96, 1.98, 1.99, 1.99};
    ASSERT_EQ(rates.size(), expected.size());
    for (std::size_t i = 0; i < rates.size(); ++i) EXPECT_NEAR(rates[i], expected[i], 0.01);

    EXPECT_THROW(observed_order({}), std::invalid_argument);
    EXPECT_THROW(observed_order({{0.1, 1.0}}), std::invalid_argument);
    EXPECT_THROW(observed_order({{0.1, 1.0}, {0.2, 0.5}}), std::invalid_argument);
}

TEST(FittedSlope, Examples) {
    EXPECT_NEAR(fitted_slope({{1.0, 3.0}, {2.0, 12.0}, {4.0, 48.0}}), 2.0, 1e-14);
    EXPECT_NEAR(fitted_slope({{1e-3, 5.0}, {1e-2, 5.0}}), 0.0, 1e-14);
    EXPECT_THROW(fitted_slope({{1.0, 1.0}}), std::invalid_argument);
}

TEST(AnalysisProperty, GaussonSolvesLogKG) {
    const GaussonParams gp;
    const double d = 1e-2;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double x = -5.0 + 0.1 * i;
        for (int k = 0; k < 10; ++k) {
            const double t = 0.1 * k;
            const double u = gausson(x, t, gp);
            const double utt = d2([&](double s) { return gausson(x, s, gp); }, t, d);
            const double uxx = d2([&](double s) { return gausson(s, t, gp); }, x, d);
            worst = std::max(worst, std::abs(utt - uxx + u + u * std::log(u * u)));
        }
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(AnalysisProperty, GapBoundHoldsForRandomData) {
    std::mt19937_64 rng(41);
    const Grid1D g(-16.0, 16.0, 1024);
    int violations = 0;
    for (int i = 0; i < 50; ++i) {
        const auto u0 = smooth_random(g, rng);
        const double eps = std::pow(10.0, -1.0 - (i % 6));
        if (!energy_gap_bound(u0, {1.0, eps}).within_bound()) ++violations;
    }
    EXPECT_EQ(violations, 0);
}

TEST(AnalysisProperty, SigmaMaxMonotoneInAmplitude) {
    const Grid1D g(0.0, 1.0, 8);
    for (double eps : {1.0, 0.3, 1e-2, 1e-5}) {
        double last = 0.0;
        for (double m = 0.0; m <= 1e3; m = m * 1.3 + 1e-3) {
            const double s = sigma_max(GridFunction::constant(g, m), {1.0, eps});
            ASSERT_GE(s, last) << "eps=" << eps << " m=" << m;
            last = s;
        }
    }
}

TEST(AnalysisProperty, TauBoundContinuousTowardUnconditional) {
    const double h = 0.5;
    // margin 4 - h^2 (1 + sigma) vanishes at sigma = 15
    double last = 0.0;
    for (double gap = 1.0; gap > 1e-12; gap *= 0.1) {
        const auto b = siefd_tau_bound(h, 15.0 - gap);
        ASSERT_FALSE(b.unconditional);
        ASSERT_GT(b.tau, last);
        last = b.tau;
    }
    EXPECT_GT(last, 1e4);
    EXPECT_TRUE(siefd_tau_bound(h, 15.0).unconditional);
}

TEST(AnalysisProperty, LinearizedFrontierMatchesBound) {
    for (std::size_t n : {16u, 64u, 320u}) {
        for (double len : {2.0, 8.0, 32.0}) {
            const double h = len / static_cast<double>(n);
            for (double alpha : {0.0, 0.5, 4.6, 9.2, 13.8}) {
                const auto b = siefd_tau_bound(h, alpha);
                if (b.unconditional) continue;
                EXPECT_LE(max_amplification(h, n, b.tau * (1.0 - 1e-3), alpha), 1.0)
                    << "n=" << n << " h=" << h << " alpha=" << alpha;
                EXPECT_GT(max_amplification(h, n, b.tau * (1.0 + 1e-3), alpha), 1.0)
                    << "n=" << n << " h=" << h << " alpha=" << alpha;
            }
        }
    }
}
