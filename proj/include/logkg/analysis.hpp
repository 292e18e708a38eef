#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "logkg/grid.hpp"
#include "logkg/nonlinearity.hpp"
#include "logkg/stability.hpp"

namespace logkg {

/// Gaussian solitary wave of the logarithmic Klein-Gordon equation (lambda = 1),
///   u(x, t) = exp(-(k x - c t)^2 / (2 (c^2 - k^2))),  c^2 > k^2.
struct GaussonParams {
    double c = 2.0;
    double k = 1.0;

    double spread() const {
        const double m = c * c - k * k;
        if (!(m > 0.0)) throw DomainError("gausson: need c^2 > k^2");
        return m;
    }
};

inline double gausson(double x, double t, const GaussonParams& gp) {
    const double s = gp.k * x - gp.c * t;
    return std::exp(-s * s / (2.0 * gp.spread()));
}

/// Time derivative of `gausson`; at t = 0 this is c k x / (c^2 - k^2) * exp(-k^2 x^2 / (2(c^2 - k^2))).
inline double gausson_dt(double x, double t, const GaussonParams& gp) {
    const double m = gp.spread();
    const double s = gp.k * x - gp.c * t;
    return gp.c * s / m * std::exp(-s * s / (2.0 * m));
}

namespace detail {

template <typename Potential>
double continuous_energy(const GridFunction& u, const GridFunction& ut, Potential potential) {
    if (!(u.grid() == ut.grid())) throw std::invalid_argument("energy: u and u_t on different grids");
    const GridFunction du = forward_diff(u);
    std::vector<double> density(u.cells() + 1);
    for (std::size_t j = 0; j < u.cells(); ++j) {
        const double rho = u[j] * u[j];
        density[j] = ut[j] * ut[j] + du[j] * du[j] + rho + potential(rho);
    }
    return quad(GridFunction(u.grid(), std::move(density)));
}

}  // namespace detail

/// Rectangle-rule energy of the logarithmic equation,
///   int u_t^2 + u_x^2 + u^2 + lambda (u^2 ln u^2 - u^2),
/// with u_x replaced by the forward difference.
inline double continuous_energy_log(const GridFunction& u, const GridFunction& ut, double lambda) {
    return detail::continuous_energy(u, ut, [lambda](double rho) { return lambda * F_log(rho); });
}

/// Rectangle-rule energy of the regularized equation,
///   int u_t^2 + u_x^2 + u^2 + lambda F_eps(u^2).
inline double continuous_energy_reg(const GridFunction& u, const GridFunction& ut,
                                    const NonlinearityParams& p) {
    check_params(p);
    return detail::continuous_energy(u, ut, [&p](double rho) { return p.lambda * F_eps(rho, p); });
}

struct EnergyGap {
    double gap;    ///< |E^eps(u0) - E(u0)|, potential terms only
    double bound;  ///< 4 eps |lambda| ||u0||_{L1}
    bool within_bound() const { return gap <= bound; }
};

/// Gap between the regularized and logarithmic energies of the same data.
/// Kinetic, gradient and mass terms coincide and are left out.
inline EnergyGap energy_gap_bound(const GridFunction& u0, const NonlinearityParams& p) {
    check_params(p);
    std::vector<double> density(u0.cells() + 1);
    for (std::size_t j = 0; j < u0.cells(); ++j) {
        density[j] = regularization_gap_density(u0[j] * u0[j], p);
    }
    const double gap = std::abs(p.lambda) * std::abs(quad(GridFunction(u0.grid(), std::move(density))));
    return {gap, 4.0 * p.epsilon * std::abs(p.lambda) * quad_l1(u0)};
}

enum class Truth { exact_logkge, reference_rlogkge };

struct ErrorReport {
    double l2 = 0.0;
    double linf = 0.0;
    double h1 = 0.0;
    Truth against = Truth::exact_logkge;
};

inline ErrorReport error_report(const GridFunction& numeric, const GridFunction& truth,
                                Truth against = Truth::exact_logkge) {
    const GridFunction e = truth - numeric;
    return {norm_l2(e), norm_linf(e), norm_h1(e), against};
}

/// Observed orders between consecutive (step, error) pairs:
///   log(err_i / err_{i+1}) / log(step_i / step_{i+1}),
/// which is log2 of the error ratio for halving steps.
inline std::vector<double> observed_order(const std::vector<std::pair<double, double>>& errors) {
    if (errors.size() < 2) throw std::invalid_argument("observed_order: need at least two rows");
    std::vector<double> orders;
    orders.reserve(errors.size() - 1);
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
        const auto [s0, e0] = errors[i];
        const auto [s1, e1] = errors[i + 1];
        if (!(s1 < s0) || !(s1 > 0.0)) {
            throw std::invalid_argument("observed_order: steps must decrease monotonically");
        }
        orders.push_back(std::log(e0 / e1) / std::log(s0 / s1));
    }
    return orders;
}

/// Least-squares slope of log(err) against log(param).
inline double fitted_slope(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("fitted_slope: need at least two samples");
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    const double n = static_cast<double>(samples.size());
    for (const auto& [p, e] : samples) {
        const double x = std::log(p);
        const double y = std::log(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace logkg
