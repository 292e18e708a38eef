#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "logkg/grid.hpp"
#include "logkg/nonlinearity.hpp"

namespace logkg {

/// max{ |ln eps^2|, |ln(eps^2 + ||u||_inf^2)| }
inline double sigma_max(const GridFunction& u, const NonlinearityParams& p) {
    check_params(p);
    const double e2 = p.epsilon * p.epsilon;
    const double m = norm_linf(u);
    return std::max(std::abs(std::log(e2)), std::abs(std::log(e2 + m * m)));
}

/// Largest stable SIEFD step from the frozen-coefficient von Neumann analysis.
struct TauBound {
    bool unconditional = false;
    double tau = std::numeric_limits<double>::infinity();

    bool admits(double step) const { return unconditional || step <= tau; }
};

/// tau <= 2h / sqrt(4 - h^2 - h^2 sigma), unconditional once 4 - h^2 (1 + sigma) <= 0.
inline TauBound siefd_tau_bound(double h, double sigma) {
    if (!(h > 0.0)) throw DomainError("siefd_tau_bound: h must be > 0");
    if (!(sigma >= 0.0)) throw DomainError("siefd_tau_bound: sigma must be >= 0");
    if (std::isinf(sigma)) return {true, std::numeric_limits<double>::infinity()};
    const double margin = 4.0 - h * h * (1.0 + sigma);
    if (margin <= 0.0) return {true, std::numeric_limits<double>::infinity()};
    return {false, 2.0 * h / std::sqrt(margin)};
}

/// CNFD is stable for every h, tau.
inline TauBound cnfd_tau_bound() { return {true, std::numeric_limits<double>::infinity()}; }

}  // namespace logkg
