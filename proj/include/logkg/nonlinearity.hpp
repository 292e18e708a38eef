#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace logkg {

/// Thrown when an argument falls outside the domain of a formula
/// (negative density, non-positive regularization, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Interaction strength and regularization of u*ln(eps^2 + u^2).
///
/// All functions in this header return lambda-free quantities; callers
/// that assemble equations or energies multiply by `lambda` themselves.
struct NonlinearityParams {
    double lambda = 1.0;
    double epsilon = 0.05;

    friend bool operator==(const NonlinearityParams&, const NonlinearityParams&) = default;
};

inline void check_params(const NonlinearityParams& p) {
    if (!(p.epsilon > 0.0) || !std::isfinite(p.epsilon)) {
        throw DomainError("regularization epsilon must be finite and > 0, got " +
                          std::to_string(p.epsilon));
    }
    if (!std::isfinite(p.lambda)) {
        throw DomainError("lambda must be finite");
    }
}

namespace detail {

inline void check_density(double rho, const char* who) {
    if (!(rho >= 0.0)) {
        throw DomainError(std::string(who) + ": density must be >= 0, got " + std::to_string(rho));
    }
}

// eps^2 * ln(1 + rho/eps^2). Past rho = eps^2 this is evaluated as
// eps^2 * (ln(eps^2 + rho) - ln(eps^2)) so that rho/eps^2 is never formed.
inline double log_tail(double rho, double e2) {
    if (rho <= e2) return e2 * std::log1p(rho / e2);
    return e2 * (std::log(e2 + rho) - std::log(e2));
}

// Relative separation below which the divided difference of F_eps is
// replaced by its midpoint limit.
inline constexpr double coincidence_tol = 1e-8;

// Series for the divided difference is used while |r| stays below this.
inline constexpr double series_radius = 0.125;

// phi(r) = (1/2r) * int_{-r}^{r} ln(1+x) dx = -sum_{k>=1} r^{2k} / (2k(2k+1))
// and its derivative; ten terms reach 1e-18 for |r| <= 1/8.
inline void divided_log_series(double r, double& phi, double& dphi) {
    const double r2 = r * r;
    double pow_odd = r;       // r^{2k-1}
    double pow_even = r2;     // r^{2k}
    phi = 0.0;
    dphi = 0.0;
    for (int k = 1; k <= 10; ++k) {
        phi -= pow_even / (2.0 * k * (2.0 * k + 1.0));
        dphi -= pow_odd / (2.0 * k + 1.0);
        pow_odd *= r2;
        pow_even *= r2;
    }
}

}  // namespace detail

/// f_eps(rho) = ln(eps^2 + rho).
inline double f_eps(double rho, const NonlinearityParams& p) {
    check_params(p);
    detail::check_density(rho, "f_eps");
    return std::log(p.epsilon * p.epsilon + rho);
}

/// Primitive of f_eps with F_eps(0) = 0:
///   rho*ln(eps^2 + rho) + eps^2*ln(1 + rho/eps^2) - rho.
inline double F_eps(double rho, const NonlinearityParams& p) {
    check_params(p);
    detail::check_density(rho, "F_eps");
    const double e2 = p.epsilon * p.epsilon;
    return rho * std::log(e2 + rho) + detail::log_tail(rho, e2) - rho;
}

/// Divided difference D(a, b) = [F_eps(a) - F_eps(b)] / (a - b) together with
/// its partial derivative in `a`.
///
/// Three regimes, all symmetric in (a, b):
///  - |a-b| <= 1e-8 (a + b + eps^2): midpoint limit ln(eps^2 + (a+b)/2);
///  - |r| < 1/8 with r = (a-b) / (2(eps^2 + (a+b)/2)): even series around
///    the midpoint (no cancellation in F(a) - F(b));
///  - otherwise the divided difference as written.
struct DividedDifference {
    double value;
    double d_first;
};

inline DividedDifference divided_difference_F(double a, double b, const NonlinearityParams& p) {
    const double e2 = p.epsilon * p.epsilon;
    const double gap = a - b;
    const double mid = e2 + 0.5 * (a + b);
    if (std::abs(gap) <= detail::coincidence_tol * (a + b + e2)) {
        return {std::log(mid), 0.5 / mid};
    }
    const double r = gap / (2.0 * mid);
    if (std::abs(r) < detail::series_radius) {
        double phi = 0.0;
        double dphi = 0.0;
        detail::divided_log_series(std::abs(r), phi, dphi);
        // phi is even, phi' is odd
        if (r < 0.0) dphi = -dphi;
        return {std::log(mid) + phi, (1.0 + (1.0 - r) * dphi) / (2.0 * mid)};
    }
    const double value = (F_eps(a, p) - F_eps(b, p)) / gap;
    return {value, (std::log(e2 + a) - value) / gap};
}

/// Two-point average used by both schemes:
///   G_eps(z1, z2) = [F_eps(z1^2) - F_eps(z2^2)] / (z1^2 - z2^2) * (z1 + z2) / 2,
/// equal to f_eps((z1^2 + z2^2)/2) * (z1 + z2)/2 when z1^2 and z2^2 coincide.
inline double G_eps(double z1, double z2, const NonlinearityParams& p) {
    check_params(p);
    const double half_sum = 0.5 * (z1 + z2);
    if (half_sum == 0.0) return 0.0;
    return divided_difference_F(z1 * z1, z2 * z2, p).value * half_sum;
}

/// Partial derivative of G_eps in its first argument (Newton Jacobian entry).
inline double dG_eps_dz1(double z1, double z2, const NonlinearityParams& p) {
    check_params(p);
    const auto dd = divided_difference_F(z1 * z1, z2 * z2, p);
    return 2.0 * z1 * (0.5 * (z1 + z2)) * dd.d_first + 0.5 * dd.value;
}

struct GValue {
    double value;
    double d_z1;
};

/// G_eps and dG_eps/dz1 from a single divided-difference evaluation.
inline GValue G_eps_with_derivative(double z1, double z2, const NonlinearityParams& p) {
    const auto dd = divided_difference_F(z1 * z1, z2 * z2, p);
    const double half_sum = 0.5 * (z1 + z2);
    return {half_sum == 0.0 ? 0.0 : dd.value * half_sum,
            2.0 * z1 * half_sum * dd.d_first + 0.5 * dd.value};
}

/// Unregularized density ln(rho); singular at rho = 0.
inline double f_log(double rho) {
    if (!(rho > 0.0)) {
        throw DomainError("f_log: density must be > 0, got " + std::to_string(rho));
    }
    return std::log(rho);
}

/// rho*ln(rho) - rho, extended continuously by F_log(0) = 0.
inline double F_log(double rho) {
    detail::check_density(rho, "F_log");
    if (rho == 0.0) return 0.0;
    return rho * std::log(rho) - rho;
}

/// F_eps(rho) - F_log(rho) = rho*ln(1 + eps^2/rho) + eps^2*ln(1 + rho/eps^2),
/// evaluated without forming the two primitives.
inline double regularization_gap_density(double rho, const NonlinearityParams& p) {
    check_params(p);
    detail::check_density(rho, "regularization_gap_density");
    if (rho == 0.0) return 0.0;
    const double e2 = p.epsilon * p.epsilon;
    // e2 / rho overflows for subnormal rho
    const double head = rho >= e2 ? rho * std::log1p(e2 / rho) : rho * (std::log(e2 + rho) - std::log(rho));
    return head + detail::log_tail(rho, e2);
}

}  // namespace logkg
