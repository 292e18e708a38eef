#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace logkg {

/// Solver for periodic tridiagonal systems
///
///   lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1] = rhs[j],  j = 0..n-1,
///
/// with indices taken mod n (lower[0] couples to x[n-1], upper[n-1] to x[0]).
/// Uses a Thomas sweep plus a Sherman-Morrison correction for the two corner
/// entries. Work buffers are kept between calls.
class CyclicTridiagonalSolver {
public:
    void solve(std::span<const double> lower, std::span<const double> diag,
               std::span<const double> upper, std::span<const double> rhs, std::span<double> x) {
        const std::size_t n = diag.size();
        if (n < 3 || lower.size() != n || upper.size() != n || rhs.size() != n || x.size() != n) {
            throw std::invalid_argument("cyclic tridiagonal: inconsistent sizes");
        }
        b_.assign(diag.begin(), diag.end());
        u_.assign(n, 0.0);
        cp_.resize(n);
        z_.resize(n);

        const double alpha = upper[n - 1];  // row n-1, column 0
        const double beta = lower[0];       // row 0, column n-1
        const double gamma = -b_[0];
        b_[0] -= gamma;
        b_[n - 1] -= alpha * beta / gamma;

        thomas(lower, upper, rhs, x);
        u_[0] = gamma;
        u_[n - 1] = alpha;
        thomas(lower, upper, u_, z_);

        const double fact = (x[0] + beta * x[n - 1] / gamma) /
                            (1.0 + z_[0] + beta * z_[n - 1] / gamma);
        for (std::size_t j = 0; j < n; ++j) x[j] -= fact * z_[j];
    }

    /// y = A x for the same storage convention.
    static void multiply(std::span<const double> lower, std::span<const double> diag,
                         std::span<const double> upper, std::span<const double> x,
                         std::span<double> y) {
        const std::size_t n = diag.size();
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = j == 0 ? n - 1 : j - 1;
            const std::size_t jp = j + 1 == n ? 0 : j + 1;
            y[j] = lower[j] * x[jm] + diag[j] * x[j] + upper[j] * x[jp];
        }
    }

private:
    // Non-periodic sweep on the modified diagonal b_; lower[0] and
    // upper[n-1] are ignored.
    void thomas(std::span<const double> lower, std::span<const double> upper,
                std::span<const double> rhs, std::span<double> out) {
        const std::size_t n = b_.size();
        double denom = b_[0];
        if (denom == 0.0) throw std::runtime_error("cyclic tridiagonal: zero pivot");
        out[0] = rhs[0] / denom;
        for (std::size_t j = 1; j < n; ++j) {
            cp_[j - 1] = upper[j - 1] / denom;
            denom = b_[j] - lower[j] * cp_[j - 1];
            if (denom == 0.0) throw std::runtime_error("cyclic tridiagonal: zero pivot");
            out[j] = (rhs[j] - lower[j] * out[j - 1]) / denom;
        }
        for (std::size_t j = n - 1; j-- > 0;) out[j] -= cp_[j] * out[j + 1];
    }

    std::vector<double> b_;
    std::vector<double> u_;
    std::vector<double> cp_;
    std::vector<double> z_;
};

}  // namespace logkg
