#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logkg/cyclic_tridiagonal.hpp"
#include "logkg/grid.hpp"
#include "logkg/nonlinearity.hpp"
#include "logkg/stability.hpp"

namespace logkg {

enum class Scheme {
    cnfd,   ///< Crank-Nicolson in the Laplacian and the nonlinearity
    siefd,  ///< explicit Laplacian, implicit (nodewise) nonlinearity
};

enum class Fallback { damped_fixed_point, fail };

inline const char* to_string(Scheme s) { return s == Scheme::cnfd ? "cnfd" : "siefd"; }

inline std::optional<Scheme> parse_scheme(const std::string& s) {
    if (s == "cnfd" || s == "CNFD") return Scheme::cnfd;
    if (s == "siefd" || s == "SIEFD") return Scheme::siefd;
    return std::nullopt;
}

inline const char* to_string(Fallback f) {
    return f == Fallback::fail ? "fail" : "damped-fixed-point";
}

struct StepperConfig {
    Scheme scheme = Scheme::cnfd;
    double tau = 0.01;
    /// Relative l2 residual tolerance of the per-step nonlinear solve.
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    Fallback fallback = Fallback::damped_fixed_point;

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be > 0");
        if (!(newton_tol > 0.0 && newton_tol <= 1e-6)) {
            throw DomainError("newton_tol must lie in (0, 1e-6]");
        }
        if (newton_max_iter < 1) throw DomainError("newton_max_iter must be >= 1");
    }

    friend bool operator==(const StepperConfig&, const StepperConfig&) = default;
};

struct InitialData {
    GridFunction phi;    ///< u(x, 0)
    GridFunction gamma;  ///< u_t(x, 0)
};

/// Two consecutive layers (u^{n-1}, u^n) of a two-step scheme.
struct WaveState {
    GridFunction prev;
    GridFunction curr;
    std::size_t n = 1;
    double t = 0.0;
};

/// The per-step nonlinear solve hit its iteration cap.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, double last_residual, int iterations)
        : std::runtime_error(what), last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const { return last_residual_; }
    int iterations() const { return iterations_; }

private:
    double last_residual_;
    int iterations_;
};

struct SolveStats {
    int newton_iterations = 0;
    int fallback_iterations = 0;
    bool used_fallback = false;
    double rhs_norm = 0.0;
    /// l2 residual before each Newton update, plus the final one.
    std::vector<double> residual_history;
};

/// Advances one trajectory of either scheme. Owns the Newton work buffers,
/// so an instance must not be shared between threads.
class Stepper {
public:
    Stepper(const Grid1D& grid, const NonlinearityParams& params, const StepperConfig& cfg)
        : grid_(grid), params_(params), cfg_(cfg) {
        check_params(params_);
        cfg_.validate();
        const std::size_t n = grid_.cells();
        u_.resize(n);
        res_.resize(n);
        lower_.resize(n);
        diag_.resize(n);
        upper_.resize(n);
        delta_.resize(n);
    }

    const Grid1D& grid() const { return grid_; }
    const NonlinearityParams& params() const { return params_; }
    const StepperConfig& config() const { return cfg_; }
    const SolveStats& last_stats() const { return stats_; }

    /// Called once with a message when an SIEFD step size exceeds the
    /// linear stability bound computed from the layer it starts from.
    void on_stability_warning(std::function<void(const std::string&)> cb) {
        warn_ = std::move(cb);
    }
    bool stability_warning_raised() const { return warned_; }

    /// Taylor start: u^1 = phi + tau*gamma + tau^2/2 [phi_xx - phi - lambda*phi*ln(eps^2 + phi^2)].
    WaveState first_step(const InitialData& init) const {
        require_grid(init.phi);
        require_grid(init.gamma);
        const double tau = cfg_.tau;
        const double e2 = params_.epsilon * params_.epsilon;
        const GridFunction lap = laplacian(init.phi);
        std::vector<double> next(grid_.cells() + 1);
        for (std::size_t j = 0; j < grid_.cells(); ++j) {
            const double phi = init.phi[j];
            const double accel = lap[j] - phi - params_.lambda * phi * std::log(e2 + phi * phi);
            next[j] = phi + tau * init.gamma[j] + 0.5 * tau * tau * accel;
        }
        return {init.phi, GridFunction(grid_, std::move(next)), 1, tau};
    }

    /// One step of the configured scheme.
    WaveState step(const WaveState& state) {
        if (cfg_.scheme == Scheme::siefd && !warned_) check_stability(state.curr);
        GridFunction next = solve_newton(state);
        return {state.curr, std::move(next), state.n + 1,
                static_cast<double>(state.n + 1) * cfg_.tau};
    }

    /// Left-hand side of the scheme evaluated with `candidate` as u^{n+1}.
    GridFunction assemble_residual(const GridFunction& candidate, const WaveState& state) const {
        require_grid(candidate);
        require_grid(state.prev);
        require_grid(state.curr);
        std::vector<double> r(grid_.cells() + 1);
        evaluate(candidate.values(), state, std::span<double>(r.data(), grid_.cells()), nullptr);
        return {grid_, std::move(r)};
    }

    /// Solves the implicit system for u^{n+1} starting from 2u^n - u^{n-1}.
    /// J(candidate) v with the analytic Jacobian used by Newton.
    GridFunction jacobian_apply(const GridFunction& candidate, const WaveState& state, const GridFunction& v) const {
        require_grid(candidate);
        require_grid(state.prev);
        require_grid(v);
        const std::size_t n = grid_.cells();
        const double inv_tau2 = 1.0 / (cfg_.tau * cfg_.tau);
        const double inv_h2 = 1.0 / (grid_.h() * grid_.h());
        const double coupling = cfg_.scheme == Scheme::cnfd ? inv_h2 : 0.0;
        std::vector<double> out(n + 1);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = j == 0 ? n - 1 : j - 1;
            const std::size_t jp = j + 1 == n ? 0 : j + 1;
            const double d = inv_tau2 + 0.5 + coupling +
                             params_.lambda * G_eps_with_derivative(candidate[j], state.prev[j], params_).d_z1;
            out[j] = d * v[j] - 0.5 * coupling * (v[jm] + v[jp]);
        }
        return {grid_, std::move(out)};
    }

    GridFunction solve_newton(const WaveState& state) {
        require_grid(state.prev);
        require_grid(state.curr);
        const std::size_t n = grid_.cells();
        stats_ = {};
        stats_.rhs_norm = known_terms_norm(state);
        const double target = cfg_.newton_tol * (1.0 + stats_.rhs_norm);

        for (std::size_t j = 0; j < n; ++j) u_[j] = 2.0 * state.curr[j] - state.prev[j];

        bool singular = false;
        double r = std::numeric_limits<double>::infinity();
        for (int k = 0;; ++k) {
            r = evaluate(u_, state, res_, &diag_);
            stats_.residual_history.push_back(r);
            // at least one correction: the tolerance scales with 1/tau^2 and
            // the extrapolated guess alone can sit just under it
            if (r <= target && (k > 0 || r == 0.0)) return finish();
            if (!std::isfinite(r) || k == cfg_.newton_max_iter) break;
            if (!newton_update()) {
                singular = true;
                break;
            }
            ++stats_.newton_iterations;
        }

        if (cfg_.fallback == Fallback::fail) {
            throw NonConvergence(singular ? "Newton Jacobian has a non-positive diagonal entry"
                                          : "Newton iteration did not converge",
                                 r, stats_.newton_iterations);
        }
        return fixed_point(state, target);
    }

    /// Conserved discrete energy of the pair (prev, curr) = (u^n, u^{n+1}).
    double discrete_energy(const WaveState& state) const {
        require_grid(state.prev);
        require_grid(state.curr);
        const std::size_t n = grid_.cells();
        const double h = grid_.h();
        const double tau = cfg_.tau;
        double kinetic = 0.0;
        double grad = 0.0;
        double mass = 0.0;
        double potential = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = state.prev[j];
            const double b = state.curr[j];
            const double dt = (b - a) / tau;
            const double da = (state.prev[j + 1] - a) / h;
            const double db = (state.curr[j + 1] - b) / h;
            kinetic += dt * dt;
            grad += cfg_.scheme == Scheme::cnfd ? 0.5 * (da * da + db * db) : da * db;
            mass += 0.5 * (a * a + b * b);
            potential += 0.5 * (F_eps(a * a, params_) + F_eps(b * b, params_));
        }
        return h * (kinetic + grad + mass + params_.lambda * potential);
    }

private:
    void require_grid(const GridFunction& u) const {
        if (!(u.grid() == grid_)) throw std::invalid_argument("layer does not live on the stepper grid");
    }

    // Residual into `out` (N entries); optionally the Jacobian diagonal
    // contribution of the nonlinearity. Returns the l2 norm of the residual.
    double evaluate(std::span<const double> cand, const WaveState& state, std::span<double> out,
                    std::vector<double>* jac_diag) const {
        const std::size_t n = grid_.cells();
        const double h = grid_.h();
        const double inv_tau2 = 1.0 / (cfg_.tau * cfg_.tau);
        const double inv_h2 = 1.0 / (h * h);
        const double lambda = params_.lambda;
        const auto prev = state.prev.values();
        const auto curr = state.curr.values();
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = j == 0 ? n - 1 : j - 1;
            const std::size_t jp = j + 1 == n ? 0 : j + 1;
            const auto g = G_eps_with_derivative(cand[j], prev[j], params_);
            double lap = 0.0;
            if (cfg_.scheme == Scheme::cnfd) {
                lap = 0.5 * ((cand[jp] + prev[jp]) - 2.0 * (cand[j] + prev[j]) + (cand[jm] + prev[jm])) *
                      inv_h2;
            } else {
                lap = (curr[jp] - 2.0 * curr[j] + curr[jm]) * inv_h2;
            }
            const double rj = (cand[j] - 2.0 * curr[j] + prev[j]) * inv_tau2 - lap +
                              0.5 * (cand[j] + prev[j]) + lambda * g.value;
            out[j] = rj;
            sum += rj * rj;
            if (jac_diag) (*jac_diag)[j] = lambda * g.d_z1;
        }
        return std::sqrt(h * sum);
    }

    double known_terms_norm(const WaveState& state) const {
        const std::size_t n = grid_.cells();
        const double h = grid_.h();
        const double inv_tau2 = 1.0 / (cfg_.tau * cfg_.tau);
        const double inv_h2 = 1.0 / (h * h);
        const auto prev = state.prev.values();
        const auto curr = state.curr.values();
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = j == 0 ? n - 1 : j - 1;
            const std::size_t jp = j + 1 == n ? 0 : j + 1;
            const double lap = cfg_.scheme == Scheme::cnfd
                                   ? 0.5 * (prev[jp] - 2.0 * prev[j] + prev[jm]) * inv_h2
                                   : (curr[jp] - 2.0 * curr[j] + curr[jm]) * inv_h2;
            const double k = (2.0 * curr[j] - prev[j]) * inv_tau2 + lap - 0.5 * prev[j];
            sum += k * k;
        }
        return std::sqrt(h * sum);
    }

    // Linear part of the Jacobian (without the nonlinearity), added onto diag_.
    void add_linear_part(bool with_nonlinear) {
        const std::size_t n = grid_.cells();
        const double inv_tau2 = 1.0 / (cfg_.tau * cfg_.tau);
        const double inv_h2 = 1.0 / (grid_.h() * grid_.h());
        const double coupling = cfg_.scheme == Scheme::cnfd ? inv_h2 : 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double nl = with_nonlinear ? diag_[j] : 0.0;
            diag_[j] = inv_tau2 + 0.5 + coupling + nl;
            lower_[j] = upper_[j] = -0.5 * coupling;
        }
    }

    // delta = J^{-1} res; u -= delta. False when the Jacobian is singular.
    bool newton_update() {
        add_linear_part(true);
        for (double d : diag_) {
            if (!(d > 0.0)) return false;
        }
        solve_linear();
        for (std::size_t j = 0; j < u_.size(); ++j) u_[j] -= delta_[j];
        return true;
    }

    void solve_linear() {
        if (cfg_.scheme == Scheme::cnfd) {
            tridiag_.solve(lower_, diag_, upper_, res_, delta_);
        } else {
            for (std::size_t j = 0; j < res_.size(); ++j) delta_[j] = res_[j] / diag_[j];
        }
    }

    // Chord iteration with the linear part of the operator and step halving.
    GridFunction fixed_point(const WaveState& state, double target) {
        stats_.used_fallback = true;
        const int cap = 20 * cfg_.newton_max_iter;
        for (std::size_t j = 0; j < u_.size(); ++j) u_[j] = 2.0 * state.curr[j] - state.prev[j];
        double r = evaluate(u_, state, res_, nullptr);
        double omega = 1.0;
        std::vector<double> trial(u_.size());
        for (int k = 0; k < cap; ++k) {
            stats_.residual_history.push_back(r);
            if (r <= target) return finish();
            add_linear_part(false);
            solve_linear();
            for (std::size_t j = 0; j < u_.size(); ++j) trial[j] = u_[j] - omega * delta_[j];
            std::vector<double> trial_res(u_.size());
            const double rt = evaluate(trial, state, trial_res, nullptr);
            ++stats_.fallback_iterations;
            if (std::isfinite(rt) && rt < r) {
                u_.swap(trial);
                res_.swap(trial_res);
                r = rt;
                omega = std::min(1.0, 2.0 * omega);
            } else {
                omega *= 0.5;
                if (omega < 1e-6) break;
            }
        }
        throw NonConvergence("damped fixed-point fallback did not converge", r,
                             stats_.newton_iterations + stats_.fallback_iterations);
    }

    GridFunction finish() const {
        std::vector<double> v(u_.begin(), u_.end());
        return {grid_, std::move(v)};
    }

    void check_stability(const GridFunction& layer) {
        const double sigma = sigma_max(layer, params_);
        const TauBound bound = siefd_tau_bound(grid_.h(), sigma);
        if (bound.admits(cfg_.tau)) return;
        warned_ = true;
        if (warn_) {
            warn_("SIEFD time step " + std::to_string(cfg_.tau) +
                  " exceeds the linear stability bound " + std::to_string(bound.tau) +
                  " (h = " + std::to_string(grid_.h()) + ", sigma_max = " + std::to_string(sigma) + ")");
        }
    }

    Grid1D grid_;
    NonlinearityParams params_;
    StepperConfig cfg_;
    SolveStats stats_;
    std::vector<double> u_, res_, lower_, diag_, upper_, delta_;
    CyclicTridiagonalSolver tridiag_;
    std::function<void(const std::string&)> warn_;
    bool warned_ = false;
};

inline WaveState first_step(const InitialData& init, const NonlinearityParams& p,
                            const StepperConfig& cfg, const Grid1D& g) {
    return Stepper(g, p, cfg).first_step(init);
}

inline WaveState cnfd_step(const WaveState& state, const NonlinearityParams& p,
                           const StepperConfig& cfg, const Grid1D& g) {
    if (cfg.scheme != Scheme::cnfd) throw std::invalid_argument("cnfd_step: config selects SIEFD");
    Stepper s(g, p, cfg);
    return s.step(state);
}

inline WaveState siefd_step(const WaveState& state, const NonlinearityParams& p,
                            const StepperConfig& cfg, const Grid1D& g) {
    if (cfg.scheme != Scheme::siefd) throw std::invalid_argument("siefd_step: config selects CNFD");
    Stepper s(g, p, cfg);
    return s.step(state);
}

inline double discrete_energy(const WaveState& state, const NonlinearityParams& p,
                              const StepperConfig& cfg, const Grid1D& g) {
    return Stepper(g, p, cfg).discrete_energy(state);
}

}  // namespace logkg
