#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "logkg/analysis.hpp"
#include "logkg/plan.hpp"
#include "logkg/problems.hpp"
#include "logkg/reference_cache.hpp"
#include "logkg/schemes.hpp"
#include "logkg/stability.hpp"

namespace logkg {

/// Relative drift above this marks a row as degraded.
inline constexpr double energy_drift_tolerance = 1e-8;

enum class RowStatus { ok, nonconvergence, degraded, bounded, blow_up };

inline const char* to_string(RowStatus s) {
    switch (s) {
        case RowStatus::ok: return "ok";
        case RowStatus::nonconvergence: return "nonconvergence";
        case RowStatus::degraded: return "degraded";
        case RowStatus::bounded: return "bounded";
        default: return "blow-up";
    }
}

struct TrajectoryOptions {
    std::size_t steps = 1;                ///< total layers advanced, including the Taylor start
    bool record_energy = false;           ///< keep (t, E) after every step
    std::vector<double> snapshot_times;   ///< rounded to the nearest layer
    double growth_threshold = 0.0;        ///< stop early once ||u^n|| / ||u^0|| exceeds it; 0 disables
};

struct Trajectory {
    explicit Trajectory(WaveState s) : state(std::move(s)) {}

    WaveState state;
    double energy0 = 0.0;
    double drift = 0.0;  ///< max_n |E^n - E^0| / (1 + |E^0|)
    std::vector<std::pair<double, double>> energy;
    std::vector<std::pair<double, GridFunction>> snapshots;
    long newton_iterations = 0;
    std::size_t implicit_steps = 0;
    bool used_fallback = false;
    bool stability_warning = false;
    double sigma_running_max = 0.0;
    double growth = 1.0;  ///< max_n ||u^n||_l2 / ||u^0||_l2
    bool blew_up = false;
};

/// Runs one trajectory from t = 0 over `opts.steps` layers.
/// NonConvergence propagates to the caller.
inline Trajectory integrate(const Grid1D& grid, const NonlinearityParams& params, const StepperConfig& cfg,
                            const InitialData& init, const TrajectoryOptions& opts) {
    Stepper stepper(grid, params, cfg);
    Trajectory tr(stepper.first_step(init));

    std::vector<std::size_t> snap_steps;
    for (double t : opts.snapshot_times) snap_steps.push_back(static_cast<std::size_t>(std::llround(t / cfg.tau)));
    auto snapshot = [&](std::size_t n, const GridFunction& u) {
        for (std::size_t i = 0; i < snap_steps.size(); ++i) {
            if (snap_steps[i] == n) tr.snapshots.emplace_back(opts.snapshot_times[i], u);
        }
    };
    snapshot(0, init.phi);
    snapshot(1, tr.state.curr);

    const double base = std::max(norm_l2(init.phi), std::numeric_limits<double>::min());
    tr.sigma_running_max = sigma_max(init.phi, params);
    tr.energy0 = stepper.discrete_energy(tr.state);
    if (opts.record_energy) tr.energy.emplace_back(tr.state.t, tr.energy0);

    auto observe = [&]() {
        const double e = stepper.discrete_energy(tr.state);
        if (opts.record_energy) tr.energy.emplace_back(tr.state.t, e);
        const double d = std::abs(e - tr.energy0) / (1.0 + std::abs(tr.energy0));
        tr.drift = std::isfinite(d) ? std::max(tr.drift, d) : std::numeric_limits<double>::infinity();
        tr.sigma_running_max = std::max(tr.sigma_running_max, sigma_max(tr.state.curr, params));
        const double norm = norm_l2(tr.state.curr);
        tr.growth = std::isfinite(norm) ? std::max(tr.growth, norm / base) : std::numeric_limits<double>::infinity();
        return opts.growth_threshold > 0.0 && !(tr.growth <= opts.growth_threshold);
    };
    if (observe()) {
        tr.blew_up = true;
        return tr;
    }

    while (tr.state.n < opts.steps) {
        tr.state = stepper.step(tr.state);
        const auto& st = stepper.last_stats();
        tr.newton_iterations += st.newton_iterations;
        tr.used_fallback = tr.used_fallback || st.used_fallback;
        ++tr.implicit_steps;
        snapshot(tr.state.n, tr.state.curr);
        if (observe()) {
            tr.blew_up = true;
            break;
        }
    }
    tr.stability_warning = stepper.stability_warning_raised();
    return tr;
}

struct SweepRow {
    Scheme scheme = Scheme::cnfd;
    std::string problem;
    double epsilon = 0.0;
    double lambda = 1.0;
    std::size_t cells = 0;
    double h = 0.0;
    double tau = 0.0;
    double T = 0.0;
    std::optional<ErrorReport> error;
    std::optional<double> rate_l2;
    std::optional<double> rate_linf;
    std::optional<double> rate_h1;
    std::optional<double> energy_drift;
    std::optional<double> newton_avg_iters;
    RowStatus status = RowStatus::ok;
    std::string message;
    double wall_seconds = 0.0;  ///< not part of the CSV
    double growth = 1.0;
    double tau_multiplier = 0.0;  ///< stability probes only
    bool stability_warning = false;
    double sigma_running_max = 0.0;
    std::vector<std::pair<double, double>> energy_series;
    std::vector<std::pair<double, GridFunction>> snapshots;
};

struct SweepResult {
    ExperimentPlan plan;
    std::vector<SweepRow> rows;
};

struct RunOptions {
    unsigned threads = 0;  ///< 0: hardware concurrency
    std::filesystem::path cache_dir = ReferenceCache::default_dir();
};

namespace detail {

inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

struct Cell {
    std::size_t cells;
    double tau;
    double epsilon;
    double multiplier = 0.0;
};

inline std::vector<Cell> expand_cells(const ExperimentPlan& p) {
    std::vector<Cell> out;
    switch (p.kind) {
        case ExperimentKind::diagonal_sweep:
            for (std::size_t i = 0; i < p.cells.size(); ++i) out.push_back({p.cells[i], p.taus[i], p.epsilons[i]});
            break;
        case ExperimentKind::stability_probe:
            for (double e : p.epsilons)
                for (double m : p.probe.multipliers) out.push_back({p.cells[0], 0.0, e, m});
            break;
        default:
            for (double e : p.epsilons)
                for (auto n : p.cells)
                    for (double t : p.taus) out.push_back({n, t, e});
    }
    return out;
}

inline Truth truth_source(const ExperimentPlan& p) {
    switch (p.reference.policy) {
        case ReferencePolicy::exact: return Truth::exact_logkge;
        case ReferencePolicy::fine: return Truth::reference_rlogkge;
        default: break;
    }
    if (has_exact_solution(p.problem) &&
        (p.kind == ExperimentKind::diagonal_sweep || p.kind == ExperimentKind::epsilon_sweep ||
         p.kind == ExperimentKind::single_solve)) {
        return Truth::exact_logkge;
    }
    return Truth::reference_rlogkge;
}

inline bool wants_errors(const ExperimentPlan& p) {
    if (p.kind == ExperimentKind::stability_probe || p.kind == ExperimentKind::energy_drift) {
        return p.reference.policy == ReferencePolicy::exact || p.reference.policy == ReferencePolicy::fine;
    }
    if (p.reference.policy == ReferencePolicy::none) return false;
    if (p.kind == ExperimentKind::single_solve && p.reference.policy == ReferencePolicy::automatic) {
        return has_exact_solution(p.problem);
    }
    return true;
}

// Reference resolution: h_finest / h_divisor (same h for temporal sweeps)
// and tau_finest / tau_divisor (same tau for spatial sweeps), unless given.
inline std::pair<std::size_t, double> reference_resolution(const ExperimentPlan& p) {
    const std::size_t finest_n = *std::max_element(p.cells.begin(), p.cells.end());
    const double finest_tau = *std::min_element(p.taus.begin(), p.taus.end());
    std::size_t n = p.reference.cells;
    if (n == 0) {
        n = finest_n * (p.kind == ExperimentKind::temporal_sweep ? 1 : static_cast<std::size_t>(p.reference.h_divisor));
    }
    double tau = p.reference.tau;
    if (!(tau > 0.0)) tau = finest_tau / (p.kind == ExperimentKind::spatial_sweep ? 1 : p.reference.tau_divisor);
    for (auto c : p.cells) {
        if (n % c != 0) throw PlanError({"reference.N: " + std::to_string(n) + " is not a multiple of N = " + std::to_string(c)});
    }
    return {n, tau};
}

}  // namespace detail

/// Executes every cell of the plan. Solver failures are recorded per row;
/// cache corruption and I/O problems abort with an exception.
inline SweepResult run(const ExperimentPlan& plan, const RunOptions& opts = {}) {
    validate(plan);
    SweepResult result{plan, {}};
    const auto cells = detail::expand_cells(plan);
    const std::string pkey = problem_key(plan.problem);
    const bool errors = detail::wants_errors(plan);
    const Truth truth = detail::truth_source(plan);
    if (errors && truth == Truth::exact_logkge && !has_exact_solution(plan.problem)) {
        throw PlanError({"reference.policy: exact requires example1-gausson"});
    }

    // References first, one per distinct epsilon, shared through the cache.
    std::map<double, WaveState> references;
    std::optional<Grid1D> ref_grid;
    if (errors && truth == Truth::reference_rlogkge) {
        const auto [n_ref, tau_ref] = detail::reference_resolution(plan);
        ref_grid.emplace(plan.a, plan.b, n_ref);
        std::vector<double> eps;
        for (const auto& c : cells) {
            if (std::find(eps.begin(), eps.end(), c.epsilon) == eps.end()) eps.push_back(c.epsilon);
        }
        std::vector<std::optional<WaveState>> layers(eps.size());
        const ReferenceCache cache(opts.cache_dir);
        detail::parallel_for(eps.size(), opts.threads, [&, n_ref = n_ref, tau_ref = tau_ref](std::size_t i) {
            ReferenceKey key{Scheme::cnfd, pkey, eps[i], plan.lambda, plan.a, plan.b, n_ref, tau_ref, plan.T,
                             plan.newton_tol};
            layers[i] = cache.get_or_compute(key, [&] {
                const NonlinearityParams p{plan.lambda, eps[i]};
                StepperConfig cfg{Scheme::cnfd, tau_ref, plan.newton_tol, plan.newton_max_iter, plan.fallback};
                const auto init = make_initial_data(plan.problem, *ref_grid);
                TrajectoryOptions to;
                to.steps = step_count(plan.T, tau_ref);
                return integrate(*ref_grid, p, cfg, init, to).state;
            });
        });
        for (std::size_t i = 0; i < eps.size(); ++i) references.emplace(eps[i], *std::move(layers[i]));
    }

    result.rows.resize(cells.size());
    detail::parallel_for(cells.size(), opts.threads, [&](std::size_t i) {
        const auto& c = cells[i];
        const auto start = std::chrono::steady_clock::now();
        SweepRow& row = result.rows[i];
        const Grid1D grid(plan.a, plan.b, c.cells);
        const NonlinearityParams p{plan.lambda, c.epsilon};
        const auto init = make_initial_data(plan.problem, grid);
        row.scheme = plan.scheme;
        row.problem = problem_name(plan.problem.kind);
        row.epsilon = c.epsilon;
        row.lambda = plan.lambda;
        row.cells = c.cells;
        row.h = grid.h();

        TrajectoryOptions to;
        double tau = c.tau;
        if (plan.kind == ExperimentKind::stability_probe) {
            const TauBound bound = siefd_tau_bound(grid.h(), sigma_max(init.phi, p));
            tau = c.multiplier * (bound.unconditional ? grid.h() : bound.tau);
            row.tau_multiplier = c.multiplier;
            if (bound.unconditional) row.message = "bound unconditional; multiplier applied to h";
            to.steps = plan.probe.steps;
            to.growth_threshold = plan.probe.growth_threshold;
        } else {
            to.steps = step_count(plan.T, tau);
            to.record_energy = plan.kind == ExperimentKind::energy_drift;
            to.snapshot_times = plan.snapshot_times;
        }
        row.tau = tau;
        row.T = plan.kind == ExperimentKind::stability_probe ? tau * static_cast<double>(plan.probe.steps) : plan.T;

        const StepperConfig cfg{plan.scheme, tau, plan.newton_tol, plan.newton_max_iter, plan.fallback};
        try {
            const Trajectory tr = integrate(grid, p, cfg, init, to);
            row.growth = tr.growth;
            row.stability_warning = tr.stability_warning;
            row.sigma_running_max = tr.sigma_running_max;
            row.energy_series = tr.energy;
            row.snapshots = tr.snapshots;
            if (std::isfinite(tr.drift)) row.energy_drift = tr.drift;
            if (tr.implicit_steps > 0) {
                row.newton_avg_iters = static_cast<double>(tr.newton_iterations) / static_cast<double>(tr.implicit_steps);
            }
            if (plan.kind == ExperimentKind::stability_probe) {
                row.status = tr.blew_up ? RowStatus::blow_up : RowStatus::bounded;
            } else {
                row.status = (tr.used_fallback || !(tr.drift <= energy_drift_tolerance)) ? RowStatus::degraded
                                                                                          : RowStatus::ok;
                if (tr.used_fallback) row.message = "fixed-point fallback used";
                if (errors) {
                    if (truth == Truth::exact_logkge) {
                        row.error = error_report(tr.state.curr, *exact_solution(plan.problem, grid, plan.T), truth);
                    } else {
                        row.error = error_report(tr.state.curr, restrict_to(references.at(c.epsilon).curr, grid), truth);
                    }
                }
            }
        } catch (const NonConvergence& e) {
            row.status = plan.kind == ExperimentKind::stability_probe ? RowStatus::blow_up : RowStatus::nonconvergence;
            row.message = e.what();
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });

    std::stable_sort(result.rows.begin(), result.rows.end(), [](const SweepRow& x, const SweepRow& y) {
        return std::tie(x.epsilon, x.h, x.tau) < std::tie(y.epsilon, y.h, y.tau);
    });

    // Observed orders, attached to the finer row of each adjacent pair.
    auto attach = [&](std::vector<SweepRow*> series, auto step_of) {
        std::sort(series.begin(), series.end(), [&](auto* x, auto* y) { return step_of(*x) > step_of(*y); });
        for (std::size_t i = 0; i + 1 < series.size(); ++i) {
            SweepRow& coarse = *series[i];
            SweepRow& fine = *series[i + 1];
            if (!coarse.error || !fine.error) continue;
            auto rate = [&](double e0, double e1) -> std::optional<double> {
                if (!(e0 > 0.0) || !(e1 > 0.0)) return std::nullopt;
                return observed_order({{step_of(coarse), e0}, {step_of(fine), e1}})[0];
            };
            fine.rate_l2 = rate(coarse.error->l2, fine.error->l2);
            fine.rate_linf = rate(coarse.error->linf, fine.error->linf);
            fine.rate_h1 = rate(coarse.error->h1, fine.error->h1);
        }
    };
    if (plan.rates) {
        std::map<double, std::vector<SweepRow*>> by_eps;
        std::vector<SweepRow*> all;
        for (auto& r : result.rows) {
            by_eps[r.epsilon].push_back(&r);
            all.push_back(&r);
        }
        switch (plan.kind) {
            case ExperimentKind::temporal_sweep:
                for (auto& [e, s] : by_eps) attach(s, [](const SweepRow& r) { return r.tau; });
                break;
            case ExperimentKind::spatial_sweep:
                for (auto& [e, s] : by_eps) attach(s, [](const SweepRow& r) { return r.h; });
                break;
            case ExperimentKind::epsilon_sweep:
                attach(all, [](const SweepRow& r) { return r.epsilon; });
                break;
            case ExperimentKind::diagonal_sweep:
                attach(all, [](const SweepRow& r) { return r.tau; });
                break;
            default:
                break;
        }
    }
    return result;
}

inline constexpr const char* csv_header =
    "scheme,problem,epsilon,lambda,h,tau,T,norm_l2,norm_linf,norm_h1,rate_l2,rate_linf,rate_h1,"
    "energy_drift,newton_avg_iters,status";

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt17(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

inline void close_output(std::ofstream& out, const std::filesystem::path& path) {
    out.close();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// One CSV line per row (no trailing newline).
inline std::string csv_line(const SweepRow& r) {
    using detail::fmt17;
    std::string s = std::string(to_string(r.scheme)) + ',' + r.problem + ',' + fmt17(r.epsilon) + ',' +
                    fmt17(r.lambda) + ',' + fmt17(r.h) + ',' + fmt17(r.tau) + ',' + fmt17(r.T) + ',';
    if (r.error) s += fmt17(r.error->l2) + ',' + fmt17(r.error->linf) + ',' + fmt17(r.error->h1) + ',';
    else s += ",,,";
    s += fmt17(r.rate_l2) + ',' + fmt17(r.rate_linf) + ',' + fmt17(r.rate_h1) + ',' + fmt17(r.energy_drift) + ',' +
         fmt17(r.newton_avg_iters) + ',' + to_string(r.status);
    return s;
}

inline void emit_csv(const SweepResult& result, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << csv_header << '\n';
    for (const auto& r : result.rows) out << csv_line(r) << '\n';
    detail::close_output(out, path);
}

/// t, E, drift per step for rows that recorded an energy series.
inline void emit_energy_csv(const SweepResult& result, const std::filesystem::path& path) {
    using detail::fmt17;
    auto out = detail::open_output(path);
    out << "scheme,epsilon,h,tau,t,energy,drift\n";
    for (const auto& r : result.rows) {
        if (r.energy_series.empty()) continue;
        const double e0 = r.energy_series.front().second;
        for (const auto& [t, e] : r.energy_series) {
            out << to_string(r.scheme) << ',' << fmt17(r.epsilon) << ',' << fmt17(r.h) << ',' << fmt17(r.tau) << ','
                << fmt17(t) << ',' << fmt17(e) << ',' << fmt17(std::abs(e - e0) / (1.0 + std::abs(e0))) << '\n';
        }
    }
    detail::close_output(out, path);
}

/// Waveform snapshots as long-format rows (t, x, u).
inline void emit_snapshot_csv(const SweepResult& result, const std::filesystem::path& path) {
    using detail::fmt17;
    auto out = detail::open_output(path);
    out << "scheme,epsilon,t,x,u\n";
    for (const auto& r : result.rows) {
        for (const auto& [t, u] : r.snapshots) {
            for (std::size_t j = 0; j <= u.cells(); ++j) {
                out << to_string(r.scheme) << ',' << fmt17(r.epsilon) << ',' << fmt17(t) << ','
                    << fmt17(u.grid().node(j)) << ',' << fmt17(u[j]) << '\n';
            }
        }
    }
    detail::close_output(out, path);
}

/// Least-squares slopes of log error against log epsilon, per norm.
struct EpsilonSlopes {
    double l2;
    double linf;
    double h1;
};

inline std::optional<EpsilonSlopes> epsilon_slopes(const SweepResult& result) {
    std::vector<std::pair<double, double>> l2, linf, h1;
    for (const auto& r : result.rows) {
        if (!r.error) continue;
        l2.emplace_back(r.epsilon, r.error->l2);
        linf.emplace_back(r.epsilon, r.error->linf);
        h1.emplace_back(r.epsilon, r.error->h1);
    }
    if (l2.size() < 2) return std::nullopt;
    return EpsilonSlopes{fitted_slope(l2), fitted_slope(linf), fitted_slope(h1)};
}

/// Human-readable table of the result.
inline void print_summary(const SweepResult& result, std::ostream& os) {
    char buf[256];
    os << (result.plan.name.empty() ? to_string(result.plan.kind) : result.plan.name) << " ("
       << to_string(result.plan.scheme) << ", " << problem_name(result.plan.problem.kind) << ", T = " << result.plan.T
       << ")\n";
    std::snprintf(buf, sizeof buf, "%11s %6s %11s %11s %11s %11s %6s %6s %6s %10s %7s  %s\n", "epsilon", "N", "tau",
                  "err_l2", "err_linf", "err_h1", "r_l2", "r_inf", "r_h1", "drift", "s", "status");
    os << buf;
    auto num = [](const std::optional<double>& v, const char* f) {
        char b[32];
        if (!v) return std::string("-");
        std::snprintf(b, sizeof b, f, *v);
        return std::string(b);
    };
    for (const auto& r : result.rows) {
        std::snprintf(buf, sizeof buf, "%11.4e %6zu %11.4e %11s %11s %11s %6s %6s %6s %10s %7.2f  %s%s%s\n",
                      r.epsilon, r.cells, r.tau, num(r.error ? std::optional(r.error->l2) : std::nullopt, "%.3e").c_str(),
                      num(r.error ? std::optional(r.error->linf) : std::nullopt, "%.3e").c_str(),
                      num(r.error ? std::optional(r.error->h1) : std::nullopt, "%.3e").c_str(),
                      num(r.rate_l2, "%.2f").c_str(), num(r.rate_linf, "%.2f").c_str(), num(r.rate_h1, "%.2f").c_str(),
                      num(r.energy_drift, "%.1e").c_str(), r.wall_seconds, to_string(r.status),
                      r.message.empty() ? "" : ": ", r.message.c_str());
        os << buf;
    }
    if (result.plan.kind == ExperimentKind::epsilon_sweep) {
        if (auto s = epsilon_slopes(result)) {
            std::snprintf(buf, sizeof buf, "fitted slope vs epsilon: l2 %.3f, linf %.3f, h1 %.3f\n", s->l2, s->linf,
                          s->h1);
            os << buf;
        }
    }
    if (result.plan.kind == ExperimentKind::stability_probe) {
        for (const auto& r : result.rows) {
            std::snprintf(buf, sizeof buf, "  multiplier %.2f: tau %.6g, growth %.3g, %s\n", r.tau_multiplier, r.tau,
                          r.growth, to_string(r.status));
            os << buf;
        }
    }
}

}  // namespace logkg
