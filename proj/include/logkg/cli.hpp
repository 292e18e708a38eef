#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "logkg/analysis.hpp"
#include "logkg/plan.hpp"
#include "logkg/problems.hpp"
#include "logkg/reference_cache.hpp"
#include "logkg/runner.hpp"
#include "logkg/stability.hpp"

namespace logkg {

/// Process exit codes.
enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_solver = 2, exit_io = 3 };

namespace detail {

struct CliOptions {
    std::string scheme = "cnfd";
    std::string problem = "example1-gausson";
    std::string phi;
    std::string gamma;
    std::string samples;
    double epsilon = 0.05;
    double lambda = 1.0;
    std::vector<double> domain;
    std::size_t cells = 1024;
    double tau = 0.01;
    double T = 1.0;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    std::string out;
    std::string cache_dir = ReferenceCache::default_dir().string();
    std::string plan;
    unsigned threads = 0;
    bool paper_scale = false;
    std::optional<double> u_max;
    bool probe = false;
    std::string target;
};

inline void add_common(CLI::App* sub, CliOptions& o) {
    sub->add_option("--scheme", o.scheme, "time integrator")->check(CLI::IsMember({"cnfd", "siefd"}));
    sub->add_option("--problem", o.problem, "initial data")
        ->check(CLI::IsMember({"example1-gausson", "example1", "example2-cos-sin", "example2", "custom"}));
    sub->add_option("--phi", o.phi, "custom u(x,0) expression in x");
    sub->add_option("--gamma", o.gamma, "custom u_t(x,0) expression in x");
    sub->add_option("--samples", o.samples, "custom initial data file (columns phi gamma)");
    sub->add_option("--epsilon", o.epsilon, "regularization parameter");
    sub->add_option("--lambda", o.lambda, "nonlinear interaction strength");
    sub->add_option("--domain", o.domain, "periodic domain a b")->expected(2)->default_str("problem default");
    sub->add_option("--N", o.cells, "number of grid cells");
    sub->add_option("--tau", o.tau, "time step");
    sub->add_option("--T", o.T, "final time");
    sub->add_option("--newton-tol", o.newton_tol, "relative Newton tolerance");
    sub->add_option("--newton-max-iter", o.newton_max_iter, "Newton iteration cap per step");
    sub->add_option("--cache-dir", o.cache_dir, "reference cache directory (env LOGKG_CACHE_DIR)");
    sub->add_option("--threads", o.threads, "worker threads, 0 = all cores");
}

inline ExperimentPlan plan_from_flags(const CliOptions& o, ExperimentKind kind) {
    ExperimentPlan p;
    p.kind = kind;
    p.scheme = *parse_scheme(o.scheme);
    p.problem.kind = *parse_problem(o.problem);
    p.problem.phi = o.phi;
    p.problem.gamma = o.gamma;
    p.problem.samples = o.samples;
    if (!o.phi.empty() || !o.samples.empty()) p.problem.kind = ProblemKind::custom;
    const auto [a, b] = o.domain.size() == 2 ? std::pair{o.domain[0], o.domain[1]} : default_domain(p.problem.kind);
    p.a = a;
    p.b = b;
    p.T = o.T;
    p.lambda = o.lambda;
    p.epsilons = {o.epsilon};
    p.cells = {o.cells};
    p.taus = {o.tau};
    p.newton_tol = o.newton_tol;
    p.newton_max_iter = o.newton_max_iter;
    p.reference.policy = kind == ExperimentKind::energy_drift ? ReferencePolicy::none : ReferencePolicy::automatic;
    return p;
}

inline std::filesystem::path sibling(const std::filesystem::path& csv, const std::string& suffix) {
    auto stem = csv.stem().string();
    return csv.parent_path() / (stem + suffix + ".csv");
}

inline int status_code(const SweepResult& r) {
    for (const auto& row : r.rows) {
        if (row.status == RowStatus::nonconvergence) return exit_solver;
    }
    return exit_ok;
}

inline void write_outputs(const SweepResult& r, const std::filesystem::path& csv, std::ostream& out) {
    emit_csv(r, csv);
    out << "wrote " << csv.string() << '\n';
    bool energy = false;
    bool snaps = false;
    for (const auto& row : r.rows) {
        energy = energy || !row.energy_series.empty();
        snaps = snaps || !row.snapshots.empty();
    }
    if (energy) {
        emit_energy_csv(r, sibling(csv, "_energy"));
        out << "wrote " << sibling(csv, "_energy").string() << '\n';
    }
    if (snaps) {
        emit_snapshot_csv(r, sibling(csv, "_snapshots"));
        out << "wrote " << sibling(csv, "_snapshots").string() << '\n';
    }
}

inline const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

// Checks the reproduced numbers against the desk-scale expectations.
inline void print_checks(const std::string& target, const std::vector<SweepResult>& results, std::ostream& out) {
    auto rates_within = [](const SweepResult& r, double lo, double hi, bool l2_only) {
        bool any = false;
        for (const auto& row : r.rows) {
            for (const auto& v : {row.rate_l2, row.rate_linf, row.rate_h1}) {
                if (!v) continue;
                any = true;
                if (*v < lo || *v > hi) return false;
                if (l2_only) break;
            }
        }
        return any;
    };
    char buf[200];
    if (target == "table1") {
        out << "check: temporal rates in [1.8, 2.2]: " << verdict(rates_within(results[0], 1.8, 2.2, false)) << '\n';
    } else if (target == "table2") {
        out << "check: spatial rates in [1.9, 2.1]: " << verdict(rates_within(results[0], 1.9, 2.1, false)) << '\n';
    } else if (target == "table3") {
        out << "check: diagonal l2 rates in [1.7, 2.2]: " << verdict(rates_within(results[0], 1.7, 2.2, true))
            << '\n';
        const auto& rows = results[1].rows;
        bool ok = rows.size() >= 2;
        for (std::size_t i = rows.size(); i-- > 1;) {
            // rows are sorted by ascending epsilon; compare each epsilon with epsilon/4
            if (!rows[i].error || !rows[i - 1].error) {
                ok = false;
                continue;
            }
            const double ratio = rows[i].error->l2 / rows[i - 1].error->l2;
            ok = ok && ratio >= 4.0 / 3.0 && ratio <= 12.0;
            std::snprintf(buf, sizeof buf, "  eps %.3e -> %.3e: error ratio %.3f\n", rows[i].epsilon,
                          rows[i - 1].epsilon, ratio);
            out << buf;
        }
        out << "check: column error ratio per 4x epsilon reduction in [4/3, 12]: " << verdict(ok) << '\n';
    } else if (target == "fig1") {
        if (auto s = epsilon_slopes(results[0])) {
            const bool ok = s->l2 >= 0.85 && s->l2 <= 1.15 && s->linf >= 0.85 && s->linf <= 1.15 &&
                            s->h1 >= 0.85 && s->h1 <= 1.15;
            out << "check: epsilon slopes in [0.85, 1.15]: " << verdict(ok) << '\n';
        }
    } else if (target == "fig-energy") {
        bool ok = true;
        for (const auto& r : results) {
            for (const auto& row : r.rows) ok = ok && row.energy_drift && *row.energy_drift <= energy_drift_tolerance;
        }
        out << "check: energy drift <= 1e-8: " << verdict(ok) << '\n';
    }
}

}  // namespace detail

/// Command-line entry point; returns the process exit code.
inline int cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Energy-conserving finite difference solvers for the regularized logarithmic Klein-Gordon equation",
                 "logkg"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    detail::CliOptions so, wo, dr, st, gp, rp;
    dr.problem = "example2-cos-sin";
    dr.cells = 128;
    dr.T = 10.0;
    st.cells = 320;

    auto* solve = app.add_subcommand("solve", "single trajectory; errors against the exact solution when known");
    detail::add_common(solve, so);
    solve->add_option("--out", so.out, "CSV output path");

    auto* sweep = app.add_subcommand("sweep", "run an experiment plan file");
    sweep->add_option("--plan", wo.plan, "plan file")->required();
    sweep->add_option("--out", wo.out, "CSV output path (overrides the plan)");
    sweep->add_option("--cache-dir", wo.cache_dir, "reference cache directory (env LOGKG_CACHE_DIR)");
    sweep->add_option("--threads", wo.threads, "worker threads, 0 = all cores");

    auto* drift = app.add_subcommand("energy-drift", "energy conservation run with energy series and snapshots");
    detail::add_common(drift, dr);
    drift->add_option("--out", dr.out, "CSV output path");

    auto* stab = app.add_subcommand("stability-check", "SIEFD step bound and optional empirical probe");
    detail::add_common(stab, st);
    stab->add_option("--u-max", st.u_max, "bound on ||u||_inf")->default_str("max |phi|");
    stab->add_flag("--probe", st.probe, "run the empirical blow-up probe (SIEFD 0.9x and 1.5x, CNFD 10x the bound)");
    stab->add_option("--out", st.out, "CSV output path for --probe");

    auto* gap = app.add_subcommand("gap-bound", "regularization energy gap of the initial data and its bound");
    detail::add_common(gap, gp);

    auto* repro = app.add_subcommand("reproduce", "reproduce a convergence table or figure as CSV");
    repro->add_option("target", rp.target, "what to reproduce")
        ->required()
        ->check(CLI::IsMember({"table1", "table2", "table3", "fig1", "fig-energy", "stability"}));
    repro->add_option("--out", rp.out, "output directory")->default_str("results");
    repro->add_option("--cache-dir", rp.cache_dir, "reference cache directory (env LOGKG_CACHE_DIR)");
    repro->add_option("--threads", rp.threads, "worker threads, 0 = all cores");
    repro->add_flag("--paper-scale", rp.paper_scale, "full paper resolutions instead of desk-scale defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    const detail::CliOptions& o = *solve ? so : *sweep ? wo : *drift ? dr : *stab ? st : *gap ? gp : rp;
    try {
        const RunOptions ro{o.threads, o.cache_dir};
        if (*solve || *drift) {
            auto plan = detail::plan_from_flags(o, *solve ? ExperimentKind::single_solve : ExperimentKind::energy_drift);
            if (*drift) plan.snapshot_times = {0.0, 1.0, 5.0};
            std::erase_if(plan.snapshot_times, [&](double t) { return t > plan.T; });
            const auto r = run(plan, ro);
            print_summary(r, out);
            if (!o.out.empty()) detail::write_outputs(r, o.out, out);
            return detail::status_code(r);
        }
        if (*sweep) {
            auto plan = plan_from_config(o.plan);
            if (!o.out.empty()) plan.csv_path = o.out;
            const auto r = run(plan, ro);
            print_summary(r, out);
            if (!plan.csv_path.empty()) detail::write_outputs(r, plan.csv_path, out);
            return detail::status_code(r);
        }
        if (*stab) {
            const auto plan = detail::plan_from_flags(o, ExperimentKind::stability_probe);
            const Grid1D grid(plan.a, plan.b, o.cells);
            const NonlinearityParams p{o.lambda, o.epsilon};
            check_params(p);
            double sigma = 0.0;
            if (o.u_max) {
                if (!(*o.u_max >= 0.0)) throw DomainError("--u-max must be >= 0");
                sigma = sigma_max(GridFunction::constant(grid, *o.u_max), p);
            } else {
                sigma = sigma_max(make_initial_data(plan.problem, grid).phi, p);
            }
            const TauBound bound = plan.scheme == Scheme::cnfd ? cnfd_tau_bound() : siefd_tau_bound(grid.h(), sigma);
            char buf[200];
            std::snprintf(buf, sizeof buf, "scheme %s, h = %.6g, sigma_max = %.6g\n", to_string(plan.scheme), grid.h(),
                          sigma);
            out << buf;
            if (bound.unconditional) {
                out << "tau bound: unconditional\n";
            } else {
                std::snprintf(buf, sizeof buf, "tau bound: %.7g\n", bound.tau);
                out << buf;
                std::snprintf(buf, sizeof buf, "tau = %.6g %s the bound\n", o.tau,
                              bound.admits(o.tau) ? "satisfies" : "violates");
                out << buf;
            }
            if (o.probe) {
                ExperimentPlan probe = plan;
                probe.reference.policy = ReferencePolicy::none;
                probe.probe.multipliers =
                    plan.scheme == Scheme::siefd ? std::vector<double>{0.9, 1.5} : std::vector<double>{10.0};
                const auto r = run(probe, ro);
                print_summary(r, out);
                if (!o.out.empty()) detail::write_outputs(r, o.out, out);
            }
            return exit_ok;
        }
        if (*gap) {
            const auto plan = detail::plan_from_flags(o, ExperimentKind::single_solve);
            const Grid1D grid(plan.a, plan.b, o.cells);
            const NonlinearityParams p{o.lambda, o.epsilon};
            const auto g = energy_gap_bound(make_initial_data(plan.problem, grid).phi, p);
            char buf[200];
            std::snprintf(buf, sizeof buf, "gap = %.17g\nbound = %.17g\nwithin bound: %s\n", g.gap, g.bound,
                          g.within_bound() ? "yes" : "no");
            out << buf;
            return exit_ok;
        }
        if (*repro) {
            const std::filesystem::path dir = o.out.empty() ? std::filesystem::path("results") : std::filesystem::path(o.out);
            std::vector<SweepResult> results;
            int code = exit_ok;
            for (const auto& plan : reproduction_plans(o.target, o.paper_scale)) {
                results.push_back(run(plan, ro));
                print_summary(results.back(), out);
                detail::write_outputs(results.back(), dir / plan.csv_path, out);
                code = std::max(code, detail::status_code(results.back()));
            }
            detail::print_checks(o.target, results, out);
            return code;
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const CacheError& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const NonConvergence& e) {
        err << "solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return exit_usage;
}

}  // namespace logkg
