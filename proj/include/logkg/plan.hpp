#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "logkg/problems.hpp"
#include "logkg/schemes.hpp"

namespace logkg {

enum class ExperimentKind {
    temporal_sweep,
    spatial_sweep,
    epsilon_sweep,
    diagonal_sweep,
    energy_drift,
    stability_probe,
    single_solve,
};

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::temporal_sweep: return "temporal-sweep";
        case ExperimentKind::spatial_sweep: return "spatial-sweep";
        case ExperimentKind::epsilon_sweep: return "epsilon-sweep";
        case ExperimentKind::diagonal_sweep: return "diagonal-sweep";
        case ExperimentKind::energy_drift: return "energy-drift";
        case ExperimentKind::stability_probe: return "stability-probe";
        default: return "single-solve";
    }
}

inline std::optional<ExperimentKind> parse_kind(const std::string& s) {
    for (auto k : {ExperimentKind::temporal_sweep, ExperimentKind::spatial_sweep,
                   ExperimentKind::epsilon_sweep, ExperimentKind::diagonal_sweep,
                   ExperimentKind::energy_drift, ExperimentKind::stability_probe,
                   ExperimentKind::single_solve}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

inline bool is_sweep(ExperimentKind k) {
    return k == ExperimentKind::temporal_sweep || k == ExperimentKind::spatial_sweep ||
           k == ExperimentKind::epsilon_sweep || k == ExperimentKind::diagonal_sweep;
}

/// Where the error of a cell is measured against.
enum class ReferencePolicy {
    automatic,  ///< exact solution when the problem has one and the sweep compares to the
                ///< logarithmic equation, fine CNFD reference otherwise
    exact,
    fine,
    none,
};

inline const char* to_string(ReferencePolicy p) {
    switch (p) {
        case ReferencePolicy::exact: return "exact";
        case ReferencePolicy::fine: return "fine";
        case ReferencePolicy::none: return "none";
        default: return "auto";
    }
}

struct ReferenceSpec {
    ReferencePolicy policy = ReferencePolicy::automatic;
    std::size_t cells = 0;  ///< 0: finest swept N times h_divisor (spatial) or the swept N
    double tau = 0.0;       ///< 0: finest swept tau / tau_divisor (temporal) or the swept tau
    int h_divisor = 4;
    int tau_divisor = 8;

    friend bool operator==(const ReferenceSpec&, const ReferenceSpec&) = default;
};

struct ProbeSpec {
    std::vector<double> multipliers{0.9, 1.5};
    std::size_t steps = 500;
    double growth_threshold = 10.0;

    friend bool operator==(const ProbeSpec&, const ProbeSpec&) = default;
};

/// Declarative description of one experiment.
struct ExperimentPlan {
    std::string name;
    ExperimentKind kind = ExperimentKind::single_solve;
    Scheme scheme = Scheme::cnfd;
    ProblemSpec problem;
    double a = -16.0;
    double b = 16.0;
    double T = 1.0;
    double lambda = 1.0;
    std::vector<double> epsilons{0.05};
    std::vector<std::size_t> cells;
    std::vector<double> taus;
    bool rates = false;
    ReferenceSpec reference;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    Fallback fallback = Fallback::damped_fixed_point;
    ProbeSpec probe;
    std::vector<double> snapshot_times;
    std::string csv_path;

    friend bool operator==(const ExperimentPlan&, const ExperimentPlan&) = default;
};

/// All validation or parse problems of a plan, not just the first.
class PlanError : public std::invalid_argument {
public:
    explicit PlanError(std::vector<std::string> errors)
        : std::invalid_argument(join(errors)), errors_(std::move(errors)) {}

    const std::vector<std::string>& errors() const { return errors_; }

private:
    static std::string join(const std::vector<std::string>& errs) {
        std::string s = "invalid plan:";
        for (const auto& e : errs) s += "\n  " + e;
        return s;
    }
    std::vector<std::string> errors_;
};

/// start * ratio^j for j = 0..count-1.
inline std::vector<double> geometric(double start, double ratio, std::size_t count) {
    std::vector<double> v(count);
    for (std::size_t j = 0; j < count; ++j) v[j] = start * std::pow(ratio, static_cast<double>(j));
    return v;
}

namespace detail {

inline bool close_rel(double x, double y, double tol = 1e-9) {
    return std::abs(x - y) <= tol * std::max(std::abs(x), std::abs(y));
}

inline bool steps_integral(double T, double tau) {
    const double steps = std::round(T / tau);
    return steps >= 1.0 && close_rel(steps * tau, T);
}

}  // namespace detail

/// Number of time steps T / tau (validated to be an integer).
inline std::size_t step_count(double T, double tau) {
    return static_cast<std::size_t>(std::llround(T / tau));
}

/// Checks every invariant of the plan; throws PlanError listing all problems.
inline void validate(const ExperimentPlan& p) {
    std::vector<std::string> err;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) err.push_back(msg);
    };
    const auto kind = p.kind;

    need(p.b > p.a, "experiment.domain: need a < b");
    need(p.T > 0.0 && std::isfinite(p.T), "experiment.T: must be > 0");
    need(std::isfinite(p.lambda), "experiment.lambda: must be finite");
    need(!p.epsilons.empty(), "grid.epsilon: at least one value required");
    for (double e : p.epsilons) need(e > 0.0 && std::isfinite(e), "grid.epsilon: values must be > 0");
    need(!p.cells.empty(), "grid.N: at least one value required");
    for (auto n : p.cells) need(n >= 4, "grid.N: values must be >= 4");
    if (kind != ExperimentKind::stability_probe) {
        need(!p.taus.empty(), "grid.tau: at least one value required");
        for (double t : p.taus) {
            need(t > 0.0, "grid.tau: values must be > 0");
            if (t > 0.0 && p.T > 0.0) {
                need(detail::steps_integral(p.T, t), "grid.tau: T must be an integer multiple of every tau");
            }
        }
    }
    need(p.newton_tol > 0.0 && p.newton_tol <= 1e-6, "solver.newton_tol: must lie in (0, 1e-6]");
    need(p.newton_max_iter >= 1, "solver.newton_max_iter: must be >= 1");

    auto single = [&](std::size_t count, const char* field) {
        need(count == 1, std::string(field) + ": exactly one value expected for " + to_string(kind));
    };
    auto halving = [&](const std::vector<double>& v, const char* field) {
        for (std::size_t i = 0; i + 1 < v.size(); ++i) {
            if (!detail::close_rel(v[i], 2.0 * v[i + 1])) {
                err.push_back(std::string(field) + ": values must halve successively when rates are requested");
                return;
            }
        }
    };
    auto doubling = [&](const std::vector<std::size_t>& v, const char* field) {
        for (std::size_t i = 0; i + 1 < v.size(); ++i) {
            if (v[i + 1] != 2 * v[i]) {
                err.push_back(std::string(field) +
                              ": mesh sizes must halve successively (N doubling) when rates are requested");
                return;
            }
        }
    };

    switch (kind) {
        case ExperimentKind::temporal_sweep:
            single(p.cells.size(), "grid.N");
            if (p.rates) {
                need(p.taus.size() >= 2, "grid.tau: rates need at least two values");
                halving(p.taus, "grid.tau");
            }
            break;
        case ExperimentKind::spatial_sweep:
            single(p.taus.size(), "grid.tau");
            if (p.rates) {
                need(p.cells.size() >= 2, "grid.N: rates need at least two values");
                doubling(p.cells, "grid.N");
            }
            break;
        case ExperimentKind::epsilon_sweep:
            single(p.cells.size(), "grid.N");
            single(p.taus.size(), "grid.tau");
            if (p.rates) {
                need(p.epsilons.size() >= 2, "grid.epsilon: rates need at least two values");
                for (std::size_t i = 0; i + 1 < p.epsilons.size(); ++i) {
                    if (!(p.epsilons[i + 1] < p.epsilons[i])) {
                        err.push_back("grid.epsilon: values must decrease when rates are requested");
                        break;
                    }
                }
            }
            break;
        case ExperimentKind::diagonal_sweep:
            need(p.cells.size() == p.taus.size() && p.taus.size() == p.epsilons.size(),
                 "grid: N, tau and epsilon lists must have equal length for diagonal-sweep");
            if (p.rates) {
                need(p.cells.size() >= 2, "grid.N: rates need at least two values");
                doubling(p.cells, "grid.N");
                halving(p.taus, "grid.tau");
            }
            break;
        case ExperimentKind::energy_drift:
            single(p.cells.size(), "grid.N");
            single(p.taus.size(), "grid.tau");
            break;
        case ExperimentKind::stability_probe:
            single(p.cells.size(), "grid.N");
            need(!p.probe.multipliers.empty(), "probe.multipliers: at least one value required");
            for (double m : p.probe.multipliers) need(m > 0.0, "probe.multipliers: values must be > 0");
            need(p.probe.steps >= 1, "probe.steps: must be >= 1");
            need(p.probe.growth_threshold > 1.0, "probe.growth_threshold: must be > 1");
            break;
        case ExperimentKind::single_solve:
            single(p.cells.size(), "grid.N");
            single(p.taus.size(), "grid.tau");
            single(p.epsilons.size(), "grid.epsilon");
            break;
    }

    if (p.problem.kind == ProblemKind::custom) {
        need(!p.problem.samples.empty() || (!p.problem.phi.empty() && !p.problem.gamma.empty()),
             "problem: custom problems need phi and gamma expressions or a samples file");
        if (p.problem.samples.empty()) {
            for (const auto* src : {&p.problem.phi, &p.problem.gamma}) {
                if (src->empty()) continue;
                try {
                    Expression e(*src);
                } catch (const std::exception& ex) {
                    err.push_back(std::string("problem: ") + ex.what());
                }
            }
        }
    }

    const auto& ref = p.reference;
    if (ref.policy == ReferencePolicy::exact) {
        need(has_exact_solution(p.problem), "reference.policy: exact requires example1-gausson");
    }
    need(ref.h_divisor >= 1, "reference.h_divisor: must be >= 1");
    need(ref.tau_divisor >= 1, "reference.tau_divisor: must be >= 1");
    if (ref.tau > 0.0) {
        need(detail::steps_integral(p.T, ref.tau), "reference.tau: T must be an integer multiple of tau");
    }
    if (ref.cells > 0) {
        for (auto n : p.cells) {
            if (n > 0 && ref.cells % n != 0) {
                err.push_back("reference.N: must be a multiple of every swept N");
                break;
            }
        }
    }

    if (!err.empty()) throw PlanError(std::move(err));
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> to_number(const std::string& tok) {
    if (tok.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) return std::nullopt;
    return v;
}

// Whitespace-separated numbers or geom(start, ratio, count).
inline std::optional<std::vector<double>> to_numbers(const std::string& value) {
    const std::string v = trim(value);
    if (v.rfind("geom(", 0) == 0 && v.back() == ')') {
        std::string inner = v.substr(5, v.size() - 6);
        std::replace(inner.begin(), inner.end(), ',', ' ');
        std::istringstream is(inner);
        std::string s0, s1, s2, extra;
        if (!(is >> s0 >> s1 >> s2) || (is >> extra)) return std::nullopt;
        const auto start = to_number(s0);
        const auto ratio = to_number(s1);
        const auto count = to_number(s2);
        if (!start || !ratio || !count || *count < 1 || *count != std::floor(*count)) return std::nullopt;
        return geometric(*start, *ratio, static_cast<std::size_t>(*count));
    }
    std::istringstream is(v);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        const auto x = to_number(tok);
        if (!x) return std::nullopt;
        out.push_back(*x);
    }
    if (out.empty()) return std::nullopt;
    return out;
}

}  // namespace detail

/// Parses the line-oriented plan format (see docs/plan-format.md) and
/// validates the result. `origin` prefixes error messages.
inline ExperimentPlan parse_plan(std::istream& in, const std::string& origin = "<plan>") {
    ExperimentPlan plan;
    std::vector<std::string> err;
    std::string section;
    std::map<std::string, int> seen;
    std::optional<std::pair<double, double>> domain;
    std::optional<bool> rates;
    std::optional<std::vector<double>> hs;
    std::optional<double> ref_h;

    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                err.push_back(where + "malformed section header");
                continue;
            }
            section = detail::trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"experiment", "problem", "grid", "reference",
                                          "solver", "probe", "output"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
                err.push_back(where + "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            err.push_back(where + "expected 'key = value'");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) {
            err.push_back(where + "key '" + key + "' outside of a section");
            continue;
        }
        const std::string field = section + "." + key;
        if (seen[field]++ > 0) {
            err.push_back(where + "duplicate key " + field);
            continue;
        }
        auto bad = [&](const std::string& what) { err.push_back(where + field + ": " + what); };
        auto number = [&](double& out) {
            if (auto v = detail::to_number(value)) out = *v;
            else bad("expected a number, got '" + value + "'");
        };
        auto numbers = [&](std::vector<double>& out) {
            if (auto v = detail::to_numbers(value)) out = *v;
            else bad("expected numbers or geom(start, ratio, count), got '" + value + "'");
        };
        auto integers = [&](std::vector<std::size_t>& out) {
            std::vector<double> v;
            numbers(v);
            out.clear();
            for (double x : v) {
                if (x < 0 || x != std::floor(x)) {
                    bad("expected non-negative integers");
                    return;
                }
                out.push_back(static_cast<std::size_t>(x));
            }
        };

        if (field == "experiment.kind") {
            if (auto k = parse_kind(value)) plan.kind = *k;
            else bad("unknown kind '" + value + "'");
        } else if (field == "experiment.name") {
            plan.name = value;
        } else if (field == "experiment.scheme") {
            if (auto s = parse_scheme(value)) plan.scheme = *s;
            else bad("unknown scheme '" + value + "' (cnfd|siefd)");
        } else if (field == "experiment.problem") {
            if (auto k = parse_problem(value)) plan.problem.kind = *k;
            else bad("unknown problem '" + value + "'");
        } else if (field == "experiment.domain") {
            std::vector<double> v;
            numbers(v);
            if (v.size() == 2) domain = std::pair{v[0], v[1]};
            else if (!v.empty()) bad("expected two numbers 'a b'");
        } else if (field == "experiment.T") {
            number(plan.T);
        } else if (field == "experiment.lambda") {
            number(plan.lambda);
        } else if (field == "experiment.rates") {
            if (value == "true" || value == "yes" || value == "1") rates = true;
            else if (value == "false" || value == "no" || value == "0") rates = false;
            else bad("expected true or false");
        } else if (field == "problem.phi") {
            plan.problem.phi = value;
        } else if (field == "problem.gamma") {
            plan.problem.gamma = value;
        } else if (field == "problem.samples") {
            plan.problem.samples = value;
        } else if (field == "grid.N") {
            integers(plan.cells);
        } else if (field == "grid.h") {
            std::vector<double> v;
            numbers(v);
            hs = v;
        } else if (field == "grid.tau") {
            numbers(plan.taus);
        } else if (field == "grid.epsilon") {
            numbers(plan.epsilons);
        } else if (field == "reference.policy") {
            if (value == "auto") plan.reference.policy = ReferencePolicy::automatic;
            else if (value == "exact") plan.reference.policy = ReferencePolicy::exact;
            else if (value == "fine") plan.reference.policy = ReferencePolicy::fine;
            else if (value == "none") plan.reference.policy = ReferencePolicy::none;
            else bad("unknown policy '" + value + "' (auto|exact|fine|none)");
        } else if (field == "reference.N") {
            std::vector<std::size_t> v;
            integers(v);
            if (v.size() == 1) plan.reference.cells = v[0];
            else if (!v.empty()) bad("expected a single value");
        } else if (field == "reference.h") {
            double h = 0.0;
            number(h);
            ref_h = h;
        } else if (field == "reference.tau") {
            number(plan.reference.tau);
        } else if (field == "reference.h_divisor" || field == "reference.tau_divisor") {
            double d = 0.0;
            number(d);
            (key == "h_divisor" ? plan.reference.h_divisor : plan.reference.tau_divisor) =
                static_cast<int>(d);
        } else if (field == "solver.newton_tol") {
            number(plan.newton_tol);
        } else if (field == "solver.newton_max_iter") {
            double d = 0.0;
            number(d);
            plan.newton_max_iter = static_cast<int>(d);
        } else if (field == "solver.fallback") {
            if (value == "damped-fixed-point") plan.fallback = Fallback::damped_fixed_point;
            else if (value == "fail") plan.fallback = Fallback::fail;
            else bad("expected damped-fixed-point or fail");
        } else if (field == "probe.multipliers") {
            numbers(plan.probe.multipliers);
        } else if (field == "probe.steps") {
            double d = 0.0;
            number(d);
            plan.probe.steps = d >= 0 ? static_cast<std::size_t>(d) : 0;
        } else if (field == "probe.growth_threshold") {
            number(plan.probe.growth_threshold);
        } else if (field == "output.csv") {
            plan.csv_path = value;
        } else if (field == "output.snapshots") {
            numbers(plan.snapshot_times);
        } else {
            err.push_back(where + "unknown key " + field);
        }
    }

    const auto [da, db] = domain.value_or(default_domain(plan.problem.kind));
    plan.a = da;
    plan.b = db;
    auto cells_for = [&](double h, const char* field) -> std::size_t {
        const double n = (plan.b - plan.a) / h;
        if (!(h > 0.0) || !detail::close_rel(n, std::round(n))) {
            err.push_back(std::string(field) + ": h must divide the domain length");
            return 0;
        }
        return static_cast<std::size_t>(std::llround(n));
    };
    if (hs) {
        if (seen["grid.N"] > 0) err.push_back("grid: give either N or h, not both");
        plan.cells.clear();
        for (double h : *hs) plan.cells.push_back(cells_for(h, "grid.h"));
    }
    if (ref_h) {
        if (seen["reference.N"] > 0) err.push_back("reference: give either N or h, not both");
        plan.reference.cells = cells_for(*ref_h, "reference.h");
    }
    plan.rates = rates.value_or(is_sweep(plan.kind));

    if (!err.empty()) throw PlanError(std::move(err));
    validate(plan);
    return plan;
}

inline ExperimentPlan plan_from_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plan file '" + path + "'");
    return parse_plan(in, path);
}

/// Plans behind `reproduce <target>`; desk-scale unless `paper_scale`.
/// Targets: table1, table2, table3, fig1, fig-energy, stability.
inline std::vector<ExperimentPlan> reproduction_plans(const std::string& target, bool paper_scale) {
    ExperimentPlan base;
    base.problem.kind = ProblemKind::example1_gausson;
    base.a = -16.0;
    base.b = 16.0;
    base.T = 1.0;
    base.rates = true;

    if (target == "table1") {
        ExperimentPlan p = base;
        p.name = "table1";
        p.kind = ExperimentKind::temporal_sweep;
        p.epsilons = {0.1 / 2, 0.1 / 8};
        p.taus = geometric(0.1, 0.5, 6);
        p.reference.policy = ReferencePolicy::fine;
        if (paper_scale) {
            p.epsilons.push_back(0.1 / 32768);
            p.cells = {32768};
            p.reference.tau = 0.01 / 512;
        } else {
            p.cells = {4096};
            p.reference.tau = 0.000390625;
        }
        p.csv_path = "table1.csv";
        return {p};
    }
    if (target == "table2") {
        ExperimentPlan p = base;
        p.name = "table2";
        p.kind = ExperimentKind::spatial_sweep;
        p.epsilons = {0.1 / 2, 0.1 / 8};
        p.reference.policy = ReferencePolicy::fine;
        if (paper_scale) {
            p.epsilons.push_back(0.1 / 32768);
            p.cells = {64, 128, 256, 512, 1024, 2048};
            p.taus = {0.01 / 512};
            p.reference.cells = 32768;
        } else {
            p.cells = {64, 128, 256, 512, 1024};
            p.taus = {0.0025};
            p.reference.h_divisor = 4;
        }
        p.csv_path = "table2.csv";
        return {p};
    }
    if (target == "table3") {
        ExperimentPlan diag = base;
        diag.name = "table3-diagonal";
        diag.kind = ExperimentKind::diagonal_sweep;
        diag.epsilons = geometric(1e-3, 0.25, 5);
        diag.cells = {320, 640, 1280, 2560, 5120};
        diag.taus = geometric(0.1, 0.5, 5);
        diag.reference.policy = ReferencePolicy::exact;
        diag.csv_path = "table3.csv";

        ExperimentPlan column = base;
        column.name = "table3-column";
        column.kind = ExperimentKind::epsilon_sweep;
        column.epsilons = geometric(1e-3, 0.25, 5);
        column.cells = {10240};
        column.taus = {0.1 / 32};
        column.reference.policy = ReferencePolicy::exact;
        column.csv_path = "table3_column.csv";
        return {diag, column};
    }
    if (target == "fig1") {
        ExperimentPlan p = base;
        p.name = "fig1";
        p.kind = ExperimentKind::epsilon_sweep;
        p.T = 0.5;
        p.epsilons = geometric(0.05, 0.5, 6);
        p.reference.policy = ReferencePolicy::exact;
        if (paper_scale) {
            p.cells = {32768};
            p.taus = {0.01 / 512};
        } else {
            p.cells = {16384};
            p.taus = {1.0 / 1024};
        }
        p.csv_path = "fig1.csv";
        return {p};
    }
    if (target == "fig-energy") {
        std::vector<ExperimentPlan> out;
        for (Scheme s : {Scheme::cnfd, Scheme::siefd}) {
            ExperimentPlan p;
            p.name = std::string("fig-energy-") + to_string(s);
            p.kind = ExperimentKind::energy_drift;
            p.scheme = s;
            p.problem.kind = ProblemKind::example2_cos_sin;
            p.a = -1.0;
            p.b = 1.0;
            p.T = 10.0;
            p.epsilons = {0.05};
            p.cells = {128};
            p.taus = {0.01};
            p.reference.policy = ReferencePolicy::none;
            p.snapshot_times = {0.0, 1.0, 5.0};
            p.csv_path = std::string("fig_energy_") + to_string(s) + ".csv";
            out.push_back(p);
        }
        return out;
    }
    if (target == "stability") {
        std::vector<ExperimentPlan> out;
        for (Scheme s : {Scheme::siefd, Scheme::cnfd}) {
            ExperimentPlan p;
            p.name = std::string("stability-") + to_string(s);
            p.kind = ExperimentKind::stability_probe;
            p.scheme = s;
            p.problem.kind = ProblemKind::example2_cos_sin;
            p.a = -1.0;
            p.b = 1.0;
            p.epsilons = {0.05};
            p.cells = {128};
            p.reference.policy = ReferencePolicy::none;
            p.probe.multipliers = s == Scheme::siefd ? std::vector<double>{0.9, 1.5}
                                                     : std::vector<double>{10.0};
            p.probe.steps = 500;
            p.csv_path = std::string("stability_") + to_string(s) + ".csv";
            out.push_back(p);
        }
        return out;
    }
    throw std::invalid_argument("unknown reproduction target '" + target +
                                "' (table1|table2|table3|fig1|fig-energy|stability)");
}

}  // namespace logkg
