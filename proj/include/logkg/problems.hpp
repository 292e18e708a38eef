#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "logkg/analysis.hpp"
#include "logkg/expression.hpp"
#include "logkg/grid.hpp"
#include "logkg/schemes.hpp"

namespace logkg {

enum class ProblemKind {
    example1_gausson,  ///< Gausson data, c = 2, k = 1, exact solution known
    example2_cos_sin,  ///< phi = cos(pi x), gamma = sin(pi x)
    custom,            ///< expressions or a sampled file
};

/// Initial data source. For `custom`, either both expressions or a samples
/// file (two whitespace-separated columns phi, gamma; N or N+1 rows; '#'
/// starts a comment) must be given.
struct ProblemSpec {
    ProblemKind kind = ProblemKind::example1_gausson;
    std::string phi;
    std::string gamma;
    std::string samples;

    friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

/// Raised for unreadable or malformed input files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const char* problem_name(ProblemKind k) {
    switch (k) {
        case ProblemKind::example1_gausson: return "example1-gausson";
        case ProblemKind::example2_cos_sin: return "example2-cos-sin";
        default: return "custom";
    }
}

inline std::optional<ProblemKind> parse_problem(const std::string& s) {
    if (s == "example1-gausson" || s == "example1") return ProblemKind::example1_gausson;
    if (s == "example2-cos-sin" || s == "example2") return ProblemKind::example2_cos_sin;
    if (s == "custom") return ProblemKind::custom;
    return std::nullopt;
}

inline std::pair<double, double> default_domain(ProblemKind k) {
    if (k == ProblemKind::example2_cos_sin) return {-1.0, 1.0};
    return {-16.0, 16.0};
}

inline bool has_exact_solution(const ProblemSpec& p) { return p.kind == ProblemKind::example1_gausson; }

namespace detail {

inline InitialData read_samples(const std::string& path, const Grid1D& grid) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open samples file '" + path + "'");
    std::vector<double> phi;
    std::vector<double> gamma;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        double p = 0.0;
        double g = 0.0;
        if (!(ls >> p)) continue;
        if (!(ls >> g)) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected two columns (phi gamma)");
        }
        phi.push_back(p);
        gamma.push_back(g);
    }
    if (phi.size() != grid.cells() && phi.size() != grid.cells() + 1) {
        throw IoError(path + ": " + std::to_string(phi.size()) + " samples do not match N = " +
                      std::to_string(grid.cells()));
    }
    return {GridFunction(grid, std::move(phi)), GridFunction(grid, std::move(gamma))};
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

inline InitialData make_initial_data(const ProblemSpec& data, const Grid1D& grid) {
    switch (data.kind) {
        case ProblemKind::example1_gausson: {
            const GaussonParams gp;
            return {GridFunction::sample(grid, [&](double x) { return gausson(x, 0.0, gp); }),
                    GridFunction::sample(grid, [&](double x) { return gausson_dt(x, 0.0, gp); })};
        }
        case ProblemKind::example2_cos_sin: {
            constexpr double pi = std::numbers::pi;
            return {GridFunction::sample(grid, [](double x) { return std::cos(pi * x); }),
                    GridFunction::sample(grid, [](double x) { return std::sin(pi * x); })};
        }
        default:
            break;
    }
    if (!data.samples.empty()) return detail::read_samples(data.samples, grid);
    if (data.phi.empty() || data.gamma.empty()) {
        throw std::invalid_argument("custom problem needs phi and gamma expressions or a samples file");
    }
    const Expression phi(data.phi);
    const Expression gamma(data.gamma);
    return {GridFunction::sample(grid, phi), GridFunction::sample(grid, gamma)};
}

/// Exact solution at time t when the problem has one (lambda = 1).
inline std::optional<GridFunction> exact_solution(const ProblemSpec& data, const Grid1D& grid, double t) {
    if (!has_exact_solution(data)) return std::nullopt;
    const GaussonParams gp;
    return GridFunction::sample(grid, [&](double x) { return gausson(x, t, gp); });
}

/// Stable textual identity of the initial data, used in cache keys.
inline std::string problem_key(const ProblemSpec& data) {
    if (data.kind != ProblemKind::custom) return problem_name(data.kind);
    if (!data.samples.empty()) {
        std::ifstream in(data.samples, std::ios::binary);
        if (!in) throw IoError("cannot open samples file '" + data.samples + "'");
        std::ostringstream content;
        content << in.rdbuf();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(detail::fnv1a(content.str())));
        return std::string("custom-samples:") + buf;
    }
    return "custom:phi=" + data.phi + ";gamma=" + data.gamma;
}

}  // namespace logkg
