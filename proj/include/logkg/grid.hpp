#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace logkg {

/// Uniform periodic grid x_j = a + j*h, j = 0..N, on [a, b] with h = (b-a)/N.
class Grid1D {
public:
    Grid1D(double a, double b, std::size_t cells) : a_(a), b_(b), cells_(cells) {
        if (!(b > a) || !std::isfinite(a) || !std::isfinite(b)) {
            throw std::invalid_argument("grid: need finite a < b");
        }
        if (cells < 4) {
            throw std::invalid_argument("grid: need N >= 4 cells, got " + std::to_string(cells));
        }
        h_ = (b - a) / static_cast<double>(cells);
    }

    double a() const { return a_; }
    double b() const { return b_; }
    std::size_t cells() const { return cells_; }
    double h() const { return h_; }
    double length() const { return b_ - a_; }
    double node(std::size_t j) const { return a_ + static_cast<double>(j) * h_; }

    friend bool operator==(const Grid1D& l, const Grid1D& r) {
        return l.a_ == r.a_ && l.b_ == r.b_ && l.cells_ == r.cells_;
    }

private:
    double a_;
    double b_;
    std::size_t cells_;
    double h_;
};

/// Samples on the N+1 nodes of a periodic grid (the space X_N).
///
/// values[N] always equals values[0]: construction copies values[0] onto the
/// redundant endpoint. Operators wrap with u_{-1} = u_{N-1}, u_{N+1} = u_1.
class GridFunction {
public:
    GridFunction(const Grid1D& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        if (values_.size() == grid_.cells()) {
            values_.push_back(values_.front());
        } else if (values_.size() != grid_.cells() + 1) {
            throw std::invalid_argument("grid function: expected " +
                                        std::to_string(grid_.cells() + 1) + " values, got " +
                                        std::to_string(values_.size()));
        }
        values_.back() = values_.front();
    }

    static GridFunction zeros(const Grid1D& grid) {
        return {grid, std::vector<double>(grid.cells() + 1, 0.0)};
    }

    static GridFunction constant(const Grid1D& grid, double c) {
        return {grid, std::vector<double>(grid.cells() + 1, c)};
    }

    /// f evaluated at x_0..x_{N-1}; the endpoint is the periodic copy.
    template <typename F>
    static GridFunction sample(const Grid1D& grid, F&& f) {
        std::vector<double> v(grid.cells() + 1);
        for (std::size_t j = 0; j < grid.cells(); ++j) v[j] = f(grid.node(j));
        v.back() = v.front();
        return {grid, std::move(v)};
    }

    const Grid1D& grid() const { return grid_; }
    std::size_t cells() const { return grid_.cells(); }
    double operator[](std::size_t j) const { return values_[j]; }

    /// All N+1 samples.
    std::span<const double> values() const { return values_; }
    /// The N independent samples j = 0..N-1.
    std::span<const double> interior() const { return {values_.data(), grid_.cells()}; }

    friend bool operator==(const GridFunction&, const GridFunction&) = default;

private:
    Grid1D grid_;
    std::vector<double> values_;
};

namespace detail {

inline void require_same_grid(const GridFunction& u, const GridFunction& v) {
    if (!(u.grid() == v.grid())) {
        throw std::invalid_argument("grid functions live on different grids");
    }
}

template <typename Op>
GridFunction pointwise(const GridFunction& u, const GridFunction& v, Op op) {
    require_same_grid(u, v);
    std::vector<double> w(u.cells() + 1);
    for (std::size_t j = 0; j <= u.cells(); ++j) w[j] = op(u[j], v[j]);
    return {u.grid(), std::move(w)};
}

}  // namespace detail

inline GridFunction operator+(const GridFunction& u, const GridFunction& v) {
    return detail::pointwise(u, v, [](double x, double y) { return x + y; });
}

inline GridFunction operator-(const GridFunction& u, const GridFunction& v) {
    return detail::pointwise(u, v, [](double x, double y) { return x - y; });
}

inline GridFunction operator*(double s, const GridFunction& u) {
    std::vector<double> w(u.values().begin(), u.values().end());
    for (double& x : w) x *= s;
    return {u.grid(), std::move(w)};
}

/// Periodic three-point second difference (u_{j+1} - 2u_j + u_{j-1}) / h^2.
/// The wrap is always applied, whether or not the samples look periodic.
inline GridFunction laplacian(const GridFunction& u) {
    const std::size_t n = u.cells();
    const double inv_h2 = 1.0 / (u.grid().h() * u.grid().h());
    std::vector<double> w(n + 1);
    for (std::size_t j = 0; j < n; ++j) {
        const double right = u[j + 1 == n ? 0 : j + 1];
        const double left = u[j == 0 ? n - 1 : j - 1];
        w[j] = (right - 2.0 * u[j] + left) * inv_h2;
    }
    return {u.grid(), std::move(w)};
}

/// (u_{j+1} - u_j) / h with u_N = u_0.
inline GridFunction forward_diff(const GridFunction& u) {
    const std::size_t n = u.cells();
    const double inv_h = 1.0 / u.grid().h();
    std::vector<double> w(n + 1);
    for (std::size_t j = 0; j < n; ++j) w[j] = (u[j + 1] - u[j]) * inv_h;
    return {u.grid(), std::move(w)};
}

/// (u_j - u_{j-1}) / h with u_{-1} = u_{N-1}.
inline GridFunction backward_diff(const GridFunction& u) {
    const std::size_t n = u.cells();
    const double inv_h = 1.0 / u.grid().h();
    std::vector<double> w(n + 1);
    for (std::size_t j = 0; j < n; ++j) w[j] = (u[j] - u[j == 0 ? n - 1 : j - 1]) * inv_h;
    return {u.grid(), std::move(w)};
}

/// (u, v) = h * sum_{j<N} u_j v_j.
inline double inner(const GridFunction& u, const GridFunction& v) {
    detail::require_same_grid(u, v);
    double s = 0.0;
    for (std::size_t j = 0; j < u.cells(); ++j) s += u[j] * v[j];
    return u.grid().h() * s;
}

inline double norm_l2(const GridFunction& u) { return std::sqrt(inner(u, u)); }

/// max_{0 <= j <= N-1} |u_j|.
inline double norm_linf(const GridFunction& u) {
    double m = 0.0;
    for (double x : u.interior()) m = std::max(m, std::abs(x));
    return m;
}

/// ||delta_x^+ u||_{l2}.
inline double seminorm_h1(const GridFunction& u) { return norm_l2(forward_diff(u)); }

inline double norm_h1(const GridFunction& u) {
    return std::hypot(norm_l2(u), seminorm_h1(u));
}

/// Periodic rectangle rule h * sum_{j<N} u_j.
inline double quad(const GridFunction& u) {
    double s = 0.0;
    for (double x : u.interior()) s += x;
    return u.grid().h() * s;
}

/// h * sum_{j<N} |u_j|.
inline double quad_l1(const GridFunction& u) {
    double s = 0.0;
    for (double x : u.interior()) s += std::abs(x);
    return u.grid().h() * s;
}

/// Injection of a fine-grid function onto a coarser grid whose nodes are a
/// subset of the fine nodes.
inline GridFunction restrict_to(const GridFunction& fine, const Grid1D& coarse) {
    const Grid1D& g = fine.grid();
    if (g.a() != coarse.a() || g.b() != coarse.b() || g.cells() % coarse.cells() != 0) {
        throw std::invalid_argument("restrict_to: coarse grid is not nested in the fine grid");
    }
    const std::size_t stride = g.cells() / coarse.cells();
    std::vector<double> v(coarse.cells() + 1);
    for (std::size_t j = 0; j <= coarse.cells(); ++j) v[j] = fine[j * stride];
    return {coarse, std::move(v)};
}

/// Cyclic shift by k nodes: result_j = u_{(j+k) mod N}.
inline GridFunction rotate(const GridFunction& u, std::size_t k) {
    const std::size_t n = u.cells();
    std::vector<double> v(n + 1);
    for (std::size_t j = 0; j < n; ++j) v[j] = u[(j + k) % n];
    return {u.grid(), std::move(v)};
}

}  // namespace logkg
