#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlch/error.hpp"

namespace nlch {

/// Uniform cell-centred grid over the rectangle [0,lx] x [0,ly].
/// Cell (i,j) has its centre at ((i+1/2)dx, (j+1/2)dy); storage is row-major
/// with x fastest.
struct GridSpec {
    int nx = 32;
    int ny = 32;
    double lx = 1.0;
    double ly = 1.0;

    double dx() const { return lx / nx; }
    double dy() const { return ly / ny; }
    double cell_area() const { return dx() * dy(); }
    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * static_cast<std::size_t>(j); }
    double x(int i) const { return (i + 0.5) * dx(); }
    double y(int j) const { return (j + 0.5) * dy(); }

    void validate() const {
        std::vector<std::string> errs;
        if (nx < 4) errs.push_back("grid.nx: must be >= 4 (got " + std::to_string(nx) + ")");
        if (ny < 4) errs.push_back("grid.ny: must be >= 4 (got " + std::to_string(ny) + ")");
        if (!(lx > 0.0) || !std::isfinite(lx)) errs.push_back("grid.lx: must be positive and finite");
        if (!(ly > 0.0) || !std::isfinite(ly)) errs.push_back("grid.ly: must be positive and finite");
        if (!errs.empty()) throw ConfigError(errs);
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Real field sampled at cell centres.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const GridSpec& g, double value = 0.0) : grid_(g), values_(g.size(), value) {}
    ScalarField(const GridSpec& g, std::vector<double> values) : grid_(g), values_(std::move(values)) {
        if (values_.size() != g.size()) throw GridMismatch("ScalarField: value count does not match grid");
    }

    template <class Fn>
    static ScalarField from_function(const GridSpec& g, Fn&& fn) {
        ScalarField f(g);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) f(i, j) = fn(g.x(i), g.y(j));
        return f;
    }

    const GridSpec& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }
    double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
    double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }
    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    ScalarField& operator+=(const ScalarField& o) {
        check(o);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        check(o);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    /// this += a * x
    ScalarField& axpy(double a, const ScalarField& x) {
        check(x);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += a * x.values_[k];
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
    friend ScalarField operator*(ScalarField a, double s) { return a *= s; }

private:
    void check(const ScalarField& o) const {
        if (!(o.grid_ == grid_)) throw GridMismatch("ScalarField: incompatible grids");
    }

    GridSpec grid_{};
    std::vector<double> values_;
};

/// Pointwise product of two fields.
inline ScalarField hadamard(const ScalarField& a, const ScalarField& b) {
    if (!(a.grid() == b.grid())) throw GridMismatch("hadamard: incompatible grids");
    ScalarField out(a.grid());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
    return out;
}

/// Applies a scalar function pointwise.
template <class Fn>
ScalarField map(const ScalarField& f, Fn&& fn) {
    ScalarField out(f.grid());
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = fn(f[k]);
    return out;
}

/// Face-normal components. x-faces: (nx+1)*ny, face i of row j sits between
/// cells i-1 and i. y-faces: nx*(ny+1), face j of column i sits between cells
/// j-1 and j.
class FluxField {
public:
    FluxField() = default;
    explicit FluxField(const GridSpec& g, double value = 0.0)
        : grid_(g),
          x_(static_cast<std::size_t>(g.nx + 1) * g.ny, value),
          y_(static_cast<std::size_t>(g.nx) * (g.ny + 1), value) {}

    const GridSpec& grid() const { return grid_; }

    double& xf(int i, int j) { return x_[static_cast<std::size_t>(i) + static_cast<std::size_t>(grid_.nx + 1) * j]; }
    double xf(int i, int j) const { return x_[static_cast<std::size_t>(i) + static_cast<std::size_t>(grid_.nx + 1) * j]; }
    double& yf(int i, int j) { return y_[static_cast<std::size_t>(i) + static_cast<std::size_t>(grid_.nx) * j]; }
    double yf(int i, int j) const { return y_[static_cast<std::size_t>(i) + static_cast<std::size_t>(grid_.nx) * j]; }

    std::vector<double>& x_faces() { return x_; }
    const std::vector<double>& x_faces() const { return x_; }
    std::vector<double>& y_faces() { return y_; }
    const std::vector<double>& y_faces() const { return y_; }

    /// Sets every boundary-normal component to zero.
    void zero_boundary() {
        for (int j = 0; j < grid_.ny; ++j) xf(0, j) = xf(grid_.nx, j) = 0.0;
        for (int i = 0; i < grid_.nx; ++i) yf(i, 0) = yf(i, grid_.ny) = 0.0;
    }
    bool boundary_is_zero() const {
        for (int j = 0; j < grid_.ny; ++j)
            if (xf(0, j) != 0.0 || xf(grid_.nx, j) != 0.0) return false;
        for (int i = 0; i < grid_.nx; ++i)
            if (yf(i, 0) != 0.0 || yf(i, grid_.ny) != 0.0) return false;
        return true;
    }

    FluxField& operator*=(const FluxField& w) {
        for (std::size_t k = 0; k < x_.size(); ++k) x_[k] *= w.x_[k];
        for (std::size_t k = 0; k < y_.size(); ++k) y_[k] *= w.y_[k];
        return *this;
    }
    FluxField& operator*=(double s) {
        for (double& v : x_) v *= s;
        for (double& v : y_) v *= s;
        return *this;
    }
    FluxField& operator+=(const FluxField& o) {
        for (std::size_t k = 0; k < x_.size(); ++k) x_[k] += o.x_[k];
        for (std::size_t k = 0; k < y_.size(); ++k) y_[k] += o.y_[k];
        return *this;
    }

private:
    GridSpec grid_{};
    std::vector<double> x_;
    std::vector<double> y_;
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* where) {
    if (!(a == b)) throw GridMismatch(std::string(where) + ": incompatible grids");
}

/// Difference of adjacent cells over the spacing on interior faces; boundary
/// faces are zero (mirror-ghost Neumann closure).
inline FluxField gradient_faces(const ScalarField& f) {
    const GridSpec& g = f.grid();
    FluxField q(g);
    const double idx = 1.0 / g.dx(), idy = 1.0 / g.dy();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) q.xf(i, j) = (f(i, j) - f(i - 1, j)) * idx;
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) q.yf(i, j) = (f(i, j) - f(i, j - 1)) * idy;
    return q;
}

/// Net outflow per unit cell area. Equals minus the transpose of
/// gradient_faces when both sides use the cell-area weight.
inline ScalarField divergence_cells(const FluxField& q) {
    const GridSpec& g = q.grid();
    ScalarField d(g);
    const double idx = 1.0 / g.dx(), idy = 1.0 / g.dy();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            d(i, j) = (q.xf(i + 1, j) - q.xf(i, j)) * idx + (q.yf(i, j + 1) - q.yf(i, j)) * idy;
    return d;
}

/// div(w grad f) with face coefficients w.
inline ScalarField weighted_laplacian(const ScalarField& f, const FluxField& w) {
    require_same_grid(f.grid(), w.grid(), "weighted_laplacian");
    FluxField q = gradient_faces(f);
    q *= w;
    return divergence_cells(q);
}

inline ScalarField laplacian(const ScalarField& f) {
    return divergence_cells(gradient_faces(f));
}

/// Arithmetic mean of the two adjacent cells on interior faces; boundary
/// faces are zero.
inline FluxField face_average(const ScalarField& cx, const ScalarField& cy) {
    const GridSpec& g = cx.grid();
    require_same_grid(g, cy.grid(), "face_average");
    FluxField q(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) q.xf(i, j) = 0.5 * (cx(i - 1, j) + cx(i, j));
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) q.yf(i, j) = 0.5 * (cy(i, j - 1) + cy(i, j));
    return q;
}

inline FluxField face_average(const ScalarField& c) { return face_average(c, c); }

/// Transpose of face_average(cx, cy) under the plain Euclidean pairing.
inline std::pair<ScalarField, ScalarField> face_average_transpose(const FluxField& q) {
    const GridSpec& g = q.grid();
    ScalarField cx(g), cy(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) {
            cx(i - 1, j) += 0.5 * q.xf(i, j);
            cx(i, j) += 0.5 * q.xf(i, j);
        }
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            cy(i, j - 1) += 0.5 * q.yf(i, j);
            cy(i, j) += 0.5 * q.yf(i, j);
        }
    return {std::move(cx), std::move(cy)};
}

/// Midpoint-rule L2 inner product.
inline double inner_l2(const ScalarField& f, const ScalarField& g) {
    require_same_grid(f.grid(), g.grid(), "inner_l2");
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * g[k];
    return s * f.grid().cell_area();
}

inline double norm_l2(const ScalarField& f) { return std::sqrt(inner_l2(f, f)); }

inline double integrate(const ScalarField& f) {
    double s = 0.0;
    for (double v : f.values()) s += v;
    return s * f.grid().cell_area();
}

/// Face pairing; every face carries the measure dx*dy.
inline double inner_faces(const FluxField& a, const FluxField& b) {
    require_same_grid(a.grid(), b.grid(), "inner_faces");
    double s = 0.0;
    for (std::size_t k = 0; k < a.x_faces().size(); ++k) s += a.x_faces()[k] * b.x_faces()[k];
    for (std::size_t k = 0; k < a.y_faces().size(); ++k) s += a.y_faces()[k] * b.y_faces()[k];
    return s * a.grid().cell_area();
}

/// (f, g)_V = (f, g) + (grad f, grad g).
inline double inner_h1(const ScalarField& f, const ScalarField& g) {
    return inner_l2(f, g) + inner_faces(gradient_faces(f), gradient_faces(g));
}

inline double norm_h1(const ScalarField& f) { return std::sqrt(inner_h1(f, f)); }

/// Discrete L^p norm, p >= 1 (p = infinity allowed).
inline double norm_lp(const ScalarField& f, double p) {
    if (std::isinf(p)) return f.max_abs();
    double s = 0.0;
    for (double v : f.values()) s += std::pow(std::abs(v), p);
    return std::pow(s * f.grid().cell_area(), 1.0 / p);
}

}  // namespace nlch
