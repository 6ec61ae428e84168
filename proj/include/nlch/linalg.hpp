#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <string>
#include <vector>

#include "nlch/error.hpp"
#include "nlch/grid.hpp"

namespace nlch {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Assembles diag(d) + tau * G^T W G, the matrix of f -> d f - tau * weighted_laplacian(f, w).
/// Off-diagonal entries are written symmetrically, so the result is exactly
/// symmetric; it is positive definite whenever d > 0 and w >= 0.
inline SparseMatrix assemble_diffusion(const std::vector<double>& diag, double tau, const FluxField& w) {
    const GridSpec& g = w.grid();
    const auto n = static_cast<Eigen::Index>(g.size());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(g.size() * 5);
    std::vector<double> d(diag);
    const double cx = tau / (g.dx() * g.dx()), cy = tau / (g.dy() * g.dy());
    auto link = [&](std::size_t a, std::size_t b, double c) {
        d[a] += c;
        d[b] += c;
        t.emplace_back(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b), -c);
        t.emplace_back(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a), -c);
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) link(g.index(i - 1, j), g.index(i, j), cx * w.xf(i, j));
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) link(g.index(i, j - 1), g.index(i, j), cy * w.yf(i, j));
    for (std::size_t k = 0; k < d.size(); ++k)
        t.emplace_back(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k), d[k]);
    SparseMatrix m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline Eigen::Map<const Eigen::VectorXd> as_vector(const ScalarField& f) {
    return {f.raw().data(), static_cast<Eigen::Index>(f.size())};
}

inline ScalarField from_vector(const GridSpec& g, const Eigen::VectorXd& v) {
    return ScalarField(g, std::vector<double>(v.data(), v.data() + v.size()));
}

/// Conjugate gradients on an SPD matrix with relative residual tolerance.
inline ScalarField solve_cg(const SparseMatrix& a, const ScalarField& rhs, double rel_tol, const char* what) {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(rel_tol);
    cg.setMaxIterations(10 * a.rows() + 100);
    cg.compute(a);
    Eigen::VectorXd x = cg.solve(as_vector(rhs));
    if (cg.info() != Eigen::Success && cg.error() > 1e3 * rel_tol)
        throw NumericalError(std::string(what) + ": conjugate gradients failed to converge", cg.error());
    if (!x.allFinite()) throw NumericalError(std::string(what) + ": conjugate gradients produced non-finite values");
    return from_vector(rhs.grid(), x);
}

/// Sparse LDL^T factorisation reused for several right-hand sides.
class SpdFactor {
public:
    SpdFactor() = default;
    explicit SpdFactor(const SparseMatrix& a) : solver_(std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>()) {
        solver_->compute(a);
        if (solver_->info() != Eigen::Success) throw NumericalError("sparse LDL^T factorisation failed");
    }
    ScalarField solve(const ScalarField& rhs) const {
        Eigen::VectorXd x = solver_->solve(as_vector(rhs));
        return from_vector(rhs.grid(), x);
    }

private:
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
};

}  // namespace nlch
