#include <gtest/gtest.h>

#include <random>

#include "nlch/grid.hpp"

using namespace nlch;

namespace {

ScalarField random_field(const GridSpec& g, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ScalarField f(g);
    for (auto& v : f.raw()) v = u(rng);
    return f;
}

FluxField random_flux(const GridSpec& g, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    FluxField q(g);
    for (auto& v : q.x_faces()) v = u(rng);
    for (auto& v : q.y_faces()) v = u(rng);
    return q;
}

const GridSpec rect{12, 9, 1.5, 0.7};

}  // namespace

TEST(GridSpec, RejectsTooFewCells) {
    EXPECT_THROW((GridSpec{3, 8, 1, 1}).validate(), ConfigError);
    EXPECT_THROW((GridSpec{8, 8, 0, 1}).validate(), ConfigError);
    EXPECT_NO_THROW((GridSpec{4, 4, 1, 1}).validate());
}

TEST(GridSpec, CellCentres) {
    EXPECT_DOUBLE_EQ(rect.x(0), 0.5 * 1.5 / 12);
    EXPECT_DOUBLE_EQ(rect.y(8), 8.5 * 0.7 / 9);
}

TEST(Gradient, ConstantHasZeroGradient) {
    const FluxField q = gradient_faces(ScalarField(rect, 3.7));
    for (double v : q.x_faces()) EXPECT_EQ(v, 0.0);
    for (double v : q.y_faces()) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, LinearFieldExactOnInteriorFaces) {
    const FluxField q = gradient_faces(ScalarField::from_function(rect, [](double x, double) { return x; }));
    for (int j = 0; j < rect.ny; ++j) {
        EXPECT_EQ(q.xf(0, j), 0.0);
        EXPECT_EQ(q.xf(rect.nx, j), 0.0);
        for (int i = 1; i < rect.nx; ++i) EXPECT_NEAR(q.xf(i, j), 1.0, 1e-12);
    }
    EXPECT_TRUE(q.boundary_is_zero());
}

TEST(Divergence, SummationByParts) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const ScalarField f = random_field(rect, rng);
        EXPECT_NEAR(integrate(divergence_cells(gradient_faces(f))), 0.0, 1e-12);
    }
}

TEST(Divergence, ZeroFluxGivesZero) {
    const ScalarField d = divergence_cells(FluxField(rect));
    EXPECT_EQ(d.max_abs(), 0.0);
}

TEST(Divergence, NegativeAdjointOfGradient) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        FluxField q = random_flux(rect, rng);
        q.zero_boundary();
        const ScalarField f = random_field(rect, rng);
        const double lhs = inner_l2(divergence_cells(q), f);
        const double rhs = -inner_faces(q, gradient_faces(f));
        EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
    }
}

TEST(Divergence, UniformInteriorFluxOnFourByFour) {
    const GridSpec g{4, 4, 1, 1};
    FluxField q(g, 1.0);
    q.zero_boundary();
    const ScalarField d = divergence_cells(q);
    // unit flux on interior faces only: outflow +1/dx in column 0, -1/dx in column 3
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            const double ex = i == 0 ? 4.0 : (i == 3 ? -4.0 : 0.0);
            const double ey = j == 0 ? 4.0 : (j == 3 ? -4.0 : 0.0);
            EXPECT_NEAR(d(i, j), ex + ey, 1e-12);
            if (i > 0 && i < 3 && j > 0 && j < 3) {
                EXPECT_EQ(d(i, j), 0.0);
            }
        }
}

TEST(Divergence, DiscreteDivergenceTheorem) {
    std::mt19937_64 rng(3);
    FluxField q = random_flux(rect, rng, -5, 5);
    q.zero_boundary();
    EXPECT_NEAR(integrate(divergence_cells(q)), 0.0, 1e-12);
}

TEST(WeightedLaplacian, AnnihilatesConstants) {
    std::mt19937_64 rng(4);
    const FluxField w = random_flux(rect, rng, 0.0, 2.0);
    EXPECT_LT(weighted_laplacian(ScalarField(rect, -2.0), w).max_abs(), 1e-12);
}

TEST(WeightedLaplacian, UnitWeightIsFivePointStencil) {
    std::mt19937_64 rng(5);
    const ScalarField f = random_field(rect, rng);
    const ScalarField l = weighted_laplacian(f, FluxField(rect, 1.0));
    const double dx2 = rect.dx() * rect.dx(), dy2 = rect.dy() * rect.dy();
    for (int j = 0; j < rect.ny; ++j)
        for (int i = 0; i < rect.nx; ++i) {
            // mirror ghosts: f(-1) = f(0)
            const double fw = f(std::max(i - 1, 0), j), fe = f(std::min(i + 1, rect.nx - 1), j);
            const double fs = f(i, std::max(j - 1, 0)), fn = f(i, std::min(j + 1, rect.ny - 1));
            const double expect = (fw - 2 * f(i, j) + fe) / dx2 + (fs - 2 * f(i, j) + fn) / dy2;
            EXPECT_NEAR(l(i, j), expect, 1e-12 * std::max(1.0, std::abs(expect)));
        }
    EXPECT_EQ(laplacian(f).raw(), l.raw());
}

TEST(WeightedLaplacian, NegativeSemidefiniteAndSelfAdjoint) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const FluxField w = random_flux(rect, rng, 0.0, 3.0);
        const ScalarField f = random_field(rect, rng), g = random_field(rect, rng);
        EXPECT_LE(inner_l2(weighted_laplacian(f, w), f), 1e-14);
        const double a = inner_l2(weighted_laplacian(f, w), g), b = inner_l2(f, weighted_laplacian(g, w));
        EXPECT_LE(std::abs(a - b), 1e-12 * norm_l2(f) * norm_l2(g) * std::max(1.0, std::abs(a)));
    }
}

TEST(Norms, QuadratureOnUnitSquare) {
    const GridSpec g{16, 16, 1, 1};
    EXPECT_DOUBLE_EQ(integrate(ScalarField(g, 1.0)), 1.0);
    std::mt19937_64 rng(7);
    const ScalarField f = random_field(g, rng);
    EXPECT_NEAR(norm_l2(f) * norm_l2(f), inner_l2(f, f), 1e-14);
    // midpoint rule is exact for linear functions
    const auto lin = [](double x, double) { return x; };
    EXPECT_NEAR(integrate(ScalarField::from_function(g, lin)), 0.5, 1e-14);
    // and second order for x^2: error dx^2/12
    for (int n : {16, 32}) {
        const GridSpec gn{n, n, 1, 1};
        const double err = integrate(ScalarField::from_function(gn, [](double x, double) { return x * x; })) - 1.0 / 3.0;
        EXPECT_NEAR(err, -1.0 / (12.0 * n * n), 1e-14);
    }
}

TEST(Norms, H1IncludesGradient) {
    std::mt19937_64 rng(8);
    const ScalarField f = random_field(rect, rng);
    const FluxField q = gradient_faces(f);
    EXPECT_NEAR(norm_h1(f) * norm_h1(f), inner_l2(f, f) + inner_faces(q, q), 1e-12);
    EXPECT_NEAR(norm_h1(ScalarField(rect, 2.0)), norm_l2(ScalarField(rect, 2.0)), 1e-14);
}

TEST(Norms, GridMismatchThrows) {
    const ScalarField a(GridSpec{8, 8, 1, 1}), b(GridSpec{8, 9, 1, 1});
    EXPECT_THROW(inner_l2(a, b), GridMismatch);
    EXPECT_THROW((void)(a + b), GridMismatch);
}

TEST(FaceAverage, TransposeIsExact) {
    std::mt19937_64 rng(9);
    const ScalarField cx = random_field(rect, rng), cy = random_field(rect, rng);
    const FluxField q = random_flux(rect, rng);
    // Euclidean pairing on faces vs cells
    const FluxField a = face_average(cx, cy);
    double lhs = 0.0;
    for (std::size_t k = 0; k < a.x_faces().size(); ++k) lhs += a.x_faces()[k] * q.x_faces()[k];
    for (std::size_t k = 0; k < a.y_faces().size(); ++k) lhs += a.y_faces()[k] * q.y_faces()[k];
    auto [tx, ty] = face_average_transpose(q);
    double rhs = 0.0;
    for (std::size_t k = 0; k < cx.size(); ++k) rhs += cx[k] * tx[k] + cy[k] * ty[k];
    EXPECT_NEAR(lhs, rhs, 1e-12);
    EXPECT_TRUE(a.boundary_is_zero());
}
