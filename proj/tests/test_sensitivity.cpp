#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "nlch/sensitivity.hpp"

using namespace nlch;

namespace {

ScalarField random_field(const GridSpec& g, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    ScalarField f(g);
    for (auto& v : f.raw()) v = nd(rng);
    return f;
}

ScalarField disk(const GridSpec& g) {
    return ScalarField::from_function(g, [](double x, double y) {
        return 0.8 * std::tanh((0.25 - std::hypot(x - 0.5, y - 0.5)) / 0.1);
    });
}

// One variant per coefficient of the linearised system, so that every term
// is exercised with a non-zero coefficient somewhere.
struct Variant {
    std::string name;
    KernelSpec kernel = KernelSpec::gaussian(0.1);
    ConstitutiveSet laws;
    MaterialParams params;
    bool full_jacobian = false;
};

std::vector<Variant> variants() {
    std::vector<Variant> v;
    v.push_back({"default", {}, {}, {}, false});
    Variant noloc{"no_nonlocal", {}, {}, {1.0, 0.0}, false};
    v.push_back(noloc);
    Variant noprolif{"no_proliferation", {}, {}, {}, false};
    noprolif.laws.P0 = 0.0;
    v.push_back(noprolif);
    Variant mob{"variable_mobility", {}, {}, {1.3, 0.8}, false};
    mob.laws.d1 = 0.6;
    v.push_back(mob);
    Variant nut{"variable_nutrient_mobility", {}, {}, {}, false};
    nut.laws.n1 = 0.8;
    v.push_back(nut);
    Variant lin{"linear_proliferation", {}, {}, {}, true};
    lin.laws.prolif_exponent = 1;
    v.push_back(lin);
    v.push_back({"newtonian_kernel", KernelSpec::newtonian2d(), {}, {1.0, 0.3}, false});
    v.push_back({"compact_kernel", KernelSpec::mollified_compact(0.2, 4), {}, {}, false});
    return v;
}

std::shared_ptr<const Model> make_model(const Variant& v, const GridSpec& g, double T, int stride = 1) {
    StepperConfig s;
    s.T = T;
    s.full_jacobian = v.full_jacobian;
    s.checkpoint_stride = stride;
    return std::make_shared<const Model>(g, v.kernel, SingularCellRule::exact_cell_average, v.laws, v.params, s);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); }

}  // namespace

TEST(Duality, SingleStepPairingAllVariants) {
    const GridSpec g{12, 12, 1, 1};
    std::mt19937_64 rng(1);
    for (const auto& v : variants()) {
        auto m = make_model(v, g, 0.002);
        const auto r = run_forward(m, State{0.0, disk(g), ScalarField::from_function(g, [](double x, double) { return 0.5 + x; })});
        const StepLinearization lin(*m, r.trajectory.state(0), r.trajectory.state(1));
        for (int t = 0; t < 3; ++t) {
            const TangentState in{0.0, random_field(g, rng), random_field(g, rng)};
            const AdjointState out{lin.t_end(), random_field(g, rng), random_field(g, rng)};
            const TangentState a = lin.apply(in);
            const AdjointState b = lin.apply_transpose(out);
            const double lhs = inner_l2(a.xi, out.p) + inner_l2(a.eta, out.q);
            const double rhs = inner_l2(in.xi, b.p) + inner_l2(in.eta, b.q);
            EXPECT_LE(rel(lhs, rhs), 1e-12) << v.name;
        }
    }
}

TEST(Duality, FullHorizonAllVariants) {
    const GridSpec g{16, 16, 1, 1};
    std::mt19937_64 rng(2);
    for (const auto& v : variants()) {
        auto m = make_model(v, g, 0.01);
        const auto r = run_forward(m, State{0.0, disk(g), ScalarField(g, 1.0)});
        const ScalarField d = random_field(g, rng);
        const AdjointState adj = solve_adjoint(r.trajectory, d);
        EXPECT_NEAR(adj.t, 0.0, 1e-15);
        for (int t = 0; t < 3; ++t) {
            const ScalarField h = random_field(g, rng);
            const TangentState tg = solve_tangent(r.trajectory, h);
            EXPECT_LE(rel(inner_l2(d, tg.xi), inner_l2(adj.p, h)), 1e-10) << v.name;
        }
    }
}

TEST(Tangent, MatchesFiniteDifferenceOfForwardMap) {
    const GridSpec g{12, 12, 1, 1};
    std::mt19937_64 rng(3);
    for (const auto& v : variants()) {
        auto m = make_model(v, g, 0.005);
        const State init{0.0, disk(g), ScalarField(g, 1.0)};
        const auto r = run_forward(m, init);
        ScalarField h = random_field(g, rng);
        h *= 1.0 / h.max_abs();
        const TangentState tg = solve_tangent(r.trajectory, h);
        const double theta = 1e-6;
        State ip = init, im = init;
        ip.phi.axpy(theta, h);
        im.phi.axpy(-theta, h);
        const State sp = run_forward(m, ip).trajectory.final_state(), sm = run_forward(m, im).trajectory.final_state();
        const ScalarField fd_phi = (1.0 / (2 * theta)) * (sp.phi - sm.phi);
        const ScalarField fd_sigma = (1.0 / (2 * theta)) * (sp.sigma - sm.sigma);
        EXPECT_LE((fd_phi - tg.xi).max_abs(), 1e-6 * std::max(1.0, tg.xi.max_abs())) << v.name;
        EXPECT_LE((fd_sigma - tg.eta).max_abs(), 1e-6 * std::max(1.0, tg.eta.max_abs())) << v.name;
    }
}

TEST(Adjoint, CheckpointingGivesIdenticalGradient) {
    const GridSpec g{16, 16, 1, 1};
    const Variant v = variants().front();
    const State init{0.0, disk(g), ScalarField(g, 1.0)};
    const auto a = run_forward(make_model(v, g, 0.01, 1), init);
    const auto b = run_forward(make_model(v, g, 0.01, 4), init);
    const ScalarField d = a.trajectory.final_state().phi;
    EXPECT_EQ(solve_adjoint(a.trajectory, d).p.raw(), solve_adjoint(b.trajectory, d).p.raw());
}

TEST(Adjoint, ZeroTerminalDataGivesZero) {
    const GridSpec g{12, 12, 1, 1};
    auto m = make_model(variants().front(), g, 0.005);
    const auto r = run_forward(m, State{0.0, disk(g), ScalarField(g, 1.0)});
    const AdjointState adj = solve_adjoint(r.trajectory, ScalarField(g));
    EXPECT_EQ(adj.p.max_abs(), 0.0);
    EXPECT_EQ(adj.q.max_abs(), 0.0);
}

TEST(StepLinearization, RejectsMismatchedTimes) {
    const GridSpec g{12, 12, 1, 1};
    auto m = make_model(variants().front(), g, 0.005);
    const auto r = run_forward(m, State{0.0, disk(g), ScalarField(g, 1.0)});
    EXPECT_THROW(StepLinearization(*m, r.trajectory.state(0), r.trajectory.state(2)), Error);
    const StepLinearization lin(*m, r.trajectory.state(0), r.trajectory.state(1));
    EXPECT_THROW(lin.apply(TangentState{0.5, ScalarField(g), ScalarField(g)}), Error);
    EXPECT_THROW(lin.apply_transpose(AdjointState{0.0, ScalarField(g), ScalarField(g)}), Error);
}

TEST(ReducedGradient, PairingFormula) {
    const GridSpec g{12, 12, 1, 1};
    std::mt19937_64 rng(4);
    const AdjointState adj{0.0, random_field(g, rng), ScalarField(g)};
    const ScalarField u = random_field(g, rng), h = random_field(g, rng);
    EXPECT_EQ(reduced_gradient_pairing(adj, u, 0.0, h), inner_l2(adj.p, h));
    const double expect = inner_l2(adj.p, h) + 0.3 * (inner_l2(u, h) + inner_faces(gradient_faces(u), gradient_faces(h)));
    EXPECT_NEAR(reduced_gradient_pairing(adj, u, 0.3, h), expect, 1e-12 * std::abs(expect));
}
