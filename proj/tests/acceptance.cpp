// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nlch/nlch.hpp"

using namespace nlch;

namespace {

ScalarField random_field(const GridSpec& g, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    ScalarField f(g);
    for (auto& v : f.raw()) v = u(rng);
    return f;
}

RunConfig default_config() { return parse_config_string("{}"); }

std::shared_ptr<const Model> model_with(const RunConfig& c, double T) {
    RunConfig d = c;
    d.stepper.T = T;
    return d.make_model();
}

InverseProblemSpec twin_spec(const RunConfig& c, std::shared_ptr<const Model> m, double delta) {
    InverseProblemSpec s = c.inverse.spec;
    s.sigma0 = make_field(c.sigma0, c.grid);
    s.delta = delta;
    s.phi_omega = make_twin(m, make_field(c.inverse.truth, c.grid), s.sigma0, delta, c.seed).measured;
    return s;
}

struct Outcome {
    bool pass;
    std::string detail;
};

// 1. tangent/adjoint duality on the default model, N = 50
Outcome duality() {
    const RunConfig c = default_config();
    auto m = model_with(c, 0.05);
    const State init = c.initial_state();
    const auto fwd = run_forward(m, init);
    std::mt19937_64 rng(11);
    const ScalarField resid = fwd.trajectory.final_state().phi - make_field(FieldSource::gaussian_bump(0.5, 0.2), c.grid);
    const AdjointState adj = solve_adjoint(fwd.trajectory, resid);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const ScalarField h = random_field(c.grid, rng);
        const double lhs = inner_l2(resid, solve_tangent(fwd.trajectory, h).xi);
        const double rhs = inner_l2(adj.p, h);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
    std::ostringstream os;
    os << "steps=" << fwd.trajectory.steps() << " directions=20 max scaled gap=" << worst << " (tol 1e-10)";
    return {worst <= 1e-10, os.str()};
}

// 2. reduced gradient against central differences of f_alpha
Outcome gradient_check() {
    RunConfig c = default_config();
    c.grid = GridSpec{16, 16, 1.0, 1.0};
    auto m = model_with(c, 10 * c.stepper.tau);
    const InverseProblemSpec s = twin_spec(c, m, 0.0);
    std::mt19937_64 rng(12);
    const double theta = 1e-5;
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
        const ScalarField u = project(m->laws(), s, make_field(FieldSource::gaussian_bump(0.4, 0.2), c.grid) + random_field(c.grid, rng, 0.3));
        const ScalarField h = random_field(c.grid, rng);
        const ObjectiveValue v = objective(m, s, u);
        const double an = reduced_gradient_pairing(solve_adjoint(*v.trajectory, v.residual), u, s.alpha, h);
        ScalarField up = u, um = u;
        up.axpy(theta, h);
        um.axpy(-theta, h);
        const double fd = (objective(m, s, up).f_alpha - objective(m, s, um).f_alpha) / (2 * theta);
        worst = std::max(worst, std::abs(fd - an) / std::abs(an));
    }
    std::ostringstream os;
    os << "16x16 N=10 theta=1e-5 pairs=5 max rel err=" << worst << " (tol 1e-6)";
    return {worst <= 1e-6, os.str()};
}

// 3. per-step mass balance of both fields over the default 100-step run
Outcome mass_identities() {
    const RunConfig c = default_config();
    auto m = c.make_model();
    const auto fwd = run_forward(m, c.initial_state());
    const double tau = m->stepper.tau;
    double worst_phi = 0.0, worst_sigma = 0.0;
    auto abs_int = [](const ScalarField& f) { return norm_lp(f, 1.0); };
    for (int k = 0; k < fwd.trajectory.steps(); ++k) {
        const State a = fwd.trajectory.state(k), b = fwd.trajectory.state(k + 1);
        const ScalarField sp = phi_explicit_terms(*m, a.phi, a.sigma, tau).source;
        const ScalarField ss = sigma_source(*m, b.phi, b.sigma);
        const double dphi = integrate(b.phi) - integrate(a.phi) - tau * integrate(sp);
        const double dsig = integrate(b.sigma) - integrate(a.sigma) - tau * integrate(ss);
        worst_phi = std::max(worst_phi, std::abs(dphi) / (abs_int(a.phi) + tau * abs_int(sp)));
        worst_sigma = std::max(worst_sigma, std::abs(dsig) / (abs_int(a.sigma) + tau * abs_int(ss)));
    }
    std::ostringstream os;
    os << "steps=" << fwd.trajectory.steps() << " max rel phi=" << worst_phi << " sigma=" << worst_sigma << " (tol 1e-12)";
    return {worst_phi <= 1e-12 && worst_sigma <= 1e-12, os.str()};
}

// 4. max |phi_k| over the default run
Outcome bounds() {
    const RunConfig c = default_config();
    const State init = c.initial_state();
    const auto fwd = run_forward(c.make_model(), init);
    double worst = 0.0;
    for (const auto& row : fwd.report.rows) worst = std::max(worst, row.max_abs_phi);
    std::ostringstream os;
    os << "eps=" << c.stepper.epsilon << " tau=" << c.stepper.tau << " max|phi0|=" << init.phi.max_abs()
       << " max_k max|phi_k|=" << worst << " (tol 1 + 1e-3)";
    return {init.phi.max_abs() <= 0.9 && worst <= 1.0 + 1e-3, os.str()};
}

// 5. FFT convolution against direct summation; sup-norm bounds
double oracle_kernel(const KernelSpec& k, const GridSpec& g, int a, int b) {
    if (a == 0 && b == 0 && k.is_singular()) return newtonian_cell_average(g.dx(), g.dy());
    return k.value(a * g.dx(), b * g.dy());
}

std::array<ScalarField, 3> direct(const KernelSpec& k, const ScalarField& f) {
    const GridSpec& g = f.grid();
    std::array<ScalarField, 3> out{ScalarField(g), ScalarField(g), ScalarField(g)};
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double s = 0.0, sx = 0.0, sy = 0.0;
            for (int m = 0; m < g.ny; ++m)
                for (int l = 0; l < g.nx; ++l) {
                    s += oracle_kernel(k, g, i - l, j - m) * f(l, m);
                    if (l == i && m == j) continue;
                    const auto gr = k.gradient((i - l) * g.dx(), (j - m) * g.dy());
                    sx += gr[0] * f(l, m);
                    sy += gr[1] * f(l, m);
                }
            out[0](i, j) = s * g.cell_area();
            out[1](i, j) = sx * g.cell_area();
            out[2](i, j) = sy * g.cell_area();
        }
    return out;
}

Outcome convolution() {
    const KernelSpec families[] = {KernelSpec::gaussian(0.1), KernelSpec::newtonian2d(), KernelSpec::mollified_compact(0.2, 4)};
    std::mt19937_64 rng(15);
    double worst = 0.0;
    int violations = 0;
    for (const auto& k : families) {
        for (int n : {16, 32}) {
            const GridSpec g{n, n, 1.0, 1.0};
            const ConvolutionPlan plan(k, g, SingularCellRule::exact_cell_average);
            const ScalarField f = random_field(g, rng);
            const auto ref = direct(k, f);
            const auto got = plan.conv_all(f);
            const ScalarField* mine[] = {&got.j, &got.gx, &got.gy};
            for (int q = 0; q < 3; ++q) worst = std::max(worst, (*mine[q] - ref[q]).max_abs() / ref[q].max_abs());
        }
        const GridSpec g{32, 32, 1.0, 1.0};
        const ConvolutionPlan plan(k, g, SingularCellRule::exact_cell_average);
        for (int t = 0; t < 50; ++t) {
            const ScalarField f = random_field(g, rng);
            const auto tr = plan.conv_all(f);
            const double m = f.max_abs();
            if (tr.j.max_abs() > plan.a_star() * m * (1 + 1e-12)) ++violations;
            if (std::max(tr.gx.max_abs(), tr.gy.max_abs()) > plan.b_bound() * m * (1 + 1e-12)) ++violations;
        }
    }
    std::ostringstream os;
    os << "3 families x {16,32}: max rel err=" << worst << " (tol 1e-10); sup-norm violations on 150 fields=" << violations;
    return {worst <= 1e-10 && violations == 0, os.str()};
}

// 6. first-order ratio test in tau
Outcome temporal_convergence() {
    const RunConfig c = default_config();
    std::vector<ScalarField> finals;
    for (double f : {1.0, 0.5, 0.25}) {
        RunConfig d = c;
        d.stepper.tau = c.stepper.tau * f;
        finals.push_back(run_forward(d.make_model(), d.initial_state()).trajectory.final_state().phi);
    }
    const double e1 = norm_l2(finals[0] - finals[1]), e2 = norm_l2(finals[1] - finals[2]);
    const double ratio = e1 / e2;
    std::ostringstream os;
    os << "|phi_tau - phi_tau/2|=" << e1 << " |phi_tau/2 - phi_tau/4|=" << e2 << " ratio=" << ratio << " (want [1.7, 2.3])";
    return {ratio >= 1.7 && ratio <= 2.3, os.str()};
}

// 7. energy monotone without proliferation
Outcome energy_dissipation() {
    RunConfig c = default_config();
    c.laws.P0 = 0.0;
    const auto fwd = run_forward(c.make_model(), c.initial_state());
    const auto& rows = fwd.report.rows;
    const double slack = 1e-8 * (1.0 + std::abs(rows.front().energy));
    double worst = -1e300;
    for (std::size_t k = 1; k < rows.size(); ++k) worst = std::max(worst, rows[k].energy - rows[k - 1].energy);
    std::ostringstream os;
    os << "steps=" << rows.size() - 1 << " E0=" << rows.front().energy << " ET=" << rows.back().energy
       << " max increase=" << worst << " (slack " << slack << ")";
    return {worst <= slack, os.str()};
}

// 8 and 9 share the noiseless continuation run.
struct TikhonovRuns {
    std::shared_ptr<const Model> model;
    InverseProblemSpec spec;
    ContinuationResult clean, noisy;
    double clean_seconds = 0.0, noisy_seconds = 0.0;
};

const double inverse_horizon = 0.02;

TikhonovRuns run_tikhonov() {
    TikhonovRuns r;
    const RunConfig c = default_config();
    r.model = model_with(c, inverse_horizon);
    r.spec = twin_spec(c, r.model, 0.0);
    const ScalarField u0 = project(r.model->laws(), r.spec, make_field(c.inverse.start, c.grid));
    auto t0 = std::chrono::steady_clock::now();
    r.clean = alpha_continuation(r.model, r.spec, u0);
    auto t1 = std::chrono::steady_clock::now();
    const InverseProblemSpec noisy = twin_spec(c, r.model, 1e-2);
    r.noisy = alpha_continuation(r.model, noisy, u0);
    auto t2 = std::chrono::steady_clock::now();
    r.clean_seconds = std::chrono::duration<double>(t1 - t0).count();
    r.noisy_seconds = std::chrono::duration<double>(t2 - t1).count();
    return r;
}

Outcome tikhonov(const TikhonovRuns& r) {
    const RunConfig c = default_config();
    const ScalarField truth = make_field(c.inverse.truth, c.grid);
    const auto& steps = r.clean.steps;
    const ContinuationStep& last = steps.back();
    const double e0 = norm_l2(steps.front().u_hat - truth), ej = norm_l2(last.u_hat - truth);
    const ContinuationStep& sel = r.noisy.steps.at(r.noisy.selected);
    const double total = r.clean_seconds + r.noisy_seconds;
    bool all_converged = true;
    for (const auto& s : steps) all_converged = all_converged && s.status == SolveStatus::converged;
    std::ostringstream os;
    os << "32x32 T=" << inverse_horizon << " stages=" << steps.size() << " final alpha=" << last.alpha
       << " final misfit=" << last.misfit << " (tol 1e-6) err0=" << e0 << " err_final=" << ej << " ratio=" << ej / e0
       << " (tol 0.5) all_converged=" << all_converged << "; noisy delta=1e-2: stopped j=" << sel.j
       << " alpha=" << sel.alpha << " |S(u)-phi_omega|=" << sel.residual_norm << " (tol 1.1e-2); runtime="
       << total << " s (tol 600)";
    const bool pass = steps.size() == 13 && last.misfit <= 1e-6 && ej <= 0.5 * e0 && sel.residual_norm <= 1.1e-2 && total <= 600;
    return {pass, os.str()};
}

Outcome vi_residual(const TikhonovRuns& r) {
    const ContinuationStep& last = r.clean.steps.back();
    const ObjectiveValue v = objective(r.model, r.spec, last.u_hat, last.alpha);
    const AdjointState adj = solve_adjoint(*v.trajectory, v.residual);
    InverseProblemSpec s = r.spec;
    s.random_probes = 64;
    const double res = optimality_residual(r.model->laws(), s, last.u_hat, adj, last.alpha, 99);
    const double tol = 1e-6 * (1.0 + norm_l2(adj.p));
    std::ostringstream os;
    os << "alpha=" << last.alpha << " residual=" << res << " |p(0)|=" << norm_l2(adj.p) << " (tol " << tol << ")";
    return {res <= tol, os.str()};
}

// 10. regularised-family bounds on a dense scan
Outcome family_bounds() {
    int violations = 0, samples = 0;
    for (int a : {1, 2}) {
        ConstitutiveSet c;
        c.prolif_exponent = a;
        const double lo = c.alpha0(), hi = c.lambda_inf(), k1 = c.k1(), k2 = c.k2();
        for (double eps : {1e-1, 1e-2, 1e-4}) {
            const RegularizedSet reg(c, MaterialParams{}, eps);
            for (int i = 0; i < 10000; ++i) {
                const double s = -5.0 + 10.0 * i / 9999;
                const double l = reg.lambda(s);
                if (l < lo || l > hi) ++violations;
                if (std::abs(reg.PdF(s)) > k1 + k2 * std::abs(s)) ++violations;
                ++samples;
            }
        }
    }
    std::ostringstream os;
    os << samples << " samples (exponents 1, 2; eps 1e-1, 1e-2, 1e-4) violations=" << violations;
    return {violations == 0, os.str()};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int n, const std::function<Outcome()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failures;
        std::printf("criterion %d: %s  %s [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), sec);
        std::fflush(stdout);
    };
    report(1, duality);
    report(2, gradient_check);
    report(3, mass_identities);
    report(4, bounds);
    report(5, convolution);
    report(6, temporal_convergence);
    report(7, energy_dissipation);
    TikhonovRuns runs;
    bool have_runs = false;
    report(8, [&] {
        runs = run_tikhonov();
        have_runs = true;
        return tikhonov(runs);
    });
    report(9, [&]() -> Outcome {
        if (!have_runs) return {false, "continuation run unavailable"};
        return vi_residual(runs);
    });
    report(10, family_bounds);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
