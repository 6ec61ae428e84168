// Command-line front end: forward, adjoint-check, invert, kernel-info, make-twin.
// Exit codes: 0 success, 1 validation/input error, 2 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "nlch/nlch.hpp"

namespace fs = std::filesystem;
using namespace nlch;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_numerical = 2;

RunConfig load(const std::string& path, const std::string& output_override) {
    RunConfig c = parse_config(path);
    if (!output_override.empty()) c.output_dir = output_override;
    return c;
}

std::string snapshot_name(const char* what, int k) {
    std::ostringstream ss;
    ss << what << '_' << std::setw(5) << std::setfill('0') << k << ".nlf";
    return ss.str();
}

ScalarField random_field(const GridSpec& g, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    ScalarField f(g);
    for (auto& v : f.raw()) v = nd(rng);
    return f;
}

/// Measurement for inversion: the configured file, or a twin built from the
/// configured truth.
ScalarField measurement(const RunConfig& c, std::shared_ptr<const Model> model, const ScalarField& sigma0) {
    if (c.inverse.measurement) return read_field(*c.inverse.measurement, c.grid);
    return make_twin(model, make_field(c.inverse.truth, c.grid), sigma0, c.inverse.spec.delta, c.seed).measured;
}

int cmd_forward(const RunConfig& c, int every) {
    OutputLock lock(c.output_dir);
    write_resolved_config(c.output_dir / "resolved_config.json", c);
    auto model = c.make_model();
    ForwardResult r = run_forward(model, c.initial_state());
    const int n = r.trajectory.steps();
    for (int k = 0; k <= n; ++k) {
        if (k % every != 0 && k != n) continue;
        const State s = r.trajectory.state(k);
        write_field(c.output_dir / snapshot_name("phi", k), s.phi);
        write_field(c.output_dir / snapshot_name("sigma", k), s.sigma);
    }
    write_energy_csv(c.output_dir / "energy.csv", r.report);
    for (const auto& w : r.report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "forward: " << n << " steps, final max|phi| = " << r.trajectory.final_state().phi.max_abs()
              << ", output in " << c.output_dir.string() << '\n';
    return exit_ok;
}

int cmd_adjoint_check(const RunConfig& c, int directions, double theta) {
    OutputLock lock(c.output_dir);
    write_resolved_config(c.output_dir / "resolved_config.json", c);
    auto model = c.make_model();
    const State init = c.initial_state();
    InverseProblemSpec spec = c.inverse.spec;
    spec.sigma0 = init.sigma;
    spec.phi_omega = measurement(c, model, init.sigma);

    const ScalarField u = project(model->laws(), spec, init.phi);
    ObjectiveValue base = objective(model, spec, u);
    const AdjointState adj = solve_adjoint(*base.trajectory, base.residual);

    std::ofstream os(c.output_dir / "adjoint_check.csv");
    os << std::setprecision(17) << "check,index,lhs,rhs,rel_err,tol,pass\n";
    std::mt19937_64 rng(c.seed);
    bool ok = true;
    auto row = [&](const char* name, int i, double lhs, double rhs, double tol) {
        const double err = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0});
        const bool pass = err <= tol;
        ok = ok && pass;
        os << name << ',' << i << ',' << lhs << ',' << rhs << ',' << err << ',' << tol << ',' << (pass ? 1 : 0) << '\n';
    };
    for (int i = 0; i < directions; ++i) {
        const ScalarField h = random_field(c.grid, rng);
        const TangentState tg = solve_tangent(*base.trajectory, h);
        row("duality", i, inner_l2(base.residual, tg.xi), inner_l2(adj.p, h), 1e-10);
    }
    for (int i = 0; i < directions; ++i) {
        ScalarField h = random_field(c.grid, rng);
        h *= 1.0 / h.max_abs();
        ScalarField up = u, um = u;
        up.axpy(theta, h);
        um.axpy(-theta, h);
        const double fd = (objective(model, spec, up).f_alpha - objective(model, spec, um).f_alpha) / (2.0 * theta);
        const double an = reduced_gradient_pairing(adj, u, spec.alpha, h);
        const double err = std::abs(fd - an) / std::max(std::abs(an), 1e-300);
        const bool pass = err <= 1e-6;
        ok = ok && pass;
        os << "gradient," << i << ',' << an << ',' << fd << ',' << err << ',' << 1e-6 << ',' << (pass ? 1 : 0) << '\n';
    }
    std::cout << "adjoint-check: " << (ok ? "all rows pass" : "FAILED") << " (" << (c.output_dir / "adjoint_check.csv").string()
              << ")\n";
    return ok ? exit_ok : exit_numerical;
}

int cmd_invert(const RunConfig& c) {
    OutputLock lock(c.output_dir);
    write_resolved_config(c.output_dir / "resolved_config.json", c);
    auto model = c.make_model();
    const State init = c.initial_state();
    InverseProblemSpec spec = c.inverse.spec;
    spec.sigma0 = init.sigma;
    spec.phi_omega = measurement(c, model, init.sigma);
    const ScalarField u0 = project(model->laws(), spec, make_field(c.inverse.start, c.grid));

    ContinuationResult res = alpha_continuation(model, spec, u0);
    write_continuation_csv(c.output_dir / "continuation.csv", res);
    for (const auto& s : res.steps) {
        std::ostringstream name;
        name << "iterate_log_" << std::setw(2) << std::setfill('0') << s.j << ".csv";
        write_iterate_csv(c.output_dir / name.str(), s.log);
    }
    for (const auto& n : res.notes) std::cerr << "note: " << n << '\n';
    if (res.selected < 0) {
        std::cerr << "invert: no admissible alpha in the schedule\n";
        return exit_invalid;
    }
    const ContinuationStep& sel = res.steps[static_cast<std::size_t>(res.selected)];
    write_field(c.output_dir / "u_hat.nlf", sel.u_hat);
    write_iterate_csv(c.output_dir / "iterate_log.csv", sel.log);
    std::cout << "invert: alpha = " << sel.alpha << ", misfit = " << sel.misfit << ", residual norm = " << sel.residual_norm
              << (res.discrepancy_reached ? " (discrepancy principle met)" : "") << '\n';
    return exit_ok;
}

int cmd_kernel_info(const RunConfig& c) {
    const ConvolutionPlan plan(c.kernel, c.grid, c.singular_cell_rule);
    std::mt19937_64 rng(c.seed);
    std::vector<ScalarField> samples;
    for (int i = 0; i < 8; ++i) samples.push_back(random_field(c.grid, rng));
    std::ostringstream os;
    os << std::setprecision(17) << "quantity,value\n";
    os << "family," << to_string(c.kernel.family) << '\n';
    os << "admissible," << (c.kernel.is_admissible() ? 1 : 0) << '\n';
    os << "singular," << (c.kernel.is_singular() ? 1 : 0) << '\n';
    os << "a_star," << plan.a_star() << '\n';
    os << "b_bound," << plan.b_bound() << '\n';
    for (double p : {2.0, 4.0, 8.0}) {
        const auto cp = div_grad_conv_monitor(plan, samples, p);
        os << "div_grad_conv_constant_p" << p << ',' << (cp ? *cp : std::nan("")) << '\n';
    }
    os << "alpha0," << c.laws.alpha0() << '\n';
    os << "lambda_inf," << c.laws.lambda_inf() << '\n';
    os << "k1," << c.laws.k1() << '\n';
    os << "k2," << c.laws.k2() << '\n';
    std::cout << os.str();
    OutputLock lock(c.output_dir);
    std::ofstream(c.output_dir / "kernel_info.csv") << os.str();
    return exit_ok;
}

int cmd_make_twin(const RunConfig& c) {
    OutputLock lock(c.output_dir);
    write_resolved_config(c.output_dir / "resolved_config.json", c);
    auto model = c.make_model();
    const State init = c.initial_state();
    const TwinData t = make_twin(model, make_field(c.inverse.truth, c.grid), init.sigma, c.inverse.spec.delta, c.seed);
    write_field(c.output_dir / "truth.nlf", t.truth);
    write_field(c.output_dir / "phi_omega_clean.nlf", t.clean);
    write_field(c.output_dir / "phi_omega.nlf", t.measured);
    write_field(c.output_dir / "sigma0.nlf", init.sigma);
    std::cout << "make-twin: delta = " << c.inverse.spec.delta << ", ||noise|| = " << norm_l2(t.measured - t.clean)
              << ", output in " << c.output_dir.string() << '\n';
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-local Cahn-Hilliard tumour model: forward solver, adjoint checks and Tikhonov inversion"};
    app.require_subcommand(1);
    std::string config, output;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config, "JSON run configuration")->required();
        sub->add_option("-o,--output", output, "Output directory (overrides output_dir)");
    };
    int every = 10, directions = 5;
    double theta = 1e-5;
    auto* fwd = app.add_subcommand("forward", "Run the forward model; write snapshots and energy.csv");
    add_common(fwd);
    fwd->add_option("--snapshot-every", every, "Write phi/sigma every k steps")->check(CLI::PositiveNumber);
    auto* chk = app.add_subcommand("adjoint-check", "Duality and gradient checks; exit 2 if any row fails");
    add_common(chk);
    chk->add_option("--directions", directions, "Random directions per check")->check(CLI::PositiveNumber);
    chk->add_option("--theta", theta, "Central-difference step")->check(CLI::PositiveNumber);
    auto* inv = app.add_subcommand("invert", "Tikhonov inversion with alpha continuation");
    add_common(inv);
    auto* kin = app.add_subcommand("kernel-info", "Kernel and constitutive bounds as CSV");
    add_common(kin);
    auto* twin = app.add_subcommand("make-twin", "Synthetic measurement from the configured truth");
    add_common(twin);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_invalid;
    }

    try {
        const RunConfig c = load(config, output);
        if (*fwd) return cmd_forward(c, every);
        if (*chk) return cmd_adjoint_check(c, directions, theta);
        if (*inv) return cmd_invert(c);
        if (*kin) return cmd_kernel_info(c);
        if (*twin) return cmd_make_twin(c);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error:\n";
        for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
        return exit_invalid;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << " (residual " << e.residual() << ")\n";
        return exit_numerical;
    } catch (const DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invalid;
    }
    return exit_invalid;
}
