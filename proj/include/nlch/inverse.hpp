#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nlch/forward.hpp"
#include "nlch/sensitivity.hpp"

namespace nlch {

struct InverseProblemSpec {
    ScalarField phi_omega;  // measurement of phi(T)
    ScalarField sigma0;     // known nutrient datum
    double alpha = 1e-2;
    /// Entropy cap; infinity drops the constraint M(u) <= kappa.
    double kappa = std::numeric_limits<double>::infinity();
    double feas_margin = 1e-3;

    // solver
    int max_iter = 500;
    int max_backtracks = 30;
    double opt_tol = 1e-9;
    double armijo_c = 1e-4;
    /// Step in the H^1 metric instead of the L2 metric.
    bool sobolev_gradient = false;
    int random_probes = 16;
    std::uint64_t seed = 1;

    // continuation
    double alpha_start = 1e-2;
    double alpha_factor = 0.5;
    int schedule_length = 13;
    double delta = 0.0;
    double c_dp = 1.1;
    double ratio_cap = 10.0;

    void validate() const {
        std::vector<std::string> errs;
        if (!(alpha >= 0.0)) errs.push_back("inverse.alpha: must be >= 0");
        if (!(kappa > 0.0)) errs.push_back("inverse.kappa: must be > 0");
        if (!(feas_margin >= 0.0 && feas_margin < 1.0)) errs.push_back("inverse.feas_margin: must lie in [0, 1)");
        if (max_iter < 0) errs.push_back("inverse.max_iter: must be >= 0");
        if (max_backtracks < 1) errs.push_back("inverse.max_backtracks: must be >= 1");
        if (!(opt_tol >= 0.0)) errs.push_back("inverse.opt_tol: must be >= 0");
        if (!(alpha_start > 0.0)) errs.push_back("inverse.alpha_start: must be > 0");
        if (!(alpha_factor > 0.0 && alpha_factor < 1.0)) errs.push_back("inverse.alpha_factor: must lie in (0, 1)");
        if (schedule_length < 1) errs.push_back("inverse.schedule_length: must be >= 1");
        if (!(delta >= 0.0)) errs.push_back("inverse.delta: must be >= 0");
        if (!(c_dp >= 1.0)) errs.push_back("inverse.c_dp: must be >= 1");
        if (!(ratio_cap > 0.0)) errs.push_back("inverse.ratio_cap: must be > 0");
        if (random_probes < 0) errs.push_back("inverse.random_probes: must be >= 0");
        if (!errs.empty()) throw ConfigError(errs);
    }
};

/// Pointwise bound s_kappa = min(1 - feas_margin, M^{-1}(kappa)).
inline double feasible_bound(const ConstitutiveSet& laws, const InverseProblemSpec& spec) {
    double s = 1.0 - spec.feas_margin;
    if (std::isfinite(spec.kappa)) s = std::min(s, laws.entropy_inverse(spec.kappa));
    return s;
}

/// Projection onto {|u| <= s_kappa}, which for even, increasing-in-|s| M
/// is the set {|u| <= 1 - feas_margin, M(u) <= kappa}.
inline ScalarField project(const ConstitutiveSet& laws, const InverseProblemSpec& spec, const ScalarField& u) {
    const double s = feasible_bound(laws, spec);
    return map(u, [s](double v) { return std::clamp(v, -s, s); });
}

struct ObjectiveValue {
    double f_alpha = 0.0;
    double misfit = 0.0;   // (1/2)||S(u) - phi_omega||^2
    double penalty = 0.0;  // (alpha/2)||u||_V^2
    std::shared_ptr<Trajectory> trajectory;
    ScalarField residual;  // S(u) - phi_omega
};

/// f_alpha(u) = (1/2)||S(u) - phi_omega||^2 + (alpha/2)||u||_V^2.
inline ObjectiveValue objective(std::shared_ptr<const Model> model, const InverseProblemSpec& spec, const ScalarField& u,
                                double alpha) {
    ForwardResult fwd = run_forward(model, State{0.0, u, spec.sigma0});
    ObjectiveValue out;
    out.residual = fwd.trajectory.final_state().phi - spec.phi_omega;
    out.misfit = 0.5 * inner_l2(out.residual, out.residual);
    out.penalty = 0.5 * alpha * inner_h1(u, u);
    out.f_alpha = out.misfit + out.penalty;
    out.trajectory = std::make_shared<Trajectory>(std::move(fwd.trajectory));
    return out;
}

inline ObjectiveValue objective(std::shared_ptr<const Model> model, const InverseProblemSpec& spec, const ScalarField& u) {
    return objective(std::move(model), spec, u, spec.alpha);
}

/// L2 representer of the derivative of f_alpha: p(0) + alpha (u - Lap_h u).
inline ScalarField gradient_representer(const AdjointState& adjoint0, const ScalarField& u, double alpha) {
    ScalarField g = adjoint0.p;
    g.axpy(alpha, u);
    g.axpy(-alpha, laplacian(u));
    return g;
}

/// Sampled violation of the variational inequality
///   (p(0) + alpha u, v - u) + alpha (grad u, grad(v - u)) >= 0  for all feasible v.
/// Probes: for every cell, v = u with that cell moved to +s_kappa and to
/// -s_kappa; plus `random_probes` v drawn uniformly from the box. Returns
/// max(0, -min pairing).
inline double optimality_residual(const ConstitutiveSet& laws, const InverseProblemSpec& spec, const ScalarField& u,
                                  const AdjointState& adjoint0, double alpha, std::uint64_t seed) {
    const double s = feasible_bound(laws, spec);
    const double area = u.grid().cell_area();
    const ScalarField g = gradient_representer(adjoint0, u, alpha);
    double worst = 0.0;
    // A spike h = c e_i pairs to c g_i |cell| because g is the exact representer.
    for (std::size_t k = 0; k < u.size(); ++k) {
        worst = std::min(worst, area * g[k] * (s - u[k]));
        worst = std::min(worst, area * g[k] * (-s - u[k]));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-s, s);
    for (int r = 0; r < spec.random_probes; ++r) {
        ScalarField h(u.grid());
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = uni(rng) - u[k];
        worst = std::min(worst, reduced_gradient_pairing(adjoint0, u, alpha, h));
    }
    return -worst;
}

inline double optimality_residual(const ConstitutiveSet& laws, const InverseProblemSpec& spec, const ScalarField& u,
                                  const AdjointState& adjoint0) {
    return optimality_residual(laws, spec, u, adjoint0, spec.alpha, spec.seed);
}

struct IterateRow {
    int iter;
    double f_alpha, misfit, penalty, step, opt_residual, active_fraction;
};

struct IterateLog {
    std::vector<IterateRow> rows;
};

enum class SolveStatus { converged, max_iter, line_search_failed };

inline std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::max_iter: return "max_iter";
        case SolveStatus::line_search_failed: return "line_search_failed";
    }
    return "unknown";
}

struct TikhonovResult {
    ScalarField u;
    IterateLog log;
    SolveStatus status = SolveStatus::max_iter;
    ObjectiveValue value;  // at u
    AdjointState adjoint0;  // at u
    double opt_residual = 0.0;
};

/// Projected gradient descent on f_alpha with Barzilai-Borwein trial steps
/// and Armijo backtracking (every accepted step decreases f_alpha). The
/// direction is the L2 representer p(0) + alpha(u - Lap_h u), or its H^1
/// representer when `sobolev_gradient` is set.
inline TikhonovResult solve_tikhonov(std::shared_ptr<const Model> model, const InverseProblemSpec& spec,
                                     const ScalarField& u0, double alpha) {
    spec.validate();
    const ConstitutiveSet& laws = model->laws();
    const double bound = feasible_bound(laws, spec);
    const GridSpec& grid = model->grid;

    auto active_fraction = [&](const ScalarField& u) {
        std::size_t n = 0;
        for (double v : u.values()) n += std::abs(v) >= bound * (1.0 - 1e-14) ? 1 : 0;
        return static_cast<double>(n) / static_cast<double>(u.size());
    };
    std::optional<SpdFactor> h1_metric;
    if (spec.sobolev_gradient)
        h1_metric.emplace(assemble_diffusion(std::vector<double>(grid.size(), 1.0), 1.0, FluxField(grid, 1.0)));
    auto direction = [&](const ScalarField& g) { return h1_metric ? h1_metric->solve(g) : g; };
    auto metric = [&](const ScalarField& a, const ScalarField& b) {
        return spec.sobolev_gradient ? inner_h1(a, b) : inner_l2(a, b);
    };

    TikhonovResult res;
    res.u = project(laws, spec, u0);
    res.value = objective(model, spec, res.u, alpha);
    res.adjoint0 = solve_adjoint(*res.value.trajectory, res.value.residual);
    ScalarField g = gradient_representer(res.adjoint0, res.u, alpha);
    ScalarField d = direction(g);
    double step = 1.0 / std::max(1.0, d.max_abs());
    double accepted_step = 0.0;

    for (int iter = 0;; ++iter) {
        res.opt_residual = optimality_residual(laws, spec, res.u, res.adjoint0, alpha, spec.seed + iter);
        res.log.rows.push_back({iter, res.value.f_alpha, res.value.misfit, res.value.penalty, accepted_step,
                                res.opt_residual, active_fraction(res.u)});
        if (res.opt_residual <= spec.opt_tol) {
            res.status = SolveStatus::converged;
            break;
        }
        if (iter >= spec.max_iter) {
            res.status = SolveStatus::max_iter;
            break;
        }

        bool accepted = false;
        double t = step;
        for (int bt = 0; bt < spec.max_backtracks; ++bt, t *= 0.5) {
            ScalarField trial = res.u;
            trial.axpy(-t, d);
            trial = project(laws, spec, trial);
            const ScalarField s = trial - res.u;
            const double decrease = inner_l2(g, s);
            if (!(decrease < 0.0)) break;
            ObjectiveValue v = objective(model, spec, trial, alpha);
            if (v.f_alpha <= res.value.f_alpha + spec.armijo_c * decrease) {
                AdjointState adj = solve_adjoint(*v.trajectory, v.residual);
                ScalarField g_new = gradient_representer(adj, trial, alpha);
                const ScalarField y = g_new - g;
                const double sy = inner_l2(s, y);
                const double ss = metric(s, s);
                step = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : t * 4.0;
                accepted_step = t;
                res.u = std::move(trial);
                res.value = std::move(v);
                res.adjoint0 = std::move(adj);
                g = std::move(g_new);
                d = direction(g);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.status = SolveStatus::line_search_failed;
            break;
        }
    }
    return res;
}

inline TikhonovResult solve_tikhonov(std::shared_ptr<const Model> model, const InverseProblemSpec& spec, const ScalarField& u0) {
    return solve_tikhonov(std::move(model), spec, u0, spec.alpha);
}

struct ContinuationStep {
    int j = 0;
    double alpha = 0.0;
    bool admissible = true;  // delta^2 / alpha <= ratio_cap
    ScalarField u_hat;
    double misfit = 0.0;
    double residual_norm = 0.0;  // ||S(u_hat) - phi_omega||
    double f_alpha = 0.0;
    double opt_residual = 0.0;
    int iterations = 0;
    SolveStatus status = SolveStatus::max_iter;
    IterateLog log;
};

struct ContinuationResult {
    std::vector<ContinuationStep> steps;
    /// Index into `steps` of the returned iterate.
    int selected = -1;
    bool discrepancy_reached = false;
    std::vector<std::string> notes;
};

/// Warm-started solves along alpha_j = alpha_start * alpha_factor^j. Stops at
/// the first j with ||S(u_j) - phi_omega|| <= c_dp * delta (when delta > 0),
/// or when alpha_j would violate delta^2 / alpha_j <= ratio_cap, or when the
/// schedule is exhausted.
inline ContinuationResult alpha_continuation(std::shared_ptr<const Model> model, const InverseProblemSpec& spec,
                                             const ScalarField& u0) {
    spec.validate();
    ContinuationResult out;
    ScalarField u = u0;
    for (int j = 0; j < spec.schedule_length; ++j) {
        const double alpha = spec.alpha_start * std::pow(spec.alpha_factor, j);
        if (spec.delta > 0.0 && spec.delta * spec.delta / alpha > spec.ratio_cap) {
            out.notes.push_back("alpha_" + std::to_string(j) + " = " + std::to_string(alpha) +
                                " rejected: delta^2/alpha exceeds ratio_cap");
            break;
        }
        InverseProblemSpec sj = spec;
        sj.alpha = alpha;
        TikhonovResult r = solve_tikhonov(model, sj, u, alpha);
        ContinuationStep st;
        st.j = j;
        st.alpha = alpha;
        st.u_hat = r.u;
        st.misfit = r.value.misfit;
        st.residual_norm = norm_l2(r.value.residual);
        st.f_alpha = r.value.f_alpha;
        st.opt_residual = r.opt_residual;
        st.iterations = static_cast<int>(r.log.rows.size()) - 1;
        st.status = r.status;
        st.log = std::move(r.log);
        u = r.u;
        out.steps.push_back(std::move(st));
        out.selected = j;
        if (spec.delta > 0.0 && out.steps.back().residual_norm <= spec.c_dp * spec.delta) {
            out.discrepancy_reached = true;
            break;
        }
    }
    return out;
}

}  // namespace nlch
