#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nlch/constitutive.hpp"
#include "nlch/error.hpp"
#include "nlch/grid.hpp"
#include "nlch/kernels.hpp"
#include "nlch/linalg.hpp"

namespace nlch {

struct StepperConfig {
    double tau = 1e-3;
    double T = 0.1;
    double epsilon = 1e-4;
    /// Sup-norm bound on the nonlinear residual of the phase-field step.
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    /// Relative residual tolerance of the inner conjugate-gradient solves.
    double linear_tol = 1e-14;
    double bound_tol = 1e-3;
    /// Newton with the exact Jacobian instead of the face-averaged one.
    bool full_jacobian = false;
    /// Store every k-th state; the rest is recomputed on demand.
    int checkpoint_stride = 1;

    int steps() const {
        const double n = T / tau;
        const double r = std::round(n);
        if (!(tau > 0.0) || !(T >= 0.0) || std::abs(n - r) > 1e-9 * std::max(1.0, n))
            throw ConfigError("stepper.T: T / tau must be a non-negative integer (T = " + std::to_string(T) +
                              ", tau = " + std::to_string(tau) + ")");
        return static_cast<int>(r);
    }

    void validate() const {
        std::vector<std::string> errs;
        if (!(tau > 0.0)) errs.push_back("stepper.tau: must be > 0");
        if (!(T >= 0.0)) errs.push_back("stepper.T: must be >= 0");
        if (!(epsilon > 0.0 && epsilon < 1.0)) errs.push_back("stepper.epsilon: must lie in (0, 1)");
        if (!(newton_tol > 0.0)) errs.push_back("stepper.newton_tol: must be > 0");
        if (newton_max_iter < 1) errs.push_back("stepper.newton_max_iter: must be >= 1");
        if (!(linear_tol > 0.0)) errs.push_back("stepper.linear_tol: must be > 0");
        if (!(bound_tol >= 0.0)) errs.push_back("stepper.bound_tol: must be >= 0");
        if (checkpoint_stride < 1) errs.push_back("stepper.checkpoint_stride: must be >= 1");
        if (errs.empty()) {
            try {
                (void)steps();
            } catch (const ConfigError& e) {
                errs.push_back(e.what());
            }
        }
        if (!errs.empty()) throw ConfigError(errs);
    }
};

/// Everything a time step needs: grid, convolution plan, regularised
/// constitutive laws and stepper settings.
struct Model {
    Model(const GridSpec& g, const KernelSpec& kernel, SingularCellRule rule, const ConstitutiveSet& laws,
          const MaterialParams& params, const StepperConfig& stepper_cfg)
        : grid(g), plan(kernel, g, rule), reg(laws, params, stepper_cfg.epsilon), stepper(stepper_cfg) {
        stepper.validate();
    }

    const MaterialParams& params() const { return reg.params(); }
    const ConstitutiveSet& laws() const { return reg.base(); }

    GridSpec grid;
    ConvolutionPlan plan;
    RegularizedSet reg;
    StepperConfig stepper;
};

struct State {
    double t = 0.0;
    ScalarField phi;
    ScalarField sigma;
};

// ---------------------------------------------------------------------------
// phase-field step

/// Quantities of the phase-field step that depend only on (phi_k, sigma_k).
struct PhiExplicitTerms {
    ScalarField q;           // Q(phi_k)
    ConvolutionTriple conv;  // J*q, dJ/dx*q, dJ/dy*q
    ScalarField mobility;    // m_eps(phi_k)
    FluxField flux;          // face average of m_eps(phi_k) grad J*q, zero on the boundary
    ScalarField source;      // P_eps(phi_k)(sigma_k + B J*q) - A (P_eps F_eps')(q)
    ScalarField rhs;         // phi_k - tau B div(flux) + tau source
};

inline PhiExplicitTerms phi_explicit_terms(const Model& model, const ScalarField& phi_k, const ScalarField& sigma_k,
                                           double tau) {
    require_same_grid(phi_k.grid(), sigma_k.grid(), "step_phi");
    const auto& reg = model.reg;
    const double B = model.params().B;
    PhiExplicitTerms t;
    t.q = map(phi_k, truncate);
    t.conv = model.plan.conv_all(t.q);
    t.mobility = map(phi_k, [&](double s) { return reg.m(s); });
    t.flux = face_average(hadamard(t.mobility, t.conv.gx), hadamard(t.mobility, t.conv.gy));
    t.source = ScalarField(phi_k.grid());
    for (std::size_t k = 0; k < phi_k.size(); ++k) t.source[k] = eval_source(reg, phi_k[k], sigma_k[k], t.conv.j[k]);
    t.rhs = phi_k;
    t.rhs.axpy(-tau * B, divergence_cells(t.flux));
    t.rhs.axpy(tau, t.source);
    return t;
}

/// phi - tau * Lap_h Lambda_eps(phi) - rhs
inline ScalarField phi_residual(const Model& model, const ScalarField& phi, const ScalarField& rhs, double tau) {
    ScalarField r = phi;
    r.axpy(-tau, laplacian(map(phi, [&](double s) { return model.reg.Lambda(s); })));
    r -= rhs;
    return r;
}

struct PhiStepResult {
    ScalarField phi;
    int iterations = 0;
    double residual = 0.0;
};

/// One step of the semi-implicit phase-field scheme
///   phi - tau Lap_h Lambda_eps(phi) = phi_k - tau B div(m_eps(phi_k) grad J*Q(phi_k)) + tau source(phi_k, sigma_k).
/// Both fluxes vanish on boundary faces, so the total flux satisfies the
/// no-flux condition. Solved by Newton; the default Jacobian replaces
/// Lap_h diag(A lambda_eps) by div(face-averaged A lambda_eps grad).
inline PhiStepResult step_phi(const Model& model, const ScalarField& phi_k, const ScalarField& sigma_k, double tau) {
    if (!(tau > 0.0)) throw ConfigError("step_phi: tau must be > 0");
    if (!phi_k.all_finite() || !sigma_k.all_finite()) throw NumericalError("step_phi: non-finite input");
    const auto& cfg = model.stepper;
    const double A = model.params().A;
    const PhiExplicitTerms terms = phi_explicit_terms(model, phi_k, sigma_k, tau);

    ScalarField phi = phi_k;
    for (int it = 0;; ++it) {
        const ScalarField r = phi_residual(model, phi, terms.rhs, tau);
        const double res = r.max_abs();
        if (!std::isfinite(res)) throw NumericalError("step_phi: non-finite Newton residual");
        if (res <= cfg.newton_tol) return {std::move(phi), it, res};
        if (it >= cfg.newton_max_iter)
            throw NumericalError("step_phi: Newton did not converge in " + std::to_string(cfg.newton_max_iter) +
                                     " iterations (residual " + std::to_string(res) + ")",
                                 res);
        ScalarField neg_r = -1.0 * r;
        const ScalarField dlam = map(phi, [&](double s) { return A * model.reg.lambda(s); });
        if (cfg.full_jacobian) {
            // (I - tau Lap diag(d)) = (diag(1/d) - tau Lap) diag(d)
            std::vector<double> inv(dlam.size());
            for (std::size_t k = 0; k < inv.size(); ++k) inv[k] = 1.0 / dlam[k];
            const SparseMatrix a = assemble_diffusion(inv, tau, FluxField(phi.grid(), 1.0));
            ScalarField y = solve_cg(a, neg_r, cfg.linear_tol, "step_phi");
            for (std::size_t k = 0; k < y.size(); ++k) phi[k] += y[k] / dlam[k];
        } else {
            const SparseMatrix a = assemble_diffusion(std::vector<double>(phi.size(), 1.0), tau, face_average(dlam));
            phi += solve_cg(a, neg_r, cfg.linear_tol, "step_phi");
        }
    }
}

// ---------------------------------------------------------------------------
// nutrient step

/// Matrix of sigma -> (1 + tau P_eps(psi)) sigma - tau div(n(psi) grad sigma).
inline SparseMatrix sigma_matrix(const Model& model, const ScalarField& psi, double tau) {
    std::vector<double> d(psi.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = 1.0 + tau * model.reg.P(psi[k]);
    const FluxField nface = face_average(map(psi, [&](double s) { return model.reg.n(s); }));
    return assemble_diffusion(d, tau, nface);
}

/// Explicit part of the nutrient step: P_eps(psi)(A F_eps'(Q psi) - B J*Q psi).
inline ScalarField sigma_forcing(const Model& model, const ScalarField& psi, const ScalarField& conv_q) {
    const auto& reg = model.reg;
    const auto& p = model.params();
    ScalarField out(psi.grid());
    for (std::size_t k = 0; k < psi.size(); ++k)
        out[k] = reg.P(psi[k]) * (p.A * reg.dF(truncate(psi[k])) - p.B * conv_q[k]);
    return out;
}

/// Implicit nutrient step with the phase field frozen at psi = phi_{k+1}:
///   (I - tau div(n(psi) grad .) + tau P_eps(psi)) sigma = sigma_k + tau P_eps(psi)(A F_eps'(Q psi) - B J*Q psi).
inline ScalarField step_sigma(const Model& model, const ScalarField& phi_next, const ScalarField& sigma_k, double tau) {
    if (!(tau > 0.0)) throw ConfigError("step_sigma: tau must be > 0");
    require_same_grid(phi_next.grid(), sigma_k.grid(), "step_sigma");
    const ScalarField conv_q = model.plan.conv(map(phi_next, truncate));
    ScalarField rhs = sigma_k;
    rhs.axpy(tau, sigma_forcing(model, phi_next, conv_q));
    return solve_cg(sigma_matrix(model, phi_next, tau), rhs, model.stepper.linear_tol, "step_sigma");
}

/// Nutrient source -P_eps(psi)(sigma - A F_eps'(Q psi) + B J*Q psi).
inline ScalarField sigma_source(const Model& model, const ScalarField& psi, const ScalarField& sigma) {
    const ScalarField forcing = sigma_forcing(model, psi, model.plan.conv(map(psi, truncate)));
    ScalarField out(psi.grid());
    for (std::size_t k = 0; k < psi.size(); ++k) out[k] = forcing[k] - model.reg.P(psi[k]) * sigma[k];
    return out;
}

/// Phase-field step followed by the nutrient step.
inline State advance(const Model& model, const State& s) {
    const double tau = model.stepper.tau;
    State next;
    next.phi = step_phi(model, s.phi, s.sigma, tau).phi;
    next.sigma = step_sigma(model, next.phi, s.sigma, tau);
    next.t = s.t + tau;
    return next;
}

// ---------------------------------------------------------------------------
// diagnostics

/// E = -(B/2)(phi, J*phi) + A int F(Q phi) + (1/2)||sigma||^2.
inline double energy(const Model& model, const State& s) {
    const auto& p = model.params();
    const auto& laws = model.laws();
    const double nonlocal = inner_l2(s.phi, model.plan.conv(s.phi));
    const double local = integrate(map(s.phi, [&](double v) { return laws.F(truncate(v)); }));
    const double nutrient = inner_l2(s.sigma, s.sigma);
    return -0.5 * p.B * nonlocal + p.A * local + 0.5 * nutrient;
}

/// mu = A F_eps'(phi) - B J*phi.
inline ScalarField chemical_potential(const Model& model, const State& s) {
    ScalarField mu = map(s.phi, [&](double v) { return model.params().A * model.reg.dF(v); });
    mu.axpy(-model.params().B, model.plan.conv(s.phi));
    return mu;
}

inline double entropy_integral(const Model& model, const ScalarField& phi) {
    return integrate(map(phi, [&](double v) { return model.laws().M(truncate(v)); }));
}

struct EnergyRow {
    double t, mass_phi, mass_sigma, energy, max_abs_phi, entropy;
};

struct EnergyReport {
    std::vector<EnergyRow> rows;
    std::vector<std::string> warnings;
};

inline EnergyRow diagnostics_row(const Model& model, const State& s) {
    return {s.t, integrate(s.phi), integrate(s.sigma), energy(model, s), s.phi.max_abs(), entropy_integral(model, s.phi)};
}

// ---------------------------------------------------------------------------
// trajectory

/// States at t = 0, tau, ..., N tau. With a checkpoint stride > 1 only every
/// stride-th state (and the last) is stored; the others are recomputed from
/// the preceding checkpoint, one segment at a time. Recomputation is
/// deterministic, so recomputed states are bitwise equal to the originals.
/// Not safe for concurrent access (the segment cache is mutable).
class Trajectory {
public:
    Trajectory(std::shared_ptr<const Model> model, int stride) : model_(std::move(model)), stride_(stride) {
        if (stride_ < 1) throw ConfigError("trajectory: checkpoint stride must be >= 1");
    }

    void push(State s) {
        if (count_ > 0 && !(s.t > last_.t)) throw Error("trajectory: times must be strictly increasing");
        if (count_ > 0) require_same_grid(s.phi.grid(), last_.phi.grid(), "trajectory");
        if (count_ % stride_ == 0) checkpoints_.push_back(s);
        last_ = std::move(s);
        ++count_;
    }

    /// Number of stored time levels (N + 1).
    int size() const { return count_; }
    int steps() const { return count_ - 1; }
    int stride() const { return stride_; }
    const Model& model() const { return *model_; }
    std::shared_ptr<const Model> model_ptr() const { return model_; }
    const State& initial() const { return checkpoints_.front(); }
    const State& final_state() const { return last_; }

    State state(int k) const {
        if (k < 0 || k >= count_) throw Error("trajectory: index " + std::to_string(k) + " out of range");
        if (k == count_ - 1) return last_;
        if (k % stride_ == 0) return checkpoints_[static_cast<std::size_t>(k / stride_)];
        const int seg = k / stride_;
        if (cached_segment_ != seg) {
            cache_.clear();
            State s = checkpoints_[static_cast<std::size_t>(seg)];
            cache_.push_back(s);
            for (int i = 1; i < stride_ && seg * stride_ + i < count_ - 1; ++i) {
                s = advance(*model_, s);
                cache_.push_back(s);
            }
            cached_segment_ = seg;
        }
        return cache_[static_cast<std::size_t>(k - seg * stride_)];
    }

private:
    std::shared_ptr<const Model> model_;
    int stride_;
    int count_ = 0;
    std::vector<State> checkpoints_;
    State last_;
    mutable int cached_segment_ = -1;
    mutable std::vector<State> cache_;
};

struct ForwardResult {
    Trajectory trajectory;
    EnergyReport report;
};

/// Checks the initial datum: |phi0| <= 1 pointwise and int M(phi0) finite.
inline void check_initial_state(const Model& model, const State& initial) {
    require_same_grid(initial.phi.grid(), model.grid, "run_forward");
    require_same_grid(initial.sigma.grid(), model.grid, "run_forward");
    if (!initial.phi.all_finite() || !initial.sigma.all_finite())
        throw DomainError("initial state contains non-finite values");
    if (initial.phi.max_abs() > 1.0)
        throw DomainError("initial phase field violates |phi0| <= 1 (max " + std::to_string(initial.phi.max_abs()) + ")");
    if (!std::isfinite(entropy_integral(model, initial.phi))) throw DomainError("initial phase field has infinite entropy");
}

/// Runs N = T/tau steps from the initial state, recording one diagnostics
/// row per time level. Bound violations |phi| > 1 + bound_tol are reported
/// as warnings; the run continues.
inline ForwardResult run_forward(std::shared_ptr<const Model> model, const State& initial) {
    check_initial_state(*model, initial);
    const int n = model->stepper.steps();
    ForwardResult out{Trajectory(model, model->stepper.checkpoint_stride), {}};
    State s = initial;
    auto record = [&](const State& st, int k) {
        out.report.rows.push_back(diagnostics_row(*model, st));
        const double mx = st.phi.max_abs();
        if (mx > 1.0 + model->stepper.bound_tol)
            out.report.warnings.push_back("step " + std::to_string(k) + ": max|phi| = " + std::to_string(mx) +
                                          " exceeds 1 + bound_tol");
    };
    record(s, 0);
    out.trajectory.push(s);
    for (int k = 0; k < n; ++k) {
        try {
            s = advance(*model, s);
        } catch (const NumericalError& e) {
            throw NumericalError("step " + std::to_string(k + 1) + ": " + e.what(), e.residual());
        }
        if (!s.phi.all_finite() || !s.sigma.all_finite())
            throw NumericalError("step " + std::to_string(k + 1) + ": non-finite state");
        record(s, k + 1);
        out.trajectory.push(s);
    }
    return out;
}

}  // namespace nlch
