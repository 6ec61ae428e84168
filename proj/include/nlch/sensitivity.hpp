#pragma once

#include <cmath>
#include <string>

#include "nlch/forward.hpp"

namespace nlch {

/// First variation (xi, eta) of (phi, sigma) at time t.
struct TangentState {
    double t = 0.0;
    ScalarField xi;
    ScalarField eta;
};

/// Adjoint variables (p, q) at time t.
struct AdjointState {
    double t = 0.0;
    ScalarField p;
    ScalarField q;
};

/// Linearisation of one forward step (phase-field step, then nutrient step)
/// about a stored pair of base states. `apply` is the exact derivative of the
/// discrete step map, `apply_transpose` its exact transpose under the L2
/// pairing <xi, p> + <eta, q>.
///
/// How the coefficients of the continuous linearised/adjoint systems appear:
///   A lambda grad xi + A lambda' xi grad phi   implicit operator I - tau Lap_h diag(A lambda_eps(phi_{k+1}))
///   m (grad J * xi)                            mobility * (grad J * Q'xi)
///   m' xi (grad J * phi)                       dmobility * xi * (grad J * Q phi)
///   P' xi (sigma + B J*phi)                    dP * xi * (sigma_k + B J*Q phi_k)
///   P (eta + B J*xi)                           P * (eta + B J*Q'xi)
///   A (P F')' xi                               A (P_eps F_eps')'(Q phi_k) Q'xi
///   n grad eta + n' xi grad sigma              nutrient matrix and its derivative in phi_{k+1}
///   -B grad J .* (m grad p)  (adjoint)         transpose of the mobility * (grad J * .) block
/// The implicit phase-field solve is differentiated at the converged iterate
/// (implicit function rule), not through the Newton iterations.
class StepLinearization {
public:
    StepLinearization(const Model& model, const State& base_k, const State& base_k1)
        : model_(&model), t0_(base_k.t), t1_(base_k1.t) {
        const auto& reg = model.reg;
        const double A = model.params().A;
        const double B = model.params().B;
        const double tau = model.stepper.tau;
        if (std::abs((t1_ - t0_) - tau) > 1e-9 * std::max(1.0, std::abs(t1_)))
            throw Error("step linearisation: base states are not one time step apart");
        const GridSpec& g = model.grid;
        require_same_grid(base_k.phi.grid(), g, "StepLinearization");
        require_same_grid(base_k1.phi.grid(), g, "StepLinearization");

        // phase-field step, explicit part at phi_k
        sigma_k_ = base_k.sigma;
        const ScalarField q = map(base_k.phi, truncate);
        qd_ = map(base_k.phi, truncate_derivative);
        conv_ = model.plan.conv_all(q);
        mob_ = map(base_k.phi, [&](double s) { return reg.m(s); });
        dmob_ = map(base_k.phi, [&](double s) { return reg.dm(s); });
        P_ = map(base_k.phi, [&](double s) { return reg.P(s); });
        dP_ = map(base_k.phi, [&](double s) { return reg.dP(s); });
        dPF_ = map(q, [&](double s) { return reg.dPdF(s); });

        // implicit part at phi_{k+1}: I - tau Lap diag(d) = (diag(1/d) - tau Lap) diag(d)
        lam1_ = map(base_k1.phi, [&](double s) { return A * reg.lambda(s); });
        std::vector<double> inv(g.size());
        for (std::size_t k = 0; k < inv.size(); ++k) inv[k] = 1.0 / lam1_[k];
        phi_factor_ = SpdFactor(assemble_diffusion(inv, tau, FluxField(g, 1.0)));

        // nutrient step at (phi_{k+1}, sigma_{k+1})
        const ScalarField& psi = base_k1.phi;
        const ScalarField q1 = map(psi, truncate);
        qd1_ = map(psi, truncate_derivative);
        const ScalarField c1 = model.plan.conv(q1);
        P1_ = map(psi, [&](double s) { return reg.P(s); });
        dP1_ = map(psi, [&](double s) { return reg.dP(s); });
        d2F1_ = map(q1, [&](double s) { return reg.d2F(s); });
        dn1_ = map(psi, [&](double s) { return reg.dn(s); });
        sigma1_ = base_k1.sigma;
        grad_sigma1_ = gradient_faces(sigma1_);
        forcing_coef_ = ScalarField(g);
        for (std::size_t k = 0; k < g.size(); ++k)
            forcing_coef_[k] = A * reg.dF(q1[k]) - B * c1[k];
        sigma_factor_ = SpdFactor(sigma_matrix(model, psi, tau));
    }

    double t_begin() const { return t0_; }
    double t_end() const { return t1_; }

    TangentState apply(const TangentState& in) const {
        check_time(in.t, t0_, "step_tangent");
        const double A = model_->params().A;
        const double B = model_->params().B;
        const double tau = model_->stepper.tau;
        const GridSpec& g = model_->grid;

        // phase-field step
        const ScalarField dq = hadamard(qd_, in.xi);
        const ConvolutionTriple dc = model_->plan.conv_all(dq);
        ScalarField fx(g), fy(g), dsrc(g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            fx[k] = dmob_[k] * in.xi[k] * conv_.gx[k] + mob_[k] * dc.gx[k];
            fy[k] = dmob_[k] * in.xi[k] * conv_.gy[k] + mob_[k] * dc.gy[k];
            dsrc[k] = dP_[k] * in.xi[k] * (sigma_k_[k] + B * conv_.j[k]) + P_[k] * (in.eta[k] + B * dc.j[k]) -
                      A * dPF_[k] * dq[k];
        }
        ScalarField rhs = in.xi;
        rhs.axpy(-tau * B, divergence_cells(face_average(fx, fy)));
        rhs.axpy(tau, dsrc);
        ScalarField xi1 = phi_factor_.solve(rhs);
        for (std::size_t k = 0; k < g.size(); ++k) xi1[k] /= lam1_[k];

        // nutrient step
        const ScalarField dq1 = hadamard(qd1_, xi1);
        const ScalarField dc1 = model_->plan.conv(dq1);
        ScalarField srhs = in.eta;
        for (std::size_t k = 0; k < g.size(); ++k)
            srhs[k] += tau * (dP1_[k] * xi1[k] * (forcing_coef_[k] - sigma1_[k]) +
                              P1_[k] * (A * d2F1_[k] * dq1[k] - B * dc1[k]));
        FluxField nflux = face_average(hadamard(dn1_, xi1));
        nflux *= grad_sigma1_;
        srhs.axpy(tau, divergence_cells(nflux));
        ScalarField eta1 = sigma_factor_.solve(srhs);
        return {t1_, std::move(xi1), std::move(eta1)};
    }

    AdjointState apply_transpose(const AdjointState& in) const {
        check_time(in.t, t1_, "step_adjoint");
        const double A = model_->params().A;
        const double B = model_->params().B;
        const double tau = model_->stepper.tau;
        const GridSpec& g = model_->grid;

        // nutrient step (transposed)
        const ScalarField y = sigma_factor_.solve(in.q);
        ScalarField eta_bar = y;
        ScalarField xi1_bar = in.p;
        const ScalarField py = hadamard(P1_, y);
        const ScalarField kpy = model_->plan.conv(py);
        for (std::size_t k = 0; k < g.size(); ++k)
            xi1_bar[k] += tau * (dP1_[k] * (forcing_coef_[k] - sigma1_[k]) * y[k] +
                                 qd1_[k] * (A * d2F1_[k] * py[k] - B * kpy[k]));
        {
            FluxField gg = gradient_faces(y);
            gg *= grad_sigma1_;
            auto [cx, cy] = face_average_transpose(gg);
            for (std::size_t k = 0; k < g.size(); ++k) xi1_bar[k] -= tau * dn1_[k] * (cx[k] + cy[k]);
        }

        // phase-field step (transposed)
        ScalarField scaled = xi1_bar;
        for (std::size_t k = 0; k < g.size(); ++k) scaled[k] /= lam1_[k];
        const ScalarField z = phi_factor_.solve(scaled);

        ScalarField xi_bar = z;
        ScalarField dq_bar(g);
        FluxField gz = gradient_faces(z);
        gz *= tau * B;
        auto [ax, ay] = face_average_transpose(gz);
        const ScalarField adj = model_->plan.conv_grad_adjoint(hadamard(mob_, ax), hadamard(mob_, ay));
        ScalarField ps(g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double s = tau * z[k];
            xi_bar[k] += dmob_[k] * (conv_.gx[k] * ax[k] + conv_.gy[k] * ay[k]);
            xi_bar[k] += dP_[k] * (sigma_k_[k] + B * conv_.j[k]) * s;
            eta_bar[k] += P_[k] * s;
            ps[k] = P_[k] * s;
            dq_bar[k] = -adj[k] - A * dPF_[k] * s;
        }
        dq_bar.axpy(B, model_->plan.conv(ps));
        for (std::size_t k = 0; k < g.size(); ++k) xi_bar[k] += qd_[k] * dq_bar[k];
        return {t0_, std::move(xi_bar), std::move(eta_bar)};
    }

private:
    static void check_time(double t, double expected, const char* where) {
        if (std::abs(t - expected) > 1e-9 * std::max(1.0, std::abs(expected)))
            throw Error(std::string(where) + ": time " + std::to_string(t) + " does not match base time " +
                        std::to_string(expected));
    }

    const Model* model_;
    double t0_, t1_;
    ScalarField sigma_k_, qd_, mob_, dmob_, P_, dP_, dPF_;
    ConvolutionTriple conv_;
    ScalarField lam1_;
    SpdFactor phi_factor_;
    ScalarField qd1_, P1_, dP1_, d2F1_, dn1_, sigma1_, forcing_coef_;
    FluxField grad_sigma1_;
    SpdFactor sigma_factor_;
};

inline TangentState step_tangent(const Model& model, const State& base_k, const State& base_k1, const TangentState& tangent_k) {
    return StepLinearization(model, base_k, base_k1).apply(tangent_k);
}

inline AdjointState step_adjoint(const Model& model, const State& base_k, const State& base_k1, const AdjointState& adjoint_k1) {
    return StepLinearization(model, base_k, base_k1).apply_transpose(adjoint_k1);
}

/// Forward sweep from (xi, eta)(0) = (h, 0).
inline TangentState solve_tangent(const Trajectory& traj, const ScalarField& h) {
    const Model& model = traj.model();
    require_same_grid(h.grid(), model.grid, "solve_tangent");
    TangentState ts{traj.initial().t, h, ScalarField(h.grid())};
    State prev = traj.state(0);
    for (int k = 0; k < traj.steps(); ++k) {
        State next = traj.state(k + 1);
        ts = StepLinearization(model, prev, next).apply(ts);
        prev = std::move(next);
    }
    return ts;
}

/// Backward sweep from (p, q)(T) = (terminal_p, 0).
inline AdjointState solve_adjoint(const Trajectory& traj, const ScalarField& terminal_p) {
    const Model& model = traj.model();
    require_same_grid(terminal_p.grid(), model.grid, "solve_adjoint");
    AdjointState as{traj.final_state().t, terminal_p, ScalarField(terminal_p.grid())};
    for (int k = traj.steps() - 1; k >= 0; --k)
        as = StepLinearization(model, traj.state(k), traj.state(k + 1)).apply_transpose(as);
    return as;
}

/// Derivative of f_alpha at u in direction h:
///   (p(0), h) + alpha (u, h) + alpha (grad u, grad h).
inline double reduced_gradient_pairing(const AdjointState& adjoint0, const ScalarField& u, double alpha, const ScalarField& h) {
    require_same_grid(adjoint0.p.grid(), u.grid(), "reduced_gradient_pairing");
    require_same_grid(u.grid(), h.grid(), "reduced_gradient_pairing");
    return inner_l2(adjoint0.p, h) + alpha * inner_h1(u, h);
}

}  // namespace nlch
