#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nlch/error.hpp"
#include "nlch/grid.hpp"

namespace nlch {

enum class KernelFamily { gaussian, newtonian2d, mollified_compact };

inline std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::newtonian2d: return "newtonian2d";
        case KernelFamily::mollified_compact: return "mollified_compact";
    }
    return "unknown";
}

/// Analytic convolution kernel J with its gradient.
///
///   gaussian(w)            J = exp(-|z|^2 / 2w^2) / (2 pi w^2)        unit mass
///   newtonian2d            J = -(1/2pi) log|z|                      singular at 0
///   mollified_compact(r,k) J = (k+1)/(pi r^2) (1 - |z|^2/r^2)^k     unit mass, support |z| < r
///
/// All three are even and radial with a non-increasing profile. Admissibility
/// (radial, C^3 away from the origin, monotone profile derivatives near 0,
/// |D^3 J| <= C |z|^{-3}) is declared, not measured:
///
///   family              admissible
///   gaussian            yes
///   newtonian2d         yes
///   mollified_compact   iff k >= 4 (C^3 across |z| = r)
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double width = 0.1;   // gaussian
    double radius = 0.2;  // mollified_compact
    int exponent = 4;     // mollified_compact

    static KernelSpec gaussian(double w) { return {KernelFamily::gaussian, w, 0.0, 0}; }
    static KernelSpec newtonian2d() { return {KernelFamily::newtonian2d, 0.0, 0.0, 0}; }
    static KernelSpec mollified_compact(double r, int k) { return {KernelFamily::mollified_compact, 0.0, r, k}; }

    bool is_even() const { return true; }
    bool is_radial() const { return true; }
    bool is_singular() const { return family == KernelFamily::newtonian2d; }
    bool is_admissible() const {
        switch (family) {
            case KernelFamily::gaussian:
            case KernelFamily::newtonian2d: return true;
            case KernelFamily::mollified_compact: return exponent >= 4;
        }
        return false;
    }

    void validate() const {
        std::vector<std::string> errs;
        if (family == KernelFamily::gaussian && !(width > 0.0)) errs.push_back("kernel.width: must be > 0");
        if (family == KernelFamily::mollified_compact) {
            if (!(radius > 0.0)) errs.push_back("kernel.radius: must be > 0");
            if (exponent < 1) errs.push_back("kernel.exponent: must be >= 1");
        }
        if (!errs.empty()) throw ConfigError(errs);
    }

    double value(double x, double y) const {
        const double r2 = x * x + y * y;
        switch (family) {
            case KernelFamily::gaussian:
                return std::exp(-r2 / (2.0 * width * width)) / (2.0 * std::numbers::pi * width * width);
            case KernelFamily::newtonian2d:
                if (r2 == 0.0) throw DomainError("newtonian2d kernel evaluated at the origin");
                return -std::log(r2) / (4.0 * std::numbers::pi);
            case KernelFamily::mollified_compact: {
                const double t = 1.0 - r2 / (radius * radius);
                if (t <= 0.0) return 0.0;
                return (exponent + 1) / (std::numbers::pi * radius * radius) * std::pow(t, exponent);
            }
        }
        return 0.0;
    }

    /// grad J(z); the returned vector is (x, y) times a function of |z|^2,
    /// so gradient(-z) == -gradient(z) holds bit for bit.
    std::array<double, 2> gradient(double x, double y) const {
        const double r2 = x * x + y * y;
        double s = 0.0;
        switch (family) {
            case KernelFamily::gaussian:
                s = -value(x, y) / (width * width);
                break;
            case KernelFamily::newtonian2d:
                if (r2 == 0.0) throw DomainError("newtonian2d kernel gradient evaluated at the origin");
                s = -1.0 / (2.0 * std::numbers::pi * r2);
                break;
            case KernelFamily::mollified_compact: {
                const double t = 1.0 - r2 / (radius * radius);
                if (t <= 0.0) return {0.0, 0.0};
                const double c = (exponent + 1) / (std::numbers::pi * radius * radius);
                s = -2.0 * c * exponent * std::pow(t, exponent - 1) / (radius * radius);
                break;
            }
        }
        return {x * s, y * s};
    }
};

enum class SingularCellRule { none, exact_cell_average };

/// Mean of -(1/2pi) log|z| over the cell [-hx/2,hx/2] x [-hy/2,hy/2].
/// Uses int_0^a int_0^b log(x^2+y^2) = ab(log(a^2+b^2) - 3) + a^2 atan(b/a) + b^2 atan(a/b).
inline double newtonian_cell_average(double hx, double hy) {
    const double a = 0.5 * hx, b = 0.5 * hy;
    const double mean_log = (std::log(a * a + b * b) - 3.0) + (a / b) * std::atan(b / a) + (b / a) * std::atan(a / b);
    return -mean_log / (4.0 * std::numbers::pi);
}

/// Result of applying J, dJ/dx and dJ/dy to one field.
struct ConvolutionTriple {
    ScalarField j;
    ScalarField gx;
    ScalarField gy;
};

/// Zero-padded FFT realisation of the truncated-domain convolution
/// (J * f)(x) = int_Omega J(x - y) f(y) dy, midpoint quadrature.
/// Immutable after construction.
class ConvolutionPlan {
public:
    ConvolutionPlan(const KernelSpec& kernel, const GridSpec& grid, SingularCellRule rule = SingularCellRule::none)
        : kernel_(kernel), grid_(grid), rule_(rule), px_(2 * grid.nx), py_(2 * grid.ny) {
        grid.validate();
        kernel.validate();
        if (kernel.is_singular() && rule == SingularCellRule::none)
            throw ConfigError("kernel: " + to_string(kernel.family) +
                              " is singular at the origin and needs a singular-cell rule");
        make_fftw_plans();
        build_spectra();
    }

    const GridSpec& grid() const { return grid_; }
    const KernelSpec& kernel() const { return kernel_; }
    SingularCellRule singular_cell_rule() const { return rule_; }
    /// max_x sum_y |J(x-y)| dx dy
    double a_star() const { return a_star_; }
    /// max_x sum_y |grad J(x-y)| dx dy
    double b_bound() const { return b_bound_; }

    /// Sampled kernel at lattice offset (a dx, b dy), |a| < nx, |b| < ny.
    double kernel_sample(int a, int b) const {
        if (a == 0 && b == 0 && kernel_.is_singular()) return newtonian_cell_average(grid_.dx(), grid_.dy());
        return kernel_.value(a * grid_.dx(), b * grid_.dy());
    }
    std::array<double, 2> gradient_sample(int a, int b) const {
        if (a == 0 && b == 0) return {0.0, 0.0};
        return kernel_.gradient(a * grid_.dx(), b * grid_.dy());
    }

    ScalarField conv(const ScalarField& f) const {
        check(f, "conv");
        auto spec = forward(f);
        return inverse(spec, &j_hat_);
    }

    std::pair<ScalarField, ScalarField> conv_grad(const ScalarField& f) const {
        check(f, "conv_grad");
        auto spec = forward(f);
        return {inverse(spec, &jx_hat_), inverse(spec, &jy_hat_)};
    }

    ConvolutionTriple conv_all(const ScalarField& f) const {
        check(f, "conv_all");
        auto spec = forward(f);
        return {inverse(spec, &j_hat_), inverse(spec, &jx_hat_), inverse(spec, &jy_hat_)};
    }

    /// (grad J .* v)(x) = sum_y grad J(x - y) . v(y) dx dy.
    /// Satisfies <grad J * f, v> = -<f, grad J .* v>.
    ScalarField conv_grad_adjoint(const ScalarField& vx, const ScalarField& vy) const {
        check(vx, "conv_grad_adjoint");
        check(vy, "conv_grad_adjoint");
        auto sx = forward(vx);
        auto sy = forward(vy);
        for (std::size_t k = 0; k < sx.size(); ++k) sx[k] = sx[k] * jx_hat_[k] + sy[k] * jy_hat_[k];
        return inverse(sx, nullptr);
    }

private:
    using Spectrum = std::vector<std::complex<double>>;

    struct PlanDeleter {
        void operator()(fftw_plan_s* p) const {
            if (p) fftw_destroy_plan(p);
        }
    };
    using PlanHandle = std::shared_ptr<fftw_plan_s>;

    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }

    std::size_t spectral_size() const { return static_cast<std::size_t>(py_) * (px_ / 2 + 1); }
    std::size_t padded_size() const { return static_cast<std::size_t>(px_) * py_; }

    void check(const ScalarField& f, const char* where) const { require_same_grid(f.grid(), grid_, where); }

    void make_fftw_plans() {
        std::lock_guard lock(planner_mutex());
        double* in = fftw_alloc_real(padded_size());
        fftw_complex* out = fftw_alloc_complex(spectral_size());
        fwd_ = PlanHandle(fftw_plan_dft_r2c_2d(py_, px_, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED), PlanDeleter{});
        bwd_ = PlanHandle(fftw_plan_dft_c2r_2d(py_, px_, out, in, FFTW_ESTIMATE | FFTW_UNALIGNED), PlanDeleter{});
        fftw_free(in);
        fftw_free(out);
        if (!fwd_ || !bwd_) throw NumericalError("FFTW plan creation failed");
    }

    Spectrum transform_padded(std::vector<double>& padded) const {
        Spectrum out(spectral_size());
        fftw_execute_dft_r2c(fwd_.get(), padded.data(), reinterpret_cast<fftw_complex*>(out.data()));
        return out;
    }

    Spectrum forward(const ScalarField& f) const {
        std::vector<double> padded(padded_size(), 0.0);
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) padded[static_cast<std::size_t>(i) + static_cast<std::size_t>(px_) * j] = f(i, j);
        return transform_padded(padded);
    }

    ScalarField inverse(const Spectrum& spec, const Spectrum* kernel_hat) const {
        Spectrum work(spec);
        if (kernel_hat)
            for (std::size_t k = 0; k < work.size(); ++k) work[k] *= (*kernel_hat)[k];
        std::vector<double> padded(padded_size());
        fftw_execute_dft_c2r(bwd_.get(), reinterpret_cast<fftw_complex*>(work.data()), padded.data());
        const double scale = grid_.cell_area() / static_cast<double>(padded_size());
        ScalarField out(grid_);
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) out(i, j) = padded[static_cast<std::size_t>(i) + static_cast<std::size_t>(px_) * j] * scale;
        return out;
    }

    std::size_t wrap(int a, int b) const {
        const int ia = a < 0 ? a + px_ : a;
        const int ib = b < 0 ? b + py_ : b;
        return static_cast<std::size_t>(ia) + static_cast<std::size_t>(px_) * ib;
    }

    void build_spectra() {
        std::vector<double> j(padded_size(), 0.0), jx(padded_size(), 0.0), jy(padded_size(), 0.0);
        std::vector<double> jabs(padded_size(), 0.0), gabs(padded_size(), 0.0);
        for (int b = -(grid_.ny - 1); b < grid_.ny; ++b)
            for (int a = -(grid_.nx - 1); a < grid_.nx; ++a) {
                const std::size_t k = wrap(a, b);
                j[k] = kernel_sample(a, b);
                const auto g = gradient_sample(a, b);
                jx[k] = g[0];
                jy[k] = g[1];
                jabs[k] = std::abs(j[k]);
                gabs[k] = std::hypot(g[0], g[1]);
            }
        j_hat_ = transform_padded(j);
        jx_hat_ = transform_padded(jx);
        jy_hat_ = transform_padded(jy);
        const ScalarField ones(grid_, 1.0);
        auto ones_hat = forward(ones);
        const Spectrum a_hat = transform_padded(jabs);
        a_star_ = inverse(ones_hat, &a_hat).max_abs();
        const Spectrum g_hat = transform_padded(gabs);
        b_bound_ = inverse(ones_hat, &g_hat).max_abs();
    }

    KernelSpec kernel_;
    GridSpec grid_;
    SingularCellRule rule_;
    int px_, py_;
    PlanHandle fwd_, bwd_;
    Spectrum j_hat_, jx_hat_, jy_hat_;
    double a_star_ = 0.0, b_bound_ = 0.0;
};

/// Empirical constant in ||div(grad J * psi)||_p <= C_p ||psi||_p. The
/// divergence uses face averages of grad J * psi with boundary faces taking
/// the adjacent cell value. Zero samples are skipped; returns nullopt if no
/// sample is usable.
inline std::optional<double> div_grad_conv_monitor(const ConvolutionPlan& plan, const std::vector<ScalarField>& samples, double p) {
    std::optional<double> best;
    const GridSpec& g = plan.grid();
    for (const auto& psi : samples) {
        const double denom = norm_lp(psi, p);
        if (!(denom > 0.0)) continue;
        auto [gx, gy] = plan.conv_grad(psi);
        FluxField q = face_average(gx, gy);
        for (int j = 0; j < g.ny; ++j) {
            q.xf(0, j) = gx(0, j);
            q.xf(g.nx, j) = gx(g.nx - 1, j);
        }
        for (int i = 0; i < g.nx; ++i) {
            q.yf(i, 0) = gy(i, 0);
            q.yf(i, g.ny) = gy(i, g.ny - 1);
        }
        const double ratio = norm_lp(divergence_cells(q), p) / denom;
        best = best ? std::max(*best, ratio) : ratio;
    }
    return best;
}

}  // namespace nlch
