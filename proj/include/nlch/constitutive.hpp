#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nlch/error.hpp"

namespace nlch {

/// Scales of the free energy: A multiplies the local potential, B the
/// non-local interaction. Chemotaxis is not modelled.
struct MaterialParams {
    double A = 1.0;
    double B = 1.0;

    void validate() const {
        std::vector<std::string> errs;
        if (!(A > 0.0)) errs.push_back("constitutive.A: must be > 0");
        if (!(B >= 0.0)) errs.push_back("constitutive.B: must be >= 0");
        if (!errs.empty()) throw ConfigError(errs);
    }
};

/// Q(s) = max(-1, min(s, 1)).
inline double truncate(double s) { return std::clamp(s, -1.0, 1.0); }
/// Derivative of truncate, taken as 1 on the open interval and 0 outside.
inline double truncate_derivative(double s) { return std::abs(s) < 1.0 ? 1.0 : 0.0; }

namespace detail {
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }
}  // namespace detail

struct PotentialValues {
    double F, dF, d2F;
};

/// Scalar constitutive laws on [-1, 1].
///
///   F(s) = (1-s)log(1-s) + (1+s)log(1+s)       logarithmic potential
///   m(s) = D(s)(1-s^2),   D(s) = d0 + d1 s^2   degenerate mobility
///   n(s) = n0 + n1 (1+s)/2                     nutrient mobility
///   P(s) = P0 (1-s^2)^a,  a in {1, 2}          proliferation
///
/// With the logarithmic F, lambda = m F'' = 2 D(s) in closed form.
struct ConstitutiveSet {
    double d0 = 1.0;
    double d1 = 0.0;
    double n0 = 1.0;
    double n1 = 0.0;
    double P0 = 0.5;
    int prolif_exponent = 2;

    void validate() const {
        std::vector<std::string> errs;
        if (!(d0 > 0.0) || !(d0 + d1 > 0.0)) errs.push_back("constitutive.d0: D(s) = d0 + d1 s^2 must be positive on [-1,1] (d0 > 0, d0 + d1 > 0)");
        if (!(n0 > 0.0) || !(n0 + n1 > 0.0)) errs.push_back("constitutive.n0: n(s) = n0 + n1 (1+s)/2 must be bounded below by a positive constant");
        if (!(P0 >= 0.0)) errs.push_back("constitutive.P0: must be >= 0");
        if (prolif_exponent != 1 && prolif_exponent != 2) errs.push_back("constitutive.prolif_exponent: must be 1 or 2");
        if (!errs.empty()) throw ConfigError(errs);
    }

    // --- potential -------------------------------------------------------

    PotentialValues potential(double s) const {
        if (!(std::abs(s) < 1.0))
            throw DomainError("logarithmic potential evaluated at |s| >= 1 (s = " + std::to_string(s) + ")");
        return {F(s), dF(s), d2F(s)};
    }
    /// Continuous on [-1, 1].
    double F(double s) const { return detail::xlogx(1.0 - s) + detail::xlogx(1.0 + s); }
    double dF(double s) const { return std::log1p(s) - std::log1p(-s); }
    double d2F(double s) const { return 2.0 / ((1.0 - s) * (1.0 + s)); }

    // --- mobilities ------------------------------------------------------

    double D(double s) const { return d0 + d1 * s * s; }
    double dD(double s) const { return 2.0 * d1 * s; }
    double m(double s) const { return D(s) * (1.0 - s) * (1.0 + s); }
    double dm(double s) const { return dD(s) * (1.0 - s * s) - 2.0 * s * D(s); }

    double n(double s) const { return n0 + n1 * 0.5 * (1.0 + s); }
    double dn(double) const { return 0.5 * n1; }

    // --- proliferation ---------------------------------------------------

    double P(double s) const {
        const double w = (1.0 - s) * (1.0 + s);
        return prolif_exponent == 2 ? P0 * w * w : P0 * w;
    }
    double dP(double s) const {
        const double w = (1.0 - s) * (1.0 + s);
        return prolif_exponent == 2 ? -4.0 * s * P0 * w : -2.0 * s * P0;
    }
    /// P F', continuously extended by 0 at +-1.
    double PdF(double s) const {
        if (std::abs(s) >= 1.0) return 0.0;
        return P(s) * dF(s);
    }

    // --- lambda, Lambda --------------------------------------------------

    /// lambda = m F'' (= 2 D), continuous on [-1, 1].
    double lambda(double s) const { return 2.0 * D(s); }
    double dlambda(double s) const { return 2.0 * dD(s); }
    /// Lambda(s) = A int_0^s lambda.
    double Lambda(double A, double s) const { return 2.0 * A * (d0 * s + d1 * s * s * s / 3.0); }

    // --- entropy ---------------------------------------------------------

    /// M with m M'' = 1, M(0) = M'(0) = 0, on [-1, 1]. Closed form from
    /// 1/(D(1-r^2)) = [1/(1-r^2) + d1/D(r)] / (d0 + d1).
    double M(double s) const {
        if (std::abs(s) > 1.0) throw DomainError("entropy evaluated at |s| > 1");
        const double alpha = 1.0 / (d0 + d1);
        const double beta = d1 / (d0 + d1);
        const double mlog = 0.5 * (detail::xlogx(1.0 - s) + detail::xlogx(1.0 + s));
        return alpha * mlog + beta * entropy_smooth_part(s);
    }
    double dM(double s) const {
        const double alpha = 1.0 / (d0 + d1);
        const double beta = d1 / (d0 + d1);
        double smooth = 0.0;
        if (d1 > 0.0) {
            const double c = std::sqrt(d1 / d0);
            smooth = std::atan(c * s) / (c * d0);
        } else if (d1 < 0.0) {
            const double c = std::sqrt(-d1 / d0);
            smooth = std::atanh(c * s) / (c * d0);
        }
        return alpha * 0.5 * dF(s) + beta * smooth;
    }

    /// Smallest s in [0, 1] with M(s) >= kappa (monotone bisection), or 1 if
    /// M(1) <= kappa.
    double entropy_inverse(double kappa) const {
        if (!(kappa > 0.0)) return 0.0;
        if (M(1.0) <= kappa) return 1.0;
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            (M(mid) <= kappa ? lo : hi) = mid;
        }
        return lo;
    }

    // --- bounds ----------------------------------------------------------

    double D_min() const { return d1 >= 0.0 ? d0 : d0 + d1; }
    double D_max() const { return d1 >= 0.0 ? d0 + d1 : d0; }
    double alpha0() const { return 2.0 * D_min(); }
    double lambda_inf() const { return 2.0 * D_max(); }
    double P_inf() const { return P0; }
    double n_star() const { return std::min(n0, n0 + n1); }
    /// sqrt(P) <= k m near +-1 (quadratic proliferation only).
    double k_growth() const { return std::sqrt(P0) / D_min(); }

    /// k1 = sup |P F'| on (-1, 1): dense scan refined by golden section.
    double k1() const {
        if (P0 == 0.0) return 0.0;
        const int n = 20000;
        double best = 0.0, arg = 0.0;
        for (int i = 1; i < n; ++i) {
            const double s = -1.0 + 2.0 * i / n;
            const double v = std::abs(PdF(s));
            if (v > best) best = v, arg = s;
        }
        double lo = std::max(-1.0, arg - 2.0 / n), hi = std::min(1.0, arg + 2.0 / n);
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        for (int it = 0; it < 100; ++it) {
            const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
            if (std::abs(PdF(a)) > std::abs(PdF(b))) hi = b; else lo = a;
        }
        return std::max(best, std::abs(PdF(0.5 * (lo + hi))));
    }
    /// k2 = k lambda_inf sqrt(P_inf) for quadratic proliferation, ||P F''||
    /// = 2 P0 for linear proliferation.
    double k2() const {
        if (prolif_exponent == 2) return k_growth() * lambda_inf() * std::sqrt(P_inf());
        return 2.0 * P0;
    }

private:
    double entropy_smooth_part(double s) const {
        if (d1 > 0.0) {
            const double c = std::sqrt(d1 / d0);
            return (s * std::atan(c * s) / c - std::log1p(c * c * s * s) / (2.0 * c * c)) / d0;
        }
        if (d1 < 0.0) {
            const double c = std::sqrt(-d1 / d0);
            return (s * std::atanh(c * s) / c + std::log1p(-c * c * s * s) / (2.0 * c * c)) / d0;
        }
        return 0.0;
    }
};

/// The epsilon-regularised family: F'', m and P frozen outside
/// [-1+eps, 1-eps], F_eps rebuilt from F_eps(0) = F(0), F_eps'(0) = F'(0),
/// i.e. F_eps' is affinely extended past the clamp points.
class RegularizedSet {
public:
    RegularizedSet(const ConstitutiveSet& base, const MaterialParams& params, double epsilon)
        : base_(base), params_(params), eps_(epsilon) {
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("constitutive.epsilon: must lie in (0, 1)");
        base.validate();
        params.validate();
    }

    const ConstitutiveSet& base() const { return base_; }
    const MaterialParams& params() const { return params_; }
    double epsilon() const { return eps_; }

    double clamp(double s) const { return std::clamp(s, -1.0 + eps_, 1.0 - eps_); }
    bool inside(double s) const { return std::abs(s) < 1.0 - eps_; }

    double F(double s) const {
        const double c = clamp(s), d = s - c;
        return base_.F(c) + base_.dF(c) * d + 0.5 * base_.d2F(c) * d * d;
    }
    double dF(double s) const {
        const double c = clamp(s);
        return base_.dF(c) + base_.d2F(c) * (s - c);
    }
    double d2F(double s) const { return base_.d2F(clamp(s)); }

    double m(double s) const { return base_.m(clamp(s)); }
    double dm(double s) const { return inside(s) ? base_.dm(s) : 0.0; }

    double P(double s) const { return base_.P(clamp(s)); }
    double dP(double s) const { return inside(s) ? base_.dP(s) : 0.0; }

    double PdF(double s) const { return P(s) * dF(s); }
    double dPdF(double s) const { return dP(s) * dF(s) + P(s) * d2F(s); }

    double lambda(double s) const { return base_.lambda(clamp(s)); }
    double dlambda(double s) const { return inside(s) ? base_.dlambda(s) : 0.0; }
    /// Lambda_eps(s) = A int_0^s lambda_eps.
    double Lambda(double s) const {
        const double c = clamp(s);
        return base_.Lambda(params_.A, c) + params_.A * base_.lambda(c) * (s - c);
    }

    /// Nutrient mobility, evaluated at Q(s).
    double n(double s) const { return base_.n(truncate(s)); }
    double dn(double s) const { return truncate_derivative(s) * base_.dn(s); }

private:
    ConstitutiveSet base_;
    MaterialParams params_;
    double eps_;
};

/// Pointwise phase-field source P_eps(phi)(sigma + B conv) - A (P_eps F_eps')(Q(phi)),
/// grouped as in the time-discrete scheme.
inline double eval_source(const RegularizedSet& reg, double phi, double sigma, double conv) {
    const auto& p = reg.params();
    return reg.P(phi) * (sigma + p.B * conv) - p.A * reg.PdF(truncate(phi));
}

}  // namespace nlch
