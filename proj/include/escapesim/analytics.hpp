#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include <escapesim/params.hpp>

namespace escapesim {

enum class Regime { Subcritical, Critical, Supercritical };

/**
 * Relative tolerance for deciding lambda == lambda_c. Floating-point
 * equality against a computed curve is meaningless, and the critical point
 * belongs to the extinction phase, so ties resolve to Critical (extinct).
 */
inline constexpr double kCriticalRelTol = 1e-12;

namespace detail {

inline void check_lambda(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::domain_error("lambda must be a positive finite real");
}

inline void check_r(double r) {
    if (!(r > 0.0) || r > 1.0)
        throw std::domain_error("r must lie in (0, 1]");
}

inline void check_p(double p) {
    if (!(p > 0.0) || p > 1.0)
        throw std::domain_error("p must lie in (0, 1]");
}

inline Regime classify_against(double lambda, double lambda_c) {
    const double tol = kCriticalRelTol * std::max(1.0, lambda_c);
    if (std::abs(lambda - lambda_c) <= tol) return Regime::Critical;
    return lambda < lambda_c ? Regime::Subcritical : Regime::Supercritical;
}

}  // namespace detail

/**
 * Critical birth rate of the single-mutation-class model:
 * lambda_c(r) = (1 + sqrt(r))^-2. Extinction is almost sure if and only if
 * lambda <= lambda_c(r); at r = 1 this is the classic threshold 1/4.
 */
inline double critical_lambda(double r) {
    detail::check_r(r);
    const double s = 1.0 + std::sqrt(r);
    return 1.0 / (s * s);
}

/**
 * Critical birth rate with beneficial fraction p among mutations:
 * lambda_c(r, p) = (sqrt(1 - r + r p) + sqrt(r p))^-2. Reduces to
 * critical_lambda(r) at p = 1.
 */
inline double critical_lambda_mixed(double r, double p) {
    detail::check_r(r);
    detail::check_p(p);
    const double s = std::sqrt(1.0 - r + r * p) + std::sqrt(r * p);
    return 1.0 / (s * s);
}

/**
 * Phase of a parameter point against its critical curve (the mixed curve
 * when p < 1). Critical means |lambda - lambda_c| <= 1e-12 * max(1, lambda_c)
 * and lies in the extinction phase.
 */
inline Regime classify(const ModelParams& params) {
    validate(params);
    const double lc = params.p < 1.0 ? critical_lambda_mixed(params.r, params.p)
                                     : critical_lambda(params.r);
    return detail::classify_against(params.lambda, lc);
}

/** Real roots of X^2 - [1 + lambda(1-r)] X + lambda, with its discriminant. */
struct Roots {
    double alpha;
    double beta;
    double delta;
};

/**
 * Roots alpha <= beta of the characteristic polynomial
 * X^2 - [1 + lambda(1-r)] X + lambda = 0 and the discriminant
 * delta = [1 + lambda(1-r)]^2 - 4 lambda.
 *
 * Defined for lambda <= lambda_c(r), where delta >= 0; a discriminant that
 * computes slightly negative inside the criticality tolerance is clamped to
 * zero (the deficit is pure rounding) and the clamped value is reported.
 * At lambda = lambda_c(r) the roots coincide at 1 / (1 + sqrt(r)).
 */
inline Roots roots(double lambda, double r) {
    detail::check_lambda(lambda);
    detail::check_r(r);
    if (detail::classify_against(lambda, critical_lambda(r)) == Regime::Supercritical)
        throw std::domain_error("roots are complex above the critical birth rate");
    const double b = 1.0 + lambda * (1.0 - r);
    const double delta = std::max(b * b - 4.0 * lambda, 0.0);
    const double sq = std::sqrt(delta);
    return {(b - sq) / 2.0, (b + sq) / 2.0, delta};
}

/**
 * Mean total progeny E[N] (the initial pathogen included):
 * 2 / (1 - lambda(1-r) + sqrt(delta)) for lambda <= lambda_c(r), equal to
 * 1/(1 - alpha); the infinite variant above the critical rate. The additive
 * form is used as written because it avoids catastrophic cancellation near
 * criticality, where the subtractive quadratic formula for alpha loses
 * digits.
 */
inline ExtReal expected_total_progeny(double lambda, double r) {
    detail::check_lambda(lambda);
    detail::check_r(r);
    if (detail::classify_against(lambda, critical_lambda(r)) == Regime::Supercritical)
        return ExtReal::infinity();
    const double a = lambda * (1.0 - r);
    const double delta = std::max((1.0 + a) * (1.0 + a) - 4.0 * lambda, 0.0);
    return ExtReal::finite(2.0 / (1.0 - a + std::sqrt(delta)));
}

/** First moments of the mixed model's progeny counts. */
struct MixedMoments {
    ExtReal mean_viable;   ///< E[N_v], viable pathogens ever born
    ExtReal mean_sterile;  ///< E[S], sterile pathogens ever born
    ExtReal mean_total;    ///< E[N_v] + E[S]
};

/**
 * Mean viable, sterile and total progeny of the mixed model for
 * lambda <= lambda_c(r, p); all infinite above it.
 *
 *   E[N_v] = 2 / (1 - lambda(1-r) + sqrt(delta)),
 *   delta  = (1 + lambda(1-r))^2 - 4 lambda (1 - r + r p),
 *   E[S]   = r(1-p) / (1 - r(1-p)) * (E[N_v] - 1).
 *
 * The total is always E[N_v] + E[S] from the general expressions, including
 * at delta = 0. A known special-case display of the critical total uses
 * 1/(1 - lambda(1-r)) where the general formula gives 2/(1 - lambda(1-r));
 * the general formula is the internally consistent one (it matches both the
 * additivity above and the reduction E[N_v](lambda, r, p) =
 * E[N](lambda_eff, r_eff)), so it is used everywhere and the discrepancy is
 * documented here rather than patched.
 */
inline MixedMoments expected_counts_mixed(double lambda, double r, double p) {
    detail::check_lambda(lambda);
    detail::check_r(r);
    detail::check_p(p);
    if (detail::classify_against(lambda, critical_lambda_mixed(r, p)) == Regime::Supercritical)
        return {ExtReal::infinity(), ExtReal::infinity(), ExtReal::infinity()};
    const double a = lambda * (1.0 - r);
    const double delta = std::max((1.0 + a) * (1.0 + a) - 4.0 * lambda * (1.0 - r + r * p), 0.0);
    const double nv = 2.0 / (1.0 - a + std::sqrt(delta));
    const double s = r * (1.0 - p) / (1.0 - r * (1.0 - p)) * (nv - 1.0);
    return {ExtReal::finite(nv), ExtReal::finite(s), ExtReal::finite(nv + s)};
}

/** Shape of the survival set in r at fixed (lambda, p). */
enum class WindowKind {
    EmptyAlwaysExtinct,  ///< extinction for every r in (0, 1]
    AboveThreshold,      ///< survival possible iff r > r_minus
    Interval,            ///< survival possible iff r in (r_minus, r_plus)
    BelowThreshold,      ///< survival possible iff r < r_plus
    FullSurvival,        ///< survival possible for every r in (0, 1]
};

/**
 * Survival window in the mutation probability r at fixed (lambda, p).
 * Endpoints are excluded from the survival set (extinction at equality).
 * r_star = p/(1-p) and lambda_c_min = 1-p, the location and value of the
 * critical curve's minimum over r, are populated only for p < 1/2 (for
 * p >= 1/2 the curve is monotone and has no interior minimum).
 */
struct MutationWindow {
    WindowKind kind = WindowKind::EmptyAlwaysExtinct;
    std::optional<double> r_minus;
    std::optional<double> r_plus;
    std::optional<double> r_star;
    std::optional<double> lambda_c_min;
};

/**
 * Full case analysis of the window in r, with endpoints
 * r_pm = (sqrt(p) +- sqrt(lambda + p - 1))^2 / lambda.
 *
 * For p >= 1/2: empty if lambda <= 1/(4p); survival iff r > r_minus for
 * 1/(4p) < lambda < 1; full survival for lambda >= 1.
 * For p < 1/2: empty if lambda <= 1-p; a two-sided window for
 * 1-p < lambda < min(1, 1/(4p)); then r > r_minus (1/4 < p < 1/2,
 * 1/(4p) < lambda < 1) or r < r_plus (p < 1/4, 1 <= lambda < 1/(4p));
 * full survival for lambda >= max(1, 1/(4p)).
 *
 * The boundary lambda = 1/(4p) with 1/4 < p < 1/2 is reported as a window
 * with r_plus = 1 exactly: endpoints are excluded, so the survival set
 * (r_minus, 1) is still correct, and this is the one point where r_plus may
 * equal 1.
 *
 * r_minus is evaluated as ((1 - lambda) / (sqrt(p) + sqrt(lambda + p - 1)))^2
 * / lambda, which is algebraically identical and avoids the subtractive
 * cancellation near lambda = 1.
 */
inline MutationWindow mutation_window(double lambda, double p) {
    detail::check_lambda(lambda);
    detail::check_p(p);
    MutationWindow w;
    if (p < 0.5) {
        w.r_star = p / (1.0 - p);
        w.lambda_c_min = 1.0 - p;
    }
    const double lambda_at_r1 = 1.0 / (4.0 * p);
    const auto endpoints = [&]() -> std::pair<double, double> {
        const double sum = std::sqrt(p) + std::sqrt(lambda + p - 1.0);
        const double r_plus = sum * sum / lambda;
        const double diff = (1.0 - lambda) / sum;
        const double r_minus = diff * diff / lambda;
        return {r_minus, r_plus};
    };
    if (p >= 0.5) {
        if (lambda <= lambda_at_r1) {
            w.kind = WindowKind::EmptyAlwaysExtinct;
        } else if (lambda < 1.0) {
            w.kind = WindowKind::AboveThreshold;
            w.r_minus = endpoints().first;
        } else {
            w.kind = WindowKind::FullSurvival;
        }
        return w;
    }
    if (lambda <= 1.0 - p) {
        w.kind = WindowKind::EmptyAlwaysExtinct;
    } else if (p > 0.25) {
        if (lambda <= lambda_at_r1) {
            w.kind = WindowKind::Interval;
            auto [rm, rp] = endpoints();
            w.r_minus = rm;
            w.r_plus = rp;
        } else if (lambda < 1.0) {
            w.kind = WindowKind::AboveThreshold;
            w.r_minus = endpoints().first;
        } else {
            w.kind = WindowKind::FullSurvival;
        }
    } else {
        // p <= 1/4, where 1/(4p) >= 1
        if (lambda < 1.0) {
            w.kind = WindowKind::Interval;
            auto [rm, rp] = endpoints();
            w.r_minus = rm;
            w.r_plus = rp;
        } else if (p < 0.25 && lambda < lambda_at_r1) {
            w.kind = WindowKind::BelowThreshold;
            w.r_plus = endpoints().second;
        } else {
            w.kind = WindowKind::FullSurvival;
        }
    }
    return w;
}

/** Birth rate and mutation probability of the thinned viable subprocess. */
struct EffectiveParams {
    double lambda_eff;
    double r_eff;
};

/**
 * Thinning reduction: discarding sterile births from the mixed model leaves
 * a model of the same family with lambda_eff = lambda (1 - r + r p) and
 * r_eff = r p / (1 - r + r p). Identities lambda_eff (1 - r_eff) =
 * lambda (1 - r) and lambda_eff r_eff = lambda r p hold exactly.
 */
inline EffectiveParams effective_params(double lambda, double r, double p) {
    detail::check_lambda(lambda);
    detail::check_r(r);
    detail::check_p(p);
    const double keep = 1.0 - r + r * p;
    return {lambda * keep, r * p / keep};
}

/**
 * Mean total progeny given the initial type is cleared exactly at time t:
 * E[Y(t)] = e^(alpha t), with alpha from roots(lambda, r). Requires the
 * finite-mean regime lambda <= lambda_c(r); E[Y(0)] = 1.
 */
inline double conditioned_mean_progeny(double t, double lambda, double r) {
    if (!(t >= 0.0) || !std::isfinite(t))
        throw std::domain_error("conditioning time must be a nonnegative finite real");
    return std::exp(roots(lambda, r).alpha * t);
}

/**
 * Numerical cross-check of the criticality criterion: minimizes
 * g(u) = (lambda / u) (1 - r + r / (1 - u)) over u in (0, 1) by
 * golden-section search (g is smooth and strictly convex there) and returns
 * the minimum, which equals lambda (1 + sqrt(r))^2; min > 1 is equivalent
 * to the supercritical phase. Bracket (1e-9, 1 - 1e-9), absolute interval
 * tolerance 1e-10.
 */
inline double mgf_min_check(double lambda, double r) {
    detail::check_lambda(lambda);
    detail::check_r(r);
    const auto g = [&](double u) { return lambda / u * (1.0 - r + r / (1.0 - u)); };
    constexpr double kInvPhi = 0.6180339887498949;
    double a = 1e-9;
    double b = 1.0 - 1e-9;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = g(c);
    double fd = g(d);
    while (b - a > 1e-10) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = g(d);
        }
    }
    return g(0.5 * (a + b));
}

/**
 * Extinction probability of the star variant in terms of the plain one:
 * q_star = (1 - r) + r q. In particular q_star = 1 iff q = 1.
 */
inline double extinction_prob_star(double q, double r) {
    if (!(q >= 0.0) || q > 1.0)
        throw std::domain_error("q must lie in [0, 1]");
    detail::check_r(r);
    return (1.0 - r) + r * q;
}

/**
 * Derived scalars for one parameter point (lambda, r, p). The moment fields
 * describe the unstarred process started from one viable pathogen; mean_N
 * is the mean count of all pathogens ever born at this parameter point, so
 * it coincides with mean_Np (and with mean_Nv when p = 1).
 *
 * For p < 1 the characteristic polynomial is that of the thinned viable
 * subprocess: delta = (1 + lambda(1-r))^2 - 4 lambda(1 - r + r p) and
 * alpha, beta are its roots, so Vieta reads alpha beta = lambda_eff and
 * alpha + beta = 1 + lambda(1-r). At p = 1 this is exactly roots(lambda, r).
 * alpha and beta are absent when delta < 0 (the roots are a complex pair);
 * delta is clamped to zero only when the point classifies at or below
 * critical.
 */
struct AnalyticSummary {
    double lambda = 0.0;
    double r = 0.0;
    double p = 1.0;
    double lambda_c = 0.0;
    Regime regime = Regime::Subcritical;
    double delta = 0.0;
    std::optional<double> alpha;
    std::optional<double> beta;
    double lambda_eff = 0.0;
    double r_eff = 0.0;
    ExtReal mean_N;
    ExtReal mean_Nv;
    ExtReal mean_S;
    ExtReal mean_Np;
};

inline AnalyticSummary summarize(double lambda, double r, double p = 1.0) {
    detail::check_lambda(lambda);
    detail::check_r(r);
    detail::check_p(p);
    AnalyticSummary s;
    s.lambda = lambda;
    s.r = r;
    s.p = p;
    s.lambda_c = p < 1.0 ? critical_lambda_mixed(r, p) : critical_lambda(r);
    s.regime = detail::classify_against(lambda, s.lambda_c);
    const auto eff = effective_params(lambda, r, p);
    s.lambda_eff = eff.lambda_eff;
    s.r_eff = eff.r_eff;
    const double b = 1.0 + lambda * (1.0 - r);
    double delta = b * b - 4.0 * s.lambda_eff;
    if (s.regime != Regime::Supercritical) delta = std::max(delta, 0.0);
    s.delta = delta;
    if (delta >= 0.0) {
        const double sq = std::sqrt(delta);
        s.alpha = (b - sq) / 2.0;
        s.beta = (b + sq) / 2.0;
    }
    if (s.regime == Regime::Supercritical) {
        s.mean_N = s.mean_Nv = s.mean_S = s.mean_Np = ExtReal::infinity();
    } else {
        const auto mm = expected_counts_mixed(lambda, r, p);
        s.mean_Nv = mm.mean_viable;
        s.mean_S = mm.mean_sterile;
        s.mean_Np = mm.mean_total;
        s.mean_N = mm.mean_total;
    }
    return s;
}

inline const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::Subcritical: return "subcritical";
        case Regime::Critical: return "critical";
        case Regime::Supercritical: return "supercritical";
    }
    return "unknown";
}

inline const char* to_string(WindowKind kind) {
    switch (kind) {
        case WindowKind::EmptyAlwaysExtinct: return "empty_always_extinct";
        case WindowKind::AboveThreshold: return "above_threshold";
        case WindowKind::Interval: return "interval";
        case WindowKind::BelowThreshold: return "below_threshold";
        case WindowKind::FullSurvival: return "full_survival";
    }
    return "unknown";
}

}  // namespace escapesim
