#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

#include <escapesim/analytics.hpp>
#include <escapesim/engine.hpp>
#include <escapesim/params.hpp>
#include <escapesim/stats.hpp>

namespace escapesim {

/**
 * Monte Carlo point estimate. ci95 bounds are mean +- 1.96 std_error.
 * censored_fraction and aborted_fraction account for every episode, so the
 * two sum to at most 1.
 */
struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::uint64_t n_reps = 0;
    double censored_fraction = 0.0;
    double aborted_fraction = 0.0;

    friend bool operator==(const Estimate&, const Estimate&) = default;
};

/**
 * Worker count resolution: an explicit request wins; otherwise the
 * ESCAPESIM_WORKERS environment variable, then hardware concurrency.
 * Results never depend on the choice, only wall-clock time does.
 */
inline unsigned resolve_worker_count(unsigned requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ESCAPESIM_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/** Disjoint stream spaces for the two halves of a paired experiment. */
inline constexpr std::uint64_t kPairedStreamOffset = 1ull << 63;

namespace detail {

/**
 * Runs n episodes with per-episode streams (master_seed, stream_base + i)
 * and stores outcomes by episode index. Placement by index plus sequential
 * aggregation afterwards makes every downstream statistic bit-identical for
 * any worker count.
 */
inline std::vector<EpisodeOutcome> run_episode_batch(const ModelParams& params,
                                                     const StopRule& stop, std::uint64_t n_reps,
                                                     std::uint64_t master_seed,
                                                     std::uint64_t stream_base, unsigned workers) {
    validate(params);
    validate(stop);
    if (n_reps == 0) throw std::invalid_argument("n_reps must be positive");
    std::vector<EpisodeOutcome> out(n_reps);
    workers = resolve_worker_count(workers);
    const auto run_range = [&](EpisodeRunner& runner, std::uint64_t lo, std::uint64_t hi) {
        for (std::uint64_t i = lo; i < hi; ++i) {
            Philox4x64 rng(master_seed, stream_base + i);
            out[i] = runner.run(params, stop, rng);
        }
    };
    if (workers <= 1 || n_reps < 2) {
        EpisodeRunner runner;
        run_range(runner, 0, n_reps);
        return out;
    }
    std::atomic<std::uint64_t> next{0};
    const std::uint64_t chunk = std::max<std::uint64_t>(1, n_reps / (workers * 16ull));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            EpisodeRunner runner;
            for (;;) {
                const std::uint64_t lo = next.fetch_add(chunk, std::memory_order_relaxed);
                if (lo >= n_reps) return;
                run_range(runner, lo, std::min(lo + chunk, n_reps));
            }
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

inline Estimate binomial_estimate(std::uint64_t successes, std::uint64_t n,
                                  double censored_fraction, double aborted_fraction) {
    Estimate e;
    e.n_reps = n;
    e.mean = static_cast<double>(successes) / static_cast<double>(n);
    e.std_error = std::sqrt(e.mean * (1.0 - e.mean) / static_cast<double>(n));
    e.ci_low = e.mean - 1.96 * e.std_error;
    e.ci_high = e.mean + 1.96 * e.std_error;
    e.censored_fraction = censored_fraction;
    e.aborted_fraction = aborted_fraction;
    return e;
}

/** Sample mean and standard error in a fixed (index) order, two-pass. */
inline Estimate mean_estimate(const std::vector<double>& values, std::uint64_t n_total,
                              double censored_fraction, double aborted_fraction) {
    Estimate e;
    e.n_reps = n_total;
    e.censored_fraction = censored_fraction;
    e.aborted_fraction = aborted_fraction;
    if (values.empty()) {
        e.mean = e.std_error = e.ci_low = e.ci_high =
            std::numeric_limits<double>::quiet_NaN();
        return e;
    }
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (const double v : values) sum += v;
    e.mean = sum / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - e.mean) * (v - e.mean);
        e.std_error = std::sqrt(ss / (n - 1.0) / n);
    }
    e.ci_low = e.mean - 1.96 * e.std_error;
    e.ci_high = e.mean + 1.96 * e.std_error;
    return e;
}

/**
 * Stop rule for total-progeny estimation. A finite horizon would censor
 * exactly the long episodes and bias the mean, so the horizon is
 * effectively disabled and episodes end by extinction or by the explosion
 * caps; capped episodes are excluded from the mean and reported.
 */
inline constexpr StopRule kProgenyStop{1e9, 10'000'000, 10'000'000};

}  // namespace detail

/**
 * Fraction of episodes censored as survivors (time horizon or population
 * cap reached). True survival is an infinite-time event; this estimate
 * upper-bounds extinction detection by construction and equals the reported
 * censored_fraction. Episodes aborted by the progeny cap are excluded from
 * the numerator and reported in aborted_fraction.
 */
inline Estimate estimate_survival(const ModelParams& params, const StopRule& stop,
                                  std::uint64_t n_reps, std::uint64_t master_seed,
                                  unsigned workers = 0, std::uint64_t stream_base = 0) {
    const auto outcomes =
        detail::run_episode_batch(params, stop, n_reps, master_seed, stream_base, workers);
    std::uint64_t censored = 0;
    std::uint64_t aborted = 0;
    for (const auto& oc : outcomes) {
        if (oc.verdict == Verdict::CensoredSurvived) ++censored;
        else if (oc.verdict == Verdict::AbortedProgenyCap) ++aborted;
    }
    const double n = static_cast<double>(n_reps);
    return detail::binomial_estimate(censored, n_reps, static_cast<double>(censored) / n,
                                     static_cast<double>(aborted) / n);
}

/**
 * Progeny-count estimates over extinct (completed) episodes. Censored and
 * aborted episodes are excluded from the means and reported through the
 * fractions; at the parameters where these estimates are meaningful the
 * exclusion probability is negligible. target_infinite flags supercritical
 * inputs, where the true mean does not exist; heavy_tail_warning flags
 * points at more than 0.8 of the critical rate, where second moments may be
 * infinite and the standard error is unreliable, so the median is reported
 * alongside.
 */
struct ProgenyEstimates {
    Estimate total_N;
    Estimate viable_Nv;
    Estimate sterile_S;
    double median_N = 0.0;
    bool heavy_tail_warning = false;
    bool target_infinite = false;
};

inline ProgenyEstimates estimate_mean_progeny(const ModelParams& params, std::uint64_t n_reps,
                                              std::uint64_t master_seed, unsigned workers = 0,
                                              std::uint64_t stream_base = 0) {
    const auto outcomes = detail::run_episode_batch(params, detail::kProgenyStop, n_reps,
                                                    master_seed, stream_base, workers);
    std::vector<double> n_vals, nv_vals, s_vals;
    n_vals.reserve(outcomes.size());
    nv_vals.reserve(outcomes.size());
    s_vals.reserve(outcomes.size());
    std::uint64_t censored = 0;
    std::uint64_t aborted = 0;
    for (const auto& oc : outcomes) {
        if (oc.verdict == Verdict::Extinct) {
            n_vals.push_back(static_cast<double>(oc.total_progeny_N));
            nv_vals.push_back(static_cast<double>(oc.viable_Nv));
            s_vals.push_back(static_cast<double>(oc.sterile_S));
        } else if (oc.verdict == Verdict::CensoredSurvived) {
            ++censored;
        } else {
            ++aborted;
        }
    }
    const double n = static_cast<double>(n_reps);
    const double cf = static_cast<double>(censored) / n;
    const double af = static_cast<double>(aborted) / n;
    ProgenyEstimates pe;
    pe.total_N = detail::mean_estimate(n_vals, n_reps, cf, af);
    pe.viable_Nv = detail::mean_estimate(nv_vals, n_reps, cf, af);
    pe.sterile_S = detail::mean_estimate(s_vals, n_reps, cf, af);
    pe.median_N = n_vals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : sample_median(n_vals);
    const Regime regime = classify(params);
    const double lambda_c = params.p < 1.0 ? critical_lambda_mixed(params.r, params.p)
                                           : critical_lambda(params.r);
    pe.target_infinite = regime == Regime::Supercritical;
    pe.heavy_tail_warning = pe.target_infinite || params.lambda > 0.8 * lambda_c;
    return pe;
}

/**
 * Mean total progeny given the initial type dies exactly at time t,
 * estimated in the conditioned variant; requires the finite-mean regime
 * lambda <= lambda_c(r).
 */
inline Estimate estimate_conditioned_mean(double t, double lambda, double r,
                                          std::uint64_t n_reps, std::uint64_t master_seed,
                                          unsigned workers = 0, std::uint64_t stream_base = 0) {
    if (!(t >= 0.0) || !std::isfinite(t))
        throw std::domain_error("conditioning time must be a nonnegative finite real");
    if (detail::classify_against(lambda, critical_lambda(r)) == Regime::Supercritical)
        throw std::domain_error("conditioned mean requires lambda <= critical_lambda(r)");
    ModelParams params;
    params.lambda = lambda;
    params.r = r;
    params.variant = Variant::ConditionedInitialDeath;
    params.conditioned_death_time = t;
    const auto outcomes = detail::run_episode_batch(params, detail::kProgenyStop, n_reps,
                                                    master_seed, stream_base, workers);
    std::vector<double> n_vals;
    n_vals.reserve(outcomes.size());
    std::uint64_t censored = 0;
    std::uint64_t aborted = 0;
    for (const auto& oc : outcomes) {
        if (oc.verdict == Verdict::Extinct)
            n_vals.push_back(static_cast<double>(oc.total_progeny_N));
        else if (oc.verdict == Verdict::CensoredSurvived)
            ++censored;
        else
            ++aborted;
    }
    const double n = static_cast<double>(n_reps);
    return detail::mean_estimate(n_vals, n_reps, static_cast<double>(censored) / n,
                                 static_cast<double>(aborted) / n);
}

/**
 * Extinction probabilities of the plain and star variants at one (lambda, r),
 * estimated from disjoint stream spaces, and the residual of the identity
 * q_star = (1 - r) + r q. Extinction means a verdict of Extinct; censored
 * and aborted episodes both count against extinction.
 */
struct ExtinctionPair {
    Estimate q_hat;
    Estimate q_star_hat;
    double relation_residual = 0.0;
};

inline ExtinctionPair estimate_extinction_pair(double lambda, double r, const StopRule& stop,
                                               std::uint64_t n_reps, std::uint64_t master_seed,
                                               unsigned workers = 0,
                                               std::uint64_t stream_base = 0) {
    const auto run_mode = [&](Variant variant, std::uint64_t base) {
        ModelParams params;
        params.lambda = lambda;
        params.r = r;
        params.variant = variant;
        const auto outcomes =
            detail::run_episode_batch(params, stop, n_reps, master_seed, base, workers);
        std::uint64_t extinct = 0;
        std::uint64_t censored = 0;
        std::uint64_t aborted = 0;
        for (const auto& oc : outcomes) {
            if (oc.verdict == Verdict::Extinct) ++extinct;
            else if (oc.verdict == Verdict::CensoredSurvived) ++censored;
            else ++aborted;
        }
        const double n = static_cast<double>(n_reps);
        return detail::binomial_estimate(extinct, n_reps, static_cast<double>(censored) / n,
                                         static_cast<double>(aborted) / n);
    };
    ExtinctionPair pair;
    pair.q_hat = run_mode(Variant::Standard, stream_base);
    pair.q_star_hat = run_mode(Variant::Star, stream_base + kPairedStreamOffset);
    pair.relation_residual = pair.q_star_hat.mean - ((1.0 - r) + r * pair.q_hat.mean);
    return pair;
}

/**
 * Law comparison behind the thinning reduction: viable progeny counts of
 * the mixed model against total progeny of the plain model at the effective
 * parameters, on independent streams. Requires a strictly subcritical point
 * so both progeny laws have finite mean and the finite-sample comparison is
 * meaningful.
 */
struct ThinningReport {
    Estimate mean_Nv_mixed;
    Estimate mean_N_effective;
    double ks_distance = 0.0;
    double ks_pvalue = 1.0;
};

inline ThinningReport compare_thinning(double lambda, double r, double p, std::uint64_t n_reps,
                                       std::uint64_t master_seed, unsigned workers = 0,
                                       std::uint64_t stream_base = 0) {
    ModelParams mixed;
    mixed.lambda = lambda;
    mixed.r = r;
    mixed.p = p;
    mixed.variant = Variant::Mixed;
    if (classify(mixed) != Regime::Subcritical)
        throw std::domain_error("thinning comparison requires a subcritical parameter point");
    const auto eff = effective_params(lambda, r, p);
    ModelParams effective;
    effective.lambda = eff.lambda_eff;
    effective.r = eff.r_eff;
    effective.variant = Variant::Standard;

    const auto collect = [&](const ModelParams& params, std::uint64_t base, bool viable_only,
                             std::uint64_t& censored, std::uint64_t& aborted) {
        const auto outcomes = detail::run_episode_batch(params, detail::kProgenyStop, n_reps,
                                                        master_seed, base, workers);
        std::vector<double> vals;
        vals.reserve(outcomes.size());
        for (const auto& oc : outcomes) {
            if (oc.verdict == Verdict::Extinct)
                vals.push_back(static_cast<double>(viable_only ? oc.viable_Nv
                                                               : oc.total_progeny_N));
            else if (oc.verdict == Verdict::CensoredSurvived)
                ++censored;
            else
                ++aborted;
        }
        return vals;
    };

    std::uint64_t cens_m = 0, abort_m = 0, cens_e = 0, abort_e = 0;
    const auto nv_vals = collect(mixed, stream_base, true, cens_m, abort_m);
    const auto n_vals =
        collect(effective, stream_base + kPairedStreamOffset, false, cens_e, abort_e);
    const double n = static_cast<double>(n_reps);
    ThinningReport report;
    report.mean_Nv_mixed = detail::mean_estimate(nv_vals, n_reps,
                                                 static_cast<double>(cens_m) / n,
                                                 static_cast<double>(abort_m) / n);
    report.mean_N_effective = detail::mean_estimate(n_vals, n_reps,
                                                    static_cast<double>(cens_e) / n,
                                                    static_cast<double>(abort_e) / n);
    const auto ks = ks_two_sample(nv_vals, n_vals);
    report.ks_distance = ks.distance;
    report.ks_pvalue = ks.p_value;
    return report;
}

}  // namespace escapesim
