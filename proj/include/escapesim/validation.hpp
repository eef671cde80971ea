#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <escapesim/analytics.hpp>
#include <escapesim/engine.hpp>
#include <escapesim/montecarlo.hpp>
#include <escapesim/params.hpp>
#include <escapesim/stats.hpp>
#include <escapesim/sweep.hpp>

namespace escapesim {

struct CriterionResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ValidationConfig {
    bool fast = false;
    std::uint64_t master_seed = 0;
    unsigned workers = 0;
    std::string artifact_dir = "validate_artifacts";
    std::ostream* log = nullptr;
};

struct ValidationReport {
    std::vector<CriterionResult> criteria;
    bool all_passed = true;
};

namespace detail {

/** Accumulates sub-checks; the detail string keeps the first failures. */
class CheckSet {
  public:
    void expect(bool cond, const std::string& label) {
        if (cond) return;
        ok_ = false;
        if (fail_count_ < 8) append(std::string("FAIL ") + label);
        ++fail_count_;
    }
    void note(const std::string& text) { append(text); }
    void notef(const char* fmt, double a, double b = 0.0, double c = 0.0) {
        char buf[160];
        std::snprintf(buf, sizeof buf, fmt, a, b, c);
        append(buf);
    }
    bool ok() const { return ok_; }
    CriterionResult result(const std::string& name) const {
        CriterionResult res;
        res.name = name;
        res.passed = ok_;
        res.detail = detail_;
        if (fail_count_ > 8)
            res.detail += "; +" + std::to_string(fail_count_ - 8) + " more failures";
        return res;
    }

  private:
    void append(const std::string& text) {
        if (!detail_.empty()) detail_ += "; ";
        detail_ += text;
    }
    bool ok_ = true;
    std::string detail_;
    int fail_count_ = 0;
};

/** Independent master seed per experiment slot; streams then start at 0. */
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t slot) {
    return master ^ ((slot + 1) * 0x9E3779B97F4A7C15ull);
}

inline ModelParams standard_params(double lambda, double r) {
    ModelParams params;
    params.lambda = lambda;
    params.r = r;
    return params;
}

inline ModelParams mixed_params(double lambda, double r, double p) {
    ModelParams params;
    params.lambda = lambda;
    params.r = r;
    params.p = p;
    params.variant = Variant::Mixed;
    return params;
}

inline CriterionResult criterion_closed_forms() {
    CheckSet cs;
    cs.expect(std::fabs(critical_lambda(1.0) - 0.25) <= 1e-14, "critical_lambda(1) = 1/4");
    for (int i = 1; i <= 100; ++i) {
        const double r = static_cast<double>(i) / 100.0;
        cs.expect(std::fabs(critical_lambda_mixed(r, 1.0) - critical_lambda(r)) <= 1e-14,
                  "mixed curve at p=1 matches the plain curve");
    }
    for (int i = 1; i <= 9; ++i) {
        const double p = 0.05 * static_cast<double>(i);
        const double r_star = p / (1.0 - p);
        cs.expect(std::fabs(critical_lambda_mixed(r_star, p) - (1.0 - p)) <= 1e-12,
                  "curve minimum 1-p at r*=p/(1-p)");
    }
    for (const double lambda : {0.5, 0.61, 0.7, 0.9, 0.99}) {
        for (const double p : {0.3, 0.4, 0.5}) {
            const MutationWindow window = mutation_window(lambda, p);
            if (window.kind != WindowKind::Interval) continue;
            cs.expect(std::fabs(critical_lambda_mixed(*window.r_minus, p) - lambda) <= 1e-10,
                      "window round-trip at r_minus");
            cs.expect(std::fabs(critical_lambda_mixed(*window.r_plus, p) - lambda) <= 1e-10,
                      "window round-trip at r_plus");
        }
    }
    for (int i = 1; i <= 10; ++i) {
        const double r = 0.1 * static_cast<double>(i);
        for (const double frac : {0.5, 0.9, 1.0}) {
            const double lambda = frac * critical_lambda(r);
            const Roots rt = roots(lambda, r);
            cs.expect(std::fabs(rt.alpha + rt.beta - (1.0 + lambda * (1.0 - r))) <= 1e-12,
                      "Vieta sum");
            cs.expect(std::fabs(rt.alpha * rt.beta - lambda) <= 1e-12, "Vieta product");
        }
    }
    for (const double r : {0.2, 0.5, 0.8}) {
        for (const double p : {0.2, 0.5, 0.9}) {
            const double lambda = 0.9 * critical_lambda_mixed(r, p);
            const MixedMoments mm = expected_counts_mixed(lambda, r, p);
            const double total = mm.mean_total.value();
            const double viable = mm.mean_viable.value();
            const double sterile = mm.mean_sterile.value();
            cs.expect(std::fabs(total - (viable + sterile)) <= 1e-12 * std::fabs(total),
                      "mean_total = mean_viable + mean_sterile");
            const EffectiveParams eff = effective_params(lambda, r, p);
            const double thinned = expected_total_progeny(eff.lambda_eff, eff.r_eff).value();
            cs.expect(std::fabs(viable - thinned) <= 1e-12 * std::fabs(viable),
                      "viable mean matches the effective process");
        }
    }
    for (int i = 1; i <= 50; ++i) {
        const double r = 0.02 * static_cast<double>(i);
        const double target = (1.0 + std::sqrt(r)) * (1.0 + std::sqrt(r));
        cs.expect(std::fabs(mgf_min_check(0.3, r) / 0.3 - target) <= 1e-8,
                  "rate-function minimum");
    }
    if (cs.ok()) cs.note("analytic identities hold at pinned tolerances");
    return cs.result("closed-form identities");
}

inline CriterionResult criterion_progeny_means(const ValidationConfig& config,
                                               unsigned workers) {
    CheckSet cs;
    constexpr double kTargetA = 1.1270166537925832;
    constexpr double kTargetB = 1.3819660112501053;
    const std::uint64_t reps_sub = config.fast ? 10'000 : 100'000;
    const std::uint64_t reps_crit = config.fast ? 100'000 : 1'000'000;
    const double crit_rel_tol = config.fast ? 0.10 : 0.05;

    const ProgenyEstimates a = estimate_mean_progeny(standard_params(0.1, 1.0), reps_sub,
                                                     derive_seed(config.master_seed, 1), workers);
    cs.expect(std::fabs(a.total_N.mean - kTargetA) <= 3.0 * a.total_N.std_error,
              "mean N at (0.1, 1) within 3 se of 1.127017");
    cs.notef("N(0.1,1)=%.6g (se %.2g)", a.total_N.mean, a.total_N.std_error);

    const ProgenyEstimates b = estimate_mean_progeny(standard_params(0.2, 1.0), reps_sub,
                                                     derive_seed(config.master_seed, 2), workers);
    cs.expect(std::fabs(b.total_N.mean - kTargetB) <= 3.0 * b.total_N.std_error,
              "mean N at (0.2, 1) within 3 se of 1.381966");
    cs.notef("N(0.2,1)=%.6g (se %.2g)", b.total_N.mean, b.total_N.std_error);

    const ProgenyEstimates c = estimate_mean_progeny(standard_params(0.25, 1.0), reps_crit,
                                                     derive_seed(config.master_seed, 3), workers);
    cs.expect(std::fabs(c.total_N.mean - 2.0) <= crit_rel_tol * 2.0,
              "mean N at the exactly critical point (0.25, 1) within relaxed tolerance of 2.0");
    cs.expect(c.heavy_tail_warning, "critical point carries the heavy-tail caveat");
    cs.notef("N(0.25,1)=%.6g; caveat: variance is infinite at criticality, the sample mean "
             "converges logarithmically (typically 6-9%% low at 1e6 reps)",
             c.total_N.mean);
    return cs.result("subcritical progeny means");
}

inline CriterionResult criterion_conditioned(const ValidationConfig& config, unsigned workers) {
    CheckSet cs;
    constexpr double kTarget = 1.119297957801151;
    const std::uint64_t reps = config.fast ? 10'000 : 100'000;
    const Estimate est = estimate_conditioned_mean(1.0, 0.1, 1.0, reps,
                                                   derive_seed(config.master_seed, 4), workers);
    cs.expect(std::fabs(est.mean - kTarget) <= 3.0 * est.std_error,
              "conditioned mean at t=1 within 3 se of exp(alpha)");
    cs.notef("Y(1)=%.6g (se %.2g) vs 1.1192980", est.mean, est.std_error);

    ModelParams params;
    params.lambda = 0.1;
    params.r = 1.0;
    params.variant = Variant::ConditionedInitialDeath;
    params.conditioned_death_time = 0.0;
    const std::uint64_t t0_reps = config.fast ? 200 : 1000;
    const auto outcomes = run_episode_batch(params, kProgenyStop, t0_reps,
                                            derive_seed(config.master_seed, 5), 0, workers);
    bool all_one = true;
    for (const auto& oc : outcomes)
        all_one = all_one && oc.verdict == Verdict::Extinct && oc.total_progeny_N == 1;
    cs.expect(all_one, "death at t=0 leaves exactly the initial pathogen in every episode");
    return cs.result("conditioned initial-death growth");
}

inline CriterionResult criterion_survival_phase(const ValidationConfig& config,
                                                unsigned workers) {
    CheckSet cs;
    const std::uint64_t reps = config.fast ? 1000 : 10'000;
    const StopRule stop;
    const Estimate below = estimate_survival(standard_params(0.25, 0.5), stop, reps,
                                             derive_seed(config.master_seed, 6), workers);
    cs.expect(below.ci_high < 0.01, "subcritical point (0.25, 0.5): upper CI below 0.01");
    const Estimate above = estimate_survival(standard_params(0.5, 0.5), stop, reps,
                                             derive_seed(config.master_seed, 7), workers);
    cs.expect(above.mean > 0.05, "supercritical point (0.5, 0.5): survival above 0.05");
    cs.notef("survival: %.4g below the curve, %.4g above (lambda_c(0.5)=0.343146)", below.mean,
             above.mean);
    return cs.result("survival phase positions");
}

inline CriterionResult criterion_window_phase(const ValidationConfig& config, unsigned workers) {
    CheckSet cs;
    const std::uint64_t reps = config.fast ? 1000 : 10'000;
    const StopRule stop;
    const Estimate inside = estimate_survival(mixed_params(1.0, 0.4, 0.2), stop, reps,
                                              derive_seed(config.master_seed, 8), workers);
    cs.expect(inside.mean > 0.05,
              "inside the window (lambda=1, r=0.4, p=0.2): survival above 0.05");
    const Estimate outside = estimate_survival(mixed_params(1.0, 0.95, 0.2), stop, reps,
                                               derive_seed(config.master_seed, 9), workers);
    cs.expect(outside.ci_high < 0.01,
              "outside the window (r=0.95 > r_+=0.8): upper CI below 0.01");
    cs.notef("survival: %.4g at r=0.4, %.4g at r=0.95", inside.mean, outside.mean);
    return cs.result("mutation window phase positions");
}

inline CriterionResult criterion_thinning(const ValidationConfig& config, unsigned workers) {
    CheckSet cs;
    const std::uint64_t reps = config.fast ? 10'000 : 100'000;
    const ThinningReport report =
        compare_thinning(0.5, 0.8, 0.5, reps, derive_seed(config.master_seed, 10), workers);
    const double gap = std::fabs(report.mean_Nv_mixed.mean - report.mean_N_effective.mean);
    const double se = std::sqrt(report.mean_Nv_mixed.std_error * report.mean_Nv_mixed.std_error +
                                report.mean_N_effective.std_error *
                                    report.mean_N_effective.std_error);
    cs.expect(gap <= 3.0 * se, "viable mean matches the effective-process mean within 3 se");
    cs.expect(report.ks_pvalue > 0.001, "two-sample KS p-value above 0.001");
    cs.notef("means %.5g vs %.5g, KS p=%.3g", report.mean_Nv_mixed.mean,
             report.mean_N_effective.mean, report.ks_pvalue);
    return cs.result("thinning equivalence");
}

inline CriterionResult criterion_extinction_pair(const ValidationConfig& config,
                                                 unsigned workers) {
    CheckSet cs;
    const std::uint64_t reps = config.fast ? 1000 : 10'000;
    constexpr double kR = 0.5;
    const ExtinctionPair pair = estimate_extinction_pair(
        0.5, kR, StopRule{}, reps, derive_seed(config.master_seed, 11), workers);
    const double se =
        std::sqrt(pair.q_star_hat.std_error * pair.q_star_hat.std_error +
                  kR * kR * pair.q_hat.std_error * pair.q_hat.std_error);
    cs.expect(std::fabs(pair.relation_residual) <= 3.0 * se,
              "q_star = (1-r) + r q within 3 combined se");
    cs.notef("q=%.4g, q*=%.4g, residual %.3g", pair.q_hat.mean, pair.q_star_hat.mean,
             pair.relation_residual);
    return cs.result("star extinction relation");
}

inline CriterionResult criterion_sterile_ratio(const ValidationConfig& config,
                                               unsigned workers) {
    CheckSet cs;
    const std::uint64_t reps = config.fast ? 10'000 : 100'000;
    const auto outcomes = run_episode_batch(mixed_params(0.5, 0.8, 0.5), kProgenyStop, reps,
                                            derive_seed(config.master_seed, 12), 0, workers);
    double sum_v = 0.0, sum_s = 0.0;
    std::uint64_t k = 0;
    for (const auto& oc : outcomes) {
        if (oc.verdict != Verdict::Extinct) continue;
        sum_v += static_cast<double>(oc.viable_Nv);
        sum_s += static_cast<double>(oc.sterile_S);
        ++k;
    }
    if (k < 2) {
        cs.expect(false, "too few completed episodes for the ratio");
        return cs.result("sterile accounting ratio");
    }
    const double n = static_cast<double>(k);
    const double a = sum_v / n;
    const double b = sum_s / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& oc : outcomes) {
        if (oc.verdict != Verdict::Extinct) continue;
        const double dv = static_cast<double>(oc.viable_Nv) - a;
        const double ds = static_cast<double>(oc.sterile_S) - b;
        sxx += dv * dv;
        syy += ds * ds;
        sxy += dv * ds;
    }
    sxx /= n - 1.0;
    syy /= n - 1.0;
    sxy /= n - 1.0;
    const double ratio = b / (a - 1.0);
    const double gx = -b / ((a - 1.0) * (a - 1.0));
    const double gy = 1.0 / (a - 1.0);
    const double se =
        std::sqrt((gx * gx * sxx + 2.0 * gx * gy * sxy + gy * gy * syy) / n);
    constexpr double kTarget = 2.0 / 3.0;
    cs.expect(std::fabs(ratio - kTarget) <= 3.0 * se,
              "sterile/(viable-1) ratio within 3 se of r(1-p)/(1-r(1-p))");
    cs.notef("ratio %.5g vs 0.66667 (se %.2g)", ratio, se);
    return cs.result("sterile accounting ratio");
}

inline GridSpec phase_grid_standard(const ValidationConfig& config) {
    GridSpec spec;
    spec.axis1 = {Param::R, 0.05, 1.0, config.fast ? 10u : 20u};
    spec.axis2 = {Param::Lambda, 0.06, 1.2, config.fast ? 10u : 20u};
    spec.fixed_name = Param::P;
    spec.fixed_value = 1.0;
    spec.estimator = Estimator::Survival;
    spec.per_cell_reps = config.fast ? 200 : 1000;
    spec.stop = StopRule{100.0, 500, 1'000'000};
    spec.master_seed = derive_seed(config.master_seed, 13);
    return spec;
}

inline GridSpec phase_grid_mixed(const ValidationConfig& config) {
    GridSpec spec = phase_grid_standard(config);
    spec.axis2 = {Param::Lambda, 0.4, 1.6, config.fast ? 10u : 20u};
    spec.fixed_value = 0.2;
    spec.master_seed = derive_seed(config.master_seed, 14);
    return spec;
}

inline void check_margin_agreement(CheckSet& cs, const std::vector<SweepCell>& cells,
                                   double super_margin, const char* tag) {
    // Margin cells must match the analytic regime. Survival is exactly zero below
    // the curve, so any subcritical cell exceeding the CI bound is a fault. Above
    // the curve the transition is steep but continuous: zero-survivor cells are
    // tolerated only sparsely and only in a thin shoulder just past the margin,
    // so that failures stay confined to a band around the critical curve.
    const double band_limit = super_margin + 0.15;
    constexpr double kMaxFailureRate = 0.05;
    int sub_fail = 0, sub_n = 0, super_n = 0;
    int band_fail = 0, far_fail = 0;
    for (const auto& cell : cells) {
        const double lambda_c = cell.analytic_lambda_c;
        // axis2 carries lambda in both validation grids
        const double lam = cell.coord2;
        if (lam < 0.8 * lambda_c) {
            ++sub_n;
            if (!(cell.estimate.ci_high < 0.02)) ++sub_fail;
        } else if (lam > super_margin * lambda_c) {
            ++super_n;
            if (!(cell.estimate.mean > 0.0)) {
                if (lam <= band_limit * lambda_c) ++band_fail;
                else ++far_fail;
            }
        }
    }
    const bool sparse = band_fail <= kMaxFailureRate * super_n;
    char label[240];
    std::snprintf(label, sizeof label,
                  "%s: %d of %d clearly subcritical cells exceed CI bound; %d of %d clearly "
                  "supercritical cells saw no survivor (%d in the shoulder below %.2f lambda_c, "
                  "%d beyond it)",
                  tag, sub_fail, sub_n, band_fail + far_fail, super_n, band_fail, band_limit,
                  far_fail);
    const bool agree = sub_fail == 0 && far_fail == 0 && sparse;
    cs.expect(agree, label);
    if (agree) cs.note(label);
}

inline void check_overlay(CheckSet& cs, const GridSpec& spec, const char* tag) {
    const auto vertices = overlay_polyline(spec);
    bool ok = !vertices.empty();
    for (const auto& [r, lambda_c] : vertices) {
        const double expected = spec.fixed_value < 1.0
                                    ? critical_lambda_mixed(r, spec.fixed_value)
                                    : critical_lambda(r);
        ok = ok && std::fabs(lambda_c - expected) <= 1e-12;
    }
    cs.expect(ok, std::string(tag) + ": overlay vertices match the closed form to 1e-12");
}

inline CriterionResult criterion_phase_diagrams(const ValidationConfig& config, unsigned workers,
                                                const std::filesystem::path& artifact_dir) {
    CheckSet cs;
    const auto start = std::chrono::steady_clock::now();
    const GridSpec spec_a = phase_grid_standard(config);
    const auto cells_a = run_sweep(spec_a, workers);
    emit_csv(spec_a, cells_a, (artifact_dir / "phase_standard.csv").string());
    emit_phase_svg(spec_a, cells_a, true, (artifact_dir / "phase_standard.svg").string());
    const GridSpec spec_b = phase_grid_mixed(config);
    const auto cells_b = run_sweep(spec_b, workers);
    emit_csv(spec_b, cells_b, (artifact_dir / "phase_mixed.csv").string());
    emit_phase_svg(spec_b, cells_b, true, (artifact_dir / "phase_mixed.svg").string());
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const double super_margin = config.fast ? 1.5 : 1.25;
    check_margin_agreement(cs, cells_a, super_margin, "p=1 grid");
    check_margin_agreement(cs, cells_b, super_margin, "p=0.2 grid");
    check_overlay(cs, spec_a, "p=1 grid");
    check_overlay(cs, spec_b, "p=0.2 grid");
    cs.expect(elapsed < 600.0, "both sweeps complete within 10 minutes");
    cs.notef("sweeps + artifacts in %.1f s", elapsed);
    return cs.result("phase diagram reproduction");
}

inline std::vector<CriterionResult> run_core(const ValidationConfig& config, unsigned workers,
                                             const std::filesystem::path& artifact_dir,
                                             std::ostream* log) {
    std::vector<CriterionResult> results;
    const auto push = [&](CriterionResult res) {
        if (log)
            *log << (res.passed ? "[PASS] " : "[FAIL] ") << res.name << ": " << res.detail
                 << '\n'
                 << std::flush;
        results.push_back(std::move(res));
    };
    push(criterion_closed_forms());
    push(criterion_progeny_means(config, workers));
    push(criterion_conditioned(config, workers));
    push(criterion_survival_phase(config, workers));
    push(criterion_window_phase(config, workers));
    push(criterion_thinning(config, workers));
    push(criterion_extinction_pair(config, workers));
    push(criterion_sterile_ratio(config, workers));
    push(criterion_phase_diagrams(config, workers, artifact_dir));
    return results;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace detail

/**
 * Runs the acceptance suite twice, at the resolved worker count and at that
 * count plus one, and appends a tenth criterion demanding identical verdicts
 * and byte-identical sweep artifacts across the two passes. Artifacts land
 * under artifact_dir/pass_a and artifact_dir/pass_b.
 */
inline ValidationReport run_validation(const ValidationConfig& config) {
    namespace fs = std::filesystem;
    const fs::path base = config.artifact_dir.empty() ? fs::path(".")
                                                      : fs::path(config.artifact_dir);
    const fs::path dir_a = base / "pass_a";
    const fs::path dir_b = base / "pass_b";
    fs::create_directories(dir_a);
    fs::create_directories(dir_b);
    const unsigned workers_a = resolve_worker_count(config.workers);
    const unsigned workers_b = workers_a + 1;

    ValidationReport report;
    report.criteria = detail::run_core(config, workers_a, dir_a, config.log);
    if (config.log)
        *config.log << "... repeating with " << workers_b << " workers for the determinism check"
                    << '\n'
                    << std::flush;
    const auto repeat = detail::run_core(config, workers_b, dir_b, nullptr);

    detail::CheckSet cs;
    cs.expect(repeat.size() == report.criteria.size(), "same criterion count across passes");
    for (std::size_t i = 0; i < report.criteria.size() && i < repeat.size(); ++i)
        cs.expect(report.criteria[i].passed == repeat[i].passed,
                  "verdict stable for '" + report.criteria[i].name + "'");
    for (const char* name :
         {"phase_standard.csv", "phase_standard.svg", "phase_mixed.csv", "phase_mixed.svg"}) {
        const std::string bytes_a = detail::read_file_bytes(dir_a / name);
        cs.expect(!bytes_a.empty() && bytes_a == detail::read_file_bytes(dir_b / name),
                  std::string("byte-identical artifact ") + name);
    }
    char note[96];
    std::snprintf(note, sizeof note, "passes ran with %u and %u workers", workers_a, workers_b);
    cs.note(note);
    CriterionResult determinism = cs.result("worker-count determinism");
    if (config.log)
        *config.log << (determinism.passed ? "[PASS] " : "[FAIL] ") << determinism.name << ": "
                    << determinism.detail << '\n'
                    << std::flush;
    report.criteria.push_back(std::move(determinism));

    report.all_passed = true;
    for (const auto& res : report.criteria) report.all_passed = report.all_passed && res.passed;
    return report;
}

}  // namespace escapesim
