#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <escapesim/analytics.hpp>

using namespace escapesim;

// Reference values were frozen from an independent high-precision evaluation
// of the closed forms; they are full-precision doubles, not re-derivations.

TEST_CASE("critical curve, plain model") {
    CHECK(critical_lambda(1.0) == Catch::Approx(0.25).margin(1e-15));
    CHECK(critical_lambda(0.5) == Catch::Approx(0.34314575050761981).margin(1e-15));
    // monotone decreasing in r
    double prev = 2.0;
    for (int i = 1; i <= 40; ++i) {
        const double value = critical_lambda(i / 40.0);
        CHECK(value < prev);
        prev = value;
    }
    CHECK_THROWS_AS(critical_lambda(0.0), std::domain_error);
    CHECK_THROWS_AS(critical_lambda(1.5), std::domain_error);
    CHECK_THROWS_AS(critical_lambda(-0.2), std::domain_error);
}

TEST_CASE("critical curve, mixed model") {
    CHECK(critical_lambda_mixed(0.5, 0.3) ==
          Catch::Approx(0.70200080064064074).margin(1e-15));
    for (int i = 1; i <= 20; ++i)
        CHECK(critical_lambda_mixed(i / 20.0, 1.0) ==
              Catch::Approx(critical_lambda(i / 20.0)).margin(1e-15));
    // minimum over r sits at r* = p/(1-p) with value 1-p (p < 1/2)
    for (const double p : {0.1, 0.2, 0.3, 0.45}) {
        const double r_star = p / (1.0 - p);
        const double at_min = critical_lambda_mixed(r_star, p);
        CHECK(at_min == Catch::Approx(1.0 - p).margin(1e-13));
        CHECK(critical_lambda_mixed(r_star * 0.9, p) > at_min);
        CHECK(critical_lambda_mixed(std::min(1.0, r_star * 1.1), p) > at_min);
    }
    CHECK_THROWS_AS(critical_lambda_mixed(0.5, 0.0), std::domain_error);
    CHECK_THROWS_AS(critical_lambda_mixed(0.5, 1.2), std::domain_error);
}

TEST_CASE("regime classification with a relative tolerance band") {
    ModelParams params;
    params.r = 0.5;
    const double lc = critical_lambda(0.5);
    params.lambda = lc * (1.0 - 1e-13);
    CHECK(classify(params) == Regime::Critical);
    params.lambda = lc * (1.0 + 1e-13);
    CHECK(classify(params) == Regime::Critical);
    params.lambda = lc * (1.0 - 1e-10);
    CHECK(classify(params) == Regime::Subcritical);
    params.lambda = lc * (1.0 + 1e-10);
    CHECK(classify(params) == Regime::Supercritical);

    ModelParams mixed;
    mixed.lambda = 1.0;
    mixed.r = 0.8;
    mixed.p = 0.2;
    mixed.variant = Variant::Mixed;
    CHECK(classify(mixed) == Regime::Critical);  // (0.6 + 0.4)^2 = 1 exactly
}

TEST_CASE("growth-rate roots") {
    const Roots a = roots(0.1, 1.0);
    CHECK(a.delta == Catch::Approx(0.6).margin(1e-15));
    CHECK(a.alpha == Catch::Approx(0.1127016653792583).margin(1e-15));
    CHECK(a.beta == Catch::Approx(0.8872983346207417).margin(1e-15));
    const Roots b = roots(0.1, 0.5);
    CHECK(b.alpha == Catch::Approx(0.10592363464399479).margin(1e-15));
    // Vieta: sum 1 + lambda(1-r), product lambda
    for (const double r : {0.3, 0.7, 1.0}) {
        for (const double frac : {0.4, 0.9, 1.0}) {
            const double lambda = frac * critical_lambda(r);
            const Roots rt = roots(lambda, r);
            CHECK(rt.alpha + rt.beta == Catch::Approx(1.0 + lambda * (1.0 - r)).margin(1e-12));
            CHECK(rt.alpha * rt.beta == Catch::Approx(lambda).margin(1e-12));
            CHECK(rt.alpha <= rt.beta);
        }
    }
    // repeated root at criticality
    const Roots crit = roots(0.25, 1.0);
    CHECK(crit.alpha == Catch::Approx(crit.beta).margin(1e-9));
    CHECK_THROWS_AS(roots(0.26, 1.0), std::domain_error);
}

TEST_CASE("expected total progeny, plain model") {
    CHECK(expected_total_progeny(0.1, 1.0).value() ==
          Catch::Approx(1.1270166537925832).margin(1e-15));
    CHECK(expected_total_progeny(0.2, 1.0).value() ==
          Catch::Approx(1.3819660112501053).margin(1e-15));
    // critical point keeps a finite mean: E[N] = (1+sqrt(r))/sqrt(r)
    CHECK(expected_total_progeny(0.25, 1.0).value() == Catch::Approx(2.0).margin(1e-12));
    const double r = 0.5;
    const double lc = critical_lambda(r);
    CHECK(expected_total_progeny(lc, r).value() ==
          Catch::Approx((1.0 + std::sqrt(r)) / std::sqrt(r)).margin(1e-12));
    CHECK_FALSE(expected_total_progeny(0.3, 1.0).is_finite());
    CHECK_THROWS_AS(expected_total_progeny(0.3, 1.0).value(), std::logic_error);
}

TEST_CASE("expected counts, mixed model") {
    const MixedMoments mm = expected_counts_mixed(1.0, 0.8, 0.2);
    CHECK(mm.mean_viable.value() == Catch::Approx(2.5).margin(1e-14));
    CHECK(mm.mean_sterile.value() == Catch::Approx(2.6666666666666683).margin(1e-13));
    CHECK(mm.mean_total.value() == Catch::Approx(5.1666666666666679).margin(1e-13));
    // p = 1 collapses to the plain model with no sterile mass
    const MixedMoments plain = expected_counts_mixed(0.1, 1.0, 1.0);
    CHECK(plain.mean_sterile.value() == 0.0);
    CHECK(plain.mean_total.value() == Catch::Approx(1.1270166537925832).margin(1e-14));
    // supercritical means are infinite
    const MixedMoments super = expected_counts_mixed(1.2, 0.5, 0.5);
    CHECK_FALSE(super.mean_viable.is_finite());
    CHECK_FALSE(super.mean_total.is_finite());
}

TEST_CASE("viable counts match the thinned plain process") {
    for (const double r : {0.2, 0.5, 0.8}) {
        for (const double p : {0.2, 0.5, 0.9}) {
            const double lambda = 0.9 * critical_lambda_mixed(r, p);
            const EffectiveParams eff = effective_params(lambda, r, p);
            const double viable = expected_counts_mixed(lambda, r, p).mean_viable.value();
            const double thinned = expected_total_progeny(eff.lambda_eff, eff.r_eff).value();
            CHECK(viable == Catch::Approx(thinned).epsilon(1e-12));
        }
    }
}

TEST_CASE("effective parameters") {
    const EffectiveParams eff = effective_params(0.5, 0.8, 0.5);
    CHECK(eff.lambda_eff == Catch::Approx(0.3).margin(1e-15));
    CHECK(eff.r_eff == Catch::Approx(2.0 / 3.0).margin(1e-15));
    const EffectiveParams identity = effective_params(0.4, 0.6, 1.0);
    CHECK(identity.lambda_eff == Catch::Approx(0.4).margin(1e-15));
    CHECK(identity.r_eff == Catch::Approx(0.6).margin(1e-15));
}

TEST_CASE("mutation window case analysis") {
    // p >= 1/2: empty, then one-sided, then full
    CHECK(mutation_window(0.3, 0.6).kind == WindowKind::EmptyAlwaysExtinct);
    CHECK(mutation_window(1.0 / 2.4, 0.6).kind == WindowKind::EmptyAlwaysExtinct);
    const MutationWindow above = mutation_window(0.7, 0.5);
    CHECK(above.kind == WindowKind::AboveThreshold);
    REQUIRE(above.r_minus.has_value());
    CHECK(*above.r_minus == Catch::Approx(0.09649209709474886).margin(1e-14));
    CHECK_FALSE(above.r_plus.has_value());
    CHECK(mutation_window(1.0, 0.6).kind == WindowKind::FullSurvival);

    // 1/4 < p < 1/2: two-sided window, then one-sided, then full
    CHECK(mutation_window(0.69, 0.3).kind == WindowKind::EmptyAlwaysExtinct);
    CHECK(mutation_window(0.75, 0.3).kind == WindowKind::Interval);
    const MutationWindow at_boundary = mutation_window(1.0 / 1.2, 0.3);
    CHECK(at_boundary.kind == WindowKind::Interval);
    REQUIRE(at_boundary.r_plus.has_value());
    CHECK(*at_boundary.r_plus == Catch::Approx(1.0).margin(1e-12));
    CHECK(mutation_window(0.9, 0.3).kind == WindowKind::AboveThreshold);
    CHECK(mutation_window(1.0, 0.3).kind == WindowKind::FullSurvival);

    // p < 1/4: two-sided, then r < r_plus, then full
    CHECK(mutation_window(0.79, 0.2).kind == WindowKind::EmptyAlwaysExtinct);
    const MutationWindow two_sided = mutation_window(0.9, 0.2);
    CHECK(two_sided.kind == WindowKind::Interval);
    const MutationWindow below = mutation_window(1.0, 0.2);
    CHECK(below.kind == WindowKind::BelowThreshold);
    REQUIRE(below.r_plus.has_value());
    CHECK(*below.r_plus == Catch::Approx(0.8).margin(1e-14));
    CHECK_FALSE(below.r_minus.has_value());
    CHECK(mutation_window(1.25, 0.2).kind == WindowKind::FullSurvival);
    CHECK(mutation_window(2.0, 0.2).kind == WindowKind::FullSurvival);

    // pinned interval endpoints
    const MutationWindow pinned = mutation_window(0.61, 0.4);
    REQUIRE(pinned.kind == WindowKind::Interval);
    CHECK(*pinned.r_minus == Catch::Approx(0.46476867802174548).margin(1e-14));
    CHECK(*pinned.r_plus == Catch::Approx(0.87949361706022189).margin(1e-14));
    // endpoints sit exactly on the critical curve
    CHECK(critical_lambda_mixed(*pinned.r_minus, 0.4) == Catch::Approx(0.61).margin(1e-12));
    CHECK(critical_lambda_mixed(*pinned.r_plus, 0.4) == Catch::Approx(0.61).margin(1e-12));

    // curve minimum metadata only for p < 1/2
    CHECK(mutation_window(0.9, 0.3).r_star.has_value());
    CHECK(*mutation_window(0.9, 0.3).lambda_c_min == Catch::Approx(0.7).margin(1e-15));
    CHECK_FALSE(mutation_window(0.9, 0.6).r_star.has_value());
}

TEST_CASE("conditioned mean growth") {
    CHECK(conditioned_mean_progeny(0.0, 0.1, 1.0) == 1.0);
    CHECK(conditioned_mean_progeny(1.0, 0.1, 1.0) ==
          Catch::Approx(1.119297957801151).margin(1e-14));
    CHECK(conditioned_mean_progeny(2.0, 0.1, 0.5) ==
          Catch::Approx(1.2359591017487384).margin(1e-14));
    CHECK_THROWS_AS(conditioned_mean_progeny(1.0, 0.3, 1.0), std::domain_error);
}

TEST_CASE("rate-function minimum matches the critical form") {
    CHECK(mgf_min_check(0.17, 0.63) == Catch::Approx(0.546966633729).margin(1e-9));
    for (const double r : {0.04, 0.3, 0.77, 1.0}) {
        const double target = (1.0 + std::sqrt(r)) * (1.0 + std::sqrt(r));
        CHECK(mgf_min_check(0.25, r) / 0.25 == Catch::Approx(target).margin(1e-8));
    }
}

TEST_CASE("star-variant extinction relation") {
    CHECK(extinction_prob_star(1.0, 0.5) == Catch::Approx(1.0).margin(1e-15));
    CHECK(extinction_prob_star(0.4, 0.5) == Catch::Approx(0.7).margin(1e-15));
    CHECK(extinction_prob_star(0.25, 0.8) == Catch::Approx(0.2 + 0.8 * 0.25).margin(1e-15));
    CHECK_THROWS_AS(extinction_prob_star(1.2, 0.5), std::domain_error);
}

TEST_CASE("one-point summary") {
    const AnalyticSummary crit = summarize(0.25, 1.0);
    CHECK(crit.lambda_c == Catch::Approx(0.25).margin(1e-15));
    CHECK(crit.regime == Regime::Critical);
    CHECK(crit.mean_N.value() == Catch::Approx(2.0).margin(1e-12));

    const AnalyticSummary mixed = summarize(1.0, 0.8, 0.2);
    CHECK(mixed.lambda_c == Catch::Approx(1.0).margin(1e-14));
    CHECK(mixed.regime == Regime::Critical);

    const AnalyticSummary sub = summarize(0.5, 0.8, 0.5);
    CHECK(sub.regime == Regime::Subcritical);
    CHECK(sub.lambda_eff == Catch::Approx(0.3).margin(1e-15));
    CHECK(sub.r_eff == Catch::Approx(2.0 / 3.0).margin(1e-15));
    REQUIRE(sub.alpha.has_value());
    CHECK(sub.mean_Np.value() ==
          Catch::Approx(sub.mean_Nv.value() + sub.mean_S.value()).epsilon(1e-12));

    // supercritical just above the curve: complex pair, infinite means
    const AnalyticSummary super = summarize(0.35, 1.0);
    CHECK(super.regime == Regime::Supercritical);
    CHECK(super.delta < 0.0);
    CHECK_FALSE(super.alpha.has_value());
    CHECK_FALSE(super.mean_N.is_finite());

    // far above the curve the quadratic has real roots again; they are
    // reported, the means stay infinite
    const AnalyticSummary far = summarize(12.0, 0.5);
    CHECK(far.regime == Regime::Supercritical);
    CHECK(far.delta > 0.0);
    CHECK(far.alpha.has_value());
    CHECK_FALSE(far.mean_N.is_finite());
}

TEST_CASE("enum serialization") {
    CHECK(std::string(to_string(Regime::Subcritical)) == "subcritical");
    CHECK(std::string(to_string(Regime::Critical)) == "critical");
    CHECK(std::string(to_string(Regime::Supercritical)) == "supercritical");
    CHECK(std::string(to_string(WindowKind::Interval)) == "interval");
    CHECK(std::string(to_string(WindowKind::FullSurvival)) == "full_survival");
}
