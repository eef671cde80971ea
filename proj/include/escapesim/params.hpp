#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace escapesim {

/**
 * Model variant selector.
 *
 * Standard: one initial pathogen whose antigenic type carries a unit-rate
 *   clearance clock started at time zero.
 * Star: the initial type's clock fires immediately with probability 1-r,
 *   otherwise behaves like Standard.
 * Mixed: births found sterile lineages with probability r(1-p); p = 1
 *   reproduces Standard draw for draw.
 * ConditionedInitialDeath: the initial type is cleared at a fixed time t
 *   instead of a random one.
 */
enum class Variant {
    Standard,
    Star,
    Mixed,
    ConditionedInitialDeath,
};

/**
 * Parameter point of the branching model.
 *
 * lambda is the per-pathogen birth rate, r the per-birth mutation
 * probability, p the beneficial fraction among mutations. Domains are
 * lambda > 0, r in (0,1], p in (0,1]; the boundary values r = 0 and p = 0
 * are rejected rather than given limit semantics.
 *
 * Variants other than Mixed describe the p-free model, so they require
 * p = 1. conditioned_death_time is read only by ConditionedInitialDeath.
 */
struct ModelParams {
    double lambda = 0.0;
    double r = 1.0;
    double p = 1.0;
    Variant variant = Variant::Standard;
    double conditioned_death_time = 0.0;
};

inline void validate(const ModelParams& m) {
    if (!(m.lambda > 0.0) || !std::isfinite(m.lambda))
        throw std::invalid_argument("lambda must be a positive finite real");
    if (!(m.r > 0.0) || m.r > 1.0)
        throw std::invalid_argument("r must lie in (0, 1]");
    if (!(m.p > 0.0) || m.p > 1.0)
        throw std::invalid_argument("p must lie in (0, 1]");
    if (m.variant != Variant::Mixed && m.p != 1.0)
        throw std::invalid_argument("p < 1 requires the mixed variant");
    if (m.variant == Variant::ConditionedInitialDeath &&
        (!(m.conditioned_death_time >= 0.0) || !std::isfinite(m.conditioned_death_time)))
        throw std::invalid_argument("conditioned initial death time must be a nonnegative finite real");
}

/**
 * Episode termination policy. True survival is an infinite-time event, so a
 * finite run is censored: an episode that reaches time_horizon with a
 * positive population, or whose living population reaches population_cap,
 * is declared censored-survived. progeny_cap is a safety bound on total
 * births; hitting it aborts the episode.
 */
struct StopRule {
    double time_horizon = 200.0;
    std::uint64_t population_cap = 10'000;
    std::uint64_t progeny_cap = 10'000'000;
};

inline void validate(const StopRule& s) {
    if (!(s.time_horizon > 0.0) || !std::isfinite(s.time_horizon))
        throw std::invalid_argument("time_horizon must be a positive finite real");
    if (s.population_cap == 0)
        throw std::invalid_argument("population_cap must be positive");
    if (s.progeny_cap == 0)
        throw std::invalid_argument("progeny_cap must be positive");
}

/**
 * Extended real used for first moments: either a finite value or the
 * explicit infinite variant. Callers must branch on is_finite(); value()
 * throws on the infinite variant instead of producing a floating-point inf.
 */
class ExtReal {
  public:
    constexpr ExtReal() = default;

    static constexpr ExtReal finite(double v) { return ExtReal(v, true); }
    static constexpr ExtReal infinity() { return ExtReal(0.0, false); }

    [[nodiscard]] constexpr bool is_finite() const { return finite_; }

    [[nodiscard]] double value() const {
        if (!finite_) throw std::logic_error("value() called on an infinite quantity");
        return value_;
    }

  private:
    constexpr ExtReal(double v, bool f) : value_(v), finite_(f) {}
    double value_ = 0.0;
    bool finite_ = true;
};

}  // namespace escapesim
