#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <escapesim/params.hpp>
#include <escapesim/rng.hpp>

namespace escapesim {

/**
 * One antigenic type. Every member of a type is cleared simultaneously at
 * the type's death_time; a type's clearance clock starts only once its
 * parent type has been eliminated, so death times satisfy the recursion
 * death_time = parent.death_time + clock with clock ~ Exponential(1),
 * which lets the death time be fixed at type creation. The root's clock
 * field is 0 by convention when its death time is drawn directly.
 */
struct TypeRecord {
    std::uint64_t type_id = 0;
    std::optional<std::uint64_t> parent_type;
    double death_time = 0.0;
    double clock = 0.0;
};

/**
 * One pathogen. Born strictly before its type's death (the root may
 * coincide only when the initial clock fires at time zero). Sterile
 * pathogens occupy their own type, count toward the living population
 * until that type dies, and never reproduce.
 */
struct PathogenRecord {
    std::uint64_t pathogen_id = 0;
    std::uint64_t type_id = 0;
    double birth_time = 0.0;
    bool sterile = false;
    std::optional<std::uint64_t> parent_pathogen;
};

enum class Verdict { Extinct, CensoredSurvived, AbortedProgenyCap };

struct EpisodeOutcome {
    Verdict verdict = Verdict::Extinct;
    std::uint64_t total_progeny_N = 0;  ///< pathogens ever born, root included
    std::uint64_t viable_Nv = 0;
    std::uint64_t sterile_S = 0;
    std::optional<double> extinction_time;
    std::uint64_t peak_population = 0;
    std::uint64_t types_created = 0;

    friend bool operator==(const EpisodeOutcome&, const EpisodeOutcome&) = default;
};

enum class TraceEventKind { Birth, TypeDeath };

/** TypeDeath events carry kNoPathogen in pathogen_id. */
inline constexpr std::uint64_t kNoPathogen = std::numeric_limits<std::uint64_t>::max();

struct TraceEvent {
    double time = 0.0;
    TraceEventKind kind = TraceEventKind::Birth;
    std::uint64_t pathogen_id = 0;
    std::uint64_t type_id = 0;
};

/** Full record of a run: genealogy plus the chronological event log. */
struct EpisodeTrace {
    std::vector<TypeRecord> types;
    std::vector<PathogenRecord> pathogens;
    std::vector<TraceEvent> events;
    double end_time = 0.0;  ///< time of the last processed event, or the censor point
    EpisodeOutcome outcome;
};

namespace detail {

struct Event {
    double time;
    std::uint64_t ordinal;   // push sequence number, final tie-break
    std::uint32_t kind;      // 0 = type death, 1 = birth (death wins a time tie)
    std::uint32_t type_id;   // dying type, or the birth emitter's type
    std::uint64_t pathogen;  // birth emitter's pathogen id (trace bookkeeping)
};

inline bool event_after(const Event& a, const Event& b) {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.ordinal > b.ordinal;
}

}  // namespace detail

/**
 * Reusable single-episode simulator. One episode is strictly sequential;
 * distinct runners share nothing, so episodes parallelize across threads.
 * The runner only reuses buffer capacity between runs.
 *
 * Event semantics: every living non-sterile pathogen emits births as a
 * renewal stream of Exponential(lambda) gaps from its birth time, truncated
 * at its type's death time. Each birth is classified by a single uniform
 * draw u: a copy of the parent's type for u < 1-r, a viable founder of a
 * new type for u < 1 - r + r p, and otherwise a sterile founder. New types
 * draw their Exponential(1) clock immediately and schedule their death.
 * Draw order per birth event is fixed (classification, new-type clock,
 * child's first gap if viable, emitter's next gap), so outcomes are a pure
 * function of (params, stop, generator state); with p = 1 the sterile
 * branch has probability zero and the mixed model consumes draws
 * identically to the standard one.
 */
class EpisodeRunner {
  public:
    EpisodeOutcome run(const ModelParams& params, const StopRule& stop, Philox4x64& rng) {
        return run_impl<false>(params, stop, rng, nullptr);
    }

    EpisodeOutcome run_traced(const ModelParams& params, const StopRule& stop, Philox4x64& rng,
                              EpisodeTrace& trace) {
        trace.types.clear();
        trace.pathogens.clear();
        trace.events.clear();
        const EpisodeOutcome outcome = run_impl<true>(params, stop, rng, &trace);
        trace.outcome = outcome;
        return outcome;
    }

  private:
    template <bool Traced>
    EpisodeOutcome run_impl(const ModelParams& params, const StopRule& stop, Philox4x64& rng,
                            EpisodeTrace* trace) {
        validate(params);
        validate(stop);
        type_death_.clear();
        type_alive_.clear();
        heap_.clear();
        next_ordinal_ = 0;

        const double lambda = params.lambda;
        const double r = params.r;
        const double copy_threshold = 1.0 - r;
        const double viable_threshold = 1.0 - r + r * params.p;

        EpisodeOutcome out;
        double end_time = 0.0;

        // Root type: death time fixed at creation, variant-specific draw.
        double root_clock = 0.0;
        double root_death;
        switch (params.variant) {
            case Variant::Star: {
                const double u = rng.uniform01();
                root_clock = u < 1.0 - r ? 0.0 : rng.exponential(1.0);
                root_death = root_clock;
                break;
            }
            case Variant::ConditionedInitialDeath:
                root_death = params.conditioned_death_time;
                break;
            default:
                root_death = rng.exponential(1.0);
                break;
        }
        type_death_.push_back(root_death);
        type_alive_.push_back(1);
        std::uint64_t population = 1;
        out.total_progeny_N = 1;
        out.viable_Nv = 1;
        out.peak_population = 1;
        out.types_created = 1;
        if constexpr (Traced) {
            trace->types.push_back({0, std::nullopt, root_death, root_clock});
            trace->pathogens.push_back({0, 0, 0.0, false, std::nullopt});
            trace->events.push_back({0.0, TraceEventKind::Birth, 0, 0});
        }
        push({root_death, next_ordinal_++, 0, 0, kNoPathogen});
        const double first_gap = rng.exponential(lambda);
        if (first_gap < root_death) push({first_gap, next_ordinal_++, 1, 0, 0});

        std::optional<Verdict> stopped;
        if (population >= stop.population_cap) stopped = Verdict::CensoredSurvived;
        else if (out.total_progeny_N >= stop.progeny_cap) stopped = Verdict::AbortedProgenyCap;

        double last_death = 0.0;
        while (!stopped && !heap_.empty()) {
            const detail::Event ev = pop();
            if (ev.time > stop.time_horizon) {
                // A queued event implies at least one living type.
                stopped = Verdict::CensoredSurvived;
                end_time = stop.time_horizon;
                break;
            }
            end_time = ev.time;
            if (ev.kind == 0) {
                population -= type_alive_[ev.type_id];
                type_alive_[ev.type_id] = 0;
                last_death = ev.time;
                if constexpr (Traced)
                    trace->events.push_back({ev.time, TraceEventKind::TypeDeath, kNoPathogen, ev.type_id});
                if (population == 0) {
                    assert(heap_.empty());
                    break;
                }
                continue;
            }

            // Birth from an emitter of type T; its type is alive by construction.
            const double t = ev.time;
            const std::uint32_t emitter_type = ev.type_id;
            const std::uint64_t child_id = out.total_progeny_N;
            ++out.total_progeny_N;
            const double u = rng.uniform01();
            std::uint32_t child_type;
            bool child_sterile = false;
            if (u < copy_threshold) {
                child_type = emitter_type;
            } else {
                child_sterile = !(u < viable_threshold);
                const double clock = rng.exponential(1.0);
                const double death = type_death_[emitter_type] + clock;
                child_type = static_cast<std::uint32_t>(type_death_.size());
                type_death_.push_back(death);
                type_alive_.push_back(0);
                ++out.types_created;
                if constexpr (Traced)
                    trace->types.push_back({child_type, emitter_type, death, clock});
                push({death, next_ordinal_++, 0, child_type, kNoPathogen});
            }
            child_sterile ? ++out.sterile_S : ++out.viable_Nv;
            ++type_alive_[child_type];
            ++population;
            out.peak_population = std::max(out.peak_population, population);
            if constexpr (Traced) {
                trace->pathogens.push_back({child_id, child_type, t, child_sterile, ev.pathogen});
                trace->events.push_back({t, TraceEventKind::Birth, child_id, child_type});
            }
            if (!child_sterile) {
                const double gap = rng.exponential(lambda);
                if (t + gap < type_death_[child_type])
                    push({t + gap, next_ordinal_++, 1, child_type, child_id});
            }
            const double next_gap = rng.exponential(lambda);
            if (t + next_gap < type_death_[emitter_type])
                push({t + next_gap, next_ordinal_++, 1, emitter_type, ev.pathogen});

            if (population >= stop.population_cap) stopped = Verdict::CensoredSurvived;
            else if (out.total_progeny_N >= stop.progeny_cap) stopped = Verdict::AbortedProgenyCap;
        }

        if (stopped) {
            out.verdict = *stopped;
        } else {
            out.verdict = Verdict::Extinct;
            out.extinction_time = last_death;
            end_time = last_death;
        }
        if constexpr (Traced) trace->end_time = end_time;
        return out;
    }

    void push(const detail::Event& ev) {
        heap_.push_back(ev);
        std::push_heap(heap_.begin(), heap_.end(), detail::event_after);
    }

    detail::Event pop() {
        std::pop_heap(heap_.begin(), heap_.end(), detail::event_after);
        const detail::Event ev = heap_.back();
        heap_.pop_back();
        return ev;
    }

    std::vector<double> type_death_;
    std::vector<std::uint64_t> type_alive_;
    std::vector<detail::Event> heap_;
    std::uint64_t next_ordinal_ = 0;
};

/**
 * Run one episode on the stream (master_seed, stream_index). Identical
 * arguments give identical outcomes, on any thread.
 */
inline EpisodeOutcome run_episode(const ModelParams& params, const StopRule& stop,
                                  std::uint64_t master_seed, std::uint64_t stream_index) {
    Philox4x64 rng(master_seed, stream_index);
    EpisodeRunner runner;
    return runner.run(params, stop, rng);
}

inline EpisodeOutcome run_episode_traced(const ModelParams& params, const StopRule& stop,
                                         std::uint64_t master_seed, std::uint64_t stream_index,
                                         EpisodeTrace& trace) {
    Philox4x64 rng(master_seed, stream_index);
    EpisodeRunner runner;
    return runner.run_traced(params, stop, rng, trace);
}

enum class ViolationKind {
    AncestralOrder,
    ClockMismatch,
    PosthumousBirth,
    SterileWithChild,
    NonSimultaneousRemoval,
};

struct Violation {
    ViolationKind kind;
    std::string message;
};

inline const char* to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::AncestralOrder: return "ancestral_order";
        case ViolationKind::ClockMismatch: return "clock_mismatch";
        case ViolationKind::PosthumousBirth: return "posthumous_birth";
        case ViolationKind::SterileWithChild: return "sterile_with_child";
        case ViolationKind::NonSimultaneousRemoval: return "non_simultaneous_removal";
    }
    return "unknown";
}

/**
 * Structural audit of a recorded episode. Checks, over the full trace:
 * ancestral ordering of type death times (with the exact death-time
 * recursion), no birth at or after its type's death (the root may only
 * coincide when the whole episode dies at time zero), sterile pathogens
 * childless, and single simultaneous removal per eliminated type (exactly
 * one death event, at the recorded time, with no later member). Types
 * still alive at a censor point are exempt from the removal check.
 * Returns an empty list on success.
 */
inline std::vector<Violation> validate_genealogy(const EpisodeTrace& trace) {
    std::vector<Violation> violations;
    const auto add = [&](ViolationKind kind, std::string msg) {
        violations.push_back({kind, std::move(msg)});
    };

    for (const auto& ty : trace.types) {
        if (!ty.parent_type) continue;
        if (*ty.parent_type >= trace.types.size()) {
            add(ViolationKind::AncestralOrder,
                "type " + std::to_string(ty.type_id) + " has an unknown parent type");
            continue;
        }
        const auto& parent = trace.types[*ty.parent_type];
        if (ty.death_time < parent.death_time)
            add(ViolationKind::AncestralOrder,
                "type " + std::to_string(ty.type_id) + " dies before its parent type");
        const double expected = parent.death_time + ty.clock;
        if (std::abs(ty.death_time - expected) > 1e-9 * std::max(1.0, std::abs(expected)))
            add(ViolationKind::ClockMismatch,
                "type " + std::to_string(ty.type_id) +
                    " death time does not equal parent death time plus clock");
    }

    for (const auto& pg : trace.pathogens) {
        if (pg.type_id >= trace.types.size()) continue;
        const double type_death = trace.types[pg.type_id].death_time;
        const bool root_zero_exempt = pg.pathogen_id == 0 && pg.birth_time == type_death;
        if (pg.birth_time >= type_death && !root_zero_exempt)
            add(ViolationKind::PosthumousBirth,
                "pathogen " + std::to_string(pg.pathogen_id) + " born at or after its type death");
    }

    for (const auto& pg : trace.pathogens) {
        if (!pg.parent_pathogen) continue;
        if (*pg.parent_pathogen < trace.pathogens.size() &&
            trace.pathogens[*pg.parent_pathogen].sterile)
            add(ViolationKind::SterileWithChild,
                "sterile pathogen " + std::to_string(*pg.parent_pathogen) + " has a child");
    }

    std::vector<std::uint64_t> death_events(trace.types.size(), 0);
    std::vector<double> death_times(trace.types.size(), 0.0);
    for (const auto& ev : trace.events) {
        if (ev.kind != TraceEventKind::TypeDeath) continue;
        if (ev.type_id >= trace.types.size()) continue;
        ++death_events[ev.type_id];
        death_times[ev.type_id] = ev.time;
    }
    for (const auto& ty : trace.types) {
        const std::uint64_t n = death_events[ty.type_id];
        if (n == 0) {
            if (ty.death_time < trace.end_time)
                add(ViolationKind::NonSimultaneousRemoval,
                    "type " + std::to_string(ty.type_id) + " was never removed");
            continue;
        }
        if (n > 1)
            add(ViolationKind::NonSimultaneousRemoval,
                "type " + std::to_string(ty.type_id) + " removed more than once");
        else if (death_times[ty.type_id] != ty.death_time)
            add(ViolationKind::NonSimultaneousRemoval,
                "type " + std::to_string(ty.type_id) + " removed at the wrong time");
    }

    return violations;
}

/**
 * Line-oriented dump of an episode's event log, one record per line:
 * time, kind, pathogen id ("-" for type deaths), type id. For debugging;
 * the format is stable but not machine-contractual.
 */
inline void write_trace(const EpisodeTrace& trace, std::ostream& os) {
    os << "# time\tkind\tpathogen\ttype\n";
    char buf[64];
    for (const auto& ev : trace.events) {
        std::snprintf(buf, sizeof buf, "%.9g", ev.time);
        os << buf << '\t'
           << (ev.kind == TraceEventKind::Birth ? "birth" : "type_death") << '\t';
        if (ev.pathogen_id == kNoPathogen)
            os << '-';
        else
            os << ev.pathogen_id;
        os << '\t' << ev.type_id << '\n';
    }
}

}  // namespace escapesim
