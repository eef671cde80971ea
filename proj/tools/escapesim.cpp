#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <escapesim/escapesim.hpp>

namespace {

using nlohmann::json;

std::string fmt(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

std::string fmt(const escapesim::ExtReal& value) {
    return value.is_finite() ? fmt(value.value()) : "inf";
}

std::string fmt(const std::optional<double>& value) {
    return value ? fmt(*value) : "none";
}

json json_of(const escapesim::ExtReal& value) {
    return value.is_finite() ? json(value.value()) : json("inf");
}

json json_of(const std::optional<double>& value) {
    return value ? json(*value) : json(nullptr);
}

void print_kv(const std::string& key, const std::string& value) {
    std::printf("%-18s %s\n", key.c_str(), value.c_str());
}

const char* verdict_name(escapesim::Verdict verdict) {
    switch (verdict) {
        case escapesim::Verdict::Extinct: return "extinct";
        case escapesim::Verdict::CensoredSurvived: return "censored_survived";
        case escapesim::Verdict::AbortedProgenyCap: return "aborted_progeny_cap";
    }
    return "unknown";
}

std::uint64_t parse_seed(const std::string& text) {
    if (text == "random") {
        std::random_device rd;
        return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
    }
    try {
        std::size_t used = 0;
        const std::uint64_t seed = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument("");
        return seed;
    } catch (const std::exception&) {
        throw std::invalid_argument("--seed expects an unsigned integer or 'random', got '" +
                                    text + "'");
    }
}

struct CommonArgs {
    double lambda = 0.0;
    double r = 1.0;
    double p = 1.0;
    std::string seed_text = "0";
    unsigned workers = 0;
    escapesim::StopRule stop;
};

void add_model_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--lambda", args.lambda, "birth rate, positive")->required();
    cmd->add_option("--r", args.r, "mutation probability per birth, in (0, 1]")->required();
    cmd->add_option("--p", args.p, "beneficial fraction of mutations, in (0, 1]");
}

void add_run_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--seed", args.seed_text,
                    "master seed (unsigned integer, or 'random' for entropy); default 0");
    cmd->add_option("--workers", args.workers, "worker threads; 0 = auto");
    cmd->add_option("--horizon", args.stop.time_horizon, "censoring time horizon");
    cmd->add_option("--pop-cap", args.stop.population_cap, "censoring population cap");
    cmd->add_option("--progeny-cap", args.stop.progeny_cap, "abort cap on total births");
}

escapesim::ModelParams params_for(const CommonArgs& args) {
    escapesim::ModelParams params;
    params.lambda = args.lambda;
    params.r = args.r;
    params.p = args.p;
    params.variant = args.p < 1.0 ? escapesim::Variant::Mixed : escapesim::Variant::Standard;
    return params;
}

void print_estimate(const std::string& label, const escapesim::Estimate& est) {
    print_kv(label + "_mean", fmt(est.mean));
    print_kv(label + "_stderr", fmt(est.std_error));
    print_kv(label + "_ci95", fmt(est.ci_low) + " .. " + fmt(est.ci_high));
    print_kv(label + "_n_reps", std::to_string(est.n_reps));
    print_kv(label + "_censored", fmt(est.censored_fraction));
    print_kv(label + "_aborted", fmt(est.aborted_fraction));
}

json json_of(const escapesim::Estimate& est) {
    return json{{"mean", est.mean},
                {"stderr", est.std_error},
                {"ci_low", est.ci_low},
                {"ci_high", est.ci_high},
                {"n_reps", est.n_reps},
                {"censored_fraction", est.censored_fraction},
                {"aborted_fraction", est.aborted_fraction}};
}

int run_analytic(const CommonArgs& args, bool as_json) {
    const auto summary = escapesim::summarize(args.lambda, args.r, args.p);
    const auto window = escapesim::mutation_window(args.lambda, args.p);
    if (as_json) {
        json j;
        j["lambda"] = summary.lambda;
        j["r"] = summary.r;
        j["p"] = summary.p;
        j["summary"] = json{{"lambda_c", summary.lambda_c},
                            {"regime", escapesim::to_string(summary.regime)},
                            {"delta", summary.delta},
                            {"alpha", json_of(summary.alpha)},
                            {"beta", json_of(summary.beta)},
                            {"lambda_eff", summary.lambda_eff},
                            {"r_eff", summary.r_eff},
                            {"mean_N", json_of(summary.mean_N)},
                            {"mean_Nv", json_of(summary.mean_Nv)},
                            {"mean_S", json_of(summary.mean_S)},
                            {"mean_Np", json_of(summary.mean_Np)}};
        j["window"] = json{{"kind", escapesim::to_string(window.kind)},
                           {"r_minus", json_of(window.r_minus)},
                           {"r_plus", json_of(window.r_plus)},
                           {"r_star", json_of(window.r_star)},
                           {"lambda_c_min", json_of(window.lambda_c_min)}};
        std::printf("%s\n", j.dump(2).c_str());
        return 0;
    }
    print_kv("lambda", fmt(summary.lambda));
    print_kv("r", fmt(summary.r));
    print_kv("p", fmt(summary.p));
    print_kv("lambda_c", fmt(summary.lambda_c));
    print_kv("regime", escapesim::to_string(summary.regime));
    print_kv("delta", fmt(summary.delta));
    print_kv("alpha", fmt(summary.alpha));
    print_kv("beta", fmt(summary.beta));
    print_kv("lambda_eff", fmt(summary.lambda_eff));
    print_kv("r_eff", fmt(summary.r_eff));
    print_kv("mean_N", fmt(summary.mean_N));
    print_kv("mean_Nv", fmt(summary.mean_Nv));
    print_kv("mean_S", fmt(summary.mean_S));
    print_kv("mean_Np", fmt(summary.mean_Np));
    print_kv("window_kind", escapesim::to_string(window.kind));
    print_kv("r_minus", fmt(window.r_minus));
    print_kv("r_plus", fmt(window.r_plus));
    print_kv("r_star", fmt(window.r_star));
    print_kv("lambda_c_min", fmt(window.lambda_c_min));
    return 0;
}

int run_simulate(const CommonArgs& args, const std::string& variant_text,
                 const std::string& trace_path, bool as_json) {
    escapesim::ModelParams params = params_for(args);
    if (!variant_text.empty()) {
        if (variant_text == "star") {
            params.variant = escapesim::Variant::Star;
        } else if (variant_text == "mixed") {
            params.variant = escapesim::Variant::Mixed;
        } else if (variant_text.rfind("cond:", 0) == 0) {
            params.variant = escapesim::Variant::ConditionedInitialDeath;
            try {
                params.conditioned_death_time = std::stod(variant_text.substr(5));
            } catch (const std::exception&) {
                throw std::invalid_argument("--variant cond:T expects a real T");
            }
        } else {
            throw std::invalid_argument("--variant expects star, mixed, or cond:T, got '" +
                                        variant_text + "'");
        }
    }
    const std::uint64_t seed = parse_seed(args.seed_text);
    escapesim::EpisodeOutcome outcome;
    if (!trace_path.empty()) {
        escapesim::EpisodeTrace trace;
        outcome = escapesim::run_episode_traced(params, args.stop, seed, 0, trace);
        std::ofstream out(trace_path);
        if (!out) throw std::runtime_error("cannot open '" + trace_path + "' for writing");
        escapesim::write_trace(trace, out);
    } else {
        outcome = escapesim::run_episode(params, args.stop, seed, 0);
    }
    if (as_json) {
        json j{{"verdict", verdict_name(outcome.verdict)},
               {"total_progeny_N", outcome.total_progeny_N},
               {"viable_Nv", outcome.viable_Nv},
               {"sterile_S", outcome.sterile_S},
               {"extinction_time", json_of(outcome.extinction_time)},
               {"peak_population", outcome.peak_population},
               {"types_created", outcome.types_created}};
        std::printf("%s\n", j.dump(2).c_str());
        return 0;
    }
    print_kv("verdict", verdict_name(outcome.verdict));
    print_kv("total_progeny_N", std::to_string(outcome.total_progeny_N));
    print_kv("viable_Nv", std::to_string(outcome.viable_Nv));
    print_kv("sterile_S", std::to_string(outcome.sterile_S));
    print_kv("extinction_time", fmt(outcome.extinction_time));
    print_kv("peak_population", std::to_string(outcome.peak_population));
    print_kv("types_created", std::to_string(outcome.types_created));
    return 0;
}

int run_estimate(const CommonArgs& args, const std::string& target, std::uint64_t reps,
                 bool as_json) {
    const std::uint64_t seed = parse_seed(args.seed_text);
    json j;
    if (target == "survival") {
        const auto est = escapesim::estimate_survival(params_for(args), args.stop, reps, seed,
                                                      args.workers);
        if (!as_json) {
            print_kv("target", "survival");
            print_estimate("survival", est);
            return 0;
        }
        j = json{{"target", "survival"}, {"survival", json_of(est)}};
    } else if (target == "progeny") {
        const auto pe =
            escapesim::estimate_mean_progeny(params_for(args), reps, seed, args.workers);
        if (!as_json) {
            print_kv("target", "progeny");
            print_estimate("N", pe.total_N);
            print_estimate("Nv", pe.viable_Nv);
            print_estimate("S", pe.sterile_S);
            print_kv("median_N", fmt(pe.median_N));
            print_kv("heavy_tail_warning", pe.heavy_tail_warning ? "true" : "false");
            print_kv("target_infinite", pe.target_infinite ? "true" : "false");
            if (pe.heavy_tail_warning)
                std::printf("note: near or beyond the critical curve the progeny law is heavy-"
                            "tailed; the stderr may be unreliable, compare with median_N\n");
            return 0;
        }
        j = json{{"target", "progeny"},
                 {"N", json_of(pe.total_N)},
                 {"Nv", json_of(pe.viable_Nv)},
                 {"S", json_of(pe.sterile_S)},
                 {"median_N", pe.median_N},
                 {"heavy_tail_warning", pe.heavy_tail_warning},
                 {"target_infinite", pe.target_infinite}};
    } else if (target.rfind("conditioned:", 0) == 0) {
        double t = 0.0;
        try {
            t = std::stod(target.substr(12));
        } catch (const std::exception&) {
            throw std::invalid_argument("--target conditioned:T expects a real T");
        }
        const auto est = escapesim::estimate_conditioned_mean(t, args.lambda, args.r, reps, seed,
                                                              args.workers);
        if (!as_json) {
            print_kv("target", "conditioned mean at t=" + fmt(t));
            print_estimate("Y", est);
            return 0;
        }
        j = json{{"target", "conditioned"}, {"t", t}, {"Y", json_of(est)}};
    } else if (target == "extinction-pair") {
        const auto pair = escapesim::estimate_extinction_pair(args.lambda, args.r, args.stop,
                                                              reps, seed, args.workers);
        if (!as_json) {
            print_kv("target", "extinction-pair");
            print_estimate("q", pair.q_hat);
            print_estimate("q_star", pair.q_star_hat);
            print_kv("residual", fmt(pair.relation_residual));
            return 0;
        }
        j = json{{"target", "extinction-pair"},
                 {"q", json_of(pair.q_hat)},
                 {"q_star", json_of(pair.q_star_hat)},
                 {"residual", pair.relation_residual}};
    } else if (target == "thinning") {
        const auto report = escapesim::compare_thinning(args.lambda, args.r, args.p, reps, seed,
                                                        args.workers);
        if (!as_json) {
            print_kv("target", "thinning");
            print_estimate("Nv_mixed", report.mean_Nv_mixed);
            print_estimate("N_effective", report.mean_N_effective);
            print_kv("ks_distance", fmt(report.ks_distance));
            print_kv("ks_pvalue", fmt(report.ks_pvalue));
            return 0;
        }
        j = json{{"target", "thinning"},
                 {"Nv_mixed", json_of(report.mean_Nv_mixed)},
                 {"N_effective", json_of(report.mean_N_effective)},
                 {"ks_distance", report.ks_distance},
                 {"ks_pvalue", report.ks_pvalue}};
    } else {
        throw std::invalid_argument(
            "--target expects survival, progeny, conditioned:T, extinction-pair, or thinning");
    }
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

escapesim::AxisSpec parse_axis(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t colon = text.find(':', start);
        parts.push_back(text.substr(start, colon - start));
        if (colon == std::string::npos) break;
        start = colon + 1;
    }
    if (parts.size() != 4)
        throw std::invalid_argument("axis spec '" + text + "' is not name:min:max:steps");
    escapesim::AxisSpec axis;
    axis.name = escapesim::param_from_string(parts[0]);
    try {
        axis.min = std::stod(parts[1]);
        axis.max = std::stod(parts[2]);
        const long steps = std::stol(parts[3]);
        if (steps < 0) throw std::invalid_argument("");
        axis.steps = static_cast<std::uint32_t>(steps);
    } catch (const std::exception&) {
        throw std::invalid_argument("axis spec '" + text + "' has non-numeric fields");
    }
    return axis;
}

int run_sweep_cmd(const CommonArgs& args, const std::string& grid_text,
                  const std::string& fixed_text, const std::string& estimator_text,
                  std::uint64_t reps, double epsilon, const std::string& csv_path,
                  const std::string& svg_path, bool overlay) {
    const std::size_t comma = grid_text.find(',');
    if (comma == std::string::npos)
        throw std::invalid_argument("--grid expects two comma-separated axis specs");
    escapesim::GridSpec spec;
    spec.axis1 = parse_axis(grid_text.substr(0, comma));
    spec.axis2 = parse_axis(grid_text.substr(comma + 1));
    if (spec.axis1.name == spec.axis2.name)
        throw std::invalid_argument("grid axes must name distinct parameters");
    const auto remaining = [&] {
        for (const auto param :
             {escapesim::Param::Lambda, escapesim::Param::R, escapesim::Param::P})
            if (param != spec.axis1.name && param != spec.axis2.name) return param;
        throw std::logic_error("unreachable");
    };
    spec.fixed_name = remaining();
    if (!fixed_text.empty()) {
        const std::size_t eq = fixed_text.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--fixed expects name=value");
        const auto name = escapesim::param_from_string(fixed_text.substr(0, eq));
        if (name != spec.fixed_name)
            throw std::invalid_argument("--fixed must set '" +
                                        escapesim::to_string(spec.fixed_name) +
                                        "', the parameter not on an axis");
        try {
            spec.fixed_value = std::stod(fixed_text.substr(eq + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("--fixed expects a numeric value");
        }
    } else if (spec.fixed_name == escapesim::Param::P) {
        spec.fixed_value = 1.0;
    } else {
        throw std::invalid_argument("--fixed " + escapesim::to_string(spec.fixed_name) +
                                    "=VALUE is required for this grid");
    }
    if (estimator_text == "survival") {
        spec.estimator = escapesim::Estimator::Survival;
    } else if (estimator_text == "progeny") {
        spec.estimator = escapesim::Estimator::MeanProgeny;
    } else {
        throw std::invalid_argument("--estimator expects survival or progeny");
    }
    spec.per_cell_reps = reps;
    spec.stop = args.stop;
    spec.master_seed = parse_seed(args.seed_text);
    spec.boundary_epsilon = epsilon;

    const auto cells = escapesim::run_sweep(spec, args.workers);
    escapesim::emit_csv(spec, cells, csv_path);
    std::printf("wrote %zu cells to %s\n", cells.size(), csv_path.c_str());
    if (!svg_path.empty()) {
        escapesim::emit_phase_svg(spec, cells, overlay, svg_path);
        std::printf("wrote heatmap to %s\n", svg_path.c_str());
    }
    return 0;
}

int run_validate(const CommonArgs& args, bool fast, const std::string& artifacts) {
    escapesim::ValidationConfig config;
    config.fast = fast;
    config.master_seed = parse_seed(args.seed_text);
    config.workers = args.workers;
    config.artifact_dir = artifacts;
    config.log = &std::cout;
    const auto report = escapesim::run_validation(config);
    int passed = 0;
    for (const auto& res : report.criteria) passed += res.passed ? 1 : 0;
    std::printf("%d of %zu criteria passed\n", passed, report.criteria.size());
    return report.all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-driven simulator and analytics for branching immune-escape models"};
    app.require_subcommand(1);

    CommonArgs analytic_args;
    bool analytic_json = false;
    CLI::App* analytic = app.add_subcommand("analytic", "closed-form summary for one point");
    add_model_options(analytic, analytic_args);
    analytic->add_flag("--json", analytic_json, "emit one structured object");

    CommonArgs sim_args;
    std::string sim_variant;
    std::string sim_trace;
    bool sim_json = false;
    CLI::App* simulate = app.add_subcommand("simulate", "run one episode");
    add_model_options(simulate, sim_args);
    add_run_options(simulate, sim_args);
    simulate->add_option("--variant", sim_variant, "star, mixed, or cond:T");
    simulate->add_option("--trace", sim_trace, "write the full event trace to this path");
    simulate->add_flag("--json", sim_json, "emit one structured object");

    CommonArgs est_args;
    std::string est_target;
    std::uint64_t est_reps = 10'000;
    bool est_json = false;
    CLI::App* estimate = app.add_subcommand("estimate", "Monte Carlo estimation");
    add_model_options(estimate, est_args);
    add_run_options(estimate, est_args);
    estimate
        ->add_option("--target", est_target,
                     "survival, progeny, conditioned:T, extinction-pair, or thinning")
        ->required();
    estimate->add_option("--reps", est_reps, "number of episodes");
    estimate->add_flag("--json", est_json, "emit one structured object");

    CommonArgs sweep_args;
    std::string sweep_grid;
    std::string sweep_fixed;
    std::string sweep_estimator = "survival";
    std::uint64_t sweep_reps = 1000;
    double sweep_epsilon = 1e-3;
    std::string sweep_csv;
    std::string sweep_svg;
    bool sweep_overlay = false;
    CLI::App* sweep = app.add_subcommand("sweep", "grid evaluation and phase diagrams");
    add_run_options(sweep, sweep_args);
    sweep->add_option("--grid", sweep_grid, "two axes as name:min:max:steps,name:min:max:steps")
        ->required();
    sweep->add_option("--fixed", sweep_fixed, "remaining parameter as name=value");
    sweep->add_option("--estimator", sweep_estimator, "survival or progeny");
    sweep->add_option("--reps", sweep_reps, "episodes per cell");
    sweep->add_option("--boundary-epsilon", sweep_epsilon,
                      "inward clamp for endpoints on open domain boundaries");
    sweep->add_option("--out-csv", sweep_csv, "CSV destination")->required();
    sweep->add_option("--out-svg", sweep_svg, "SVG heatmap destination");
    sweep->add_flag("--overlay", sweep_overlay, "draw the analytic critical curve");

    CommonArgs val_args;
    bool val_fast = false;
    std::string val_artifacts = "validate_artifacts";
    CLI::App* validate = app.add_subcommand("validate", "run the acceptance suite");
    validate->add_option("--seed", val_args.seed_text, "master seed; default 0");
    validate->add_option("--workers", val_args.workers, "worker threads; 0 = auto");
    validate->add_flag("--fast", val_fast, "reduced replication counts and grid sizes");
    validate->add_option("--artifacts", val_artifacts, "directory for sweep artifacts");

    try {
        app.parse(argc, argv);
        if (*analytic) return run_analytic(analytic_args, analytic_json);
        if (*simulate) return run_simulate(sim_args, sim_variant, sim_trace, sim_json);
        if (*estimate) return run_estimate(est_args, est_target, est_reps, est_json);
        if (*sweep)
            return run_sweep_cmd(sweep_args, sweep_grid, sweep_fixed, sweep_estimator,
                                 sweep_reps, sweep_epsilon, sweep_csv, sweep_svg, sweep_overlay);
        if (*validate) return run_validate(val_args, val_fast, val_artifacts);
        std::fprintf(stderr, "error: no subcommand selected\n");
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
