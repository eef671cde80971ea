#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <escapesim/analytics.hpp>
#include <escapesim/montecarlo.hpp>
#include <escapesim/params.hpp>

namespace escapesim {

enum class Param { Lambda, R, P };

inline std::string to_string(Param param) {
    switch (param) {
        case Param::Lambda: return "lambda";
        case Param::R: return "r";
        case Param::P: return "p";
    }
    throw std::logic_error("unreachable");
}

inline Param param_from_string(const std::string& name) {
    if (name == "lambda") return Param::Lambda;
    if (name == "r") return Param::R;
    if (name == "p") return Param::P;
    throw std::invalid_argument("unknown parameter name '" + name +
                                "' (expected lambda, r, or p)");
}

enum class Estimator { Survival, MeanProgeny };

inline std::string to_string(Estimator estimator) {
    switch (estimator) {
        case Estimator::Survival: return "survival";
        case Estimator::MeanProgeny: return "mean_progeny";
    }
    throw std::logic_error("unreachable");
}

/** Inclusive linear range over one parameter; min == max collapses the axis. */
struct AxisSpec {
    Param name = Param::Lambda;
    double min = 0.0;
    double max = 0.0;
    std::uint32_t steps = 2;
};

struct GridSpec {
    AxisSpec axis1;
    AxisSpec axis2;
    Param fixed_name = Param::P;
    double fixed_value = 1.0;
    Estimator estimator = Estimator::Survival;
    std::uint64_t per_cell_reps = 1000;
    StopRule stop;
    std::uint64_t master_seed = 0;
    /**
     * Endpoints sitting exactly on an open domain boundary (lambda, r, p at
     * 0) are pulled inward by this amount instead of rejected; the formulas
     * are continuous there and the boundary itself carries no mass.
     */
    double boundary_epsilon = 1e-3;
};

struct SweepCell {
    double coord1 = 0.0;
    double coord2 = 0.0;
    Estimate estimate;
    double analytic_lambda_c = 0.0;
    Regime analytic_regime = Regime::Subcritical;
};

namespace detail {

inline double domain_max(Param param) {
    return param == Param::Lambda ? std::numeric_limits<double>::infinity() : 1.0;
}

inline AxisSpec clamped_axis(AxisSpec axis, double epsilon) {
    if (!std::isfinite(axis.min) || !std::isfinite(axis.max))
        throw std::domain_error("axis range for " + to_string(axis.name) + " must be finite");
    if (axis.min == 0.0) axis.min = epsilon;
    if (axis.max == 0.0) axis.max = epsilon;
    if (axis.min <= 0.0 || axis.max > domain_max(axis.name) || axis.min > axis.max)
        throw std::domain_error("axis range for " + to_string(axis.name) +
                                " lies outside the parameter domain");
    if (axis.steps < 2) throw std::domain_error("axis steps must be at least 2");
    return axis;
}

/** Validated copy of the input GridSpec with boundary endpoints clamped inward. */
inline GridSpec normalized(const GridSpec& spec) {
    GridSpec out = spec;
    if (!(spec.boundary_epsilon > 0.0) || !std::isfinite(spec.boundary_epsilon))
        throw std::domain_error("boundary epsilon must be a positive finite real");
    out.axis1 = clamped_axis(spec.axis1, spec.boundary_epsilon);
    out.axis2 = clamped_axis(spec.axis2, spec.boundary_epsilon);
    if (spec.axis1.name == spec.axis2.name)
        throw std::domain_error("grid axes must name distinct parameters");
    if (spec.fixed_name == spec.axis1.name || spec.fixed_name == spec.axis2.name)
        throw std::domain_error("fixed parameter must be the one not on an axis");
    if (!std::isfinite(spec.fixed_value) || spec.fixed_value <= 0.0 ||
        spec.fixed_value > domain_max(spec.fixed_name))
        throw std::domain_error("fixed value for " + to_string(spec.fixed_name) +
                                " lies outside the parameter domain");
    if (spec.per_cell_reps == 0 || spec.per_cell_reps >= (1ull << 32))
        throw std::domain_error("per_cell_reps must lie in [1, 2^32)");
    validate(spec.stop);
    return out;
}

inline double axis_value(const AxisSpec& axis, std::uint32_t index) {
    if (axis.steps == 1 || axis.min == axis.max) return axis.min;
    const double t = static_cast<double>(index) / static_cast<double>(axis.steps - 1);
    return index + 1 == axis.steps ? axis.max : axis.min + t * (axis.max - axis.min);
}

inline ModelParams cell_params(const GridSpec& spec, double coord1, double coord2) {
    ModelParams params;
    params.p = 1.0;
    const auto assign = [&](Param name, double value) {
        switch (name) {
            case Param::Lambda: params.lambda = value; break;
            case Param::R: params.r = value; break;
            case Param::P: params.p = value; break;
        }
    };
    assign(spec.axis1.name, coord1);
    assign(spec.axis2.name, coord2);
    assign(spec.fixed_name, spec.fixed_value);
    params.variant = params.p < 1.0 ? Variant::Mixed : Variant::Standard;
    return params;
}

inline SweepCell evaluate_cell(const GridSpec& spec, std::uint64_t cell_index, double coord1,
                               double coord2) {
    const ModelParams params = cell_params(spec, coord1, coord2);
    SweepCell cell;
    cell.coord1 = coord1;
    cell.coord2 = coord2;
    cell.analytic_lambda_c = params.p < 1.0 ? critical_lambda_mixed(params.r, params.p)
                                            : critical_lambda(params.r);
    cell.analytic_regime = classify(params);
    const std::uint64_t stream_base = cell_index << 32;
    if (spec.estimator == Estimator::Survival) {
        cell.estimate = estimate_survival(params, spec.stop, spec.per_cell_reps,
                                          spec.master_seed, 1, stream_base);
        return cell;
    }
    const auto outcomes = run_episode_batch(params, spec.stop, spec.per_cell_reps,
                                            spec.master_seed, stream_base, 1);
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
    const double n = static_cast<double>(spec.per_cell_reps);
    cell.estimate = mean_estimate(n_vals, spec.per_cell_reps,
                                  static_cast<double>(censored) / n,
                                  static_cast<double>(aborted) / n);
    return cell;
}

inline void format_g9(std::string& out, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    out += buf;
}

}  // namespace detail

/**
 * Evaluates every grid cell in row-major order (axis1 outer, axis2 inner).
 * Cell i uses episode streams derived from (master_seed, i << 32), so the
 * result is identical for any worker count and any cell execution order.
 */
inline std::vector<SweepCell> run_sweep(const GridSpec& raw_spec, unsigned workers = 0) {
    const GridSpec spec = detail::normalized(raw_spec);
    const std::uint64_t n1 = spec.axis1.steps;
    const std::uint64_t n2 = spec.axis2.steps;
    std::vector<SweepCell> cells(n1 * n2);
    const auto evaluate_range = [&](std::uint64_t lo, std::uint64_t hi) {
        for (std::uint64_t idx = lo; idx < hi; ++idx) {
            const double c1 = detail::axis_value(spec.axis1, static_cast<std::uint32_t>(idx / n2));
            const double c2 = detail::axis_value(spec.axis2, static_cast<std::uint32_t>(idx % n2));
            cells[idx] = detail::evaluate_cell(spec, idx, c1, c2);
        }
    };
    workers = resolve_worker_count(workers);
    if (workers <= 1 || cells.size() < 2) {
        evaluate_range(0, cells.size());
        return cells;
    }
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::uint64_t idx = next.fetch_add(1, std::memory_order_relaxed);
                if (idx >= cells.size()) return;
                evaluate_range(idx, idx + 1);
            }
        });
    }
    for (auto& th : pool) th.join();
    return cells;
}

/**
 * One header row, then one row per cell in the order given. Columns: the two
 * axis coordinates, the fixed parameter, then n_reps, estimate_mean, stderr,
 * ci_low, ci_high, censored_fraction, lambda_c, regime. Reals carry 9
 * significant digits, so rewriting the same cells is byte-identical.
 */
inline void emit_csv(const GridSpec& spec, const std::vector<SweepCell>& cells,
                     std::ostream& dest) {
    if (cells.empty()) throw std::invalid_argument("emit_csv requires at least one cell");
    std::string text;
    text.reserve(128 * (cells.size() + 1));
    text += to_string(spec.axis1.name);
    text += ',';
    text += to_string(spec.axis2.name);
    text += ',';
    text += to_string(spec.fixed_name);
    text += ",n_reps,estimate_mean,stderr,ci_low,ci_high,censored_fraction,lambda_c,regime\n";
    for (const auto& cell : cells) {
        detail::format_g9(text, cell.coord1);
        text += ',';
        detail::format_g9(text, cell.coord2);
        text += ',';
        detail::format_g9(text, spec.fixed_value);
        text += ',';
        text += std::to_string(cell.estimate.n_reps);
        text += ',';
        detail::format_g9(text, cell.estimate.mean);
        text += ',';
        detail::format_g9(text, cell.estimate.std_error);
        text += ',';
        detail::format_g9(text, cell.estimate.ci_low);
        text += ',';
        detail::format_g9(text, cell.estimate.ci_high);
        text += ',';
        detail::format_g9(text, cell.estimate.censored_fraction);
        text += ',';
        detail::format_g9(text, cell.analytic_lambda_c);
        text += ',';
        text += to_string(cell.analytic_regime);
        text += '\n';
    }
    dest << text;
    if (!dest) throw std::runtime_error("csv destination is not writable");
}

inline void emit_csv(const GridSpec& spec, const std::vector<SweepCell>& cells,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    emit_csv(spec, cells, out);
}

/**
 * Critical-curve vertices in (axis1, axis2) coordinates, 200 samples across
 * the sampling axis. On a grid with lambda on one axis the curve is
 * lambda = lambda_c over the other axis; on an (r, p) grid it is the
 * contour p = (1 - lambda(1-r))^2 / (4 lambda r) of lambda_c(r, p) = lambda,
 * valid on the lower branch lambda(1-r) < 1, and vertices leaving (0, 1]
 * are dropped.
 */
inline std::vector<std::pair<double, double>> overlay_polyline(const GridSpec& raw_spec,
                                                               std::uint32_t samples = 200) {
    const GridSpec spec = detail::normalized(raw_spec);
    if (samples < 2) throw std::invalid_argument("overlay needs at least 2 samples");
    std::vector<std::pair<double, double>> vertices;
    vertices.reserve(samples);
    const bool lambda_on_1 = spec.axis1.name == Param::Lambda;
    const bool lambda_on_2 = spec.axis2.name == Param::Lambda;
    const auto sample_points = [&](const AxisSpec& axis) {
        std::vector<double> pts(samples);
        for (std::uint32_t i = 0; i < samples; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(samples - 1);
            pts[i] = i + 1 == samples ? axis.max : axis.min + t * (axis.max - axis.min);
        }
        return pts;
    };
    if (lambda_on_1 || lambda_on_2) {
        const AxisSpec& other = lambda_on_1 ? spec.axis2 : spec.axis1;
        for (const double x : sample_points(other)) {
            double lambda_c = 0.0;
            if (other.name == Param::R) {
                const double p = spec.fixed_name == Param::P ? spec.fixed_value : 1.0;
                lambda_c = p < 1.0 ? critical_lambda_mixed(x, p) : critical_lambda(x);
            } else {
                lambda_c = critical_lambda_mixed(spec.fixed_value, x);
            }
            vertices.emplace_back(lambda_on_1 ? lambda_c : x, lambda_on_1 ? x : lambda_c);
        }
        return vertices;
    }
    const bool r_on_1 = spec.axis1.name == Param::R;
    const AxisSpec& r_axis = r_on_1 ? spec.axis1 : spec.axis2;
    const double lambda = spec.fixed_value;
    for (const double r : sample_points(r_axis)) {
        const double one_minus = 1.0 - lambda * (1.0 - r);
        if (one_minus <= 0.0) continue;
        const double p = one_minus * one_minus / (4.0 * lambda * r);
        if (p <= 0.0 || p > 1.0) continue;
        vertices.emplace_back(r_on_1 ? r : p, r_on_1 ? p : r);
    }
    return vertices;
}

namespace detail {

inline std::string heat_color(double t) {
    if (!(t >= 0.0)) return "#777777";
    if (t > 1.0) t = 1.0;
    const int lo[3] = {0x1c, 0x2c, 0x4f};
    const int hi[3] = {0xff, 0xd2, 0x4a};
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::lround(lo[0] + t * (hi[0] - lo[0]))),
                  static_cast<int>(std::lround(lo[1] + t * (hi[1] - lo[1]))),
                  static_cast<int>(std::lround(lo[2] + t * (hi[2] - lo[2]))));
    return buf;
}

inline void append_svg_number(std::string& out, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    out += buf;
}

}  // namespace detail

/**
 * Self-contained SVG heatmap of the estimates, one tile per cell, axis1
 * horizontal and axis2 vertical (increasing upward). Survival estimates map
 * linearly from [0, 1] onto the color ramp; progeny means are normalized by
 * the largest finite mean. With overlay, the critical-curve polyline is
 * drawn in red and clipped to the plot area.
 */
inline void emit_phase_svg(const GridSpec& raw_spec, const std::vector<SweepCell>& cells,
                           bool overlay, std::ostream& dest) {
    const GridSpec spec = detail::normalized(raw_spec);
    const std::uint64_t n1 = spec.axis1.steps;
    const std::uint64_t n2 = spec.axis2.steps;
    if (cells.size() != n1 * n2)
        throw std::invalid_argument("cell count does not match the grid shape");

    constexpr double kWidth = 700.0, kHeight = 570.0;
    constexpr double kLeft = 70.0, kRight = 30.0, kTop = 40.0, kBottom = 50.0;
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const double cw = plot_w / static_cast<double>(n1);
    const double ch = plot_h / static_cast<double>(n2);

    double scale_max = 1.0;
    if (spec.estimator == Estimator::MeanProgeny) {
        scale_max = 0.0;
        for (const auto& cell : cells)
            if (std::isfinite(cell.estimate.mean) && cell.estimate.mean > scale_max)
                scale_max = cell.estimate.mean;
        if (scale_max <= 0.0) scale_max = 1.0;
    }

    const auto x_center = [&](std::uint64_t i1) { return kLeft + (i1 + 0.5) * cw; };
    const auto y_center = [&](std::uint64_t i2) { return kTop + plot_h - (i2 + 0.5) * ch; };
    const auto x_of_coord = [&](double c) {
        if (spec.axis1.max == spec.axis1.min) return x_center(0);
        const double idx = (c - spec.axis1.min) / (spec.axis1.max - spec.axis1.min) *
                           static_cast<double>(n1 - 1);
        return kLeft + (idx + 0.5) * cw;
    };
    const auto y_of_coord = [&](double c) {
        if (spec.axis2.max == spec.axis2.min) return y_center(0);
        const double idx = (c - spec.axis2.min) / (spec.axis2.max - spec.axis2.min) *
                           static_cast<double>(n2 - 1);
        return kTop + plot_h - (idx + 0.5) * ch;
    };

    std::string svg;
    svg.reserve(64 * cells.size() + 4096);
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"700\" height=\"570\" "
           "viewBox=\"0 0 700 570\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"700\" height=\"570\" fill=\"#ffffff\"/>\n";
    svg += "<defs><clipPath id=\"plot\"><rect x=\"";
    detail::append_svg_number(svg, kLeft);
    svg += "\" y=\"";
    detail::append_svg_number(svg, kTop);
    svg += "\" width=\"";
    detail::append_svg_number(svg, plot_w);
    svg += "\" height=\"";
    detail::append_svg_number(svg, plot_h);
    svg += "\"/></clipPath></defs>\n";

    char line[256];
    std::snprintf(line, sizeof line,
                  "<text x=\"%.6g\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
                  "text-anchor=\"middle\">%s estimate, %s = %.6g, %llu x %llu grid, %llu reps "
                  "per cell</text>\n",
                  kLeft + plot_w / 2, to_string(spec.estimator).c_str(),
                  to_string(spec.fixed_name).c_str(), spec.fixed_value,
                  static_cast<unsigned long long>(n1), static_cast<unsigned long long>(n2),
                  static_cast<unsigned long long>(spec.per_cell_reps));
    svg += line;

    for (std::uint64_t i1 = 0; i1 < n1; ++i1) {
        for (std::uint64_t i2 = 0; i2 < n2; ++i2) {
            const auto& cell = cells[i1 * n2 + i2];
            const double value = cell.estimate.mean / scale_max;
            std::snprintf(line, sizeof line,
                          "<rect x=\"%.6g\" y=\"%.6g\" width=\"%.6g\" height=\"%.6g\" "
                          "fill=\"%s\"/>\n",
                          kLeft + static_cast<double>(i1) * cw,
                          kTop + plot_h - static_cast<double>(i2 + 1) * ch, cw, ch,
                          detail::heat_color(value).c_str());
            svg += line;
        }
    }

    svg += "<rect x=\"";
    detail::append_svg_number(svg, kLeft);
    svg += "\" y=\"";
    detail::append_svg_number(svg, kTop);
    svg += "\" width=\"";
    detail::append_svg_number(svg, plot_w);
    svg += "\" height=\"";
    detail::append_svg_number(svg, plot_h);
    svg += "\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1\"/>\n";

    const std::uint64_t tick1 = std::max<std::uint64_t>(1, (n1 - 1 + 3) / 4);
    for (std::uint64_t i1 = 0; i1 < n1; i1 += tick1) {
        std::snprintf(line, sizeof line,
                      "<line x1=\"%.6g\" y1=\"%.6g\" x2=\"%.6g\" y2=\"%.6g\" stroke=\"#222222\" "
                      "stroke-width=\"1\"/>\n",
                      x_center(i1), kTop + plot_h, x_center(i1), kTop + plot_h + 5);
        svg += line;
        std::snprintf(line, sizeof line,
                      "<text x=\"%.6g\" y=\"%.6g\" font-family=\"sans-serif\" font-size=\"11\" "
                      "text-anchor=\"middle\">%.3g</text>\n",
                      x_center(i1), kTop + plot_h + 18, detail::axis_value(spec.axis1, i1));
        svg += line;
    }
    const std::uint64_t tick2 = std::max<std::uint64_t>(1, (n2 - 1 + 3) / 4);
    for (std::uint64_t i2 = 0; i2 < n2; i2 += tick2) {
        std::snprintf(line, sizeof line,
                      "<line x1=\"%.6g\" y1=\"%.6g\" x2=\"%.6g\" y2=\"%.6g\" stroke=\"#222222\" "
                      "stroke-width=\"1\"/>\n",
                      kLeft - 5, y_center(i2), kLeft, y_center(i2));
        svg += line;
        std::snprintf(line, sizeof line,
                      "<text x=\"%.6g\" y=\"%.6g\" font-family=\"sans-serif\" font-size=\"11\" "
                      "text-anchor=\"end\">%.3g</text>\n",
                      kLeft - 9, y_center(i2) + 4, detail::axis_value(spec.axis2, i2));
        svg += line;
    }

    std::snprintf(line, sizeof line,
                  "<text x=\"%.6g\" y=\"%.6g\" font-family=\"sans-serif\" font-size=\"14\" "
                  "text-anchor=\"middle\">%s</text>\n",
                  kLeft + plot_w / 2, kHeight - 12, to_string(spec.axis1.name).c_str());
    svg += line;
    std::snprintf(line, sizeof line,
                  "<text x=\"18\" y=\"%.6g\" font-family=\"sans-serif\" font-size=\"14\" "
                  "text-anchor=\"middle\" transform=\"rotate(-90 18 %.6g)\">%s</text>\n",
                  kTop + plot_h / 2, kTop + plot_h / 2, to_string(spec.axis2.name).c_str());
    svg += line;

    if (overlay) {
        const auto vertices = overlay_polyline(spec);
        if (!vertices.empty()) {
            svg += "<g clip-path=\"url(#plot)\"><polyline fill=\"none\" stroke=\"#e03a2f\" "
                   "stroke-width=\"2\" points=\"";
            for (const auto& [c1, c2] : vertices) {
                detail::append_svg_number(svg, x_of_coord(c1));
                svg += ',';
                detail::append_svg_number(svg, y_of_coord(c2));
                svg += ' ';
            }
            svg += "\"/></g>\n";
        }
    }
    svg += "</svg>\n";
    dest << svg;
    if (!dest) throw std::runtime_error("svg destination is not writable");
}

inline void emit_phase_svg(const GridSpec& spec, const std::vector<SweepCell>& cells,
                           bool overlay, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    emit_phase_svg(spec, cells, overlay, out);
}

}  // namespace escapesim
