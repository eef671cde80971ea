#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <escapesim/analytics.hpp>
#include <escapesim/sweep.hpp>

using namespace escapesim;

namespace {

GridSpec small_survival_spec() {
    GridSpec spec;
    spec.axis1 = {Param::R, 0.1, 1.0, 4};
    spec.axis2 = {Param::Lambda, 0.05, 1.0, 4};
    spec.fixed_name = Param::P;
    spec.fixed_value = 1.0;
    spec.estimator = Estimator::Survival;
    spec.per_cell_reps = 300;
    spec.stop = StopRule{50.0, 500, 1'000'000};
    spec.master_seed = 5;
    return spec;
}

std::string csv_text(const GridSpec& spec, const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    emit_csv(spec, cells, out);
    return out.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t lines = 0;
    for (const char ch : text) lines += ch == '\n' ? 1 : 0;
    return lines;
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

TEST_CASE("sweep cells carry coordinates, analytics, and phase-consistent estimates") {
    const GridSpec spec = small_survival_spec();
    const auto cells = run_sweep(spec, 1);
    REQUIRE(cells.size() == 16);

    // row-major layout with exact endpoints
    CHECK(cells[0].coord1 == 0.1);
    CHECK(cells[0].coord2 == 0.05);
    CHECK(cells[3].coord2 == 1.0);
    CHECK(cells[15].coord1 == 1.0);
    CHECK(cells[15].coord2 == 1.0);
    for (int i1 = 0; i1 < 4; ++i1)
        for (int i2 = 1; i2 < 4; ++i2)
            CHECK(cells[i1 * 4 + i2].coord1 == cells[i1 * 4].coord1);

    for (const auto& cell : cells) {
        CHECK(cell.analytic_lambda_c == critical_lambda(cell.coord1));
        ModelParams params;
        params.lambda = cell.coord2;
        params.r = cell.coord1;
        CHECK(cell.analytic_regime == classify(params));
        CHECK(cell.estimate.censored_fraction == cell.estimate.mean);
        CHECK(cell.estimate.n_reps == 300);
    }

    // deep subcritical corner vs deep supercritical corner
    CHECK(cells[0].analytic_regime == Regime::Subcritical);
    CHECK(cells[0].estimate.mean == 0.0);
    CHECK(cells[3].analytic_regime == Regime::Supercritical);
    CHECK(cells[3].estimate.mean > 0.0);
    CHECK(cells[12].analytic_regime == Regime::Subcritical);  // r = 1, lambda = 0.05
    CHECK(cells[12].estimate.mean == 0.0);
}

TEST_CASE("sweep output is byte-identical across worker counts and reruns") {
    const GridSpec spec = small_survival_spec();
    const auto serial = run_sweep(spec, 1);
    const auto threaded = run_sweep(spec, 3);
    const auto again = run_sweep(spec, 3);
    REQUIRE(serial.size() == threaded.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].estimate == threaded[i].estimate);
        CHECK(serial[i].coord1 == threaded[i].coord1);
        CHECK(serial[i].coord2 == threaded[i].coord2);
    }
    const std::string a = csv_text(spec, serial);
    const std::string b = csv_text(spec, threaded);
    const std::string c = csv_text(spec, again);
    CHECK(a == b);
    CHECK(b == c);

    CHECK(a.rfind("r,lambda,p,n_reps,estimate_mean,stderr,ci_low,ci_high,"
                  "censored_fraction,lambda_c,regime\n",
                  0) == 0);
    CHECK(count_lines(a) == 17);
    CHECK(a.find("subcritical") != std::string::npos);
    CHECK(a.find("supercritical") != std::string::npos);

    // file overload produces the same bytes
    const std::string path = "sweep_roundtrip_tmp.csv";
    emit_csv(spec, serial, path);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream readback;
    readback << in.rdbuf();
    CHECK(readback.str() == a);
    in.close();
    std::remove(path.c_str());

    // a single-cell slice is a header plus one row
    const std::string one = csv_text(spec, {serial.front()});
    CHECK(count_lines(one) == 2);
}

TEST_CASE("collapsed axes evaluate a line of cells") {
    GridSpec spec = small_survival_spec();
    spec.axis1 = {Param::Lambda, 0.1, 0.1, 2};
    spec.axis2 = {Param::R, 0.5, 1.0, 3};
    spec.per_cell_reps = 20;
    const auto cells = run_sweep(spec, 1);
    REQUIRE(cells.size() == 6);
    for (const auto& cell : cells) CHECK(cell.coord1 == 0.1);
    CHECK(cells[0].coord2 == 0.5);
    CHECK(cells[2].coord2 == 1.0);
}

TEST_CASE("zero endpoints are pulled inside the open domain") {
    GridSpec spec = small_survival_spec();
    spec.axis1 = {Param::R, 0.0, 1.0, 2};
    spec.axis2 = {Param::Lambda, 0.5, 0.5, 2};
    spec.per_cell_reps = 5;
    auto cells = run_sweep(spec, 1);
    CHECK(cells[0].coord1 == 1e-3);

    spec.boundary_epsilon = 0.01;
    cells = run_sweep(spec, 1);
    CHECK(cells[0].coord1 == 0.01);
}

TEST_CASE("invalid grid specs are rejected") {
    const GridSpec good = small_survival_spec();
    auto expect_domain_error = [](GridSpec spec) {
        CHECK_THROWS_AS(run_sweep(spec, 1), std::domain_error);
    };

    GridSpec bad = good;
    bad.axis1.max = 1.5;  // r beyond its domain
    expect_domain_error(bad);

    bad = good;
    bad.axis2.name = Param::R;  // duplicate axes
    expect_domain_error(bad);

    bad = good;
    bad.fixed_name = Param::R;  // fixed parameter already on an axis
    expect_domain_error(bad);

    bad = good;
    bad.axis1.steps = 1;
    expect_domain_error(bad);

    bad = good;
    bad.per_cell_reps = 0;
    expect_domain_error(bad);

    bad = good;
    bad.fixed_value = 0.0;
    expect_domain_error(bad);

    bad = good;
    bad.boundary_epsilon = 0.0;
    expect_domain_error(bad);

    bad = good;
    bad.axis1.min = -0.5;
    expect_domain_error(bad);

    std::ostringstream sink;
    CHECK_THROWS_AS(emit_csv(good, {}, sink), std::invalid_argument);
}

TEST_CASE("overlay vertices sit on the critical curve") {
    // lambda on an axis against r
    GridSpec spec = small_survival_spec();
    auto vertices = overlay_polyline(spec, 50);
    REQUIRE(vertices.size() == 50);
    CHECK(vertices.front().first == 0.1);
    CHECK(vertices.back().first == 1.0);
    for (const auto& [r, lc] : vertices) CHECK(std::fabs(lc - critical_lambda(r)) <= 1e-12);

    // lambda on an axis against p, r fixed
    GridSpec lp = spec;
    lp.axis1 = {Param::Lambda, 0.3, 1.5, 4};
    lp.axis2 = {Param::P, 0.1, 1.0, 4};
    lp.fixed_name = Param::R;
    lp.fixed_value = 0.6;
    vertices = overlay_polyline(lp, 40);
    REQUIRE(vertices.size() == 40);
    for (const auto& [lc, p] : vertices)
        CHECK(std::fabs(lc - critical_lambda_mixed(0.6, p)) <= 1e-12);

    // (r, p) grid, lambda fixed: the contour of the mixed critical rate
    GridSpec rp = spec;
    rp.axis1 = {Param::R, 0.01, 1.0, 4};
    rp.axis2 = {Param::P, 0.01, 1.0, 4};
    rp.fixed_name = Param::Lambda;
    rp.fixed_value = 0.8;
    vertices = overlay_polyline(rp, 100);
    CHECK(vertices.size() < 100);  // small-r vertices leave p <= 1 and are dropped
    CHECK(vertices.size() > 50);
    for (const auto& [r, p] : vertices) {
        const double one_minus = 1.0 - 0.8 * (1.0 - r);
        CHECK(std::fabs(p - one_minus * one_minus / (4.0 * 0.8 * r)) <= 1e-12);
        CHECK(std::fabs(critical_lambda_mixed(r, p) - 0.8) <= 1e-9);
    }

    CHECK_THROWS_AS(overlay_polyline(spec, 1), std::invalid_argument);
}

TEST_CASE("phase svg is a self-contained heatmap") {
    const GridSpec spec = small_survival_spec();
    const auto cells = run_sweep(spec, 1);

    std::ostringstream with_overlay;
    emit_phase_svg(spec, cells, true, with_overlay);
    const std::string svg = with_overlay.str();
    CHECK(svg.rfind("<svg xmlns", 0) == 0);
    CHECK(svg.find("</svg>\n") != std::string::npos);
    CHECK(count_occurrences(svg, "<rect ") == 16 + 3);  // tiles + background + border + clip
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("clipPath") != std::string::npos);
    CHECK(svg.find(">r</text>") != std::string::npos);
    CHECK(svg.find(">lambda</text>") != std::string::npos);
    CHECK(svg.find("survival estimate, p = 1") != std::string::npos);
    CHECK(svg.find("4 x 4 grid, 300 reps per cell") != std::string::npos);

    std::ostringstream without_overlay;
    emit_phase_svg(spec, cells, false, without_overlay);
    CHECK(without_overlay.str().find("<polyline") == std::string::npos);

    std::vector<SweepCell> short_cells(cells.begin(), cells.end() - 1);
    std::ostringstream sink;
    CHECK_THROWS_AS(emit_phase_svg(spec, short_cells, true, sink), std::invalid_argument);
}

TEST_CASE("progeny sweeps normalize color by the largest mean") {
    GridSpec spec;
    spec.axis1 = {Param::Lambda, 0.05, 0.2, 2};
    spec.axis2 = {Param::R, 0.5, 1.0, 2};
    spec.estimator = Estimator::MeanProgeny;
    spec.per_cell_reps = 200;
    spec.master_seed = 6;
    const auto cells = run_sweep(spec, 1);
    REQUIRE(cells.size() == 4);
    for (const auto& cell : cells) {
        CHECK(cell.analytic_regime == Regime::Subcritical);
        CHECK(cell.estimate.mean >= 1.0);
        CHECK(cell.estimate.censored_fraction == 0.0);
    }
    std::ostringstream out;
    emit_phase_svg(spec, cells, false, out);
    CHECK(out.str().find("#ffd24a") != std::string::npos);  // the max cell maps to ramp top
    CHECK(out.str().find("#777777") == std::string::npos);
}

TEST_CASE("progeny sweeps honor the grid stop rule") {
    GridSpec spec;
    spec.axis1 = {Param::Lambda, 2.0, 2.0, 2};
    spec.axis2 = {Param::R, 0.05, 0.05, 2};
    spec.estimator = Estimator::MeanProgeny;
    spec.per_cell_reps = 100;
    spec.stop = StopRule{1e9, 1'000'000'000, 5};
    spec.master_seed = 7;
    const auto cells = run_sweep(spec, 1);
    for (const auto& cell : cells) {
        CHECK(cell.analytic_regime == Regime::Supercritical);
        CHECK(cell.estimate.aborted_fraction > 0.05);
        CHECK(cell.estimate.censored_fraction == 0.0);
        CHECK(cell.estimate.mean >= 1.0);
        CHECK(cell.estimate.mean <= 5.0);
    }
}
