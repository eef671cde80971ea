#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include <escapesim/escapesim.hpp>

using namespace escapesim;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

CmdResult run_cli(const std::string& args) {
    const std::string out_path = "cli_stdout_tmp.txt";
    const std::string err_path = "cli_stderr_tmp.txt";
    const std::string cmd =
        std::string(CLI_BIN) + " " + args + " > " + out_path + " 2> " + err_path;
    const int status = std::system(cmd.c_str());
    CmdResult res;
    if (WIFEXITED(status)) res.code = WEXITSTATUS(status);
    res.out = slurp(out_path);
    res.err = slurp(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return res;
}

/** key -> rest-of-line for the aligned "key value" text reports. */
std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const std::size_t split = line.find(' ');
        if (split == std::string::npos) continue;
        std::size_t value_at = line.find_first_not_of(' ', split);
        if (value_at == std::string::npos) continue;
        kv[line.substr(0, split)] = line.substr(value_at);
    }
    return kv;
}

std::string fmt9(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

}  // namespace

TEST_CASE("analytic text report covers the point summary") {
    const CmdResult res = run_cli("analytic --lambda 0.25 --r 1");
    REQUIRE(res.code == 0);
    const auto kv = parse_kv(res.out);
    CHECK(kv.at("lambda_c") == "0.25");
    CHECK(kv.at("regime") == "critical");
    CHECK(kv.at("mean_N") == "2");
    CHECK(kv.at("window_kind") == "empty_always_extinct");
    CHECK(kv.at("r_minus") == "none");

    const CmdResult super = run_cli("analytic --lambda 0.5 --r 0.2");
    REQUIRE(super.code == 0);
    const auto kv2 = parse_kv(super.out);
    CHECK(kv2.at("regime") == "supercritical");
    CHECK(kv2.at("mean_N") == "inf");
}

TEST_CASE("analytic json round trips against the library") {
    const CmdResult res = run_cli("analytic --lambda 0.3 --r 0.4 --p 0.7 --json");
    REQUIRE(res.code == 0);
    const auto js = nlohmann::json::parse(res.out);

    const AnalyticSummary summary = summarize(0.3, 0.4, 0.7);
    const MutationWindow window = mutation_window(0.3, 0.7);

    CHECK(js.at("lambda").get<double>() == 0.3);
    const auto& s = js.at("summary");
    CHECK(std::fabs(s.at("lambda_c").get<double>() - summary.lambda_c) <= 1e-12);
    CHECK(s.at("regime").get<std::string>() == to_string(summary.regime));
    CHECK(std::fabs(s.at("delta").get<double>() - summary.delta) <= 1e-12);
    REQUIRE(summary.alpha.has_value());
    CHECK(std::fabs(s.at("alpha").get<double>() - *summary.alpha) <= 1e-12);
    CHECK(std::fabs(s.at("beta").get<double>() - *summary.beta) <= 1e-12);
    CHECK(std::fabs(s.at("lambda_eff").get<double>() - summary.lambda_eff) <= 1e-12);
    CHECK(std::fabs(s.at("r_eff").get<double>() - summary.r_eff) <= 1e-12);
    REQUIRE(summary.mean_N.is_finite());
    CHECK(std::fabs(s.at("mean_N").get<double>() - summary.mean_N.value()) <= 1e-12);
    CHECK(std::fabs(s.at("mean_Nv").get<double>() - summary.mean_Nv.value()) <= 1e-12);
    CHECK(std::fabs(s.at("mean_S").get<double>() - summary.mean_S.value()) <= 1e-12);
    CHECK(std::fabs(s.at("mean_Np").get<double>() - summary.mean_Np.value()) <= 1e-12);

    const auto& w = js.at("window");
    CHECK(w.at("kind").get<std::string>() == to_string(window.kind));
    CHECK(w.at("r_minus").is_null() == !window.r_minus.has_value());

    // infinite means serialize as the string "inf"
    const CmdResult super = run_cli("analytic --lambda 0.5 --r 0.2 --json");
    REQUIRE(super.code == 0);
    const auto js2 = nlohmann::json::parse(super.out);
    CHECK(js2.at("summary").at("mean_N").get<std::string>() == "inf");
}

TEST_CASE("simulate is deterministic and writes traces") {
    const std::string args = "simulate --lambda 0.3 --r 0.5 --seed 7";
    const CmdResult a = run_cli(args);
    const CmdResult b = run_cli(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto kv = parse_kv(a.out);
    CHECK(kv.count("verdict") == 1);
    CHECK(kv.count("total_progeny_N") == 1);

    const CmdResult traced =
        run_cli("simulate --lambda 0.3 --r 0.5 --seed 9 --trace cli_trace_tmp.txt");
    REQUIRE(traced.code == 0);
    const std::string trace = slurp("cli_trace_tmp.txt");
    CHECK(trace.rfind("# time\tkind\tpathogen\ttype\n", 0) == 0);
    std::remove("cli_trace_tmp.txt");

    const CmdResult cond = run_cli("simulate --lambda 0.3 --r 0.5 --variant cond:0 --seed 1");
    REQUIRE(cond.code == 0);
    const auto kv_cond = parse_kv(cond.out);
    CHECK(kv_cond.at("verdict") == "extinct");
    CHECK(kv_cond.at("total_progeny_N") == "1");
    CHECK(kv_cond.at("extinction_time") == "0");

    CHECK(run_cli("simulate --lambda 0.5 --r 0.5 --variant star --seed 2").code == 0);
    CHECK(run_cli("simulate --lambda 0.3 --r 0.5 --seed random").code == 0);
}

TEST_CASE("estimate text matches an in-process run") {
    const CmdResult res =
        run_cli("estimate --target survival --lambda 0.5 --r 0.5 --reps 400 --seed 3");
    REQUIRE(res.code == 0);
    const auto kv = parse_kv(res.out);
    CHECK(kv.at("target") == "survival");

    ModelParams params;
    params.lambda = 0.5;
    params.r = 0.5;
    const Estimate est = estimate_survival(params, StopRule{}, 400, 3);
    CHECK(kv.at("survival_mean") == fmt9(est.mean));
    CHECK(kv.at("survival_n_reps") == "400");

    const CmdResult js_res =
        run_cli("estimate --target survival --lambda 0.5 --r 0.5 --reps 400 --seed 3 --json");
    REQUIRE(js_res.code == 0);
    const auto js = nlohmann::json::parse(js_res.out);
    CHECK(std::fabs(js.at("survival").at("mean").get<double>() - est.mean) <= 1e-12);
    CHECK(js.at("survival").at("n_reps").get<std::uint64_t>() == 400);
}

TEST_CASE("estimate exposes the paired experiments") {
    const CmdResult pair = run_cli(
        "estimate --target extinction-pair --lambda 0.5 --r 0.5 --reps 300 --seed 4 --json");
    REQUIRE(pair.code == 0);
    const auto js = nlohmann::json::parse(pair.out);
    CHECK(js.at("q").at("mean").get<double>() > 0.0);
    CHECK(js.at("q_star").at("mean").get<double>() > 0.0);
    CHECK(js.count("residual") == 1);

    const CmdResult thin = run_cli(
        "estimate --target thinning --lambda 0.5 --r 0.8 --p 0.5 --reps 300 --seed 4 --json");
    REQUIRE(thin.code == 0);
    const auto js2 = nlohmann::json::parse(thin.out);
    CHECK(js2.at("ks_pvalue").get<double>() >= 0.0);

    const CmdResult cond = run_cli(
        "estimate --target conditioned:1 --lambda 0.1 --r 1 --reps 300 --seed 4");
    REQUIRE(cond.code == 0);
    CHECK(parse_kv(cond.out).count("Y_mean") == 1);
}

TEST_CASE("sweep subcommand reproduces the library artifacts byte for byte") {
    const CmdResult res = run_cli(
        "sweep --grid lambda:0.1:0.6:3,r:0.5:1:2 --estimator survival --reps 60 --seed 11 "
        "--out-csv cli_sweep_tmp.csv --out-svg cli_sweep_tmp.svg --overlay");
    REQUIRE(res.code == 0);
    CHECK(res.out.find("wrote 6 cells to cli_sweep_tmp.csv") != std::string::npos);
    CHECK(res.out.find("wrote heatmap to cli_sweep_tmp.svg") != std::string::npos);

    GridSpec spec;
    spec.axis1 = {Param::Lambda, 0.1, 0.6, 3};
    spec.axis2 = {Param::R, 0.5, 1.0, 2};
    spec.fixed_name = Param::P;
    spec.fixed_value = 1.0;
    spec.estimator = Estimator::Survival;
    spec.per_cell_reps = 60;
    spec.master_seed = 11;
    const auto cells = run_sweep(spec, 1);
    std::ostringstream expected_csv;
    emit_csv(spec, cells, expected_csv);
    CHECK(slurp("cli_sweep_tmp.csv") == expected_csv.str());

    const std::string svg = slurp("cli_sweep_tmp.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("<polyline") != std::string::npos);
    std::remove("cli_sweep_tmp.csv");
    std::remove("cli_sweep_tmp.svg");
}

TEST_CASE("argument and domain failures exit with code 2") {
    CHECK(run_cli("analytic --r 0.5").code == 2);               // missing required option
    CHECK(run_cli("analytic --lambda 0 --r 0.5").code == 2);    // lambda outside the domain
    CHECK(run_cli("simulate --lambda 0.3 --r 2").code == 2);    // r outside the domain
    CHECK(run_cli("simulate --lambda 0.3 --r 1 --seed 12x").code == 2);
    CHECK(run_cli("simulate --lambda 0.3 --r 1 --variant bogus").code == 2);
    CHECK(run_cli("estimate --target bogus --lambda 0.3 --r 1").code == 2);
    CHECK(run_cli("estimate --target conditioned:1 --lambda 0.3 --r 1").code == 2);
    CHECK(run_cli("sweep --grid lambda:0:1:3,lambda:0:1:3 --out-csv x_tmp.csv").code == 2);
    CHECK(run_cli("sweep --grid r:0.1:1:3,p:0.1:1:3 --out-csv x_tmp.csv").code == 2);
    CHECK(run_cli("").code == 2);       // a subcommand is required
    CHECK(run_cli("bogus").code == 2);  // unknown subcommand

    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("simulate --help").code == 0);

    const CmdResult err = run_cli("analytic --lambda 0 --r 0.5");
    CHECK(err.err.find("error:") != std::string::npos);
}
