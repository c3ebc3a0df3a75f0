#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aoii/experiments.hpp"
#include "helpers.hpp"

using namespace aoii;
namespace fs = std::filesystem;
namespace oracle = testing_oracles;

namespace {

json base_config(const char* mode) {
    json j;
    j["mode"] = mode;
    j["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    j["mu"] = 1.0;
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream f(p);
    std::string line;
    std::getline(f, line);
    return line;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("aoii_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

} // namespace

TEST_CASE("config parsing and validation") {
    json j = base_config("solve");
    j["budget"] = 0.5;
    const ExperimentConfig cfg = ExperimentConfig::from_json(j);
    CHECK(cfg.mode == RunMode::Solve);
    CHECK(cfg.budget == 0.5);
    CHECK(cfg.cycles == 100000);
    CHECK(cfg.seed == 1);

    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"mode", "warp"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(base_config("solve")), ConfigError);

    json nonsquare = base_config("solve");
    nonsquare["generator"] = {{-1.0, 1.0}};
    nonsquare["budget"] = 0.5;
    CHECK_THROWS_AS(ExperimentConfig::from_json(nonsquare), ConfigError);

    json sim = base_config("simulate");
    CHECK_THROWS_AS(ExperimentConfig::from_json(sim), ConfigError);  // policy missing
    sim["policy"] = {{"type", "poisson"}, {"gamma", 0.5}};
    CHECK(ExperimentConfig::from_json(sim).policy->kind == PolicyKind::Poisson);
    sim["policy"] = {{"type", "sigmoid"}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(sim), ConfigError);

    CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("shipped config fixtures parse") {
    const fs::path dir = AOII_CONFIG_DIR;
    int count = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        CHECK_NOTHROW(ExperimentConfig::from_file(entry.path().string()));
        ++count;
    }
    CHECK(count >= 7);
}

TEST_CASE("solve record and budget contract") {
    TempDir tmp;
    json j = base_config("solve");
    j["budget"] = 0.3;
    j["out"] = (tmp.path / "solve.json").string();
    const json rec = run_solve(ExperimentConfig::from_json(j));
    CHECK(rec["tau"].size() == 2);
    const double rate = rec["rate"].get<double>();
    if (rec["status"] == "budget_slack_at_zero_lambda")
        CHECK(rate <= 0.3);
    else
        CHECK(std::abs(rate - 0.3) <= 1e-2);
    CHECK(fs::exists(tmp.path / "solve.json"));

    // huge budget: immediate zero-threshold answer
    json j2 = base_config("solve");
    j2["budget"] = 50.0;
    const json rec2 = run_solve(ExperimentConfig::from_json(j2));
    CHECK(rec2["status"] == "budget_slack_at_zero_lambda");
    CHECK(rec2["lambda"].get<double>() == 0.0);
}

TEST_CASE("simulate record with trace export") {
    TempDir tmp;
    json j = base_config("simulate");
    j["policy"] = {{"type", "thresholds"}, {"tau", {1.0, 2.0}}};
    j["cycles"] = 2000;
    j["trace_cycles"] = 10;
    j["seed"] = 5;
    j["out"] = (tmp.path / "sim.json").string();
    j["trace_out"] = (tmp.path / "sim.trace").string();
    const json rec = run_simulate(ExperimentConfig::from_json(j));
    CHECK(rec["cycles_run"] == 2000);
    CHECK(rec["maoii_hat"].get<double>() > 0.0);
    const std::string trace = slurp(tmp.path / "sim.trace");
    CHECK(trace.find("sync_") != std::string::npos);
    CHECK(trace.find("source_jump:") != std::string::npos);
}

TEST_CASE("contour grid and optima") {
    TempDir tmp;
    json j = base_config("contour");
    j["grid"] = {{"tau_max", 2.0}, {"step", 0.1}};
    j["budgets"] = {0.3};
    j["out"] = (tmp.path / "contour.csv").string();
    const ContourResult res = run_contour(ExperimentConfig::from_json(j));
    CHECK(res.grid_rows.size() == 21 * 21);

    // the sampling rate cannot rise when a threshold grows
    for (int i2 = 0; i2 < 21; i2 += 5) {
        double prev = std::numeric_limits<double>::infinity();
        for (int i1 = 0; i1 < 21; ++i1) {
            const auto& row = res.grid_rows[static_cast<std::size_t>(i1) * 21 + i2];
            CHECK(row[3] <= prev + 1e-9);
            prev = row[3];
        }
    }

    REQUIRE(res.optima.size() == 2);
    CHECK(res.optima[0].method == "oracle");
    CHECK(res.optima[1].method == "csmdp");
    CHECK(res.optima[0].rate <= 0.3);
    CHECK(res.optima[1].maoii ==
          Catch::Approx(res.optima[0].maoii).epsilon(0.05));  // coarse grid

    CHECK(fs::exists(tmp.path / "contour.csv"));
    CHECK(fs::exists(tmp.path / "contour_optima.csv"));
    CHECK(first_line(tmp.path / "contour.csv") == "tau1,tau2,maoii,rate");

    // binary sources only
    json j3 = j;
    j3["generator"] = {{-1.025, 1.0, 0.025}, {0.05, -0.75, 0.7}, {0.4, 0.01, -0.41}};
    CHECK_THROWS_AS(run_contour(ExperimentConfig::from_json(j3)), NotBinary);
}

TEST_CASE("contour output is byte-identical across reruns and thread counts") {
    TempDir tmp;
    json j = base_config("contour");
    j["grid"] = {{"tau_max", 1.0}, {"step", 0.25}};
    j["budgets"] = {0.3};
    j["out"] = (tmp.path / "a.csv").string();
    run_contour(ExperimentConfig::from_json(j));
    j["out"] = (tmp.path / "b.csv").string();
    j["jobs"] = 2;
    run_contour(ExperimentConfig::from_json(j));
    CHECK(slurp(tmp.path / "a.csv") == slurp(tmp.path / "b.csv"));
}

TEST_CASE("budget sweep orders the policies") {
    TempDir tmp;
    json j;
    j["mode"] = "sweep_budget";
    j["generator"] = {{-1.025, 1.0, 0.025}, {0.05, -0.75, 0.7}, {0.4, 0.01, -0.41}};
    j["mu_list"] = {1.0};
    j["budgets"] = {0.25};
    j["cycles"] = 30000;
    j["seed"] = 17;
    j["grid"] = {{"tau_max", 6.0}, {"step", 0.02}};
    j["out"] = (tmp.path / "sweep.csv").string();
    const std::vector<SweepRow> rows = run_sweep_budget(ExperimentConfig::from_json(j));
    REQUIRE(rows.size() == 3);
    double csmdp = 0.0, single = 0.0, poisson = 0.0;
    for (const SweepRow& r : rows) {
        CHECK(r.rate_sim <= 0.25 * 1.2);  // sim noise on top of the budget
        if (r.policy == "csmdp") csmdp = r.maoii_analytic;
        if (r.policy == "single_threshold") single = r.maoii_analytic;
        if (r.policy == "poisson") poisson = r.maoii_analytic;
        CHECK(std::abs(r.maoii_sim - r.maoii_analytic) / r.maoii_analytic < 0.05);
    }
    CHECK(csmdp <= single * 1.001);
    CHECK(csmdp <= poisson * 1.001);

    CHECK(first_line(tmp.path / "sweep.csv") ==
          "mu,budget,policy,maoii_analytic,maoii_sim,rate_sim");
}

TEST_CASE("sweep rows are independent of the worker count") {
    json j;
    j["mode"] = "sweep_budget";
    j["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    j["mu_list"] = {1.0};
    j["budgets"] = {0.3, 0.45};
    j["cycles"] = 5000;
    j["seed"] = 23;
    const auto rows1 = run_sweep_budget(ExperimentConfig::from_json(j));
    j["jobs"] = 2;
    const auto rows2 = run_sweep_budget(ExperimentConfig::from_json(j));
    REQUIRE(rows1.size() == rows2.size());
    for (std::size_t i = 0; i < rows1.size(); ++i) {
        CHECK(rows1[i].maoii_sim == rows2[i].maoii_sim);
        CHECK(rows1[i].rate_sim == rows2[i].rate_sim);
    }
}

TEST_CASE("validation suite passes on the reference sources") {
    for (const Eigen::MatrixXd& q : {oracle::q1(), oracle::q2()}) {
        json j = base_config("validate");
        j["generator"] = json::array();
        for (Eigen::Index r = 0; r < q.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < q.cols(); ++c) row.push_back(q(r, c));
            j["generator"].push_back(row);
        }
        j["cycles"] = 30000;
        const ValidationReport report = run_validate(ExperimentConfig::from_json(j));
        for (const auto& check : report.checks) {
            INFO(check.name << ": " << check.detail);
            CHECK(check.pass);
        }
        CHECK(report.all_pass());
    }
}

TEST_CASE("validation flags a corrupted generator") {
    json j = base_config("validate");
    j["generator"] = {{-0.6, 0.6}, {-0.75, 0.75}};
    const ValidationReport report = run_validate(ExperimentConfig::from_json(j));
    CHECK_FALSE(report.all_pass());
    REQUIRE(!report.checks.empty());
    CHECK(report.checks.front().name == "generator_valid");
    CHECK_FALSE(report.checks.front().pass);
    CHECK(report.checks.front().detail.find("NegativeOffDiagonal") != std::string::npos);
}

TEST_CASE("scaling runs produce timings") {
    TempDir tmp;
    json j;
    j["mode"] = "scaling";
    j["seed"] = 5;
    j["scaling"] = {{"sizes", {4, 8}}, {"lambda", 1.0}, {"passes", 1}};
    j["out"] = (tmp.path / "scaling.csv").string();
    const auto rows = run_scaling(ExperimentConfig::from_json(j));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].n == 4);
    CHECK(rows[1].n == 8);
    CHECK(rows[0].seconds_per_policy_iteration > 0.0);
    CHECK(first_line(tmp.path / "scaling.csv") == "n,seconds_per_policy_iteration");
}

TEST_CASE("random scaling sources are valid generators") {
    for (int n : {4, 16}) {
        const GeneratorMatrix g = random_generator(n, 7);
        CHECK(g.size() == n);
        for (int i = 0; i < n; ++i) CHECK(g.sigma()(i) == Catch::Approx(1.0).margin(1e-12));
    }
    // seeded: same seed, same matrix
    CHECK(random_generator(8, 3).q() == random_generator(8, 3).q());
    CHECK(random_generator(8, 3).q() != random_generator(8, 4).q());
}

TEST_CASE("output directory override") {
    TempDir tmp;
    setenv("AOII_OUT_DIR", tmp.path.c_str(), 1);
    json j = base_config("solve");
    j["budget"] = 2.0;
    j["out"] = "nested/solve.json";
    run_solve(ExperimentConfig::from_json(j));
    unsetenv("AOII_OUT_DIR");
    CHECK(fs::exists(tmp.path / "nested" / "solve.json"));
}

TEST_CASE("nine-digit float formatting") {
    CHECK(detail::fmt9(0.299500123456789) == "0.299500123");
    CHECK(detail::fmt9(1.0) == "1");
    CHECK(detail::fmt9(123456789012.0) == "1.23456789e+11");
    CHECK(detail::round9(0.299500123456789) == 0.299500123);
}
