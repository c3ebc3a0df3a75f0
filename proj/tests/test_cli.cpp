#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

// End-to-end checks of the installed command-line surface; the binary path
// comes from the build system.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("aoii_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

int run(const std::string& args) {
    const std::string cmd = std::string(AOII_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path write_config(const TempDir& tmp, const char* name, const json& j) {
    const fs::path p = tmp.path / name;
    std::ofstream f(p);
    f << j.dump(2);
    return p;
}

} // namespace

TEST_CASE("solve subcommand produces a record") {
    TempDir tmp;
    json cfg;
    cfg["mode"] = "solve";
    cfg["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    cfg["mu"] = 1.0;
    cfg["budget"] = 0.3;
    cfg["out"] = (tmp.path / "solve.json").string();
    const fs::path cfg_path = write_config(tmp, "solve_cfg.json", cfg);

    CHECK(run("solve --config " + cfg_path.string()) == 0);
    REQUIRE(fs::exists(tmp.path / "solve.json"));
    json rec;
    std::ifstream(tmp.path / "solve.json") >> rec;
    CHECK(rec.contains("tau"));
    CHECK(rec.contains("maoii"));
    const double rate = rec["rate"].get<double>();
    CHECK(rate <= 0.3 + 1e-2);
}

TEST_CASE("validate subcommand reports failure through the exit code") {
    TempDir tmp;
    json good;
    good["mode"] = "validate";
    good["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    good["mu"] = 1.0;
    good["cycles"] = 20000;
    const fs::path good_path = write_config(tmp, "good.json", good);
    CHECK(run("validate --config " + good_path.string()) == 0);

    json bad = good;
    bad["generator"] = {{-0.6, 0.6}, {-0.75, 0.75}};
    const fs::path bad_path = write_config(tmp, "bad.json", bad);
    CHECK(run("validate --config " + bad_path.string()) == 1);
}

TEST_CASE("config problems exit with code 2") {
    TempDir tmp;
    CHECK(run("solve --config /nonexistent.json") == 2);

    json wrong_mode;
    wrong_mode["mode"] = "simulate";
    wrong_mode["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    wrong_mode["policy"] = {{"type", "poisson"}, {"gamma", 1.0}};
    const fs::path p = write_config(tmp, "sim.json", wrong_mode);
    CHECK(run("solve --config " + p.string()) == 2);

    std::ofstream(tmp.path / "broken.json") << "{not json";
    CHECK(run("solve --config " + (tmp.path / "broken.json").string()) == 2);
}

TEST_CASE("sweep and simulate write the documented artifacts") {
    TempDir tmp;
    json sweep;
    sweep["mode"] = "sweep_budget";
    sweep["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    sweep["mu_list"] = {1.0};
    sweep["budgets"] = {0.4};
    sweep["cycles"] = 5000;
    sweep["out"] = (tmp.path / "sweep.csv").string();
    const fs::path sp = write_config(tmp, "sweep.json", sweep);
    CHECK(run("sweep-budget --config " + sp.string() + " --jobs 2") == 0);
    std::ifstream csv(tmp.path / "sweep.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "mu,budget,policy,maoii_analytic,maoii_sim,rate_sim");
    int lines = 0;
    for (std::string line; std::getline(csv, line);) ++lines;
    CHECK(lines == 3);

    json sim;
    sim["mode"] = "simulate";
    sim["generator"] = {{-0.6, 0.6}, {0.75, -0.75}};
    sim["mu"] = 1.0;
    sim["policy"] = {{"type", "single_threshold"}, {"tau", 0.5}};
    sim["cycles"] = 2000;
    sim["out"] = (tmp.path / "sim.json").string();
    const fs::path simp = write_config(tmp, "sim_cfg.json", sim);
    CHECK(run("simulate --config " + simp.string() + " --seed 9") == 0);
    CHECK(fs::exists(tmp.path / "sim.json"));
}

TEST_CASE("malformed invocations are rejected") {
    CHECK(run("") != 0);
    CHECK(run("frobnicate --config x.json") != 0);
    CHECK(run("solve") != 0);  // --config is required
}
