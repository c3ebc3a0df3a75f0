#pragma once

// Batch experiment front-end: JSON configs in, CSV/JSON artifacts out.
// One config describes one reproducible experiment; numeric output is
// formatted to 9 significant digits so reruns diff clean.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aoii/cycle_model.hpp"
#include "aoii/errors.hpp"
#include "aoii/generator.hpp"
#include "aoii/rng.hpp"
#include "aoii/simulator.hpp"
#include "aoii/solver.hpp"

namespace aoii {

using nlohmann::json;

enum class RunMode { Solve, Simulate, SweepBudget, Contour, Validate, Scaling };

struct GridSpec {
    double tau_max = 5.0;
    double step = 0.05;
};

struct ScalingSpec {
    std::vector<int> sizes{16, 32, 64};
    double lambda = 1.0;
    int passes = 1;  ///< repeated solves; the per-iteration median is reported
};

struct ExperimentConfig {
    RunMode mode = RunMode::Solve;
    Eigen::MatrixXd generator;  ///< raw; validated where a run needs it
    double mu = 1.0;
    std::vector<double> mu_list;
    double budget = 0.0;
    std::vector<double> budgets;
    std::optional<SimPolicy> policy;
    long cycles = 100000;
    std::uint64_t seed = 1;
    long warmup_cycles = 0;
    long trace_cycles = 0;
    std::string trace_out;
    GridSpec grid;
    SolverConfig solver;
    ScalingSpec scaling;
    int jobs = 1;
    std::string out;

    static ExperimentConfig from_json(const json& j);
    static ExperimentConfig from_file(const std::string& path);
};

namespace detail {

inline RunMode parse_mode(const std::string& s) {
    if (s == "solve") return RunMode::Solve;
    if (s == "simulate") return RunMode::Simulate;
    if (s == "sweep_budget") return RunMode::SweepBudget;
    if (s == "contour") return RunMode::Contour;
    if (s == "validate") return RunMode::Validate;
    if (s == "scaling") return RunMode::Scaling;
    throw ConfigError("unknown mode '" + s + "'");
}

inline Eigen::MatrixXd parse_matrix(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("generator must be a non-empty matrix");
    const std::size_t n = j.size();
    Eigen::MatrixXd q(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        if (!j[r].is_array() || j[r].size() != n)
            throw ConfigError("generator must be square");
        for (std::size_t c = 0; c < n; ++c) q(r, c) = j[r][c].get<double>();
    }
    return q;
}

inline SimPolicy parse_policy(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "thresholds") {
        const auto vals = j.at("tau").get<std::vector<double>>();
        Eigen::VectorXd tau(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i)
            tau(static_cast<Eigen::Index>(i)) = vals[i];
        return SimPolicy::thresholds(tau);
    }
    if (type == "single_threshold") return SimPolicy::single_threshold(j.at("tau").get<double>());
    if (type == "poisson") return SimPolicy::poisson(j.at("gamma").get<double>());
    throw ConfigError("unknown policy type '" + type + "'");
}

/// 9 significant digits, deterministic across reruns.
inline std::string fmt9(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

/// Round-trips through the 9-digit text form so JSON numbers match the CSVs.
inline double round9(double x) { return std::strtod(fmt9(x).c_str(), nullptr); }

/// Output paths: relative ones land under $AOII_OUT_DIR when it is set.
inline std::filesystem::path resolve_out(const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_relative()) {
        if (const char* base = std::getenv("AOII_OUT_DIR")) p = std::filesystem::path(base) / p;
    }
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    return p;
}

struct CsvWriter {
    explicit CsvWriter(std::vector<std::string> header) : columns(std::move(header)) {}
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        if (row.size() != columns.size()) throw Error("csv row width mismatch");
        rows.push_back(std::move(row));
    }
    void write(const std::filesystem::path& path) const {
        std::ofstream f(path);
        if (!f) throw Error("cannot open " + path.string());
        for (std::size_t i = 0; i < columns.size(); ++i)
            f << columns[i] << (i + 1 < columns.size() ? ',' : '\n');
        for (const auto& row : rows)
            for (std::size_t i = 0; i < row.size(); ++i)
                f << row[i] << (i + 1 < row.size() ? ',' : '\n');
        if (!f) throw Error("failed writing " + path.string());
    }
};

/// Adaptive Simpson quadrature for the validation suite.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-9, int depth = 40) {
    const auto simpson = [&](double lo, double hi) {
        return (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    };
    const std::function<double(double, double, double, int)> rec =
        [&](double lo, double hi, double whole, int d) -> double {
        const double mid = 0.5 * (lo + hi);
        const double left = simpson(lo, mid);
        const double right = simpson(mid, hi);
        if (d <= 0 || std::abs(left + right - whole) < 15.0 * tol)
            return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, left, d - 1) + rec(mid, hi, right, d - 1);
    };
    return rec(a, b, simpson(a, b), depth);
}

inline void parallel_for(long count, int jobs, const std::function<void(long)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    const int n_workers = static_cast<int>(std::min<long>(jobs, count));
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            long i;
            while ((i = next.fetch_add(1)) < count) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig cfg;
    try {
        cfg.mode = detail::parse_mode(j.at("mode").get<std::string>());
        if (j.contains("generator")) cfg.generator = detail::parse_matrix(j["generator"]);
        cfg.mu = j.value("mu", 1.0);
        if (j.contains("mu_list")) cfg.mu_list = j["mu_list"].get<std::vector<double>>();
        if (j.contains("budget")) cfg.budget = j["budget"].get<double>();
        if (j.contains("budgets")) cfg.budgets = j["budgets"].get<std::vector<double>>();
        if (j.contains("policy")) cfg.policy = detail::parse_policy(j["policy"]);
        cfg.cycles = j.value("cycles", 100000L);
        cfg.seed = j.value("seed", std::uint64_t{1});
        cfg.warmup_cycles = j.value("warmup_cycles", 0L);
        cfg.trace_cycles = j.value("trace_cycles", 0L);
        cfg.trace_out = j.value("trace_out", std::string{});
        if (j.contains("grid")) {
            cfg.grid.tau_max = j["grid"].value("tau_max", 5.0);
            cfg.grid.step = j["grid"].value("step", 0.05);
        }
        if (j.contains("solver")) {
            const json& s = j["solver"];
            cfg.solver.eps_eta = s.value("eps_eta", cfg.solver.eps_eta);
            cfg.solver.eps_lambda = s.value("eps_lambda", cfg.solver.eps_lambda);
            cfg.solver.eps_tau = s.value("eps_tau", cfg.solver.eps_tau);
            cfg.solver.max_policy_iters = s.value("max_policy_iters", cfg.solver.max_policy_iters);
            cfg.solver.max_bisect_iters = s.value("max_bisect_iters", cfg.solver.max_bisect_iters);
            cfg.solver.tau_search_expansion =
                s.value("tau_search_expansion", cfg.solver.tau_search_expansion);
        }
        if (j.contains("scaling")) {
            const json& s = j["scaling"];
            if (s.contains("sizes")) cfg.scaling.sizes = s["sizes"].get<std::vector<int>>();
            cfg.scaling.lambda = s.value("lambda", cfg.scaling.lambda);
            cfg.scaling.passes = s.value("passes", cfg.scaling.passes);
        }
        cfg.jobs = j.value("jobs", 1);
        cfg.out = j.value("out", std::string{});
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }

    // mode-specific requirements
    const auto require = [&](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("config: ") + what);
    };
    const bool has_gen = cfg.generator.size() > 0;
    switch (cfg.mode) {
        case RunMode::Solve:
            require(has_gen, "solve needs a generator");
            require(cfg.budget > 0.0, "solve needs budget > 0");
            break;
        case RunMode::Simulate:
            require(has_gen, "simulate needs a generator");
            require(cfg.policy.has_value(), "simulate needs a policy");
            require(cfg.cycles >= 1, "simulate needs cycles >= 1");
            break;
        case RunMode::SweepBudget:
            require(has_gen, "sweep_budget needs a generator");
            require(!cfg.budgets.empty(), "sweep_budget needs a budget grid");
            for (double b : cfg.budgets) require(b > 0.0, "budgets must be positive");
            break;
        case RunMode::Contour:
            require(has_gen, "contour needs a generator");
            require(cfg.grid.step > 0.0 && cfg.grid.tau_max >= 0.0, "contour needs a grid");
            break;
        case RunMode::Validate:
            require(has_gen, "validate needs a generator");
            break;
        case RunMode::Scaling:
            require(!cfg.scaling.sizes.empty(), "scaling needs sizes");
            for (int n : cfg.scaling.sizes) require(n >= 2, "sizes must be >= 2");
            break;
    }
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    return from_json(j);
}

// -- solve -------------------------------------------------------------------

inline json solution_record(const PolicySolution& sol) {
    json rec;
    rec["tau"] = json::array();
    for (Eigen::Index i = 0; i < sol.tau.size(); ++i)
        rec["tau"].push_back(detail::round9(sol.tau(i)));
    rec["lambda"] = detail::round9(sol.lambda);
    rec["eta"] = detail::round9(sol.eta);
    rec["maoii"] = detail::round9(sol.maoii);
    rec["rate"] = detail::round9(sol.rate);
    rec["policy_iterations"] = sol.policy_iterations;
    rec["bisect_iterations"] = sol.bisect_iterations;
    rec["status"] = to_string(sol.status);
    return rec;
}

inline json run_solve(const ExperimentConfig& cfg) {
    const GeneratorMatrix g = validate_generator(cfg.generator);
    const PolicySolution sol = lagrange_bisection(g, cfg.mu, cfg.budget, cfg.solver);
    json rec = solution_record(sol);
    rec["mu"] = detail::round9(cfg.mu);
    rec["budget"] = detail::round9(cfg.budget);
    if (!cfg.out.empty()) {
        std::ofstream f(detail::resolve_out(cfg.out));
        f << rec.dump(2) << '\n';
    }
    return rec;
}

// -- simulate ----------------------------------------------------------------

inline json run_simulate(const ExperimentConfig& cfg) {
    SimConfig sim{validate_generator(cfg.generator), cfg.mu, *cfg.policy};
    sim.cycles = cfg.cycles;
    sim.seed = cfg.seed;
    sim.warmup_cycles = cfg.warmup_cycles;
    sim.trace_cycles = cfg.trace_cycles;
    const SimResult res = simulate(sim);

    json rec;
    rec["maoii_hat"] = detail::round9(res.maoii_hat);
    rec["rate_hat"] = detail::round9(res.rate_hat);
    rec["stderr_maoii"] = detail::round9(res.stderr_maoii);
    rec["stderr_rate"] = detail::round9(res.stderr_rate);
    rec["cycles_run"] = res.cycles_run;
    rec["transmissions"] = res.transmissions;
    rec["preemptions"] = res.preemptions;
    if (!cfg.out.empty()) {
        std::ofstream f(detail::resolve_out(cfg.out));
        f << rec.dump(2) << '\n';
    }
    if (!cfg.trace_out.empty() && cfg.trace_cycles > 0) {
        std::ofstream f(detail::resolve_out(cfg.trace_out));
        for (const TraceEvent& e : res.trace.events) {
            f << detail::fmt9(e.time) << ',' << to_string(e.kind);
            if (e.kind == EventKind::SourceJump)
                f << ':' << e.from_state << "->" << e.to_state;
            else if (e.to_state > 0)
                f << ':' << e.to_state;
            f << ',' << detail::fmt9(e.aoii_after) << '\n';
        }
    }
    return rec;
}

// -- contour -----------------------------------------------------------------

struct ContourResult {
    std::vector<std::array<double, 4>> grid_rows;  ///< tau1, tau2, maoii, rate
    struct Optimum {
        double budget;
        std::string method;
        Eigen::VectorXd tau;
        double maoii;
        double rate;
    };
    std::vector<Optimum> optima;
};

inline ContourResult run_contour(const ExperimentConfig& cfg) {
    const GeneratorMatrix g = validate_generator(cfg.generator);
    if (g.size() != 2) throw NotBinary("contour mode needs a binary source");

    const int m = static_cast<int>(std::floor(cfg.grid.tau_max / cfg.grid.step + 1e-9)) + 1;
    std::vector<std::vector<CycleModel>> axis(2);
    for (int j = 1; j <= 2; ++j) {
        CycleWorkspace w(g, j, cfg.mu);
        axis[j - 1].reserve(m);
        for (int i = 0; i < m; ++i) axis[j - 1].push_back(w.eval(i * cfg.grid.step));
    }

    ContourResult out;
    out.grid_rows.resize(static_cast<std::size_t>(m) * m);
    detail::parallel_for(static_cast<long>(m) * m, cfg.jobs, [&](long idx) {
        const int i1 = static_cast<int>(idx / m);
        const int i2 = static_cast<int>(idx % m);
        const SyncChain sc = aggregate_chain({axis[0][i1], axis[1][i2]});
        out.grid_rows[static_cast<std::size_t>(idx)] = {i1 * cfg.grid.step, i2 * cfg.grid.step,
                                                        sc.maoii, sc.rate};
    });

    for (double b : cfg.budgets) {
        const std::array<double, 4>* best = nullptr;
        for (const auto& row : out.grid_rows)
            if (row[3] <= b && (!best || row[2] < (*best)[2])) best = &row;
        if (best) {
            Eigen::VectorXd tau(2);
            tau << (*best)[0], (*best)[1];
            out.optima.push_back({b, "oracle", tau, (*best)[2], (*best)[3]});
        }
        const PolicySolution sol = lagrange_bisection(g, cfg.mu, b, cfg.solver);
        out.optima.push_back({b, "csmdp", sol.tau, sol.maoii, sol.rate});
    }

    if (!cfg.out.empty()) {
        detail::CsvWriter grid_csv({"tau1", "tau2", "maoii", "rate"});
        for (const auto& row : out.grid_rows)
            grid_csv.add({detail::fmt9(row[0]), detail::fmt9(row[1]), detail::fmt9(row[2]),
                          detail::fmt9(row[3])});
        const std::filesystem::path main_path = detail::resolve_out(cfg.out);
        grid_csv.write(main_path);

        detail::CsvWriter opt_csv({"budget", "method", "tau1", "tau2", "maoii", "rate"});
        for (const auto& o : out.optima)
            opt_csv.add({detail::fmt9(o.budget), o.method, detail::fmt9(o.tau(0)),
                         detail::fmt9(o.tau(1)), detail::fmt9(o.maoii), detail::fmt9(o.rate)});
        std::filesystem::path opt_path = main_path;
        opt_path.replace_filename(main_path.stem().string() + "_optima" +
                                  main_path.extension().string());
        opt_csv.write(opt_path);
    }
    return out;
}

// -- budget sweep --------------------------------------------------------------

/// Best shared threshold under the budget, by exhaustive scan of the grid;
/// the range doubles until a feasible point appears.
struct SingleThresholdResult {
    double tau = 0.0;
    double maoii = 0.0;
    double rate = 0.0;
};

inline SingleThresholdResult single_threshold_search(const GeneratorMatrix& g, double mu,
                                                     double b, const GridSpec& grid) {
    std::vector<CycleWorkspace> ws;
    for (int j = 1; j <= g.size(); ++j) ws.emplace_back(g, j, mu);
    const double cap = tau_cap(g);
    double hi = grid.tau_max;
    for (int attempt = 0; attempt < 24; ++attempt) {
        const int m = static_cast<int>(std::floor(hi / grid.step + 1e-9)) + 1;
        bool found = false;
        SingleThresholdResult best;
        best.maoii = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            const double t = i * grid.step;
            std::vector<CycleModel> cycles;
            cycles.reserve(ws.size());
            for (auto& w : ws) cycles.push_back(w.eval(t));
            SyncChain sc;
            try {
                sc = aggregate_chain(cycles);
            } catch (const SingularChain&) {
                continue;  // saturated everywhere: no unique stationary vector
            }
            if (sc.rate <= b && sc.maoii < best.maoii) {
                found = true;
                best = {t, sc.maoii, sc.rate};
            }
        }
        if (found) return best;
        if (hi >= cap) break;
        hi = std::min(cap, 2.0 * hi);
    }
    throw InfeasibleBudget("no shared threshold meets rate <= " + std::to_string(b));
}

struct SweepRow {
    double mu;
    double budget;
    std::string policy;
    double maoii_analytic;
    double maoii_sim;
    double rate_sim;
};

inline std::vector<SweepRow> run_sweep_budget(const ExperimentConfig& cfg) {
    const GeneratorMatrix g = validate_generator(cfg.generator);
    const std::vector<double> mus = cfg.mu_list.empty() ? std::vector<double>{cfg.mu}
                                                        : cfg.mu_list;
    struct Task {
        double mu;
        double b;
        int policy;  // 0 csmdp, 1 single_threshold, 2 poisson
    };
    std::vector<Task> tasks;
    for (double mu : mus)
        for (double b : cfg.budgets)
            for (int p = 0; p < 3; ++p) tasks.push_back({mu, b, p});

    std::vector<SweepRow> rows(tasks.size());
    detail::parallel_for(static_cast<long>(tasks.size()), cfg.jobs, [&](long i) {
        const Task& t = tasks[static_cast<std::size_t>(i)];
        SimConfig sim{g, t.mu, SimPolicy::thresholds(Eigen::VectorXd::Zero(g.size()))};
        sim.cycles = cfg.cycles;
        sim.seed = rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        SweepRow row{t.mu, t.b, "", 0.0, 0.0, 0.0};
        if (t.policy == 0) {
            row.policy = "csmdp";
            const PolicySolution sol = lagrange_bisection(g, t.mu, t.b, cfg.solver);
            row.maoii_analytic = sol.maoii;
            sim.policy = SimPolicy::thresholds(sol.tau);
        } else if (t.policy == 1) {
            row.policy = "single_threshold";
            const SingleThresholdResult st = single_threshold_search(g, t.mu, t.b, cfg.grid);
            row.maoii_analytic = st.maoii;
            sim.policy = SimPolicy::single_threshold(st.tau);
        } else {
            row.policy = "poisson";
            const double gamma = calibrate_poisson(g, t.mu, t.b, cfg.solver.eps_lambda);
            row.maoii_analytic = poisson_chain(g, t.mu, gamma).maoii;
            sim.policy = SimPolicy::poisson(gamma);
        }
        const SimResult res = simulate(sim);
        row.maoii_sim = res.maoii_hat;
        row.rate_sim = res.rate_hat;
        rows[static_cast<std::size_t>(i)] = row;
    });

    if (!cfg.out.empty()) {
        detail::CsvWriter csv({"mu", "budget", "policy", "maoii_analytic", "maoii_sim",
                               "rate_sim"});
        for (const SweepRow& r : rows)
            csv.add({detail::fmt9(r.mu), detail::fmt9(r.budget), r.policy,
                     detail::fmt9(r.maoii_analytic), detail::fmt9(r.maoii_sim),
                     detail::fmt9(r.rate_sim)});
        csv.write(detail::resolve_out(cfg.out));
    }
    return rows;
}

// -- validate ------------------------------------------------------------------

struct ValidationReport {
    struct Check {
        std::string name;
        bool pass;
        std::string detail;
    };
    std::vector<Check> checks;

    bool all_pass() const {
        for (const Check& c : checks)
            if (!c.pass) return false;
        return true;
    }
    json to_json() const {
        json out = json::array();
        for (const Check& c : checks)
            out.push_back({{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        return out;
    }
};

inline ValidationReport run_validate(const ExperimentConfig& cfg) {
    ValidationReport report;
    const auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        report.checks.push_back({name, pass, detail});
    };

    std::optional<GeneratorMatrix> maybe_g;
    try {
        maybe_g.emplace(validate_generator(cfg.generator));
        add("generator_valid", true, "");
    } catch (const Error& e) {
        std::string kind = "Error";
        if (dynamic_cast<const NegativeOffDiagonal*>(&e)) kind = "NegativeOffDiagonal";
        else if (dynamic_cast<const NonzeroRowSum*>(&e)) kind = "NonzeroRowSum";
        else if (dynamic_cast<const AbsorbingState*>(&e)) kind = "AbsorbingState";
        else if (dynamic_cast<const Reducible*>(&e)) kind = "Reducible";
        add("generator_valid", false, kind + ": " + e.what());
    }

    if (maybe_g) {
        const GeneratorMatrix& g = *maybe_g;
        const int n = g.size();
        const std::vector<double> taus{0.0, 0.3, 1.0, 3.0};

        {  // phase-type identities by quadrature
            bool ok = true;
            std::string detail;
            for (int j = 1; j <= n && ok; ++j) {
                const PhaseType ph(build_y1(g, j));
                const auto [mean, second] = ph_moments(ph);
                const double hi = 50.0 * mean;
                const auto pdf = [&](double t) { return ph_pdf(ph, t); };
                const double mass = detail::integrate(pdf, 0.0, hi);
                const double m1 =
                    detail::integrate([&](double t) { return t * ph_pdf(ph, t); }, 0.0, hi);
                if (std::abs(mass - 1.0) > 1e-6 || std::abs(m1 - mean) > 1e-6) {
                    ok = false;
                    detail = "state " + std::to_string(j);
                }
                if (second < mean * mean) ok = false;
            }
            add("ph_identities", ok, detail);
        }
        {  // semigroup property
            bool ok = true;
            for (int j = 1; j <= n && ok; ++j) {
                const Eigen::MatrixXd a = remove_state(g, j).reduced;
                const Eigen::MatrixXd lhs = mat_exp(a, 1.9);
                const Eigen::MatrixXd rhs = mat_exp(a, 0.6) * mat_exp(a, 1.3);
                ok = (lhs - rhs).cwiseAbs().maxCoeff() < 1e-9;
            }
            add("semigroup", ok, "");
        }
        {  // probability rows
            bool ok = true;
            for (int j = 1; j <= n && ok; ++j) {
                for (double t : taus) {
                    const auto [y2, kappa] = build_y2(g, j, cfg.mu, t);
                    if (std::abs(absorption_probs(y2).sum() - 1.0) > 1e-9) ok = false;
                    if (std::abs(transition_row(g, j, cfg.mu, t).sum() - 1.0) > 1e-9) ok = false;
                }
            }
            add("probability_rows", ok, "");
        }
        {  // compact vs conditional cycle costs
            bool ok = true;
            for (int j = 1; j <= n && ok; ++j) {
                for (double t : taus) {
                    const CycleModel a = cycle_costs(g, j, cfg.mu, t);
                    const CycleModel b = cycle_costs_conditional(g, j, cfg.mu, t);
                    const double scale = std::max(1.0, std::abs(a.a));
                    if (std::abs(a.a - b.a) > 1e-9 * scale ||
                        std::abs(a.d - b.d) > 1e-9 * scale || std::abs(a.c - b.c) > 1e-9)
                        ok = false;
                }
            }
            add("cost_formula_crosscheck", ok, "");
        }
        {  // kappa monotone
            bool ok = true;
            for (int j = 1; j <= n && ok; ++j) {
                double prev = -1.0;
                for (double t = 0.0; t <= 6.0; t += 0.2) {
                    const double k = cycle_costs(g, j, cfg.mu, t).kappa;
                    if (k < prev - 1e-12) ok = false;
                    prev = k;
                }
                if (cycle_costs(g, j, cfg.mu, 0.0).kappa != 0.0) ok = false;
            }
            add("kappa_monotone", ok, "");
        }
        {  // analytic vs seed-pinned simulation
            Eigen::VectorXd tau(n);
            for (int j = 0; j < n; ++j) tau(j) = j + 1.0;
            if (cfg.policy && cfg.policy->kind == PolicyKind::Thresholds)
                tau = cfg.policy->tau;
            SimConfig sim{g, cfg.mu, SimPolicy::thresholds(tau)};
            sim.cycles = cfg.cycles;
            sim.seed = cfg.seed;
            const SimResult res = simulate(sim);
            const SyncChain sc = sync_chain(g, cfg.mu, ThresholdPolicy(tau));
            const bool ok = std::abs(res.maoii_hat - sc.maoii) < 3.0 * res.stderr_maoii &&
                            std::abs(res.rate_hat - sc.rate) < 3.0 * res.stderr_rate;
            add("analytic_vs_simulation", ok,
                "maoii " + detail::fmt9(sc.maoii) + " vs " + detail::fmt9(res.maoii_hat));
        }
        {  // traced run: mismatch age zero exactly at sync records
            SimConfig sim{g, cfg.mu, SimPolicy::thresholds(Eigen::VectorXd::Ones(n))};
            sim.cycles = 500;
            sim.trace_cycles = 500;
            sim.seed = cfg.seed;
            const SimResult res = simulate(sim);
            bool ok = !res.trace.events.empty();
            double prev_t = 0.0;
            for (const TraceEvent& e : res.trace.events) {
                if (e.time < prev_t) ok = false;
                prev_t = e.time;
                const bool sync = e.kind == EventKind::SyncByDrift ||
                                  e.kind == EventKind::SyncByDelivery;
                if (sync && e.aoii_after != 0.0) ok = false;
            }
            add("trace_sync_zero_age", ok, "");
        }
    }

    {  // deterministic replay of the reference binary path
        ScriptedEvents script;
        script.initial_source = 1;
        script.initial_estimate = 2;
        script.jumps = {{4.0, 2}, {7.0, 1}, {8.0, 2}};
        script.services = {1.0, 5.0, 0.5};
        Eigen::VectorXd tau(2);
        tau << 0.5, 1.0;
        const EventTrace trace = replay(script, tau);
        bool drift_at_7 = false, delivery_mid = false;
        for (const TraceEvent& e : trace.events) {
            if (e.kind == EventKind::SyncByDrift && e.time == 7.0) drift_at_7 = true;
            if (e.kind == EventKind::TxDeliver && e.time > 4.0 && e.time < 8.0)
                delivery_mid = true;
        }
        add("replay_drift_resync", drift_at_7 && !delivery_mid, "");
    }

    if (!cfg.out.empty()) {
        std::ofstream f(detail::resolve_out(cfg.out));
        f << report.to_json().dump(2) << '\n';
    }
    return report;
}

// -- scaling -------------------------------------------------------------------

/// Random irreducible generator: uniform off-diagonal rates, rows scaled to
/// unit holding rates.
inline GeneratorMatrix random_generator(int n, std::uint64_t seed) {
    rng::Xoshiro256pp r(rng::derive_seed(seed, static_cast<std::uint64_t>(n)));
    Eigen::MatrixXd q(n, n);
    for (int i = 0; i < n; ++i) {
        double off = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            q(i, j) = 0.05 + r.uniform01();
            off += q(i, j);
        }
        for (int j = 0; j < n; ++j)
            if (i != j) q(i, j) /= off;
        q(i, i) = -1.0;
    }
    return GeneratorMatrix(q);
}

struct ScalingRow {
    int n;
    double seconds_per_policy_iteration;
};

inline std::vector<ScalingRow> run_scaling(const ExperimentConfig& cfg) {
    std::vector<ScalingRow> rows;
    for (int n : cfg.scaling.sizes) {
        const GeneratorMatrix g = random_generator(n, cfg.seed);
        std::vector<double> per_iter;
        for (int pass = 0; pass < std::max(1, cfg.scaling.passes); ++pass) {
            const auto t0 = std::chrono::steady_clock::now();
            const PolicySolution sol = policy_iteration(g, cfg.mu, cfg.scaling.lambda,
                                                        cfg.solver);
            const auto t1 = std::chrono::steady_clock::now();
            const double secs = std::chrono::duration<double>(t1 - t0).count();
            per_iter.push_back(secs / std::max(1, sol.policy_iterations));
        }
        std::sort(per_iter.begin(), per_iter.end());
        rows.push_back({n, per_iter[per_iter.size() / 2]});
    }
    if (!cfg.out.empty()) {
        detail::CsvWriter csv({"n", "seconds_per_policy_iteration"});
        for (const ScalingRow& r : rows)
            csv.add({std::to_string(r.n), detail::fmt9(r.seconds_per_policy_iteration)});
        csv.write(detail::resolve_out(cfg.out));
    }
    return rows;
}

} // namespace aoii
