#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "aoii/cycle_model.hpp"
#include "aoii/errors.hpp"
#include "aoii/generator.hpp"

namespace aoii {

struct SolverConfig {
    double eps_eta = 1e-2;     ///< stopping tolerance on the average cost
    double eps_lambda = 1e-2;  ///< constraint tolerance on |R - b|
    double eps_tau = 1e-4;     ///< width tolerance of the 1-D threshold search
    int max_policy_iters = 200;
    int max_bisect_iters = 60;
    double tau_search_expansion = 2.0;

    void validate() const {
        if (!(eps_eta > 0.0) || !(eps_lambda > 0.0) || !(eps_tau > 0.0))
            throw Error("solver tolerances must be positive");
        if (max_policy_iters < 1 || max_bisect_iters < 1)
            throw Error("iteration caps must be at least 1");
        if (!(tau_search_expansion > 1.0))
            throw Error("tau_search_expansion must exceed 1");
    }
};

enum class SolveStatus { Converged, IterationCapHit, BudgetSlackAtZeroLambda };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::IterationCapHit: return "iteration_cap_hit";
        case SolveStatus::BudgetSlackAtZeroLambda: return "budget_slack_at_zero_lambda";
    }
    return "unknown";
}

struct PolicySolution {
    Eigen::VectorXd tau;
    double lambda = 0.0;
    double eta = 0.0;      ///< long-run average Lagrangian cost
    Eigen::VectorXd v;     ///< relative values, v(N-1) = 0 exactly
    double maoii = 0.0;
    double rate = 0.0;
    int policy_iterations = 0;
    int bisect_iterations = 0;
    SolveStatus status = SolveStatus::Converged;
    std::vector<double> eta_history;  ///< eta per policy iteration
};

/// Solves the N average-cost optimality equations
///   v_j = a_j + lambda c_j - eta d_j + sum_i p_ji v_i,   v_N = 0,
/// as one dense linear system in (v_1..v_{N-1}, eta).
inline std::pair<double, Eigen::VectorXd> value_determination(
    const std::vector<CycleModel>& cycles, double lambda) {
    const int n = static_cast<int>(cycles.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs(n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n - 1; ++i)
            m(j, i) = (i == j ? 1.0 : 0.0) - cycles[j].p_row(i);
        m(j, n - 1) = cycles[j].d;
        rhs(j) = cycles[j].a + lambda * cycles[j].c;
    }
    Eigen::VectorXd x;
    try {
        x = linalg::solve(m, rhs, "value determination");
    } catch (const SingularMatrix& e) {
        throw SingularSystem(e.what());
    }
    const double eta = x(n - 1);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v.head(n - 1) = x.head(n - 1);
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    for (int j = 0; j < n; ++j) {
        const double res = cycles[j].a + lambda * cycles[j].c - eta * cycles[j].d +
                           cycles[j].p_row.dot(v) - v(j);
        if (!std::isfinite(res) || std::abs(res) > 1e-6 * scale)
            throw SingularSystem("value determination residual " + std::to_string(res));
    }
    return {eta, v};
}

namespace detail {

inline double improvement_objective(const CycleModel& cm, double lambda, double eta,
                                    const Eigen::VectorXd& v) {
    return cm.a + lambda * cm.c - eta * cm.d + cm.p_row.dot(v);
}

} // namespace detail

/// Minimizes h_j(tau) = a_j + lambda c_j - eta d_j + sum_i p_ji v_i over
/// tau in [0, cap]. Brackets by geometric expansion until a rising tail
/// shows on a 3-point stencil, pre-scans 64 points against non-unimodal
/// objectives, then golden-sections to eps_tau. Ties break toward the
/// smaller threshold; tau_current is always a candidate, so the returned
/// threshold never scores worse than the incumbent.
inline double improve_threshold(const CycleWorkspace& w, const Eigen::VectorXd& v, double eta,
                                double lambda, const SolverConfig& cfg,
                                double tau_current = 0.0) {
    const auto ctx = w.make_objective(v, eta, lambda);
    const auto h = [&](double t) { return w.objective(ctx, t); };
    const double cap = w.cap();

    double ub = 1.0;
    while (ub < cap) {
        const double h1 = h(0.25 * ub), h2 = h(0.5 * ub), h3 = h(ub);
        if (h1 <= h2 && h2 <= h3) break;
        ub = std::min(cap, ub * cfg.tau_search_expansion);
    }

    constexpr int kPreScan = 64;
    double best_t = 0.0;
    double best_h = h(0.0);
    int best_idx = 0;
    for (int i = 1; i < kPreScan; ++i) {
        const double t = ub * static_cast<double>(i) / (kPreScan - 1);
        const double ht = h(t);
        if (ht < best_h) {
            best_h = ht;
            best_t = t;
            best_idx = i;
        }
    }

    double lo = ub * static_cast<double>(std::max(0, best_idx - 1)) / (kPreScan - 1);
    double hi = ub * static_cast<double>(std::min(kPreScan - 1, best_idx + 1)) / (kPreScan - 1);
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - golden * (hi - lo);
    double d = lo + golden * (hi - lo);
    double hc = h(c), hd = h(d);
    while (hi - lo > cfg.eps_tau) {
        if (hc < hd) {
            hi = d;
            d = c;
            hd = hc;
            c = hi - golden * (hi - lo);
            hc = h(c);
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + golden * (hi - lo);
            hd = h(d);
        }
    }

    // candidate set: refined point, zero, the incumbent; ties toward the
    // smaller threshold
    double best_tau = lo;
    double best_val = h(lo);
    for (double t : {hi, 0.0, tau_current}) {
        const double ht = h(t);
        if (ht < best_val - 1e-12 || (std::abs(ht - best_val) <= 1e-12 && t < best_tau)) {
            best_val = ht;
            best_tau = t;
        }
    }
    // "never transmit" is one action whatever the saturated threshold says;
    // give it its canonical name when it wins or ties a saturated interior point
    const double h_cap = h(cap);
    if (h_cap < best_val - 1e-12 ||
        (std::abs(h_cap - best_val) <= 1e-12 && w.eval(best_tau).kappa >= 1.0 - 1e-14))
        return cap;
    return best_tau;
}

/// Convenience overload building the per-state workspace on the fly.
inline double improve_threshold(int j, const Eigen::VectorXd& v, double eta, double lambda,
                                const GeneratorMatrix& g, double mu, const SolverConfig& cfg,
                                double tau_current = 0.0) {
    return improve_threshold(CycleWorkspace(g, j, mu), v, eta, lambda, cfg, tau_current);
}

/// Average-cost policy iteration over the threshold vector for a fixed
/// Lagrange multiplier, starting from all-zero thresholds. Non-convergence
/// within the iteration cap is reported through the status field.
inline PolicySolution policy_iteration(const GeneratorMatrix& g, double mu, double lambda,
                                       const SolverConfig& cfg = {}) {
    cfg.validate();
    if (lambda < 0.0) throw Error("lambda must be nonnegative");
    const int n = g.size();
    std::vector<CycleWorkspace> ws;
    ws.reserve(n);
    for (int j = 1; j <= n; ++j) ws.emplace_back(g, j, mu);

    PolicySolution sol;
    sol.lambda = lambda;
    sol.tau = Eigen::VectorXd::Zero(n);
    sol.status = SolveStatus::IterationCapHit;

    std::vector<CycleModel> cycles(static_cast<std::size_t>(n));
    double eta_prev = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= cfg.max_policy_iters; ++iter) {
        for (int j = 0; j < n; ++j) cycles[j] = ws[j].eval(sol.tau(j));
        auto [eta, v] = value_determination(cycles, lambda);
        sol.eta = eta;
        sol.v = v;
        sol.eta_history.push_back(eta);
        sol.policy_iterations = iter;
        if (std::abs(eta - eta_prev) <= cfg.eps_eta) {
            sol.status = SolveStatus::Converged;
            break;
        }
        eta_prev = eta;
        for (int j = 0; j < n; ++j) {
            const double cur = sol.tau(j);
            const double cand = improve_threshold(ws[j], v, eta, lambda, cfg, cur);
            const double h_cur = detail::improvement_objective(cycles[j], lambda, eta, v);
            const double h_cand =
                detail::improvement_objective(ws[j].eval(cand), lambda, eta, v);
            if (h_cand < h_cur - 1e-12 || (std::abs(h_cand - h_cur) <= 1e-12 && cand < cur))
                sol.tau(j) = cand;
        }
    }
    const SyncChain sc = aggregate_chain(cycles);
    sol.maoii = sc.maoii;
    sol.rate = sc.rate;
    return sol;
}

/// Constrained solve: policy iteration inside a bisection on the Lagrange
/// multiplier until the sampling rate meets the budget within eps_lambda.
/// If the unconstrained (lambda = 0) policy already fits the budget it is
/// returned immediately. When the bisection cap is hit, the best feasible
/// iterate (rate <= b) is returned with status IterationCapHit, so every
/// returned solution satisfies rate <= b + eps_lambda.
inline PolicySolution lagrange_bisection(const GeneratorMatrix& g, double mu, double b,
                                         const SolverConfig& cfg = {}) {
    cfg.validate();
    if (!(b > 0.0)) throw Error("budget must be positive");

    PolicySolution sol = policy_iteration(g, mu, 0.0, cfg);
    sol.bisect_iterations = 1;
    if (sol.rate <= b) {
        sol.status = SolveStatus::BudgetSlackAtZeroLambda;
        return sol;
    }

    int solves = 1;
    double lam_lo = 0.0;
    double lam_hi = 1.0;
    PolicySolution hi_sol = policy_iteration(g, mu, lam_hi, cfg);
    ++solves;
    while (hi_sol.rate > b) {
        lam_lo = lam_hi;
        lam_hi *= 2.0;
        if (lam_hi > 1e18)
            throw BisectionFailed("no multiplier with rate <= " + std::to_string(b));
        hi_sol = policy_iteration(g, mu, lam_hi, cfg);
        ++solves;
    }

    PolicySolution best_feasible = hi_sol;  // rate <= b by construction
    PolicySolution cur = hi_sol;
    while (std::abs(cur.rate - b) > cfg.eps_lambda && solves < cfg.max_bisect_iters) {
        const double lam = 0.5 * (lam_lo + lam_hi);
        cur = policy_iteration(g, mu, lam, cfg);
        ++solves;
        if (cur.rate >= b) {
            lam_lo = lam;
        } else {
            lam_hi = lam;
            if (b - cur.rate < b - best_feasible.rate) best_feasible = cur;
        }
    }
    PolicySolution out = (std::abs(cur.rate - b) <= cfg.eps_lambda) ? cur : best_feasible;
    if (std::abs(out.rate - b) > cfg.eps_lambda && out.rate <= b)
        out.status = SolveStatus::IterationCapHit;
    out.bisect_iterations = solves;
    return out;
}

struct GridSearchResult {
    Eigen::VectorXd tau;
    double maoii = 0.0;
    double rate = 0.0;
};

/// Exhaustive search over the threshold grid [0, tau_hi]^N with the given
/// step: returns the feasible (rate <= b) point of minimum MAoII, ties
/// broken toward the lexicographically smaller threshold vector.
inline GridSearchResult grid_search_oracle(const GeneratorMatrix& g, double mu, double b,
                                           double grid_step, double tau_hi = 5.0) {
    if (g.size() > 4) throw Error("grid search limited to N <= 4");
    if (!(grid_step > 0.0) || !(tau_hi >= 0.0)) throw Error("bad grid parameters");
    const int n = g.size();
    const int m = static_cast<int>(std::floor(tau_hi / grid_step + 1e-9)) + 1;

    std::vector<std::vector<CycleModel>> axis(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) {
        CycleWorkspace w(g, j, mu);
        axis[j - 1].reserve(m);
        for (int i = 0; i < m; ++i) axis[j - 1].push_back(w.eval(i * grid_step));
    }

    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    std::vector<CycleModel> cycles(static_cast<std::size_t>(n));
    bool found = false;
    GridSearchResult best;
    best.maoii = std::numeric_limits<double>::infinity();
    while (true) {
        for (int j = 0; j < n; ++j) cycles[j] = axis[j][idx[j]];
        const SyncChain sc = aggregate_chain(cycles);
        if (sc.rate <= b && sc.maoii < best.maoii) {
            found = true;
            best.maoii = sc.maoii;
            best.rate = sc.rate;
            best.tau.resize(n);
            for (int j = 0; j < n; ++j) best.tau(j) = idx[j] * grid_step;
        }
        int k = n - 1;
        while (k >= 0 && idx[k] == m - 1) idx[k--] = 0;
        if (k < 0) break;
        ++idx[k];
    }
    if (!found) throw InfeasibleBudget("no grid point satisfies rate <= " + std::to_string(b));
    return best;
}

} // namespace aoii
