#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "aoii/errors.hpp"
#include "aoii/generator.hpp"
#include "aoii/phase_type.hpp"

namespace aoii {

/// Thresholds above this value are numerically indistinguishable from
/// "never transmit"; it also keeps e^{tau A} away from underflow.
inline double tau_cap(const GeneratorMatrix& g) { return 1e4 / g.sigma().minCoeff(); }

/// Per-estimate transmission thresholds (entry j-1 applies while the monitor
/// shows state j). Entries must be nonnegative and finite; evaluation clamps
/// them to tau_cap(g).
struct ThresholdPolicy {
    Eigen::VectorXd tau;

    explicit ThresholdPolicy(Eigen::VectorXd t) : tau(std::move(t)) {
        for (Eigen::Index i = 0; i < tau.size(); ++i) {
            if (!std::isfinite(tau(i)) || tau(i) < 0.0)
                throw Error("threshold " + std::to_string(i + 1) + " must be finite and >= 0");
        }
    }
    static ThresholdPolicy zeros(int n) { return ThresholdPolicy(Eigen::VectorXd::Zero(n)); }
    static ThresholdPolicy uniform(int n, double t) {
        return ThresholdPolicy(Eigen::VectorXd::Constant(n, t));
    }
};

/// Expected per-cycle quantities for one synchronization state: probability
/// kappa of re-syncing by drift before the threshold elapses, expected age
/// cost a, expected number of initiated transmissions c, expected cycle
/// length d, and the next-sync-state distribution p_row.
struct CycleModel {
    int j = 0;  ///< 1-based sync state
    double kappa = 0.0;
    double a = 0.0;
    double c = 0.0;
    double d = 0.0;
    Eigen::RowVectorXd p_row;
};

/// Synchronization chain for a full threshold vector: transition matrix P,
/// its stationary vector pi, and the renewal-reward ratios.
struct SyncChain {
    Eigen::MatrixXd P;
    Eigen::VectorXd pi;
    double maoii = 0.0;
    double rate = 0.0;
};

/// Waiting-phase chain from sync state j: transient states are the source
/// states other than j, the single absorbing state is re-sync at j.
inline AbsorbingChain build_y1(const GeneratorMatrix& g, int j) {
    StateRemoval rem = remove_state(g, j);
    Eigen::RowVectorXd beta = rem.row_from_j / g.sigma()(j - 1);
    return AbsorbingChain(rem.reduced, rem.col_to_j, beta);
}

namespace detail {

/// Absorption block of the transmission phase: column 0 absorbs to S_j
/// (drift), column 1+k absorbs to S_i for the k-th retained state i
/// (delivery at rate mu).
inline Eigen::MatrixXd build_b2(const Eigen::VectorXd& col_to_j, double mu) {
    const auto k = col_to_j.size();
    Eigen::MatrixXd b2(k, k + 1);
    b2.col(0) = col_to_j;
    b2.rightCols(k) = mu * Eigen::MatrixXd::Identity(k, k);
    return b2;
}

} // namespace detail

/// Transmission-phase chain entered when the waiting phase survives the
/// threshold; also returns kappa, the probability it is never entered.
inline std::pair<AbsorbingChain, double> build_y2(const GeneratorMatrix& g, int j, double mu,
                                                  double tau_j) {
    if (!(mu > 0.0)) throw Error("service rate mu must be positive");
    if (tau_j < 0.0) throw Error("threshold must be nonnegative");
    StateRemoval rem = remove_state(g, j);
    const auto k = rem.reduced.rows();
    Eigen::RowVectorXd beta1 = rem.row_from_j / g.sigma()(j - 1);
    Eigen::RowVectorXd r = exp_action(beta1, rem.reduced, tau_j);
    const double survive = r.sum() / beta1.sum();
    if (survive < 1e-14)
        throw ThresholdAbsorbsAll("waiting phase at state " + std::to_string(j) +
                                  " absorbs before tau=" + std::to_string(tau_j));
    Eigen::MatrixXd a2 = rem.reduced - mu * Eigen::MatrixXd::Identity(k, k);
    return {AbsorbingChain(a2, detail::build_b2(rem.col_to_j, mu), r / r.sum()),
            1.0 - survive};
}

/// Reusable tau-independent factors of the cycle formulas for one sync
/// state. Everything the per-threshold evaluation needs reduces to dot
/// products against beta1 e^{tau A1}, so repeated evaluations (policy
/// improvement, grids) cost one vector exponential each.
///
/// Not safe for concurrent evaluation of the same instance (it caches the
/// discovered saturation threshold); build one per worker instead.
class CycleWorkspace {
  public:
    CycleWorkspace(const GeneratorMatrix& g, int j, double mu)
        : j_(j), n_(g.size()), sigma_j_(g.sigma()(j - 1)), cap_(tau_cap(g)) {
        if (!(mu > 0.0)) throw Error("service rate mu must be positive");
        StateRemoval rem = remove_state(g, j);
        const auto k = rem.reduced.rows();
        a1_ = rem.reduced;
        beta1_ = rem.row_from_j / sigma_j_;
        retained_ = rem.retained;
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(k);
        Eigen::MatrixXd a2 = a1_ - mu * Eigen::MatrixXd::Identity(k, k);
        const Eigen::VectorXd u1_one = linalg::solve(a1_, one, "waiting-phase inverse");
        const Eigen::VectorXd u2_one = linalg::solve(a2, one, "transmission-phase inverse");
        const Eigen::VectorXd v1_one = linalg::solve(a1_, u1_one, "waiting-phase inverse");
        const Eigen::VectorXd v2_one = linalg::solve(a2, u2_one, "transmission-phase inverse");
        du_one_ = u1_one - u2_one;
        dv_one_ = v2_one - v1_one;
        beta1_u1_one_ = (beta1_ * u1_one).value();
        beta1_v1_one_ = (beta1_ * v1_one).value();
        const Eigen::MatrixXd d = embedded_dtmc(a2);
        visits_one_ = linalg::solve(Eigen::MatrixXd::Identity(k, k) - d, one,
                                    "fundamental matrix");
        absorb_ = -linalg::solve_matrix(a2, detail::build_b2(rem.col_to_j, mu),
                                        "transmission-phase absorption");
        unif_.emplace(a1_);
        r_buf_.resize(k);
        part_buf_.resize(n_);
    }

    /// Cycle quantities at threshold tau (clamped to the cap).
    CycleModel eval(double tau) const {
        CycleModel cm;
        cm.j = j_;
        const double t = std::min(std::max(tau, 0.0), cap_);
        if (t >= tau_saturated_) return never_transmit();
        unif_->apply(beta1_, t, r_buf_);
        const Eigen::RowVectorXd& r = r_buf_;
        const double survive = r.sum() / beta1_.sum();
        if (survive < 1e-14) {
            tau_saturated_ = std::min(tau_saturated_, t);
            return never_transmit();
        }
        cm.kappa = std::min(1.0, std::max(0.0, 1.0 - survive));
        const double r_du = r.dot(du_one_);
        cm.d = r_du - beta1_u1_one_ + 1.0 / sigma_j_;
        cm.a = t * r_du + beta1_v1_one_ + r.dot(dv_one_);
        cm.c = r.dot(visits_one_);
        part_buf_.noalias() = r * absorb_;
        cm.p_row = Eigen::RowVectorXd::Zero(n_);
        cm.p_row(j_ - 1) = part_buf_(0) + cm.kappa;
        for (std::size_t k = 0; k < retained_.size(); ++k)
            cm.p_row(retained_[k] - 1) = part_buf_(static_cast<Eigen::Index>(k) + 1);
        return cm;
    }

    int state() const { return j_; }
    double cap() const { return cap_; }

    /// Precombined vectors for allocation-free improvement-objective
    /// evaluations h(tau) = a + lambda c - eta d + sum_i p_i v_i at fixed
    /// (v, eta, lambda). All terms reduce to dots against beta1 e^{tau A1}.
    struct ObjectiveContext {
        Eigen::VectorXd combo;   ///< dv + lambda visits + absorb v - (v_j/beta_sum) 1
        double constant = 0.0;   ///< value of the never-transmit branch
        double eta = 0.0;
    };

    ObjectiveContext make_objective(const Eigen::VectorXd& v, double eta,
                                    double lambda) const {
        ObjectiveContext ctx;
        const double v_j = v(j_ - 1);
        Eigen::VectorXd v_cols(absorb_.cols());
        v_cols(0) = v_j;
        for (std::size_t k = 0; k < retained_.size(); ++k)
            v_cols(static_cast<Eigen::Index>(k) + 1) = v(retained_[k] - 1);
        ctx.combo = dv_one_ + lambda * visits_one_ + absorb_ * v_cols -
                    (v_j / beta1_.sum()) * Eigen::VectorXd::Ones(dv_one_.size());
        ctx.constant = beta1_v1_one_ + eta * beta1_u1_one_ - eta / sigma_j_ + v_j;
        ctx.eta = eta;
        return ctx;
    }

    double objective(const ObjectiveContext& ctx, double tau) const {
        const double t = std::min(std::max(tau, 0.0), cap_);
        if (t >= tau_saturated_) return ctx.constant;
        unif_->apply(beta1_, t, r_buf_);
        const double survive = r_buf_.sum() / beta1_.sum();
        if (survive < 1e-14) {
            tau_saturated_ = std::min(tau_saturated_, t);
            return ctx.constant;
        }
        return r_buf_.dot(ctx.combo) + (t - ctx.eta) * r_buf_.dot(du_one_) + ctx.constant;
    }

  private:
    CycleModel never_transmit() const {
        // kappa = 1: the cycle is the unconditional waiting phase plus the
        // in-sync holding time, and the next sync state is j itself.
        CycleModel cm;
        cm.j = j_;
        cm.kappa = 1.0;
        cm.d = -beta1_u1_one_ + 1.0 / sigma_j_;
        cm.a = beta1_v1_one_;
        cm.c = 0.0;
        cm.p_row = Eigen::RowVectorXd::Zero(n_);
        cm.p_row(j_ - 1) = 1.0;
        return cm;
    }

    int j_;
    int n_;
    double sigma_j_;
    double cap_;
    Eigen::MatrixXd a1_;
    Eigen::RowVectorXd beta1_;
    std::vector<int> retained_;
    Eigen::VectorXd du_one_, dv_one_, visits_one_;
    Eigen::MatrixXd absorb_;
    double beta1_u1_one_ = 0.0, beta1_v1_one_ = 0.0;
    std::optional<linalg::UniformizedOp> unif_;
    mutable Eigen::RowVectorXd r_buf_;
    mutable Eigen::RowVectorXd part_buf_;
    mutable double tau_saturated_ = std::numeric_limits<double>::infinity();
};

/// Conditional-decomposition route to the same cycle quantities, kept
/// deliberately independent of the compact matrix forms: it goes through
/// the phase-type conditional moments and the normalized transmission-phase
/// chain. Used as an internal cross-check and by the validation suites.
inline CycleModel cycle_costs_conditional(const GeneratorMatrix& g, int j, double mu,
                                          double tau_j) {
    CycleModel cm;
    cm.j = j;
    const double t = std::min(std::max(tau_j, 0.0), tau_cap(g));
    const double sigma_j = g.sigma()(j - 1);
    const AbsorbingChain y1 = build_y1(g, j);
    const PhaseType ph1(y1);
    const double kappa = ph_cdf(ph1, t);
    cm.p_row = Eigen::RowVectorXd::Zero(g.size());
    if (1.0 - kappa < 1e-14) {
        const auto [m1, m2] = ph_moments(ph1);
        cm.kappa = 1.0;
        cm.d = m1 + 1.0 / sigma_j;
        cm.a = 0.5 * m2;
        cm.c = 0.0;
        cm.p_row(j - 1) = 1.0;
        return cm;
    }
    auto [y2, kappa2] = build_y2(g, j, mu, t);
    cm.kappa = kappa2;
    const PhaseType ph2(y2);
    const auto [t2_mean, t2_second] = ph_moments(ph2);
    double t1_first = 0.0, t1_second = 0.0;  // E[T1 1{T1<tau}], E[T1^2 1{T1<tau}]
    if (kappa2 > 1e-14) {
        const auto [c1, c2] = ph_conditional_moments(ph1, t);
        t1_first = kappa2 * c1;
        t1_second = kappa2 * c2;
    }
    const double reach = 1.0 - kappa2;
    cm.d = t1_first + reach * (t + t2_mean) + 1.0 / sigma_j;
    cm.a = 0.5 * t1_second + reach * (0.5 * t * t + t * t2_mean + 0.5 * t2_second);
    cm.c = reach * expected_visits(y2);
    const Eigen::RowVectorXd abs_probs = reach * absorption_probs(y2);
    cm.p_row(j - 1) = abs_probs(0) + kappa2;
    const StateRemoval rem = remove_state(g, j);
    for (std::size_t k = 0; k < rem.retained.size(); ++k)
        cm.p_row(rem.retained[k] - 1) = abs_probs(static_cast<Eigen::Index>(k) + 1);
    return cm;
}

/// Expected cycle quantities for sync state j at threshold tau_j.
inline CycleModel cycle_costs(const GeneratorMatrix& g, int j, double mu, double tau_j) {
    CycleModel cm = CycleWorkspace(g, j, mu).eval(tau_j);
#ifndef NDEBUG
    const CycleModel ref = cycle_costs_conditional(g, j, mu, tau_j);
    const double scale = std::max({1.0, std::abs(cm.a), std::abs(cm.d)});
    if (std::abs(cm.a - ref.a) > 1e-9 * scale || std::abs(cm.d - ref.d) > 1e-9 * scale ||
        std::abs(cm.c - ref.c) > 1e-9 * scale)
        throw Error("cycle cost cross-check failed at state " + std::to_string(j));
#endif
    return cm;
}

/// Next-sync-state distribution from S_j under threshold tau_j.
inline Eigen::RowVectorXd transition_row(const GeneratorMatrix& g, int j, double mu,
                                         double tau_j) {
    return CycleWorkspace(g, j, mu).eval(tau_j).p_row;
}

/// Stationary analysis of the synchronization chain assembled from per-state
/// cycle models: pi solves pi P = pi, pi 1 = 1 through the rank-completion
/// system (P + 1 1^T - I)^T pi^T = 1, and the long-run averages are the
/// renewal-reward ratios.
inline SyncChain aggregate_chain(const std::vector<CycleModel>& cycles) {
    const int n = static_cast<int>(cycles.size());
    SyncChain sc;
    sc.P.resize(n, n);
    Eigen::VectorXd av(n), cv(n), dv(n);
    for (int j = 0; j < n; ++j) {
        sc.P.row(j) = cycles[j].p_row;
        av(j) = cycles[j].a;
        cv(j) = cycles[j].c;
        dv(j) = cycles[j].d;
    }
    Eigen::MatrixXd m = sc.P + Eigen::MatrixXd::Ones(n, n) - Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd pi;
    try {
        pi = linalg::solve(m.transpose(), Eigen::VectorXd::Ones(n), "synchronization chain");
    } catch (const SingularMatrix& e) {
        throw SingularChain(e.what());
    }
    for (int j = 0; j < n; ++j)
        if (pi(j) < 0.0 && pi(j) > -1e-12) pi(j) = 0.0;
    sc.pi = pi;
    const double total_time = pi.dot(dv);
    sc.maoii = pi.dot(av) / total_time;
    sc.rate = pi.dot(cv) / total_time;
    if (!std::isfinite(sc.maoii) || !std::isfinite(sc.rate))
        throw SingularChain("non-finite stationary averages");
    return sc;
}

inline SyncChain sync_chain(const GeneratorMatrix& g, double mu, const ThresholdPolicy& tau) {
    if (tau.tau.size() != g.size()) throw Error("threshold vector size mismatch");
    std::vector<CycleModel> cycles;
    cycles.reserve(g.size());
    for (int j = 1; j <= g.size(); ++j)
        cycles.push_back(CycleWorkspace(g, j, mu).eval(tau.tau(j - 1)));
    return aggregate_chain(cycles);
}

// ---------------------------------------------------------------------------
// Poisson-sampling baseline: the waiting phase ends at the first rate-gamma
// sampling instant instead of a deterministic threshold. Equivalent to an
// Exp(gamma) threshold redrawn each cycle; once transmitting, the dynamics
// (preempt on source change, immediate restart) are those of the threshold
// policy, so the transmission phase Y2 is reused unchanged.
// ---------------------------------------------------------------------------

inline CycleModel poisson_cycle_costs(const GeneratorMatrix& g, int j, double mu,
                                      double gamma) {
    if (!(mu > 0.0)) throw Error("service rate mu must be positive");
    if (gamma < 0.0) throw Error("sampling intensity gamma must be >= 0");
    const double sigma_j = g.sigma()(j - 1);
    StateRemoval rem = remove_state(g, j);
    const auto k = rem.reduced.rows();
    const Eigen::RowVectorXd beta1 = rem.row_from_j / sigma_j;
    const Eigen::MatrixXd neg_ap =
        gamma * Eigen::MatrixXd::Identity(k, k) - rem.reduced;  // -(A1 - gamma I)
    const Eigen::MatrixXd a2 = rem.reduced - mu * Eigen::MatrixXd::Identity(k, k);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(k);

    // r_m = beta1 (-A')^{-m}; absorption-time moment pieces of the sampled
    // waiting phase
    const Eigen::MatrixXd neg_ap_t = neg_ap.transpose();
    const Eigen::VectorXd r1 = linalg::solve(neg_ap_t, beta1.transpose(), "sampled waiting phase");
    const Eigen::VectorXd r2 = linalg::solve(neg_ap_t, r1, "sampled waiting phase");
    const Eigen::VectorXd r3 = linalg::solve(neg_ap_t, r2, "sampled waiting phase");

    const Eigen::RowVectorXd entry = gamma * r1.transpose();  // mass entering Y2, per state
    const double reach = entry.sum();
    const Eigen::VectorXd u2_one = linalg::solve(a2, one, "transmission-phase inverse");
    const Eigen::VectorXd v2_one = linalg::solve(a2, u2_one, "transmission-phase inverse");
    const Eigen::MatrixXd d = embedded_dtmc(a2);
    const Eigen::VectorXd visits_one =
        linalg::solve(Eigen::MatrixXd::Identity(k, k) - d, one, "fundamental matrix");
    const Eigen::MatrixXd absorb =
        -linalg::solve_matrix(a2, detail::build_b2(rem.col_to_j, mu), "absorption");

    CycleModel cm;
    cm.j = j;
    cm.kappa = std::min(1.0, std::max(0.0, 1.0 - reach));
    cm.d = r1.sum() - (entry * u2_one).value() + 1.0 / sigma_j;
    cm.a = r3.dot(rem.col_to_j) + gamma * r3.sum() -
           gamma * (r2.transpose() * u2_one).value() + (entry * v2_one).value();
    cm.c = (entry * visits_one).value();
    const Eigen::RowVectorXd part = entry * absorb;
    cm.p_row = Eigen::RowVectorXd::Zero(g.size());
    cm.p_row(j - 1) = part(0) + cm.kappa;
    for (std::size_t i = 0; i < rem.retained.size(); ++i)
        cm.p_row(rem.retained[i] - 1) = part(static_cast<Eigen::Index>(i) + 1);
    return cm;
}

inline SyncChain poisson_chain(const GeneratorMatrix& g, double mu, double gamma) {
    std::vector<CycleModel> cycles;
    cycles.reserve(g.size());
    for (int j = 1; j <= g.size(); ++j) cycles.push_back(poisson_cycle_costs(g, j, mu, gamma));
    return aggregate_chain(cycles);
}

} // namespace aoii
