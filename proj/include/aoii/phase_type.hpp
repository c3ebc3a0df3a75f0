#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "aoii/errors.hpp"
#include "aoii/linalg.hpp"

namespace aoii {

using linalg::exp_action;
using linalg::mat_exp;

/// Absorbing CTMC with K transient and L absorbing states, characterized by
/// the transient-block generator A (K x K), the absorption-rate block
/// B (K x L), and the initial transient distribution beta (1 x K).
struct AbsorbingChain {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    Eigen::RowVectorXd beta;

    AbsorbingChain(Eigen::MatrixXd a_, Eigen::MatrixXd b_, Eigen::RowVectorXd beta_)
        : a(std::move(a_)), b(std::move(b_)), beta(std::move(beta_)) {
        validate();
    }

    Eigen::Index transient_count() const { return a.rows(); }
    Eigen::Index absorbing_count() const { return b.cols(); }

    void validate() const {
        const auto k = a.rows();
        if (a.cols() != k || b.rows() != k || beta.cols() != k)
            throw Error("absorbing chain: inconsistent dimensions");
        for (Eigen::Index i = 0; i < k; ++i) {
            if (!(a(i, i) < 0.0)) throw Error("absorbing chain: diagonal of A not negative");
            for (Eigen::Index j = 0; j < k; ++j)
                if (i != j && a(i, j) < 0.0) throw Error("absorbing chain: negative rate in A");
        }
        if ((b.array() < 0.0).any()) throw Error("absorbing chain: negative rate in B");
        for (Eigen::Index i = 0; i < k; ++i) {
            const double row = a.row(i).sum() + b.row(i).sum();
            if (std::abs(row) > 1e-12 * std::max(1.0, -a(i, i)))
                throw Error("absorbing chain: [A|B] row " + std::to_string(i + 1) +
                            " does not sum to 0");
        }
        if ((beta.array() < 0.0).any() || std::abs(beta.sum() - 1.0) > 1e-12)
            throw Error("absorbing chain: beta is not a distribution");
    }
};

/// Time-to-absorption distribution of an absorbing chain, characterized by
/// (A, beta) alone.
struct PhaseType {
    Eigen::MatrixXd a;
    Eigen::RowVectorXd beta;

    PhaseType(Eigen::MatrixXd a_, Eigen::RowVectorXd beta_)
        : a(std::move(a_)), beta(std::move(beta_)) {}
    explicit PhaseType(const AbsorbingChain& amc) : a(amc.a), beta(amc.beta) {}
};

/// F_T(t) = 1 - beta e^{tA} 1.
inline double ph_cdf(const PhaseType& ph, double t) {
    const double tail = exp_action(ph.beta, ph.a, t).sum();
    return std::min(1.0, std::max(0.0, 1.0 - tail));
}

/// f_T(t) = -beta e^{tA} A 1.
inline double ph_pdf(const PhaseType& ph, double t) {
    return -(exp_action(ph.beta, ph.a, t) * ph.a).sum();
}

/// First and second moments of the absorption time:
/// E[T] = -beta A^{-1} 1,  E[T^2] = 2 beta A^{-2} 1.
inline std::pair<double, double> ph_moments(const PhaseType& ph) {
    const auto k = ph.a.rows();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(k);
    const Eigen::VectorXd u = linalg::solve(ph.a, one, "phase-type moments");  // A^{-1} 1
    const Eigen::VectorXd v = linalg::solve(ph.a, u, "phase-type moments");    // A^{-2} 1
    const double mean = -(ph.beta * u).value();
    const double second = 2.0 * (ph.beta * v).value();
    return {mean, second};
}

/// Conditional moments E[T | T < tau] and E[T^2 | T < tau].
///
///   E[T 1{T<tau}]   = -tau r 1 + r A^{-1} 1 - beta A^{-1} 1
///   E[T^2 1{T<tau}] = -tau^2 r 1 + 2 tau r A^{-1} 1 - 2 r A^{-2} 1 + 2 beta A^{-2} 1
///
/// with r = beta e^{tau A}, both divided by F_T(tau).
inline std::pair<double, double> ph_conditional_moments(const PhaseType& ph, double tau) {
    const auto k = ph.a.rows();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(k);
    const Eigen::RowVectorXd r = exp_action(ph.beta, ph.a, tau);
    const double cdf = 1.0 - r.sum();
    if (cdf < 1e-14) throw ConditioningOnNull("F_T(tau) below 1e-14 at tau=" + std::to_string(tau));
    const Eigen::VectorXd u = linalg::solve(ph.a, one, "conditional moments");
    const Eigen::VectorXd v = linalg::solve(ph.a, u, "conditional moments");
    const double m1 = (-tau * r.sum() + (r * u).value() - (ph.beta * u).value()) / cdf;
    const double m2 = (-tau * tau * r.sum() + 2.0 * tau * (r * u).value() -
                       2.0 * (r * v).value() + 2.0 * (ph.beta * v).value()) /
                      cdf;
    return {m1, m2};
}

/// 1 x L row of absorption probabilities, p = -beta A^{-1} B.
inline Eigen::RowVectorXd absorption_probs(const AbsorbingChain& amc) {
    const Eigen::MatrixXd x = linalg::solve_matrix(amc.a, amc.b, "absorption probabilities");
    return -(amc.beta * x);
}

/// DTMC over the transient states at the embedded epochs of state
/// transitions: d_ij = a_ij / (-a_ii) for i != j, zero diagonal. The divisor
/// is the row's own diagonal; dividing by the column diagonal would not give
/// a substochastic matrix.
inline Eigen::MatrixXd embedded_dtmc(const Eigen::MatrixXd& a) {
    const auto k = a.rows();
    if (a.cols() != k) throw Error("embedded_dtmc: matrix not square");
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (!(a(i, i) < 0.0)) throw ZeroDiagonal("diagonal entry " + std::to_string(i + 1) +
                                                 " of the subgenerator is not negative");
        for (Eigen::Index j = 0; j < k; ++j)
            if (i != j) d(i, j) = a(i, j) / (-a(i, i));
    }
    return d;
}

/// Total expected number of transient-state visits before absorption,
/// beta (I - D)^{-1} 1 via the fundamental matrix of the embedded DTMC.
inline double expected_visits(const AbsorbingChain& amc) {
    const auto k = amc.a.rows();
    const Eigen::MatrixXd d = embedded_dtmc(amc.a);
    const Eigen::VectorXd f =
        linalg::solve(Eigen::MatrixXd::Identity(k, k) - d, Eigen::VectorXd::Ones(k),
                      "fundamental matrix");
    return (amc.beta * f).value();
}

} // namespace aoii
