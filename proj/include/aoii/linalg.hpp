#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <iostream>

#include "aoii/errors.hpp"

namespace aoii::linalg {

constexpr double kPoissonTail = 1e-12;  // truncation mass for uniformization
constexpr double kCondWarn = 1e12;      // condition number warning threshold

namespace detail {

inline std::atomic<int>& cond_warnings() {
    static std::atomic<int> count{0};
    return count;
}

/// Plain uniformization series, valid while exp(-rho) does not underflow.
/// M = I + A/L is nonnegative and substochastic for a subgenerator A, so the
/// sum involves only nonnegative terms.
inline Eigen::MatrixXd unif_series(const Eigen::MatrixXd& A, double L, double t) {
    const auto K = A.rows();
    const double rho = L * t;
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(K, K) + A / L;
    double w = std::exp(-rho);
    double cum = w;
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(K, K);
    Eigen::MatrixXd sum = w * term;
    long k = 0;
    while (cum < 1.0 - kPoissonTail && k < 100000) {
        ++k;
        term = term * M;
        w *= rho / static_cast<double>(k);
        sum += w * term;
        cum += w;
    }
    return sum;
}

} // namespace detail

/// e^{tA} for a subgenerator A (nonpositive diagonal, nonnegative
/// off-diagonal, row sums <= 0) via uniformization. Large L*t is split
/// dyadically and squared; every intermediate stays nonnegative.
inline Eigen::MatrixXd mat_exp(const Eigen::MatrixXd& A, double t) {
    if (A.rows() != A.cols()) throw Error("mat_exp: matrix not square");
    if (t < 0.0) throw Error("mat_exp: negative time t=" + std::to_string(t));
    const auto K = A.rows();
    const double L = A.diagonal().cwiseAbs().maxCoeff();
    if (t == 0.0 || L == 0.0) return Eigen::MatrixXd::Identity(K, K);

    double rho = L * t;
    Eigen::MatrixXd E;
    if (rho <= 256.0) {
        E = detail::unif_series(A, L, t);
    } else {
        int s = static_cast<int>(std::ceil(std::log2(rho / 64.0)));
        E = detail::unif_series(A, L, t / std::pow(2.0, s));
        for (int i = 0; i < s; ++i) E = E * E;
    }
    if (!E.allFinite()) throw NonFinite("mat_exp: non-finite result");
    return E;
}

/// r * e^{tA} without forming the full exponential when L*t is moderate.
inline Eigen::RowVectorXd exp_action(const Eigen::RowVectorXd& r,
                                     const Eigen::MatrixXd& A, double t) {
    const auto K = A.rows();
    if (t < 0.0) throw Error("exp_action: negative time");
    const double L = A.diagonal().cwiseAbs().maxCoeff();
    const double rho = L * t;
    if (t == 0.0 || L == 0.0) return r;
    if (rho > 512.0) return r * mat_exp(A, t);

    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(K, K) + A / L;
    double w = std::exp(-rho);
    double cum = w;
    Eigen::RowVectorXd term = r;
    Eigen::RowVectorXd sum = w * term;
    long k = 0;
    while (cum < 1.0 - kPoissonTail && k < 100000) {
        ++k;
        term = term * M;
        w *= rho / static_cast<double>(k);
        sum += w * term;
        cum += w;
    }
    if (!sum.allFinite()) throw NonFinite("exp_action: non-finite result");
    return sum;
}

/// Reusable uniformization operator for repeated vector-exponential
/// evaluations against one subgenerator: caches M = I + A/L so each apply is
/// pure vector-matrix work.
class UniformizedOp {
  public:
    explicit UniformizedOp(const Eigen::MatrixXd& A)
        : a_(A), rate_(A.diagonal().cwiseAbs().maxCoeff()),
          m_(Eigen::MatrixXd::Identity(A.rows(), A.cols()) + A / rate_) {}

    /// out = r e^{tA}. Uses internal scratch buffers; instances are not for
    /// concurrent use.
    void apply(const Eigen::RowVectorXd& r, double t, Eigen::RowVectorXd& out) const {
        const double rho = rate_ * t;
        if (t == 0.0 || rate_ == 0.0) {
            out = r;
            return;
        }
        if (rho > 512.0) {
            out.noalias() = r * mat_exp(a_, t);
            return;
        }
        double w = std::exp(-rho);
        double cum = w;
        scratch_ = r;
        if (next_.size() != r.size()) next_.resize(r.size());
        out = w * scratch_;
        long k = 0;
        while (cum < 1.0 - kPoissonTail && k < 100000) {
            ++k;
            next_.noalias() = scratch_ * m_;
            scratch_.swap(next_);
            w *= rho / static_cast<double>(k);
            out.noalias() += w * scratch_;
            cum += w;
        }
        if (!out.allFinite()) throw NonFinite("uniformized apply: non-finite result");
    }

  private:
    Eigen::MatrixXd a_;
    double rate_;
    Eigen::MatrixXd m_;
    mutable Eigen::RowVectorXd scratch_{Eigen::RowVectorXd(0)};
    mutable Eigen::RowVectorXd next_{Eigen::RowVectorXd(0)};
};

/// LU solve A x = b with partial pivoting. Warns (a few times per process)
/// when the condition estimate exceeds kCondWarn, throws SingularMatrix when
/// the factorization is unusable.
inline Eigen::VectorXd solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                             const char* what = "linear system") {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double rcond = lu.rcond();
    if (!(rcond > 0.0) || !std::isfinite(rcond)) {
        throw SingularMatrix(std::string("singular matrix in ") + what);
    }
    if (rcond < 1.0 / kCondWarn) {
        int n = detail::cond_warnings().fetch_add(1);
        if (n < 5) {
            std::cerr << "aoii: ill-conditioned " << what
                      << " (rcond=" << rcond << ")\n";
        }
    }
    Eigen::VectorXd x = lu.solve(b);
    if (!x.allFinite()) throw SingularMatrix(std::string("non-finite solve in ") + what);
    return x;
}

/// Matrix right-hand-side variant of solve().
inline Eigen::MatrixXd solve_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                    const char* what = "linear system") {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double rcond = lu.rcond();
    if (!(rcond > 0.0) || !std::isfinite(rcond)) {
        throw SingularMatrix(std::string("singular matrix in ") + what);
    }
    if (rcond < 1.0 / kCondWarn) {
        int n = detail::cond_warnings().fetch_add(1);
        if (n < 5) {
            std::cerr << "aoii: ill-conditioned " << what
                      << " (rcond=" << rcond << ")\n";
        }
    }
    Eigen::MatrixXd X = lu.solve(B);
    if (!X.allFinite()) throw SingularMatrix(std::string("non-finite solve in ") + what);
    return X;
}

} // namespace aoii::linalg
