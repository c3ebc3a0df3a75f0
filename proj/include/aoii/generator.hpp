#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "aoii/errors.hpp"

namespace aoii {

// State indices in the public interface are 1-based (1..N); storage is
// 0-based, so entry (0,0) of q() belongs to state 1.

/// Validated generator of an irreducible finite-state CTMC. Immutable after
/// construction and safe to share across threads.
class GeneratorMatrix {
  public:
    /// Validates and stores Q. Rows whose sums are within 1e-9 of zero are
    /// renormalized (diagonal adjusted) so they sum to exactly zero.
    explicit GeneratorMatrix(const Eigen::MatrixXd& q) : q_(q) {
        const auto n = q.rows();
        if (n != q.cols()) throw Error("generator must be square");
        if (n < 2) throw Error("generator needs at least 2 states");
        n_ = static_cast<int>(n);
        for (int i = 0; i < n_; ++i) {
            for (int j = 0; j < n_; ++j) {
                if (i != j && q_(i, j) < 0.0) {
                    throw NegativeOffDiagonal("q(" + std::to_string(i + 1) + "," +
                                              std::to_string(j + 1) + ") = " +
                                              std::to_string(q_(i, j)) + " < 0");
                }
            }
        }
        for (int i = 0; i < n_; ++i) {
            const double residual = q_.row(i).sum();
            if (std::abs(residual) >= 1e-9) {
                throw NonzeroRowSum("row " + std::to_string(i + 1) + " sums to " +
                                    std::to_string(residual));
            }
            double off = 0.0;
            for (int j = 0; j < n_; ++j)
                if (j != i) off += q_(i, j);
            q_(i, i) = -off;
        }
        sigma_ = -q_.diagonal();
        for (int i = 0; i < n_; ++i) {
            if (!(sigma_(i) > 0.0)) {
                throw AbsorbingState("state " + std::to_string(i + 1) +
                                     " has no outgoing rate");
            }
        }
        if (!irreducible()) throw Reducible("generator is not irreducible");
    }

    int size() const { return n_; }
    const Eigen::MatrixXd& q() const { return q_; }
    /// Holding rates, sigma()(j-1) belongs to state j.
    const Eigen::VectorXd& sigma() const { return sigma_; }

  private:
    bool irreducible() const {
        // strong connectivity of the nonzero off-diagonal pattern:
        // reachability from state 0 in the graph and in its reverse
        for (bool reversed : {false, true}) {
            std::vector<char> seen(n_, 0);
            std::vector<int> stack{0};
            seen[0] = 1;
            while (!stack.empty()) {
                int u = stack.back();
                stack.pop_back();
                for (int v = 0; v < n_; ++v) {
                    if (v == u || seen[v]) continue;
                    const double rate = reversed ? q_(v, u) : q_(u, v);
                    if (rate > 0.0) {
                        seen[v] = 1;
                        stack.push_back(v);
                    }
                }
            }
            for (char s : seen)
                if (!s) return false;
        }
        return true;
    }

    Eigen::MatrixXd q_;
    Eigen::VectorXd sigma_;
    int n_ = 0;
};

/// Result of deleting state j from Q: the reduced generator block, the
/// rates into j, and the rates out of j.
struct StateRemoval {
    Eigen::MatrixXd reduced;       ///< Q with row/column j deleted, order preserved
    Eigen::VectorXd col_to_j;      ///< column j of Q excluding q_jj
    Eigen::RowVectorXd row_from_j; ///< row j of Q excluding q_jj
    int removed_index = 0;         ///< 1-based
    std::vector<int> retained;     ///< 1-based indices of the kept states, ascending
};

inline GeneratorMatrix validate_generator(const Eigen::MatrixXd& q) {
    return GeneratorMatrix(q);
}

/// Holding rates sigma_i = -q_ii and the embedded jump matrix with zero
/// diagonal and p_ij = q_ij / sigma_i.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> holding_and_jump(const GeneratorMatrix& g) {
    const int n = g.size();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j) p(i, j) = g.q()(i, j) / g.sigma()(i);
        }
    }
    return {g.sigma(), p};
}

inline StateRemoval remove_state(const GeneratorMatrix& g, int j) {
    const int n = g.size();
    if (j < 1 || j > n) {
        throw IndexOutOfRange("state index " + std::to_string(j) + " not in 1.." +
                              std::to_string(n));
    }
    const int j0 = j - 1;
    StateRemoval out;
    out.removed_index = j;
    out.retained.reserve(n - 1);
    for (int i = 0; i < n; ++i)
        if (i != j0) out.retained.push_back(i + 1);
    out.reduced.resize(n - 1, n - 1);
    out.col_to_j.resize(n - 1);
    out.row_from_j.resize(n - 1);
    for (int r = 0; r < n - 1; ++r) {
        const int i = out.retained[r] - 1;
        out.col_to_j(r) = g.q()(i, j0);
        out.row_from_j(r) = g.q()(j0, i);
        for (int c = 0; c < n - 1; ++c) out.reduced(r, c) = g.q()(i, out.retained[c] - 1);
    }
    return out;
}

/// Symmetric N-state source: q_ij = sigma/(N-1) off the diagonal.
inline GeneratorMatrix symmetric_generator(int n, double sigma = 1.0) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(n, n, sigma / (n - 1));
    q.diagonal().setConstant(-sigma);
    return GeneratorMatrix(q);
}

} // namespace aoii
