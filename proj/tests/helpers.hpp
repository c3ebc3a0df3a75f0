#pragma once

// Test-only oracles, independent of the library's computational paths.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "aoii/phase_type.hpp"

namespace testing_oracles {

inline Eigen::MatrixXd q1() {
    Eigen::MatrixXd q(2, 2);
    q << -0.6, 0.6, 0.75, -0.75;
    return q;
}

inline Eigen::MatrixXd q2() {
    Eigen::MatrixXd q(3, 3);
    q << -1.025, 1.0, 0.025, 0.05, -0.75, 0.7, 0.4, 0.01, -0.41;
    return q;
}

/// Truncated Taylor series sum_{k<=terms} (tA)^k / k!.
inline Eigen::MatrixXd series_exp(const Eigen::MatrixXd& a, double t, int terms = 60) {
    const auto k = a.rows();
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(k, k);
    Eigen::MatrixXd sum = term;
    for (int i = 1; i <= terms; ++i) {
        term = term * (t * a) / static_cast<double>(i);
        sum += term;
    }
    return sum;
}

/// Adaptive Simpson quadrature.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-9, int depth = 40) {
    const auto simpson = [&](double lo, double hi) {
        return (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    };
    std::function<double(double, double, double, int)> rec =
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

struct McAbsorption {
    double mean_time = 0.0;
    double second_moment = 0.0;
    double stderr_mean = 0.0;
    double stderr_second = 0.0;
    std::vector<double> class_probs;      ///< absorption distribution over L classes
    std::vector<double> class_stderr;
    double mean_visits = 0.0;
    double stderr_visits = 0.0;
};

/// Direct path sampling of an absorbing chain with std::mt19937_64; counts
/// transient-state visits and the absorption time/class.
inline McAbsorption mc_absorption(const aoii::AbsorbingChain& amc, long paths,
                                  std::uint64_t seed) {
    const auto k = amc.a.rows();
    const auto l = amc.b.cols();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    McAbsorption out;
    out.class_probs.assign(l, 0.0);
    out.class_stderr.assign(l, 0.0);
    double sum_t = 0.0, sum_t2 = 0.0, sum_t4 = 0.0;
    double sum_vis = 0.0, sum_vis2 = 0.0;

    for (long p = 0; p < paths; ++p) {
        // initial transient state from beta
        double u = unif(gen);
        Eigen::Index s = 0;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            acc += amc.beta(i);
            if (u < acc) {
                s = i;
                break;
            }
            s = i;
        }
        double t = 0.0;
        long visits = 1;
        int cls = -1;
        while (cls < 0) {
            const double rate = -amc.a(s, s);
            std::exponential_distribution<double> hold(rate);
            t += hold(gen);
            double v = unif(gen) * rate;
            double run = 0.0;
            Eigen::Index dest = -1;
            bool absorbed = false;
            for (Eigen::Index i = 0; i < k && dest < 0; ++i) {
                if (i == s) continue;
                run += amc.a(s, i);
                if (v < run) dest = i;
            }
            if (dest < 0) {
                for (Eigen::Index c = 0; c < l; ++c) {
                    run += amc.b(s, c);
                    if (v < run) {
                        cls = static_cast<int>(c);
                        absorbed = true;
                        break;
                    }
                }
                if (!absorbed) cls = static_cast<int>(l - 1);
            } else {
                s = dest;
                ++visits;
            }
        }
        sum_t += t;
        sum_t2 += t * t;
        sum_t4 += t * t * t * t;
        sum_vis += static_cast<double>(visits);
        sum_vis2 += static_cast<double>(visits) * visits;
        out.class_probs[cls] += 1.0;
    }

    const double n = static_cast<double>(paths);
    out.mean_time = sum_t / n;
    out.second_moment = sum_t2 / n;
    out.stderr_mean = std::sqrt((sum_t2 / n - out.mean_time * out.mean_time) / n);
    out.stderr_second =
        std::sqrt((sum_t4 / n - out.second_moment * out.second_moment) / n);
    out.mean_visits = sum_vis / n;
    out.stderr_visits = std::sqrt((sum_vis2 / n - out.mean_visits * out.mean_visits) / n);
    for (std::size_t c = 0; c < out.class_probs.size(); ++c) {
        const double ph = out.class_probs[c] / n;
        out.class_probs[c] = ph;
        out.class_stderr[c] = std::sqrt(ph * (1.0 - ph) / n);
    }
    return out;
}

/// Conditional absorption-time moments given T < tau by rejection sampling.
inline std::pair<double, double> mc_conditional_moments(const aoii::AbsorbingChain& amc,
                                                        double tau, long accepted_target,
                                                        std::uint64_t seed,
                                                        double* stderr_m1 = nullptr) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto k = amc.a.rows();
    double sum1 = 0.0, sum2 = 0.0, sumsq1 = 0.0;
    long accepted = 0;
    while (accepted < accepted_target) {
        double u = unif(gen);
        Eigen::Index s = 0;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            acc += amc.beta(i);
            if (u < acc) {
                s = i;
                break;
            }
            s = i;
        }
        double t = 0.0;
        bool absorbed = false;
        while (t < tau && !absorbed) {
            const double rate = -amc.a(s, s);
            std::exponential_distribution<double> hold(rate);
            t += hold(gen);
            if (t >= tau) break;
            double v = unif(gen) * rate;
            double run = 0.0;
            Eigen::Index dest = -1;
            for (Eigen::Index i = 0; i < k && dest < 0; ++i) {
                if (i == s) continue;
                run += amc.a(s, i);
                if (v < run) dest = i;
            }
            if (dest < 0)
                absorbed = true;
            else
                s = dest;
        }
        if (absorbed && t < tau) {
            sum1 += t;
            sum2 += t * t;
            sumsq1 += t * t;
            ++accepted;
        }
    }
    const double n = static_cast<double>(accepted);
    if (stderr_m1) *stderr_m1 = std::sqrt((sum2 / n - (sum1 / n) * (sum1 / n)) / n);
    return {sum1 / n, sum2 / n};
}

} // namespace testing_oracles
