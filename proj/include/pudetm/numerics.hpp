#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "pudetm/errors.hpp"

namespace pudetm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NewtonOptions {
    int max_iter = 100;
    double grad_tol = 1e-10;
    int step_halving_max = 30;
};

/// Solve A x = b for symmetric positive definite A via an unpivoted Cholesky
/// factorization. Throws SingularError carrying the index of the first
/// non-positive pivot when A is not SPD (within a relative tolerance).
inline VectorXd solve_spd(const MatrixXd& a, const VectorXd& b) {
    const int n = static_cast<int>(a.rows());
    if (a.cols() != n || b.size() != n) throw DomainError("solve_spd: dimension mismatch");
    MatrixXd l = MatrixXd::Zero(n, n);
    const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
    for (int j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > 1e-14 * scale)) {
            throw SingularError("solve_spd: non-positive pivot at index " + std::to_string(j), j);
        }
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
        }
    }
    VectorXd y = l.triangularView<Eigen::Lower>().solve(b);
    return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

namespace detail {

/// Regularized lower incomplete gamma P(a, x) by its power series.
/// Valid for x < a + 1 where the series converges quickly.
inline double gamma_p_series(double a, double x) {
    if (x <= 0.0) return 0.0;
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int k = 0; k < 500; ++k) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz's continued fraction.
/// Valid for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw DomainError("gamma_q: requires x >= 0, a > 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

}  // namespace detail

/// Chi-square survival function Pr(X > x) for X ~ chi^2 with df degrees of freedom.
inline double chi2_sf(double x, int df) {
    if (df < 1) throw DomainError("chi2_sf: df must be >= 1");
    if (x < 0.0) throw DomainError("chi2_sf: x must be >= 0");
    return detail::gamma_q(0.5 * df, 0.5 * x);
}

inline double chi2_cdf(double x, int df) { return 1.0 - chi2_sf(x, df); }

/// Quantile: the x with chi2_cdf(x, df) = q, by bisection on the survival
/// function. Monotone in q by construction.
inline double chi2_quantile(double q, int df) {
    if (df < 1) throw DomainError("chi2_quantile: df must be >= 1");
    if (!(q > 0.0 && q < 1.0)) throw DomainError("chi2_quantile: q must lie in (0,1)");
    const double target = 1.0 - q;
    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(df));
    while (chi2_sf(hi, df) > target) {
        hi *= 2.0;
        if (hi > 1e12) break;
    }
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (chi2_sf(mid, df) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

/// Objective callback for damped_newton. Must return the objective value at x
/// (maximization) and, when the pointers are non-null, fill gradient and
/// Hessian. Returning NaN or -inf marks x as infeasible.
using Objective = std::function<double(const VectorXd& x, VectorXd* grad, MatrixXd* hess)>;

struct NewtonResult {
    VectorXd x;
    double value = 0.0;
    double grad_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton ascent with step halving. Never accepts a step that lowers
/// the objective or leaves the feasible region. Hessian solves get one ridge
/// retry (1e-10 I) before a singularity is reported.
inline NewtonResult damped_newton(const Objective& f, VectorXd x0, const NewtonOptions& opts = {}) {
    if (opts.max_iter < 1 || !(opts.grad_tol > 0.0)) throw ConfigError("damped_newton: bad options");
    const int dim = static_cast<int>(x0.size());
    NewtonResult res;
    res.x = std::move(x0);
    VectorXd grad(dim);
    MatrixXd hess(dim, dim);
    res.value = f(res.x, &grad, &hess);
    if (!std::isfinite(res.value)) throw DomainError("damped_newton: infeasible start");

    for (int it = 0; it < opts.max_iter; ++it) {
        res.grad_norm = grad.lpNorm<Eigen::Infinity>();
        if (res.grad_norm <= opts.grad_tol) {
            res.converged = true;
            return res;
        }
        VectorXd dir;
        try {
            dir = solve_spd(-hess, grad);
        } catch (const SingularError&) {
            MatrixXd ridged = -hess;
            ridged.diagonal().array() += 1e-10;
            dir = solve_spd(ridged, grad);  // second failure propagates
        }
        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opts.step_halving_max; ++h) {
            VectorXd cand = res.x + step * dir;
            double v = f(cand, nullptr, nullptr);
            if (std::isfinite(v) && v >= res.value) {
                res.x = std::move(cand);
                res.value = f(res.x, &grad, &hess);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        res.iterations = it + 1;
        if (!accepted) {
            // No admissible step along the Newton direction; report where we stopped.
            std::vector<double> last(res.x.data(), res.x.data() + res.x.size());
            throw NonConvergenceError("damped_newton: step halving exhausted at iteration " +
                                          std::to_string(it + 1),
                                      std::move(last));
        }
    }
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (res.grad_norm <= opts.grad_tol) {
        res.converged = true;
        return res;
    }
    std::vector<double> last(res.x.data(), res.x.data() + res.x.size());
    throw NonConvergenceError("damped_newton: max_iter reached with gradient norm " +
                                  std::to_string(res.grad_norm),
                              std::move(last));
}

}  // namespace pudetm
