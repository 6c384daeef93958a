#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "pudetm/dataset.hpp"
#include "pudetm/errors.hpp"
#include "pudetm/numerics.hpp"

namespace pudetm {

/// Lagrange multipliers of the two tilt constraints, solved at a given theta.
struct LagrangePair {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

struct LagrangeSolveInfo {
    bool degenerate = false;  // both tilts identically 1; (0,0) by convention
    int iterations = 0;
    double residual = 0.0;    // inf-norm of the two constraint equations
};

namespace detail {

/// Linear predictors alpha_t + x'beta_t for every pooled row.
struct TiltLogs {
    VectorXd g1;
    VectorXd g2;
};

inline TiltLogs tilt_logs(const Dataset& ds, const Theta& th) {
    if (th.p() != ds.p()) throw DomainError("theta/feature dimension mismatch");
    TiltLogs t;
    t.g1 = (ds.x() * th.beta1).array() + th.alpha1;
    t.g2 = (ds.x() * th.beta2).array() + th.alpha2;
    return t;
}

/// log{pi e^{g1} + (1-pi) e^{g2}} per target row, evaluated in log space.
inline double mixture_log_term(const Dataset& ds, const Theta& th, const TiltLogs& t) {
    const double lp = std::log(th.pi);
    const double lq = std::log1p(-th.pi);
    double sum = 0.0;
    for (int j = ds.n(); j < ds.N(); ++j) {
        double a = lp + t.g1(j);
        double b = lq + t.g2(j);
        double hi = std::max(a, b);
        sum += hi + std::log1p(std::exp(std::min(a, b) - hi));
    }
    return sum;
}

}  // namespace detail

/// Solve the two-equation Lagrange system at theta: the stationary point of
/// the convex inner function of the profile log-EL. Starts at the limiting
/// values (c pi, c (1-pi)); falls back to (0,0).
inline LagrangePair solve_lagrange(const Dataset& ds, const Theta& th,
                                   LagrangeSolveInfo* info = nullptr) {
    detail::TiltLogs t = detail::tilt_logs(ds, th);
    VectorXd t1 = t.g1.array().unaryExpr([](double g) { return std::expm1(g); });
    VectorXd t2 = t.g2.array().unaryExpr([](double g) { return std::expm1(g); });

    if (t1.cwiseAbs().maxCoeff() <= 1e-12 && t2.cwiseAbs().maxCoeff() <= 1e-12) {
        if (info) *info = {true, 0, 0.0};
        return {0.0, 0.0};  // every lambda solves; uniform-weight convention
    }

    // Maximize -h(lambda): concave, feasible set {all denominators > 0}.
    Objective obj = [&](const VectorXd& lam, VectorXd* grad, MatrixXd* hess) -> double {
        VectorXd d = 1.0 + (lam(0) * t1 + lam(1) * t2).array();
        if (d.minCoeff() <= 0.0) return std::numeric_limits<double>::quiet_NaN();
        double value = d.array().log().sum();
        if (grad) {
            VectorXd inv = d.cwiseInverse();
            (*grad)(0) = t1.dot(inv);
            (*grad)(1) = t2.dot(inv);
            VectorXd inv2 = inv.cwiseProduct(inv);
            (*hess)(0, 0) = -t1.cwiseProduct(t1).dot(inv2);
            (*hess)(0, 1) = (*hess)(1, 0) = -t1.cwiseProduct(t2).dot(inv2);
            (*hess)(1, 1) = -t2.cwiseProduct(t2).dot(inv2);
        }
        return value;
    };

    NewtonOptions nopts;
    nopts.max_iter = 200;
    nopts.grad_tol = 1e-9;

    VectorXd start(2);
    start << ds.c() * th.pi, ds.c() * (1.0 - th.pi);
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            NewtonResult r = damped_newton(obj, start, nopts);
            if (info) *info = {false, r.iterations, r.grad_norm};
            return {r.x(0), r.x(1)};
        } catch (const NonConvergenceError& e) {
            if (attempt == 1) {
                // Distinguish a shrinking feasible region from plain stalling.
                if (!e.last_iterate.empty()) {
                    VectorXd lam = Eigen::Map<const VectorXd>(e.last_iterate.data(), 2);
                    VectorXd d = 1.0 + (lam(0) * t1 + lam(1) * t2).array();
                    if (d.minCoeff() < 1e-8)
                        throw FeasibilityError(
                            "lagrange system: boundary reached; empirical convex hull "
                            "condition appears violated");
                }
                throw;
            }
            start.setZero();
        } catch (const SingularError&) {
            if (attempt == 1) throw;
            start.setZero();
        }
    }
    throw NonConvergenceError("lagrange system: unreachable");
}

/// EL point masses p_i = N^{-1} / [1 + sum_t lambda_t (e^{alpha_t + x'beta_t} - 1)].
inline VectorXd el_weights(const Dataset& ds, const Theta& th, const LagrangePair& lam) {
    detail::TiltLogs t = detail::tilt_logs(ds, th);
    auto em1 = [](double g) { return std::expm1(g); };
    VectorXd d = (1.0 + lam.lambda1 * t.g1.array().unaryExpr(em1) +
                  lam.lambda2 * t.g2.array().unaryExpr(em1))
                     .matrix();
    if (d.minCoeff() <= 0.0)
        throw FeasibilityError("el_weights: non-positive denominator at a sample point");
    return d.cwiseInverse() / static_cast<double>(ds.N());
}

/// Profile log-EL after maximizing out the point masses. Equals the log-EL
/// plus N log N at any feasible theta; always <= N log N.
inline double profile_log_el(const Dataset& ds, const Theta& th,
                             LagrangePair* lam_out = nullptr) {
    LagrangeSolveInfo info;
    LagrangePair lam = solve_lagrange(ds, th, &info);
    if (lam_out) *lam_out = lam;
    detail::TiltLogs t = detail::tilt_logs(ds, th);
    double log_denom_sum = 0.0;
    for (int i = 0; i < ds.N(); ++i) {
        double d = 1.0 + lam.lambda1 * std::expm1(t.g1(i)) + lam.lambda2 * std::expm1(t.g2(i));
        if (d <= 0.0) throw FeasibilityError("profile_log_el: non-positive denominator");
        log_denom_sum += std::log(d);
    }
    return -log_denom_sum + detail::mixture_log_term(ds, th, t);
}

/// log-EL of the full parameter (theta, p_1..p_N) for feasible weights.
inline double log_el(const Dataset& ds, const Theta& th, const VectorXd& weights) {
    if (weights.size() != ds.N()) throw DomainError("log_el: weight vector has wrong length");
    detail::TiltLogs t = detail::tilt_logs(ds, th);
    return weights.array().log().sum() + detail::mixture_log_term(ds, th, t);
}

/// Complete-data M-step objective: the weighted three-class multinomial
/// log-likelihood in (alpha1*, beta1, alpha2*, beta2), concave. Parameters are
/// packed [alpha1*, beta1, alpha2*, beta2]. Construction precomputes the
/// omega-weighted data sums; eval() is cheap enough to call inside Newton.
class QObjective {
public:
    QObjective(const Dataset& ds, const VectorXd& omega) : ds_(ds) {
        if (omega.size() != ds.m()) throw DomainError("q_objective: omega must have length m");
        if (omega.minCoeff() < 0.0 || omega.maxCoeff() > 1.0)
            throw DomainError("q_objective: omega entries must lie in [0,1]");
        s1_ = omega.sum();
        s2_ = ds.m() - s1_;
        tx1_ = ds.target_x().transpose() * omega;
        tx2_ = ds.target_x().colwise().sum().transpose() - tx1_;
    }

    int dim() const { return 2 * (ds_.p() + 1); }
    double s1() const { return s1_; }
    double s2() const { return s2_; }

    double eval(const VectorXd& v, VectorXd* grad, MatrixXd* hess) const {
        const int p = ds_.p();
        const int np = ds_.N();
        const double a1 = v(0);
        const double a2 = v(p + 1);
        auto b1 = v.segment(1, p);
        auto b2 = v.segment(p + 2, p);

        VectorXd z1 = (ds_.x() * b1).array() + a1;
        VectorXd z2 = (ds_.x() * b2).array() + a2;

        double value = a1 * s1_ + b1.dot(tx1_) + a2 * s2_ + b2.dot(tx2_);
        VectorXd p1, p2;
        if (grad || hess) {
            p1.resize(np);
            p2.resize(np);
        }
        for (int i = 0; i < np; ++i) {
            double hi = std::max({0.0, z1(i), z2(i)});
            double e0 = std::exp(-hi);
            double e1 = std::exp(z1(i) - hi);
            double e2 = std::exp(z2(i) - hi);
            double denom = e0 + e1 + e2;
            value -= hi + std::log(denom);
            if (grad || hess) {
                p1(i) = e1 / denom;
                p2(i) = e2 / denom;
            }
        }
        if (!std::isfinite(value)) return std::numeric_limits<double>::quiet_NaN();
        if (grad) {
            grad->resize(dim());
            (*grad)(0) = s1_ - p1.sum();
            grad->segment(1, p) = tx1_ - ds_.x().transpose() * p1;
            (*grad)(p + 1) = s2_ - p2.sum();
            grad->segment(p + 2, p) = tx2_ - ds_.x().transpose() * p2;
        }
        if (hess) {
            hess->resize(dim(), dim());
            VectorXd w11 = p1.array() * (1.0 - p1.array());
            VectorXd w22 = p2.array() * (1.0 - p2.array());
            VectorXd w12 = p1.cwiseProduct(p2);
            fill_block(*hess, 0, 0, w11, -1.0);
            fill_block(*hess, p + 1, p + 1, w22, -1.0);
            fill_block(*hess, 0, p + 1, w12, 1.0);
            hess->block(p + 1, 0, p + 1, p + 1) =
                hess->block(0, p + 1, p + 1, p + 1).transpose();
        }
        return value;
    }

private:
    void fill_block(MatrixXd& h, int r, int c, const VectorXd& w, double sign) const {
        const int p = ds_.p();
        MatrixXd xw = ds_.x().array().colwise() * w.array();
        h(r, c) = sign * w.sum();
        h.block(r, c + 1, 1, p) = sign * xw.colwise().sum();
        h.block(r + 1, c, p, 1) = h.block(r, c + 1, 1, p).transpose();
        h.block(r + 1, c + 1, p, p) = sign * (xw.transpose() * ds_.x());
    }

    const Dataset& ds_;
    double s1_ = 0.0;
    double s2_ = 0.0;
    VectorXd tx1_;
    VectorXd tx2_;
};

struct QEval {
    double value = 0.0;
    VectorXd grad;
    MatrixXd hess;
};

/// One-shot evaluation of the M-step objective with exact derivatives.
inline QEval q_objective(const Dataset& ds, const VectorXd& omega, double alpha1s, double alpha2s,
                         const VectorXd& beta1, const VectorXd& beta2) {
    QObjective q(ds, omega);
    VectorXd v(q.dim());
    v(0) = alpha1s;
    v.segment(1, ds.p()) = beta1;
    v(ds.p() + 1) = alpha2s;
    v.segment(ds.p() + 2, ds.p()) = beta2;
    QEval out;
    out.value = q.eval(v, &out.grad, &out.hess);
    if (!std::isfinite(out.value)) throw DomainError("q_objective: non-finite value");
    return out;
}

}  // namespace pudetm
