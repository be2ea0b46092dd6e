#pragma once

// Dense convex QP with box constraints,
//     min 1/2 x^T H x + g^T x   s.t.  lo <= x <= hi,
// H must be positive definite. A primal-dual active-set pass swaps many bounds
// per iteration and usually finishes in a handful of factorizations; if it
// cycles, a primal active-set method started from its projected iterate
// finishes the job.

#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace sls::nmpc {

struct BoxQpResult {
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

// Primal-dual active set on the box (semismooth Newton on the complementarity
// conditions). Returns its last iterate; `converged` is set only when the
// working sets repeat and the iterate satisfies the KKT conditions.
inline Eigen::VectorXd primal_dual_pass(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                        const Eigen::VectorXd& hi, int& iterations, bool& converged,
                                        int max_passes = 25)
{
    const Eigen::Index n = g.size();
    const Eigen::VectorXd c = h.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseInverse();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n).cwiseMax(lo).cwiseMin(hi);
    Eigen::VectorXd y = h * x + g;
    std::vector<signed char> set(static_cast<std::size_t>(n), 2);  // 2 = not yet assigned
    std::vector<Eigen::Index> free;
    converged = false;
    for (int pass = 0; pass < max_passes; ++pass) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double z = x[i] - c[i] * y[i];
            const signed char s = z < lo[i] ? -1 : (z > hi[i] ? 1 : 0);
            changed |= s != set[i];
            set[i] = s;
        }
        if (!changed) {
            const double tol = 1e-9 * (1.0 + y.cwiseAbs().maxCoeff());
            bool kkt = true;
            for (Eigen::Index i = 0; i < n && kkt; ++i) {
                if (set[i] == 0)
                    kkt = x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12;
                else
                    kkt = set[i] < 0 ? y[i] >= -tol : y[i] <= tol;
            }
            converged = kkt;
            return x;
        }
        ++iterations;
        free.clear();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (set[i] < 0)
                x[i] = lo[i];
            else if (set[i] > 0)
                x[i] = hi[i];
            else
                free.push_back(i);
        }
        if (!free.empty()) {
            const auto nf = static_cast<Eigen::Index>(free.size());
            Eigen::MatrixXd hff(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                x[free[a]] = 0.0;
                for (Eigen::Index b = 0; b < nf; ++b)
                    hff(a, b) = h(free[a], free[b]);
            }
            const Eigen::VectorXd hx = h * x + g;  // bound part only
            for (Eigen::Index a = 0; a < nf; ++a)
                rhs[a] = -hx[free[a]];
            const Eigen::VectorXd xf = hff.llt().solve(rhs);
            for (Eigen::Index a = 0; a < nf; ++a)
                x[free[a]] = xf[a];
        }
        y = h * x + g;
        for (Eigen::Index i : free)
            y[i] = 0.0;
    }
    return x;
}

}  // namespace detail

inline BoxQpResult solve_box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi, int max_iterations = 500)
{
    const Eigen::Index n = g.size();
    enum class Bound : char { Free, Lower, Upper };
    std::vector<Bound> state(static_cast<std::size_t>(n), Bound::Free);

    BoxQpResult res;
    res.x = detail::primal_dual_pass(h, g, lo, hi, res.iterations, res.converged);
    if (res.converged)
        return res;
    res.x = res.x.cwiseMax(lo).cwiseMin(hi);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (res.x[i] <= lo[i])
            state[i] = Bound::Lower;
        else if (res.x[i] >= hi[i])
            state[i] = Bound::Upper;
    }

    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(n));
    const double tol = 1e-12 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());

    for (; res.iterations < max_iterations; ++res.iterations) {
        free.clear();
        for (Eigen::Index i = 0; i < n; ++i)
            if (state[i] == Bound::Free)
                free.push_back(i);

        const Eigen::VectorXd grad = h * res.x + g;
        Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
        double step_norm = 0.0;
        if (!free.empty()) {
            const auto nf = static_cast<Eigen::Index>(free.size());
            Eigen::MatrixXd hff(nf, nf);
            Eigen::VectorXd gf(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                gf[a] = grad[free[a]];
                for (Eigen::Index b = 0; b < nf; ++b)
                    hff(a, b) = h(free[a], free[b]);
            }
            const Eigen::VectorXd pf = hff.llt().solve(-gf);
            for (Eigen::Index a = 0; a < nf; ++a)
                step[free[a]] = pf[a];
            step_norm = pf.cwiseAbs().maxCoeff();
        }

        if (step_norm <= 1e-14 * std::max(1.0, res.x.cwiseAbs().maxCoeff())) {
            // Stationary on the current face: release the bound with the
            // most negative multiplier, if any.
            Eigen::Index worst = -1;
            double worst_val = tol;
            for (Eigen::Index i = 0; i < n; ++i) {
                double v = 0.0;
                if (state[i] == Bound::Lower)
                    v = -grad[i];
                else if (state[i] == Bound::Upper)
                    v = grad[i];
                if (v > worst_val) {
                    worst_val = v;
                    worst = i;
                }
            }
            if (worst < 0) {
                res.converged = true;
                return res;
            }
            state[worst] = Bound::Free;
            continue;
        }

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        Bound blocking_side = Bound::Free;
        for (Eigen::Index i : free) {
            if (step[i] < 0.0) {
                const double a = (lo[i] - res.x[i]) / step[i];
                if (a < alpha) {
                    alpha = std::max(a, 0.0);
                    blocking = i;
                    blocking_side = Bound::Lower;
                }
            } else if (step[i] > 0.0) {
                const double a = (hi[i] - res.x[i]) / step[i];
                if (a < alpha) {
                    alpha = std::max(a, 0.0);
                    blocking = i;
                    blocking_side = Bound::Upper;
                }
            }
        }
        res.x += alpha * step;
        if (blocking >= 0) {
            state[blocking] = blocking_side;
            res.x[blocking] = blocking_side == Bound::Lower ? lo[blocking] : hi[blocking];
        }
    }
    return res;
}

}  // namespace sls::nmpc
