#pragma once

// Multiple-shooting Gauss-Newton SQP for the OCP.
//
// Each iteration linearizes the RK4 shooting map and the stage residuals
// (forward-mode autodiff), condenses the node increments out of the QP using
// the linearized dynamics and current defects, solves the dense box-constrained
// QP in the input increments, and takes a backtracking step on the merit
//     cost + mu * sum ||defect||_1.
// With max_iterations = 1 this is the real-time iteration scheme.

#include <chrono>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "sls/model.hpp"
#include "sls/nmpc/box_qp.hpp"
#include "sls/nmpc/ocp.hpp"

namespace sls::nmpc {

struct SolverOptions {
    int max_iterations = 10;
    double kkt_tolerance = 1e-6;
    bool line_search = true;
    double merit_penalty = 1.0;  // floor for the exact-penalty weight
    int qp_max_iterations = 500;
};

struct ControlSolution {
    std::vector<ControlInput> inputs;  // u_0 .. u_{N-1}
    std::vector<StateVec> states;      // x_0 .. x_N
    double cost = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    double solve_time = 0.0;  // s, wall clock
    bool converged = false;
    // (merit before, merit after) for each accepted step, same penalty weight.
    std::vector<std::pair<double, double>> merit_steps;

    const ControlInput& first() const { return inputs.front(); }
};

class SolverFailure : public Error {
public:
    SolverFailure(const std::string& what, ControlSolution last) : Error(what), last_iterate(std::move(last)) {}
    ControlSolution last_iterate;
};

namespace detail {

inline constexpr int kDirs = kStateDim + kInputDim;
using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, kDirs, 1>>;

inline void seed(const StateVec& x, const InputVec& u, StateVecT<Ad>& xa, InputVecT<Ad>& ua)
{
    for (int i = 0; i < kStateDim; ++i)
        xa[i] = Ad(x[i], kDirs, i);
    for (int i = 0; i < kInputDim; ++i)
        ua[i] = Ad(u[i], kDirs, kStateDim + i);
}

template <int Rows>
void extract(const Eigen::Matrix<Ad, Rows, 1>& y, Eigen::Matrix<double, Rows, 1>& val,
             Eigen::Matrix<double, Rows, kStateDim>& jx, Eigen::Matrix<double, Rows, kInputDim>& ju)
{
    for (int r = 0; r < Rows; ++r) {
        val[r] = y[r].value();
        const auto& d = y[r].derivatives();
        if (d.size() == 0) {
            jx.row(r).setZero();
            ju.row(r).setZero();
            continue;
        }
        jx.row(r) = d.template head<kStateDim>().transpose();
        ju.row(r) = d.template tail<kInputDim>().transpose();
    }
}

using ResidualJx = Eigen::Matrix<double, kResidualDim, kStateDim>;
using ResidualJu = Eigen::Matrix<double, kResidualDim, kInputDim>;
using DynJx = Eigen::Matrix<double, kStateDim, kStateDim>;
using DynJu = Eigen::Matrix<double, kStateDim, kInputDim>;

struct Linearization {
    std::vector<StateVec> next;  // f(x_k, u_k)
    std::vector<DynJx> a;
    std::vector<DynJu> b;
    std::vector<ResidualT<double>> r;
    std::vector<ResidualJx> rx;
    std::vector<ResidualJu> ru;
};

struct Condensed {
    Eigen::MatrixXd h;            // Gauss-Newton Hessian (half of the true one)
    Eigen::VectorXd g;            // half gradient of the linearized cost at du = 0
    std::vector<Eigen::MatrixXd> sens;  // d x_k / d u, 19 x 4N
    std::vector<StateVec> offset;       // x_k increment at du = 0 (from defects)
};

class Workspace {
public:
    explicit Workspace(const OcpProblem& pb) : pb_(pb), w_(effective_weights(pb)), mo_(prediction_options(pb.mode)) {}

    StateVec step(const StateVec& x, const InputVec& u) const { return rk4_step<double>(x, u, pb_.dt, pb_.params, mo_); }

    ResidualT<double> residual(int k, const StateVec& x, const InputVec& u) const
    {
        const bool terminal = k == pb_.horizon;
        return stage_residual<double>(x, u, pb_.reference[k], w_, pb_.rate_limit, terminal);
    }

    double cost(const std::vector<StateVec>& xs, const std::vector<InputVec>& us) const
    {
        double c = 0.0;
        for (int k = 0; k <= pb_.horizon; ++k)
            c += residual(k, xs[k], k < pb_.horizon ? us[k] : InputVec::Zero()).squaredNorm();
        return c;
    }

    double defect_l1(const std::vector<StateVec>& xs, const std::vector<InputVec>& us) const
    {
        double d = 0.0;
        for (int k = 0; k < pb_.horizon; ++k)
            d += (step(xs[k], us[k]) - xs[k + 1]).lpNorm<1>();
        return d;
    }

    Linearization linearize(const std::vector<StateVec>& xs, const std::vector<InputVec>& us) const
    {
        const int n = pb_.horizon;
        Linearization lin;
        lin.next.resize(n);
        lin.a.resize(n);
        lin.b.resize(n);
        lin.r.resize(n + 1);
        lin.rx.resize(n + 1);
        lin.ru.resize(n + 1);
        StateVecT<Ad> xa;
        InputVecT<Ad> ua;
        for (int k = 0; k <= n; ++k) {
            const InputVec u = k < n ? us[k] : InputVec(pb_.reference[k].input);
            seed(xs[k], u, xa, ua);
            if (k < n) {
                const StateVecT<Ad> f = rk4_step<Ad>(xa, ua, pb_.dt, pb_.params, mo_);
                extract<kStateDim>(f, lin.next[k], lin.a[k], lin.b[k]);
            }
            const ResidualT<Ad> r = stage_residual<Ad>(xa, ua, pb_.reference[k], w_, pb_.rate_limit, k == n);
            extract<kResidualDim>(r, lin.r[k], lin.rx[k], lin.ru[k]);
        }
        return lin;
    }

    Condensed condense(const Linearization& lin, const std::vector<StateVec>& xs) const
    {
        const int n = pb_.horizon;
        const int nu = kInputDim * n;
        Condensed c;
        c.h = Eigen::MatrixXd::Zero(nu, nu);
        c.g = Eigen::VectorXd::Zero(nu);
        c.sens.assign(n + 1, Eigen::MatrixXd::Zero(kStateDim, nu));
        c.offset.assign(n + 1, StateVec::Zero());

        Eigen::MatrixXd jac(kResidualDim, nu);
        for (int k = 0; k <= n; ++k) {
            if (k > 0) {
                const int cols = kInputDim * k;
                c.sens[k].leftCols(cols) = lin.a[k - 1] * c.sens[k - 1].leftCols(cols);
                c.sens[k].middleCols(kInputDim * (k - 1), kInputDim) += lin.b[k - 1];
                c.offset[k] = lin.a[k - 1] * c.offset[k - 1] + (lin.next[k - 1] - xs[k]);
            }
            const int cols = kInputDim * std::min(k + 1, n);
            jac.leftCols(cols).noalias() = lin.rx[k] * c.sens[k].leftCols(cols);
            if (k < n)
                jac.middleCols(kInputDim * k, kInputDim) += lin.ru[k];
            const ResidualT<double> r0 = lin.r[k] + lin.rx[k] * c.offset[k];
            c.h.topLeftCorner(cols, cols).noalias() += jac.leftCols(cols).transpose() * jac.leftCols(cols);
            c.g.head(cols).noalias() += jac.leftCols(cols).transpose() * r0;
        }
        return c;
    }

    const OcpProblem& problem() const { return pb_; }

private:
    const OcpProblem& pb_;
    OcpWeights w_;
    ModelOptions mo_;
};

/// Projected-gradient stationarity measure for inputs in [lo, hi].
inline double projected_gradient_norm(const Eigen::VectorXd& grad, const std::vector<InputVec>& us, double lo,
                                      double hi)
{
    double m = 0.0;
    for (int k = 0; k < static_cast<int>(us.size()); ++k)
        for (int i = 0; i < kInputDim; ++i) {
            const double gi = grad[kInputDim * k + i];
            const double ui = us[k][i];
            if ((ui <= lo && gi > 0.0) || (ui >= hi && gi < 0.0))
                continue;
            m = std::max(m, std::abs(gi));
        }
    return m;
}

}  // namespace detail

/// Single-shooting cost of an input sequence from the problem's initial state.
inline double rollout_cost(const OcpProblem& pb, const std::vector<InputVec>& us)
{
    detail::Workspace ws(pb);
    std::vector<StateVec> xs(pb.horizon + 1);
    xs[0] = pb.initial_state;
    for (int k = 0; k < pb.horizon; ++k)
        xs[k + 1] = ws.step(xs[k], us[k]);
    return ws.cost(xs, us);
}

/// Exact gradient of rollout_cost with respect to the stacked inputs.
inline Eigen::VectorXd rollout_gradient(const OcpProblem& pb, const std::vector<InputVec>& us)
{
    detail::Workspace ws(pb);
    std::vector<StateVec> xs(pb.horizon + 1);
    xs[0] = pb.initial_state;
    for (int k = 0; k < pb.horizon; ++k)
        xs[k + 1] = ws.step(xs[k], us[k]);
    const auto lin = ws.linearize(xs, us);
    return 2.0 * ws.condense(lin, xs).g;
}

class NmpcSolver {
public:
    explicit NmpcSolver(SolverOptions opt = {}) : opt_(opt) {}

    const SolverOptions& options() const { return opt_; }
    SolverOptions& options() { return opt_; }

    ControlSolution solve(const OcpProblem& pb, const ControlSolution* warm_start = nullptr) const
    {
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        pb.validate();
        const int n = pb.horizon;
        detail::Workspace ws(pb);

        std::vector<InputVec> us(n);
        std::vector<StateVec> xs(n + 1);
        const bool warm = warm_start && static_cast<int>(warm_start->inputs.size()) == n &&
                          static_cast<int>(warm_start->states.size()) == n + 1;
        if (warm) {
            for (int k = 0; k < n; ++k)
                us[k] = warm_start->inputs[std::min(k + 1, n - 1)].vec();
            for (int k = 0; k < n; ++k)
                xs[k] = warm_start->states[k + 1];
            xs[n] = ws.step(xs[n - 1], us[n - 1]);
            xs[0] = pb.initial_state;
        } else {
            xs[0] = pb.initial_state;
            for (int k = 0; k < n; ++k) {
                us[k] = pb.reference[k].input.cwiseMax(pb.u_min).cwiseMin(pb.u_max);
                xs[k + 1] = ws.step(xs[k], us[k]);
            }
        }
        for (auto& u : us)
            u = u.cwiseMax(pb.u_min).cwiseMin(pb.u_max);

        ControlSolution sol;
        double mu = opt_.merit_penalty;

        const int nu = kInputDim * n;
        for (;;) {
            const auto lin = ws.linearize(xs, us);
            const auto cond = ws.condense(lin, xs);
            double defect_inf = 0.0;
            double defect_l1 = 0.0;
            for (int k = 0; k < n; ++k) {
                const StateVec d = lin.next[k] - xs[k + 1];
                defect_inf = std::max(defect_inf, d.cwiseAbs().maxCoeff());
                defect_l1 += d.lpNorm<1>();
            }
            sol.kkt_residual =
                std::max(detail::projected_gradient_norm(2.0 * cond.g, us, pb.u_min, pb.u_max), defect_inf);
            if (!std::isfinite(sol.kkt_residual))
                break;
            if (sol.kkt_residual < opt_.kkt_tolerance) {
                sol.converged = true;
                break;
            }
            if (sol.iterations >= opt_.max_iterations)
                break;

            Eigen::VectorXd u_flat(nu);
            for (int k = 0; k < n; ++k)
                u_flat.segment<kInputDim>(kInputDim * k) = us[k];
            const Eigen::VectorXd lo = (Eigen::VectorXd::Constant(nu, pb.u_min) - u_flat).cwiseMin(0.0);
            const Eigen::VectorXd hi = (Eigen::VectorXd::Constant(nu, pb.u_max) - u_flat).cwiseMax(0.0);
            const auto qp = solve_box_qp(cond.h, cond.g, lo, hi, opt_.qp_max_iterations);
            const Eigen::VectorXd& du = qp.x;

            std::vector<StateVec> dx(n + 1);
            for (int k = 0; k <= n; ++k)
                dx[k] = cond.sens[k] * du + cond.offset[k];

            // Directional derivative of the merit along (dx, du).
            double dcost = 0.0;
            for (int k = 0; k <= n; ++k) {
                StateVec::Scalar dot = lin.r[k].dot(lin.rx[k] * dx[k]);
                if (k < n)
                    dot += lin.r[k].dot(lin.ru[k] * du.segment<kInputDim>(kInputDim * k));
                dcost += 2.0 * dot;
            }
            // Exact-penalty weight above the largest dynamics multiplier, from
            // the adjoint recursion of the Gauss-Newton model at the QP step.
            double lambda_inf = 0.0;
            StateVec lam = 2.0 * lin.rx[n].transpose() * (lin.r[n] + lin.rx[n] * dx[n]);
            lambda_inf = lam.cwiseAbs().maxCoeff();
            for (int k = n - 1; k >= 1; --k) {
                const ResidualT<double> rk =
                    lin.r[k] + lin.rx[k] * dx[k] + lin.ru[k] * du.segment<kInputDim>(kInputDim * k);
                lam = 2.0 * lin.rx[k].transpose() * rk + lin.a[k].transpose() * lam;
                lambda_inf = std::max(lambda_inf, lam.cwiseAbs().maxCoeff());
            }
            mu = std::max(mu, 1.5 * lambda_inf);
            if (defect_l1 > 0.0 && dcost - mu * defect_l1 >= 0.0)
                mu = 2.0 * dcost / defect_l1;
            const double dmerit = dcost - mu * defect_l1;
            const double merit = ws.cost(xs, us) + mu * defect_l1;

            double alpha = 1.0;
            std::vector<StateVec> xt(n + 1);
            std::vector<InputVec> ut(n);
            double trial = merit;
            bool accepted = false;
            for (int ls = 0; ls < 30; ++ls) {
                for (int k = 0; k <= n; ++k)
                    xt[k] = xs[k] + alpha * dx[k];
                for (int k = 0; k < n; ++k)
                    ut[k] = (us[k] + alpha * du.segment<kInputDim>(kInputDim * k)).cwiseMax(pb.u_min).cwiseMin(pb.u_max);
                trial = ws.cost(xt, ut) + mu * ws.defect_l1(xt, ut);
                if (!opt_.line_search || (std::isfinite(trial) && trial <= merit + 1e-4 * alpha * std::min(dmerit, 0.0))) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            ++sol.iterations;
            if (!accepted)
                break;
            xs.swap(xt);
            us.swap(ut);
            sol.merit_steps.emplace_back(merit, trial);
        }

        sol.inputs.resize(n);
        for (int k = 0; k < n; ++k)
            sol.inputs[k] = ControlInput::from(us[k]);
        sol.states = xs;
        for (auto& x : sol.states)
            x.segment<4>(idx::att).normalize();
        sol.cost = ws.cost(xs, us);
        sol.solve_time = std::chrono::duration<double>(clock::now() - t0).count();
        if (!std::isfinite(sol.cost) || !std::isfinite(sol.kkt_residual))
            throw SolverFailure("NMPC iterate diverged", sol);
        return sol;
    }

private:
    SolverOptions opt_;
};

}  // namespace sls::nmpc
