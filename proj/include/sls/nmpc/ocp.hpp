#pragma once

// Optimal control problem: horizon, references, weights, and the stage
// residuals whose weighted squared norm is the cost.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "sls/dynamics.hpp"
#include "sls/model.hpp"
#include "sls/types.hpp"

namespace sls::nmpc {

enum class Mode { LoadAware, Classic };

inline const char* to_string(Mode m) { return m == Mode::LoadAware ? "load" : "classic"; }

/// Diagonal weight blocks; every scalar expands to a 3x3 identity block.
struct OcpWeights {
    // Quadrotor: position, velocity, attitude error, body rates.
    double quad_pos = 100.0;
    double quad_vel = 80.0;
    double quad_att = 0.3;
    double quad_rate = 1.0;
    // Load: position, velocity, cable direction, cable rate.
    double load_pos = 0.3;
    double load_vel = 0.3;
    double load_dir = 20.0;
    double load_rate = 0.3;
    double control = 1.0;         // per motor, N^-2
    // S_N = terminal_scale * [S_Q, S_L]. The LQR cost-to-go at hover is roughly
    // 20-30x the stage weight on position, so equal weights leave the 1 s
    // horizon short-sighted against the 2 s pendulum period.
    double terminal_scale = 20.0;
    double rate_limit_penalty = 100.0;  // on |omega_i| beyond rate_limit

    void validate() const
    {
        for (double w : {quad_pos, quad_vel, quad_att, quad_rate, load_pos, load_vel, load_dir, load_rate, control,
                         terminal_scale, rate_limit_penalty})
            if (!(w >= 0.0))
                throw InvalidArgument("OCP weights must be non-negative");
    }
};

struct StageReference {
    Vec3 quad_pos = Vec3::Zero();
    Vec3 quad_vel = Vec3::Zero();
    Vec4 quad_att{1.0, 0.0, 0.0, 0.0};
    Vec3 quad_rate = Vec3::Zero();
    Vec3 load_pos = Vec3::Zero();
    Vec3 load_vel = Vec3::Zero();
    Vec3 cable_dir{0.0, 0.0, -1.0};
    Vec3 cable_rate = Vec3::Zero();
    Vec4 input = Vec4::Zero();
};

struct OcpProblem {
    int horizon = 20;
    double dt = 0.05;
    StateVec initial_state = StateVec::Zero();
    std::vector<StageReference> reference;  // horizon + 1 entries
    double u_min = 0.0;
    double u_max = 17.6;
    double rate_limit = 3.0;  // rad/s per axis
    Mode mode = Mode::LoadAware;
    OcpWeights weights;
    PhysicalParams params;

    void validate() const
    {
        if (horizon < 1)
            throw InvalidArgument("horizon must be at least one step");
        if (static_cast<int>(reference.size()) != horizon + 1)
            throw InvalidArgument("reference length must equal horizon + 1");
        if (!(dt > 0) || !(u_min <= u_max) || !(rate_limit > 0))
            throw InvalidArgument("invalid OCP bounds or step");
        if (!initial_state.allFinite())
            throw InvalidArgument("initial state is not finite");
        weights.validate();
    }
};

/// Weights as seen by the optimizer: the load-agnostic mode ignores the load.
inline OcpWeights effective_weights(const OcpProblem& pb)
{
    OcpWeights w = pb.weights;
    if (pb.mode == Mode::Classic)
        w.load_pos = w.load_vel = w.load_dir = w.load_rate = 0.0;
    return w;
}

/// Toggle between load-aware and load-agnostic prediction. The stored load
/// weights are kept, so toggling twice restores the original problem.
inline OcpProblem baseline_mode_switch(const OcpProblem& pb)
{
    OcpProblem out = pb;
    out.mode = pb.mode == Mode::LoadAware ? Mode::Classic : Mode::LoadAware;
    return out;
}

inline ModelOptions prediction_options(Mode m)
{
    ModelOptions o;
    o.cable = m == Mode::LoadAware ? CableModel::Constrained : CableModel::Detached;
    return o;
}

/// One prediction step. Load-aware: tension recomputed at every RK4 stage.
/// Classic: no cable force, load states frozen.
template <class S = double>
StateVecT<S> discretize_dynamics(const StateVecT<S>& x, const InputVecT<S>& u, double dt, Mode mode,
                                 const PhysicalParams& p)
{
    return rk4_step<S>(x, u, dt, p, prediction_options(mode));
}

inline constexpr int kResidualDim = 31;
template <class S> using ResidualT = Eigen::Matrix<S, kResidualDim, 1>;

/// Weighted stage residual r with cost = ||r||^2. Rows: quad pos/vel/att/rate
/// (12), load pos/vel/dir/rate (12), input (4), rate-limit excess (3).
/// The terminal stage drops the input rows and scales state rows.
template <class S>
ResidualT<S> stage_residual(const StateVecT<S>& x, const InputVecT<S>& u, const StageReference& ref,
                            const OcpWeights& w, double rate_limit, bool terminal)
{
    using std::sqrt;
    const double scale = terminal ? w.terminal_scale : 1.0;
    auto sw = [scale](double weight) { return std::sqrt(weight * scale); };

    ResidualT<S> r = ResidualT<S>::Zero();
    const Vec3T<S> pq = x.template segment<3>(idx::pos);
    const Vec3T<S> vq = x.template segment<3>(idx::vel);
    const Vec4T<S> q = x.template segment<4>(idx::att);
    const Vec3T<S> omega = x.template segment<3>(idx::rate);
    const Vec3T<S> pl = x.template segment<3>(idx::load_pos);
    const Vec3T<S> vl = x.template segment<3>(idx::load_vel);

    r.template segment<3>(0) = (pq - ref.quad_pos.cast<S>()) * sw(w.quad_pos);
    r.template segment<3>(3) = (vq - ref.quad_vel.cast<S>()) * sw(w.quad_vel);
    r.template segment<3>(6) = quaternion_error_decompose<S>(q, ref.quad_att.cast<S>()) * sw(w.quad_att);
    r.template segment<3>(9) = (omega - ref.quad_rate.cast<S>()) * sw(w.quad_rate);

    if (w.load_pos + w.load_vel + w.load_dir + w.load_rate > 0.0) {
        Vec3T<S> dir, rate;
        cable_kinematics<S>(Vec3T<S>(pl - pq), Vec3T<S>(vl - vq), dir, rate);
        r.template segment<3>(12) = (pl - ref.load_pos.cast<S>()) * sw(w.load_pos);
        r.template segment<3>(15) = (vl - ref.load_vel.cast<S>()) * sw(w.load_vel);
        r.template segment<3>(18) = (dir - ref.cable_dir.cast<S>()) * sw(w.load_dir);
        r.template segment<3>(21) = (rate - ref.cable_rate.cast<S>()) * sw(w.load_rate);
    }
    if (!terminal)
        r.template segment<4>(24) = (u - ref.input.cast<S>()) * std::sqrt(w.control);
    const double pen = sw(w.rate_limit_penalty);
    for (int i = 0; i < 3; ++i) {
        const double mag = std::abs(value_of(omega[i]));
        if (mag > rate_limit)
            r[27 + i] = (value_of(omega[i]) > 0 ? S(omega[i] - rate_limit) : S(-omega[i] - rate_limit)) * pen;
    }
    return r;
}

/// Weighted stage cost ||x - x_ref||^2_S + ||u - u_ref||^2_C.
inline double stage_cost(const StateVec& x, const StageReference& ref, const InputVec& u, const OcpWeights& w,
                         double rate_limit = 3.0, bool terminal = false)
{
    return stage_residual<double>(x, u, ref, w, rate_limit, terminal).squaredNorm();
}

inline double stage_cost(const OcpProblem& pb, const StateVec& x, const StageReference& ref, const InputVec& u,
                         bool terminal = false)
{
    return stage_cost(x, ref, u, effective_weights(pb), pb.rate_limit, terminal);
}

/// Hover reference at a point: load straight below, hover thrust split.
inline StageReference hover_reference(const Vec3& quad_pos, const PhysicalParams& p)
{
    StageReference r;
    r.quad_pos = quad_pos;
    r.load_pos = quad_pos - Vec3(0.0, 0.0, p.load.cable_length);
    r.input = Vec4::Constant(p.hover_thrust_total() / 4.0);
    return r;
}

}  // namespace sls::nmpc
