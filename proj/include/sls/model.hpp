#pragma once

// Coupled quadrotor + load ODE on the 19-dim vector
//   [p_Q(3), v_Q(3), q_Q(4: w,x,y,z), omega(3), p_L(3), v_L(3)]
// shared by the plant and by the controller's prediction model. Generic over
// the scalar type so the controller can differentiate it.

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "sls/constraint_force.hpp"
#include "sls/dynamics.hpp"
#include "sls/types.hpp"

namespace sls {

inline constexpr int kStateDim = 19;
inline constexpr int kInputDim = 4;

namespace idx {
inline constexpr int pos = 0;
inline constexpr int vel = 3;
inline constexpr int att = 6;
inline constexpr int rate = 10;
inline constexpr int load_pos = 13;
inline constexpr int load_vel = 16;
}  // namespace idx

template <class S> using StateVecT = Eigen::Matrix<S, kStateDim, 1>;
template <class S> using InputVecT = Eigen::Matrix<S, kInputDim, 1>;
using StateVec = StateVecT<double>;
using InputVec = InputVecT<double>;

enum class CableModel {
    Constrained,  // cable tension from the constraint, taut/slack by sign
    Detached,     // no cable force, load states frozen (load-agnostic prediction)
    PinnedQuad,   // quadrotor held fixed, load swings on the cable
};

struct ModelOptions {
    CableModel cable = CableModel::Constrained;
    // Tension only acts when ||rho|| >= L - slack_gap. Infinite for the
    // prediction model, which assumes the cable is taut whenever it pulls.
    double slack_gap = std::numeric_limits<double>::infinity();
    Vec3 external_force = Vec3::Zero();  // world-frame force on the quadrotor
};

// Inward radial speed (m/s) above which a full-length cable counts as slack.
inline constexpr double kSlackRadialSpeed = 1e-3;

template <class S>
struct CableEval {
    S lambda = S(0);
    Vec3T<S> rho_n = Vec3T<S>(S(0), S(0), S(-1));
    bool taut = false;
};

/// Tension acting at state x under input u.
template <class S>
CableEval<S> evaluate_cable(const StateVecT<S>& x, const InputVecT<S>& u, const PhysicalParams& p,
                            const ModelOptions& opt)
{
    using std::sqrt;
    CableEval<S> c;
    if (opt.cable == CableModel::Detached)
        return c;
    const Vec3T<S> rho = x.template segment<3>(idx::load_pos) - x.template segment<3>(idx::pos);
    const S len = sqrt(rho.squaredNorm());
    if (value_of(len) <= kMinCableLength)
        return c;
    c.rho_n = rho / len;
    if (value_of(len) < p.load.cable_length - opt.slack_gap)
        return c;
    const Vec3T<S> rel_vel = x.template segment<3>(idx::load_vel) - x.template segment<3>(idx::vel);
    // With a finite gap (plant), a load closing in on the quadrotor is slack
    // even at full length: the cable cannot hold it on the sphere.
    if (std::isfinite(opt.slack_gap) && value_of(c.rho_n.dot(rel_vel)) < -kSlackRadialSpeed)
        return c;
    Vec3T<S> a_l_free = p.gravity_vec().template cast<S>();
    Vec3T<S> a_q_free = Vec3T<S>::Zero();
    double inv_mass_q = 0.0;
    if (opt.cable != CableModel::PinnedQuad) {
        S thrust;
        Vec3T<S> torque;
        thrusts_to_wrench<S>(u, p.vehicle, thrust, torque);
        a_q_free = quad_linear_accel<S>(Vec4T<S>(x.template segment<4>(idx::att)), thrust,
                                        opt.external_force.template cast<S>(), p.vehicle);
        inv_mass_q = 1.0 / p.vehicle.mass_q;
    }
    const S raw = tension_raw<S>(c.rho_n, len, rel_vel, a_q_free, a_l_free, inv_mass_q, 1.0 / p.load.mass_l);
    if (value_of(raw) > 0.0) {
        c.lambda = raw;
        c.taut = true;
    }
    return c;
}

template <class S>
StateVecT<S> system_derivative(const StateVecT<S>& x, const InputVecT<S>& u, const PhysicalParams& p,
                               const ModelOptions& opt)
{
    StateVecT<S> dx = StateVecT<S>::Zero();
    const CableEval<S> cable = evaluate_cable<S>(x, u, p, opt);
    const Vec3T<S> f_cable = cable.rho_n * cable.lambda;  // on the quadrotor

    if (opt.cable != CableModel::PinnedQuad) {
        S thrust;
        Vec3T<S> torque;
        thrusts_to_wrench<S>(u, p.vehicle, thrust, torque);
        const Vec4T<S> q = x.template segment<4>(idx::att);
        const Vec3T<S> omega = x.template segment<3>(idx::rate);
        dx.template segment<3>(idx::pos) = x.template segment<3>(idx::vel);
        dx.template segment<3>(idx::vel) =
            quad_linear_accel<S>(q, thrust, Vec3T<S>(opt.external_force.template cast<S>() + f_cable), p.vehicle);
        dx.template segment<4>(idx::att) = quat_kinematics<S>(q, omega);
        dx.template segment<3>(idx::rate) = quad_angular_accel<S>(omega, torque, p.vehicle);
    }
    if (opt.cable != CableModel::Detached) {
        dx.template segment<3>(idx::load_pos) = x.template segment<3>(idx::load_vel);
        Vec3T<S> a_l = -f_cable / p.load.mass_l;
        a_l.z() -= S(p.vehicle.gravity_mag);
        dx.template segment<3>(idx::load_vel) = a_l;
    }
    return dx;
}

/// One classical Runge-Kutta step; the attitude quaternion is renormalized.
template <class S>
StateVecT<S> rk4_step(const StateVecT<S>& x, const InputVecT<S>& u, double dt, const PhysicalParams& p,
                      const ModelOptions& opt)
{
    const StateVecT<S> k1 = system_derivative<S>(x, u, p, opt);
    const StateVecT<S> k2 = system_derivative<S>(StateVecT<S>(x + k1 * (dt / 2)), u, p, opt);
    const StateVecT<S> k3 = system_derivative<S>(StateVecT<S>(x + k2 * (dt / 2)), u, p, opt);
    const StateVecT<S> k4 = system_derivative<S>(StateVecT<S>(x + k3 * dt), u, p, opt);
    StateVecT<S> next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    next.template segment<4>(idx::att) = quat_normalized<S>(Vec4T<S>(next.template segment<4>(idx::att)));
    return next;
}

// ---------------------------------------------------------------------------
// Conversions between the flat vector and SystemState.

inline StateVec pack(const SystemState& s)
{
    StateVec x;
    x.segment<3>(idx::pos) = s.quad.position;
    x.segment<3>(idx::vel) = s.quad.velocity;
    x.segment<4>(idx::att) = to_vec4(s.quad.attitude);
    x.segment<3>(idx::rate) = s.quad.body_rates;
    x.segment<3>(idx::load_pos) = s.load.position;
    x.segment<3>(idx::load_vel) = s.load.velocity;
    return x;
}

/// Cable direction and cable angular rate from relative position/velocity.
/// omega_L = rho_n x V_R / ||rho|| is the rate with rho_dot = omega_L x rho_n.
template <class S>
void cable_kinematics(const Vec3T<S>& rho, const Vec3T<S>& rel_vel, Vec3T<S>& dir, Vec3T<S>& rate)
{
    using std::sqrt;
    const S len = sqrt(rho.squaredNorm());
    if (value_of(len) <= kMinCableLength) {
        dir = Vec3T<S>(S(0), S(0), S(-1));
        rate.setZero();
        return;
    }
    dir = rho / len;
    rate = dir.cross(rel_vel) / len;
}

inline SystemState unpack(const StateVec& x)
{
    SystemState s;
    s.quad.position = x.segment<3>(idx::pos);
    s.quad.velocity = x.segment<3>(idx::vel);
    s.quad.attitude = to_quat(x.segment<4>(idx::att));
    s.quad.body_rates = x.segment<3>(idx::rate);
    s.load.position = x.segment<3>(idx::load_pos);
    s.load.velocity = x.segment<3>(idx::load_vel);
    cable_kinematics<double>(Vec3(s.load.position - s.quad.position), Vec3(s.load.velocity - s.quad.velocity),
                             s.load.cable_dir, s.load.cable_rate);
    return s;
}

inline InputVec to_input_vec(const ControlInput& u) { return u.vec(); }

/// Resting hover: load hanging straight below the quadrotor.
inline SystemState hover_state(const Vec3& quad_position, const PhysicalParams& p)
{
    SystemState s;
    s.quad.position = quad_position;
    s.load.position = quad_position - Vec3(0.0, 0.0, p.load.cable_length);
    s.load.cable_dir = Vec3(0.0, 0.0, -1.0);
    return s;
}

inline ControlInput hover_input(const PhysicalParams& p)
{
    return ControlInput::uniform(p.hover_thrust_total() / 4.0);
}

}  // namespace sls
