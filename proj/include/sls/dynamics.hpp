#pragma once

// Unconstrained rigid-body models of the quadrotor and the point-mass load,
// thrust allocation, and quaternion utilities.
//
// Rotor layout (body frame, x forward, z up), arm angle beta measured from b_x:
//   rotor 1: ( l cos b, -l sin b)   rotor 2: (-l cos b,  l sin b)
//   rotor 3: ( l cos b,  l sin b)   rotor 4: (-l cos b, -l sin b)
// Rotors 1/2 and 3/4 are diagonal pairs spinning in opposite senses.

#include <algorithm>
#include <cmath>

#include "sls/types.hpp"

namespace sls {

// ---------------------------------------------------------------------------
// Quaternions as 4-vectors (w, x, y, z), templated for autodiff.

template <class S>
Vec4T<S> quat_mul(const Vec4T<S>& a, const Vec4T<S>& b)
{
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

template <class S>
Vec4T<S> quat_conj(const Vec4T<S>& q)
{
    return {q[0], -q[1], -q[2], -q[3]};
}

template <class S>
Vec4T<S> quat_normalized(const Vec4T<S>& q)
{
    using std::sqrt;
    return q / sqrt(q.squaredNorm());
}

/// Rotation matrix body -> world. The quaternion is normalized first.
template <class S>
Mat3T<S> rotation_matrix(const Vec4T<S>& q_raw)
{
    const Vec4T<S> q = quat_normalized(q_raw);
    const S w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3T<S> r;
    r << S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),
        S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),
        S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y);
    return r;
}

/// q_dot = 1/2 q (x) (0, omega)
template <class S>
Vec4T<S> quat_kinematics(const Vec4T<S>& q, const Vec3T<S>& omega)
{
    const Vec4T<S> w{S(0), omega.x(), omega.y(), omega.z()};
    return S(0.5) * quat_mul(q, w);
}

inline Vec4 to_vec4(const UnitQuaternion& q) { return {q.w(), q.x(), q.y(), q.z()}; }
inline UnitQuaternion to_quat(const Vec4& v) { return UnitQuaternion(v[0], v[1], v[2], v[3]).normalized(); }

/// Attitude error q_e = q (x) q_ref^-1 split into roll/pitch and yaw parts.
///
/// q_e is taken in the hemisphere w >= 0 so that the shortest rotation is
/// penalized. When w^2 + z^2 vanishes (a pure 180 deg roll/pitch error) the
/// prefactor is undefined; the limit along the roll/pitch axes, (q_ex, q_ey, 0),
/// is returned instead.
template <class S>
Vec3T<S> quaternion_error_decompose(const Vec4T<S>& q, const Vec4T<S>& q_ref)
{
    using std::sqrt;
    Vec4T<S> qe = quat_mul(quat_normalized(q), quat_conj(quat_normalized(q_ref)));
    if (value_of(qe[0]) < 0.0)
        qe = -qe;
    const S w = qe[0], x = qe[1], y = qe[2], z = qe[3];
    const S denom_sq = w * w + z * z;
    if (value_of(denom_sq) < 1e-12)
        return {x, y, S(0)};
    const S inv = S(1) / sqrt(denom_sq);
    return {inv * (w * x + z * y), inv * (w * y - z * x), inv * z};
}

inline Vec3 quaternion_error_decompose(const UnitQuaternion& q, const UnitQuaternion& q_ref)
{
    return quaternion_error_decompose<double>(to_vec4(q), to_vec4(q_ref));
}

// ---------------------------------------------------------------------------
// Allocation

/// Thrust-to-wrench map [T; tau] = G1 u.
inline Mat4 allocation_matrix(const VehicleParams& p)
{
    const double a = p.arm_length * std::sin(p.arm_angle);
    const double c = p.arm_length * std::cos(p.arm_angle);
    const double r = p.torque_coeff / p.thrust_coeff;
    Mat4 g;
    g << 1, 1, 1, 1,
        -a, a, a, -a,
        -c, c, -c, c,
        -r, -r, r, r;
    return g;
}

struct Wrench {
    double thrust = 0.0;
    Vec3 torque = Vec3::Zero();
};

inline Wrench thrusts_to_wrench(const ControlInput& u, const VehicleParams& p)
{
    const Vec4 w = allocation_matrix(p) * u.vec();
    return {w[0], w.tail<3>()};
}

template <class S>
void thrusts_to_wrench(const Vec4T<S>& u, const VehicleParams& p, S& thrust, Vec3T<S>& torque)
{
    const Mat4 g = allocation_matrix(p);
    const Vec4T<S> w = g.cast<S>() * u;
    thrust = w[0];
    torque = w.template tail<3>();
}

/// Quadratic motor model: thrust = ((cmd - b) / a)^2 per motor, so the
/// normalized command is affine in rotor speed. Conversion utility only; the
/// closed loop commands thrust directly.
inline double thrust_to_motor_command(double thrust, const VehicleParams& p)
{
    return std::clamp(p.motor_a * std::sqrt(std::max(thrust, 0.0)) + p.motor_b, 0.0, 1.0);
}

inline double motor_command_to_thrust(double cmd, const VehicleParams& p)
{
    const double s = std::max(cmd - p.motor_b, 0.0) / p.motor_a;
    return s * s;
}

// ---------------------------------------------------------------------------
// Rigid-body derivatives

template <class S>
Vec3T<S> quad_linear_accel(const Vec4T<S>& q, const S& thrust, const Vec3T<S>& f_ext, const VehicleParams& p)
{
    const Mat3T<S> r = rotation_matrix(q);
    Vec3T<S> a = r.col(2) * (thrust / p.mass_q) + f_ext / p.mass_q;
    a.z() -= S(p.gravity_mag);
    return a;
}

template <class S>
Vec3T<S> quad_angular_accel(const Vec3T<S>& omega, const Vec3T<S>& torque, const VehicleParams& p)
{
    const Vec3T<S> iw = p.inertia_diag.cast<S>().cwiseProduct(omega);
    return (torque - omega.cross(iw)).cwiseQuotient(p.inertia_diag.cast<S>());
}

struct QuadrotorDerivative {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    Vec4 attitude = Vec4::Zero();  // (w, x, y, z)
    Vec3 body_rates = Vec3::Zero();
};

/// Time derivative of the quadrotor state under thrust, body torque, and an
/// external world-frame force (the cable force F_L).
inline QuadrotorDerivative quad_derivative(const QuadrotorState& s, double thrust, const Vec3& tau,
                                           const Vec3& f_load, const VehicleParams& p)
{
    const Vec4 q = to_vec4(s.attitude);
    return {s.velocity, quad_linear_accel<double>(q, thrust, f_load, p), quat_kinematics<double>(q, s.body_rates),
            quad_angular_accel<double>(s.body_rates, tau, p)};
}

struct LoadDerivative {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
};

/// m_L p_L'' = -m_L g e_z - F_L, with F_L the force the cable exerts on the quadrotor.
inline LoadDerivative load_derivative(const LoadState& s, const Vec3& f_load, const PhysicalParams& p)
{
    Vec3 a = -f_load / p.load.mass_l;
    a.z() -= p.vehicle.gravity_mag;
    return {s.velocity, a};
}

}  // namespace sls
