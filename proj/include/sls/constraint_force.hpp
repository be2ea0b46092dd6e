#pragma once

// Cable tension from the Udwadia-Kalaba constrained-motion formulation.
//
// The cable imposes ||p_L - p_Q||^2 = L^2. Differentiating twice gives the
// acceleration-level constraint
//
//     rho_n^T (a_L - a_Q) = -||V_R||^2 / L,
//
// and the minimal force that enforces it acts along the cable with magnitude
//
//     lambda = [rho_n^T (a_L_free - a_Q_free) + ||V_R||^2 / L] / (1/m_Q + 1/m_L).
//
// The quadrotor feels +lambda * rho_n (pulled toward the load), the load
// feels -lambda * rho_n. A cable cannot push: lambda is clamped at zero and the
// result is flagged slack.

#include <Eigen/Core>

#include "sls/dynamics.hpp"
#include "sls/types.hpp"

namespace sls {

struct CableGeometry {
    Vec3 rho = Vec3::Zero();           // p_L - p_Q
    Vec3 rho_n{0.0, 0.0, -1.0};        // unit, quad -> load
    double length = 1.0;               // ||rho||
    Vec3 rel_velocity = Vec3::Zero();  // v_L - v_Q
};

struct TensionResult {
    double lambda = 0.0;      // clamped, >= 0
    double lambda_raw = 0.0;  // before clamping; <= 0 means slack
    Vec3 force_on_quad = Vec3::Zero();
    bool taut = false;

    Vec3 force_on_load() const { return -force_on_quad; }
};

inline constexpr double kMinCableLength = 1e-9;

inline CableGeometry cable_geometry(const Vec3& p_q, const Vec3& p_l, const Vec3& v_q, const Vec3& v_l)
{
    CableGeometry g;
    g.rho = p_l - p_q;
    g.length = g.rho.norm();
    if (!(g.length > kMinCableLength))
        throw DegenerateGeometry("quadrotor and load positions coincide");
    g.rho_n = g.rho / g.length;
    g.rel_velocity = v_l - v_q;
    return g;
}

struct FreeAccelerations {
    Vec3 quad = Vec3::Zero();
    Vec3 load = Vec3::Zero();
};

/// Accelerations of both bodies if the cable were cut. `f_ext` is any extra
/// world-frame force on the quadrotor (wind).
inline FreeAccelerations free_accelerations(const QuadrotorState& s, double thrust, const PhysicalParams& p,
                                            const Vec3& f_ext = Vec3::Zero())
{
    FreeAccelerations a;
    a.quad = quad_linear_accel<double>(to_vec4(s.attitude), thrust, f_ext, p.vehicle);
    a.load = p.gravity_vec();
    return a;
}

/// Raw tension numerator/denominator evaluation, generic over the scalar type
/// and over the inverse masses (an inverse mass of zero pins that body).
template <class S>
S tension_raw(const Vec3T<S>& rho_n, const S& length, const Vec3T<S>& rel_vel, const Vec3T<S>& a_q_free,
              const Vec3T<S>& a_l_free, double inv_mass_q, double inv_mass_l)
{
    const S rel_acc = rho_n.dot(a_l_free - a_q_free);
    return (rel_acc + rel_vel.squaredNorm() / length) / (inv_mass_q + inv_mass_l);
}

inline TensionResult tension_from_raw(double lambda_raw, const Vec3& rho_n)
{
    TensionResult r;
    r.lambda_raw = lambda_raw;
    r.taut = lambda_raw > 0.0;
    r.lambda = r.taut ? lambda_raw : 0.0;
    r.force_on_quad = r.lambda * rho_n;
    return r;
}

inline TensionResult tension_magnitude(const CableGeometry& g, const Vec3& a_q_free, const Vec3& a_l_free,
                                       double inv_mass_q, double inv_mass_l)
{
    return tension_from_raw(
        tension_raw<double>(g.rho_n, g.length, g.rel_velocity, a_q_free, a_l_free, inv_mass_q, inv_mass_l), g.rho_n);
}

inline TensionResult tension_magnitude(const CableGeometry& g, const Vec3& a_q_free, const Vec3& a_l_free,
                                       const PhysicalParams& p)
{
    return tension_magnitude(g, a_q_free, a_l_free, 1.0 / p.vehicle.mass_q, 1.0 / p.load.mass_l);
}

/// Constraint violation of the free motion: E = a_R + ||V_R||^2 / L. Diagnostic only.
inline double constraint_discrepancy(const CableGeometry& g, const Vec3& a_q_free, const Vec3& a_l_free)
{
    return g.rho_n.dot(a_l_free - a_q_free) + g.rel_velocity.squaredNorm() / g.length;
}

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Generalized constraint force F_RS = M^(1/2) (A M^(-1/2))^+ (b - A M^-1 F_s)
/// over the stacked coordinates P = [p_Q; p_L]. Evaluated with explicit
/// matrices; it serves as an independent check of tension_magnitude.
///
/// The acceleration-level row is written with the unit direction,
/// A = [-rho_n^T, rho_n^T], b = -||V_R||^2 / L, which is the position-level
/// row [rho^T, -rho^T] divided by -L. The result is not clamped.
inline Vec6 generalized_constraint_force(const Vec6& pos, const Vec6& vel, const QuadrotorState& quad, double thrust,
                                         const PhysicalParams& p)
{
    const CableGeometry g = cable_geometry(pos.head<3>(), pos.tail<3>(), vel.head<3>(), vel.tail<3>());

    Mat6 mass = Mat6::Zero();
    mass.topLeftCorner<3, 3>().diagonal().setConstant(p.vehicle.mass_q);
    mass.bottomRightCorner<3, 3>().diagonal().setConstant(p.load.mass_l);
    const Mat6 mass_sqrt = mass.diagonal().cwiseSqrt().asDiagonal();
    const Mat6 mass_inv_sqrt = mass.diagonal().cwiseSqrt().cwiseInverse().asDiagonal();
    const Mat6 mass_inv = mass.diagonal().cwiseInverse().asDiagonal();

    Vec6 f_s;
    f_s.head<3>() = rotation_matrix<double>(to_vec4(quad.attitude)).col(2) * thrust;
    f_s(2) -= p.vehicle.mass_q * p.vehicle.gravity_mag;
    f_s.tail<3>() = Vec3(0.0, 0.0, -p.load.mass_l * p.vehicle.gravity_mag);

    Eigen::Matrix<double, 1, 6> a;
    a << -g.rho_n.transpose(), g.rho_n.transpose();
    const double b = -g.rel_velocity.squaredNorm() / g.length;

    // Moore-Penrose inverse of a row vector: v^T / (v v^T).
    const Eigen::Matrix<double, 1, 6> v = a * mass_inv_sqrt;
    const Vec6 v_pinv = v.transpose() / v.squaredNorm();

    const double residual = b - (a * mass_inv * f_s)(0);
    return mass_sqrt * v_pinv * residual;
}

struct ConstrainedAccelerations {
    Vec3 quad = Vec3::Zero();
    Vec3 load = Vec3::Zero();
};

inline ConstrainedAccelerations constrained_accelerations(const Vec3& a_q_free, const Vec3& a_l_free,
                                                          const TensionResult& t, const PhysicalParams& p)
{
    return {a_q_free + t.force_on_quad / p.vehicle.mass_q, a_l_free - t.force_on_quad / p.load.mass_l};
}

}  // namespace sls
