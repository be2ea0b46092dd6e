#pragma once

// Sensorless EKF for the suspended load.
//
// State (12): [p_L, v_L, rho, omega_L], rho the unit cable direction from the
// quadrotor to the load and omega_L the cable angular rate (rho_dot = omega_L x rho).
// Input: world-frame quadrotor acceleration recovered from the IMU.
// Measurement: quadrotor position and velocity from odometry, related to the
// state by p_Q = p_L - L rho and v_Q = v_L - L (omega_L x rho).
//
// Propagation switches between a taut pendulum model and a slack model on the
// sign of the tension acceleration t_a = -rho^T (a_Q - g) + L ||omega_L||^2.

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sls/simulator.hpp"
#include "sls/types.hpp"

namespace sls {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat6x12 = Eigen::Matrix<double, 6, 12>;
using Mat12x3 = Eigen::Matrix<double, 12, 3>;

enum class CableBranch { Taut, Slack };

/// How the slack-mode process noise enters the position block.
enum class SlackNoise {
    CableScaled,  // (t_s^2 / 2) diag(rho)
    Isotropic,    // (t_s^2 / 2) I
};

struct EstimatorParams {
    double cable_length = 1.0;
    double damping = 0.4;        // c_omega, 1/s
    double accel_var = 0.15;     // sigma_a^2
    double pos_var = 0.0025;     // sigma_p^2
    double vel_var = 0.0025;     // sigma_v^2
    double step = 0.005;         // t_s
    double gravity_mag = 9.8;
    double hysteresis = 0.02;    // m/s^2 band around t_a = 0
    double observability_threshold = 0.5;  // m/s^2
    double initial_variance = 0.1;
    SlackNoise slack_noise = SlackNoise::CableScaled;

    Vec3 gravity_vec() const { return {0.0, 0.0, -gravity_mag}; }

    void validate() const
    {
        if (!(cable_length > 0 && damping > 0 && accel_var > 0 && pos_var > 0 && vel_var > 0 && step > 0 &&
              gravity_mag > 0 && hysteresis >= 0 && initial_variance > 0))
            throw InvalidArgument("estimator parameters must be positive");
    }
};

inline const Vec3 kDefaultCableDir{0.0, 0.0, -1.0};

struct EstimatorBelief {
    Vec12 state = Vec12::Zero();
    Mat12 covariance = Mat12::Identity();

    Vec3 load_position() const { return state.segment<3>(0); }
    Vec3 load_velocity() const { return state.segment<3>(3); }
    Vec3 cable_dir() const { return state.segment<3>(6); }
    Vec3 cable_rate() const { return state.segment<3>(9); }
};

inline EstimatorBelief initial_belief(const Vec3& quad_position, const Vec3& quad_velocity, const EstimatorParams& p)
{
    EstimatorBelief b;
    b.state.segment<3>(0) = quad_position + p.cable_length * kDefaultCableDir;
    b.state.segment<3>(3) = quad_velocity;
    b.state.segment<3>(6) = kDefaultCableDir;
    b.state.segment<3>(9).setZero();
    b.covariance = Mat12::Identity() * p.initial_variance;
    return b;
}

inline double tension_accel(const Vec12& x, const Vec3& accel, const EstimatorParams& p)
{
    const Vec3 rho = x.segment<3>(6);
    const Vec3 omega = x.segment<3>(9);
    return -rho.dot(accel - p.gravity_vec()) + p.cable_length * omega.squaredNorm();
}

inline double tension_accel(const EstimatorBelief& b, const Vec3& accel, const EstimatorParams& p)
{
    return tension_accel(b.state, accel, p);
}

/// Branch selection with a hysteresis band; without history, t_a > 0 is taut.
inline CableBranch select_branch(double t_alpha, CableBranch previous, double band)
{
    if (previous == CableBranch::Taut)
        return t_alpha > -band ? CableBranch::Taut : CableBranch::Slack;
    return t_alpha > band ? CableBranch::Taut : CableBranch::Slack;
}

inline CableBranch select_branch(double t_alpha) { return t_alpha > 0.0 ? CableBranch::Taut : CableBranch::Slack; }

/// Raw discrete propagation f_p, no manifold projection.
inline Vec12 propagate_mean(const Vec12& x, const Vec3& accel, const EstimatorParams& p, CableBranch branch)
{
    const double ts = p.step;
    const Vec3 pl = x.segment<3>(0);
    const Vec3 vl = x.segment<3>(3);
    const Vec3 rho = x.segment<3>(6);
    const Vec3 omega = x.segment<3>(9);
    const Vec3 g = p.gravity_vec();

    Vec3 al;
    Vec3 rho_next;
    Vec3 omega_next;
    if (branch == CableBranch::Slack) {
        al = g;
        rho_next = rho;
        omega_next = (1.0 - ts * p.damping) * omega;
    } else {
        const double ta = tension_accel(x, accel, p);
        const Vec3 rel = accel - g;
        al = g - ta * rho;
        rho_next = rho + ts * omega.cross(rho);
        omega_next = omega - (ts / p.cable_length) * rho.cross(rel) -
                     ts * p.damping * (Mat3::Identity() - rho * rho.transpose()) * omega;
    }
    Vec12 out;
    out.segment<3>(0) = pl + ts * vl + 0.5 * ts * ts * al;
    out.segment<3>(3) = vl + ts * al;
    out.segment<3>(6) = rho_next;
    out.segment<3>(9) = omega_next;
    return out;
}

/// Jacobian of propagate_mean with respect to the state.
inline Mat12 transition_jacobian(const Vec12& x, const Vec3& accel, const EstimatorParams& p, CableBranch branch)
{
    const double ts = p.step;
    const double len = p.cable_length;
    const Vec3 rho = x.segment<3>(6);
    const Vec3 omega = x.segment<3>(9);
    const Mat3 eye = Mat3::Identity();

    Mat12 f = Mat12::Identity();
    f.block<3, 3>(0, 3) = ts * eye;
    if (branch == CableBranch::Slack) {
        f.block<3, 3>(9, 9) = (1.0 - ts * p.damping) * eye;
        return f;
    }
    const Vec3 rel = accel - p.gravity_vec();
    const double ta = tension_accel(x, accel, p);
    // d/d rho of -ts * t_a * rho, with d t_a / d rho = -rel^T.
    const Mat3 f_v_rho = ts * (rho * rel.transpose() - ta * eye);
    const Mat3 f_v_omega = -2.0 * len * ts * rho * omega.transpose();
    const Mat3 f_omega_rho =
        (ts / len) * skew<double>(rel) + ts * p.damping * (rho.dot(omega) * eye + rho * omega.transpose());
    const Mat3 f_omega_omega = eye - ts * p.damping * (eye - rho * rho.transpose());

    f.block<3, 3>(0, 6) = 0.5 * ts * f_v_rho;
    f.block<3, 3>(0, 9) = 0.5 * ts * f_v_omega;
    f.block<3, 3>(3, 6) = f_v_rho;
    f.block<3, 3>(3, 9) = f_v_omega;
    f.block<3, 3>(6, 6) = eye + ts * skew<double>(omega);
    f.block<3, 3>(6, 9) = -ts * skew<double>(rho);
    f.block<3, 3>(9, 6) = f_omega_rho;
    f.block<3, 3>(9, 9) = f_omega_omega;
    return f;
}

/// Noise input matrix G_k, evaluated at the projected predicted direction.
inline Mat12x3 process_noise_input(const Vec3& rho, const EstimatorParams& p, CableBranch branch)
{
    const double ts = p.step;
    Mat12x3 g = Mat12x3::Zero();
    if (branch == CableBranch::Slack) {
        if (p.slack_noise == SlackNoise::CableScaled)
            g.block<3, 3>(0, 0) = 0.5 * ts * ts * rho.asDiagonal().toDenseMatrix();
        else
            g.block<3, 3>(0, 0) = 0.5 * ts * ts * Mat3::Identity();
        return g;
    }
    const Mat3 outer = rho * rho.transpose();
    g.block<3, 3>(0, 0) = 0.5 * ts * ts * outer;
    g.block<3, 3>(3, 0) = ts * outer;
    g.block<3, 3>(9, 0) = -(ts / p.cable_length) * skew<double>(rho);
    return g;
}

/// Project the state back onto ||rho|| = 1, rho^T omega = 0.
inline Vec12 project_state(const Vec12& x)
{
    Vec12 out = x;
    const Vec3 rho = x.segment<3>(6);
    const double n = rho.norm();
    const Vec3 rho_unit = n > 1e-6 ? Vec3(rho / n) : kDefaultCableDir;
    out.segment<3>(6) = rho_unit;
    const Vec3 omega = x.segment<3>(9);
    out.segment<3>(9) = omega - rho_unit * rho_unit.dot(omega);
    return out;
}

/// Tangent-space projector B for the covariance.
inline Mat12 covariance_projector(const Vec3& rho)
{
    Mat12 b = Mat12::Identity();
    const Mat3 tangent = Mat3::Identity() - rho * rho.transpose();
    b.block<3, 3>(6, 6) = tangent;
    b.block<3, 3>(9, 9) = tangent;
    return b;
}

inline Mat12 symmetrized(const Mat12& m) { return 0.5 * (m + m.transpose()); }

struct PredictResult {
    EstimatorBelief belief;
    CableBranch branch = CableBranch::Taut;
    double t_alpha = 0.0;
};

inline PredictResult predict(const EstimatorBelief& b, const Vec3& accel, const EstimatorParams& p,
                             CableBranch branch)
{
    if (!b.state.allFinite() || !b.covariance.allFinite() || !accel.allFinite())
        throw Divergence("non-finite input to load estimator prediction");
    PredictResult r;
    r.branch = branch;
    r.t_alpha = tension_accel(b, accel, p);

    const Mat12 f = transition_jacobian(b.state, accel, p, branch);
    r.belief.state = project_state(propagate_mean(b.state, accel, p, branch));
    const Vec3 rho = r.belief.cable_dir();
    const Mat12x3 g = process_noise_input(rho, p, branch);
    const Mat12 cov = f * b.covariance * f.transpose() + p.accel_var * g * g.transpose();
    const Mat12 proj = covariance_projector(rho);
    r.belief.covariance = symmetrized(proj * cov * proj.transpose());
    return r;
}

/// Prediction with the branch chosen directly from the sign of t_a.
inline PredictResult predict(const EstimatorBelief& b, const Vec3& accel, const EstimatorParams& p)
{
    return predict(b, accel, p, select_branch(tension_accel(b, accel, p)));
}

inline Vec6 measurement(const Vec12& x, double cable_length)
{
    const Vec3 rho = x.segment<3>(6);
    const Vec3 omega = x.segment<3>(9);
    Vec6 h;
    h.head<3>() = x.segment<3>(0) - cable_length * rho;
    h.tail<3>() = x.segment<3>(3) - cable_length * omega.cross(rho);
    return h;
}

inline Mat6x12 measurement_jacobian(const Vec12& x, double cable_length)
{
    const Vec3 rho = x.segment<3>(6);
    const Vec3 omega = x.segment<3>(9);
    Mat6x12 h = Mat6x12::Zero();
    h.block<3, 3>(0, 0) = Mat3::Identity();
    h.block<3, 3>(0, 6) = -cable_length * Mat3::Identity();
    h.block<3, 3>(3, 3) = Mat3::Identity();
    h.block<3, 3>(3, 6) = -cable_length * skew<double>(omega);
    h.block<3, 3>(3, 9) = cable_length * skew<double>(rho);
    return h;
}

inline Mat6 measurement_covariance(const EstimatorParams& p)
{
    Vec6 d;
    d << Vec3::Constant(p.pos_var), Vec3::Constant(p.vel_var);
    return d.asDiagonal();
}

struct UpdateResult {
    EstimatorBelief belief;
    Vec6 innovation = Vec6::Zero();
};

/// Joseph-form covariance update for gain k.
inline Mat12 joseph_update(const Mat12& cov, const Mat6x12& h, const Eigen::Matrix<double, 12, 6>& k,
                           const Mat6& r)
{
    const Mat12 i_kh = Mat12::Identity() - k * h;
    return i_kh * cov * i_kh.transpose() + k * r * k.transpose();
}

inline UpdateResult update(const EstimatorBelief& b, const OdomSample& z, const EstimatorParams& p)
{
    if (!b.state.allFinite() || !z.position.allFinite() || !z.velocity.allFinite())
        throw Divergence("non-finite input to load estimator update");
    UpdateResult r;
    Vec6 meas;
    meas << z.position, z.velocity;
    r.innovation = meas - measurement(b.state, p.cable_length);

    const Mat6x12 h = measurement_jacobian(b.state, p.cable_length);
    const Mat6 noise = measurement_covariance(p);
    const Mat6 s = h * b.covariance * h.transpose() + noise;
    const Eigen::LLT<Mat6> llt(s);
    if (llt.info() != Eigen::Success)
        throw Divergence("innovation covariance is not positive definite");
    const Eigen::Matrix<double, 12, 6> k = llt.solve(h * b.covariance).transpose();

    r.belief.state = project_state(b.state + k * r.innovation);
    const Mat12 proj = covariance_projector(b.cable_dir());
    r.belief.covariance = symmetrized(proj * symmetrized(joseph_update(b.covariance, h, k, noise)) * proj.transpose());
    return r;
}

struct Observability {
    double excitation = 0.0;  // ||(I - rho rho^T)(a_Q - g)||
    bool weak = true;
};

/// Lateral excitation of the cable; near zero in hover, where the cable
/// direction is not observable from quadrotor motion alone.
inline Observability observability_flag(const EstimatorBelief& b, const Vec3& accel, const EstimatorParams& p)
{
    const Vec3 rho = b.cable_dir();
    const Vec3 lateral = (Mat3::Identity() - rho * rho.transpose()) * (accel - p.gravity_vec());
    return {lateral.norm(), lateral.norm() < p.observability_threshold};
}

/// Stateful wrapper: owns the belief and the branch history. Not thread-safe.
class LoadEstimator {
public:
    explicit LoadEstimator(EstimatorParams params) : params_(params) { params_.validate(); }

    void reset(const Vec3& quad_position, const Vec3& quad_velocity)
    {
        belief_ = initial_belief(quad_position, quad_velocity, params_);
        branch_ = CableBranch::Taut;
    }

    /// accel: world-frame quadrotor acceleration.
    void predict(const Vec3& accel)
    {
        const double ta = tension_accel(belief_, accel, params_);
        branch_ = select_branch(ta, branch_, params_.hysteresis);
        auto r = sls::predict(belief_, accel, params_, branch_);
        belief_ = r.belief;
        last_t_alpha_ = r.t_alpha;
        last_accel_ = accel;
    }

    const Vec6& update(const OdomSample& z)
    {
        auto r = sls::update(belief_, z, params_);
        belief_ = r.belief;
        innovation_ = r.innovation;
        return innovation_;
    }

    const EstimatorBelief& belief() const { return belief_; }
    CableBranch branch() const { return branch_; }
    double last_t_alpha() const { return last_t_alpha_; }
    const Vec6& innovation() const { return innovation_; }
    const EstimatorParams& params() const { return params_; }
    Observability observability() const { return observability_flag(belief_, last_accel_, params_); }

private:
    EstimatorParams params_;
    EstimatorBelief belief_;
    CableBranch branch_ = CableBranch::Taut;
    double last_t_alpha_ = 0.0;
    Vec3 last_accel_ = Vec3::Zero();
    Vec6 innovation_ = Vec6::Zero();
};

}  // namespace sls
