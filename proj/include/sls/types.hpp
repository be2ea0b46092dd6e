#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sls {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

template <class S> using Vec3T = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec4T = Eigen::Matrix<S, 4, 1>;
template <class S> using Mat3T = Eigen::Matrix<S, 3, 3>;

/// Unit quaternion, scalar first. Stored as Eigen::Quaterniond (w, x, y, z).
using UnitQuaternion = Eigen::Quaterniond;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Quadrotor and load coincide; cable direction undefined.
class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

/// Non-finite state produced by integration or estimation.
class Divergence : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Parameters

struct VehicleParams {
    double mass_q = 2.9;
    Vec3 inertia_diag{0.03166, 0.03166, 0.04610};
    double thrust_coeff = 27.6e-6;
    double torque_coeff = 16.28e-6;
    double arm_length = 0.258;
    double arm_angle = 44.22 * std::numbers::pi / 180.0;
    double max_thrust_per_motor = 17.6;
    double gravity_mag = 9.8;
    // Quadratic motor model, normalized command -> thrust fraction.
    double motor_a = 0.240572;
    double motor_b = -0.135153;

    void validate() const
    {
        if (!(mass_q > 0 && inertia_diag.minCoeff() > 0 && thrust_coeff > 0 && torque_coeff > 0 &&
              arm_length > 0 && max_thrust_per_motor > 0 && gravity_mag > 0))
            throw InvalidArgument("vehicle parameters must be strictly positive");
        if (!(arm_angle > 0 && arm_angle < std::numbers::pi / 2))
            throw InvalidArgument("arm angle must lie in (0, pi/2)");
    }
};

struct LoadParams {
    double mass_l = 0.5;
    double cable_length = 1.0;

    void validate() const
    {
        if (!(mass_l > 0 && cable_length > 0))
            throw InvalidArgument("load parameters must be strictly positive");
    }
};

/// Vehicle plus load, the full physical description used by plant and controller.
struct PhysicalParams {
    VehicleParams vehicle;
    LoadParams load;

    double hover_thrust_total() const { return (vehicle.mass_q + load.mass_l) * vehicle.gravity_mag; }
    Vec3 gravity_vec() const { return {0.0, 0.0, -vehicle.gravity_mag}; }
};

// ---------------------------------------------------------------------------
// States

struct QuadrotorState {
    Vec3 position = Vec3::Zero();   // world
    Vec3 velocity = Vec3::Zero();   // world
    UnitQuaternion attitude = UnitQuaternion::Identity();  // body -> world
    Vec3 body_rates = Vec3::Zero(); // body
};

struct LoadState {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    Vec3 cable_dir{0.0, 0.0, -1.0};  // quad -> load
    Vec3 cable_rate = Vec3::Zero();  // world frame, orthogonal to cable_dir
};

struct SystemState {
    QuadrotorState quad;
    LoadState load;
};

struct ControlInput {
    std::array<double, 4> thrusts{};

    Vec4 vec() const { return {thrusts[0], thrusts[1], thrusts[2], thrusts[3]}; }
    static ControlInput from(const Vec4& v) { return {{v[0], v[1], v[2], v[3]}}; }
    static ControlInput uniform(double t) { return {{t, t, t, t}}; }
    double total() const { return thrusts[0] + thrusts[1] + thrusts[2] + thrusts[3]; }
};

// ---------------------------------------------------------------------------
// Scalar helpers shared by double and automatic-differentiation code paths.

inline double value_of(double x) { return x; }

template <class S>
auto value_of(const S& x) -> decltype(x.value())
{
    return x.value();
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m)
{
    return m.allFinite();
}

inline bool all_finite(const QuadrotorState& s)
{
    return s.position.allFinite() && s.velocity.allFinite() && s.attitude.coeffs().allFinite() &&
           s.body_rates.allFinite();
}

inline bool all_finite(const SystemState& s)
{
    return all_finite(s.quad) && s.load.position.allFinite() && s.load.velocity.allFinite();
}

template <class S>
Mat3T<S> skew(const Vec3T<S>& v)
{
    Mat3T<S> m;
    m << S(0), -v.z(), v.y(), v.z(), S(0), -v.x(), -v.y(), v.x(), S(0);
    return m;
}

}  // namespace sls
