#pragma once

// Ground-truth plant: RK4 integration of the coupled quadrotor/load system
// through taut and slack cable phases, a Gauss-Markov wind force, and
// synthetic IMU/odometry.

#include <cmath>
#include <random>
#include <sstream>

#include "sls/constraint_force.hpp"
#include "sls/model.hpp"
#include "sls/types.hpp"

namespace sls {

enum class WindKind { Off, Constant, Gust };

struct WindModel {
    WindKind kind = WindKind::Off;
    Vec3 constant = Vec3::Zero();  // N
    double gust_amplitude = 1.0;   // N, stationary standard deviation per axis
    double gust_bandwidth = 0.5;   // Hz
    std::uint64_t seed = 1;
};

struct SensorNoise {
    double accel_std = 0.0;  // m/s^2
    double gyro_std = 0.0;   // rad/s
    double pos_std = 0.0;    // m
    double vel_std = 0.0;    // m/s
};

struct SimConfig {
    double physics_dt = 1e-3;
    double control_dt = 0.05;
    double imu_rate = 200.0;
    WindModel wind;
    SensorNoise sensor_noise;
    std::uint64_t rng_seed = 1;

    int physics_steps_per_control() const { return static_cast<int>(std::lround(control_dt / physics_dt)); }
    int physics_steps_per_imu() const { return static_cast<int>(std::lround(1.0 / (imu_rate * physics_dt))); }

    void validate() const
    {
        if (!(physics_dt > 0 && physics_dt <= 5e-3))
            throw InvalidArgument("physics_dt must lie in (0, 5e-3]");
        if (!(physics_dt <= control_dt))
            throw InvalidArgument("physics_dt must not exceed control_dt");
        const double ratio = control_dt / physics_dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-9)
            throw InvalidArgument("control_dt must be an integer multiple of physics_dt");
        const double imu_ratio = 1.0 / (imu_rate * physics_dt);
        if (!(imu_rate > 0) || std::abs(imu_ratio - std::round(imu_ratio)) > 1e-9 || imu_ratio < 1.0)
            throw InvalidArgument("imu period must be an integer multiple of physics_dt");
    }
};

struct ImuSample {
    Vec3 specific_force = Vec3::Zero();  // body frame
    Vec3 body_rates = Vec3::Zero();
    double timestamp = 0.0;
};

struct OdomSample {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double timestamp = 0.0;
};

struct StepOptions {
    bool pin_quad = false;   // hold the quadrotor fixed (pendulum tests)
    bool stabilize = true;   // project back onto the cable sphere while taut
};

// Gap below the cable length inside which the cable is treated as able to pull.
inline constexpr double kPlantSlackGap = 1e-4;

/// Tension the cable would carry at this instant (not clamped by geometry).
inline TensionResult cable_status(const SystemState& s, const ControlInput& u, const Vec3& wind,
                                  const PhysicalParams& p, bool pin_quad = false)
{
    const CableGeometry g =
        cable_geometry(s.quad.position, s.load.position, s.quad.velocity, s.load.velocity);
    const Wrench w = thrusts_to_wrench(u, p.vehicle);
    const FreeAccelerations a = free_accelerations(s.quad, w.thrust, p, wind);
    if (pin_quad)
        return tension_magnitude(g, Vec3::Zero(), a.load, 0.0, 1.0 / p.load.mass_l);
    return tension_magnitude(g, a.quad, a.load, p);
}

/// Inelastic re-tautening: put the load back on the sphere of radius L about
/// the quadrotor and cancel the radial relative velocity. Linear momentum is
/// conserved (the load alone absorbs the impulse when the quadrotor is pinned),
/// so kinetic energy never increases.
inline SystemState handle_retauten(const SystemState& s, const PhysicalParams& p, bool pin_quad = false)
{
    SystemState out = s;
    const CableGeometry g =
        cable_geometry(s.quad.position, s.load.position, s.quad.velocity, s.load.velocity);
    out.load.position = s.quad.position + p.load.cable_length * g.rho_n;
    const double radial = g.rho_n.dot(g.rel_velocity);
    if (pin_quad) {
        out.load.velocity -= radial * g.rho_n;
    } else {
        const double total = p.vehicle.mass_q + p.load.mass_l;
        out.quad.velocity += (p.load.mass_l / total) * radial * g.rho_n;
        out.load.velocity -= (p.vehicle.mass_q / total) * radial * g.rho_n;
    }
    out.load.cable_dir = g.rho_n;
    const Vec3 rel = out.load.velocity - out.quad.velocity;
    out.load.cable_rate = g.rho_n.cross(rel) / p.load.cable_length;
    return out;
}

/// One RK4 step of the plant. Raises Divergence on non-finite results.
inline SystemState step(const SystemState& state, const ControlInput& u, const Vec3& wind, double dt,
                        const PhysicalParams& p, const StepOptions& opt = {})
{
    if (!(dt > 0 && dt <= 5e-3))
        throw InvalidArgument("physics step must lie in (0, 5e-3]");
    ModelOptions mo;
    mo.cable = opt.pin_quad ? CableModel::PinnedQuad : CableModel::Constrained;
    mo.slack_gap = opt.stabilize ? kPlantSlackGap : std::numeric_limits<double>::infinity();
    mo.external_force = wind;

    const StateVec next = rk4_step<double>(pack(state), to_input_vec(u), dt, p, mo);
    if (!next.allFinite()) {
        std::ostringstream msg;
        msg << "plant state became non-finite; last finite state: " << pack(state).transpose();
        throw Divergence(msg.str());
    }
    SystemState s = unpack(next);
    if (!opt.stabilize)
        return s;

    const Vec3 rho = s.load.position - s.quad.position;
    const double dist = rho.norm();
    const double len = p.load.cable_length;
    const double radial = rho.dot(s.load.velocity - s.quad.velocity) / dist;
    if (radial < -kSlackRadialSpeed) {
        // Closing in: slack. Only clip a position that overshot the cable length.
        if (dist > len)
            s.load.position = s.quad.position + rho * (len / dist);
        return s;
    }
    if (dist > len)
        return handle_retauten(s, p, opt.pin_quad);
    if (dist >= len - kPlantSlackGap && cable_status(s, u, wind, p, opt.pin_quad).lambda_raw > 0.0)
        return handle_retauten(s, p, opt.pin_quad);
    return s;
}

/// World-frame quadrotor acceleration at this instant.
inline Vec3 quad_acceleration(const SystemState& s, const ControlInput& u, const Vec3& wind,
                              const PhysicalParams& p)
{
    ModelOptions mo;
    mo.slack_gap = kPlantSlackGap;
    mo.external_force = wind;
    return system_derivative<double>(pack(s), to_input_vec(u), p, mo).segment<3>(idx::vel);
}

inline ImuSample imu_measure(const SystemState& s, const Vec3& a_q_true, const PhysicalParams& p,
                             const SensorNoise& noise, std::mt19937_64& rng, double timestamp = 0.0)
{
    std::normal_distribution<double> n(0.0, 1.0);
    ImuSample m;
    m.timestamp = timestamp;
    m.specific_force = s.quad.attitude.conjugate() * (a_q_true - p.gravity_vec());
    m.body_rates = s.quad.body_rates;
    if (noise.accel_std > 0)
        for (int i = 0; i < 3; ++i)
            m.specific_force[i] += noise.accel_std * n(rng);
    if (noise.gyro_std > 0)
        for (int i = 0; i < 3; ++i)
            m.body_rates[i] += noise.gyro_std * n(rng);
    return m;
}

inline OdomSample odom_measure(const SystemState& s, const SensorNoise& noise, std::mt19937_64& rng,
                               double timestamp = 0.0)
{
    std::normal_distribution<double> n(0.0, 1.0);
    OdomSample m;
    m.timestamp = timestamp;
    m.position = s.quad.position;
    m.velocity = s.quad.velocity;
    if (noise.pos_std > 0)
        for (int i = 0; i < 3; ++i)
            m.position[i] += noise.pos_std * n(rng);
    if (noise.vel_std > 0)
        for (int i = 0; i < 3; ++i)
            m.velocity[i] += noise.vel_std * n(rng);
    return m;
}

/// World acceleration recovered from an IMU sample: R(q) a + g.
inline Vec3 world_acceleration(const ImuSample& imu, const UnitQuaternion& attitude, const PhysicalParams& p)
{
    return attitude * imu.specific_force + p.gravity_vec();
}

/// First-order Gauss-Markov wind force on the quadrotor body.
class WindProcess {
public:
    explicit WindProcess(WindModel model) : model_(model), rng_(model.seed)
    {
        if (model_.kind == WindKind::Constant)
            force_ = model_.constant;
    }

    const Vec3& force() const { return force_; }

    const Vec3& advance(double dt)
    {
        if (model_.kind != WindKind::Gust)
            return force_;
        const double tau = 1.0 / (2.0 * std::numbers::pi * model_.gust_bandwidth);
        const double decay = std::exp(-dt / tau);
        const double drive = model_.gust_amplitude * std::sqrt(1.0 - decay * decay);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int i = 0; i < 3; ++i)
            force_[i] = decay * force_[i] + drive * n(rng_);
        return force_;
    }

private:
    WindModel model_;
    std::mt19937_64 rng_;
    Vec3 force_ = Vec3::Zero();
};

}  // namespace sls
