#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "sls/dynamics.hpp"
#include "sls/types.hpp"

using namespace sls;

namespace {

Vec4 random_quat(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

Vec4 axis_angle(const Vec3& axis, double angle)
{
    const Eigen::AngleAxisd aa(angle, axis.normalized());
    return to_vec4(UnitQuaternion(aa));
}

}  // namespace

TEST(Allocation, NominalEntries)
{
    const VehicleParams p;
    const Mat4 g = allocation_matrix(p);
    EXPECT_NEAR(g(1, 1), 0.258 * std::sin(44.22 * std::numbers::pi / 180.0), 1e-15);
    EXPECT_NEAR(g(1, 1), 0.17992, 5e-5);
    EXPECT_NEAR(g(3, 0), -16.28 / 27.6, 1e-15);
    EXPECT_NEAR(g(3, 0), -0.58986, 5e-6);
    for (int j = 0; j < 4; ++j)
        EXPECT_EQ(g(0, j), 1.0);
}

TEST(Allocation, MatchesRotorGeometry)
{
    // Oracle: torque = sum r_i x (0,0,T_i) plus yaw reaction, from rotor positions.
    const VehicleParams p;
    const double c = p.arm_length * std::cos(p.arm_angle);
    const double s = p.arm_length * std::sin(p.arm_angle);
    const Vec3 pos[4] = {{c, -s, 0}, {-c, s, 0}, {c, s, 0}, {-c, -s, 0}};
    const double spin[4] = {-1, -1, 1, 1};
    const ControlInput u{{2.0, 1.0, 1.5, 0.7}};
    Vec3 tau = Vec3::Zero();
    for (int i = 0; i < 4; ++i) {
        tau += pos[i].cross(Vec3(0, 0, u.thrusts[i]));
        tau.z() += spin[i] * p.torque_coeff / p.thrust_coeff * u.thrusts[i];
    }
    const Wrench w = thrusts_to_wrench(u, p);
    EXPECT_NEAR(w.thrust, 5.2, 1e-14);
    EXPECT_NEAR((w.torque - tau).norm(), 0.0, 1e-14);
}

TEST(Allocation, RankFourOverRandomParams)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> len(0.05, 1.0), ang(0.05, 1.5), coef(1e-7, 1e-4);
    for (int i = 0; i < 500; ++i) {
        VehicleParams p;
        p.arm_length = len(rng);
        p.arm_angle = ang(rng);
        p.thrust_coeff = coef(rng);
        p.torque_coeff = coef(rng);
        const Mat4 g = allocation_matrix(p);
        EXPECT_GT(std::abs(g.determinant()), 1e-12);
        EXPECT_EQ(Eigen::FullPivLU<Mat4>(g).rank(), 4);
    }
}

TEST(Allocation, WrenchExamples)
{
    const VehicleParams p;
    Wrench w = thrusts_to_wrench(ControlInput::uniform(1.0), p);
    EXPECT_DOUBLE_EQ(w.thrust, 4.0);
    EXPECT_NEAR(w.torque.norm(), 0.0, 1e-15);

    w = thrusts_to_wrench(ControlInput::uniform(0.0), p);
    EXPECT_EQ(w.thrust, 0.0);
    EXPECT_EQ(w.torque.norm(), 0.0);

    const double a = p.arm_length * std::sin(p.arm_angle);
    const double c = p.arm_length * std::cos(p.arm_angle);
    const double r = p.torque_coeff / p.thrust_coeff;
    w = thrusts_to_wrench(ControlInput{{2.0, 1.0, 1.0, 2.0}}, p);
    EXPECT_NEAR(w.torque.x(), a * (-2 + 1 + 1 - 2), 1e-15);
    EXPECT_NEAR(w.torque.y(), c * (-2 + 1 - 1 + 2), 1e-15);
    EXPECT_NEAR(w.torque.z(), -r * (2 + 1) + r * (1 + 2), 1e-15);
}

TEST(Allocation, Linearity)
{
    const VehicleParams p;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-5, 5);
    for (int i = 0; i < 200; ++i) {
        const Vec4 u1(d(rng), d(rng), d(rng), d(rng));
        const Vec4 u2(d(rng), d(rng), d(rng), d(rng));
        const double a = d(rng), b = d(rng);
        const Wrench w = thrusts_to_wrench(ControlInput::from(a * u1 + b * u2), p);
        const Wrench w1 = thrusts_to_wrench(ControlInput::from(u1), p);
        const Wrench w2 = thrusts_to_wrench(ControlInput::from(u2), p);
        EXPECT_NEAR(w.thrust, a * w1.thrust + b * w2.thrust, 1e-12);
        EXPECT_NEAR((w.torque - (a * w1.torque + b * w2.torque)).norm(), 0.0, 1e-12);
    }
}

TEST(MotorModel, RoundTrip)
{
    const VehicleParams p;
    for (double t : {1.0, 4.0, 8.33, 12.0}) {
        const double cmd = thrust_to_motor_command(t, p);
        EXPECT_GE(cmd, 0.0);
        EXPECT_LE(cmd, 1.0);
        EXPECT_NEAR(motor_command_to_thrust(cmd, p), t, 1e-12);
    }
    EXPECT_EQ(thrust_to_motor_command(0.0, p), 0.0);
}

TEST(QuadDerivative, HoverEquilibrium)
{
    PhysicalParams pp;
    const VehicleParams& p = pp.vehicle;
    QuadrotorState s;
    const double thrust = pp.hover_thrust_total();
    const auto d = quad_derivative(s, thrust, Vec3::Zero(), Vec3(0, 0, -pp.load.mass_l * p.gravity_mag), p);
    EXPECT_NEAR(d.velocity.norm(), 0.0, 1e-14);
    EXPECT_NEAR(d.body_rates.norm(), 0.0, 1e-14);
}

TEST(QuadDerivative, FreeFall)
{
    const VehicleParams p;
    QuadrotorState s;
    const auto d = quad_derivative(s, 0.0, Vec3::Zero(), Vec3::Zero(), p);
    EXPECT_NEAR((d.velocity - Vec3(0, 0, -9.8)).norm(), 0.0, 1e-15);
}

TEST(QuadDerivative, GyroscopicTermMatchesCrossProduct)
{
    const VehicleParams p;  // I_xx == I_yy
    QuadrotorState s;
    s.body_rates = Vec3(0, 0, 1);
    EXPECT_NEAR(quad_derivative(s, 0.0, Vec3::Zero(), Vec3::Zero(), p).body_rates.norm(), 0.0, 1e-15);

    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0, 2);
    const Mat3 inertia = p.inertia_diag.asDiagonal();
    for (int i = 0; i < 100; ++i) {
        s.body_rates = Vec3(n(rng), n(rng), n(rng));
        const Vec3 tau(n(rng), n(rng), n(rng));
        const Vec3 oracle = inertia.inverse() * (tau - s.body_rates.cross(inertia * s.body_rates));
        const Vec3 got = quad_derivative(s, 0.0, tau, Vec3::Zero(), p).body_rates;
        EXPECT_NEAR((got - oracle).norm(), 0.0, 1e-10);
    }
}

TEST(QuadDerivative, QuaternionNormPreservedToFirstOrder)
{
    const VehicleParams p;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 3);
    for (int i = 0; i < 500; ++i) {
        QuadrotorState s;
        s.attitude = to_quat(random_quat(rng));
        s.body_rates = Vec3(n(rng), n(rng), n(rng));
        const auto d = quad_derivative(s, 10.0, Vec3::Zero(), Vec3::Zero(), p);
        EXPECT_NEAR(to_vec4(s.attitude).dot(d.attitude), 0.0, 1e-12);
    }
}

TEST(QuadDerivative, ThrustAlongBodyZ)
{
    // Oracle: Eigen's rotation of the body z axis.
    const VehicleParams p;
    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
        QuadrotorState s;
        s.attitude = to_quat(random_quat(rng));
        const auto d = quad_derivative(s, 20.0, Vec3::Zero(), Vec3::Zero(), p);
        const Vec3 oracle = s.attitude.toRotationMatrix() * Vec3(0, 0, 20.0 / p.mass_q) - Vec3(0, 0, 9.8);
        EXPECT_NEAR((d.velocity - oracle).norm(), 0.0, 1e-12);
    }
}

TEST(LoadDerivative, Examples)
{
    PhysicalParams p;
    LoadState s;
    EXPECT_NEAR(load_derivative(s, Vec3(0, 0, -4.9), p).velocity.norm(), 0.0, 1e-15);
    EXPECT_NEAR((load_derivative(s, Vec3::Zero(), p).velocity - Vec3(0, 0, -9.8)).norm(), 0.0, 1e-15);
    EXPECT_NEAR((load_derivative(s, Vec3(0.5, 0, -4.9), p).velocity - Vec3(-1.0, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(QuaternionError, Examples)
{
    const Vec4 id(1, 0, 0, 0);
    EXPECT_NEAR(quaternion_error_decompose<double>(id, id).norm(), 0.0, 1e-15);
    for (double th : {0.1, 0.7, 2.0, -1.2}) {
        const Vec3 yaw = quaternion_error_decompose<double>(axis_angle(Vec3::UnitZ(), th), id);
        EXPECT_NEAR((yaw - Vec3(0, 0, std::sin(th / 2))).norm(), 0.0, 1e-14) << th;
        const Vec3 roll = quaternion_error_decompose<double>(axis_angle(Vec3::UnitX(), th), id);
        EXPECT_NEAR((roll - Vec3(std::sin(th / 2), 0, 0)).norm(), 0.0, 1e-14) << th;
    }
}

TEST(QuaternionError, ZeroOnEqualArguments)
{
    std::mt19937_64 rng(13);
    for (int i = 0; i < 200; ++i) {
        const Vec4 q = random_quat(rng);
        EXPECT_NEAR(quaternion_error_decompose<double>(q, q).norm(), 0.0, 1e-12);
        EXPECT_NEAR(quaternion_error_decompose<double>(q, Vec4(-q)).norm(), 0.0, 1e-12);
    }
}

TEST(QuaternionError, DependsOnlyOnErrorQuaternion)
{
    // Right-multiplying both arguments by r leaves q (x) q_ref^-1 unchanged.
    std::mt19937_64 rng(17);
    for (int i = 0; i < 200; ++i) {
        const Vec4 q = random_quat(rng), qr = random_quat(rng), r = random_quat(rng);
        const Vec3 a = quaternion_error_decompose<double>(q, qr);
        const Vec3 b = quaternion_error_decompose<double>(quat_mul<double>(q, r), quat_mul<double>(qr, r));
        EXPECT_NEAR((a - b).norm(), 0.0, 1e-10);
    }
}

TEST(QuaternionError, SingularityFallback)
{
    // 180 deg about x: w = z = 0.
    const Vec3 e = quaternion_error_decompose<double>(Vec4(0, 1, 0, 0), Vec4(1, 0, 0, 0));
    EXPECT_TRUE(e.allFinite());
    EXPECT_NEAR((e - Vec3(1, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(Rotation, MatchesEigen)
{
    std::mt19937_64 rng(19);
    for (int i = 0; i < 100; ++i) {
        const Vec4 q = random_quat(rng);
        const Mat3 oracle = to_quat(q).toRotationMatrix();
        EXPECT_NEAR((rotation_matrix<double>(q) - oracle).norm(), 0.0, 1e-13);
    }
}

TEST(Params, Validation)
{
    VehicleParams p;
    EXPECT_NO_THROW(p.validate());
    p.mass_q = -1;
    EXPECT_THROW(p.validate(), InvalidArgument);
    LoadParams l;
    l.cable_length = 0;
    EXPECT_THROW(l.validate(), InvalidArgument);
}
