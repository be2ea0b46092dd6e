#pragma once

// Closed-loop square-trajectory runs: plant at physics_dt, IMU-driven
// estimator prediction at imu_rate, odometry update and one controller solve
// per control tick, zero-order hold on the thrusts in between.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sls/experiment/config.hpp"
#include "sls/experiment/metrics.hpp"
#include "sls/experiment/reference.hpp"
#include "sls/experiment/run_log.hpp"
#include "sls/load_estimator.hpp"
#include "sls/model.hpp"
#include "sls/nmpc/ocp.hpp"
#include "sls/nmpc/solver.hpp"
#include "sls/simulator.hpp"

namespace sls::experiment {

struct RunResult {
    nmpc::Mode mode = nmpc::Mode::LoadAware;
    double speed = 0.0;
    std::uint64_t seed = 0;
    ReferenceTrajectory reference;
    std::vector<RunLogRow> rows;
    std::vector<double> solve_times;  // s, one per control tick
    bool aborted = false;
    std::string abort_reason;
};

/// Optional observers, called after every estimator step and plant step.
struct RunHooks {
    std::function<void(const LoadEstimator&)> on_estimator;
    std::function<void(const SystemState&, double t)> on_plant;
};

/// Estimator parameters tied to the physical and sampling configuration.
inline EstimatorParams estimator_params(const ExperimentConfig& cfg)
{
    EstimatorParams e = cfg.estimator;
    e.cable_length = cfg.physical.load.cable_length;
    e.gravity_mag = cfg.physical.vehicle.gravity_mag;
    e.step = 1.0 / cfg.sim.imu_rate;
    return e;
}

inline ReferenceTrajectory experiment_reference(const ExperimentConfig& cfg, double speed)
{
    const auto& pr = cfg.protocol;
    return square_reference(speed, pr.altitude, square_waypoints(pr.altitude, pr.side), pr.hold_after);
}

/// Controller initial state: measured quadrotor translation, attitude and
/// rates from the plant, load rebuilt from the estimated cable state.
inline StateVec controller_state(const OdomSample& odom, const QuadrotorState& quad, const EstimatorBelief& b,
                                 double cable_length)
{
    StateVec x;
    x.segment<3>(idx::pos) = odom.position;
    x.segment<3>(idx::vel) = odom.velocity;
    const UnitQuaternion q = quad.attitude.normalized();
    x.segment<4>(idx::att) << q.w(), q.x(), q.y(), q.z();
    x.segment<3>(idx::rate) = quad.body_rates;
    const Vec3 rho = b.cable_dir();
    x.segment<3>(idx::load_pos) = odom.position + cable_length * rho;
    x.segment<3>(idx::load_vel) = odom.velocity + cable_length * b.cable_rate().cross(rho);
    return x;
}

/// Closed loop against an arbitrary reference. The plant starts at `initial`
/// when given, otherwise hovering at the first reference position.
inline RunResult run_closed_loop(const ExperimentConfig& cfg, nmpc::Mode mode, ReferenceTrajectory reference,
                                 std::uint64_t seed, const RunHooks& hooks = {},
                                 const std::optional<SystemState>& initial = std::nullopt)
{
    cfg.validate();
    reference.validate();
    const PhysicalParams& p = cfg.physical;
    const SimConfig& sim = cfg.sim;

    RunResult res;
    res.mode = mode;
    res.speed = reference.speed;
    res.seed = seed;
    res.reference = std::move(reference);
    const ReferenceTrajectory& ref = res.reference;

    // Independent deterministic streams for sensors and wind.
    std::seed_seq sensor_seq{seed, sim.rng_seed, std::uint64_t{0x5e7507}};
    std::mt19937_64 sensor_rng(sensor_seq);
    WindModel wind_model = sim.wind;
    wind_model.seed = sim.wind.seed ^ (seed * 0x9e3779b97f4a7c15ULL);
    WindProcess wind(wind_model);

    SystemState state = initial ? *initial : hover_state(ref.at(0.0).position, p);
    LoadEstimator est(estimator_params(cfg));
    {
        const OdomSample z0 = odom_measure(state, sim.sensor_noise, sensor_rng, 0.0);
        est.reset(z0.position, z0.velocity);
    }

    nmpc::NmpcSolver solver(cfg.controller.solver);
    nmpc::OcpProblem pb;
    pb.horizon = cfg.controller.horizon;
    pb.dt = cfg.controller.dt;
    pb.u_min = 0.0;
    pb.u_max = p.vehicle.max_thrust_per_motor;
    pb.rate_limit = cfg.controller.rate_limit;
    pb.mode = mode;
    pb.weights = cfg.controller.weights;
    pb.params = p;

    const int steps_per_tick = sim.physics_steps_per_control();
    const int steps_per_imu = sim.physics_steps_per_imu();
    const double dt = sim.physics_dt;
    const int ticks = static_cast<int>(std::floor(ref.t_end() / sim.control_dt + 1e-9)) + 1;

    ControlInput u = hover_input(p);
    nmpc::ControlSolution last;
    bool have_last = false;
    int streak = 0;

    for (int k = 0; k < ticks; ++k) {
        const double t = k * sim.control_dt;
        const OdomSample odom = odom_measure(state, sim.sensor_noise, sensor_rng, t);
        if (k > 0)
            est.update(odom);
        if (hooks.on_estimator)
            hooks.on_estimator(est);

        pb.initial_state = controller_state(odom, state.quad, est.belief(), p.load.cable_length);
        pb.reference = stage_references(ref, t, pb.horizon, pb.dt, p);

        RunLogRow row;
        row.solver_ok = 1;
        double solve_time = 0.0;
        try {
            nmpc::ControlSolution sol = solver.solve(pb, have_last ? &last : nullptr);
            u = sol.first();
            row.solver_iterations = sol.iterations;
            row.solver_kkt = sol.kkt_residual;
            solve_time = sol.solve_time;
            last = std::move(sol);
            have_last = true;
            streak = 0;
        } catch (const nmpc::SolverFailure& e) {
            // Hold the previous input.
            row.solver_ok = 0;
            row.solver_iterations = e.last_iterate.iterations;
            row.solver_kkt = e.last_iterate.kkt_residual;
            solve_time = e.last_iterate.solve_time;
            have_last = false;
            if (++streak > cfg.protocol.failure_streak) {
                res.aborted = true;
                res.abort_reason = e.what();
            }
        }

        // Log the tick.
        row.t = t;
        row.quad_pos = state.quad.position;
        row.quad_vel = state.quad.velocity;
        row.quad_att << state.quad.attitude.w(), state.quad.attitude.x(), state.quad.attitude.y(),
            state.quad.attitude.z();
        row.quad_rate = state.quad.body_rates;
        row.load_pos = state.load.position;
        row.load_vel = state.load.velocity;
        cable_kinematics<double>(Vec3(state.load.position - state.quad.position),
                                 Vec3(state.load.velocity - state.quad.velocity), row.cable_dir, row.cable_rate);
        const EstimatorBelief& b = est.belief();
        row.est_load_pos = b.load_position();
        row.est_load_vel = b.load_velocity();
        row.est_cable_dir = b.cable_dir();
        row.est_cable_rate = b.cable_rate();
        const ReferenceSample rs = ref.at(t);
        row.ref_pos = rs.position;
        row.ref_vel = rs.velocity;
        row.thrust = u.vec();
        row.tension = cable_status(state, u, wind.force(), p).lambda;
        row.t_alpha = est.last_t_alpha();
        row.taut = est.branch() == CableBranch::Taut ? 1 : 0;
        row.innovation_norm = est.innovation().norm();
        res.rows.push_back(row);
        res.solve_times.push_back(solve_time);
        if (res.aborted)
            break;

        // Advance the plant to the next tick.
        for (int j = 1; j <= steps_per_tick; ++j) {
            const Vec3& w = wind.advance(dt);
            state = step(state, u, w, dt, p);
            const double tj = t + j * dt;
            if (hooks.on_plant)
                hooks.on_plant(state, tj);
            if (j % steps_per_imu == 0) {
                const Vec3 a_true = quad_acceleration(state, u, w, p);
                const ImuSample imu = imu_measure(state, a_true, p, sim.sensor_noise, sensor_rng, tj);
                est.predict(world_acceleration(imu, state.quad.attitude, p));
                if (hooks.on_estimator)
                    hooks.on_estimator(est);
            }
        }
    }
    return res;
}

/// Square-trajectory run at `speed`.
inline RunResult run_closed_loop(const ExperimentConfig& cfg, nmpc::Mode mode, double speed, std::uint64_t seed,
                                 const RunHooks& hooks = {})
{
    return run_closed_loop(cfg, mode, experiment_reference(cfg, speed), seed, hooks);
}

inline MetricsReport evaluate(const RunResult& run, const std::vector<double>& windows, bool payload_xy_only)
{
    std::vector<double> t;
    std::vector<Vec3> quad, load;
    for (const auto& r : run.rows) {
        t.push_back(r.t);
        quad.push_back(r.quad_pos);
        load.push_back(r.load_pos);
    }
    // The payload follows the quadrotor reference shifted one cable length down.
    ReferenceTrajectory load_ref = run.reference;
    if (!run.rows.empty()) {
        const double drop = (run.rows.front().quad_pos - run.rows.front().load_pos).norm();
        for (auto& s : load_ref.samples)
            s.position.z() -= drop;
    }
    MetricsReport m;
    m.controller = nmpc::to_string(run.mode);
    m.speed = run.speed;
    m.seed = run.seed;
    m.aborted = run.aborted;
    m.drone = sub_trajectory_metrics(t, quad, run.reference, windows, false);
    m.payload = sub_trajectory_metrics(t, load, load_ref, windows, payload_xy_only);
    return m;
}

inline MetricsReport evaluate(const RunResult& run, const ExperimentConfig& cfg)
{
    return evaluate(run, cfg.protocol.windows, cfg.protocol.payload_xy_only);
}

inline std::string run_name(nmpc::Mode mode, double speed, std::uint64_t seed)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s_v%.2f_s%llu", nmpc::to_string(mode), speed,
                  static_cast<unsigned long long>(seed));
    return buf;
}

/// Writes <name>.csv (RunLog), <name>_timing.csv and <name>_reference.csv.
inline void write_run(const std::filesystem::path& dir, const RunResult& run)
{
    std::filesystem::create_directories(dir);
    const std::string name = run_name(run.mode, run.speed, run.seed);
    {
        std::ofstream f(dir / (name + ".csv"));
        write_run_log(f, run.rows);
    }
    {
        std::ofstream f(dir / (name + "_timing.csv"));
        std::vector<double> t;
        for (const auto& r : run.rows)
            t.push_back(r.t);
        write_timing_csv(f, t, run.solve_times);
    }
    {
        std::ofstream f(dir / (name + "_reference.csv"));
        write_reference_csv(f, run.reference);
    }
}

/// The full controller x speed matrix. Runs are independent and executed in
/// order; logs go to `out`, and metrics.csv collects the table.
inline std::vector<MetricsReport> run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                            std::uint64_t seed)
{
    std::vector<MetricsReport> reports;
    for (nmpc::Mode mode : {nmpc::Mode::Classic, nmpc::Mode::LoadAware}) {
        for (double speed : cfg.protocol.speeds) {
            const RunResult run = run_closed_loop(cfg, mode, speed, seed);
            if (!out.empty())
                write_run(out, run);
            reports.push_back(evaluate(run, cfg));
        }
    }
    if (!out.empty()) {
        std::ofstream f(out / "metrics.csv");
        write_metrics_table(f, reports);
    }
    return reports;
}

}  // namespace sls::experiment
