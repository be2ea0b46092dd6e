#pragma once

// Experiment configuration as flat INI sections. Every key is optional and
// falls back to the defaults below; unknown keys are rejected so typos do not
// silently revert to defaults.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sls/experiment/metrics.hpp"
#include "sls/load_estimator.hpp"
#include "sls/nmpc/ocp.hpp"
#include "sls/nmpc/solver.hpp"
#include "sls/simulator.hpp"
#include "sls/types.hpp"

namespace sls::experiment {

struct ControllerConfig {
    int horizon = 20;
    double dt = 0.05;
    double rate_limit = 3.0;
    nmpc::OcpWeights weights;
    nmpc::SolverOptions solver;
};

struct ProtocolConfig {
    std::vector<double> speeds{0.5, 1.0, 2.0};
    double altitude = 1.8;
    double side = 4.0;
    double hold_after = 4.0;  // s of hover at P1 after the loop
    std::vector<double> windows = default_windows();
    bool payload_xy_only = true;
    int failure_streak = 5;  // consecutive solver failures before aborting
};

struct ExperimentConfig {
    PhysicalParams physical;
    SimConfig sim;
    EstimatorParams estimator;
    ControllerConfig controller;
    ProtocolConfig protocol;

    void validate() const
    {
        physical.vehicle.validate();
        physical.load.validate();
        sim.validate();
        estimator.validate();
        controller.weights.validate();
        if (controller.horizon < 1 || !(controller.dt > 0) || !(controller.rate_limit > 0))
            throw InvalidArgument("invalid controller horizon, step or rate limit");
        if (controller.solver.max_iterations < 1)
            throw InvalidArgument("solver needs at least one iteration");
        if (std::abs(controller.dt - sim.control_dt) > 1e-12)
            throw InvalidArgument("controller step must equal the control period");
        if (protocol.speeds.empty())
            throw InvalidArgument("no speeds configured");
        for (double s : protocol.speeds)
            if (!(s > 0))
                throw InvalidArgument("speeds must be positive");
        if (protocol.failure_streak < 1)
            throw InvalidArgument("failure streak must be at least 1");
    }
};

inline ExperimentConfig default_config()
{
    ExperimentConfig c;
    // Sensor noise consistent with the estimator's noise model.
    c.sim.sensor_noise.accel_std = std::sqrt(c.estimator.accel_var);
    c.sim.sensor_noise.pos_std = std::sqrt(c.estimator.pos_var);
    c.sim.sensor_noise.vel_std = std::sqrt(c.estimator.vel_var);
    c.controller.solver.max_iterations = 3;
    return c;
}

namespace detail {

inline std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty())
            out.push_back(std::stod(cell));
    return out;
}

inline std::string format_list(const std::vector<double>& v)
{
    std::string out;
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v[i]);
        out += (i ? "," : "") + std::string(buf, res.ptr);
    }
    return out;
}

// Binds each key to a field; the same table drives reading and writing.
template <class Visitor>
void bind(ExperimentConfig& c, Visitor&& v)
{
    auto& veh = c.physical.vehicle;
    v("vehicle.mass", veh.mass_q);
    v("vehicle.inertia_xx", veh.inertia_diag[0]);
    v("vehicle.inertia_yy", veh.inertia_diag[1]);
    v("vehicle.inertia_zz", veh.inertia_diag[2]);
    v("vehicle.thrust_coeff", veh.thrust_coeff);
    v("vehicle.torque_coeff", veh.torque_coeff);
    v("vehicle.arm_length", veh.arm_length);
    v("vehicle.arm_angle", veh.arm_angle);
    v("vehicle.max_thrust", veh.max_thrust_per_motor);
    v("vehicle.gravity", veh.gravity_mag);
    v("vehicle.motor_a", veh.motor_a);
    v("vehicle.motor_b", veh.motor_b);
    v("load.mass", c.physical.load.mass_l);
    v("load.cable_length", c.physical.load.cable_length);

    v("sim.physics_dt", c.sim.physics_dt);
    v("sim.control_dt", c.sim.control_dt);
    v("sim.imu_rate", c.sim.imu_rate);
    v("sim.seed", c.sim.rng_seed);
    v("sim.accel_std", c.sim.sensor_noise.accel_std);
    v("sim.gyro_std", c.sim.sensor_noise.gyro_std);
    v("sim.pos_std", c.sim.sensor_noise.pos_std);
    v("sim.vel_std", c.sim.sensor_noise.vel_std);
    v("wind.kind", c.sim.wind.kind);
    v("wind.x", c.sim.wind.constant[0]);
    v("wind.y", c.sim.wind.constant[1]);
    v("wind.z", c.sim.wind.constant[2]);
    v("wind.gust_amplitude", c.sim.wind.gust_amplitude);
    v("wind.gust_bandwidth", c.sim.wind.gust_bandwidth);
    v("wind.seed", c.sim.wind.seed);

    auto& e = c.estimator;
    v("estimator.damping", e.damping);
    v("estimator.accel_var", e.accel_var);
    v("estimator.pos_var", e.pos_var);
    v("estimator.vel_var", e.vel_var);
    v("estimator.hysteresis", e.hysteresis);
    v("estimator.observability_threshold", e.observability_threshold);
    v("estimator.initial_variance", e.initial_variance);
    v("estimator.slack_noise", e.slack_noise);

    auto& w = c.controller.weights;
    v("weights.quad_pos", w.quad_pos);
    v("weights.quad_vel", w.quad_vel);
    v("weights.quad_att", w.quad_att);
    v("weights.quad_rate", w.quad_rate);
    v("weights.load_pos", w.load_pos);
    v("weights.load_vel", w.load_vel);
    v("weights.load_dir", w.load_dir);
    v("weights.load_rate", w.load_rate);
    v("weights.control", w.control);
    v("weights.terminal_scale", w.terminal_scale);
    v("weights.rate_limit_penalty", w.rate_limit_penalty);

    v("nmpc.horizon", c.controller.horizon);
    v("nmpc.dt", c.controller.dt);
    v("nmpc.rate_limit", c.controller.rate_limit);
    v("nmpc.max_iterations", c.controller.solver.max_iterations);
    v("nmpc.kkt_tolerance", c.controller.solver.kkt_tolerance);
    v("nmpc.line_search", c.controller.solver.line_search);
    v("nmpc.merit_penalty", c.controller.solver.merit_penalty);

    auto& pr = c.protocol;
    v("experiment.speeds", pr.speeds);
    v("experiment.altitude", pr.altitude);
    v("experiment.side", pr.side);
    v("experiment.hold_after", pr.hold_after);
    v("experiment.windows", pr.windows);
    v("experiment.payload_xy_only", pr.payload_xy_only);
    v("experiment.failure_streak", pr.failure_streak);
}

inline std::string to_text(WindKind k)
{
    switch (k) {
    case WindKind::Off: return "off";
    case WindKind::Constant: return "constant";
    case WindKind::Gust: return "gust";
    }
    return "off";
}

inline WindKind wind_from_text(const std::string& s)
{
    if (s == "off")
        return WindKind::Off;
    if (s == "constant")
        return WindKind::Constant;
    if (s == "gust")
        return WindKind::Gust;
    throw InvalidArgument("unknown wind kind: " + s);
}

inline std::string to_text(SlackNoise k) { return k == SlackNoise::Isotropic ? "isotropic" : "cable"; }

inline SlackNoise slack_from_text(const std::string& s)
{
    if (s == "cable")
        return SlackNoise::CableScaled;
    if (s == "isotropic")
        return SlackNoise::Isotropic;
    throw InvalidArgument("unknown slack noise model: " + s);
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }

    ExperimentConfig c = default_config();
    std::set<std::string> known;
    detail::bind(c, [&](const std::string& key, auto& field) {
        known.insert(key);
        const auto node = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!node)
            return;
        using T = std::decay_t<decltype(field)>;
        try {
            if constexpr (std::is_same_v<T, std::vector<double>>)
                field = detail::parse_list(*node);
            else if constexpr (std::is_same_v<T, WindKind>)
                field = detail::wind_from_text(*node);
            else if constexpr (std::is_same_v<T, SlackNoise>)
                field = detail::slack_from_text(*node);
            else if constexpr (std::is_same_v<T, bool>)
                field = (*node == "true" || *node == "1");
            else if constexpr (std::is_same_v<T, int>)
                field = std::stoi(*node);
            else if constexpr (std::is_same_v<T, std::uint64_t>)
                field = std::stoull(*node);
            else
                field = std::stod(*node);
        } catch (const std::logic_error&) {
            throw InvalidArgument("config: bad value for " + key + ": " + *node);
        }
    });
    for (const auto& [section, body] : tree) {
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            if (!known.count(full))
                throw InvalidArgument("config: unknown key " + full);
        }
        if (body.empty() && !body.data().empty())
            throw InvalidArgument("config: key outside a section: " + section);
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw InvalidArgument("cannot open config file " + path);
    return parse_config(f);
}

inline void write_config(std::ostream& os, const ExperimentConfig& cfg)
{
    ExperimentConfig c = cfg;
    std::string section;
    detail::bind(c, [&](const std::string& key, auto& field) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
            section = sec;
        }
        os << key.substr(dot + 1) << " = ";
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, std::vector<double>>)
            os << detail::format_list(field);
        else if constexpr (std::is_same_v<T, WindKind> || std::is_same_v<T, SlackNoise>)
            os << detail::to_text(field);
        else if constexpr (std::is_same_v<T, bool>)
            os << (field ? "true" : "false");
        else if constexpr (std::is_same_v<T, double>) {
            char buf[40];
            const auto res = std::to_chars(buf, buf + sizeof buf, field);  // shortest round-trip form
            os << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        } else
            os << field;
        os << '\n';
    });
}

}  // namespace sls::experiment
