#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sls/nmpc/ocp.hpp"
#include "sls/types.hpp"

namespace sls::experiment {

struct ReferenceSample {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double yaw = 0.0;
};

/// Sampled reference. Positions are interpolated linearly; velocity and yaw are
/// held from the sample at or before t, so piecewise-constant velocity with
/// corners on sample times is reproduced exactly.
struct ReferenceTrajectory {
    std::vector<ReferenceSample> samples;
    double speed = 0.0;
    std::vector<Vec3> waypoints;

    double t_begin() const { return samples.front().t; }
    double t_end() const { return samples.back().t; }

    ReferenceSample at(double t) const
    {
        if (samples.empty())
            throw InvalidArgument("empty reference trajectory");
        if (t <= samples.front().t) {
            ReferenceSample s = samples.front();
            s.t = t;
            if (t < samples.front().t)
                s.velocity.setZero();
            return s;
        }
        if (t >= samples.back().t) {
            ReferenceSample s = samples.back();
            s.t = t;
            s.velocity.setZero();
            return s;
        }
        const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                         [](double v, const ReferenceSample& s) { return v < s.t; });
        const ReferenceSample& b = *it;
        const ReferenceSample& a = *(it - 1);
        const double w = (t - a.t) / (b.t - a.t);
        ReferenceSample s = a;
        s.t = t;
        s.position = (1.0 - w) * a.position + w * b.position;
        return s;
    }

    /// Distance travelled along the reference up to time t.
    double path_length_at(double t) const
    {
        if (samples.empty() || t <= samples.front().t)
            return 0.0;
        double s = 0.0;
        for (std::size_t i = 1; i < samples.size(); ++i) {
            const auto& a = samples[i - 1];
            const auto& b = samples[i];
            if (t >= b.t) {
                s += (b.position - a.position).norm();
            } else {
                s += (at(t).position - a.position).norm();
                break;
            }
        }
        return s;
    }

    void validate() const
    {
        if (samples.empty())
            throw InvalidArgument("empty reference trajectory");
        for (std::size_t i = 1; i < samples.size(); ++i)
            if (!(samples[i].t > samples[i - 1].t))
                throw InvalidArgument("reference time must be strictly increasing");
    }
};

inline std::vector<Vec3> square_waypoints(double altitude, double side = 4.0)
{
    return {{0.0, 0.0, altitude}, {side, 0.0, altitude}, {side, side, altitude}, {0.0, side, altitude},
            {0.0, 0.0, altitude}};
}

/// Constant-speed straight segments through the waypoints, no corner
/// smoothing, fixed heading, followed by an optional hover at the last point.
inline ReferenceTrajectory square_reference(double speed, double altitude, const std::vector<Vec3>& waypoints,
                                            double hold_after = 0.0, double sample_dt = 0.01)
{
    if (!(speed > 0))
        throw InvalidArgument("reference speed must be positive");
    if (waypoints.size() < 2)
        throw InvalidArgument("need at least two waypoints");
    ReferenceTrajectory ref;
    ref.speed = speed;
    ref.waypoints = waypoints;
    for (auto& w : ref.waypoints)
        w.z() = altitude;

    double t0 = 0.0;
    for (std::size_t i = 0; i + 1 < ref.waypoints.size(); ++i) {
        const Vec3 a = ref.waypoints[i];
        const Vec3 b = ref.waypoints[i + 1];
        const double len = (b - a).norm();
        if (len <= 0.0)
            continue;
        const double duration = len / speed;
        const Vec3 vel = (b - a) / duration;
        const int n = std::max(1, static_cast<int>(std::ceil(duration / sample_dt - 1e-9)));
        for (int k = 0; k < n; ++k) {
            const double tau = duration * k / n;
            ref.samples.push_back({t0 + tau, a + vel * tau, vel, 0.0});
        }
        t0 += duration;
    }
    const Vec3 last = ref.waypoints.back();
    ref.samples.push_back({t0, last, Vec3::Zero(), 0.0});
    if (hold_after > 0.0) {
        const int n = std::max(1, static_cast<int>(std::ceil(hold_after / sample_dt - 1e-9)));
        for (int k = 1; k <= n; ++k)
            ref.samples.push_back({t0 + hold_after * k / n, last, Vec3::Zero(), 0.0});
    }
    return ref;
}

inline ReferenceTrajectory square_reference(double speed, double altitude = 1.8, double hold_after = 0.0)
{
    return square_reference(speed, altitude, square_waypoints(altitude), hold_after);
}

/// Hold a single position for `duration` seconds.
inline ReferenceTrajectory constant_reference(const Vec3& position, double duration)
{
    if (!(duration > 0))
        throw InvalidArgument("reference duration must be positive");
    ReferenceTrajectory ref;
    ref.samples = {{0.0, position, Vec3::Zero(), 0.0}, {duration, position, Vec3::Zero(), 0.0}};
    ref.waypoints = {position};
    return ref;
}

/// Per-stage OCP references from t0 on: quad from the trajectory, load hanging
/// L below it with matched velocity, hover thrust split as the input reference.
inline std::vector<nmpc::StageReference> stage_references(const ReferenceTrajectory& ref, double t0, int horizon,
                                                          double dt, const PhysicalParams& p)
{
    std::vector<nmpc::StageReference> out(horizon + 1);
    for (int k = 0; k <= horizon; ++k) {
        const ReferenceSample s = ref.at(t0 + k * dt);
        nmpc::StageReference& r = out[k];
        r = nmpc::hover_reference(s.position, p);
        r.quad_vel = s.velocity;
        r.load_vel = s.velocity;
        const double h = 0.5 * s.yaw;
        r.quad_att = Vec4(std::cos(h), 0.0, 0.0, std::sin(h));
    }
    return out;
}

// CSV: t,p_x,p_y,p_z,v_x,v_y,v_z,yaw

inline void write_reference_csv(std::ostream& os, const ReferenceTrajectory& ref)
{
    os << "t,p_x,p_y,p_z,v_x,v_y,v_z,yaw\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf << sep;
    };
    for (const auto& s : ref.samples) {
        put(s.t, ',');
        for (int i = 0; i < 3; ++i)
            put(s.position[i], ',');
        for (int i = 0; i < 3; ++i)
            put(s.velocity[i], ',');
        put(s.yaw, '\n');
    }
}

inline ReferenceTrajectory read_reference_csv(std::istream& is)
{
    ReferenceTrajectory ref;
    std::string line;
    if (!std::getline(is, line))
        throw InvalidArgument("reference CSV is empty");
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        double v[8];
        for (int i = 0; i < 8; ++i) {
            if (!std::getline(ss, cell, ','))
                throw InvalidArgument("reference CSV row has fewer than 8 columns");
            v[i] = std::stod(cell);
        }
        ref.samples.push_back({v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}, v[7]});
    }
    ref.validate();
    return ref;
}

}  // namespace sls::experiment
