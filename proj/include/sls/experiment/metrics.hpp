#pragma once

// Tracking error over sub-trajectories. For each window length d, every log
// sample starts a window that extends until the reference has advanced d
// metres along its path; the window's RMSE and standard deviation of the
// position error norm are computed, then averaged over all windows of that
// length. A non-positive length means the full trajectory. The headline
// figures average over the configured lengths.

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "sls/experiment/reference.hpp"
#include "sls/types.hpp"

namespace sls::experiment {

inline constexpr double kFullWindow = 0.0;

struct WindowMetrics {
    double length = kFullWindow;  // m of reference path; kFullWindow = entire run
    double rmse = 0.0;
    double std = 0.0;
    int windows = 0;
};

struct ErrorStats {
    double rmse = 0.0;
    double std = 0.0;
    std::vector<WindowMetrics> per_window;

    const WindowMetrics* window(double length) const
    {
        for (const auto& w : per_window)
            if (w.length == length)
                return &w;
        return nullptr;
    }
};

struct MetricsReport {
    std::string controller;
    double speed = 0.0;
    std::uint64_t seed = 0;
    bool aborted = false;
    ErrorStats drone;
    ErrorStats payload;

    double rmse_drone() const { return drone.rmse; }
    double std_drone() const { return drone.std; }
    double rmse_payload() const { return payload.rmse; }
    double std_payload() const { return payload.std; }
};

inline std::vector<double> default_windows() { return {1.0, 4.0, 8.0, kFullWindow}; }

namespace detail {

struct Moments {
    double mean_sq = 0.0;
    double std = 0.0;
};

inline Moments moments(const std::vector<double>& e, std::size_t begin, std::size_t end)
{
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        s += e[i];
        s2 += e[i] * e[i];
    }
    const double n = static_cast<double>(end - begin);
    const double mean = s / n;
    const double ms = s2 / n;
    return {ms, std::sqrt(std::max(ms - mean * mean, 0.0))};
}

}  // namespace detail

/// Error statistics of `positions` sampled at `times` against `ref`.
/// `xy_only` drops the vertical component of the error.
inline ErrorStats sub_trajectory_metrics(const std::vector<double>& times, const std::vector<Vec3>& positions,
                                         const ReferenceTrajectory& ref, const std::vector<double>& windows,
                                         bool xy_only = false)
{
    if (times.size() != positions.size())
        throw InvalidArgument("times and positions differ in length");
    ref.validate();
    std::vector<double> err;
    std::vector<double> path;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < ref.t_begin() || times[i] > ref.t_end())
            continue;
        Vec3 d = positions[i] - ref.at(times[i]).position;
        if (xy_only)
            d.z() = 0.0;
        err.push_back(d.norm());
        path.push_back(ref.path_length_at(times[i]));
    }
    if (err.empty())
        throw InvalidArgument("log and reference do not overlap in time");

    ErrorStats out;
    const std::size_t n = err.size();
    for (double len : windows) {
        WindowMetrics wm;
        wm.length = len;
        double sum_ms = 0.0, sum_std = 0.0;
        if (len <= 0.0) {
            const auto m = detail::moments(err, 0, n);
            sum_ms = m.mean_sq;
            sum_std = m.std;
            wm.windows = 1;
        } else {
            std::size_t j = 0;
            for (std::size_t i = 0; i < n; ++i) {
                j = std::max(j, i);
                while (j < n && path[j] - path[i] < len)
                    ++j;
                if (j >= n)
                    break;
                const auto m = detail::moments(err, i, j + 1);
                sum_ms += m.mean_sq;
                sum_std += m.std;
                ++wm.windows;
            }
        }
        if (wm.windows == 0)
            continue;  // path shorter than the window
        wm.rmse = std::sqrt(sum_ms / wm.windows);
        wm.std = sum_std / wm.windows;
        out.per_window.push_back(wm);
    }
    if (out.per_window.empty())
        throw InvalidArgument("no complete sub-trajectory for any window length");
    for (const auto& w : out.per_window) {
        out.rmse += w.rmse;
        out.std += w.std;
    }
    out.rmse /= static_cast<double>(out.per_window.size());
    out.std /= static_cast<double>(out.per_window.size());
    return out;
}

/// Table with one row per metric and one column per report, plus a pooled
/// (mean over speeds) column for each controller.
inline void write_metrics_table(std::ostream& os, const std::vector<MetricsReport>& reports)
{
    std::vector<std::string> controllers;
    for (const auto& r : reports)
        if (std::find(controllers.begin(), controllers.end(), r.controller) == controllers.end())
            controllers.push_back(r.controller);

    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };

    os << "metric";
    for (const auto& r : reports)
        os << ',' << r.controller << '@' << num(r.speed);
    for (const auto& c : controllers)
        os << ',' << c << "@pooled";
    os << '\n';

    using Getter = double (MetricsReport::*)() const;
    const std::pair<const char*, Getter> rows[] = {{"RMSE Drone", &MetricsReport::rmse_drone},
                                                   {"STD Drone", &MetricsReport::std_drone},
                                                   {"RMSE Payload", &MetricsReport::rmse_payload},
                                                   {"STD Payload", &MetricsReport::std_payload}};
    for (const auto& [name, get] : rows) {
        os << name;
        for (const auto& r : reports)
            os << ',' << num((r.*get)());
        for (const auto& c : controllers) {
            double s = 0.0;
            int k = 0;
            for (const auto& r : reports)
                if (r.controller == c) {
                    s += (r.*get)();
                    ++k;
                }
            os << ',' << num(s / k);
        }
        os << '\n';
    }
    os << "aborted";
    for (const auto& r : reports)
        os << ',' << (r.aborted ? 1 : 0);
    for (std::size_t i = 0; i < controllers.size(); ++i)
        os << ',';
    os << '\n';
}

}  // namespace sls::experiment
