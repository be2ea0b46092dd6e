#pragma once

// Per-control-tick log of a closed-loop run. Column order is fixed by
// kRunLogColumns; reals are written with 17 significant digits so a parse
// reproduces the in-memory doubles exactly. Wall-clock solver time is kept out
// of this file (see write_timing_csv) so that logs are byte-reproducible.

#include <array>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sls/types.hpp"

namespace sls::experiment {

struct RunLogRow {
    double t = 0.0;
    // Ground truth.
    Vec3 quad_pos = Vec3::Zero();
    Vec3 quad_vel = Vec3::Zero();
    Vec4 quad_att{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
    Vec3 quad_rate = Vec3::Zero();
    Vec3 load_pos = Vec3::Zero();
    Vec3 load_vel = Vec3::Zero();
    Vec3 cable_dir = Vec3::Zero();
    Vec3 cable_rate = Vec3::Zero();
    // Load estimate.
    Vec3 est_load_pos = Vec3::Zero();
    Vec3 est_load_vel = Vec3::Zero();
    Vec3 est_cable_dir = Vec3::Zero();
    Vec3 est_cable_rate = Vec3::Zero();
    // Reference.
    Vec3 ref_pos = Vec3::Zero();
    Vec3 ref_vel = Vec3::Zero();
    // Applied input and cable state.
    Vec4 thrust = Vec4::Zero();
    double tension = 0.0;
    double t_alpha = 0.0;
    int taut = 1;
    // Controller.
    int solver_iterations = 0;
    double solver_kkt = 0.0;
    int solver_ok = 1;
    double innovation_norm = 0.0;
};

inline const std::vector<std::string>& run_log_columns()
{
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"t"};
        auto v3 = [&](const char* name) {
            for (const char* ax : {"x", "y", "z"})
                c.push_back(std::string(name) + "_" + ax);
        };
        v3("quad_pos");
        v3("quad_vel");
        for (const char* ax : {"w", "x", "y", "z"})
            c.push_back(std::string("quad_att_") + ax);
        v3("quad_rate");
        v3("load_pos");
        v3("load_vel");
        v3("cable_dir");
        v3("cable_rate");
        v3("est_load_pos");
        v3("est_load_vel");
        v3("est_cable_dir");
        v3("est_cable_rate");
        v3("ref_pos");
        v3("ref_vel");
        for (const char* m : {"1", "2", "3", "4"})
            c.push_back(std::string("thrust_") + m);
        for (const char* name : {"tension", "t_alpha", "taut", "solver_iterations", "solver_kkt", "solver_ok",
                                 "innovation_norm"})
            c.emplace_back(name);
        return c;
    }();
    return cols;
}

namespace detail {

// Visits every field of a row in column order; F receives double& for reals
// and int& for integer columns.
template <class Row, class F>
void visit_fields(Row& r, F&& f)
{
    f(r.t);
    auto v = [&](auto& vec) {
        for (Eigen::Index i = 0; i < vec.size(); ++i)
            f(vec[i]);
    };
    v(r.quad_pos);
    v(r.quad_vel);
    v(r.quad_att);
    v(r.quad_rate);
    v(r.load_pos);
    v(r.load_vel);
    v(r.cable_dir);
    v(r.cable_rate);
    v(r.est_load_pos);
    v(r.est_load_vel);
    v(r.est_cable_dir);
    v(r.est_cable_rate);
    v(r.ref_pos);
    v(r.ref_vel);
    v(r.thrust);
    f(r.tension);
    f(r.t_alpha);
    f(r.taut);
    f(r.solver_iterations);
    f(r.solver_kkt);
    f(r.solver_ok);
    f(r.innovation_norm);
}

inline std::string format_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_run_log(std::ostream& os, const std::vector<RunLogRow>& rows)
{
    const auto& cols = run_log_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& row : rows) {
        bool first = true;
        auto put = [&](const auto& x) {
            if (!first)
                os << ',';
            first = false;
            if constexpr (std::is_same_v<std::decay_t<decltype(x)>, int>)
                os << x;
            else
                os << detail::format_real(x);
        };
        detail::visit_fields(row, put);
        os << '\n';
    }
}

inline std::vector<RunLogRow> read_run_log(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line))
        throw InvalidArgument("run log is empty");
    {
        std::vector<std::string> header;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            header.push_back(cell);
        if (header != run_log_columns())
            throw InvalidArgument("run log header does not match the expected columns");
    }
    std::vector<RunLogRow> rows;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        RunLogRow row;
        auto get = [&](auto& x) {
            if (!std::getline(ss, cell, ','))
                throw InvalidArgument("run log row is too short");
            if constexpr (std::is_same_v<std::decay_t<decltype(x)>, int>)
                x = std::stoi(cell);
            else
                x = std::strtod(cell.c_str(), nullptr);
        };
        detail::visit_fields(row, get);
        if (!rows.empty() && !(row.t > rows.back().t))
            throw InvalidArgument("run log time must be strictly increasing");
        rows.push_back(row);
    }
    return rows;
}

/// Sidecar with wall-clock solve times, one line per control tick.
inline void write_timing_csv(std::ostream& os, const std::vector<double>& times, const std::vector<double>& solve_s)
{
    os << "t,solve_time\n";
    for (std::size_t i = 0; i < times.size() && i < solve_s.size(); ++i)
        os << detail::format_real(times[i]) << ',' << detail::format_real(solve_s[i]) << '\n';
}

}  // namespace sls::experiment
