// Command-line driver for the square-trajectory experiments.
//
//   sls_cli run     --config <ini> --controller {classic|load} --speed <m/s> --seed <n> --out <dir>
//   sls_cli metrics --log <csv> --ref <csv> [--windows 1,4,8] [--payload-3d]
//   sls_cli sweep   --config <ini> --out <dir> [--seed <n>]
//   sls_cli config  (print the default configuration)

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sls/experiment/config.hpp"
#include "sls/experiment/metrics.hpp"
#include "sls/experiment/reference.hpp"
#include "sls/experiment/run_log.hpp"
#include "sls/experiment/runner.hpp"

namespace ex = sls::experiment;

namespace {

ex::ExperimentConfig config_or_default(const std::string& path)
{
    return path.empty() ? ex::default_config() : ex::load_config(path);
}

std::vector<double> parse_windows(const std::string& s, bool full)
{
    std::vector<double> w = ex::detail::parse_list(s);
    if (full)
        w.push_back(ex::kFullWindow);
    return w;
}

void print_report(const ex::MetricsReport& m)
{
    std::cout << m.controller << " @ " << m.speed << " m/s (seed " << m.seed << ")"
              << (m.aborted ? " [aborted]" : "") << "\n"
              << "  drone   RMSE " << m.rmse_drone() << "  STD " << m.std_drone() << "\n"
              << "  payload RMSE " << m.rmse_payload() << "  STD " << m.std_payload() << "\n";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Slung-load quadrotor NMPC experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, controller = "load", log_path, ref_path, windows = "1,4,8";
    double speed = 1.0;
    std::uint64_t seed = 1;
    bool payload_3d = false, no_full = false;

    auto* run = app.add_subcommand("run", "single closed-loop run");
    run->add_option("--config", config_path, "INI config (defaults if omitted)");
    run->add_option("--controller", controller, "controller")->check(CLI::IsMember({"classic", "load"}));
    run->add_option("--speed", speed, "reference speed, m/s")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "random seed");
    run->add_option("--out", out_dir, "output directory")->required();

    auto* metrics = app.add_subcommand("metrics", "sub-trajectory errors of a run log");
    metrics->add_option("--log", log_path, "run log CSV")->required()->check(CLI::ExistingFile);
    metrics->add_option("--ref", ref_path, "reference CSV")->required()->check(CLI::ExistingFile);
    metrics->add_option("--windows", windows, "window lengths in metres, comma separated");
    metrics->add_flag("--no-full", no_full, "omit the full-trajectory window");
    metrics->add_flag("--payload-3d", payload_3d, "payload error in 3D instead of XY");

    auto* sweep = app.add_subcommand("sweep", "full controller x speed matrix");
    sweep->add_option("--config", config_path, "INI config (defaults if omitted)");
    sweep->add_option("--out", out_dir, "output directory")->required();
    sweep->add_option("--seed", seed, "random seed");

    auto* cfg_cmd = app.add_subcommand("config", "print the default configuration");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = config_or_default(config_path);
            const auto mode = controller == "classic" ? sls::nmpc::Mode::Classic : sls::nmpc::Mode::LoadAware;
            const auto result = ex::run_closed_loop(cfg, mode, speed, seed);
            ex::write_run(out_dir, result);
            const auto report = ex::evaluate(result, cfg);
            std::ofstream f(std::filesystem::path(out_dir) / (ex::run_name(mode, speed, seed) + "_metrics.csv"));
            ex::write_metrics_table(f, {report});
            print_report(report);
            return result.aborted ? 2 : 0;
        }
        if (*metrics) {
            std::ifstream lf(log_path), rf(ref_path);
            ex::RunResult run;
            run.rows = ex::read_run_log(lf);
            run.reference = ex::read_reference_csv(rf);
            for (const auto& s : run.reference.samples)
                run.speed = std::max(run.speed, s.velocity.norm());
            ex::MetricsReport m = ex::evaluate(run, parse_windows(windows, !no_full), !payload_3d);
            m.controller = std::filesystem::path(log_path).stem().string();
            ex::write_metrics_table(std::cout, {m});
            return 0;
        }
        if (*sweep) {
            const auto cfg = config_or_default(config_path);
            const auto reports = ex::run_sweep(cfg, out_dir, seed);
            for (const auto& r : reports)
                print_report(r);
            return 0;
        }
        if (*cfg_cmd) {
            ex::write_config(std::cout, ex::default_config());
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
