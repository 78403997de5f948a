#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "sctraj/scenario.hpp"

namespace {

int run_cmd(const std::string& config, const std::string& out, std::optional<unsigned> threads)
{
    auto cfg = sctraj::Config::load(config);
    if (threads)
        cfg.set("threads", std::to_string(*threads));
    const auto sc = sctraj::scenario_from_config(std::move(cfg));
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = sctraj::run_scenario(sc, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "wrote " << out << " (" << sctraj::csv::num(secs) << " s)\n";
    for (const auto& r : res.report)
        std::cout << "  b=" << sctraj::csv::num(r.b) << " T=" << sctraj::csv::num(r.T) << ' ' << r.formula
                  << " l2=" << sctraj::csv::num(r.metrics.l2) << " phase_rms/pi="
                  << sctraj::csv::num(r.metrics.phase_rms / std::numbers::pi) << '\n';
    return 0;
}

int map_cmd(const std::string& config, const std::string& out, double T, std::optional<unsigned> threads)
{
    auto cfg = sctraj::Config::load(config);
    if (threads)
        cfg.set("threads", std::to_string(*threads));
    const auto sc = sctraj::scenario_from_config(std::move(cfg));
    if (!(T >= 0.0))
        throw sctraj::Error(sctraj::ErrorKind::ConfigError, "--time must be non-negative");
    sctraj::emit_map_data(sc, T, out);
    std::cout << "wrote " << out << '\n';
    return 0;
}

int compare_cmd(const std::string& a, const std::string& b, double floor)
{
    const auto c = sctraj::compare_files(a, b, floor);
    std::cout << "l2," << sctraj::csv::num(c.l2) << '\n'
              << "max_density_dev," << sctraj::csv::num(c.max_density_dev) << '\n'
              << "phase_rms," << sctraj::csv::num(c.phase_rms) << '\n'
              << "phase_points," << c.phase_points << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Complex-trajectory semiclassical wavepacket propagation"};
    app.require_subcommand(1);

    std::string config, out = "out", file_a, file_b;
    std::optional<unsigned> threads;
    double T = 0.0, floor = 1e-6;

    auto* run = app.add_subcommand("run", "Compute the wavefunctions and report for a scenario");
    run->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "Output directory");
    run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* map = app.add_subcommand("map", "Write the w-plane scan, caustics and families at one time");
    map->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);
    map->add_option("--time", T, "Propagation time")->required();
    map->add_option("--out", out, "Output directory");
    map->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* cmp = app.add_subcommand("compare", "Compare two wavefunction CSV files");
    cmp->add_option("a", file_a, "First file")->required()->check(CLI::ExistingFile);
    cmp->add_option("b", file_b, "Second file")->required()->check(CLI::ExistingFile);
    cmp->add_option("--floor", floor, "Relative density floor for the phase RMS");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return run_cmd(config, out, threads);
        if (*map)
            return map_cmd(config, out, T, threads);
        return compare_cmd(file_a, file_b, floor);
    } catch (const sctraj::Error& e) {
        std::cerr << "error [" << sctraj::to_string(e.kind()) << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
