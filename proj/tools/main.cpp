#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "embodied/harness.hpp"
#include "embodied/roschain.hpp"
#include "embodied/scenarios.hpp"

namespace {

constexpr int kConfigError = 2;

using namespace embodied;

int run_command(const std::string& scenario, const std::string& backend, std::uint64_t seed,
                int max_steps, double tick_dt, bool concurrent, const std::string& out) {
    harness::RunConfig config;
    try {
        config.scenario = scenarios::parse_scenario(scenario);
        config.backend = harness::parse_backend(backend);
        config.seed = seed;
        config.max_steps = max_steps;
        config.tick_dt = tick_dt;
        config.concurrent = concurrent;
        config.out_dir = out;
        config.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    const auto report = harness::run(config);
    std::cout << scenarios::to_string(config.scenario) << " " << harness::to_string(config.backend)
              << " seed=" << seed << " steps=" << report.step_count
              << " TR=" << harness::format_one_decimal(report.tr)
              << " AR=" << harness::format_one_decimal(report.ar)
              << " digest=" << report.command_digest << " wall=" << report.wall_seconds << "s\n";
    return 0;
}

int compare_command(std::uint64_t seed, int max_steps, const std::string& out,
                    const std::string& json_out) {
    if (max_steps < 1) {
        std::cerr << "config error: max_steps must be at least 1\n";
        return kConfigError;
    }
    const auto table = harness::compare(harness::all_configs(seed, max_steps));
    const auto csv = table.to_csv();
    std::cout << csv;
    if (!out.empty()) {
        std::ofstream(out) << csv;
    }
    if (!json_out.empty()) {
        std::ofstream(json_out) << table.to_json();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embodied agent simulation harness"};
    app.require_subcommand(1);

    std::string scenario = "wildfire";
    std::string backend = "scripted_full";
    std::uint64_t seed = 0;
    int max_steps = 200;
    double tick_dt = 1.0;
    bool concurrent = false;
    std::string out;
    auto* run = app.add_subcommand("run", "Run one scenario with one backend");
    run->add_option("--scenario", scenario, "wildfire | landing | inspection | safenav");
    run->add_option("--backend", backend,
                    "scripted_full | scripted_no_roschain | single_call | random_baseline | external");
    run->add_option("--seed", seed);
    run->add_option("--max-steps", max_steps);
    run->add_option("--tick-dt", tick_dt, "seconds per step");
    run->add_flag("--concurrent", concurrent, "multi-threaded bus");
    run->add_option("--out", out, "directory for report, ledger, trajectory and traces");

    bool all = false;
    std::string table_out;
    std::string json_out;
    auto* cmp = app.add_subcommand("compare", "Every backend on every scenario");
    cmp->add_flag("--all", all, "run the full grid (default)");
    cmp->add_option("--seed", seed);
    cmp->add_option("--max-steps", max_steps);
    cmp->add_option("--out", table_out, "CSV file");
    cmp->add_option("--json", json_out, "JSON file");

    auto* dump = app.add_subcommand("dump-registry", "Print the command table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    if (*run) {
        return run_command(scenario, backend, seed, max_steps, tick_dt, concurrent, out);
    }
    if (*cmp) {
        return compare_command(seed, max_steps, table_out, json_out);
    }
    if (*dump) {
        std::cout << roschain::CommandRegistry::shipped().dump_table();
    }
    return 0;
}
