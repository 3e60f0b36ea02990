#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "embodied/memory.hpp"
#include "embodied/scenarios.hpp"

namespace embodied::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Backend { ScriptedFull, ScriptedNoRoschain, SingleCall, RandomBaseline, External };
const char* to_string(Backend backend);
Backend parse_backend(std::string_view name);  // throws ConfigError
/// The four offline backends, in comparison-table order.
const std::vector<Backend>& offline_backends();

inline constexpr double kMalformedProbability = 0.3;

struct RunConfig {
    scenarios::ScenarioId scenario = scenarios::ScenarioId::Wildfire;
    Backend backend = Backend::ScriptedFull;
    std::uint64_t seed = 0;
    int max_steps = 200;
    double tick_dt = 1.0;  // seconds
    bool concurrent = false;
    double malformed_probability = kMalformedProbability;  // ScriptedNoRoschain only
    std::filesystem::path out_dir;  // empty: write nothing
    std::vector<memory::EpisodicRecord> initial_memory;  // inserted before the first step

    void validate() const;  // throws ConfigError
};

struct TrajectoryPoint {
    int step = 0;
    Eigen::Vector3d pose = Eigen::Vector3d::Zero();
    std::string action;
    std::string outcome;
    std::vector<std::string> events;  // scored actuator events this step
    double reward_delta = 0.0;
    double cumulative_normalized = 0.0;
};

struct RunReport {
    RunConfig config;
    double tr = 0.0;  // normalized total reward, [0, 100]
    double ar = 0.0;  // tr / step_count
    int step_count = 0;
    scenarios::RewardLedger ledger;
    std::string command_digest;  // FNV-1a 64 of the command trace, hex
    std::vector<std::string> command_trace;
    std::vector<TrajectoryPoint> trajectory;
    std::string bus_trace;    // JSON lines
    std::string memory_dump;  // JSON lines
    double wall_seconds = 0.0;

    std::string to_json() const;  // excludes wall time
};

RunReport run(const RunConfig& config);

/// Same policy with the iterative-prompting fault model switched on.
RunReport ablation_no_roschain(RunConfig config);

/// JSON lines: {step, pose, action, reward_delta, cumulative_normalized, ...}.
std::string emit_trajectory(const RunReport& report);
void emit_trajectory(const RunReport& report, const std::filesystem::path& path);

/// Writes report.json, ledger.csv, ledger.json, trajectory.jsonl,
/// bus_trace.jsonl, memory.jsonl and commands.txt into dir.
void write_outputs(const RunReport& report, const std::filesystem::path& dir);

struct ComparisonCell {
    Backend backend = Backend::ScriptedFull;
    scenarios::ScenarioId scenario = scenarios::ScenarioId::Wildfire;
    double tr = 0.0;
    double ar = 0.0;
    int steps = 0;
};

struct Comparison {
    std::vector<ComparisonCell> cells;
    /// Rows are backends, columns TR and AR per scenario, one decimal.
    std::string to_csv() const;
    std::string to_json() const;
};

Comparison compare(const std::vector<RunConfig>& configs);
/// Every offline backend on every scenario with the given seed.
std::vector<RunConfig> all_configs(std::uint64_t seed = 0, int max_steps = 200);

std::string format_one_decimal(double value);
std::string fnv1a_hex(std::string_view data);

}  // namespace embodied::harness
