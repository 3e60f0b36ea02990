#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "embodied/bus.hpp"
#include "embodied/controller.hpp"

namespace embodied::scenarios {

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidAction : public ScenarioError {
public:
    using ScenarioError::ScenarioError;
};

enum class ScenarioId { Wildfire, Landing, Inspection, SafeNav };
const char* to_string(ScenarioId id);
ScenarioId parse_scenario(std::string_view name);  // throws ScenarioError
const std::vector<ScenarioId>& all_scenarios();

// ─── Entities ─────────────────────────────────────────────────

enum class EntityKind { FireSource, TrappedGroup, Firefighter, Helipad, Turbine, Building, Obstacle };
const char* to_string(EntityKind kind);

struct Entity {
    std::string id;
    EntityKind kind = EntityKind::Obstacle;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();

    int size = 0;                   // TrappedGroup
    double radius = 0.0;            // Helipad
    std::string side;               // Turbine
    bool rotating = false;          // Turbine
    double blade_phase_deg = 0.0;   // Turbine, in [0, 360)
    double rotation_deg_per_tick = 0.0;
    double width = 0.0;             // Building footprint along x
    double depth = 0.0;             // Building footprint along y

    // State flags, never shown in observations.
    bool reported = false;
    bool reassured = false;
    int kits_received = 0;
    bool entered = false;
};

// ─── Ledger ───────────────────────────────────────────────────

struct LedgerItem {
    std::string label;
    double points = 0.0;
    std::int64_t tick = 0;
};

class RewardLedger {
public:
    explicit RewardLedger(double raw_max = 1.0);

    void add(std::string label, double points, std::int64_t tick);
    const std::vector<LedgerItem>& items() const { return items_; }
    double raw_total() const;
    double raw_max() const { return raw_max_; }
    /// Sum of items whose label equals `label` or starts with "label:".
    double total_of(std::string_view label) const;
    /// 100 * clamp(raw_total, 0, raw_max) / raw_max.
    double normalized() const;

    std::string to_csv() const;   // label,points
    std::string to_json() const;

private:
    std::vector<LedgerItem> items_;
    double raw_max_;
};

// ─── Scored actions ───────────────────────────────────────────

enum class Proximity { Close, Medium, Distant };

struct Move { Eigen::Vector3d to = Eigen::Vector3d::Zero(); };
struct Navigate { Proximity proximity = Proximity::Close; };
struct ReportIgnition {};
struct ReportTrapped { int count = 1; };
struct Communicate {};
struct DispatchKits { int count = 1; };
struct ActivateSensor { std::string sensor; };
struct SubmitReport { std::string text; };

using ScoredAction = std::variant<Move, Navigate, ReportIgnition, ReportTrapped, Communicate,
                                  DispatchKits, ActivateSensor, SubmitReport>;

std::string describe(const ScoredAction& action);

enum class ActionKind {
    Move, Navigate, ReportIgnition, ReportTrapped, Communicate, DispatchKits, ActivateSensor,
    SubmitReport
};
const char* to_string(ActionKind kind);
ActionKind kind_of(const ScoredAction& action);

inline constexpr double kMoveAxisLimit = 5.0;

struct ActionSpace {
    std::vector<ActionKind> kinds;
    int min_count = 1;  // ReportTrapped / DispatchKits count range
    int max_count = 3;
    double move_axis_limit = kMoveAxisLimit;
};

ActionSpace admissible_actions(ScenarioId id);

// ─── World ────────────────────────────────────────────────────

struct Layout {
    ScenarioId id = ScenarioId::Wildfire;
    std::string task;
    std::vector<std::string> payloads;
    std::vector<std::string> keywords;  // extra salience keywords
    controller::VehicleState start;
    double raw_max = 1.0;
    double visibility_m = 100.0;
    double detail_range_m = 30.0;   // Wildfire: fire details
    double people_range_m = 20.0;   // Wildfire: groups and firefighters
    double approach_floor_m = 3.0;  // Wildfire
    double entry_altitude_m = 3.0;  // SafeNav
    double camera_span_m = 60.0;    // image covers +-span/2 around the drone
    std::string fault;              // Inspection
    std::vector<Entity> entities;
};

/// Parses a layout JSON document.
Layout parse_layout(std::string_view json_text);
/// Layout shipped with the library for the scenario.
const Layout& shipped_layout(ScenarioId id);

using Judge = std::function<int(std::string_view report, std::string_view fault)>;

struct World {
    Layout layout;
    std::vector<Entity> entities;
    std::int64_t tick = 0;
    std::uint64_t rng_seed = 0;
    bool observation_noise = false;
    Eigen::Vector3d pose = Eigen::Vector3d::Zero();
    RewardLedger ledger;

    double start_distance = 0.0;  // d0, horizontal distance to the fire at reset
    double approach_credit = 0.0;
    bool was_airborne = false;
    bool touched_down = false;
    bool report_submitted = false;
    Judge judge;

    ScenarioId id() const { return layout.id; }
    const Entity* find(std::string_view entity_id) const;
    Entity* find(std::string_view entity_id);
};

World reset(ScenarioId id, std::uint64_t seed);
World reset(const Layout& layout, std::uint64_t seed);

inline constexpr int kImageSize = 64;

struct Observation {
    std::int64_t tick = 0;
    Eigen::Vector3d pose = Eigen::Vector3d::Zero();
    bus::Structured scene;             // visible entities, canonical keys
    std::vector<std::uint8_t> image;   // 64x64 grayscale, row-major
};

/// Scene keys: drone.{x,y,z}, scenario, tick, entities (comma list), and per
/// visible entity e.<id>.{kind,x,y,z,distance,bearing} plus kind attributes.
Observation observe(const World& world);

/// Validates against the scenario's action space and scores the action.
/// Returns the raw reward delta. Throws InvalidAction.
double apply_action(World& world, const ScoredAction& action);

/// Advances world time by one tick (turbine blades rotate).
void advance(World& world);

/// Keyword-slot judge: one slot per fault token, synonyms accepted,
/// 10 * hits / slots rounded to the nearest integer.
int match_score(std::string_view report, std::string_view fault);

/// Landing reward for a touchdown at horizontal distance d from the center.
double landing_reward(double d, double radius);
/// Wildfire approach credit for distance d with start distance d0.
double approach_reward(double d, double d0, double floor_m = 3.0);

bool saturated(const World& world);
/// Touchdown after being airborne, saturation, or exhausted budget.
bool is_done(const World& world, int steps_taken, int max_steps);

double horizontal_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Classifies ground-report text for the Wildfire scorer: a number together
/// with "trapped"/"survivor"/"people" is a trapped report, "fire"/"ignition"
/// an ignition report.
std::optional<ScoredAction> classify_ground_report(ScenarioId id, std::string_view text);

}  // namespace embodied::scenarios
