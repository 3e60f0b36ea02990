#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "embodied/actions.hpp"
#include "embodied/bus.hpp"
#include "embodied/memory.hpp"
#include "embodied/roschain.hpp"
#include "embodied/scenarios.hpp"

namespace embodied::agent {

class AgentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PlanValidationError : public AgentError {
public:
    PlanValidationError(std::string offending, const std::string& msg)
        : AgentError(msg), offending_(std::move(offending)) {}
    const std::string& offending() const { return offending_; }

private:
    std::string offending_;
};

class BackendUnavailable : public AgentError {
public:
    using AgentError::AgentError;
};

// Topics the agent listens on.
inline constexpr const char* kImageTopic = "camera/image";
inline constexpr const char* kSceneTopic = "camera/scene";

// ─── Context ──────────────────────────────────────────────────

struct AgentContext {
    std::string structured_prompt;                   // (1)
    std::string task_description;                    // (2)
    std::string embodied_capabilities;               // (3)
    std::int64_t tick = 0;                           // (4)
    std::vector<roschain::Perception> observations;  // (4)
    memory::RetrievalResult retrieved;               // (5)
    std::vector<memory::OperationRecord> recent_operations;
    std::string mission_notes;                       // mission progress notes
    std::string contingency;                         // contingency of the previous plan

    /// Sections (1) to (5) as text, in order.
    std::array<std::string, 5> sections() const;
    std::string serialize() const;
};

const std::string& default_prompt_template();

struct ContextInputs {
    std::string task;
    const actions::ActionLibrary* library = nullptr;
    actions::PayloadConfiguration payloads;
    std::int64_t tick = 0;
    std::vector<roschain::Perception> observations;
    std::string prompt_template = default_prompt_template();
    std::vector<std::string> query_keywords;  // task tokens kept in the memory query
    std::string mission_notes;
    std::string contingency;
    std::size_t retrieval_k = 4;
    std::size_t recent_operations = 5;
};

/// Memory query: task tokens that are keywords, or the whole task when none are.
std::string memory_query(std::string_view task, const std::vector<std::string>& keywords);

AgentContext build_context(const ContextInputs& inputs, const memory::MemoryDb& db);

// ─── Plans ────────────────────────────────────────────────────

struct PlanStep {
    std::string action;
    actions::Arguments args;
    std::string rationale;
    std::string note;  // mission notes once this step completes; empty keeps them
};

struct Plan {
    std::string summary;
    std::vector<PlanStep> steps;  // empty means hold and monitor
    std::optional<std::string> contingency;
};

/// Throws PlanValidationError naming the first action missing from `available`.
void validate_plan(const Plan& plan, const std::vector<const actions::ActionFunction*>& available);

// ─── Backends ─────────────────────────────────────────────────

struct BackendIdentity {
    enum class Kind { Scripted, External, SingleCall, Random };
    Kind kind = Kind::Scripted;
    std::string detail;  // rule table id, endpoint, ...
};

class ReasonerBackend {
public:
    virtual ~ReasonerBackend() = default;
    virtual Plan generate(const AgentContext& context) = 0;
    virtual BackendIdentity identity() const = 0;
};

/// Rule tables keyed by scenario; a pure function of the context.
class ScriptedBackend : public ReasonerBackend {
public:
    explicit ScriptedBackend(scenarios::ScenarioId rules);
    Plan generate(const AgentContext& context) override;
    BackendIdentity identity() const override;

private:
    scenarios::ScenarioId rules_;
};

/// Blanks section (5), mission notes and contingency history before delegating.
class SingleCallBackend : public ReasonerBackend {
public:
    explicit SingleCallBackend(std::unique_ptr<ReasonerBackend> inner);
    Plan generate(const AgentContext& context) override;
    BackendIdentity identity() const override;

private:
    std::unique_ptr<ReasonerBackend> inner_;
};

/// Uniformly random admissible action each call, seeded by (seed, tick).
class RandomBackend : public ReasonerBackend {
public:
    explicit RandomBackend(std::uint64_t seed);
    Plan generate(const AgentContext& context) override;
    BackendIdentity identity() const override;

private:
    std::uint64_t seed_;
};

/// POST {sections: [5 strings]} to <endpoint>/plan.
class ExternalBackend : public ReasonerBackend {
public:
    explicit ExternalBackend(std::string endpoint,
                             std::chrono::milliseconds timeout = std::chrono::seconds(30));
    /// Endpoint from EMBODIED_REASONER_URL; throws BackendUnavailable when unset.
    static std::unique_ptr<ExternalBackend> from_environment();
    Plan generate(const AgentContext& context) override;
    BackendIdentity identity() const override;

    static Plan parse_response(std::string_view body);  // throws BackendUnavailable
    static std::string request_body(const AgentContext& context);

private:
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
};

// ─── Scene helpers ────────────────────────────────────────────

struct SceneEntity {
    std::string id;
    std::string kind;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double distance = 0.0;
    std::map<std::string, std::string> attributes;  // everything else
};

struct SceneView {
    std::int64_t tick = 0;
    Eigen::Vector3d drone = Eigen::Vector3d::Zero();
    std::vector<SceneEntity> entities;
    const SceneEntity* find(std::string_view id) const;
};

SceneView parse_scene(const std::map<std::string, std::string>& fields);

/// True iff an entity appeared, disappeared or changed kind or a
/// non-geometric attribute. Positions, distances, bearings and blade phase
/// are ignored.
bool replan_trigger(const std::map<std::string, std::string>& previous,
                    const std::map<std::string, std::string>& current);

/// Natural-language label for a scene: "<kind> <id>" per entity.
std::string narrate(const std::map<std::string, std::string>& scene);

std::map<std::string, std::string> parse_notes(std::string_view notes);
std::string format_notes(const std::map<std::string, std::string>& notes);

// ─── Agent ────────────────────────────────────────────────────

struct AgentConfig {
    std::string task;
    actions::PayloadConfiguration payloads;
    std::string prompt_template = default_prompt_template();
    std::vector<std::string> query_keywords = memory::default_salience_keywords();
    std::size_t retrieval_k = 4;
    std::size_t recent_operations = 5;
    int service_timeout_ticks = 5;
    /// Probability that a plan step's first emission comes out malformed and
    /// costs a feedback step (0 disables).
    double malformed_probability = 0.0;
    std::uint64_t fault_seed = 0;
};

struct StepOutcome {
    std::int64_t step = 0;  // 1-based index of this step
    std::string action;
    std::optional<roschain::Command> command;
    memory::Outcome outcome;
    bool replanned = false;
    std::optional<roschain::Perception> observation;  // active observation result
};

class Agent {
public:
    Agent(bus::Bus& bus, memory::MemoryDb& memory, const actions::ActionLibrary& library,
          ReasonerBackend& backend, AgentConfig config);

    /// One observe, reflect, plan, act cycle. Never throws for flow or
    /// backend errors; they become Rejected outcomes.
    StepOutcome step();

    std::int64_t steps() const { return steps_; }
    const std::optional<Plan>& plan() const { return plan_; }
    const std::string& mission_notes() const { return notes_; }
    /// Wire text of every command the agent published or requested.
    const std::vector<std::string>& command_trace() const { return trace_; }
    const AgentContext* last_context() const { return last_context_ ? &*last_context_ : nullptr; }

private:
    void on_perception(const roschain::Perception& p);
    bool settled() const;
    void complete_current();
    StepOutcome finish(StepOutcome out, const std::string& operation,
                       const roschain::CommandConfig* config);

    bus::Bus* bus_;
    roschain::Roschain adapter_;
    memory::MemoryDb* memory_;
    const actions::ActionLibrary* library_;
    ReasonerBackend* backend_;
    AgentConfig config_;

    std::int64_t steps_ = 0;
    std::vector<roschain::Perception> pending_;
    std::vector<roschain::Perception> active_results_;
    std::map<std::string, bus::Payload> latest_;
    std::optional<std::map<std::string, std::string>> previous_scene_;
    std::optional<Plan> plan_;
    std::size_t index_ = 0;
    std::string notes_;
    std::string contingency_;

    // Current plan step bookkeeping.
    int emissions_ = 0;
    bool feedback_given_ = false;
    std::optional<Eigen::Vector3d> move_target_;
    std::optional<Eigen::Vector3d> pose_at_emission_;

    std::mt19937_64 fault_rng_;
    std::vector<std::string> trace_;
    std::optional<AgentContext> last_context_;
};

/// Actions that stay current (re-emitted every step) until the vehicle settles.
bool is_settling(std::string_view action);

}  // namespace embodied::agent
