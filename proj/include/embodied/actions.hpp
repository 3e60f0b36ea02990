#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "embodied/bus.hpp"
#include "embodied/roschain.hpp"

namespace embodied::actions {

class ActionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A flow finished (or a step could not run) with a binding missing.
class UnresolvedParameter : public ActionError {
public:
    using ActionError::ActionError;
};

class FlowServiceTimeout : public ActionError {
public:
    using ActionError::ActionError;
};

/// Plan arguments that do not fit the action's declared arguments.
class InvalidArgument : public ActionError {
public:
    using ActionError::ActionError;
};

class LibraryError : public ActionError {
public:
    using ActionError::ActionError;
};

using Value = roschain::ParamValue;
using Bindings = std::map<std::string, Value>;
using Arguments = std::map<std::string, Value>;

// ─── Action definitions ───────────────────────────────────────

/// Plan-facing argument. Bound as "arg.<name>" before the flow runs.
struct Argument {
    std::string name;
    roschain::ParamKind kind = roschain::ParamKind::Number;
    bool required = true;
};

enum class ParamOrigin { Plan, Flow, Preinitialized };
const char* to_string(ParamOrigin origin);

struct SchemaParam {
    std::string name;
    roschain::ParamKind kind = roschain::ParamKind::Number;
    ParamOrigin origin = ParamOrigin::Flow;
    std::optional<Value> default_value;  // Preinitialized only
};

/// Calls a service; a Structured response binds "<bind>.<key>" for every
/// field, any other response binds "<bind>" to its wrapped text.
struct QueryService {
    std::string service;
    std::string request;
    std::string bind;
};

/// Reads the latest message seen on a topic, binding like QueryService.
struct ReadTopic {
    std::string topic;
    std::string bind;
};

/// Named pure function over earlier bindings. An input ending in '?' is
/// optional and reaches the function as nullopt when unbound.
struct Compute {
    std::string fn;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

/// Final step. The operation is a registry name or "$binding". Parameter
/// expressions are "$binding", "$binding?" (omitted when unbound) or literals.
struct EmitCommand {
    std::string operation;
    std::vector<std::pair<std::string, std::string>> params;
};

using FlowStep = std::variant<QueryService, ReadTopic, Compute, EmitCommand>;

struct ActionFunction {
    std::string name;
    std::set<std::string> required_payloads;
    std::string description;
    std::vector<Argument> arguments;
    std::vector<SchemaParam> schema;
    std::vector<FlowStep> flow;

    const Argument* find_argument(std::string_view arg) const;
    /// Operation named by the emit step when it is a literal, else empty.
    std::string emitted_operation() const;
};

/// Static checks: flow ends in exactly one emit, every Flow parameter is an
/// output of exactly one compute, references point backwards, plan
/// parameters have a matching required argument. Throws LibraryError.
void validate(const ActionFunction& action);

// ─── Library ──────────────────────────────────────────────────

using PayloadConfiguration = std::set<std::string>;

class ActionLibrary {
public:
    ActionLibrary() = default;
    explicit ActionLibrary(std::vector<ActionFunction> actions);

    void add(ActionFunction action);
    const ActionFunction* find(std::string_view name) const;
    const std::vector<ActionFunction>& actions() const { return actions_; }
    bool empty() const { return actions_.empty(); }

    /// Actions whose required payloads are all present, in library order.
    std::vector<const ActionFunction*> lookup(const PayloadConfiguration& config) const;

    /// One line per action: "name(args) [payloads]: description".
    std::string summary(const PayloadConfiguration& config) const;

    /// Declarative block format:
    ///   action <name>
    ///   payloads <tag>...
    ///   describe <text>
    ///   arg <name> <number|text> [optional]
    ///   param <name> <number|text> <plan|flow|preinit [default]>
    ///   query <service> [request words] -> <bind>
    ///   read <topic> -> <bind>
    ///   compute <fn> <input>... -> <output>...
    ///   emit <operation> [key=expr]...
    ///   end
    /// Lines starting with '#' are comments. Literal values cannot contain spaces.
    static ActionLibrary parse(std::string_view text);

private:
    std::vector<ActionFunction> actions_;
};

const ActionLibrary& shipped_library();
const PayloadConfiguration& all_payload_tags();

// ─── Execution ────────────────────────────────────────────────

using ComputeFn = std::function<std::vector<Value>(const std::vector<std::optional<Value>>&)>;

/// Names known to Compute steps: complete_position, observe_operation, copy.
const std::map<std::string, ComputeFn>& compute_functions();

struct FlowEnvironment {
    /// Throws bus::Timeout when the service does not answer.
    std::function<bus::Payload(const std::string& service, const bus::Payload& request)> call_service;
    std::function<std::optional<bus::Payload>(const std::string& topic)> read_topic;
};

/// Environment backed by a bus adapter; read_topic may be empty.
FlowEnvironment bus_environment(roschain::Roschain& adapter, int timeout_ticks,
                                std::function<std::optional<bus::Payload>(const std::string&)>
                                    read_topic = {});

struct FlowResult {
    roschain::Command command;
    Bindings bindings;
};

/// Binds arguments and defaults, runs the flow steps in order and translates
/// the emitted operation. Never returns a command with an unbound parameter.
FlowResult execute_flow(const ActionFunction& action, const Arguments& args,
                        const FlowEnvironment& env,
                        const roschain::CommandRegistry& registry = roschain::CommandRegistry::shipped());

}  // namespace embodied::actions
