#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "embodied/base64.hpp"
#include "embodied/bus.hpp"

// Adapter between agent semantics and bus mechanics: perception wrapping,
// operation -> command translation, and the command registry.
namespace embodied::roschain {

class RoschainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownOperation : public RoschainError {
public:
    using RoschainError::RoschainError;
};

class IncompleteConfig : public RoschainError {
public:
    using RoschainError::RoschainError;
};

class UnsupportedPayload : public RoschainError {
public:
    using RoschainError::RoschainError;
};

class CategoryMismatch : public RoschainError {
public:
    using RoschainError::RoschainError;
};

// ─── Parameters ───────────────────────────────────────────────

using ParamValue = std::variant<double, std::string>;

enum class ParamKind { Number, Text };
enum class ParamSource { Preinitialized, Resolved };

/// Shortest decimal form that parses back to the same double.
std::string format_number(double value);
double parse_number(std::string_view text);
std::string to_text(const ParamValue& value);

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::Number;
    std::optional<ParamValue> preinitialized;  // parameter-module default
};

struct ConfigEntry {
    ParamValue value;
    ParamSource source = ParamSource::Resolved;
    bool operator==(const ConfigEntry&) const = default;
};

/// Ordered key-value parameter set handed to translate().
class CommandConfig {
public:
    CommandConfig() = default;
    CommandConfig(std::initializer_list<std::pair<const std::string, ParamValue>> values);

    CommandConfig& set(const std::string& name, ParamValue value,
                       ParamSource source = ParamSource::Resolved);
    bool contains(const std::string& name) const { return entries_.contains(name); }
    const ConfigEntry& at(const std::string& name) const { return entries_.at(name); }
    const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    bool operator==(const CommandConfig&) const = default;

private:
    std::map<std::string, ConfigEntry> entries_;
};

// ─── Registry ─────────────────────────────────────────────────

enum class Category { ControllerCommand, ExecutionCommand, ActiveObserve };
const char* to_string(Category category);

struct Operation {
    std::string name;
    Category category = Category::ControllerCommand;
    bool operator==(const Operation&) const = default;
};

struct RegistryRow {
    Operation operation;
    std::string publisher;  // Publish/Client column
    std::string target;     // Subscribe/Server column
    std::vector<ParamSpec> schema;
};

inline constexpr std::string_view kGroundReportTopic = "report/ground";
inline constexpr std::string_view kGroundChannel = "ground";

/// Lower-case, underscore-separated form of a node name ("Depth Camera" -> "depth_camera").
std::string node_slug(std::string_view node_name);
std::string command_topic(std::string_view target);
std::string observe_service(std::string_view target);

class CommandRegistry;

/// A translated operation. Only CommandRegistry can build one, so anything
/// published as a command has been through translate().
class Command {
public:
    const Operation& operation() const { return operation_; }
    const std::string& target() const { return target_; }
    const CommandConfig& parameters() const { return parameters_; }
    double number(const std::string& name) const;
    std::string text(const std::string& name) const;

    /// Topic this command is published on.
    std::string topic() const;
    /// Canonical wire form (JSON object with sorted keys).
    std::string to_text() const;

    bool operator==(const Command&) const = default;

private:
    friend class CommandRegistry;
    Command(Operation op, std::string target, CommandConfig params)
        : operation_(std::move(op)), target_(std::move(target)), parameters_(std::move(params)) {}

    Operation operation_;
    std::string target_;
    CommandConfig parameters_;
};

class CommandRegistry {
public:
    explicit CommandRegistry(std::vector<RegistryRow> rows);

    /// The fourteen rows of the command table with their parameter schemas.
    static const CommandRegistry& shipped();

    const std::vector<RegistryRow>& rows() const { return rows_; }
    const RegistryRow* find(std::string_view operation) const;
    const RegistryRow& row(std::string_view operation) const;

    Command translate(std::string_view operation, const CommandConfig& config) const;
    Command translate(const Operation& operation, const CommandConfig& config) const;

    /// Parses the wire form produced by Command::to_text and re-translates it.
    Command decode(std::string_view wire) const;

    /// Plain-text table in command-table column order.
    std::string dump_table() const;

private:
    std::vector<RegistryRow> rows_;
};

// ─── Perception wrapping ──────────────────────────────────────

struct Perception {
    std::string topic;
    bus::PayloadTag source = bus::PayloadTag::Text;
    std::string text;
    std::int64_t timestamp = 0;
    bool operator==(const Perception&) const = default;
};

/// Sorted "key=value" lines. Throws UnsupportedPayload when a key or value
/// would break the line format.
std::string canonical_text(const bus::Structured& structured);
std::map<std::string, std::string> parse_canonical(std::string_view text);

/// Text passes through, Blob becomes base64, Structured becomes canonical text.
std::string wrap_payload(const bus::Payload& payload);
Perception wrap_message(const bus::Envelope& envelope);
std::vector<std::uint8_t> unwrap_blob(std::string_view wrapped);

// ─── Adapter ──────────────────────────────────────────────────

class Roschain {
public:
    Roschain(bus::Bus& bus, const std::string& node_name,
             const CommandRegistry& registry = CommandRegistry::shipped());

    const bus::NodeHandle& handle() const { return handle_; }
    const CommandRegistry& registry() const { return *registry_; }
    bus::Bus& bus() { return *bus_; }

    bus::SubscriptionId subscribe(const std::string& topic,
                                  std::function<void(const Perception&)> on_perception,
                                  bus::QueueConfig queue = {});

    Command translate(std::string_view operation, const CommandConfig& config) const {
        return registry_->translate(operation, config);
    }

    void publish_command(const Command& command);

    /// Synchronous service call to the sensor node serving an ActiveObserve command.
    Perception request_active_observation(const Command& command, int timeout_ticks = 5);
    Perception request_active_observation(std::string_view operation, const CommandConfig& config,
                                          int timeout_ticks = 5);

    bus::Payload call(const std::string& service, const bus::Payload& request, int timeout_ticks);

private:
    bus::Bus* bus_;
    bus::NodeHandle handle_;
    const CommandRegistry* registry_;
};

}  // namespace embodied::roschain
