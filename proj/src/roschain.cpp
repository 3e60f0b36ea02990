#include "embodied/roschain.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace embodied::roschain {

std::string format_number(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) {
        throw std::runtime_error("cannot format number");
    }
    return std::string(buf, end);
}

double parse_number(std::string_view text) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    }
    return value;
}

std::string to_text(const ParamValue& value) {
    if (const auto* d = std::get_if<double>(&value)) {
        return format_number(*d);
    }
    return std::get<std::string>(value);
}

CommandConfig::CommandConfig(std::initializer_list<std::pair<const std::string, ParamValue>> values) {
    for (const auto& [k, v] : values) {
        set(k, v);
    }
}

CommandConfig& CommandConfig::set(const std::string& name, ParamValue value, ParamSource source) {
    entries_.insert_or_assign(name, ConfigEntry{std::move(value), source});
    return *this;
}

const char* to_string(Category category) {
    switch (category) {
        case Category::ControllerCommand: return "Controller Command";
        case Category::ExecutionCommand: return "Execution Command";
        case Category::ActiveObserve: return "Active Observe";
    }
    return "?";
}

std::string node_slug(std::string_view node_name) {
    std::string out;
    out.reserve(node_name.size());
    for (char c : node_name) {
        out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string command_topic(std::string_view target) { return "command/" + node_slug(target); }

std::string observe_service(std::string_view target) { return "observe/" + node_slug(target); }

// ─── Command ──────────────────────────────────────────────────

double Command::number(const std::string& name) const {
    const auto& v = parameters_.at(name).value;
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    throw std::invalid_argument("parameter '" + name + "' is not numeric");
}

std::string Command::text(const std::string& name) const {
    const auto& v = parameters_.at(name).value;
    if (const auto* s = std::get_if<std::string>(&v)) {
        return *s;
    }
    throw std::invalid_argument("parameter '" + name + "' is not text");
}

std::string Command::topic() const {
    if (parameters_.contains("channel")) {
        const auto& v = parameters_.at("channel").value;
        if (std::holds_alternative<std::string>(v) && std::get<std::string>(v) == kGroundChannel) {
            return std::string(kGroundReportTopic);
        }
    }
    return command_topic(target_);
}

std::string Command::to_text() const {
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json preinit = nlohmann::json::array();
    for (const auto& [name, entry] : parameters_.entries()) {
        std::visit([&](const auto& v) { params[name] = v; }, entry.value);
        if (entry.source == ParamSource::Preinitialized) {
            preinit.push_back(name);
        }
    }
    nlohmann::json j{{"operation", operation_.name},
                     {"target", target_},
                     {"parameters", params},
                     {"preinitialized", preinit}};
    return j.dump();
}

// ─── Registry ─────────────────────────────────────────────────

namespace {

std::vector<RegistryRow> shipped_rows() {
    using C = Category;
    const std::vector<ParamSpec> xyz{{"x", ParamKind::Number, std::nullopt},
                                     {"y", ParamKind::Number, std::nullopt},
                                     {"z", ParamKind::Number, std::nullopt}};
    auto row = [](std::string name, C cat, std::string target, std::vector<ParamSpec> schema = {}) {
        return RegistryRow{Operation{std::move(name), cat}, "Agent", std::move(target),
                           std::move(schema)};
    };
    return {
        row("Move_ENU", C::ControllerCommand, "Controller", xyz),
        row("Move_Body", C::ControllerCommand, "Controller", xyz),
        row("Takeoff", C::ControllerCommand, "Controller",
            {{"altitude_m", ParamKind::Number, ParamValue{10.0}}}),
        row("Land", C::ControllerCommand, "Controller"),
        row("Arm", C::ControllerCommand, "Controller"),
        row("Disarm", C::ControllerCommand, "Controller"),
        row("Failsafe_land", C::ControllerCommand, "Controller"),
        row("Idle", C::ControllerCommand, "Controller"),
        row("Loudspeaker", C::ExecutionCommand, "Loudspeaker",
            {{"channel", ParamKind::Text, ParamValue{std::string("speaker")}},
             {"message_text", ParamKind::Text, std::nullopt}}),
        row("Manipulator", C::ExecutionCommand, "Manipulator",
            {{"action_id", ParamKind::Text, std::nullopt},
             {"payload_index", ParamKind::Number, std::nullopt}}),
        row("Depth_Observe", C::ActiveObserve, "Depth Camera"),
        row("Infrared_Observe", C::ActiveObserve, "Infrared Camera"),
        row("Lidar_Observe", C::ActiveObserve, "Lidar"),
        row("Down_Observe", C::ActiveObserve, "Downward Camera"),
    };
}

bool kind_matches(ParamKind kind, const ParamValue& v) {
    return kind == ParamKind::Number ? std::holds_alternative<double>(v)
                                     : std::holds_alternative<std::string>(v);
}

}  // namespace

CommandRegistry::CommandRegistry(std::vector<RegistryRow> rows) : rows_(std::move(rows)) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        for (std::size_t j = i + 1; j < rows_.size(); ++j) {
            if (rows_[i].operation.name == rows_[j].operation.name) {
                throw std::invalid_argument("duplicate registry row " + rows_[i].operation.name);
            }
        }
    }
}

const CommandRegistry& CommandRegistry::shipped() {
    static const CommandRegistry registry(shipped_rows());
    return registry;
}

const RegistryRow* CommandRegistry::find(std::string_view operation) const {
    auto it = std::find_if(rows_.begin(), rows_.end(),
                           [&](const RegistryRow& r) { return r.operation.name == operation; });
    return it == rows_.end() ? nullptr : &*it;
}

const RegistryRow& CommandRegistry::row(std::string_view operation) const {
    if (const auto* r = find(operation)) {
        return *r;
    }
    throw UnknownOperation("unknown operation '" + std::string(operation) + "'");
}

Command CommandRegistry::translate(std::string_view operation, const CommandConfig& config) const {
    const RegistryRow& r = row(operation);
    for (const auto& [name, entry] : config.entries()) {
        auto it = std::find_if(r.schema.begin(), r.schema.end(),
                               [&](const ParamSpec& p) { return p.name == name; });
        if (it == r.schema.end()) {
            throw IncompleteConfig(r.operation.name + ": unexpected parameter '" + name + "'");
        }
    }
    CommandConfig finalized;
    for (const auto& spec : r.schema) {
        if (config.contains(spec.name)) {
            const auto& entry = config.at(spec.name);
            if (!kind_matches(spec.kind, entry.value)) {
                throw IncompleteConfig(r.operation.name + ": parameter '" + spec.name +
                                       "' has the wrong type");
            }
            finalized.set(spec.name, entry.value, entry.source);
        } else if (spec.preinitialized) {
            finalized.set(spec.name, *spec.preinitialized, ParamSource::Preinitialized);
        } else {
            throw IncompleteConfig(r.operation.name + ": missing parameter '" + spec.name + "'");
        }
    }
    return Command(r.operation, r.target, std::move(finalized));
}

Command CommandRegistry::translate(const Operation& operation, const CommandConfig& config) const {
    const RegistryRow& r = row(operation.name);
    if (r.operation.category != operation.category) {
        throw CategoryMismatch(operation.name + " is a " + to_string(r.operation.category));
    }
    return translate(operation.name, config);
}

Command CommandRegistry::decode(std::string_view wire) const {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(wire);
    } catch (const nlohmann::json::exception& e) {
        throw RoschainError(std::string("malformed command: ") + e.what());
    }
    if (!j.is_object() || !j.contains("operation") || !j["operation"].is_string()) {
        throw RoschainError("malformed command: missing operation");
    }
    std::set<std::string> preinit;
    if (j.contains("preinitialized") && j["preinitialized"].is_array()) {
        for (const auto& n : j["preinitialized"]) {
            if (n.is_string()) {
                preinit.insert(n.get<std::string>());
            }
        }
    }
    CommandConfig config;
    if (j.contains("parameters")) {
        if (!j["parameters"].is_object()) {
            throw RoschainError("malformed command: parameters must be an object");
        }
        for (const auto& [name, v] : j["parameters"].items()) {
            const auto source =
                preinit.contains(name) ? ParamSource::Preinitialized : ParamSource::Resolved;
            if (v.is_number()) {
                config.set(name, v.get<double>(), source);
            } else if (v.is_string()) {
                config.set(name, v.get<std::string>(), source);
            } else {
                throw RoschainError("malformed command: parameter '" + name + "'");
            }
        }
    }
    Command cmd = translate(j["operation"].get<std::string>(), config);
    if (j.contains("target") && j["target"] != cmd.target()) {
        throw RoschainError("command target does not match registry row");
    }
    return cmd;
}

std::string CommandRegistry::dump_table() const {
    const std::vector<std::string> header{"Command Type", "Command", "Publish/Client",
                                          "Subscribe/Server"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows_) {
        cells.push_back({to_string(r.operation.category), r.operation.name, r.publisher, r.target});
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : cells) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << (c == 0 ? "| " : " | ") << std::left << std::setw(static_cast<int>(width[c]))
                << row[c];
        }
        out << " |\n";
    };
    line(header);
    for (std::size_t c = 0; c < header.size(); ++c) {
        out << (c == 0 ? "|-" : "-|-") << std::string(width[c], '-');
    }
    out << "-|\n";
    for (const auto& row : cells) {
        line(row);
    }
    return out.str();
}

// ─── Wrapping ─────────────────────────────────────────────────

std::string canonical_text(const bus::Structured& structured) {
    std::string out;
    for (const auto& [k, v] : structured.fields) {
        if (k.empty() || k.find_first_of("=\n") != std::string::npos ||
            v.find('\n') != std::string::npos) {
            throw UnsupportedPayload("structured field '" + k + "' cannot be serialized");
        }
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> parse_canonical(std::string_view text) {
    std::map<std::string, std::string> fields;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw UnsupportedPayload("malformed canonical line '" + std::string(line) + "'");
        }
        fields.insert_or_assign(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    return fields;
}

std::string wrap_payload(const bus::Payload& payload) {
    return std::visit(
        [](const auto& p) -> std::string {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bus::Text>) {
                return p.value;
            } else if constexpr (std::is_same_v<T, bus::Blob>) {
                return base64_encode(p.bytes);
            } else {
                return canonical_text(p);
            }
        },
        payload);
}

Perception wrap_message(const bus::Envelope& envelope) {
    return Perception{envelope.topic, bus::tag_of(envelope.payload), wrap_payload(envelope.payload),
                      envelope.timestamp};
}

std::vector<std::uint8_t> unwrap_blob(std::string_view wrapped) { return base64_decode(wrapped); }

// ─── Adapter ──────────────────────────────────────────────────

Roschain::Roschain(bus::Bus& bus, const std::string& node_name, const CommandRegistry& registry)
    : bus_(&bus), handle_(bus.register_node(node_name)), registry_(&registry) {}

bus::SubscriptionId Roschain::subscribe(const std::string& topic,
                                        std::function<void(const Perception&)> on_perception,
                                        bus::QueueConfig queue) {
    return bus_->subscribe(
        handle_, topic,
        [cb = std::move(on_perception)](const bus::Envelope& env) { cb(wrap_message(env)); }, queue);
}

void Roschain::publish_command(const Command& command) {
    bus_->publish(handle_, command.topic(), bus::Text{command.to_text()});
}

Perception Roschain::request_active_observation(const Command& command, int timeout_ticks) {
    if (command.operation().category != Category::ActiveObserve) {
        throw CategoryMismatch(command.operation().name + " is not an active observation");
    }
    const auto service = observe_service(command.target());
    auto response = bus_->call_service(handle_, service, bus::Text{command.to_text()}, timeout_ticks);
    return Perception{service, bus::tag_of(response), wrap_payload(response), bus_->now()};
}

Perception Roschain::request_active_observation(std::string_view operation,
                                                const CommandConfig& config, int timeout_ticks) {
    const auto& r = registry_->row(operation);
    if (r.operation.category != Category::ActiveObserve) {
        throw CategoryMismatch(std::string(operation) + " is not an active observation");
    }
    return request_active_observation(registry_->translate(operation, config), timeout_ticks);
}

bus::Payload Roschain::call(const std::string& service, const bus::Payload& request,
                            int timeout_ticks) {
    return bus_->call_service(handle_, service, request, timeout_ticks);
}

}  // namespace embodied::roschain
