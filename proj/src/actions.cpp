#include "embodied/actions.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "embodied_resources.hpp"

namespace embodied::actions {

using roschain::ParamKind;

const char* to_string(ParamOrigin origin) {
    switch (origin) {
        case ParamOrigin::Plan: return "plan";
        case ParamOrigin::Flow: return "flow";
        case ParamOrigin::Preinitialized: return "preinit";
    }
    return "?";
}

const Argument* ActionFunction::find_argument(std::string_view arg) const {
    auto it = std::find_if(arguments.begin(), arguments.end(),
                           [&](const Argument& a) { return a.name == arg; });
    return it == arguments.end() ? nullptr : &*it;
}

std::string ActionFunction::emitted_operation() const {
    for (const auto& step : flow) {
        if (const auto* emit = std::get_if<EmitCommand>(&step)) {
            return emit->operation.starts_with('$') ? std::string{} : emit->operation;
        }
    }
    return {};
}

namespace {

std::string strip_optional(std::string_view ref) {
    if (ref.ends_with('?')) {
        ref.remove_suffix(1);
    }
    return std::string(ref);
}

bool is_optional(std::string_view ref) { return ref.ends_with('?'); }

}  // namespace

// ─── Validation ───────────────────────────────────────────────

void validate(const ActionFunction& action) {
    const auto fail = [&](const std::string& msg) {
        throw LibraryError("action '" + action.name + "': " + msg);
    };
    if (action.name.empty()) {
        throw LibraryError("action without a name");
    }

    std::set<std::string> bound;     // exact binding names
    std::set<std::string> prefixes;  // query/read bind prefixes
    for (const auto& a : action.arguments) {
        bound.insert("arg." + a.name);
    }
    std::map<std::string, int> producers;
    for (const auto& p : action.schema) {
        if (p.origin == ParamOrigin::Plan) {
            const auto* a = action.find_argument(p.name);
            if (a == nullptr || !a->required) {
                fail("plan parameter '" + p.name + "' needs a required argument of the same name");
            }
            bound.insert(p.name);
        } else if (p.origin == ParamOrigin::Preinitialized) {
            if (!p.default_value) {
                fail("preinitialized parameter '" + p.name + "' has no default");
            }
            bound.insert(p.name);
        } else {
            producers[p.name] = 0;
        }
    }

    const auto known = [&](const std::string& ref) {
        if (bound.contains(ref)) {
            return true;
        }
        const auto dot = ref.find('.');
        return dot != std::string::npos && prefixes.contains(ref.substr(0, dot));
    };

    int emits = 0;
    for (std::size_t i = 0; i < action.flow.size(); ++i) {
        const auto& step = action.flow[i];
        if (emits > 0) {
            fail("steps after the emit step");
        }
        if (const auto* q = std::get_if<QueryService>(&step)) {
            if (q->service.empty() || q->bind.empty()) {
                fail("query step needs a service and a binding");
            }
            prefixes.insert(q->bind);
            bound.insert(q->bind);
        } else if (const auto* r = std::get_if<ReadTopic>(&step)) {
            if (r->topic.empty() || r->bind.empty()) {
                fail("read step needs a topic and a binding");
            }
            prefixes.insert(r->bind);
            bound.insert(r->bind);
        } else if (const auto* c = std::get_if<Compute>(&step)) {
            if (!compute_functions().contains(c->fn)) {
                fail("unknown compute function '" + c->fn + "'");
            }
            for (const auto& in : c->inputs) {
                if (!known(strip_optional(in))) {
                    fail("compute input '" + in + "' is not bound by an earlier step");
                }
            }
            for (const auto& out : c->outputs) {
                if (auto it = producers.find(out); it != producers.end()) {
                    ++it->second;
                }
                bound.insert(out);
            }
        } else if (const auto* e = std::get_if<EmitCommand>(&step)) {
            ++emits;
            if (e->operation.starts_with('$')) {
                if (!known(e->operation.substr(1))) {
                    fail("emit operation '" + e->operation + "' is not bound");
                }
            } else if (roschain::CommandRegistry::shipped().find(e->operation) == nullptr) {
                fail("emit operation '" + e->operation + "' is not in the command registry");
            }
            for (const auto& [key, expr] : e->params) {
                if (expr.starts_with('$') && !known(strip_optional(expr.substr(1)))) {
                    fail("emit parameter '" + key + "' references unbound '" + expr + "'");
                }
            }
        }
    }
    if (emits != 1) {
        fail("flow must end in exactly one emit step");
    }
    for (const auto& [name, count] : producers) {
        if (count != 1) {
            fail("flow parameter '" + name + "' is produced by " + std::to_string(count) +
                 " steps");
        }
    }
}

// ─── Library ──────────────────────────────────────────────────

ActionLibrary::ActionLibrary(std::vector<ActionFunction> actions) {
    for (auto& a : actions) {
        add(std::move(a));
    }
}

void ActionLibrary::add(ActionFunction action) {
    validate(action);
    if (find(action.name) != nullptr) {
        throw LibraryError("duplicate action '" + action.name + "'");
    }
    actions_.push_back(std::move(action));
}

const ActionFunction* ActionLibrary::find(std::string_view name) const {
    auto it = std::find_if(actions_.begin(), actions_.end(),
                           [&](const ActionFunction& a) { return a.name == name; });
    return it == actions_.end() ? nullptr : &*it;
}

std::vector<const ActionFunction*> ActionLibrary::lookup(const PayloadConfiguration& config) const {
    std::vector<const ActionFunction*> out;
    for (const auto& a : actions_) {
        if (std::includes(config.begin(), config.end(), a.required_payloads.begin(),
                          a.required_payloads.end())) {
            out.push_back(&a);
        }
    }
    return out;
}

std::string ActionLibrary::summary(const PayloadConfiguration& config) const {
    std::ostringstream out;
    for (const auto* a : lookup(config)) {
        out << a->name << '(';
        for (std::size_t i = 0; i < a->arguments.size(); ++i) {
            const auto& arg = a->arguments[i];
            out << (i ? ", " : "") << arg.name << ':'
                << (arg.kind == ParamKind::Number ? "number" : "text") << (arg.required ? "" : "?");
        }
        out << ')';
        if (!a->required_payloads.empty()) {
            out << " [";
            bool first = true;
            for (const auto& p : a->required_payloads) {
                out << (first ? "" : ", ") << p;
                first = false;
            }
            out << ']';
        }
        out << ": " << a->description << '\n';
    }
    return out.str();
}

namespace {

std::vector<std::string> words(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    std::string w;
    while (in >> w) {
        out.push_back(w);
    }
    return out;
}

ParamKind parse_kind(const std::string& s, std::size_t line_no) {
    if (s == "number") {
        return ParamKind::Number;
    }
    if (s == "text") {
        return ParamKind::Text;
    }
    throw LibraryError("line " + std::to_string(line_no) + ": unknown kind '" + s + "'");
}

/// Splits "a b -> c d" at the arrow.
std::pair<std::vector<std::string>, std::vector<std::string>> split_arrow(
    const std::vector<std::string>& w, std::size_t from, std::size_t line_no) {
    auto arrow = std::find(w.begin() + static_cast<std::ptrdiff_t>(from), w.end(), "->");
    if (arrow == w.end()) {
        throw LibraryError("line " + std::to_string(line_no) + ": missing '->'");
    }
    return {{w.begin() + static_cast<std::ptrdiff_t>(from), arrow}, {arrow + 1, w.end()}};
}

}  // namespace

ActionLibrary ActionLibrary::parse(std::string_view text) {
    ActionLibrary library;
    std::optional<ActionFunction> current;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    const auto fail = [&](const std::string& msg) {
        throw LibraryError("line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto w = words(line);
        if (w.empty() || w[0].starts_with('#')) {
            continue;
        }
        const auto& key = w[0];
        if (key == "action") {
            if (current) {
                fail("'action' inside an unfinished block");
            }
            if (w.size() != 2) {
                fail("expected 'action <name>'");
            }
            current = ActionFunction{};
            current->name = w[1];
            continue;
        }
        if (!current) {
            fail("'" + key + "' outside an action block");
        }
        if (key == "end") {
            library.add(std::move(*current));
            current.reset();
        } else if (key == "payloads") {
            current->required_payloads.insert(w.begin() + 1, w.end());
        } else if (key == "describe") {
            const auto pos = line.find("describe") + 8;
            auto desc = line.substr(pos);
            desc.erase(0, desc.find_first_not_of(" \t"));
            current->description = desc;
        } else if (key == "arg") {
            if (w.size() < 3 || w.size() > 4 || (w.size() == 4 && w[3] != "optional")) {
                fail("expected 'arg <name> <kind> [optional]'");
            }
            current->arguments.push_back({w[1], parse_kind(w[2], line_no), w.size() == 3});
        } else if (key == "param") {
            if (w.size() < 4) {
                fail("expected 'param <name> <kind> <origin>'");
            }
            SchemaParam p{w[1], parse_kind(w[2], line_no), ParamOrigin::Flow, std::nullopt};
            if (w[3] == "plan" && w.size() == 4) {
                p.origin = ParamOrigin::Plan;
            } else if (w[3] == "flow" && w.size() == 4) {
                p.origin = ParamOrigin::Flow;
            } else if (w[3] == "preinit" && w.size() == 5) {
                p.origin = ParamOrigin::Preinitialized;
                if (p.kind == ParamKind::Number) {
                    try {
                        p.default_value = roschain::parse_number(w[4]);
                    } catch (const std::exception&) {
                        fail("bad numeric default '" + w[4] + "'");
                    }
                } else {
                    p.default_value = w[4];
                }
            } else {
                fail("bad parameter origin");
            }
            current->schema.push_back(std::move(p));
        } else if (key == "query") {
            auto [lhs, rhs] = split_arrow(w, 1, line_no);
            if (lhs.empty() || rhs.size() != 1) {
                fail("expected 'query <service> [request] -> <bind>'");
            }
            std::string request;
            for (std::size_t i = 1; i < lhs.size(); ++i) {
                request += (i > 1 ? " " : "") + lhs[i];
            }
            current->flow.push_back(QueryService{lhs[0], request, rhs[0]});
        } else if (key == "read") {
            auto [lhs, rhs] = split_arrow(w, 1, line_no);
            if (lhs.size() != 1 || rhs.size() != 1) {
                fail("expected 'read <topic> -> <bind>'");
            }
            current->flow.push_back(ReadTopic{lhs[0], rhs[0]});
        } else if (key == "compute") {
            if (w.size() < 2) {
                fail("expected 'compute <fn> <inputs> -> <outputs>'");
            }
            auto [lhs, rhs] = split_arrow(w, 2, line_no);
            if (rhs.empty()) {
                fail("compute step without outputs");
            }
            current->flow.push_back(Compute{w[1], lhs, rhs});
        } else if (key == "emit") {
            if (w.size() < 2) {
                fail("expected 'emit <operation> [key=expr]...'");
            }
            EmitCommand e{w[1], {}};
            for (std::size_t i = 2; i < w.size(); ++i) {
                const auto eq = w[i].find('=');
                if (eq == std::string::npos || eq == 0) {
                    fail("expected key=expr, got '" + w[i] + "'");
                }
                e.params.emplace_back(w[i].substr(0, eq), w[i].substr(eq + 1));
            }
            current->flow.push_back(std::move(e));
        } else {
            fail("unknown directive '" + key + "'");
        }
    }
    if (current) {
        throw LibraryError("action '" + current->name + "' is missing 'end'");
    }
    return library;
}

const ActionLibrary& shipped_library() {
    static const ActionLibrary library = ActionLibrary::parse(resources::kShippedActions);
    return library;
}

const PayloadConfiguration& all_payload_tags() {
    static const PayloadConfiguration tags{"depth_camera", "downward_camera", "infrared_camera",
                                           "lidar",        "loudspeaker",     "manipulator"};
    return tags;
}

// ─── Compute functions ────────────────────────────────────────

namespace {

double as_number(const Value& v) {
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    return roschain::parse_number(std::get<std::string>(v));
}

std::string as_text(const Value& v) { return roschain::to_text(v); }

const std::optional<Value>& need(const std::vector<std::optional<Value>>& in, std::size_t i,
                                 const char* fn) {
    if (i >= in.size() || !in[i]) {
        throw UnresolvedParameter(std::string(fn) + ": input " + std::to_string(i) + " is unbound");
    }
    return in[i];
}

std::vector<Value> complete_position(const std::vector<std::optional<Value>>& in) {
    if (in.size() != 6) {
        throw ActionError("complete_position takes 6 inputs");
    }
    std::vector<Value> out;
    for (std::size_t i = 0; i < 3; ++i) {
        out.emplace_back(in[i] ? as_number(*in[i]) : as_number(*need(in, i + 3, "complete_position")));
    }
    return out;
}

std::vector<Value> observe_operation(const std::vector<std::optional<Value>>& in) {
    if (in.size() != 1) {
        throw ActionError("observe_operation takes 1 input");
    }
    static const std::map<std::string, std::string> ops{{"depth", "Depth_Observe"},
                                                        {"infrared", "Infrared_Observe"},
                                                        {"lidar", "Lidar_Observe"},
                                                        {"down", "Down_Observe"}};
    auto sensor = as_text(*need(in, 0, "observe_operation"));
    std::transform(sensor.begin(), sensor.end(), sensor.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto it = ops.find(sensor);
    if (it == ops.end()) {
        throw InvalidArgument("unknown sensor '" + sensor + "'");
    }
    return {Value{it->second}};
}

std::vector<Value> copy(const std::vector<std::optional<Value>>& in) {
    std::vector<Value> out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out.push_back(*need(in, i, "copy"));
    }
    return out;
}

}  // namespace

const std::map<std::string, ComputeFn>& compute_functions() {
    static const std::map<std::string, ComputeFn> fns{{"complete_position", complete_position},
                                                      {"observe_operation", observe_operation},
                                                      {"copy", copy}};
    return fns;
}

// ─── Execution ────────────────────────────────────────────────

FlowEnvironment bus_environment(
    roschain::Roschain& adapter, int timeout_ticks,
    std::function<std::optional<bus::Payload>(const std::string&)> read_topic) {
    FlowEnvironment env;
    env.call_service = [&adapter, timeout_ticks](const std::string& service,
                                                 const bus::Payload& request) {
        return adapter.call(service, request, timeout_ticks);
    };
    env.read_topic = std::move(read_topic);
    return env;
}

namespace {

void bind_payload(Bindings& bindings, const std::string& prefix, const bus::Payload& payload) {
    if (const auto* s = std::get_if<bus::Structured>(&payload)) {
        for (const auto& [k, v] : s->fields) {
            bindings[prefix + "." + k] = v;
        }
        bindings[prefix] = roschain::canonical_text(*s);
    } else {
        bindings[prefix] = roschain::wrap_payload(payload);
    }
}

Value coerce(const Value& v, ParamKind kind, const std::string& what) {
    if (kind == ParamKind::Text) {
        return Value{as_text(v)};
    }
    try {
        return Value{as_number(v)};
    } catch (const std::exception&) {
        throw InvalidArgument(what + " expects a number, got '" + as_text(v) + "'");
    }
}

}  // namespace

FlowResult execute_flow(const ActionFunction& action, const Arguments& args,
                        const FlowEnvironment& env, const roschain::CommandRegistry& registry) {
    Bindings b;
    std::set<std::string> defaulted;
    const auto where = [&](const std::string& msg) { return action.name + ": " + msg; };

    for (const auto& [name, value] : args) {
        const auto* a = action.find_argument(name);
        if (a == nullptr) {
            throw InvalidArgument(where("unknown argument '" + name + "'"));
        }
        b["arg." + name] = coerce(value, a->kind, where("argument '" + name + "'"));
    }
    for (const auto& a : action.arguments) {
        if (a.required && !b.contains("arg." + a.name)) {
            throw UnresolvedParameter(where("missing argument '" + a.name + "'"));
        }
    }
    for (const auto& p : action.schema) {
        if (p.origin == ParamOrigin::Plan) {
            if (auto it = b.find("arg." + p.name); it != b.end()) {
                b[p.name] = it->second;
            }
        } else if (p.origin == ParamOrigin::Preinitialized) {
            if (auto it = b.find("arg." + p.name); it != b.end()) {
                b[p.name] = coerce(it->second, p.kind, where(p.name));
            } else if (p.default_value) {
                b[p.name] = *p.default_value;
                defaulted.insert(p.name);
            }
        }
    }

    const auto lookup = [&](const std::string& ref) -> const Value& {
        auto it = b.find(ref);
        if (it == b.end()) {
            throw UnresolvedParameter(where("binding '" + ref + "' is missing"));
        }
        return it->second;
    };

    const EmitCommand* emit = nullptr;
    for (const auto& step : action.flow) {
        if (const auto* q = std::get_if<QueryService>(&step)) {
            if (!env.call_service) {
                throw FlowServiceTimeout(where("no service access for '" + q->service + "'"));
            }
            try {
                bind_payload(b, q->bind, env.call_service(q->service, bus::Text{q->request}));
            } catch (const bus::Timeout& e) {
                throw FlowServiceTimeout(where(e.what()));
            }
        } else if (const auto* r = std::get_if<ReadTopic>(&step)) {
            std::optional<bus::Payload> p;
            if (env.read_topic) {
                p = env.read_topic(r->topic);
            }
            if (!p) {
                throw UnresolvedParameter(where("nothing received on '" + r->topic + "'"));
            }
            bind_payload(b, r->bind, *p);
        } else if (const auto* c = std::get_if<Compute>(&step)) {
            auto fn = compute_functions().find(c->fn);
            if (fn == compute_functions().end()) {
                throw ActionError(where("unknown compute function '" + c->fn + "'"));
            }
            std::vector<std::optional<Value>> inputs;
            for (const auto& in : c->inputs) {
                const auto ref = strip_optional(in);
                if (auto it = b.find(ref); it != b.end()) {
                    inputs.emplace_back(it->second);
                } else if (is_optional(in)) {
                    inputs.emplace_back(std::nullopt);
                } else {
                    throw UnresolvedParameter(where("compute input '" + ref + "' is missing"));
                }
            }
            const auto outputs = fn->second(inputs);
            if (outputs.size() != c->outputs.size()) {
                throw ActionError(where(c->fn + " returned the wrong number of outputs"));
            }
            for (std::size_t i = 0; i < outputs.size(); ++i) {
                b[c->outputs[i]] = outputs[i];
                defaulted.erase(c->outputs[i]);
            }
        } else {
            emit = &std::get<EmitCommand>(step);
            break;
        }
    }

    for (const auto& p : action.schema) {
        if (!b.contains(p.name)) {
            throw UnresolvedParameter(where("parameter '" + p.name + "' was not resolved"));
        }
    }
    if (emit == nullptr) {
        throw UnresolvedParameter(where("flow has no emit step"));
    }

    const std::string op = emit->operation.starts_with('$')
                               ? as_text(lookup(emit->operation.substr(1)))
                               : emit->operation;
    const auto* row = registry.find(op);
    if (row == nullptr) {
        throw roschain::UnknownOperation("unknown operation '" + op + "'");
    }
    const auto kind_of = [&](const std::string& key) {
        for (const auto& spec : row->schema) {
            if (spec.name == key) {
                return spec.kind;
            }
        }
        return ParamKind::Text;  // translate rejects the unknown key
    };

    roschain::CommandConfig config;
    for (const auto& [key, expr] : emit->params) {
        if (expr.starts_with('$')) {
            const auto ref = strip_optional(expr.substr(1));
            auto it = b.find(ref);
            if (it == b.end()) {
                if (is_optional(expr)) {
                    continue;
                }
                throw UnresolvedParameter(where("emit parameter '" + key + "' is unbound"));
            }
            config.set(key, coerce(it->second, kind_of(key), where(key)),
                       defaulted.contains(ref) ? roschain::ParamSource::Preinitialized
                                               : roschain::ParamSource::Resolved);
        } else {
            config.set(key, coerce(Value{expr}, kind_of(key), where(key)),
                       roschain::ParamSource::Preinitialized);
        }
    }
    return FlowResult{registry.translate(op, config), std::move(b)};
}

}  // namespace embodied::actions
