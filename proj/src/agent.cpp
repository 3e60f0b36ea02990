#include "embodied/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "embodied/controller.hpp"

namespace embodied::agent {

using roschain::format_number;
using roschain::parse_canonical;

// ─── Context ──────────────────────────────────────────────────

const std::string& default_prompt_template() {
    static const std::string text =
        "You are the reasoning module of an industrial drone. Describe the current situation "
        "from the observations, then choose the next actions using only the listed action "
        "functions. Give arguments only when you know them; sensors resolve the rest. Answer "
        "with a situation summary, an ordered list of steps (action, arguments, rationale) and "
        "a contingency plan.";
    return text;
}

namespace {

std::string one_line(std::string_view text) {
    std::string out(text);
    std::replace(out.begin(), out.end(), '\n', ';');
    return out;
}

}  // namespace

std::array<std::string, 5> AgentContext::sections() const {
    std::array<std::string, 5> s;
    s[0] = structured_prompt;
    s[1] = "Task: " + task_description;
    s[2] = "Available actions:\n" + embodied_capabilities;

    std::ostringstream obs;
    obs << "tick=" << tick << '\n';
    for (const auto& p : observations) {
        obs << '[' << p.topic << "] " << p.text << '\n';
    }
    s[3] = obs.str();

    std::ostringstream mem;
    mem << "retrieved memories";
    if (!retrieved.query.empty()) {
        mem << " (query: " << retrieved.query << ")";
    }
    mem << ":\n";
    if (retrieved.records.empty()) {
        mem << "none\n";
    }
    for (const auto& r : retrieved.records) {
        mem << "- #" << r.id << " tick=" << r.tick << " similarity=" << format_number(r.similarity)
            << " " << r.label << "\n  scene: " << one_line(r.payload.scene) << '\n';
    }
    mem << "recent operations:\n";
    if (recent_operations.empty()) {
        mem << "none\n";
    }
    for (const auto& op : recent_operations) {
        mem << "- tick=" << op.tick << ' ' << op.action << ' '
            << (op.operation.empty() ? "-" : op.operation) << ' '
            << memory::to_string(op.outcome.kind);
        if (!op.outcome.detail.empty()) {
            mem << " (" << one_line(op.outcome.detail) << ')';
        }
        mem << '\n';
    }
    mem << "mission notes: " << (mission_notes.empty() ? "none" : mission_notes) << '\n';
    mem << "contingency: " << (contingency.empty() ? "none" : contingency) << '\n';
    s[4] = mem.str();
    return s;
}

std::string AgentContext::serialize() const {
    std::ostringstream out;
    const auto s = sections();
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << "=== (" << i + 1 << ") ===\n" << s[i] << '\n';
    }
    return out.str();
}

std::string memory_query(std::string_view task, const std::vector<std::string>& keywords) {
    std::string query;
    for (const auto& t : memory::tokenize(task)) {
        if (std::find(keywords.begin(), keywords.end(), t) != keywords.end()) {
            query += (query.empty() ? "" : " ") + t;
        }
    }
    return query.empty() ? std::string(task) : query;
}

AgentContext build_context(const ContextInputs& in, const memory::MemoryDb& db) {
    AgentContext ctx;
    ctx.structured_prompt = in.prompt_template;
    ctx.task_description = in.task;
    ctx.embodied_capabilities = in.library ? in.library->summary(in.payloads) : std::string{};
    ctx.tick = in.tick;
    ctx.observations = in.observations;
    ctx.retrieved = db.retrieve(memory_query(in.task, in.query_keywords), std::max<std::size_t>(1, in.retrieval_k));
    ctx.recent_operations = db.recent_operations(in.recent_operations);
    ctx.mission_notes = in.mission_notes;
    ctx.contingency = in.contingency;
    return ctx;
}

// ─── Plans ────────────────────────────────────────────────────

void validate_plan(const Plan& plan, const std::vector<const actions::ActionFunction*>& available) {
    for (const auto& step : plan.steps) {
        const bool known = std::any_of(available.begin(), available.end(),
                                       [&](const auto* a) { return a->name == step.action; });
        if (!known) {
            throw PlanValidationError(step.action,
                                      "plan uses unavailable action '" + step.action + "'");
        }
    }
}

bool is_settling(std::string_view action) {
    return action == "moveToPosition" || action == "takeoff" || action == "land" ||
           action == "failsafeLand";
}

// ─── Scene helpers ────────────────────────────────────────────

const SceneEntity* SceneView::find(std::string_view id) const {
    auto it = std::find_if(entities.begin(), entities.end(),
                           [&](const SceneEntity& e) { return e.id == id; });
    return it == entities.end() ? nullptr : &*it;
}

namespace {

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find(sep, start);
        const auto piece = text.substr(start, end == std::string_view::npos ? text.size() - start
                                                                            : end - start);
        if (!piece.empty()) {
            out.emplace_back(piece);
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    return out;
}

double number_or(const std::map<std::string, std::string>& f, const std::string& key, double fallback) {
    auto it = f.find(key);
    if (it == f.end()) {
        return fallback;
    }
    try {
        return roschain::parse_number(it->second);
    } catch (const std::exception&) {
        return fallback;
    }
}

bool geometric(std::string_view attr) {
    return attr == "x" || attr == "y" || attr == "z" || attr == "distance" || attr == "bearing" ||
           attr == "blade_phase";
}

std::map<std::string, std::string> signature(const std::map<std::string, std::string>& scene) {
    std::map<std::string, std::string> sig;
    for (const auto& [k, v] : scene) {
        if (!k.starts_with("e.")) {
            continue;
        }
        const auto dot = k.rfind('.');
        if (!geometric(std::string_view(k).substr(dot + 1))) {
            sig[k] = v;
        }
    }
    return sig;
}

}  // namespace

SceneView parse_scene(const std::map<std::string, std::string>& f) {
    SceneView view;
    view.tick = static_cast<std::int64_t>(number_or(f, "tick", 0.0));
    view.drone = {number_or(f, "drone.x", 0.0), number_or(f, "drone.y", 0.0),
                  number_or(f, "drone.z", 0.0)};
    auto it = f.find("entities");
    if (it == f.end()) {
        return view;
    }
    for (const auto& id : split(it->second, ',')) {
        SceneEntity e;
        e.id = id;
        const std::string p = "e." + id + ".";
        for (auto a = f.lower_bound(p); a != f.end() && a->first.starts_with(p); ++a) {
            const auto attr = a->first.substr(p.size());
            if (attr == "kind") {
                e.kind = a->second;
            } else if (attr != "x" && attr != "y" && attr != "z" && attr != "distance") {
                e.attributes[attr] = a->second;
            }
        }
        e.position = {number_or(f, p + "x", 0.0), number_or(f, p + "y", 0.0),
                      number_or(f, p + "z", 0.0)};
        e.distance = number_or(f, p + "distance", 0.0);
        view.entities.push_back(std::move(e));
    }
    return view;
}

bool replan_trigger(const std::map<std::string, std::string>& previous,
                    const std::map<std::string, std::string>& current) {
    auto ids = [](const std::map<std::string, std::string>& s) {
        auto it = s.find("entities");
        return it == s.end() ? std::string{} : it->second;
    };
    return ids(previous) != ids(current) || signature(previous) != signature(current);
}

std::string narrate(const std::map<std::string, std::string>& scene) {
    const auto view = parse_scene(scene);
    std::string out;
    for (const auto& e : view.entities) {
        std::string kind = e.kind;
        std::replace(kind.begin(), kind.end(), '_', ' ');
        out += (out.empty() ? "" : "; ") + kind + " " + e.id;
        if (auto s = e.attributes.find("size"); s != e.attributes.end()) {
            out += " (" + s->second + " people)";
        }
        if (auto s = e.attributes.find("side"); s != e.attributes.end()) {
            out += " (" + s->second + ")";
        }
    }
    return out;
}

std::map<std::string, std::string> parse_notes(std::string_view notes) {
    std::map<std::string, std::string> out;
    for (const auto& item : split(notes, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            out[item] = "";
        } else {
            out[item.substr(0, eq)] = item.substr(eq + 1);
        }
    }
    return out;
}

std::string format_notes(const std::map<std::string, std::string>& notes) {
    std::string out;
    for (const auto& [k, v] : notes) {
        out += (out.empty() ? "" : ";") + k + "=" + v;
    }
    return out;
}

// ─── Scripted rule tables ─────────────────────────────────────

namespace {

struct PoseView {
    std::string mode;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct ContextView {
    std::optional<SceneView> scene;
    std::optional<PoseView> pose;
    std::map<std::string, std::string> notes;
};

ContextView view_of(const AgentContext& ctx) {
    ContextView v;
    for (auto it = ctx.observations.rbegin(); it != ctx.observations.rend(); ++it) {
        if (!v.scene && it->topic == kSceneTopic) {
            v.scene = parse_scene(parse_canonical(it->text));
        }
        if (!v.pose && it->topic == controller::kPoseTopic) {
            const auto f = parse_canonical(it->text);
            PoseView p;
            p.mode = f.contains("mode") ? f.at("mode") : "";
            p.position = {number_or(f, "x", 0.0), number_or(f, "y", 0.0), number_or(f, "z", 0.0)};
            v.pose = p;
        }
    }
    v.notes = parse_notes(ctx.mission_notes);
    return v;
}

PlanStep make_step(std::string action, actions::Arguments args, std::string rationale,
                   std::string note = {}) {
    return PlanStep{std::move(action), std::move(args), std::move(rationale), std::move(note)};
}

actions::Arguments at(const Eigen::Vector3d& p) {
    return {{"x", p.x()}, {"y", p.y()}, {"z", p.z()}};
}

Plan hold(std::string why) {
    Plan p;
    p.summary = why;
    p.steps.push_back(make_step("holdAndMonitor", {}, std::move(why)));
    p.contingency = "resume when the scene changes";
    return p;
}

bool on_ground(const ContextView& v) { return v.pose && v.pose->mode == "OnGround"; }

Plan takeoff_plan(const std::map<std::string, std::string>& notes, std::string why) {
    Plan p;
    p.summary = "on the ground";
    p.steps.push_back(make_step("takeoff", {{"altitude", 10.0}}, std::move(why), format_notes(notes)));
    p.contingency = "land if the climb is rejected";
    return p;
}

inline constexpr double kCruiseAltitude = 10.0;
inline constexpr double kFireStandoff = 2.0;
inline constexpr double kSearchRadius = 40.0;
inline constexpr int kSearchWaypoints = 6;

Plan wildfire_rules(const ContextView& v) {
    auto notes = v.notes;
    if (!v.scene) {
        return hold("no camera frame yet");
    }
    const auto& scene = *v.scene;
    if (on_ground(v)) {
        notes["launched"] = "1";
        return takeoff_plan(notes, "climb to cruise altitude to assess the smoke");
    }

    const SceneEntity* fire = nullptr;
    for (const auto& e : scene.entities) {
        if (e.kind == "fire" || e.kind == "smoke") {
            fire = &e;
        }
    }

    if (notes["fire"] != "reported") {
        if (fire == nullptr) {
            return hold("no fire cue in view");
        }
        Eigen::Vector3d dir = fire->position - scene.drone;
        dir.z() = 0.0;
        dir = dir.norm() > 1e-9 ? dir.normalized() : Eigen::Vector3d::UnitX();
        Eigen::Vector3d standoff = fire->position - kFireStandoff * dir;
        standoff.z() = kCruiseAltitude;
        auto reported = notes;
        reported["fire"] = "reported";
        reported["fx"] = format_number(fire->position.x());
        reported["fy"] = format_number(fire->position.y());
        Plan p;
        p.summary = fire->kind == "smoke" ? "smoke column ahead, fire details obscured"
                                          : "fire source in view";
        p.steps.push_back(make_step("moveToPosition", at(standoff),
                                    "close in on the ignition point to see through the smoke"));
        p.steps.push_back(make_step(
            "reportToCommand",
            {{"text", "fire ignition point located near (" + format_number(fire->position.x()) +
                          ", " + format_number(fire->position.y()) + ")"}},
            "relay the fire location to the command center", format_notes(reported)));
        p.contingency = "if the smoke thickens, climb and keep reporting from above";
        return p;
    }

    const SceneEntity* group = nullptr;
    for (const auto& e : scene.entities) {
        if (e.kind == "trapped_group" && notes[e.id] != "done" &&
            (group == nullptr || e.distance < group->distance)) {
            group = &e;
        }
    }
    if (group != nullptr) {
        const auto size = group->attributes.contains("size") ? group->attributes.at("size") : "1";
        const double count = roschain::parse_number(size);
        const auto status = notes[group->id];
        Plan p;
        p.summary = size + " people trapped at " + group->id;
        Eigen::Vector3d over = group->position;
        over.z() = kCruiseAltitude;
        p.steps.push_back(make_step("moveToPosition", at(over), "hover over the trapped group"));
        if (status.empty()) {
            notes[group->id] = "reported";
            p.steps.push_back(make_step("reportToCommand",
                                        {{"text", size + " trapped survivors located at " + group->id}},
                                        "tell the command center how many people need rescue",
                                        format_notes(notes)));
        }
        if (status.empty() || status == "reported") {
            notes[group->id] = "reassured";
            p.steps.push_back(make_step("broadcastReassurance",
                                        {{"text", "Help is on the way. Stay together and stay low."}},
                                        "calm the group", format_notes(notes)));
        }
        notes[group->id] = "done";
        p.steps.push_back(make_step("dropEmergencyKit", {{"count", count}},
                                    "one kit per person in the group", format_notes(notes)));
        p.contingency = "if the group moves, follow it before dropping kits";
        return p;
    }

    int wp = static_cast<int>(number_or(notes, "wp", 0.0));
    if (wp >= kSearchWaypoints) {
        return hold("search pattern complete");
    }
    const Eigen::Vector3d center(number_or(notes, "fx", fire ? fire->position.x() : 0.0),
                                 number_or(notes, "fy", fire ? fire->position.y() : 0.0), 0.0);
    Plan p;
    p.summary = "fire reported, searching the perimeter for trapped people";
    for (int i = wp; i < kSearchWaypoints; ++i) {
        const double a = i * 2.0 * std::numbers::pi / kSearchWaypoints;
        const Eigen::Vector3d point(center.x() + kSearchRadius * std::cos(a),
                                    center.y() + kSearchRadius * std::sin(a), kCruiseAltitude);
        notes["wp"] = std::to_string(i + 1);
        p.steps.push_back(make_step("moveToPosition", at(point), "next search waypoint",
                                    format_notes(notes)));
    }
    p.contingency = "divert to any trapped group that comes into view";
    return p;
}

Plan landing_rules(const ContextView& v) {
    if (!v.scene) {
        return hold("no camera frame yet");
    }
    if (on_ground(v)) {
        return hold("landed");
    }
    const SceneEntity* pad = nullptr;
    for (const auto& e : v.scene->entities) {
        if (e.kind == "helipad") {
            pad = &e;
        }
    }
    if (pad == nullptr) {
        return hold("helipad not in view");
    }
    Plan p;
    p.summary = "helipad in view";
    const Eigen::Vector3d d = pad->position - v.scene->drone;
    if (d.head<2>().norm() > 0.05) {
        p.steps.push_back(make_step("moveToPosition",
                                    at({pad->position.x(), pad->position.y(), v.scene->drone.z()}),
                                    "align over the helipad center"));
        // Arrival leaves up to the arrival tolerance; land on the next plan.
        return p;
    }
    p.steps.push_back(make_step("land", {}, "descend onto the center mark"));
    p.contingency = "abort with failsafeLand if the pad becomes obstructed";
    return p;
}

Plan inspection_rules(const AgentContext& ctx, const ContextView& v) {
    if (!v.scene) {
        return hold("no camera frame yet");
    }
    if (v.notes.contains("reported")) {
        return hold("fault already reported");
    }
    std::vector<const SceneEntity*> turbines;
    for (const auto& e : v.scene->entities) {
        if (e.kind == "turbine") {
            turbines.push_back(&e);
        }
    }
    if (turbines.empty()) {
        return hold("no turbines in view");
    }
    std::optional<SceneView> earlier;
    for (const auto& r : ctx.retrieved.records) {
        if (r.tick < v.scene->tick && !r.payload.scene.empty()) {
            earlier = parse_scene(parse_canonical(r.payload.scene));
            break;
        }
    }
    if (!earlier) {
        return hold("keep watching to compare blade positions across frames");
    }
    std::vector<std::string> stopped;
    for (const auto* t : turbines) {
        const auto* before = earlier->find(t->id);
        if (before == nullptr) {
            continue;
        }
        const auto phase = [](const SceneEntity& e) {
            auto it = e.attributes.find("blade_phase");
            return it == e.attributes.end() ? std::string{} : it->second;
        };
        if (phase(*before) == phase(*t)) {
            auto side = t->attributes.contains("side") ? t->attributes.at("side") : t->id;
            stopped.push_back(side);
        }
    }
    if (stopped.empty()) {
        return hold("all turbines rotating normally");
    }
    std::string text = "the ";
    for (std::size_t i = 0; i < stopped.size(); ++i) {
        text += (i ? " and " : "") + stopped[i];
    }
    text += stopped.size() > 1 ? " turbines have stopped rotation" : " turbine has stopped rotation";
    auto notes = v.notes;
    notes["reported"] = "1";
    Plan p;
    p.summary = "blade positions unchanged between frames";
    p.steps.push_back(make_step("reportToCommand", {{"text", text}},
                                "a turbine that does not rotate is faulty", format_notes(notes)));
    p.contingency = "keep monitoring the other turbines";
    return p;
}

inline constexpr double kEntryAltitude = 2.0;
inline constexpr double kMinEnterableArea = 50.0;

Plan safenav_rules(const ContextView& v) {
    auto notes = v.notes;
    if (!v.scene) {
        return hold("no camera frame yet");
    }
    if (on_ground(v)) {
        if (notes.contains("done")) {
            return hold("exploration finished");
        }
        return takeoff_plan(notes, "climb above the rooftops");
    }
    const auto visited = split(notes["visited"], ',');
    const SceneEntity* best = nullptr;
    for (const auto& e : v.scene->entities) {
        if (e.kind != "building" ||
            std::find(visited.begin(), visited.end(), e.id) != visited.end()) {
            continue;
        }
        const double area = number_or(e.attributes, "width", 0.0) * number_or(e.attributes, "depth", 0.0);
        if (area < kMinEnterableArea) {
            continue;  // too small to fly into
        }
        if (best == nullptr || e.distance < best->distance ||
            (e.distance == best->distance && e.id < best->id)) {
            best = &e;
        }
    }
    Plan p;
    if (best == nullptr) {
        notes["done"] = "1";
        p.summary = "no unexplored building in view";
        p.steps.push_back(make_step("land", {}, "exploration finished", format_notes(notes)));
        return p;
    }
    p.summary = "unexplored building " + best->id + " in view";
    const auto& c = best->position;
    p.steps.push_back(make_step("moveToPosition", at({c.x(), c.y(), kCruiseAltitude}),
                                "fly over the building"));
    notes["visited"] = notes["visited"].empty() ? best->id : notes["visited"] + "," + best->id;
    p.steps.push_back(make_step("moveToPosition", at({c.x(), c.y(), kEntryAltitude}),
                                "descend into the building", format_notes(notes)));
    p.steps.push_back(make_step("moveToPosition", at({c.x(), c.y(), kCruiseAltitude}),
                                "climb back out", format_notes(notes)));
    p.contingency = "climb and pick the next building if the entrance is blocked";
    return p;
}

}  // namespace

ScriptedBackend::ScriptedBackend(scenarios::ScenarioId rules) : rules_(rules) {}

Plan ScriptedBackend::generate(const AgentContext& context) {
    const auto v = view_of(context);
    switch (rules_) {
        case scenarios::ScenarioId::Wildfire: return wildfire_rules(v);
        case scenarios::ScenarioId::Landing: return landing_rules(v);
        case scenarios::ScenarioId::Inspection: return inspection_rules(context, v);
        case scenarios::ScenarioId::SafeNav: return safenav_rules(v);
    }
    return hold("no rule table");
}

BackendIdentity ScriptedBackend::identity() const {
    return {BackendIdentity::Kind::Scripted, scenarios::to_string(rules_)};
}

SingleCallBackend::SingleCallBackend(std::unique_ptr<ReasonerBackend> inner)
    : inner_(std::move(inner)) {
    if (!inner_) {
        throw AgentError("single call backend needs an inner backend");
    }
}

Plan SingleCallBackend::generate(const AgentContext& context) {
    AgentContext blank = context;
    blank.retrieved = {};
    blank.recent_operations.clear();
    blank.mission_notes.clear();
    blank.contingency.clear();
    return inner_->generate(blank);
}

BackendIdentity SingleCallBackend::identity() const {
    return {BackendIdentity::Kind::SingleCall, inner_->identity().detail};
}

// ─── Random baseline ──────────────────────────────────────────

RandomBackend::RandomBackend(std::uint64_t seed) : seed_(seed) {}

Plan RandomBackend::generate(const AgentContext& context) {
    std::seed_seq seq{seed_, static_cast<std::uint64_t>(context.tick), std::uint64_t{0x5eed}};
    std::mt19937_64 rng(seq);
    std::vector<std::string> names;
    std::istringstream lines(context.embodied_capabilities);
    std::string line;
    while (std::getline(lines, line)) {
        if (auto paren = line.find('('); paren != std::string::npos) {
            names.push_back(line.substr(0, paren));
        }
    }
    if (names.empty()) {
        return Plan{"nothing available", {}, std::nullopt};
    }
    const auto v = view_of(context);
    const Eigen::Vector3d here = v.scene ? v.scene->drone : Eigen::Vector3d::Zero();
    std::uniform_real_distribution<double> offset(-5.0, 5.0);
    std::uniform_int_distribution<int> count(1, 3);
    static const std::vector<std::string> phrases{
        "fire spotted", "2 trapped survivors nearby", "all clear", "the left turbine is rotating",
        "building entrance found"};
    static const std::vector<std::string> sensors{"depth", "infrared", "lidar", "down"};

    const auto& name = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
    actions::Arguments args;
    if (name == "moveToPosition") {
        args = at({here.x() + offset(rng), here.y() + offset(rng),
                   std::max(0.0, here.z() + offset(rng))});
    } else if (name == "moveRelative") {
        args = {{"dx", offset(rng)}, {"dy", offset(rng)}, {"dz", offset(rng)}};
    } else if (name == "takeoff") {
        args = {{"altitude", 5.0 + 10.0 * std::uniform_real_distribution<double>(0, 1)(rng)}};
    } else if (name == "broadcastReassurance") {
        args = {{"text", "stay calm"}};
    } else if (name == "dropEmergencyKit") {
        args = {{"count", static_cast<double>(count(rng))}};
    } else if (name == "activeObserve") {
        args = {{"sensor", sensors[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]}};
    } else if (name == "reportToCommand") {
        args = {{"text", phrases[std::uniform_int_distribution<std::size_t>(0, phrases.size() - 1)(rng)]}};
    }
    Plan p;
    p.summary = "random exploration";
    p.steps.push_back(make_step(name, std::move(args), "random"));
    return p;
}

BackendIdentity RandomBackend::identity() const {
    return {BackendIdentity::Kind::Random, std::to_string(seed_)};
}

// ─── External backend ─────────────────────────────────────────

ExternalBackend::ExternalBackend(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

std::unique_ptr<ExternalBackend> ExternalBackend::from_environment() {
    const char* url = std::getenv("EMBODIED_REASONER_URL");
    if (url == nullptr || *url == '\0') {
        throw BackendUnavailable("EMBODIED_REASONER_URL is not set");
    }
    return std::make_unique<ExternalBackend>(url);
}

std::string ExternalBackend::request_body(const AgentContext& context) {
    const auto s = context.sections();
    return nlohmann::json{{"sections", std::vector<std::string>(s.begin(), s.end())}}.dump();
}

Plan ExternalBackend::parse_response(std::string_view body) {
    try {
        const auto j = nlohmann::json::parse(body);
        Plan p;
        p.summary = j.at("summary").get<std::string>();
        for (const auto& s : j.at("steps")) {
            PlanStep step;
            step.action = s.at("action").get<std::string>();
            step.rationale = s.value("rationale", std::string{});
            if (s.contains("args")) {
                for (const auto& [k, v] : s.at("args").items()) {
                    if (v.is_number()) {
                        step.args[k] = v.get<double>();
                    } else if (v.is_string()) {
                        step.args[k] = v.get<std::string>();
                    } else {
                        throw BackendUnavailable("argument '" + k + "' is neither number nor text");
                    }
                }
            }
            p.steps.push_back(std::move(step));
        }
        if (j.contains("contingency") && !j.at("contingency").is_null()) {
            p.contingency = j.at("contingency").get<std::string>();
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw BackendUnavailable(std::string("malformed reasoner response: ") + e.what());
    }
}

Plan ExternalBackend::generate(const AgentContext& context) {
    httplib::Client client(endpoint_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    auto res = client.Post("/plan", request_body(context), "application/json");
    if (!res) {
        throw BackendUnavailable("reasoner at " + endpoint_ + " unreachable: " +
                                 httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw BackendUnavailable("reasoner returned HTTP " + std::to_string(res->status));
    }
    return parse_response(res->body);
}

BackendIdentity ExternalBackend::identity() const {
    return {BackendIdentity::Kind::External, endpoint_};
}

// ─── Agent ────────────────────────────────────────────────────

Agent::Agent(bus::Bus& bus, memory::MemoryDb& memory, const actions::ActionLibrary& library,
             ReasonerBackend& backend, AgentConfig config)
    : bus_(&bus),
      adapter_(bus, "Agent"),
      memory_(&memory),
      library_(&library),
      backend_(&backend),
      config_(std::move(config)),
      fault_rng_(config_.fault_seed) {
    for (const char* topic : {kImageTopic, kSceneTopic, controller::kPoseTopic}) {
        bus.subscribe(adapter_.handle(), topic, [this](const bus::Envelope& env) {
            latest_[env.topic] = env.payload;
            pending_.push_back(roschain::wrap_message(env));
        });
    }
}

namespace {

std::optional<PoseView> pose_of(const std::map<std::string, bus::Payload>& latest) {
    auto it = latest.find(controller::kPoseTopic);
    if (it == latest.end()) {
        return std::nullopt;
    }
    const auto* s = std::get_if<bus::Structured>(&it->second);
    if (s == nullptr) {
        return std::nullopt;
    }
    PoseView p;
    p.mode = s->fields.contains("mode") ? s->fields.at("mode") : "";
    p.position = {number_or(s->fields, "x", 0.0), number_or(s->fields, "y", 0.0),
                  number_or(s->fields, "z", 0.0)};
    return p;
}

}  // namespace

bool Agent::settled() const {
    if (!plan_ || index_ >= plan_->steps.size()) {
        return false;
    }
    const auto pose = pose_of(latest_);
    if (!pose) {
        return false;
    }
    const auto& action = plan_->steps[index_].action;
    if (action == "moveToPosition") {
        return pose->mode == "Hovering" && move_target_ &&
               (pose->position - *move_target_).norm() <= controller::kArrivalEpsilon + 1e-9;
    }
    if (action == "takeoff") {
        return pose->mode == "Hovering";
    }
    if (action == "land" || action == "failsafeLand") {
        return pose->mode == "OnGround";
    }
    return true;
}

void Agent::complete_current() {
    if (plan_ && index_ < plan_->steps.size()) {
        if (!plan_->steps[index_].note.empty()) {
            notes_ = plan_->steps[index_].note;
        }
        ++index_;
    }
    emissions_ = 0;
    feedback_given_ = false;
    move_target_.reset();
    pose_at_emission_.reset();
}

StepOutcome Agent::finish(StepOutcome out, const std::string& operation,
                          const roschain::CommandConfig* config) {
    memory::OperationRecord rec;
    rec.tick = bus_->now();
    rec.operation = operation;
    rec.action = out.action;
    if (config != nullptr) {
        for (const auto& [k, e] : config->entries()) {
            rec.config[k] = e.value;
        }
    }
    rec.outcome = out.outcome;
    memory_->record_operation(std::move(rec));
    return out;
}

StepOutcome Agent::step() {
    StepOutcome out;
    out.step = ++steps_;
    const auto tick = bus_->now();

    // Observe.
    auto observations = std::exchange(pending_, {});
    for (auto& p : active_results_) {
        observations.push_back(std::move(p));
    }
    active_results_.clear();
    std::optional<std::map<std::string, std::string>> scene;
    if (auto it = latest_.find(kSceneTopic); it != latest_.end()) {
        if (const auto* s = std::get_if<bus::Structured>(&it->second)) {
            scene = s->fields;
        }
    }

    // Reflect.
    if (scene) {
        std::string image;
        if (auto it = latest_.find(kImageTopic); it != latest_.end()) {
            image = roschain::wrap_payload(it->second);
        }
        memory_->reflect({image, roschain::canonical_text(bus::Structured{*scene})}, narrate(*scene),
                         tick);
    }

    // Continue, settle or abandon the current plan step.
    const auto pose = pose_of(latest_);
    if (plan_ && index_ < plan_->steps.size() && emissions_ > 0) {
        if (settled()) {
            complete_current();
        } else if (emissions_ >= 2 && pose && pose_at_emission_ &&
                   (pose->position - *pose_at_emission_).norm() < 1e-9) {
            // The controller is not tracking this setpoint; move on.
            emissions_ = 0;
            ++index_;
            feedback_given_ = false;
            move_target_.reset();
            pose_at_emission_.reset();
        }
    }

    const bool trigger = scene && previous_scene_ && replan_trigger(*previous_scene_, *scene);
    if (scene) {
        previous_scene_ = scene;
    }

    if (!plan_ || index_ >= plan_->steps.size() || trigger) {
        ContextInputs in;
        in.task = config_.task;
        in.library = library_;
        in.payloads = config_.payloads;
        in.tick = tick;
        in.observations = observations;
        in.prompt_template = config_.prompt_template;
        in.query_keywords = config_.query_keywords;
        in.mission_notes = notes_;
        in.contingency = contingency_;
        in.retrieval_k = config_.retrieval_k;
        in.recent_operations = config_.recent_operations;
        last_context_ = build_context(in, *memory_);
        try {
            Plan p = backend_->generate(*last_context_);
            validate_plan(p, library_->lookup(config_.payloads));
            contingency_ = p.contingency.value_or("");
            plan_ = std::move(p);
            index_ = 0;
            emissions_ = 0;
            feedback_given_ = false;
            move_target_.reset();
            pose_at_emission_.reset();
            out.replanned = true;
        } catch (const PlanValidationError& e) {
            plan_.reset();
            out.action = e.offending();
            out.outcome = memory::Outcome::rejected(e.what());
            return finish(std::move(out), "", nullptr);
        } catch (const std::exception& e) {
            plan_.reset();
            out.action = "plan";
            out.outcome = memory::Outcome::rejected(e.what());
            return finish(std::move(out), "", nullptr);
        }
    }

    const PlanStep current = plan_->steps.empty() ? make_step("holdAndMonitor", {}, "empty plan")
                                                  : plan_->steps[index_];
    out.action = current.action;

    if (config_.malformed_probability > 0.0 && emissions_ == 0 && !feedback_given_) {
        feedback_given_ = true;
        if (std::uniform_real_distribution<double>(0.0, 1.0)(fault_rng_) <
            config_.malformed_probability) {
            out.outcome = memory::Outcome::rejected("malformed command, resent after feedback");
            return finish(std::move(out), "", nullptr);
        }
    }

    const auto* fn = library_->find(current.action);
    if (fn == nullptr) {
        ++index_;
        out.outcome = memory::Outcome::rejected("unknown action '" + current.action + "'");
        return finish(std::move(out), "", nullptr);
    }
    try {
        auto env = actions::bus_environment(adapter_, config_.service_timeout_ticks,
                                            [this](const std::string& topic) -> std::optional<bus::Payload> {
                                                auto it = latest_.find(topic);
                                                if (it == latest_.end()) {
                                                    return std::nullopt;
                                                }
                                                return it->second;
                                            });
        auto result = actions::execute_flow(*fn, current.args, env, adapter_.registry());
        const auto& cmd = result.command;
        out.command = cmd;
        trace_.push_back(cmd.to_text());
        if (cmd.operation().category == roschain::Category::ActiveObserve) {
            auto perception = adapter_.request_active_observation(cmd, config_.service_timeout_ticks);
            out.observation = perception;
            out.outcome = memory::Outcome::service_result(perception.text.substr(0, 120));
            active_results_.push_back(std::move(perception));
        } else {
            adapter_.publish_command(cmd);
            out.outcome = memory::Outcome::accepted();
        }
        ++emissions_;
        if (pose) {
            pose_at_emission_ = pose->position;
        }
        if (cmd.operation().name == "Move_ENU") {
            move_target_ = Eigen::Vector3d(cmd.number("x"), cmd.number("y"), cmd.number("z"));
        }
        if (!is_settling(current.action)) {
            complete_current();
        }
        return finish(std::move(out), cmd.operation().name, &cmd.parameters());
    } catch (const std::exception& e) {
        emissions_ = 0;
        ++index_;
        feedback_given_ = false;
        move_target_.reset();
        pose_at_emission_.reset();
        out.outcome = memory::Outcome::rejected(e.what());
        return finish(std::move(out), "", nullptr);
    }
}

}  // namespace embodied::agent
