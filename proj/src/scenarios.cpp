#include "embodied/scenarios.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "embodied/roschain.hpp"
#include "embodied_resources.hpp"

namespace embodied::scenarios {

using roschain::format_number;

const char* to_string(ScenarioId id) {
    switch (id) {
        case ScenarioId::Wildfire: return "wildfire";
        case ScenarioId::Landing: return "landing";
        case ScenarioId::Inspection: return "inspection";
        case ScenarioId::SafeNav: return "safenav";
    }
    return "?";
}

ScenarioId parse_scenario(std::string_view name) {
    for (auto id : all_scenarios()) {
        if (name == to_string(id)) {
            return id;
        }
    }
    throw ScenarioError("unknown scenario '" + std::string(name) + "'");
}

const std::vector<ScenarioId>& all_scenarios() {
    static const std::vector<ScenarioId> ids{ScenarioId::Wildfire, ScenarioId::Landing,
                                             ScenarioId::Inspection, ScenarioId::SafeNav};
    return ids;
}

const char* to_string(EntityKind kind) {
    switch (kind) {
        case EntityKind::FireSource: return "fire_source";
        case EntityKind::TrappedGroup: return "trapped_group";
        case EntityKind::Firefighter: return "firefighter";
        case EntityKind::Helipad: return "helipad";
        case EntityKind::Turbine: return "turbine";
        case EntityKind::Building: return "building";
        case EntityKind::Obstacle: return "obstacle";
    }
    return "?";
}

namespace {

EntityKind parse_entity_kind(const std::string& s) {
    for (auto k : {EntityKind::FireSource, EntityKind::TrappedGroup, EntityKind::Firefighter,
                   EntityKind::Helipad, EntityKind::Turbine, EntityKind::Building,
                   EntityKind::Obstacle}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw ScenarioError("unknown entity kind '" + s + "'");
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 128 && std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::exchange(cur, {}));
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

double round_to(double v, double step) { return std::round(v / step) * step; }

}  // namespace

// ─── Ledger ───────────────────────────────────────────────────

RewardLedger::RewardLedger(double raw_max) : raw_max_(raw_max) {
    if (!(raw_max > 0.0)) {
        throw ScenarioError("raw_max must be positive");
    }
}

void RewardLedger::add(std::string label, double points, std::int64_t tick) {
    items_.push_back({std::move(label), points, tick});
}

double RewardLedger::raw_total() const {
    double sum = 0.0;
    for (const auto& i : items_) {
        sum += i.points;
    }
    return sum;
}

double RewardLedger::total_of(std::string_view label) const {
    double sum = 0.0;
    for (const auto& i : items_) {
        if (i.label == label ||
            (i.label.size() > label.size() && i.label.starts_with(label) &&
             i.label[label.size()] == ':')) {
            sum += i.points;
        }
    }
    return sum;
}

double RewardLedger::normalized() const {
    return 100.0 * std::clamp(raw_total(), 0.0, raw_max_) / raw_max_;
}

std::string RewardLedger::to_csv() const {
    std::ostringstream out;
    out << "label,points\n";
    for (const auto& i : items_) {
        out << i.label << ',' << format_number(i.points) << '\n';
    }
    return out.str();
}

std::string RewardLedger::to_json() const {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& i : items_) {
        items.push_back({{"label", i.label}, {"points", i.points}, {"tick", i.tick}});
    }
    nlohmann::json j{{"items", items},
                     {"raw_total", raw_total()},
                     {"raw_max", raw_max_},
                     {"normalized", normalized()}};
    return j.dump(2);
}

// ─── Actions ──────────────────────────────────────────────────

const char* to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Move: return "Move";
        case ActionKind::Navigate: return "Navigate";
        case ActionKind::ReportIgnition: return "ReportIgnition";
        case ActionKind::ReportTrapped: return "ReportTrapped";
        case ActionKind::Communicate: return "Communicate";
        case ActionKind::DispatchKits: return "DispatchKits";
        case ActionKind::ActivateSensor: return "ActivateSensor";
        case ActionKind::SubmitReport: return "SubmitReport";
    }
    return "?";
}

ActionKind kind_of(const ScoredAction& action) { return static_cast<ActionKind>(action.index()); }

std::string describe(const ScoredAction& action) {
    std::string out = to_string(kind_of(action));
    std::visit(
        [&](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, Move>) {
                out += "(" + format_number(a.to.x()) + "," + format_number(a.to.y()) + "," +
                       format_number(a.to.z()) + ")";
            } else if constexpr (std::is_same_v<T, Navigate>) {
                static const char* names[] = {"close", "medium", "distant"};
                out += std::string("(") + names[static_cast<int>(a.proximity)] + ")";
            } else if constexpr (std::is_same_v<T, ReportTrapped> || std::is_same_v<T, DispatchKits>) {
                out += "(" + std::to_string(a.count) + ")";
            } else if constexpr (std::is_same_v<T, ActivateSensor>) {
                out += "(" + a.sensor + ")";
            } else if constexpr (std::is_same_v<T, SubmitReport>) {
                out += "(" + a.text + ")";
            }
        },
        action);
    return out;
}

ActionSpace admissible_actions(ScenarioId id) {
    ActionSpace space;
    switch (id) {
        case ScenarioId::Wildfire:
            space.kinds = {ActionKind::Move,          ActionKind::Navigate,
                           ActionKind::ReportIgnition, ActionKind::ReportTrapped,
                           ActionKind::Communicate,   ActionKind::DispatchKits,
                           ActionKind::ActivateSensor};
            break;
        case ScenarioId::Landing:
        case ScenarioId::SafeNav:
            space.kinds = {ActionKind::Move, ActionKind::ActivateSensor};
            break;
        case ScenarioId::Inspection:
            space.kinds = {ActionKind::Move, ActionKind::SubmitReport, ActionKind::ActivateSensor};
            break;
    }
    return space;
}

// ─── Layouts ──────────────────────────────────────────────────

Layout parse_layout(std::string_view json_text) {
    try {
        const auto j = nlohmann::json::parse(json_text);
        Layout l;
        l.id = parse_scenario(j.at("scenario").get<std::string>());
        l.task = j.at("task").get<std::string>();
        l.payloads = j.at("payloads").get<std::vector<std::string>>();
        l.keywords = j.value("keywords", std::vector<std::string>{});
        const auto& start = j.at("start");
        const auto pos = start.at("position").get<std::vector<double>>();
        if (pos.size() != 3) {
            throw ScenarioError("start position needs three coordinates");
        }
        l.start.pose = {pos[0], pos[1], pos[2]};
        l.start.target = l.start.pose;
        l.start.arm_state = start.value("armed", false) ? controller::ArmState::Armed
                                                        : controller::ArmState::Disarmed;
        const auto mode = controller::parse_flight_mode(start.value("mode", std::string("OnGround")));
        if (!mode) {
            throw ScenarioError("unknown start mode");
        }
        l.start.flight_mode = *mode;
        l.raw_max = j.at("raw_max").get<double>();
        l.visibility_m = j.value("visibility_m", l.visibility_m);
        l.detail_range_m = j.value("detail_range_m", l.detail_range_m);
        l.people_range_m = j.value("people_range_m", l.people_range_m);
        l.approach_floor_m = j.value("approach_floor_m", l.approach_floor_m);
        l.entry_altitude_m = j.value("entry_altitude_m", l.entry_altitude_m);
        l.camera_span_m = j.value("camera_span_m", l.camera_span_m);
        l.fault = j.value("fault", std::string{});
        for (const auto& e : j.at("entities")) {
            Entity ent;
            ent.id = e.at("id").get<std::string>();
            ent.kind = parse_entity_kind(e.at("kind").get<std::string>());
            const auto p = e.at("position").get<std::vector<double>>();
            if (p.size() != 3) {
                throw ScenarioError("entity '" + ent.id + "' position needs three coordinates");
            }
            ent.position = {p[0], p[1], p[2]};
            ent.size = e.value("size", 0);
            ent.radius = e.value("radius", 0.0);
            ent.side = e.value("side", std::string{});
            ent.rotating = e.value("rotating", false);
            ent.blade_phase_deg = e.value("blade_phase_deg", 0.0);
            ent.rotation_deg_per_tick = e.value("rotation_deg_per_tick", 0.0);
            ent.width = e.value("width", 0.0);
            ent.depth = e.value("depth", 0.0);
            l.entities.push_back(std::move(ent));
        }
        return l;
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("bad layout: ") + e.what());
    }
}

const Layout& shipped_layout(ScenarioId id) {
    static const Layout wildfire = parse_layout(resources::kWildfireLayout);
    static const Layout landing = parse_layout(resources::kLandingLayout);
    static const Layout inspection = parse_layout(resources::kInspectionLayout);
    static const Layout safenav = parse_layout(resources::kSafeNavLayout);
    switch (id) {
        case ScenarioId::Wildfire: return wildfire;
        case ScenarioId::Landing: return landing;
        case ScenarioId::Inspection: return inspection;
        case ScenarioId::SafeNav: return safenav;
    }
    throw ScenarioError("unknown scenario");
}

// ─── World ────────────────────────────────────────────────────

double horizontal_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return (a.head<2>() - b.head<2>()).norm();
}

const Entity* World::find(std::string_view entity_id) const {
    auto it = std::find_if(entities.begin(), entities.end(),
                           [&](const Entity& e) { return e.id == entity_id; });
    return it == entities.end() ? nullptr : &*it;
}

Entity* World::find(std::string_view entity_id) {
    return const_cast<Entity*>(std::as_const(*this).find(entity_id));
}

namespace {

const Entity* fire_of(const World& w) {
    for (const auto& e : w.entities) {
        if (e.kind == EntityKind::FireSource) {
            return &e;
        }
    }
    return nullptr;
}

}  // namespace

World reset(ScenarioId id, std::uint64_t seed) { return reset(shipped_layout(id), seed); }

World reset(const Layout& layout, std::uint64_t seed) {
    World w;
    w.layout = layout;
    w.entities = layout.entities;
    w.rng_seed = seed;
    w.pose = layout.start.pose;
    w.ledger = RewardLedger(layout.raw_max);
    w.was_airborne = layout.start.pose.z() > 0.0;
    w.judge = match_score;
    if (const auto* fire = fire_of(w)) {
        w.start_distance = horizontal_distance(w.pose, fire->position);
    }
    return w;
}

namespace {

double visibility_of(const World& w, const Entity& e) {
    if (w.id() == ScenarioId::Wildfire &&
        (e.kind == EntityKind::TrappedGroup || e.kind == EntityKind::Firefighter)) {
        return w.layout.people_range_m;
    }
    return w.layout.visibility_m;
}

bool visible(const World& w, const Entity& e) {
    return horizontal_distance(w.pose, e.position) < visibility_of(w, e);
}

std::string scene_kind(const World& w, const Entity& e) {
    if (e.kind == EntityKind::FireSource) {
        return horizontal_distance(w.pose, e.position) < w.layout.detail_range_m ? "fire" : "smoke";
    }
    return to_string(e.kind);
}

// ─── Raster ───────────────────────────────────────────────────

class Raster {
public:
    explicit Raster(std::vector<std::uint8_t>& px) : px_(px) {
        px_.assign(static_cast<std::size_t>(kImageSize * kImageSize), 0);
    }

    void plot(int x, int y, std::uint8_t v) {
        if (x >= 0 && x < kImageSize && y >= 0 && y < kImageSize) {
            px_[static_cast<std::size_t>(y * kImageSize + x)] = v;
        }
    }

    void disk(double cx, double cy, double r, std::uint8_t v) {
        const int x0 = static_cast<int>(std::floor(cx - r));
        const int x1 = static_cast<int>(std::ceil(cx + r));
        const int y0 = static_cast<int>(std::floor(cy - r));
        const int y1 = static_cast<int>(std::ceil(cy + r));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
                    plot(x, y, v);
                }
            }
        }
    }

    void ring(double cx, double cy, double r, std::uint8_t v) {
        const int n = std::max(16, static_cast<int>(8 * r));
        for (int i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * i / n;
            plot(static_cast<int>(std::lround(cx + r * std::cos(a))),
                 static_cast<int>(std::lround(cy + r * std::sin(a))), v);
        }
    }

    void line(double x0, double y0, double x1, double y1, std::uint8_t v) {
        const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
        for (int i = 0; i <= n; ++i) {
            const double t = static_cast<double>(i) / n;
            plot(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                 static_cast<int>(std::lround(y0 + t * (y1 - y0))), v);
        }
    }

    void rect(double cx, double cy, double hw, double hh, std::uint8_t v) {
        for (int y = static_cast<int>(std::floor(cy - hh)); y <= static_cast<int>(std::ceil(cy + hh)); ++y) {
            for (int x = static_cast<int>(std::floor(cx - hw)); x <= static_cast<int>(std::ceil(cx + hw)); ++x) {
                plot(x, y, v);
            }
        }
    }

private:
    std::vector<std::uint8_t>& px_;
};

void draw(const World& w, const Entity& e, const std::string& kind, Raster& r) {
    const double scale = w.layout.camera_span_m / kImageSize;  // meters per pixel
    const double cx = kImageSize / 2.0 + (e.position.x() - w.pose.x()) / scale;
    const double cy = kImageSize / 2.0 - (e.position.y() - w.pose.y()) / scale;
    switch (e.kind) {
        case EntityKind::FireSource:
            r.disk(cx, cy, kind == "fire" ? 3.0 : 5.0, kind == "fire" ? 250 : 120);
            break;
        case EntityKind::TrappedGroup: r.disk(cx, cy, 2.0, 200); break;
        case EntityKind::Firefighter: r.disk(cx, cy, 2.0, 160); break;
        case EntityKind::Helipad:
            r.ring(cx, cy, std::max(1.0, e.radius / scale), 90);
            r.disk(cx, cy, 0.5, 255);
            break;
        case EntityKind::Turbine: {
            r.disk(cx, cy, 1.0, 220);
            for (int k = 0; k < 3; ++k) {
                const double a = (e.blade_phase_deg + 120.0 * k) * std::numbers::pi / 180.0;
                r.line(cx, cy, cx + 6.0 * std::cos(a), cy - 6.0 * std::sin(a), 220);
            }
            break;
        }
        case EntityKind::Building:
            r.rect(cx, cy, e.width / scale / 2.0, e.depth / scale / 2.0, 60);
            break;
        case EntityKind::Obstacle: r.disk(cx, cy, 1.0, 40); break;
    }
}

}  // namespace

Observation observe(const World& w) {
    Observation o;
    o.tick = w.tick;
    o.pose = w.pose;
    auto& f = o.scene.fields;
    f["scenario"] = to_string(w.id());
    f["tick"] = std::to_string(w.tick);
    f["drone.x"] = format_number(w.pose.x());
    f["drone.y"] = format_number(w.pose.y());
    f["drone.z"] = format_number(w.pose.z());

    Raster raster(o.image);
    std::string ids;
    for (const auto& e : w.entities) {
        if (!visible(w, e)) {
            continue;
        }
        ids += (ids.empty() ? "" : ",") + e.id;
        const auto kind = scene_kind(w, e);
        const std::string p = "e." + e.id + ".";
        double d = horizontal_distance(w.pose, e.position);
        if (w.observation_noise) {
            std::seed_seq seq{w.rng_seed, static_cast<std::uint64_t>(w.tick),
                              std::hash<std::string>{}(e.id)};
            std::mt19937_64 rng(seq);
            d = std::max(0.0, d + std::uniform_real_distribution<double>(-0.5, 0.5)(rng));
        }
        const Eigen::Vector3d rel = e.position - w.pose;
        const double bearing = std::atan2(rel.y(), rel.x()) * 180.0 / std::numbers::pi;
        f[p + "kind"] = kind;
        f[p + "x"] = format_number(e.position.x());
        f[p + "y"] = format_number(e.position.y());
        f[p + "z"] = format_number(e.position.z());
        f[p + "distance"] = format_number(round_to(d, 0.01));
        f[p + "bearing"] = format_number(round_to(bearing, 0.1));
        switch (e.kind) {
            case EntityKind::TrappedGroup: f[p + "size"] = std::to_string(e.size); break;
            case EntityKind::Helipad: f[p + "radius"] = format_number(e.radius); break;
            case EntityKind::Turbine:
                f[p + "side"] = e.side;
                f[p + "blade_phase"] = format_number(e.blade_phase_deg);
                break;
            case EntityKind::Building:
                f[p + "width"] = format_number(e.width);
                f[p + "depth"] = format_number(e.depth);
                break;
            default: break;
        }
        draw(w, e, kind, raster);
    }
    f["entities"] = ids;
    return o;
}

// ─── Scoring ──────────────────────────────────────────────────

double landing_reward(double d, double radius) {
    if (!(d >= 0.0) || d > radius) {
        return 0.0;
    }
    return 10.0 + 10.0 * (1.0 - d / radius);
}

double approach_reward(double d, double d0, double floor_m) {
    if (d0 <= floor_m) {
        return 10.0;
    }
    return 10.0 * std::clamp(1.0 - (d - floor_m) / (d0 - floor_m), 0.0, 1.0);
}

namespace {

inline constexpr double kWildfireItemCap = 16.0;

double capped(const World& w, std::string_view label, double points) {
    return std::clamp(kWildfireItemCap - w.ledger.total_of(label), 0.0, points);
}

/// Nearest visible trapped group satisfying pred, or nullptr.
template <typename Pred>
Entity* nearest_group(World& w, Pred pred) {
    Entity* best = nullptr;
    double best_d = 0.0;
    for (auto& e : w.entities) {
        if (e.kind != EntityKind::TrappedGroup || !visible(w, e) || !pred(e)) {
            continue;
        }
        const double d = horizontal_distance(w.pose, e.position);
        if (best == nullptr || d < best_d) {
            best = &e;
            best_d = d;
        }
    }
    return best;
}

double apply_move(World& w, const Eigen::Vector3d& to) {
    const auto limit = admissible_actions(w.id()).move_axis_limit;
    if (!to.allFinite()) {
        throw InvalidAction("move target is not finite");
    }
    if (to.z() < 0.0) {
        throw InvalidAction("move target below ground");
    }
    if (((to - w.pose).cwiseAbs().array() > limit + 1e-9).any()) {
        throw InvalidAction("move exceeds the per-step range of +-" + format_number(limit) + " m");
    }
    w.pose = to;
    double delta = 0.0;
    const bool on_ground = w.pose.z() <= 1e-9;
    if (!on_ground) {
        w.was_airborne = true;
    } else if (w.was_airborne && !w.touched_down) {
        w.touched_down = true;
        if (w.id() == ScenarioId::Landing) {
            for (const auto& e : w.entities) {
                if (e.kind != EntityKind::Helipad) {
                    continue;
                }
                const double d = horizontal_distance(w.pose, e.position);
                if (d <= e.radius) {
                    w.ledger.add("touchdown", 10.0, w.tick);
                    w.ledger.add("precision", 10.0 * (1.0 - d / e.radius), w.tick);
                    delta += 10.0 + 10.0 * (1.0 - d / e.radius);
                } else {
                    w.ledger.add("touchdown_outside", 0.0, w.tick);
                }
                break;
            }
        }
    }

    if (w.id() == ScenarioId::Wildfire) {
        if (const auto* fire = fire_of(w)) {
            const double credit = approach_reward(horizontal_distance(w.pose, fire->position),
                                                  w.start_distance, w.layout.approach_floor_m);
            if (credit > w.approach_credit) {
                const double gain = credit - w.approach_credit;
                w.approach_credit = credit;
                w.ledger.add("approach", gain, w.tick);
                delta += gain;
            }
        }
    } else if (w.id() == ScenarioId::SafeNav) {
        for (auto& e : w.entities) {
            if (e.kind != EntityKind::Building || e.entered) {
                continue;
            }
            const bool inside = std::abs(w.pose.x() - e.position.x()) <= e.width / 2.0 &&
                                std::abs(w.pose.y() - e.position.y()) <= e.depth / 2.0 &&
                                w.pose.z() < w.layout.entry_altitude_m;
            if (inside) {
                e.entered = true;
                w.ledger.add("entry:" + e.id, 10.0, w.tick);
                delta += 10.0;
            }
        }
    }
    return delta;
}

Eigen::Vector3d navigate_step(const World& w, Proximity proximity) {
    const auto* fire = fire_of(w);
    if (fire == nullptr) {
        throw InvalidAction("nothing to navigate to");
    }
    static constexpr double standoff[] = {2.0, 25.0, 60.0};
    Eigen::Vector3d away = w.pose - fire->position;
    away.z() = 0.0;
    if (away.norm() < 1e-9) {
        away = Eigen::Vector3d::UnitX();
    }
    Eigen::Vector3d goal = fire->position + away.normalized() * standoff[static_cast<int>(proximity)];
    goal.z() = w.pose.z();
    Eigen::Vector3d step = goal - w.pose;
    const double m = step.cwiseAbs().maxCoeff();
    if (m > kMoveAxisLimit) {
        step *= kMoveAxisLimit / m;
    }
    return w.pose + step;
}

}  // namespace

double apply_action(World& w, const ScoredAction& action) {
    const auto space = admissible_actions(w.id());
    const auto kind = kind_of(action);
    if (std::find(space.kinds.begin(), space.kinds.end(), kind) == space.kinds.end()) {
        throw InvalidAction(std::string(to_string(kind)) + " is not admissible in " +
                            to_string(w.id()));
    }
    const auto check_count = [&](int n) {
        if (n < space.min_count || n > space.max_count) {
            throw InvalidAction("count " + std::to_string(n) + " outside [" +
                                std::to_string(space.min_count) + ", " +
                                std::to_string(space.max_count) + "]");
        }
    };

    return std::visit(
        [&](const auto& a) -> double {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, Move>) {
                return apply_move(w, a.to);
            } else if constexpr (std::is_same_v<T, Navigate>) {
                return apply_move(w, navigate_step(w, a.proximity));
            } else if constexpr (std::is_same_v<T, ReportIgnition>) {
                auto* fire = const_cast<Entity*>(fire_of(w));
                if (fire == nullptr || fire->reported ||
                    horizontal_distance(w.pose, fire->position) >= w.layout.detail_range_m) {
                    return 0.0;
                }
                fire->reported = true;
                w.ledger.add("fire_report", 10.0, w.tick);
                return 10.0;
            } else if constexpr (std::is_same_v<T, ReportTrapped>) {
                check_count(a.count);
                if (auto* g = nearest_group(w, [&](const Entity& e) {
                        return !e.reported && e.size == a.count;
                    })) {
                    g->reported = true;
                    const double pts = capped(w, "trapped_report", 2.0 * a.count);
                    w.ledger.add("trapped_report:" + g->id, pts, w.tick);
                    return pts;
                }
                double penalty = 0.0;
                for (const auto& e : w.entities) {
                    if (e.kind == EntityKind::Firefighter && visible(w, e)) {
                        w.ledger.add("misidentification:" + e.id, -1.0, w.tick);
                        penalty -= 1.0;
                    }
                }
                return penalty;
            } else if constexpr (std::is_same_v<T, Communicate>) {
                if (auto* g = nearest_group(w, [](const Entity& e) { return !e.reassured; })) {
                    g->reassured = true;
                    const double pts = capped(w, "reassurance", 2.0 * g->size);
                    w.ledger.add("reassurance:" + g->id, pts, w.tick);
                    return pts;
                }
                return 0.0;
            } else if constexpr (std::is_same_v<T, DispatchKits>) {
                check_count(a.count);
                if (auto* g = nearest_group(
                        w, [](const Entity& e) { return e.kits_received < e.size; })) {
                    const int delivered = std::min(a.count, g->size - g->kits_received);
                    g->kits_received += delivered;
                    const double pts = capped(w, "kit_delivery", 2.0 * delivered);
                    w.ledger.add("kit_delivery:" + g->id, pts, w.tick);
                    return pts;
                }
                return 0.0;
            } else if constexpr (std::is_same_v<T, ActivateSensor>) {
                return 0.0;
            } else {
                if (w.report_submitted) {
                    return 0.0;
                }
                w.report_submitted = true;
                const double pts = std::clamp(w.judge(a.text, w.layout.fault), 0, 10);
                w.ledger.add("fault_report", pts, w.tick);
                return pts;
            }
        },
        action);
}

void advance(World& w) {
    ++w.tick;
    for (auto& e : w.entities) {
        if (e.kind == EntityKind::Turbine && e.rotating) {
            e.blade_phase_deg = std::fmod(e.blade_phase_deg + e.rotation_deg_per_tick, 360.0);
        }
    }
}

int match_score(std::string_view report, std::string_view fault) {
    static const std::vector<std::vector<std::string>> synonyms{
        {"stationary", "stopped", "ceases", "ceased", "stop", "stops", "halted", "motionless"},
        {"rotation", "rotating", "rotate", "rotates", "spinning", "turning"},
        {"turbine", "turbines"},
    };
    const auto slots = tokens(fault);
    if (slots.empty()) {
        return 0;
    }
    const auto words = tokens(report);
    const auto has = [&](const std::string& w) {
        return std::find(words.begin(), words.end(), w) != words.end();
    };
    int hits = 0;
    for (const auto& slot : slots) {
        bool hit = has(slot);
        for (const auto& group : synonyms) {
            if (!hit && std::find(group.begin(), group.end(), slot) != group.end()) {
                hit = std::any_of(group.begin(), group.end(), has);
            }
        }
        hits += hit ? 1 : 0;
    }
    return static_cast<int>(std::lround(10.0 * hits / static_cast<double>(slots.size())));
}

bool saturated(const World& w) {
    switch (w.id()) {
        case ScenarioId::Wildfire: {
            const auto* fire = fire_of(w);
            return w.approach_credit >= 10.0 - 1e-9 && fire != nullptr && fire->reported &&
                   w.ledger.total_of("trapped_report") >= kWildfireItemCap &&
                   w.ledger.total_of("reassurance") >= kWildfireItemCap &&
                   w.ledger.total_of("kit_delivery") >= kWildfireItemCap;
        }
        case ScenarioId::Landing: return w.touched_down;
        case ScenarioId::Inspection: return w.report_submitted;
        case ScenarioId::SafeNav:
            return std::all_of(w.entities.begin(), w.entities.end(), [](const Entity& e) {
                return e.kind != EntityKind::Building || e.entered;
            });
    }
    return false;
}

bool is_done(const World& w, int steps_taken, int max_steps) {
    return w.touched_down || saturated(w) || steps_taken >= max_steps;
}

std::optional<ScoredAction> classify_ground_report(ScenarioId id, std::string_view text) {
    if (id == ScenarioId::Inspection) {
        return SubmitReport{std::string(text)};
    }
    if (id != ScenarioId::Wildfire) {
        return std::nullopt;
    }
    static const std::vector<std::pair<std::string, int>> number_words{
        {"one", 1}, {"two", 2}, {"three", 3}, {"four", 4}, {"five", 5}};
    std::optional<int> count;
    bool people = false;
    bool fire = false;
    for (const auto& t : tokens(lower(text))) {
        if (!count && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
            count = t.size() > 6 ? 1000000 : std::stoi(t);
        }
        for (const auto& [word, n] : number_words) {
            if (!count && t == word) {
                count = n;
            }
        }
        people = people || t == "trapped" || t == "survivor" || t == "survivors" ||
                 t == "people" || t == "persons";
        fire = fire || t == "fire" || t == "ignition";
    }
    if (people && count) {
        return ReportTrapped{*count};
    }
    if (fire) {
        return ReportIgnition{};
    }
    return std::nullopt;
}

}  // namespace embodied::scenarios
