#include "embodied/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "embodied/actions.hpp"
#include "embodied/agent.hpp"
#include "embodied/bus.hpp"
#include "embodied/controller.hpp"
#include "embodied/memory.hpp"
#include "embodied/roschain.hpp"

namespace embodied::harness {

using scenarios::ScenarioId;

const char* to_string(Backend backend) {
    switch (backend) {
        case Backend::ScriptedFull: return "scripted_full";
        case Backend::ScriptedNoRoschain: return "scripted_no_roschain";
        case Backend::SingleCall: return "single_call";
        case Backend::RandomBaseline: return "random_baseline";
        case Backend::External: return "external";
    }
    return "?";
}

Backend parse_backend(std::string_view name) {
    for (auto b : {Backend::ScriptedFull, Backend::ScriptedNoRoschain, Backend::SingleCall,
                   Backend::RandomBaseline, Backend::External}) {
        if (name == to_string(b)) {
            return b;
        }
    }
    throw ConfigError("unknown backend '" + std::string(name) + "'");
}

const std::vector<Backend>& offline_backends() {
    static const std::vector<Backend> all{Backend::ScriptedFull, Backend::ScriptedNoRoschain,
                                          Backend::SingleCall, Backend::RandomBaseline};
    return all;
}

void RunConfig::validate() const {
    if (max_steps < 1) {
        throw ConfigError("max_steps must be at least 1");
    }
    if (!(tick_dt > 0.0) || !std::isfinite(tick_dt)) {
        throw ConfigError("tick_dt must be positive");
    }
    if (!(malformed_probability >= 0.0 && malformed_probability <= 1.0)) {
        throw ConfigError("malformed_probability must lie in [0, 1]");
    }
}

std::string format_one_decimal(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", value);
    std::string s(buf);
    return s == "-0.0" ? "0.0" : s;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ─── Simulated nodes ──────────────────────────────────────────

namespace {

/// Serves the vehicle state on estimator/pose.
class EstimatorNode {
public:
    EstimatorNode(bus::Bus& bus, const controller::ControllerNode& ctl) {
        auto h = bus.register_node("Estimator");
        bus.advertise_service(h, "estimator/pose", [&ctl](const bus::Payload&) -> bus::Payload {
            return controller::to_structured(ctl.state());
        });
    }
};

/// Loudspeaker, manipulator and ground-report sink. Decodes what arrives
/// into scored actions for the world.
class ActuatorNode {
public:
    ActuatorNode(bus::Bus& bus, ScenarioId scenario, std::vector<scenarios::ScoredAction>& events)
        : scenario_(scenario), events_(&events) {
        auto h = bus.register_node("Actuator");
        const auto& reg = roschain::CommandRegistry::shipped();
        for (const std::string& topic :
             {roschain::command_topic("Loudspeaker"), roschain::command_topic("Manipulator"),
              std::string(roschain::kGroundReportTopic)}) {
            bus.subscribe(h, topic, [this, &reg](const bus::Envelope& env) {
                const auto* text = std::get_if<bus::Text>(&env.payload);
                if (text == nullptr) {
                    return;
                }
                on_command(reg.decode(text->value));
            });
        }
    }

private:
    void on_command(const roschain::Command& cmd) {
        const auto& op = cmd.operation().name;
        if (op == "Loudspeaker") {
            if (cmd.text("channel") == roschain::kGroundChannel) {
                if (auto a = scenarios::classify_ground_report(scenario_, cmd.text("message_text"))) {
                    events_->push_back(*a);
                }
            } else {
                events_->push_back(scenarios::Communicate{});
            }
        } else if (op == "Manipulator") {
            events_->push_back(
                scenarios::DispatchKits{static_cast<int>(std::lround(cmd.number("payload_index")))});
        }
    }

    ScenarioId scenario_;
    std::vector<scenarios::ScoredAction>* events_;
};

/// Serves observe/<sensor> for each sensor payload carried.
class SensorNode {
public:
    SensorNode(bus::Bus& bus, const scenarios::World& world,
               std::vector<scenarios::ScoredAction>& events) {
        auto h = bus.register_node("Sensor");
        for (const auto& tag : world.layout.payloads) {
            if (tag != "depth_camera" && tag != "downward_camera" && tag != "infrared_camera" &&
                tag != "lidar") {
                continue;
            }
            bus.advertise_service(h, "observe/" + tag,
                                  [tag, &world, &events](const bus::Payload&) -> bus::Payload {
                                      events.push_back(scenarios::ActivateSensor{tag});
                                      return read(tag, world);
                                  });
        }
    }

private:
    static bus::Payload read(const std::string& tag, const scenarios::World& world) {
        const auto obs = scenarios::observe(world);
        if (tag == "downward_camera") {
            return bus::Blob{obs.image};
        }
        const auto& scene = obs.scene.fields;
        bus::Structured out;
        out.fields["sensor"] = tag;
        out.fields["tick"] = std::to_string(world.tick);
        const auto view = agent::parse_scene(scene);
        if (tag == "lidar") {
            const agent::SceneEntity* nearest = nullptr;
            for (const auto& e : view.entities) {
                if (nearest == nullptr || e.distance < nearest->distance) {
                    nearest = &e;
                }
            }
            out.fields["nearest.id"] = nearest ? nearest->id : "none";
            out.fields["nearest.range"] =
                nearest ? roschain::format_number(nearest->distance) : "inf";
            return out;
        }
        for (const auto& e : view.entities) {
            if (tag == "depth_camera") {
                out.fields["e." + e.id + ".distance"] = roschain::format_number(e.distance);
            } else if (e.kind == "fire" || e.kind == "smoke") {
                out.fields["e." + e.id + ".heat"] = "high";
            } else if (e.kind == "trapped_group" || e.kind == "firefighter") {
                out.fields["e." + e.id + ".heat"] = "body";
            }
        }
        return out;
    }
};

/// Publishes the rendered image and structured scene each step.
class CameraNode {
public:
    explicit CameraNode(bus::Bus& bus) : bus_(&bus), handle_(bus.register_node("Camera")) {}

    void publish(const scenarios::Observation& obs, bool from_thread) {
        auto send = [this, &obs] {
            bus_->publish(handle_, agent::kImageTopic, bus::Blob{obs.image});
            bus_->publish(handle_, agent::kSceneTopic, obs.scene);
        };
        if (from_thread) {
            std::thread(send).join();
        } else {
            send();
        }
    }

private:
    bus::Bus* bus_;
    bus::NodeHandle handle_;
};

std::unique_ptr<agent::ReasonerBackend> make_backend(const RunConfig& c) {
    switch (c.backend) {
        case Backend::ScriptedFull:
        case Backend::ScriptedNoRoschain:
            return std::make_unique<agent::ScriptedBackend>(c.scenario);
        case Backend::SingleCall:
            return std::make_unique<agent::SingleCallBackend>(
                std::make_unique<agent::ScriptedBackend>(c.scenario));
        case Backend::RandomBaseline:
            return std::make_unique<agent::RandomBackend>(c.seed);
        case Backend::External:
            return agent::ExternalBackend::from_environment();
    }
    throw ConfigError("unknown backend");
}

std::vector<std::string> merged_keywords(const scenarios::Layout& layout) {
    auto kw = memory::default_salience_keywords();
    for (const auto& k : layout.keywords) {
        if (std::find(kw.begin(), kw.end(), k) == kw.end()) {
            kw.push_back(k);
        }
    }
    return kw;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
}

}  // namespace

// ─── Run ──────────────────────────────────────────────────────

RunReport run(const RunConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();

    auto world = scenarios::reset(config.scenario, config.seed);
    const auto& layout = world.layout;

    bus::Bus bus(config.concurrent ? bus::Mode::Concurrent : bus::Mode::Deterministic);
    bus.enable_trace(true);

    std::vector<scenarios::ScoredAction> events;
    auto start = layout.start;
    // One controller tick, touchdown snap included, stays inside the per-axis step limit.
    start.max_speed = (scenarios::kMoveAxisLimit - controller::kArrivalEpsilon) / config.tick_dt;

    auto backend = make_backend(config);
    const auto keywords = merged_keywords(layout);
    memory::MemoryDb db(memory::keyword_salience(keywords));
    for (const auto& r : config.initial_memory) {
        db.insert_episodic(r);
    }
    const auto& library = actions::shipped_library();

    agent::AgentConfig ac;
    ac.task = layout.task;
    ac.payloads = actions::PayloadConfiguration(layout.payloads.begin(), layout.payloads.end());
    ac.query_keywords = keywords;
    ac.fault_seed = config.seed;
    ac.malformed_probability =
        config.backend == Backend::ScriptedNoRoschain ? config.malformed_probability : 0.0;

    // Registration order fixes delivery order.
    agent::Agent agent(bus, db, library, *backend, ac);
    controller::ControllerNode controller(bus, start);
    EstimatorNode estimator(bus, controller);
    ActuatorNode actuator(bus, config.scenario, events);
    SensorNode sensor(bus, world, events);
    CameraNode camera(bus);
    controller.publish_state();

    RunReport report;
    report.config = config;
    int steps = 0;
    while (!scenarios::is_done(world, steps, config.max_steps)) {
        bus.set_time(world.tick);
        const double before = world.ledger.raw_total();

        camera.publish(scenarios::observe(world), config.concurrent);
        bus.spin_once();
        const auto outcome = agent.step();
        ++steps;
        bus.spin_once();

        TrajectoryPoint point;
        point.step = steps;
        point.action = outcome.action;
        point.outcome = memory::to_string(outcome.outcome.kind);
        // Payload actions act where the vehicle is before this tick's motion.
        for (const auto& ev : events) {
            point.events.push_back(scenarios::describe(ev));
            try {
                scenarios::apply_action(world, ev);
            } catch (const scenarios::InvalidAction& e) {
                point.events.back() += " rejected: " + std::string(e.what());
            }
        }
        events.clear();

        controller.tick(config.tick_dt);
        scenarios::apply_action(world, scenarios::Move{controller.state().pose});
        scenarios::advance(world);

        point.pose = world.pose;
        point.reward_delta = world.ledger.raw_total() - before;
        point.cumulative_normalized = world.ledger.normalized();
        report.trajectory.push_back(std::move(point));
    }
    bus.spin_once();

    report.step_count = steps;
    report.ledger = world.ledger;
    report.tr = world.ledger.normalized();
    report.ar = steps > 0 ? report.tr / steps : 0.0;
    report.command_trace = agent.command_trace();
    std::string joined;
    for (const auto& c : report.command_trace) {
        joined += c;
        joined += '\n';
    }
    report.command_digest = fnv1a_hex(joined);
    report.bus_trace = bus.trace_jsonl();
    report.memory_dump = db.dump_jsonl();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (!config.out_dir.empty()) {
        write_outputs(report, config.out_dir);
    }
    return report;
}

RunReport ablation_no_roschain(RunConfig config) {
    config.backend = Backend::ScriptedNoRoschain;
    return run(config);
}

// ─── Outputs ──────────────────────────────────────────────────

std::string RunReport::to_json() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenarios::to_string(config.scenario);
    j["backend"] = to_string(config.backend);
    j["seed"] = config.seed;
    j["max_steps"] = config.max_steps;
    j["tick_dt"] = config.tick_dt;
    j["concurrent"] = config.concurrent;
    j["tr"] = tr;
    j["ar"] = ar;
    j["steps"] = step_count;
    j["raw_total"] = ledger.raw_total();
    j["raw_max"] = ledger.raw_max();
    j["command_digest"] = command_digest;
    j["commands"] = command_trace.size();
    return j.dump(2) + "\n";
}

std::string emit_trajectory(const RunReport& report) {
    std::string out;
    for (const auto& p : report.trajectory) {
        nlohmann::ordered_json j;
        j["step"] = p.step;
        j["pose"] = {p.pose.x(), p.pose.y(), p.pose.z()};
        j["action"] = p.action;
        j["outcome"] = p.outcome;
        j["events"] = p.events;
        j["reward_delta"] = p.reward_delta;
        j["cumulative_normalized"] = p.cumulative_normalized;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void emit_trajectory(const RunReport& report, const std::filesystem::path& path) {
    write_file(path, emit_trajectory(report));
}

void write_outputs(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", report.to_json());
    write_file(dir / "ledger.csv", report.ledger.to_csv());
    write_file(dir / "ledger.json", report.ledger.to_json());
    write_file(dir / "trajectory.jsonl", emit_trajectory(report));
    write_file(dir / "bus_trace.jsonl", report.bus_trace);
    write_file(dir / "memory.jsonl", report.memory_dump);
    std::string commands;
    for (const auto& c : report.command_trace) {
        commands += c;
        commands += '\n';
    }
    write_file(dir / "commands.txt", commands);
}

// ─── Comparison ───────────────────────────────────────────────

Comparison compare(const std::vector<RunConfig>& configs) {
    Comparison out;
    for (const auto& c : configs) {
        auto copy = c;
        copy.out_dir.clear();
        const auto r = run(copy);
        out.cells.push_back({c.backend, c.scenario, r.tr, r.ar, r.step_count});
    }
    return out;
}

std::vector<RunConfig> all_configs(std::uint64_t seed, int max_steps) {
    std::vector<RunConfig> out;
    for (auto b : offline_backends()) {
        for (auto s : scenarios::all_scenarios()) {
            RunConfig c;
            c.backend = b;
            c.scenario = s;
            c.seed = seed;
            c.max_steps = max_steps;
            out.push_back(c);
        }
    }
    return out;
}

std::string Comparison::to_csv() const {
    std::vector<Backend> rows;
    std::vector<ScenarioId> cols;
    for (const auto& c : cells) {
        if (std::find(rows.begin(), rows.end(), c.backend) == rows.end()) rows.push_back(c.backend);
        if (std::find(cols.begin(), cols.end(), c.scenario) == cols.end()) cols.push_back(c.scenario);
    }
    std::string out = "backend";
    for (auto s : cols) {
        out += std::string(",") + scenarios::to_string(s) + "_tr," + scenarios::to_string(s) + "_ar";
    }
    out += '\n';
    for (auto b : rows) {
        out += to_string(b);
        for (auto s : cols) {
            const auto it = std::find_if(cells.begin(), cells.end(), [&](const ComparisonCell& c) {
                return c.backend == b && c.scenario == s;
            });
            if (it == cells.end()) {
                out += ",,";
            } else {
                out += "," + format_one_decimal(it->tr) + "," + format_one_decimal(it->ar);
            }
        }
        out += '\n';
    }
    return out;
}

std::string Comparison::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& c : cells) {
        nlohmann::ordered_json row;
        row["backend"] = to_string(c.backend);
        row["scenario"] = scenarios::to_string(c.scenario);
        row["tr"] = format_one_decimal(c.tr);
        row["ar"] = format_one_decimal(c.ar);
        row["steps"] = c.steps;
        j.push_back(row);
    }
    return j.dump(2) + "\n";
}

}  // namespace embodied::harness
