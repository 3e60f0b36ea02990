#include <doctest.h>

#include "embodied/agent.hpp"
#include "embodied/controller.hpp"

using namespace embodied;
using namespace embodied::agent;

namespace {

roschain::Perception scene_perception(std::map<std::string, std::string> fields, std::int64_t tick = 0) {
    return {kSceneTopic, bus::PayloadTag::Structured,
            roschain::canonical_text(bus::Structured{std::move(fields)}), tick};
}

roschain::Perception pose_perception(const std::string& mode, double z) {
    controller::VehicleState s;
    s.arm_state = controller::ArmState::Armed;
    s.flight_mode = *controller::parse_flight_mode(mode);
    s.pose = {0, 0, z};
    return {controller::kPoseTopic, bus::PayloadTag::Structured,
            roschain::canonical_text(controller::to_structured(s)), 0};
}

std::map<std::string, std::string> fire_scene() {
    return {{"scenario", "wildfire"}, {"tick", "3"},       {"drone.x", "0"},
            {"drone.y", "0"},         {"drone.z", "10"},   {"entities", "fire"},
            {"e.fire.kind", "smoke"}, {"e.fire.x", "100"}, {"e.fire.y", "0"},
            {"e.fire.z", "0"},        {"e.fire.distance", "100"}, {"e.fire.bearing", "0"}};
}

ContextInputs inputs_for(std::vector<roschain::Perception> obs) {
    ContextInputs in;
    in.task = "Locate the fire and any trapped survivors";
    in.library = &actions::shipped_library();
    in.payloads = {"loudspeaker", "manipulator"};
    in.observations = std::move(obs);
    in.query_keywords = memory::default_salience_keywords();
    return in;
}

class FixedBackend : public ReasonerBackend {
public:
    explicit FixedBackend(Plan plan) : plan_(std::move(plan)) {}
    Plan generate(const AgentContext&) override { return plan_; }
    BackendIdentity identity() const override { return {BackendIdentity::Kind::Scripted, "fixed"}; }

private:
    Plan plan_;
};

class ThrowingBackend : public ReasonerBackend {
public:
    Plan generate(const AgentContext&) override { throw BackendUnavailable("offline"); }
    BackendIdentity identity() const override { return {BackendIdentity::Kind::External, "none"}; }
};

/// Minimal world around one agent: controller, pose estimator, a static camera.
struct Rig {
    bus::Bus bus;
    memory::MemoryDb db;
    std::unique_ptr<Agent> agent;
    std::unique_ptr<controller::ControllerNode> ctl;
    bus::NodeHandle camera;

    Rig(ReasonerBackend& backend, controller::VehicleState start) {
        AgentConfig config;
        config.task = "Land on the helipad";
        config.payloads = {};
        agent = std::make_unique<Agent>(bus, db, actions::shipped_library(), backend, config);
        ctl = std::make_unique<controller::ControllerNode>(bus, start);
        auto est = bus.register_node("Estimator");
        bus.advertise_service(est, "estimator/pose", [this](const bus::Payload&) -> bus::Payload {
            return controller::to_structured(ctl->state());
        });
        camera = bus.register_node("Camera");
        ctl->publish_state();
    }

    StepOutcome step(const std::map<std::string, std::string>& scene) {
        bus.publish(camera, kSceneTopic, bus::Structured{scene});
        bus.spin_once();
        auto out = agent->step();
        bus.spin_once();
        ctl->tick(1.0);
        return out;
    }
};

controller::VehicleState hovering() {
    controller::VehicleState s;
    s.arm_state = controller::ArmState::Armed;
    s.flight_mode = controller::FlightMode::Hovering;
    s.pose = {0, 0, 10};
    return s;
}

}  // namespace

TEST_SUITE("agent") {

TEST_CASE("fresh context has five sections and empty memory") {
    memory::MemoryDb db;
    const auto ctx = build_context(inputs_for({scene_perception(fire_scene())}), db);
    const auto s = ctx.sections();
    CHECK(s[0] == default_prompt_template());
    CHECK(s[1].find("trapped survivors") != std::string::npos);
    CHECK(s[2].find("broadcastReassurance") != std::string::npos);
    CHECK(s[3].find("e.fire.kind=smoke") != std::string::npos);
    CHECK(s[4].find("retrieved memories") != std::string::npos);
    CHECK(ctx.retrieved.records.empty());
    const auto text = ctx.serialize();
    for (int i = 1; i <= 5; ++i) {
        CHECK(text.find("=== (" + std::to_string(i) + ") ===") != std::string::npos);
    }
    CHECK(text.find("=== (1)") < text.find("=== (5)"));
}

TEST_CASE("retrieved records appear in section five") {
    memory::MemoryDb db;
    db.reflect({"", "x=1\n"}, "fire report relayed near ridge", 2);
    const auto ctx = build_context(inputs_for({}), db);
    CHECK(ctx.sections()[4].find("fire report relayed near ridge") != std::string::npos);
}

TEST_CASE("context serialization is deterministic") {
    memory::MemoryDb db;
    db.reflect({"AAEC", "x=1\n"}, "smoke to the east", 1);
    const auto in = inputs_for({scene_perception(fire_scene()), pose_perception("Hovering", 10)});
    CHECK(build_context(in, db).serialize() == build_context(in, db).serialize());
}

TEST_CASE("memory query keeps task keywords") {
    CHECK(memory_query("Find the Fire and trapped people", memory::default_salience_keywords()) ==
          "fire trapped");
    CHECK(memory_query("go north", memory::default_salience_keywords()) == "go north");
}

TEST_CASE("plan validation names the offending action") {
    Plan p;
    p.steps.push_back({"teleport", {}, "", ""});
    try {
        validate_plan(p, actions::shipped_library().lookup({}));
        FAIL("expected PlanValidationError");
    } catch (const PlanValidationError& e) {
        CHECK(e.offending() == "teleport");
    }
    Plan drop;
    drop.steps.push_back({"dropEmergencyKit", {{"count", 1.0}}, "", ""});
    CHECK_THROWS_AS(validate_plan(drop, actions::shipped_library().lookup({"loudspeaker"})),
                    PlanValidationError);
}

TEST_CASE("a fire cue produces approach and report steps") {
    memory::MemoryDb db;
    ScriptedBackend backend(scenarios::ScenarioId::Wildfire);
    const auto ctx = build_context(
        inputs_for({pose_perception("Hovering", 10), scene_perception(fire_scene())}), db);
    const auto plan = backend.generate(ctx);
    REQUIRE(plan.steps.size() == 2);
    CHECK(plan.steps[0].action == "moveToPosition");
    CHECK(std::get<double>(plan.steps[0].args.at("x")) == doctest::Approx(98.0));
    CHECK(plan.steps[1].action == "reportToCommand");
    CHECK(plan.contingency.has_value());
}

TEST_CASE("scripted backends are pure functions of the context") {
    memory::MemoryDb db;
    const auto ctx = build_context(
        inputs_for({pose_perception("Hovering", 10), scene_perception(fire_scene())}), db);
    for (auto id : scenarios::all_scenarios()) {
        ScriptedBackend a(id), b(id);
        const auto p = a.generate(ctx);
        const auto q = b.generate(ctx);
        REQUIRE(p.steps.size() == q.steps.size());
        for (std::size_t i = 0; i < p.steps.size(); ++i) {
            CHECK(p.steps[i].action == q.steps[i].action);
            CHECK(p.steps[i].args == q.steps[i].args);
        }
    }
}

TEST_CASE("single call sees no memory, notes or contingency") {
    struct Spy : ReasonerBackend {
        AgentContext seen;
        Plan generate(const AgentContext& c) override {
            seen = c;
            return {};
        }
        BackendIdentity identity() const override { return {}; }
    };
    auto spy = std::make_unique<Spy>();
    auto* raw = spy.get();
    SingleCallBackend single(std::move(spy));
    memory::MemoryDb db;
    db.reflect({"", ""}, "fire f1", 0);
    auto in = inputs_for({});
    in.mission_notes = "fire=reported";
    in.contingency = "climb";
    single.generate(build_context(in, db));
    CHECK(raw->seen.retrieved.records.empty());
    CHECK(raw->seen.recent_operations.empty());
    CHECK(raw->seen.mission_notes.empty());
    CHECK(raw->seen.contingency.empty());
    CHECK(single.identity().kind == BackendIdentity::Kind::SingleCall);
}

TEST_CASE("replan trigger ignores geometry") {
    auto a = fire_scene();
    auto b = a;
    b["e.fire.distance"] = "50";
    b["drone.x"] = "50";
    CHECK_FALSE(replan_trigger(a, b));
    b["e.fire.kind"] = "fire";
    CHECK(replan_trigger(a, b));
    auto c = a;
    c["entities"] = "fire,g1";
    CHECK(replan_trigger(a, c));
}

TEST_CASE("narration and notes") {
    auto s = fire_scene();
    s["entities"] = "fire,g1";
    s["e.g1.kind"] = "trapped_group";
    s["e.g1.size"] = "2";
    CHECK(narrate(s) == "smoke fire; trapped group g1 (2 people)");
    CHECK(parse_notes("b=2;a=1") == std::map<std::string, std::string>{{"a", "1"}, {"b", "2"}});
    CHECK(format_notes({{"b", "2"}, {"a", "1"}}) == "a=1;b=2");
}

TEST_CASE("standby on an unchanged scene holds with Idle") {
    ScriptedBackend backend(scenarios::ScenarioId::Landing);
    Rig rig(backend, hovering());
    const std::map<std::string, std::string> empty{{"tick", "0"}, {"drone.x", "0"}, {"drone.y", "0"},
                                                   {"drone.z", "10"}, {"entities", ""}};
    for (int i = 0; i < 3; ++i) {
        const auto out = rig.step(empty);
        CHECK(out.action == "holdAndMonitor");
        REQUIRE(out.command.has_value());
        CHECK(out.command->operation().name == "Idle");
    }
    CHECK(rig.ctl->state().pose == Eigen::Vector3d(0, 0, 10));
}

TEST_CASE("unknown actions and backend failures still count as steps") {
    Plan bad;
    bad.steps.push_back({"teleport", {}, "", ""});
    FixedBackend fixed(bad);
    Rig rig(fixed, hovering());
    ThrowingBackend offline;
    Rig rig2(offline, hovering());
    for (int i = 1; i <= 4; ++i) {
        const auto a = rig.step({});
        CHECK(a.outcome.kind == memory::Outcome::Kind::Rejected);
        CHECK(a.action == "teleport");
        const auto b = rig2.step({});
        CHECK(b.outcome.kind == memory::Outcome::Kind::Rejected);
        CHECK(rig.agent->steps() == i);
        CHECK(rig2.agent->steps() == i);
    }
    CHECK(rig.db.operation_count() == 4);
}

TEST_CASE("missing sensors reject the step") {
    Plan look;
    look.steps.push_back({"activeObserve", {{"sensor", std::string("lidar")}}, "", ""});
    FixedBackend fixed(look);
    Rig rig(fixed, hovering());
    const auto out = rig.step({});
    CHECK(out.outcome.kind == memory::Outcome::Kind::Rejected);
    CHECK(rig.agent->steps() == 1);
}

TEST_CASE("landing plan settles before the next step") {
    ScriptedBackend backend(scenarios::ScenarioId::Landing);
    controller::VehicleState start = hovering();
    start.pose = {3, 4, 5};
    Rig rig(backend, start);
    std::map<std::string, std::string> scene{{"tick", "0"},          {"drone.x", "3"},
                                             {"drone.y", "4"},       {"drone.z", "5"},
                                             {"entities", "pad"},    {"e.pad.kind", "helipad"},
                                             {"e.pad.x", "0"},       {"e.pad.y", "0"},
                                             {"e.pad.z", "0"},       {"e.pad.radius", "5"},
                                             {"e.pad.distance", "5"}, {"e.pad.bearing", "233.1"}};
    std::vector<std::string> actions;
    for (int i = 0; i < 6 && rig.ctl->state().flight_mode != controller::FlightMode::OnGround; ++i) {
        const auto& p = rig.ctl->state().pose;
        scene["drone.x"] = roschain::format_number(p.x());
        scene["drone.y"] = roschain::format_number(p.y());
        scene["drone.z"] = roschain::format_number(p.z());
        actions.push_back(rig.step(scene).action);
    }
    CHECK(actions == std::vector<std::string>{"moveToPosition", "land"});
    CHECK(rig.ctl->state().pose.isZero());
    // Every traced command decodes through the registry.
    for (const auto& wire : rig.agent->command_trace()) {
        CHECK_NOTHROW(roschain::CommandRegistry::shipped().decode(wire));
    }
}

TEST_CASE("external backend wire format") {
    const auto plan = ExternalBackend::parse_response(R"({
        "summary": "fire ahead",
        "steps": [{"action": "land", "args": {}, "rationale": "done"},
                  {"action": "moveToPosition", "args": {"x": 1.5}, "rationale": "go"}],
        "contingency": "hold"})");
    REQUIRE(plan.steps.size() == 2);
    CHECK(std::get<double>(plan.steps[1].args.at("x")) == 1.5);
    CHECK(plan.contingency == "hold");
    CHECK_THROWS_AS(ExternalBackend::parse_response("not json"), BackendUnavailable);
    CHECK_THROWS_AS(ExternalBackend::parse_response(R"({"steps": 3})"), BackendUnavailable);
    memory::MemoryDb db;
    const auto body = ExternalBackend::request_body(build_context(inputs_for({}), db));
    CHECK(body.find("\"sections\"") != std::string::npos);
    ExternalBackend unreachable("http://127.0.0.1:9", std::chrono::milliseconds(200));
    CHECK_THROWS_AS(unreachable.generate(build_context(inputs_for({}), db)), BackendUnavailable);
}

TEST_CASE("random backend is seeded") {
    memory::MemoryDb db;
    auto in = inputs_for({});
    in.tick = 7;
    const auto ctx = build_context(in, db);
    RandomBackend a(3), b(3);
    const auto p = a.generate(ctx);
    const auto q = b.generate(ctx);
    REQUIRE(p.steps.size() == q.steps.size());
    for (std::size_t i = 0; i < p.steps.size(); ++i) {
        CHECK(p.steps[i].action == q.steps[i].action);
        CHECK(p.steps[i].args == q.steps[i].args);
    }
}

}
