#include <doctest.h>

#include <algorithm>
#include <random>

#include "embodied/actions.hpp"

using namespace embodied;
using namespace embodied::actions;

namespace {

bool contains(const std::vector<const ActionFunction*>& list, std::string_view name) {
    return std::any_of(list.begin(), list.end(), [&](const ActionFunction* a) { return a->name == name; });
}

/// Environment whose estimator reports the given pose.
FlowEnvironment pose_env(double x, double y, double z) {
    FlowEnvironment env;
    env.call_service = [=](const std::string& service, const bus::Payload&) -> bus::Payload {
        if (service != "estimator/pose") {
            throw bus::Timeout(service);
        }
        bus::Structured s;
        s.fields = {{"x", roschain::format_number(x)},
                    {"y", roschain::format_number(y)},
                    {"z", roschain::format_number(z)},
                    {"mode", "Hovering"}};
        return s;
    };
    return env;
}

Arguments full_args(const ActionFunction& a) {
    Arguments args;
    for (const auto& arg : a.arguments) {
        if (arg.name == "sensor") {
            args[arg.name] = std::string("depth");
        } else if (arg.kind == roschain::ParamKind::Number) {
            args[arg.name] = 2.0;
        } else {
            args[arg.name] = std::string("hello");
        }
    }
    return args;
}

}  // namespace

TEST_SUITE("actions") {

TEST_CASE("shipped library contents") {
    const auto& lib = shipped_library();
    CHECK(lib.actions().size() == 10);
    for (const char* name : {"moveToPosition", "moveRelative", "takeoff", "land", "failsafeLand",
                             "broadcastReassurance", "dropEmergencyKit", "activeObserve",
                             "reportToCommand", "holdAndMonitor"}) {
        CHECK(lib.find(name) != nullptr);
    }
}

TEST_CASE("emitted operations exist in the registry") {
    const auto& reg = roschain::CommandRegistry::shipped();
    for (const auto& a : shipped_library().actions()) {
        const auto op = a.emitted_operation();
        if (!op.empty()) {
            CHECK(reg.find(op) != nullptr);
        }
    }
    for (const char* sensor : {"depth", "infrared", "lidar", "down"}) {
        const auto out = compute_functions().at("observe_operation")({Value{std::string(sensor)}});
        CHECK(reg.find(std::get<std::string>(out.at(0))) != nullptr);
    }
}

TEST_CASE("lookup subset rule") {
    const auto& lib = shipped_library();
    const auto speaker = lib.lookup({"loudspeaker"});
    CHECK(contains(speaker, "broadcastReassurance"));
    CHECK_FALSE(contains(speaker, "dropEmergencyKit"));
    CHECK(ActionLibrary{}.lookup(all_payload_tags()).empty());
    CHECK(lib.lookup(all_payload_tags()).size() == lib.actions().size());
}

TEST_CASE("lookup is monotone in the payload configuration") {
    std::mt19937_64 rng(17);
    const std::vector<std::string> tags(all_payload_tags().begin(), all_payload_tags().end());
    const auto& lib = shipped_library();
    for (int trial = 0; trial < 500; ++trial) {
        PayloadConfiguration small, large;
        for (const auto& t : tags) {
            const auto r = rng() % 3;
            if (r == 0) small.insert(t);
            if (r <= 1) large.insert(t);
        }
        for (const auto* a : lib.lookup(small)) {
            REQUIRE(contains(lib.lookup(large), a->name));
        }
    }
}

TEST_CASE("summary lists the admissible actions") {
    const auto s = shipped_library().summary({"loudspeaker"});
    CHECK(s.find("broadcastReassurance(text:text)") != std::string::npos);
    CHECK(s.find("dropEmergencyKit") == std::string::npos);
    CHECK(s.find("moveToPosition(x:number?, y:number?, z:number?)") != std::string::npos);
}

TEST_CASE("moveToPosition resolves three numbers through the pose service") {
    const auto& a = *shipped_library().find("moveToPosition");
    const auto r = execute_flow(a, {{"x", 4.0}, {"y", -2.0}, {"z", 12.0}}, pose_env(1, 1, 5));
    CHECK(r.command.operation().name == "Move_ENU");
    CHECK(r.command.number("x") == 4.0);
    CHECK(r.command.number("y") == -2.0);
    CHECK(r.command.number("z") == 12.0);
    const auto partial = execute_flow(a, {{"x", 4.0}}, pose_env(1, 7, 5));
    CHECK(partial.command.number("y") == 7.0);
    CHECK(partial.command.number("z") == 5.0);
}

TEST_CASE("plan-parameter actions") {
    const auto& lib = shipped_library();
    const auto speak = execute_flow(*lib.find("broadcastReassurance"), {{"text", std::string("stay calm")}}, {});
    CHECK(speak.command.operation().name == "Loudspeaker");
    CHECK(speak.command.text("message_text") == "stay calm");
    CHECK(speak.command.text("channel") == "speaker");
    const auto report = execute_flow(*lib.find("reportToCommand"), {{"text", std::string("fire")}}, {});
    CHECK(report.command.topic() == roschain::kGroundReportTopic);
    const auto kit = execute_flow(*lib.find("dropEmergencyKit"), {{"count", 2.0}}, {});
    CHECK(kit.command.number("payload_index") == 2.0);
    CHECK(kit.command.text("action_id") == "drop_kit");
    const auto up = execute_flow(*lib.find("takeoff"), {}, {});
    CHECK(up.command.number("altitude_m") == 10.0);
    const auto look = execute_flow(*lib.find("activeObserve"), {{"sensor", std::string("down")}}, {});
    CHECK(look.command.operation().name == "Down_Observe");
}

TEST_CASE("argument errors") {
    const auto& lib = shipped_library();
    CHECK_THROWS_AS(execute_flow(*lib.find("broadcastReassurance"), {}, {}), UnresolvedParameter);
    CHECK_THROWS_AS(execute_flow(*lib.find("land"), {{"speed", 1.0}}, {}), InvalidArgument);
    CHECK_THROWS_AS(execute_flow(*lib.find("activeObserve"), {{"sensor", std::string("sonar")}}, {}),
                    InvalidArgument);
}

TEST_CASE("missing estimator is a flow timeout") {
    FlowEnvironment env;
    env.call_service = [](const std::string& s, const bus::Payload&) -> bus::Payload {
        throw bus::Timeout(s);
    };
    CHECK_THROWS_AS(execute_flow(*shipped_library().find("moveToPosition"), {}, env), FlowServiceTimeout);
}

TEST_CASE("bus-backed environment") {
    bus::Bus bus;
    roschain::Roschain adapter(bus, "Agent");
    auto est = bus.register_node("Estimator");
    bus.advertise_service(est, "estimator/pose", [](const bus::Payload&) -> bus::Payload {
        return bus::Structured{{{"x", "3"}, {"y", "4"}, {"z", "5"}}};
    });
    const auto r = execute_flow(*shipped_library().find("moveToPosition"), {{"z", 9.0}},
                                bus_environment(adapter, 5));
    CHECK(r.command.number("x") == 3.0);
    CHECK(r.command.number("z") == 9.0);
}

TEST_CASE("compute over a missing binding is unresolved") {
    ActionFunction a;
    a.name = "broken";
    a.schema = {{"x", roschain::ParamKind::Number, ParamOrigin::Flow, std::nullopt}};
    a.flow = {Compute{"copy", {"nowhere"}, {"x"}}, EmitCommand{"Takeoff", {{"altitude_m", "$x"}}}};
    CHECK_THROWS_AS(execute_flow(a, {}, {}), UnresolvedParameter);
}

TEST_CASE("flows with random omissions raise instead of emitting") {
    std::mt19937_64 rng(4242);
    const auto& reg = roschain::CommandRegistry::shipped();
    int raised = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const auto& actions = shipped_library().actions();
        ActionFunction a = actions[rng() % actions.size()];
        Arguments args = full_args(a);
        bool omitted = false;
        // Drop one non-emit step.
        if (a.flow.size() > 1 && rng() % 2 == 0) {
            a.flow.erase(a.flow.begin() + static_cast<long>(rng() % (a.flow.size() - 1)));
            omitted = true;
        }
        // Drop one required argument.
        std::vector<std::string> required;
        for (const auto& arg : a.arguments) {
            if (arg.required) required.push_back(arg.name);
        }
        if (!required.empty() && rng() % 2 == 0) {
            args.erase(required[rng() % required.size()]);
            omitted = true;
        }
        try {
            const auto r = execute_flow(a, args, pose_env(0, 0, 10));
            REQUIRE_FALSE(omitted);
            for (const auto& p : reg.row(r.command.operation().name).schema) {
                REQUIRE(r.command.parameters().contains(p.name));
            }
        } catch (const ActionError&) {
            REQUIRE(omitted);
            ++raised;
        }
    }
    CHECK(raised > 0);
}

TEST_CASE("static validation") {
    ActionFunction a;
    a.name = "bad";
    a.flow = {EmitCommand{"Land", {}}, EmitCommand{"Land", {}}};
    CHECK_THROWS_AS(validate(a), LibraryError);
    a.flow = {EmitCommand{"Teleport", {}}};
    CHECK_THROWS_AS(validate(a), LibraryError);
    a.flow = {EmitCommand{"Land", {}}};
    a.schema = {{"x", roschain::ParamKind::Number, ParamOrigin::Plan, std::nullopt}};
    CHECK_THROWS_AS(validate(a), LibraryError);
    a.schema = {{"x", roschain::ParamKind::Number, ParamOrigin::Preinitialized, std::nullopt}};
    CHECK_THROWS_AS(validate(a), LibraryError);
}

TEST_CASE("declarative parser") {
    const auto lib = ActionLibrary::parse(R"(
# custom
action hover
describe Hold altitude.
emit Idle
end
)");
    REQUIRE(lib.actions().size() == 1);
    CHECK(lib.find("hover")->emitted_operation() == "Idle");
    CHECK_THROWS_AS(ActionLibrary::parse("action a\nfly now\nend\n"), LibraryError);
    CHECK_THROWS_AS(ActionLibrary::parse("action a\nemit Land\n"), LibraryError);
    CHECK_THROWS_AS(ActionLibrary::parse("action a\nemit Land\nend\naction a\nemit Land\nend\n"),
                    LibraryError);
}

}
