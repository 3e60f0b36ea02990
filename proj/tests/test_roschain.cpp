#include <doctest.h>

#include <fstream>
#include <sstream>

#include "embodied/roschain.hpp"

using namespace embodied;
using namespace embodied::roschain;

namespace {

CommandConfig complete_config(const RegistryRow& row) {
    CommandConfig c;
    for (const auto& p : row.schema) {
        if (p.kind == ParamKind::Number) {
            c.set(p.name, 1.5);
        } else {
            c.set(p.name, std::string("value"));
        }
    }
    return c;
}

}  // namespace

TEST_SUITE("roschain") {

TEST_CASE("registry has the fourteen command rows") {
    const auto& reg = CommandRegistry::shipped();
    REQUIRE(reg.rows().size() == 14);
    int controller = 0, execution = 0, observe = 0;
    for (const auto& r : reg.rows()) {
        CHECK(r.publisher == "Agent");
        switch (r.operation.category) {
            case Category::ControllerCommand:
                ++controller;
                CHECK(r.target == "Controller");
                break;
            case Category::ExecutionCommand: ++execution; break;
            case Category::ActiveObserve:
                ++observe;
                CHECK(r.target != "Controller");
                break;
        }
    }
    CHECK(controller == 8);
    CHECK(execution == 2);
    CHECK(observe == 4);
    CHECK(reg.row("Down_Observe").target == "Downward Camera");
    CHECK(reg.row("Move_ENU").target == "Controller");
}

TEST_CASE("registry table matches the golden file") {
    std::ifstream in(std::string(EMBODIED_GOLDEN_DIR) + "/registry.txt");
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(CommandRegistry::shipped().dump_table() == ss.str());
}

TEST_CASE("translate examples") {
    const auto& reg = CommandRegistry::shipped();
    auto takeoff = reg.translate("Takeoff", CommandConfig{{"altitude_m", 10.0}});
    CHECK(takeoff.target() == "Controller");
    CHECK(takeoff.number("altitude_m") == 10.0);
    auto down = reg.translate("Down_Observe", {});
    CHECK(down.target() == "Downward Camera");
    CHECK_THROWS_AS(reg.translate("Teleport", {}), UnknownOperation);
    CHECK_THROWS_AS(reg.translate("Move_ENU", CommandConfig{{"x", 1.0}}), IncompleteConfig);
}

TEST_CASE("preinitialized parameters fill gaps") {
    const auto& reg = CommandRegistry::shipped();
    auto takeoff = reg.translate("Takeoff", {});
    CHECK(takeoff.number("altitude_m") == 10.0);
    CHECK(takeoff.parameters().at("altitude_m").source == ParamSource::Preinitialized);
    auto speaker = reg.translate("Loudspeaker", CommandConfig{{"message_text", std::string("hi")}});
    CHECK(speaker.text("channel") == "speaker");
    CHECK(speaker.topic() == "command/loudspeaker");
}

TEST_CASE("ground channel goes to the ground report topic") {
    const auto& reg = CommandRegistry::shipped();
    auto report = reg.translate("Loudspeaker", CommandConfig{{"channel", std::string("ground")},
                                                            {"message_text", std::string("fire")}});
    CHECK(report.topic() == kGroundReportTopic);
}

TEST_CASE("translation is total and deterministic") {
    const auto& reg = CommandRegistry::shipped();
    for (const auto& row : reg.rows()) {
        const auto config = complete_config(row);
        const auto a = reg.translate(row.operation.name, config);
        const auto b = reg.translate(row.operation.name, config);
        CHECK(a == b);
        CHECK(a.to_text() == b.to_text());
        CHECK(reg.decode(a.to_text()) == a);
        CHECK(a.target() == row.target);
    }
}

TEST_CASE("node slugs and topics") {
    CHECK(node_slug("Depth Camera") == "depth_camera");
    CHECK(command_topic("Controller") == "command/controller");
    CHECK(observe_service("Downward Camera") == "observe/downward_camera");
}

TEST_CASE("numbers format to their shortest round-trip form") {
    for (double v : {0.0, 1.0, -2.5, 0.1, 1e-7, 123456.789, 1.0 / 3.0}) {
        CHECK(parse_number(format_number(v)) == v);
    }
    CHECK(format_number(10.0) == "10");
}

TEST_CASE("perception wrapping") {
    bus::Envelope text{"t", bus::Text{"hello"}, "p", 1, 0};
    CHECK(wrap_message(text).text == "hello");
    bus::Envelope blob{"t", bus::Blob{{0, 1, 2}}, "p", 1, 0};
    CHECK(wrap_message(blob).text == "AAEC");
    CHECK(wrap_message(blob).source == bus::PayloadTag::Blob);
    bus::Structured s;
    s.fields = {{"b", "2"}, {"a", "1"}};
    const auto canon = canonical_text(s);
    CHECK(canon == "a=1\nb=2\n");
    CHECK(parse_canonical(canon) == s.fields);
    s.fields["bad\nkey"] = "x";
    CHECK_THROWS_AS(canonical_text(s), UnsupportedPayload);
}

TEST_CASE("active observation uses the sensor service") {
    bus::Bus bus;
    Roschain agent(bus, "Agent");
    auto sensor = bus.register_node("Sensor");
    int calls = 0;
    bus.advertise_service(sensor, "observe/depth_camera", [&](const bus::Payload&) -> bus::Payload {
        ++calls;
        return bus::Text{"depth frame"};
    });
    const auto p = agent.request_active_observation("Depth_Observe", {});
    CHECK(p.text == "depth frame");
    CHECK(calls == 1);
    CHECK_THROWS_AS(agent.request_active_observation("Lidar_Observe", {}), bus::Timeout);
    CHECK_THROWS_AS(agent.request_active_observation("Land", {}), CategoryMismatch);
}

TEST_CASE("published commands carry the wire form") {
    bus::Bus bus;
    Roschain agent(bus, "Agent");
    auto ctl = bus.register_node("Controller");
    std::vector<std::string> got;
    bus.subscribe(ctl, "command/controller",
                  [&](const bus::Envelope& e) { got.push_back(std::get<bus::Text>(e.payload).value); });
    const auto cmd = agent.translate("Land", {});
    agent.publish_command(cmd);
    bus.spin_once();
    REQUIRE(got.size() == 1);
    CHECK(agent.registry().decode(got[0]) == cmd);
}

}
