#include <doctest.h>

#include <algorithm>

#include "embodied/scenarios.hpp"
#include "oracles.hpp"

using namespace embodied;
using namespace embodied::scenarios;

namespace {

int count_kind(const World& w, EntityKind k) {
    return static_cast<int>(std::count_if(w.entities.begin(), w.entities.end(),
                                          [&](const Entity& e) { return e.kind == k; }));
}

/// Puts the drone at p without scoring the jump.
void teleport(World& w, Eigen::Vector3d p) {
    w.pose = p;
    if (p.z() > 0.0) w.was_airborne = true;
}

const std::string& field(const Observation& o, const std::string& key) { return o.scene.fields.at(key); }

}  // namespace

TEST_SUITE("scenarios") {

TEST_CASE("shipped layouts") {
    const auto fire = reset(ScenarioId::Wildfire, 0);
    std::vector<int> sizes;
    for (const auto& e : fire.entities) {
        if (e.kind == EntityKind::TrappedGroup) sizes.push_back(e.size);
    }
    CHECK(sizes == std::vector<int>{2, 1, 3, 2});
    CHECK(count_kind(fire, EntityKind::Firefighter) == 3);
    CHECK(count_kind(reset(ScenarioId::SafeNav, 0), EntityKind::Building) == 9);
    const auto insp = reset(ScenarioId::Inspection, 0);
    for (const auto& e : insp.entities) {
        if (e.kind == EntityKind::Turbine) CHECK(e.rotating == (e.side == "left"));
    }
    CHECK(fire.ledger.raw_max() == oracle::wildfire_raw_max());
    CHECK(reset(ScenarioId::Landing, 0).ledger.raw_max() == 20);
    CHECK(insp.ledger.raw_max() == 10);
    CHECK(reset(ScenarioId::SafeNav, 0).ledger.raw_max() == 90);
    CHECK(fire.start_distance == doctest::Approx(100.0));
}

TEST_CASE("scenario names round trip") {
    for (auto id : all_scenarios()) CHECK(parse_scenario(to_string(id)) == id);
    CHECK_THROWS_AS(parse_scenario("mars"), ScenarioError);
    CHECK_THROWS(parse_layout("{\"scenario\": \"wildfire\"}"));
}

TEST_CASE("wildfire start shows only the smoke cue") {
    const auto o = observe(reset(ScenarioId::Wildfire, 0));
    CHECK(field(o, "entities") == "fire");
    CHECK(field(o, "e.fire.kind") == "smoke");
    CHECK(o.image.size() == static_cast<std::size_t>(kImageSize * kImageSize));
}

TEST_CASE("groups show their size within twenty meters") {
    auto w = reset(ScenarioId::Wildfire, 0);
    const auto* g1 = w.find("g1");
    REQUIRE(g1 != nullptr);
    teleport(w, g1->position + Eigen::Vector3d(5, 5, 10));
    auto o = observe(w);
    CHECK(field(o, "e.g1.size") == "2");
    CHECK(field(o, "e.g1.kind") == "trapped_group");
    CHECK(o.scene.fields.count("e.g1.reported") == 0);
    teleport(w, g1->position + Eigen::Vector3d(20, 0, 10));
    o = observe(w);
    CHECK(o.scene.fields.count("e.g1.size") == 0);
}

TEST_CASE("turbine blades: left turns, right stays") {
    auto w = reset(ScenarioId::Inspection, 0);
    teleport(w, {0, 50, 30});
    const auto a = observe(w);
    advance(w);
    const auto b = observe(w);
    CHECK(field(a, "e.T_left.blade_phase") != field(b, "e.T_left.blade_phase"));
    CHECK(field(a, "e.T_right.blade_phase") == field(b, "e.T_right.blade_phase"));
    CHECK(a.image != b.image);
}

TEST_CASE("identical worlds observe identical bytes") {
    for (auto id : all_scenarios()) {
        auto w1 = reset(id, 9);
        auto w2 = reset(id, 9);
        for (int i = 0; i < 5; ++i) {
            const auto a = observe(w1);
            const auto b = observe(w2);
            CHECK(a.scene == b.scene);
            CHECK(a.image == b.image);
            advance(w1);
            advance(w2);
        }
    }
}

TEST_CASE("landing reward falls linearly with distance") {
    double previous = 1e9;
    for (int i = 0; i < 100; ++i) {
        const double d = 5.0 * i / 99.0;
        const double r = landing_reward(d, 5.0);
        CHECK(r == doctest::Approx(oracle::landing_points(d, 5.0)));
        CHECK(r < previous);
        previous = r;
    }
    CHECK(landing_reward(5.0 + 1e-6, 5.0) == 0.0);
    CHECK(landing_reward(20.0, 5.0) == 0.0);
}

TEST_CASE("landing touchdowns score center, boundary and outside") {
    const std::vector<std::pair<double, double>> cases{{0.0, 100.0}, {5.0, 50.0}, {6.0, 0.0}, {2.5, 75.0}};
    for (const auto& [d, expected] : cases) {
        auto w = reset(ScenarioId::Landing, 0);
        teleport(w, {d, 0, 2});
        apply_action(w, Move{{d, 0, 0}});
        CHECK(w.touched_down);
        CHECK(w.ledger.normalized() ==
              doctest::Approx(oracle::normalized(oracle::landing_points(d, 5.0), 20.0)));
        CHECK(w.ledger.normalized() == doctest::Approx(expected));
        CHECK(is_done(w, 1, 200));
    }
}

TEST_CASE("moves are limited to five meters per axis") {
    auto w = reset(ScenarioId::Landing, 0);
    CHECK_THROWS_AS(apply_action(w, Move{w.pose + Eigen::Vector3d(5.5, 0, 0)}), InvalidAction);
    CHECK_THROWS_AS(apply_action(w, Move{{w.pose.x(), w.pose.y(), -1}}), InvalidAction);
    CHECK_NOTHROW(apply_action(w, Move{w.pose + Eigen::Vector3d(5, -5, 5)}));
}

TEST_CASE("admissible action sets") {
    auto landing = reset(ScenarioId::Landing, 0);
    CHECK_THROWS_AS(apply_action(landing, ReportIgnition{}), InvalidAction);
    CHECK_NOTHROW(apply_action(landing, ActivateSensor{"downward_camera"}));
    auto fire = reset(ScenarioId::Wildfire, 0);
    CHECK_THROWS_AS(apply_action(fire, ReportTrapped{4}), InvalidAction);
    CHECK_THROWS_AS(apply_action(fire, DispatchKits{0}), InvalidAction);
    CHECK_THROWS_AS(apply_action(fire, SubmitReport{"x"}), InvalidAction);
    auto insp = reset(ScenarioId::Inspection, 0);
    CHECK_THROWS_AS(apply_action(insp, Communicate{}), InvalidAction);
    CHECK(admissible_actions(ScenarioId::Wildfire).kinds.size() == 7);
}

TEST_CASE("wildfire approach credit is a one-time maximum") {
    for (double d : {3.0, 10.0, 51.5, 100.0, 120.0}) {
        CHECK(approach_reward(d, 100.0) ==
              doctest::Approx(10.0 * std::clamp(1.0 - (d - 3.0) / 97.0, 0.0, 1.0)));
    }
    auto w = reset(ScenarioId::Wildfire, 0);
    teleport(w, {0, 0, 10});
    double total = 0.0;
    for (int i = 0; i < 30; ++i) {
        total += apply_action(w, Move{w.pose + Eigen::Vector3d(4, 0, 0)});
    }
    for (int i = 0; i < 10; ++i) {
        total += apply_action(w, Move{w.pose - Eigen::Vector3d(4, 0, 0)});
    }
    CHECK(total == doctest::Approx(w.approach_credit));
    CHECK(w.ledger.total_of("approach") <= 10.0 + 1e-9);
}

TEST_CASE("fire report needs the detail range and pays once") {
    auto w = reset(ScenarioId::Wildfire, 0);
    teleport(w, {50, 0, 10});
    CHECK(apply_action(w, ReportIgnition{}) == 0.0);
    teleport(w, {80, 0, 10});
    CHECK(apply_action(w, ReportIgnition{}) == 10.0);
    CHECK(apply_action(w, ReportIgnition{}) == 0.0);
}

TEST_CASE("group rewards saturate at sixteen") {
    auto w = reset(ScenarioId::Wildfire, 0);
    for (int round = 0; round < 3; ++round) {
        for (const char* id : {"g1", "g2", "g3", "g4"}) {
            teleport(w, w.find(id)->position + Eigen::Vector3d(0, 0, 10));
            const int size = w.find(id)->size;
            apply_action(w, ReportTrapped{size});
            apply_action(w, Communicate{});
            for (int k = 0; k < 4; ++k) apply_action(w, DispatchKits{3});
        }
    }
    CHECK(w.ledger.total_of("trapped_report") == 16.0);
    CHECK(w.ledger.total_of("reassurance") == 16.0);
    CHECK(w.ledger.total_of("kit_delivery") == 16.0);
}

TEST_CASE("misidentifying firefighters costs a point each") {
    auto w = reset(ScenarioId::Wildfire, 0);
    teleport(w, w.find("ff3")->position + Eigen::Vector3d(0, 0, 10));
    const double delta = apply_action(w, ReportTrapped{3});
    CHECK(delta == -1.0);
    CHECK(w.ledger.total_of("misidentification") == -1.0);
    CHECK(w.ledger.normalized() == 0.0);
}

TEST_CASE("safenav entry is idempotent") {
    auto w = reset(ScenarioId::SafeNav, 0);
    const auto b1 = w.find("B1")->position;
    teleport(w, {b1.x(), b1.y(), 4});
    CHECK(apply_action(w, Move{{b1.x(), b1.y(), 2}}) == 10.0);
    CHECK(apply_action(w, Move{{b1.x(), b1.y(), 6}}) == 0.0);
    CHECK(apply_action(w, Move{{b1.x(), b1.y(), 2}}) == 0.0);
    CHECK(w.ledger.normalized() == doctest::Approx(100.0 / 9.0));
}

TEST_CASE("fault report judge") {
    const std::string fault = "right turbine stationary rotation";
    CHECK(match_score("the right turbine has stopped rotation", fault) == 10);
    CHECK(match_score("", fault) == 0);
    CHECK(match_score("left turbine fault", fault) <= 5);
    auto w = reset(ScenarioId::Inspection, 0);
    CHECK(apply_action(w, SubmitReport{"the right turbine has stopped rotation"}) == 10.0);
    CHECK(apply_action(w, SubmitReport{"again"}) == 0.0);
    CHECK(w.ledger.normalized() == 100.0);
    CHECK(saturated(w));
    auto empty = reset(ScenarioId::Inspection, 0);
    apply_action(empty, SubmitReport{""});
    CHECK(empty.ledger.normalized() == 0.0);
}

TEST_CASE("ground report classification") {
    using W = ScenarioId;
    CHECK(kind_of(*classify_ground_report(W::Wildfire, "fire ignition point located near (100, 0)")) ==
          ActionKind::ReportIgnition);
    const auto trapped = classify_ground_report(W::Wildfire, "3 trapped survivors located at g3");
    REQUIRE(trapped);
    CHECK(std::get<ReportTrapped>(*trapped).count == 3);
    CHECK(std::get<ReportTrapped>(*classify_ground_report(W::Wildfire, "two people stuck")).count == 2);
    CHECK_FALSE(classify_ground_report(W::Wildfire, "all clear").has_value());
    CHECK(kind_of(*classify_ground_report(W::Inspection, "x")) == ActionKind::SubmitReport);
    CHECK_FALSE(classify_ground_report(W::SafeNav, "fire").has_value());
}

TEST_CASE("ledger exports") {
    RewardLedger l(20);
    l.add("touchdown", 10, 3);
    l.add("precision", 9.5, 3);
    CHECK(l.to_csv() == "label,points\ntouchdown,10\nprecision,9.5\n");
    CHECK(l.to_json().find("\"precision\"") != std::string::npos);
    CHECK(l.normalized() == doctest::Approx(97.5));
    l.add("penalty", -100, 4);
    CHECK(l.normalized() == 0.0);
}

TEST_CASE("done on budget, saturation or touchdown") {
    auto w = reset(ScenarioId::SafeNav, 0);
    CHECK_FALSE(is_done(w, 0, 10));
    CHECK(is_done(w, 10, 10));
    teleport(w, {0, 0, 1});
    apply_action(w, Move{{0, 0, 0}});
    CHECK(is_done(w, 1, 10));
}

}
