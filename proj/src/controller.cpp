#include "embodied/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace embodied::controller {

const char* to_string(ArmState s) { return s == ArmState::Armed ? "Armed" : "Disarmed"; }

const char* to_string(FlightMode m) {
    switch (m) {
        case FlightMode::OnGround: return "OnGround";
        case FlightMode::TakingOff: return "TakingOff";
        case FlightMode::Hovering: return "Hovering";
        case FlightMode::MovingTo: return "MovingTo";
        case FlightMode::Landing: return "Landing";
        case FlightMode::FailsafeLanding: return "FailsafeLanding";
        case FlightMode::Idle: return "Idle";
    }
    return "?";
}

std::optional<FlightMode> parse_flight_mode(std::string_view name) {
    for (auto m : {FlightMode::OnGround, FlightMode::TakingOff, FlightMode::Hovering,
                   FlightMode::MovingTo, FlightMode::Landing, FlightMode::FailsafeLanding,
                   FlightMode::Idle}) {
        if (name == to_string(m)) {
            return m;
        }
    }
    return std::nullopt;
}

bool VehicleState::has_target() const {
    switch (flight_mode) {
        case FlightMode::TakingOff:
        case FlightMode::MovingTo:
        case FlightMode::Landing:
        case FlightMode::FailsafeLanding: return true;
        default: return false;
    }
}

ControllerCommand ControllerCommand::from(const roschain::Command& command) {
    const auto& name = command.operation().name;
    ControllerCommand cmd;
    if (name == "Move_ENU" || name == "Move_Body") {
        cmd.kind = name == "Move_ENU" ? CommandKind::MoveEnu : CommandKind::MoveBody;
        cmd.vector = {command.number("x"), command.number("y"), command.number("z")};
    } else if (name == "Takeoff") {
        cmd.kind = CommandKind::Takeoff;
        cmd.altitude_m = command.number("altitude_m");
    } else if (name == "Land") {
        cmd.kind = CommandKind::Land;
    } else if (name == "Arm") {
        cmd.kind = CommandKind::Arm;
    } else if (name == "Disarm") {
        cmd.kind = CommandKind::Disarm;
    } else if (name == "Failsafe_land") {
        cmd.kind = CommandKind::FailsafeLand;
    } else if (name == "Idle") {
        cmd.kind = CommandKind::Idle;
    } else {
        throw std::invalid_argument(name + " is not a controller command");
    }
    return cmd;
}

namespace {

bool holding_or_moving(FlightMode m) {
    return m == FlightMode::Hovering || m == FlightMode::MovingTo || m == FlightMode::Idle;
}

Transition move_to(VehicleState next, const Eigen::Vector3d& target) {
    if (!target.allFinite()) {
        return Rejection{"target is not finite"};
    }
    if (target.z() < 0.0) {
        return Rejection{"target below ground"};
    }
    next.flight_mode = FlightMode::MovingTo;
    next.target = target;
    return next;
}

Transition descend(VehicleState next, FlightMode mode) {
    next.flight_mode = mode;
    next.target = {next.pose.x(), next.pose.y(), 0.0};
    return next;
}

}  // namespace

Transition handle_command(const VehicleState& state, const ControllerCommand& cmd) {
    VehicleState next = state;
    const auto mode = state.flight_mode;
    switch (cmd.kind) {
        case CommandKind::Arm:
            if (state.arm_state == ArmState::Armed) {
                return Rejection{"already armed"};
            }
            if (mode != FlightMode::OnGround) {
                return Rejection{"arm requires the vehicle on the ground"};
            }
            next.arm_state = ArmState::Armed;
            return next;

        case CommandKind::Disarm:
            if (mode != FlightMode::OnGround) {
                return Rejection{"cannot disarm while airborne"};
            }
            next.arm_state = ArmState::Disarmed;
            next.velocity.setZero();
            return next;

        case CommandKind::Takeoff:
            if (state.arm_state != ArmState::Armed) {
                return Rejection{"vehicle is disarmed"};
            }
            if (!(cmd.altitude_m > kArrivalEpsilon) || !std::isfinite(cmd.altitude_m)) {
                return Rejection{"takeoff altitude must be positive"};
            }
            // Re-sending takeoff during the climb retargets the altitude, the
            // way streamed setpoints behave on a real flight stack.
            if (mode != FlightMode::OnGround && mode != FlightMode::TakingOff) {
                return Rejection{"already airborne"};
            }
            next.flight_mode = FlightMode::TakingOff;
            next.target = {state.pose.x(), state.pose.y(), cmd.altitude_m};
            return next;

        case CommandKind::MoveEnu:
            if (!holding_or_moving(mode)) {
                return Rejection{std::string("cannot move while ") + to_string(mode)};
            }
            return move_to(next, cmd.vector);

        case CommandKind::MoveBody: {
            if (!holding_or_moving(mode)) {
                return Rejection{std::string("cannot move while ") + to_string(mode)};
            }
            auto resolved = resolve_body_frame(state, cmd.vector.x(), cmd.vector.y(), cmd.vector.z());
            if (auto* r = std::get_if<Rejection>(&resolved)) {
                return *r;
            }
            return move_to(next, std::get<Eigen::Vector3d>(resolved));
        }

        case CommandKind::Land:
            if (!state.airborne()) {
                return Rejection{"not airborne"};
            }
            if (mode == FlightMode::FailsafeLanding) {
                return Rejection{"failsafe landing in progress"};
            }
            return descend(next, FlightMode::Landing);

        case CommandKind::FailsafeLand:
            if (!state.airborne()) {
                return Rejection{"not airborne"};
            }
            return descend(next, FlightMode::FailsafeLanding);

        case CommandKind::Idle:
            if (mode == FlightMode::OnGround) {
                return next;
            }
            if (mode == FlightMode::Landing || mode == FlightMode::FailsafeLanding) {
                return Rejection{"cannot hold during landing"};
            }
            next.flight_mode = FlightMode::Idle;
            next.target = state.pose;
            next.velocity.setZero();
            return next;
    }
    return Rejection{"unhandled command"};
}

VehicleState tick(const VehicleState& state, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("tick requires dt > 0");
    }
    VehicleState next = state;
    if (!state.has_target()) {
        next.velocity.setZero();
        return next;
    }
    const Eigen::Vector3d delta = state.target - state.pose;
    const double dist = delta.norm();
    const double reach = state.max_speed * dt;
    if (dist <= reach) {
        next.pose = state.target;
        next.velocity = delta / dt;
    } else {
        next.velocity = delta / dist * state.max_speed;
        next.pose = state.pose + next.velocity * dt;
    }
    next.pose.z() = std::max(0.0, next.pose.z());

    if ((next.target - next.pose).norm() <= kArrivalEpsilon) {
        switch (state.flight_mode) {
            case FlightMode::TakingOff:
            case FlightMode::MovingTo:
                next.flight_mode = FlightMode::Hovering;
                next.velocity.setZero();
                break;
            case FlightMode::Landing:
            case FlightMode::FailsafeLanding:
                if (next.pose.z() <= kArrivalEpsilon) {
                    next.pose.z() = 0.0;
                    next.flight_mode = FlightMode::OnGround;
                    next.velocity.setZero();
                }
                break;
            default: break;
        }
    }
    return next;
}

std::variant<Eigen::Vector3d, Rejection> resolve_body_frame(const VehicleState& state, double dx,
                                                            double dy, double dz) {
    if (!state.airborne()) {
        return Rejection{"body-frame moves require an airborne vehicle"};
    }
    return Eigen::Vector3d(state.pose + body_to_enu(state.yaw, Eigen::Vector3d(dx, dy, dz)));
}

bus::Structured to_structured(const VehicleState& state) {
    using roschain::format_number;
    bus::Structured s;
    s.fields["arm"] = to_string(state.arm_state);
    s.fields["mode"] = to_string(state.flight_mode);
    s.fields["x"] = format_number(state.pose.x());
    s.fields["y"] = format_number(state.pose.y());
    s.fields["z"] = format_number(state.pose.z());
    s.fields["vx"] = format_number(state.velocity.x());
    s.fields["vy"] = format_number(state.velocity.y());
    s.fields["vz"] = format_number(state.velocity.z());
    s.fields["yaw"] = format_number(state.yaw);
    return s;
}

// ─── Node ─────────────────────────────────────────────────────

ControllerNode::ControllerNode(bus::Bus& bus, VehicleState initial,
                               const roschain::CommandRegistry& registry)
    : bus_(&bus), handle_(bus.register_node("Controller")), registry_(&registry), state_(initial) {
    bus.subscribe(handle_, roschain::command_topic("Controller"),
                  [this](const bus::Envelope& env) { on_command(env); });
}

void ControllerNode::on_command(const bus::Envelope& env) {
    Outcome outcome;
    const auto* text = std::get_if<bus::Text>(&env.payload);
    if (text == nullptr) {
        outcomes_.push_back({"?", false, "command payload must be text"});
        return;
    }
    try {
        const auto command = registry_->decode(text->value);
        outcome.operation = command.operation().name;
        const auto result = handle_command(state_, ControllerCommand::from(command));
        if (const auto* rejected = std::get_if<Rejection>(&result)) {
            outcome.reason = rejected->reason;
        } else {
            state_ = std::get<VehicleState>(result);
            outcome.accepted = true;
        }
    } catch (const std::exception& e) {
        outcome.reason = e.what();
    }
    outcomes_.push_back(std::move(outcome));
}

void ControllerNode::tick(double dt) {
    state_ = controller::tick(state_, dt);
    publish_state();
}

void ControllerNode::publish_state() { bus_->publish(handle_, kPoseTopic, to_structured(state_)); }

std::vector<ControllerNode::Outcome> ControllerNode::drain_outcomes() {
    return std::exchange(outcomes_, {});
}

}  // namespace embodied::controller
