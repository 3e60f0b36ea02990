#pragma once

#include <optional>
#include <string>
#include <variant>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "embodied/bus.hpp"
#include "embodied/roschain.hpp"

namespace embodied::controller {

inline constexpr double kArrivalEpsilon = 0.1;  // meters
inline constexpr double kDefaultMaxSpeed = 5.0;  // m/s
inline constexpr double kDefaultTakeoffAltitude = 10.0;

enum class ArmState { Disarmed, Armed };

enum class FlightMode { OnGround, TakingOff, Hovering, MovingTo, Landing, FailsafeLanding, Idle };

const char* to_string(ArmState s);
const char* to_string(FlightMode m);
std::optional<FlightMode> parse_flight_mode(std::string_view name);

/// Kinematic stand-in for the flight stack: local ENU pose, first-order motion.
struct VehicleState {
    ArmState arm_state = ArmState::Disarmed;
    FlightMode flight_mode = FlightMode::OnGround;
    Eigen::Vector3d pose = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d target = Eigen::Vector3d::Zero();  // meaningful while moving
    double yaw = 0.0;                                  // radians, ENU, about +z
    double max_speed = kDefaultMaxSpeed;

    bool airborne() const { return flight_mode != FlightMode::OnGround; }
    bool has_target() const;
};

enum class CommandKind { MoveEnu, MoveBody, Takeoff, Land, Arm, Disarm, FailsafeLand, Idle };

struct ControllerCommand {
    CommandKind kind = CommandKind::Idle;
    Eigen::Vector3d vector = Eigen::Vector3d::Zero();  // Move_ENU target / Move_Body offset
    double altitude_m = kDefaultTakeoffAltitude;

    /// Throws std::invalid_argument for commands that do not target the controller.
    static ControllerCommand from(const roschain::Command& command);
};

struct Rejection {
    std::string reason;
};

using Transition = std::variant<VehicleState, Rejection>;

/// Safety state machine. Arm only on the ground while disarmed, takeoff only
/// armed on the ground, moves only while holding or moving, failsafe from any
/// airborne mode, disarm only on the ground.
Transition handle_command(const VehicleState& state, const ControllerCommand& cmd);

/// Advances the kinematics by dt seconds (dt > 0).
VehicleState tick(const VehicleState& state, double dt);

/// Rotates a body-frame offset by yaw about +z.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> body_to_enu(Scalar yaw, const Eigen::Matrix<Scalar, 3, 1>& offset) {
    return Eigen::AngleAxis<Scalar>(yaw, Eigen::Matrix<Scalar, 3, 1>::UnitZ()) * offset;
}

std::variant<Eigen::Vector3d, Rejection> resolve_body_frame(const VehicleState& state, double dx,
                                                            double dy, double dz);

/// Structured pose message published on the pose topic.
bus::Structured to_structured(const VehicleState& state);

inline constexpr const char* kPoseTopic = "pose";

// ─── Node ─────────────────────────────────────────────────────

/// Controller node: consumes controller commands from the bus and publishes
/// its state on the pose topic after every tick. Single writer.
class ControllerNode {
public:
    ControllerNode(bus::Bus& bus, VehicleState initial,
                   const roschain::CommandRegistry& registry = roschain::CommandRegistry::shipped());

    const VehicleState& state() const { return state_; }
    void tick(double dt);
    void publish_state();

    struct Outcome {
        std::string operation;
        bool accepted = false;
        std::string reason;
    };
    /// Outcomes of commands handled since the last call.
    std::vector<Outcome> drain_outcomes();

private:
    void on_command(const bus::Envelope& env);

    bus::Bus* bus_;
    bus::NodeHandle handle_;
    const roschain::CommandRegistry* registry_;
    VehicleState state_;
    std::vector<Outcome> outcomes_;
};

}  // namespace embodied::controller
