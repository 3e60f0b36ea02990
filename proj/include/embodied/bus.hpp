#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace embodied::bus {

// ─── Payloads ─────────────────────────────────────────────────
// Closed three-variant message body. Structured fields are kept in a
// sorted map so their serialization is canonical.

struct Text {
    std::string value;
    bool operator==(const Text&) const = default;
};

struct Blob {
    std::vector<std::uint8_t> bytes;
    bool operator==(const Blob&) const = default;
};

struct Structured {
    std::map<std::string, std::string> fields;
    bool operator==(const Structured&) const = default;
};

using Payload = std::variant<Text, Blob, Structured>;

enum class PayloadTag { Text, Blob, Structured };

PayloadTag tag_of(const Payload& payload);
const char* to_string(PayloadTag tag);

/// Short human-readable description used in delivery traces.
std::string summarize(const Payload& payload);

struct Envelope {
    std::string topic;
    Payload payload;
    std::string publisher;
    std::uint64_t sequence = 0;
    std::int64_t timestamp = 0;
};

struct QueueConfig {
    std::size_t capacity = 16;  // overflow drops the oldest envelope
};

// ─── Errors ───────────────────────────────────────────────────

class BusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicateNode : public BusError {
public:
    using BusError::BusError;
};

class DuplicateService : public BusError {
public:
    using BusError::BusError;
};

class Timeout : public BusError {
public:
    using BusError::BusError;
};

class ResponderFault : public BusError {
public:
    using BusError::BusError;
};

// ─── Bus ──────────────────────────────────────────────────────

struct NodeHandle {
    std::string node_id;
    std::size_t index = 0;  // registration order
};

using SubscriptionId = std::uint64_t;
using Callback = std::function<void(const Envelope&)>;
using Responder = std::function<Payload(const Payload&)>;

enum class Mode {
    Deterministic,  // single thread, spin_once is the only scheduler
    Concurrent,     // publish/subscribe/call may happen from any thread
};

/// In-process analogue of a ROS master: node registry, topics with bounded
/// drop-oldest queues, and synchronous services.
///
/// Delivery happens only inside spin_once(), node by node in registration
/// order and subscription by subscription in subscription order. Envelopes
/// published by callbacks during a spin are delivered on the next spin.
class Bus {
public:
    explicit Bus(Mode mode = Mode::Deterministic);
    Bus(const Bus&) = delete;
    Bus& operator=(const Bus&) = delete;

    Mode mode() const { return mode_; }

    NodeHandle register_node(const std::string& node_id);

    SubscriptionId subscribe(const NodeHandle& handle, const std::string& topic, Callback callback,
                             QueueConfig queue = {});

    void publish(const NodeHandle& handle, const std::string& topic, Payload payload);

    void advertise_service(const NodeHandle& handle, const std::string& service,
                           Responder responder);

    /// Invokes the responder exactly once on success. In deterministic mode an
    /// absent service times out immediately; in concurrent mode the caller
    /// waits up to timeout_ticks * tick_period() for it to be advertised.
    Payload call_service(const NodeHandle& handle, const std::string& service,
                         const Payload& request, int timeout_ticks);

    std::size_t spin_once();

    bool has_service(const std::string& service) const;
    std::set<std::string> topics_of(const NodeHandle& handle) const;
    std::set<std::string> services_of(const NodeHandle& handle) const;
    std::vector<std::string> nodes() const;

    void set_time(std::int64_t ticks);
    std::int64_t now() const;

    void enable_trace(bool on);
    /// One JSON object per delivered envelope: topic, publisher, sequence, payload.
    std::vector<std::string> trace() const;
    std::string trace_jsonl() const;

    static constexpr int tick_period_ms = 1;

private:
    struct Subscription {
        SubscriptionId id = 0;
        std::size_t node_index = 0;
        std::string topic;
        QueueConfig queue;
        Callback callback;
        std::deque<Envelope> pending;
    };

    struct Node {
        std::string id;
        std::set<std::string> topics;
        std::set<std::string> services;
        std::vector<std::shared_ptr<Subscription>> subscriptions;
    };

    void check_handle(const NodeHandle& handle) const;

    Mode mode_;
    mutable std::mutex mutex_;
    std::condition_variable service_advertised_;
    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> node_index_;
    std::unordered_map<std::string, std::vector<std::shared_ptr<Subscription>>> by_topic_;
    std::map<std::string, Responder> services_;
    std::map<std::pair<std::string, std::string>, std::uint64_t> sequences_;
    SubscriptionId next_subscription_ = 1;
    std::int64_t clock_ = 0;
    bool trace_enabled_ = false;
    std::vector<std::string> trace_;
};

}  // namespace embodied::bus
