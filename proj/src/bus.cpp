#include "embodied/bus.hpp"

#include <chrono>
#include <sstream>

#include <json.hpp>

namespace embodied::bus {

PayloadTag tag_of(const Payload& payload) {
    switch (payload.index()) {
        case 0: return PayloadTag::Text;
        case 1: return PayloadTag::Blob;
        default: return PayloadTag::Structured;
    }
}

const char* to_string(PayloadTag tag) {
    switch (tag) {
        case PayloadTag::Text: return "Text";
        case PayloadTag::Blob: return "Blob";
        case PayloadTag::Structured: return "Structured";
    }
    return "?";
}

std::string summarize(const Payload& payload) {
    constexpr std::size_t kTextPreview = 48;
    std::ostringstream out;
    if (const auto* text = std::get_if<Text>(&payload)) {
        out << "Text(" << text->value.size() << "):";
        out << text->value.substr(0, kTextPreview);
    } else if (const auto* blob = std::get_if<Blob>(&payload)) {
        // FNV-1a over the bytes keeps traces short but still content-sensitive.
        std::uint64_t h = 14695981039346656037ull;
        for (auto b : blob->bytes) {
            h = (h ^ b) * 1099511628211ull;
        }
        out << "Blob(" << blob->bytes.size() << "):" << std::hex << h;
    } else {
        const auto& fields = std::get<Structured>(payload).fields;
        out << "Structured(" << fields.size() << ")";
        std::size_t shown = 0;
        for (const auto& [k, v] : fields) {
            if (shown++ == 4) {
                out << " ...";
                break;
            }
            out << ' ' << k << '=' << v;
        }
    }
    return out.str();
}

Bus::Bus(Mode mode) : mode_(mode) {}

void Bus::check_handle(const NodeHandle& handle) const {
    if (handle.index >= nodes_.size() || nodes_[handle.index].id != handle.node_id) {
        throw BusError("unknown node handle '" + handle.node_id + "'");
    }
}

NodeHandle Bus::register_node(const std::string& node_id) {
    if (node_id.empty()) {
        throw std::invalid_argument("node id must be non-empty");
    }
    std::lock_guard lock(mutex_);
    if (node_index_.contains(node_id)) {
        throw DuplicateNode("node '" + node_id + "' already registered");
    }
    NodeHandle handle{node_id, nodes_.size()};
    nodes_.push_back(Node{node_id, {}, {}, {}});
    node_index_.emplace(node_id, handle.index);
    return handle;
}

SubscriptionId Bus::subscribe(const NodeHandle& handle, const std::string& topic,
                              Callback callback, QueueConfig queue) {
    if (topic.empty()) {
        throw std::invalid_argument("topic name must be non-empty");
    }
    if (queue.capacity < 1) {
        throw std::invalid_argument("queue capacity must be at least 1");
    }
    std::lock_guard lock(mutex_);
    check_handle(handle);
    auto sub = std::make_shared<Subscription>();
    sub->id = next_subscription_++;
    sub->node_index = handle.index;
    sub->topic = topic;
    sub->queue = queue;
    sub->callback = std::move(callback);
    nodes_[handle.index].topics.insert(topic);
    nodes_[handle.index].subscriptions.push_back(sub);
    by_topic_[topic].push_back(sub);
    return sub->id;
}

void Bus::publish(const NodeHandle& handle, const std::string& topic, Payload payload) {
    std::lock_guard lock(mutex_);
    check_handle(handle);
    nodes_[handle.index].topics.insert(topic);
    // Sequence assignment and enqueue share the lock, which is what keeps
    // per-(publisher, topic) order intact across threads.
    auto& seq = sequences_[{handle.node_id, topic}];
    ++seq;
    auto it = by_topic_.find(topic);
    if (it == by_topic_.end()) {
        return;
    }
    Envelope env{topic, std::move(payload), handle.node_id, seq, clock_};
    for (auto& sub : it->second) {
        if (sub->pending.size() == sub->queue.capacity) {
            sub->pending.pop_front();
        }
        sub->pending.push_back(env);
    }
}

void Bus::advertise_service(const NodeHandle& handle, const std::string& service,
                            Responder responder) {
    if (service.empty()) {
        throw std::invalid_argument("service name must be non-empty");
    }
    {
        std::lock_guard lock(mutex_);
        check_handle(handle);
        if (services_.contains(service)) {
            throw DuplicateService("service '" + service + "' already advertised");
        }
        services_.emplace(service, std::move(responder));
        nodes_[handle.index].services.insert(service);
    }
    service_advertised_.notify_all();
}

Payload Bus::call_service(const NodeHandle& handle, const std::string& service,
                          const Payload& request, int timeout_ticks) {
    if (timeout_ticks < 1) {
        throw std::invalid_argument("timeout_ticks must be at least 1");
    }
    Responder responder;
    {
        std::unique_lock lock(mutex_);
        check_handle(handle);
        auto found = [&] { return services_.contains(service); };
        if (!found() && mode_ == Mode::Concurrent) {
            service_advertised_.wait_for(
                lock, std::chrono::milliseconds(std::int64_t{timeout_ticks} * tick_period_ms),
                found);
        }
        if (!found()) {
            throw Timeout("service '" + service + "' unavailable after " +
                          std::to_string(timeout_ticks) + " ticks");
        }
        responder = services_.at(service);
    }
    try {
        return responder(request);
    } catch (const std::exception& e) {
        throw ResponderFault("service call failed: " + service + ": " + e.what());
    } catch (...) {
        throw ResponderFault("service call failed: " + service);
    }
}

std::size_t Bus::spin_once() {
    struct Batch {
        std::shared_ptr<Subscription> sub;
        std::deque<Envelope> envelopes;
    };
    std::vector<Batch> batches;
    {
        std::lock_guard lock(mutex_);
        for (auto& node : nodes_) {
            for (auto& sub : node.subscriptions) {
                if (!sub->pending.empty()) {
                    batches.push_back({sub, std::move(sub->pending)});
                    sub->pending.clear();
                }
            }
        }
    }
    std::size_t delivered = 0;
    for (auto& batch : batches) {
        for (const auto& env : batch.envelopes) {
            if (batch.sub->callback) {
                batch.sub->callback(env);
            }
            ++delivered;
            std::lock_guard lock(mutex_);
            if (trace_enabled_) {
                nlohmann::json line{{"topic", env.topic},
                                    {"subscriber", nodes_[batch.sub->node_index].id},
                                    {"publisher", env.publisher},
                                    {"sequence", env.sequence},
                                    {"timestamp", env.timestamp},
                                    {"payload", summarize(env.payload)}};
                trace_.push_back(line.dump());
            }
        }
    }
    return delivered;
}

bool Bus::has_service(const std::string& service) const {
    std::lock_guard lock(mutex_);
    return services_.contains(service);
}

std::set<std::string> Bus::topics_of(const NodeHandle& handle) const {
    std::lock_guard lock(mutex_);
    check_handle(handle);
    return nodes_[handle.index].topics;
}

std::set<std::string> Bus::services_of(const NodeHandle& handle) const {
    std::lock_guard lock(mutex_);
    check_handle(handle);
    return nodes_[handle.index].services;
}

std::vector<std::string> Bus::nodes() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    ids.reserve(nodes_.size());
    for (const auto& n : nodes_) {
        ids.push_back(n.id);
    }
    return ids;
}

void Bus::set_time(std::int64_t ticks) {
    std::lock_guard lock(mutex_);
    clock_ = ticks;
}

std::int64_t Bus::now() const {
    std::lock_guard lock(mutex_);
    return clock_;
}

void Bus::enable_trace(bool on) {
    std::lock_guard lock(mutex_);
    trace_enabled_ = on;
}

std::vector<std::string> Bus::trace() const {
    std::lock_guard lock(mutex_);
    return trace_;
}

std::string Bus::trace_jsonl() const {
    std::lock_guard lock(mutex_);
    std::string out;
    for (const auto& line : trace_) {
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace embodied::bus
