#include "embodied/memory.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace embodied::memory {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 128 && std::isalnum(u)) {
            current.push_back(static_cast<char>(std::tolower(u)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::size_t token_bucket(std::string_view token) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h % kEmbeddingDim);
}

Embedding embed(std::string_view text) {
    Embedding e;
    for (const auto& token : tokenize(text)) {
        e.vector[static_cast<Eigen::Index>(token_bucket(token))] += 1.0;
    }
    const double n = e.vector.norm();
    if (n > 0.0) {
        e.vector /= n;
        e.norm = 1.0;
        e.empty = false;
    }
    return e;
}

const char* to_string(Outcome::Kind kind) {
    switch (kind) {
        case Outcome::Kind::Accepted: return "Accepted";
        case Outcome::Kind::Rejected: return "Rejected";
        case Outcome::Kind::ServiceResult: return "ServiceResult";
    }
    return "?";
}

const std::vector<std::string>& default_salience_keywords() {
    static const std::vector<std::string> keywords{"fire",     "smoke",  "survivor", "trapped",
                                                   "fault",    "helipad", "building",
                                                   "firefighter"};
    return keywords;
}

SalienceFn keyword_salience(std::vector<std::string> keywords) {
    for (auto& k : keywords) {
        std::transform(k.begin(), k.end(), k.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    }
    return [keywords = std::move(keywords)](std::string_view narrative) {
        for (const auto& token : tokenize(narrative)) {
            if (std::find(keywords.begin(), keywords.end(), token) != keywords.end()) {
                return 1.0;
            }
        }
        return 0.0;
    };
}

MemoryDb::MemoryDb(SalienceFn salience) : salience_(std::move(salience)) {}

MemoryDb::MemoryDb(const MemoryDb& other) {
    std::shared_lock lock(other.mutex_);
    salience_ = other.salience_;
    episodic_ = other.episodic_;
    embeddings_ = other.embeddings_;
    operations_ = other.operations_;
}

MemoryDb& MemoryDb::operator=(const MemoryDb& other) {
    if (this != &other) {
        MemoryDb copy(other);
        std::unique_lock lock(mutex_);
        salience_ = std::move(copy.salience_);
        episodic_ = std::move(copy.episodic_);
        embeddings_ = std::move(copy.embeddings_);
        operations_ = std::move(copy.operations_);
    }
    return *this;
}

std::size_t MemoryDb::insert_episodic(EpisodicRecord record) {
    if (record.label.empty()) {
        throw std::invalid_argument("episodic label must be non-empty");
    }
    if (!(record.salience >= 0.0 && record.salience <= 1.0)) {
        throw std::invalid_argument("salience must lie in [0, 1]");
    }
    auto e = embed(record.label);
    std::unique_lock lock(mutex_);
    episodic_.push_back(std::move(record));
    embeddings_.push_back(std::move(e));
    return episodic_.size() - 1;
}

std::optional<std::size_t> MemoryDb::reflect(const MultimodalPayload& observation,
                                             std::string_view narrative, std::int64_t tick) {
    if (narrative.empty()) {
        return std::nullopt;
    }
    const double salience = salience_(narrative);
    if (salience < kSalienceThreshold) {
        return std::nullopt;
    }
    {
        std::shared_lock lock(mutex_);
        if (!episodic_.empty() && episodic_.back().label == narrative) {
            return std::nullopt;
        }
    }
    return insert_episodic(EpisodicRecord{std::string(narrative), observation, tick,
                                          std::clamp(salience, 0.0, 1.0)});
}

RetrievalResult MemoryDb::retrieve(std::string_view query, std::size_t k) const {
    if (k < 1) {
        throw std::invalid_argument("retrieve requires k >= 1");
    }
    RetrievalResult result{std::string(query), {}};
    const auto q = embed(query);
    std::shared_lock lock(mutex_);
    std::vector<std::size_t> order(episodic_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> sims(episodic_.size());
    for (std::size_t i = 0; i < episodic_.size(); ++i) {
        sims[i] = cosine_similarity(q, embeddings_[i]);
    }
    const auto better = [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) {
            return sims[a] > sims[b];
        }
        if (episodic_[a].tick != episodic_[b].tick) {
            return episodic_[a].tick > episodic_[b].tick;
        }
        return a > b;
    };
    const auto take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      better);
    for (std::size_t i = 0; i < take; ++i) {
        const auto id = order[i];
        const auto& r = episodic_[id];
        result.records.push_back({id, r.label, r.payload, r.tick, sims[id]});
    }
    return result;
}

void MemoryDb::record_operation(OperationRecord record) {
    std::unique_lock lock(mutex_);
    operations_.push_back(std::move(record));
}

std::vector<OperationRecord> MemoryDb::recent_operations(std::size_t n) const {
    std::shared_lock lock(mutex_);
    const auto take = std::min(n, operations_.size());
    return {operations_.end() - static_cast<std::ptrdiff_t>(take), operations_.end()};
}

std::size_t MemoryDb::episodic_count() const {
    std::shared_lock lock(mutex_);
    return episodic_.size();
}

std::size_t MemoryDb::operation_count() const {
    std::shared_lock lock(mutex_);
    return operations_.size();
}

EpisodicRecord MemoryDb::episodic(std::size_t id) const {
    std::shared_lock lock(mutex_);
    return episodic_.at(id);
}

void MemoryDb::clear() {
    std::unique_lock lock(mutex_);
    episodic_.clear();
    embeddings_.clear();
    operations_.clear();
}

namespace {

nlohmann::json config_json(const std::map<std::string, roschain::ParamValue>& config) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : config) {
        std::visit([&](const auto& x) { j[k] = x; }, v);
    }
    return j;
}

Outcome::Kind parse_outcome_kind(const std::string& s) {
    for (auto k : {Outcome::Kind::Accepted, Outcome::Kind::Rejected, Outcome::Kind::ServiceResult}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    throw std::invalid_argument("unknown outcome kind '" + s + "'");
}

}  // namespace

void MemoryDb::dump_jsonl(std::ostream& out) const {
    std::shared_lock lock(mutex_);
    for (const auto& r : episodic_) {
        nlohmann::json j{{"kind", "episodic"},        {"label", r.label}, {"image", r.payload.image},
                         {"scene", r.payload.scene},  {"tick", r.tick},   {"salience", r.salience}};
        out << j.dump() << '\n';
    }
    for (const auto& op : operations_) {
        nlohmann::json j{{"kind", "operation"},
                         {"tick", op.tick},
                         {"operation", op.operation},
                         {"action", op.action},
                         {"config", config_json(op.config)},
                         {"outcome", {{"kind", to_string(op.outcome.kind)},
                                      {"detail", op.outcome.detail}}}};
        out << j.dump() << '\n';
    }
}

std::string MemoryDb::dump_jsonl() const {
    std::ostringstream out;
    dump_jsonl(out);
    return out.str();
}

MemoryDb MemoryDb::load_jsonl(std::istream& in, SalienceFn salience) {
    MemoryDb db(std::move(salience));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "episodic") {
                db.insert_episodic({j.at("label").get<std::string>(),
                                    {j.at("image").get<std::string>(), j.at("scene").get<std::string>()},
                                    j.at("tick").get<std::int64_t>(),
                                    j.at("salience").get<double>()});
            } else if (kind == "operation") {
                OperationRecord op;
                op.tick = j.at("tick").get<std::int64_t>();
                op.operation = j.at("operation").get<std::string>();
                op.action = j.value("action", std::string{});
                for (const auto& [k, v] : j.at("config").items()) {
                    if (v.is_number()) {
                        op.config[k] = v.get<double>();
                    } else {
                        op.config[k] = v.get<std::string>();
                    }
                }
                op.outcome.kind = parse_outcome_kind(j.at("outcome").at("kind").get<std::string>());
                op.outcome.detail = j.at("outcome").at("detail").get<std::string>();
                db.record_operation(std::move(op));
            } else {
                throw std::invalid_argument("unknown record kind '" + kind + "'");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("memory dump line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return db;
}

}  // namespace embodied::memory
