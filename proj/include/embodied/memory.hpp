#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "embodied/roschain.hpp"

namespace embodied::memory {

// ─── Embedding ────────────────────────────────────────────────
// Hashed bag of tokens: lowercase, split on non-alphanumerics, each token
// counted in one of 256 FNV-1a buckets, counts L2-normalized.

inline constexpr int kEmbeddingDim = 256;
using EmbeddingVector = Eigen::Matrix<double, kEmbeddingDim, 1>;

struct Embedding {
    EmbeddingVector vector = EmbeddingVector::Zero();
    double norm = 0.0;   // 1 for non-empty text, 0 otherwise
    bool empty = true;   // no tokens: zero vector
};

std::vector<std::string> tokenize(std::string_view text);
std::size_t token_bucket(std::string_view token);
Embedding embed(std::string_view text);

/// Cosine of the angle between two vectors; 0 when either is zero.
template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return a.dot(b) / (na * nb);
}

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
    return cosine_similarity(a.vector, b.vector);
}

// ─── Records ──────────────────────────────────────────────────

struct MultimodalPayload {
    std::string image;  // wrapped (base64) image text
    std::string scene;  // canonical structured scene text
    bool operator==(const MultimodalPayload&) const = default;
};

struct EpisodicRecord {
    std::string label;
    MultimodalPayload payload;
    std::int64_t tick = 0;
    double salience = 1.0;
};

struct Outcome {
    enum class Kind { Accepted, Rejected, ServiceResult };
    Kind kind = Kind::Accepted;
    std::string detail;  // rejection reason or service result text

    static Outcome accepted() { return {Kind::Accepted, {}}; }
    static Outcome rejected(std::string reason) { return {Kind::Rejected, std::move(reason)}; }
    static Outcome service_result(std::string text) { return {Kind::ServiceResult, std::move(text)}; }
    bool operator==(const Outcome&) const = default;
};

const char* to_string(Outcome::Kind kind);

struct OperationRecord {
    std::int64_t tick = 0;
    std::string operation;  // registry operation; empty when no command was produced
    std::string action;     // action function the operation came from
    std::map<std::string, roschain::ParamValue> config;
    Outcome outcome;
    bool operator==(const OperationRecord&) const = default;
};

struct RetrievedRecord {
    std::size_t id = 0;
    std::string label;
    MultimodalPayload payload;
    std::int64_t tick = 0;
    double similarity = 0.0;
};

struct RetrievalResult {
    std::string query;
    std::vector<RetrievedRecord> records;  // similarity non-increasing
};

// ─── Salience ─────────────────────────────────────────────────

using SalienceFn = std::function<double(std::string_view narrative)>;

const std::vector<std::string>& default_salience_keywords();
/// 1.0 when any keyword occurs as a token of the narrative, else 0.0.
SalienceFn keyword_salience(std::vector<std::string> keywords);

inline constexpr double kSalienceThreshold = 0.5;

// ─── Database ─────────────────────────────────────────────────

/// Episodic records indexed by label embedding, plus a chronological
/// operation log. One writer; readers may run concurrently.
class MemoryDb {
public:
    explicit MemoryDb(SalienceFn salience = keyword_salience(default_salience_keywords()));
    MemoryDb(const MemoryDb& other);
    MemoryDb& operator=(const MemoryDb& other);

    std::size_t insert_episodic(EpisodicRecord record);

    /// Inserts iff the narrative is salient and differs from the most recently
    /// inserted label.
    std::optional<std::size_t> reflect(const MultimodalPayload& observation,
                                       std::string_view narrative, std::int64_t tick);

    /// Top-k by cosine similarity of label embeddings; ties go to the newer record.
    RetrievalResult retrieve(std::string_view query, std::size_t k) const;

    void record_operation(OperationRecord record);
    std::vector<OperationRecord> recent_operations(std::size_t n) const;

    std::size_t episodic_count() const;
    std::size_t operation_count() const;
    EpisodicRecord episodic(std::size_t id) const;
    const Embedding& embedding(std::size_t id) const { return embeddings_.at(id); }

    void clear();

    /// JSON lines, one record per line, episodic records first.
    void dump_jsonl(std::ostream& out) const;
    std::string dump_jsonl() const;
    static MemoryDb load_jsonl(std::istream& in,
                               SalienceFn salience = keyword_salience(default_salience_keywords()));

private:
    SalienceFn salience_;
    mutable std::shared_mutex mutex_;
    std::vector<EpisodicRecord> episodic_;
    std::vector<Embedding> embeddings_;
    std::vector<OperationRecord> operations_;
};

}  // namespace embodied::memory
