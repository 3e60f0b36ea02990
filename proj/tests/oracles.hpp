#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code under test.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// ─── Base64 ───────────────────────────────────────────────────
// Bit-string construction: append 8 bits per byte, cut 6-bit groups.

inline std::string base64(const std::vector<std::uint8_t>& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (auto b : bytes) {
        acc = (acc << 8) | b;
        bits += 8;
        while (bits >= 6) {
            bits -= 6;
            out += alphabet[(acc >> bits) & 0x3F];
        }
        acc &= (1u << bits) - 1;
    }
    if (bits > 0) {
        out += alphabet[(acc << (6 - bits)) & 0x3F];
    }
    while (out.size() % 4 != 0) {
        out += '=';
    }
    return out;
}

// ─── Embedding and retrieval ──────────────────────────────────

inline std::vector<std::string> tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 128 && std::isalnum(u)) {
            cur += static_cast<char>(std::tolower(u));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

inline int bucket(const std::string& token) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : token) {
        h = (h ^ c) * 1099511628211ULL;
    }
    return static_cast<int>(h % 256);
}

/// Sparse count vector, unnormalized.
inline std::map<int, double> counts(const std::string& text) {
    std::map<int, double> v;
    for (const auto& t : tokens(text)) {
        v[bucket(t)] += 1.0;
    }
    return v;
}

inline double cosine(const std::map<int, double>& a, const std::map<int, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [k, x] : a) {
        na += x * x;
        if (auto it = b.find(k); it != b.end()) {
            dot += x * it->second;
        }
    }
    for (const auto& [k, y] : b) {
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Ranked {
    std::size_t id;
    double similarity;
};

/// Full scan: similarity descending, newer (higher tick, then higher id) first on ties.
inline std::vector<Ranked> brute_force_retrieve(const std::vector<std::string>& labels,
                                                const std::vector<std::int64_t>& ticks,
                                                const std::string& query, std::size_t k) {
    const auto q = counts(query);
    std::vector<Ranked> all;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        all.push_back({i, cosine(q, counts(labels[i]))});
    }
    std::stable_sort(all.begin(), all.end(), [&](const Ranked& a, const Ranked& b) {
        if (a.similarity != b.similarity) {
            return a.similarity > b.similarity;
        }
        if (ticks[a.id] != ticks[b.id]) {
            return ticks[a.id] > ticks[b.id];
        }
        return a.id > b.id;
    });
    if (all.size() > k) {
        all.resize(k);
    }
    return all;
}

// ─── Controller transition table ──────────────────────────────
// Accept/reject per (armed, mode, command), written from the safety rules.

enum Mode { OnGround, TakingOff, Hovering, MovingTo, Landing, Failsafe, Idle };
enum Cmd { MoveEnu, MoveBody, Takeoff, Land, Arm, Disarm, FailsafeLand, HoldIdle };

inline bool airborne(Mode m) { return m != OnGround; }

/// Mode after an accepted command, or nullopt when rejected.
inline std::optional<std::pair<bool, Mode>> transition(bool armed, Mode m, Cmd c) {
    switch (c) {
        case Arm:
            if (armed || m != OnGround) return std::nullopt;
            return std::pair{true, m};
        case Disarm:
            if (m != OnGround) return std::nullopt;
            return std::pair{false, m};
        case Takeoff:
            if (!armed || (m != OnGround && m != TakingOff)) return std::nullopt;
            return std::pair{armed, TakingOff};
        case MoveEnu:
        case MoveBody:
            if (m != Hovering && m != MovingTo && m != Idle) return std::nullopt;
            return std::pair{armed, MovingTo};
        case Land:
            if (!airborne(m) || m == Failsafe) return std::nullopt;
            return std::pair{armed, Landing};
        case FailsafeLand:
            if (!airborne(m)) return std::nullopt;
            return std::pair{armed, Failsafe};
        case HoldIdle:
            if (m == OnGround) return std::pair{armed, m};
            if (m == Landing || m == Failsafe) return std::nullopt;
            return std::pair{armed, Idle};
    }
    return std::nullopt;
}

// ─── Scoring ──────────────────────────────────────────────────

/// Landing raw points for a touchdown at horizontal distance d from the center.
inline double landing_points(double d, double radius) {
    if (d > radius) return 0.0;
    return 10.0 + 10.0 * (radius - d) / radius;
}

/// Wildfire raw maximum: approach, fire report, three 16-point caps.
inline double wildfire_raw_max() { return 10 + 10 + 8 * 2 + 8 * 2 + 8 * 2; }

inline double normalized(double raw, double raw_max) {
    return 100.0 * std::clamp(raw, 0.0, raw_max) / raw_max;
}

// ─── Random helpers ───────────────────────────────────────────

inline std::string random_word(std::mt19937_64& rng, const std::vector<std::string>& vocab) {
    return vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)];
}

}  // namespace oracle
