#pragma once

// Shared domain vocabulary: Modbus queries, DFA symbols, channels and bursts.

#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace phasedfa {

/// IPv4 address stored in host byte order.
struct Ipv4Address {
    std::uint32_t value = 0;

    constexpr auto operator<=>(const Ipv4Address&) const = default;

    static constexpr Ipv4Address from_octets(std::uint8_t a, std::uint8_t b,
                                             std::uint8_t c, std::uint8_t d) {
        return Ipv4Address{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
                           (std::uint32_t{c} << 8) | std::uint32_t{d}};
    }

    /// Parses a dotted quad. Returns nullopt for anything else, including IPv6.
    static std::optional<Ipv4Address> parse(std::string_view text) {
        std::uint32_t out = 0;
        int octets = 0;
        std::size_t pos = 0;
        while (octets < 4) {
            if (pos >= text.size()) return std::nullopt;
            unsigned value = 0;
            std::size_t digits = 0;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
                value = value * 10 + static_cast<unsigned>(text[pos] - '0');
                if (++digits > 3 || value > 255) return std::nullopt;
                ++pos;
            }
            if (digits == 0) return std::nullopt;
            out = (out << 8) | value;
            ++octets;
            if (octets < 4) {
                if (pos >= text.size() || text[pos] != '.') return std::nullopt;
                ++pos;
            }
        }
        if (pos != text.size()) return std::nullopt;
        return Ipv4Address{out};
    }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (value >> 24) & 0xFFu,
                      (value >> 16) & 0xFFu, (value >> 8) & 0xFFu, value & 0xFFu);
        return buf;
    }
};

/// One Modbus/TCP request as seen on the wire (master -> slave).
struct ModbusQuery {
    double timestamp = 0.0;  // seconds since capture start
    std::uint16_t transaction_id = 0;
    std::uint8_t unit_id = 0;
    std::uint8_t function_code = 0;
    std::uint16_t reference_number = 0;
    std::uint16_t count = 0;
    Ipv4Address master_ip;
    Ipv4Address slave_ip;
    std::uint16_t slave_port = 0;  // HMI-side TCP source port

    bool operator==(const ModbusQuery&) const = default;
};

/// DFA state name: (function code, reference number, count).
/// Ordered lexicographically so alphabet indexing is deterministic.
struct Symbol {
    std::uint8_t function_code = 0;
    std::uint16_t reference_number = 0;
    std::uint16_t count = 0;

    constexpr auto operator<=>(const Symbol&) const = default;

    std::string to_string() const {
        return "(" + std::to_string(function_code) + "," +
               std::to_string(reference_number) + "," + std::to_string(count) + ")";
    }
};

/// (master IP, slave IP, unit id, slave port). Distinct ports are distinct channels.
struct ChannelId {
    Ipv4Address master_ip;
    Ipv4Address slave_ip;
    std::uint8_t unit_id = 0;
    std::uint16_t slave_port = 0;

    constexpr auto operator<=>(const ChannelId&) const = default;

    std::string to_string() const {
        return master_ip.to_string() + "->" + slave_ip.to_string() + " u" +
               std::to_string(unit_id) + " p" + std::to_string(slave_port);
    }

    /// Filesystem-safe key, e.g. "10.0.0.1_10.0.0.2_u1_p49152".
    std::string file_stem() const {
        return master_ip.to_string() + "_" + slave_ip.to_string() + "_u" +
               std::to_string(unit_id) + "_p" + std::to_string(slave_port);
    }
};

/// A maximal run of closely spaced queries on one channel.
struct Burst {
    std::vector<Symbol> symbols;  // never empty
    double start_time = 0.0;
    double end_time = 0.0;

    std::size_t size() const { return symbols.size(); }
    bool operator==(const Burst&) const = default;
};

inline Symbol symbol_of(const ModbusQuery& q) {
    return Symbol{q.function_code, q.reference_number, q.count};
}

inline ChannelId channel_of(const ModbusQuery& q) {
    return ChannelId{q.master_ip, q.slave_ip, q.unit_id, q.slave_port};
}

/// Throws std::invalid_argument if the burst violates its invariants.
inline void validate(const Burst& b) {
    if (b.symbols.empty()) throw std::invalid_argument("burst must contain at least one symbol");
    if (b.start_time > b.end_time) throw std::invalid_argument("burst start_time after end_time");
}

// JSON: symbols as [fc, rn, cnt]; channels as objects with dotted-quad IPs.

inline void to_json(nlohmann::json& j, const Symbol& s) {
    j = nlohmann::json::array({s.function_code, s.reference_number, s.count});
}

inline void from_json(const nlohmann::json& j, Symbol& s) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("symbol must be [fc, rn, cnt]");
    const auto fc = j.at(0).get<std::uint64_t>(), rn = j.at(1).get<std::uint64_t>(),
               cnt = j.at(2).get<std::uint64_t>();
    if (fc > 0xFF || rn > 0xFFFF || cnt > 0xFFFF) throw std::invalid_argument("symbol field out of range");
    s = Symbol{static_cast<std::uint8_t>(fc), static_cast<std::uint16_t>(rn),
               static_cast<std::uint16_t>(cnt)};
}

inline void to_json(nlohmann::json& j, const ChannelId& c) {
    j = nlohmann::json{{"master_ip", c.master_ip.to_string()},
                       {"slave_ip", c.slave_ip.to_string()},
                       {"unit_id", c.unit_id},
                       {"slave_port", c.slave_port}};
}

inline void from_json(const nlohmann::json& j, ChannelId& c) {
    auto m = Ipv4Address::parse(j.at("master_ip").get<std::string>());
    auto s = Ipv4Address::parse(j.at("slave_ip").get<std::string>());
    if (!m || !s) throw std::invalid_argument("channel IPs must be IPv4 dotted quads");
    const auto uid = j.at("unit_id").get<std::uint64_t>();
    const auto port = j.at("slave_port").get<std::uint64_t>();
    if (uid > 0xFF || port > 0xFFFF) throw std::invalid_argument("channel unit_id/slave_port out of range");
    c = ChannelId{*m, *s, static_cast<std::uint8_t>(uid), static_cast<std::uint16_t>(port)};
}

}  // namespace phasedfa

template <>
struct std::hash<phasedfa::Symbol> {
    std::size_t operator()(const phasedfa::Symbol& s) const noexcept {
        return (std::size_t{s.function_code} << 32) ^ (std::size_t{s.reference_number} << 16) ^
               std::size_t{s.count};
    }
};
