#pragma once

// Capture parsing, channel separation and burst segmentation.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <iterator>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "phasedfa/parse_result.hpp"
#include "phasedfa/pcap.hpp"
#include "phasedfa/traffic.hpp"

namespace phasedfa {

enum class InputFormat { ndjson, csv, pcap };

inline InputFormat parse_format(std::string_view name) {
    if (name == "ndjson" || name == "jsonl") return InputFormat::ndjson;
    if (name == "csv") return InputFormat::csv;
    if (name == "pcap") return InputFormat::pcap;
    throw std::invalid_argument("unknown input format '" + std::string(name) +
                                "' (expected ndjson, csv or pcap)");
}

struct IngestConfig {
    double burst_gap_threshold = 0.1;  // seconds
    std::size_t min_channel_packets = 500;

    void validate() const {
        if (!(burst_gap_threshold > 0.0))
            throw std::invalid_argument("burst_gap_threshold must be > 0");
        if (min_channel_packets < 1)
            throw std::invalid_argument("min_channel_packets must be >= 1");
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

template <class T>
bool parse_unsigned(std::string_view s, std::uint64_t max, T& out) {
    s = trim(s);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v > max) return false;
    out = static_cast<T>(v);
    return true;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    // from_chars for double is available in libstdc++ 11.
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline std::optional<Ipv4Address> parse_ip_field(std::string_view text, ParseResult& res,
                                                 std::size_t line) {
    auto ip = Ipv4Address::parse(trim(text));
    if (!ip) {
        if (text.find(':') != std::string_view::npos) {
            ++res.ipv6_rejected;
            res.note_error("line " + std::to_string(line) +
                           ": IPv6 address not supported: " + std::string(text));
        } else {
            res.note_error("line " + std::to_string(line) + ": bad IPv4 address '" +
                           std::string(text) + "'");
        }
    }
    return ip;
}

}  // namespace detail

/// One query per line. Fields ts, mip, sip, uid, sport, fc are required;
/// tid, rn and cnt default to 0. Unknown fields are ignored.
inline ParseResult parse_ndjson(std::istream& in) {
    using nlohmann::json;
    ParseResult res;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            res.note_error("line " + std::to_string(lineno) + ": not a JSON object");
            continue;
        }
        auto uint_field = [&](const char* key, std::uint64_t max, bool required,
                              std::uint64_t& out) {
            auto it = j.find(key);
            if (it == j.end()) {
                out = 0;
                return !required;
            }
            if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
                return false;
            out = it->get<std::uint64_t>();
            return out <= max;
        };
        ModbusQuery q;
        std::uint64_t uid, sport, tid, fc, rn, cnt;
        auto ts = j.find("ts");
        if (ts == j.end() || !ts->is_number() || !uint_field("uid", 0xFF, true, uid) ||
            !uint_field("sport", 0xFFFF, true, sport) || !uint_field("tid", 0xFFFF, false, tid) ||
            !uint_field("fc", 0xFF, true, fc) || !uint_field("rn", 0xFFFF, false, rn) ||
            !uint_field("cnt", 0xFFFF, false, cnt)) {
            res.note_error("line " + std::to_string(lineno) + ": missing or out-of-range field");
            continue;
        }
        auto mip = j.find("mip");
        auto sip = j.find("sip");
        if (mip == j.end() || sip == j.end() || !mip->is_string() || !sip->is_string()) {
            res.note_error("line " + std::to_string(lineno) + ": missing mip/sip");
            continue;
        }
        auto m = detail::parse_ip_field(mip->get<std::string>(), res, lineno);
        if (!m) continue;
        auto s = detail::parse_ip_field(sip->get<std::string>(), res, lineno);
        if (!s) continue;
        q.timestamp = ts->get<double>();
        if (!(q.timestamp >= 0.0)) {
            res.note_error("line " + std::to_string(lineno) + ": negative timestamp");
            continue;
        }
        q.master_ip = *m;
        q.slave_ip = *s;
        q.unit_id = static_cast<std::uint8_t>(uid);
        q.slave_port = static_cast<std::uint16_t>(sport);
        q.transaction_id = static_cast<std::uint16_t>(tid);
        q.function_code = static_cast<std::uint8_t>(fc);
        q.reference_number = static_cast<std::uint16_t>(rn);
        q.count = static_cast<std::uint16_t>(cnt);
        res.queries.push_back(q);
    }
    detail::normalize_timestamps(res.queries);
    return res;
}

/// Comma-separated, header row required, same field names as NDJSON.
inline ParseResult parse_csv(std::istream& in) {
    ParseResult res;
    std::string line;
    if (!std::getline(in, line)) return res;  // empty input

    auto split = [](std::string_view s) {
        std::vector<std::string_view> out;
        std::size_t start = 0;
        for (;;) {
            auto pos = s.find(',', start);
            out.push_back(detail::trim(s.substr(start, pos - start)));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return out;
    };

    std::map<std::string, std::size_t, std::less<>> col;
    auto header = split(line);
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(header[i]), i);
    for (const char* required : {"ts", "mip", "sip", "uid", "sport", "fc"}) {
        if (!col.contains(required))
            throw FormatError(std::string("CSV header missing required column '") + required + "'", 0);
    }
    auto index_of = [&](const char* name) -> std::optional<std::size_t> {
        auto it = col.find(name);
        if (it == col.end()) return std::nullopt;
        return it->second;
    };
    const std::size_t i_ts = *index_of("ts"), i_mip = *index_of("mip"), i_sip = *index_of("sip"),
                      i_uid = *index_of("uid"), i_sport = *index_of("sport"), i_fc = *index_of("fc");
    const auto i_tid = index_of("tid"), i_rn = index_of("rn"), i_cnt = index_of("cnt");

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto f = split(line);
        if (f.size() != header.size()) {
            res.note_error("line " + std::to_string(lineno) + ": expected " +
                           std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
            continue;
        }
        ModbusQuery q;
        bool ok = detail::parse_double(f[i_ts], q.timestamp) && q.timestamp >= 0.0 &&
                  detail::parse_unsigned(f[i_uid], 0xFF, q.unit_id) &&
                  detail::parse_unsigned(f[i_sport], 0xFFFF, q.slave_port) &&
                  detail::parse_unsigned(f[i_fc], 0xFF, q.function_code) &&
                  (!i_tid || detail::parse_unsigned(f[*i_tid], 0xFFFF, q.transaction_id)) &&
                  (!i_rn || detail::parse_unsigned(f[*i_rn], 0xFFFF, q.reference_number)) &&
                  (!i_cnt || detail::parse_unsigned(f[*i_cnt], 0xFFFF, q.count));
        if (!ok) {
            res.note_error("line " + std::to_string(lineno) + ": bad numeric field");
            continue;
        }
        auto m = detail::parse_ip_field(f[i_mip], res, lineno);
        if (!m) continue;
        auto s = detail::parse_ip_field(f[i_sip], res, lineno);
        if (!s) continue;
        q.master_ip = *m;
        q.slave_ip = *s;
        res.queries.push_back(q);
    }
    detail::normalize_timestamps(res.queries);
    return res;
}

inline ParseResult parse_records(std::istream& in, InputFormat format) {
    switch (format) {
        case InputFormat::ndjson:
            return parse_ndjson(in);
        case InputFormat::csv:
            return parse_csv(in);
        case InputFormat::pcap: {
            std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                            std::istreambuf_iterator<char>()};
            return parse_pcap(bytes);
        }
    }
    throw std::logic_error("unreachable input format");
}

struct ChannelStream {
    ChannelId channel;
    std::vector<ModbusQuery> queries;  // time-ordered, all on `channel`
};

struct ChannelSplit {
    std::vector<ChannelStream> kept;                             // ordered by ChannelId
    std::vector<std::pair<ChannelId, std::size_t>> dropped;      // below min_channel_packets
};

/// Groups queries by channel and drops channels with fewer than
/// cfg.min_channel_packets queries.
inline ChannelSplit split_channels(std::span<const ModbusQuery> queries, const IngestConfig& cfg) {
    std::map<ChannelId, std::vector<ModbusQuery>> by_channel;
    for (const auto& q : queries) by_channel[channel_of(q)].push_back(q);
    ChannelSplit out;
    for (auto& [id, qs] : by_channel) {
        if (qs.size() >= cfg.min_channel_packets)
            out.kept.push_back(ChannelStream{id, std::move(qs)});
        else
            out.dropped.emplace_back(id, qs.size());
    }
    return out;
}

/// A gap strictly greater than the threshold closes the current burst.
inline std::vector<Burst> split_bursts(const ChannelStream& stream, const IngestConfig& cfg) {
    std::vector<Burst> bursts;
    const ModbusQuery* prev = nullptr;
    for (const auto& q : stream.queries) {
        if (prev == nullptr || q.timestamp - prev->timestamp > cfg.burst_gap_threshold) {
            bursts.push_back(Burst{{}, q.timestamp, q.timestamp});
        }
        bursts.back().symbols.push_back(symbol_of(q));
        bursts.back().end_time = q.timestamp;
        prev = &q;
    }
    return bursts;
}

}  // namespace phasedfa
