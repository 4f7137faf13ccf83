#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasedfa/traffic.hpp"

namespace phasedfa {

/// Unreadable container or header. Fatal; carries the byte offset of the problem.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
          offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

struct ParseResult {
    std::vector<ModbusQuery> queries;
    std::size_t malformed = 0;
    std::size_t ipv6_rejected = 0;
    std::size_t non_query = 0;  // responses and non-Modbus traffic (pcap only)
    std::vector<std::string> errors;  // first few per-record diagnostics

    void note_error(std::string msg) {
        ++malformed;
        if (errors.size() < 20) errors.push_back(std::move(msg));
    }
};

namespace detail {

/// Stable-sorts by timestamp and rebases so the first query is at t = 0.
inline void normalize_timestamps(std::vector<ModbusQuery>& qs) {
    if (qs.empty()) return;
    std::stable_sort(qs.begin(), qs.end(), [](const ModbusQuery& a, const ModbusQuery& b) {
        return a.timestamp < b.timestamp;
    });
    const double origin = qs.front().timestamp;
    for (auto& q : qs) q.timestamp -= origin;
}

}  // namespace detail

}  // namespace phasedfa
