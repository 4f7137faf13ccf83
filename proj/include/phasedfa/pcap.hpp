#pragma once

// Minimal classic-pcap reader that extracts Modbus/TCP queries (TCP dst port 502).
// Only the fields carried by ModbusQuery are decoded; everything else is skipped.

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "phasedfa/parse_result.hpp"
#include "phasedfa/traffic.hpp"

namespace phasedfa {

inline constexpr std::uint16_t kModbusPort = 502;

namespace pcap_detail {

inline std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off + 3]} << 24) | (std::uint32_t{b[off + 2]} << 16) |
           (std::uint32_t{b[off + 1]} << 8) | std::uint32_t{b[off]};
}

enum LinkType : std::uint32_t { kEthernet = 1, kRawIp = 101, kRawIpAlt = 12, kLinuxSll = 113 };

/// Reference number and count for a request PDU. Returns nullopt if the PDU is
/// too short for its function code.
inline std::optional<std::pair<std::uint16_t, std::uint16_t>> decode_request_fields(
    std::span<const std::uint8_t> pdu) {
    const std::uint8_t fc = pdu[0];
    switch (fc) {
        case 1: case 2: case 3: case 4:   // reads
        case 15: case 16:                 // multi-writes: address, quantity
        case 23:                          // read/write multiple: read address, read quantity
            if (pdu.size() < 5) return std::nullopt;
            return std::pair{be16(pdu, 1), be16(pdu, 3)};
        case 5: case 6:                   // single writes: the second word is data, not a count
            if (pdu.size() < 5) return std::nullopt;
            return std::pair{be16(pdu, 1), std::uint16_t{1}};
        case 22:                          // mask write register
            if (pdu.size() < 7) return std::nullopt;
            return std::pair{be16(pdu, 1), std::uint16_t{0}};
        default:
            return std::pair{std::uint16_t{0}, std::uint16_t{0}};
    }
}

}  // namespace pcap_detail

/// Parses a classic libpcap file (either byte order, micro- or nanosecond
/// timestamps; Ethernet, raw IPv4 or Linux SLL link layers).
inline ParseResult parse_pcap(std::span<const std::uint8_t> bytes) {
    using namespace pcap_detail;
    ParseResult res;
    if (bytes.empty()) return res;
    if (bytes.size() < 24) throw FormatError("truncated pcap global header", bytes.size());

    const std::uint32_t magic_le = le32(bytes, 0);
    bool little = true;
    bool nanos = false;
    switch (magic_le) {
        case 0xa1b2c3d4: break;
        case 0xa1b23c4d: nanos = true; break;
        case 0xd4c3b2a1: little = false; break;
        case 0x4d3cb2a1: little = false; nanos = true; break;
        default: throw FormatError("bad pcap magic number", 0);
    }
    auto rd32 = [&](std::size_t off) { return little ? le32(bytes, off) : be32(bytes, off); };
    const std::uint32_t linktype = rd32(20) & 0x0FFFFFFFu;
    if (linktype != kEthernet && linktype != kRawIp && linktype != kRawIpAlt && linktype != kLinuxSll)
        throw FormatError("unsupported pcap link type " + std::to_string(linktype), 20);

    std::optional<std::int64_t> origin_us;
    std::size_t off = 24;
    std::size_t record = 0;
    while (off < bytes.size()) {
        ++record;
        if (bytes.size() - off < 16) {
            res.note_error("record " + std::to_string(record) + ": truncated record header");
            break;
        }
        const std::int64_t sec = rd32(off);
        const std::int64_t frac = rd32(off + 4);
        const std::uint32_t caplen = rd32(off + 8);
        off += 16;
        if (bytes.size() - off < caplen) {
            res.note_error("record " + std::to_string(record) + ": truncated packet data");
            break;
        }
        auto pkt = bytes.subspan(off, caplen);
        off += caplen;

        const std::int64_t ts_us = sec * 1'000'000 + (nanos ? frac / 1000 : frac);
        if (!origin_us) origin_us = ts_us;

        // Link layer -> network layer offset and ethertype.
        std::size_t l3 = 0;
        std::uint16_t ethertype = 0x0800;
        if (linktype == kEthernet) {
            if (pkt.size() < 14) { res.note_error("record " + std::to_string(record) + ": short Ethernet frame"); continue; }
            ethertype = be16(pkt, 12);
            l3 = 14;
            while (ethertype == 0x8100 || ethertype == 0x88A8) {  // VLAN tags
                if (pkt.size() < l3 + 4) break;
                ethertype = be16(pkt, l3 + 2);
                l3 += 4;
            }
        } else if (linktype == kLinuxSll) {
            if (pkt.size() < 16) { res.note_error("record " + std::to_string(record) + ": short SLL header"); continue; }
            ethertype = be16(pkt, 14);
            l3 = 16;
        } else if (!pkt.empty() && (pkt[0] >> 4) == 6) {
            ethertype = 0x86DD;
        }
        if (ethertype == 0x86DD) {
            ++res.ipv6_rejected;
            continue;
        }
        if (ethertype != 0x0800) { ++res.non_query; continue; }

        auto ip = pkt.subspan(l3);
        if (ip.size() < 20 || (ip[0] >> 4) != 4) { res.note_error("record " + std::to_string(record) + ": bad IPv4 header"); continue; }
        const std::size_t ihl = std::size_t{ip[0] & 0x0Fu} * 4;
        const std::size_t total = be16(ip, 2);
        if (ihl < 20 || total < ihl || ip.size() < ihl) { res.note_error("record " + std::to_string(record) + ": bad IPv4 lengths"); continue; }
        if (ip[9] != 6) { ++res.non_query; continue; }
        const std::uint16_t frag = be16(ip, 6);
        if ((frag & 0x1FFFu) != 0 || (frag & 0x2000u) != 0) { ++res.non_query; continue; }  // fragments not reassembled
        const Ipv4Address src{be32(ip, 12)};
        const Ipv4Address dst{be32(ip, 16)};
        auto tcp = ip.subspan(ihl, std::min(ip.size(), total) - ihl);
        if (tcp.size() < 20) { res.note_error("record " + std::to_string(record) + ": short TCP header"); continue; }
        const std::uint16_t sport = be16(tcp, 0);
        const std::uint16_t dport = be16(tcp, 2);
        const std::size_t doff = static_cast<std::size_t>(tcp[12] >> 4) * 4;
        if (doff < 20 || tcp.size() < doff) { res.note_error("record " + std::to_string(record) + ": bad TCP data offset"); continue; }
        if (dport != kModbusPort) { ++res.non_query; continue; }
        auto payload = tcp.subspan(doff);

        // One segment may carry several MBAP frames.
        std::size_t p = 0;
        while (payload.size() - p >= 8) {
            const std::uint16_t tid = be16(payload, p);
            const std::uint16_t proto = be16(payload, p + 2);
            const std::uint16_t len = be16(payload, p + 4);
            if (proto != 0 || len < 2 || len > 254) {
                res.note_error("record " + std::to_string(record) + ": bad MBAP header");
                break;
            }
            if (payload.size() - p < 6u + len) {
                res.note_error("record " + std::to_string(record) + ": truncated Modbus PDU");
                break;
            }
            const std::uint8_t uid = payload[p + 6];
            auto pdu = payload.subspan(p + 7, len - 1u);
            p += 6u + len;
            auto fields = decode_request_fields(pdu);
            if (!fields) {
                res.note_error("record " + std::to_string(record) + ": PDU too short for function code " +
                               std::to_string(pdu[0]));
                continue;
            }
            ModbusQuery q;
            q.timestamp = static_cast<double>(ts_us - *origin_us) / 1e6;
            q.transaction_id = tid;
            q.unit_id = uid;
            q.function_code = pdu[0];
            q.reference_number = fields->first;
            q.count = fields->second;
            q.master_ip = src;
            q.slave_ip = dst;
            q.slave_port = sport;
            res.queries.push_back(q);
        }
    }
    detail::normalize_timestamps(res.queries);
    return res;
}

}  // namespace phasedfa
