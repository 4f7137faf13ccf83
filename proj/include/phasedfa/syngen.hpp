#pragma once

// Deterministic synthetic Modbus traffic with known phase structure and
// optional anomaly injection. Used as ground truth by the test suites.

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "phasedfa/rng.hpp"
#include "phasedfa/traffic.hpp"

namespace phasedfa {

enum class InjectionKind { unknown_symbol, reorder, retransmit, truncate_burst, foreign_prefix };

inline const char* to_string(InjectionKind k) {
    switch (k) {
        case InjectionKind::unknown_symbol: return "unknown_symbol";
        case InjectionKind::reorder: return "reorder";
        case InjectionKind::retransmit: return "retransmit";
        case InjectionKind::truncate_burst: return "truncate_burst";
        case InjectionKind::foreign_prefix: return "foreign_prefix";
    }
    return "?";
}

inline std::optional<InjectionKind> parse_injection_kind(std::string_view s) {
    for (auto k : {InjectionKind::unknown_symbol, InjectionKind::reorder, InjectionKind::retransmit,
                   InjectionKind::truncate_burst, InjectionKind::foreign_prefix})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

/// The legal bursts of one phase and its timing.
struct PhaseSpec {
    std::vector<std::vector<Symbol>> burst_grammars;
    double intra_burst_gap = 0.005;
    double inter_burst_gap = 2.0;
};

struct ScheduleSegment {
    std::string phase_id;
    std::size_t burst_count = 0;
};

struct Injection {
    std::size_t position = 0;  // burst index in the emitted sequence
    InjectionKind kind = InjectionKind::unknown_symbol;
};

struct ScenarioSpec {
    std::string name;
    ChannelId channel;
    std::map<std::string, PhaseSpec> phases;
    std::vector<ScheduleSegment> schedule;
    std::vector<Injection> injections;
    std::uint64_t rng_seed = 0;
    double burst_gap_threshold = 0.1;  // the ingest threshold the gaps must straddle

    std::size_t total_bursts() const {
        std::size_t n = 0;
        for (const auto& s : schedule) n += s.burst_count;
        return n;
    }
};

/// Invalid scenario; what() lists every violation.
class ScenarioError : public std::invalid_argument {
public:
    explicit ScenarioError(const std::vector<std::string>& problems)
        : std::invalid_argument(join(problems)), problems_(problems) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string out = "invalid scenario:";
        for (const auto& s : p) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> problems_;
};

inline std::vector<std::string> validation_problems(const ScenarioSpec& spec) {
    std::vector<std::string> problems;
    if (spec.schedule.empty()) problems.push_back("schedule is empty");
    for (const auto& [id, phase] : spec.phases) {
        if (phase.burst_grammars.empty()) problems.push_back("phase '" + id + "' has no burst grammars");
        for (std::size_t g = 0; g < phase.burst_grammars.size(); ++g)
            if (phase.burst_grammars[g].empty())
                problems.push_back("phase '" + id + "' grammar " + std::to_string(g) + " is empty");
        if (!(phase.intra_burst_gap > 0.0 && phase.intra_burst_gap < spec.burst_gap_threshold))
            problems.push_back("phase '" + id + "' intra_burst_gap must lie in (0, burst_gap_threshold)");
        if (!(phase.inter_burst_gap > spec.burst_gap_threshold))
            problems.push_back("phase '" + id + "' inter_burst_gap must exceed burst_gap_threshold");
    }
    for (std::size_t i = 0; i < spec.schedule.size(); ++i) {
        const auto& seg = spec.schedule[i];
        if (!spec.phases.contains(seg.phase_id))
            problems.push_back("schedule segment " + std::to_string(i) + " references unknown phase '" +
                               seg.phase_id + "'");
        if (seg.burst_count == 0)
            problems.push_back("schedule segment " + std::to_string(i) + " has burst_count 0");
    }
    std::set<std::size_t> seen;
    const std::size_t total = spec.total_bursts();
    for (const auto& inj : spec.injections) {
        if (inj.position >= total)
            problems.push_back("injection position " + std::to_string(inj.position) + " outside [0, " +
                               std::to_string(total) + ")");
        if (!seen.insert(inj.position).second)
            problems.push_back("more than one injection at position " + std::to_string(inj.position));
    }
    return problems;
}

inline void validate(const ScenarioSpec& spec) {
    auto p = validation_problems(spec);
    if (!p.empty()) throw ScenarioError(p);
}

struct InjectionRecord {
    std::size_t position = 0;
    InjectionKind kind = InjectionKind::unknown_symbol;
    std::vector<Symbol> original;
    std::vector<Symbol> mutated;
};

struct GroundTruth {
    std::vector<std::string> burst_phase;     // phase id per emitted burst
    std::vector<std::size_t> shift_bursts;    // burst indices where the phase changes
    std::vector<InjectionRecord> injections;  // ordered by position
    std::vector<std::size_t> burst_lengths;
};

struct GeneratedTraffic {
    std::vector<ModbusQuery> queries;
    std::vector<Burst> bursts;
    GroundTruth truth;
};

namespace detail {

inline std::set<Symbol> scenario_symbols(const ScenarioSpec& spec) {
    std::set<Symbol> out;
    for (const auto& [id, phase] : spec.phases)
        for (const auto& g : phase.burst_grammars) out.insert(g.begin(), g.end());
    return out;
}

/// A symbol outside every grammar of the scenario.
inline Symbol foreign_symbol(const std::set<Symbol>& known) {
    Symbol s{90, 0xFFFF, 1};
    while (known.contains(s)) --s.reference_number;
    return s;
}

inline std::vector<Symbol> mutate(const std::vector<Symbol>& burst, InjectionKind kind,
                                  const std::set<Symbol>& known, const std::set<Symbol>& start_symbols,
                                  std::size_t position) {
    auto fail = [&](const std::string& why) {
        return ScenarioError({"injection " + std::string(to_string(kind)) + " at burst " +
                              std::to_string(position) + ": " + why});
    };
    std::vector<Symbol> out = burst;
    const std::size_t len = burst.size();
    switch (kind) {
        case InjectionKind::unknown_symbol:
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, len / 2)),
                       foreign_symbol(known));
            return out;
        case InjectionKind::reorder:
            for (std::size_t i = 1; i + 2 < len; ++i) {
                if (out[i] != out[i + 1]) {
                    std::swap(out[i], out[i + 1]);
                    return out;
                }
            }
            throw fail("needs a burst of length >= 4 with two distinct interior neighbours");
        case InjectionKind::retransmit: {
            const Symbol repeated = out[len / 2];
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(len / 2), repeated);
            return out;
        }
        case InjectionKind::truncate_burst:
            if (len < 2) throw fail("needs a burst of length >= 2");
            out.pop_back();
            return out;
        case InjectionKind::foreign_prefix: {
            std::optional<Symbol> prefix;
            if (!start_symbols.contains(burst.back())) prefix = burst.back();
            for (auto it = known.begin(); !prefix && it != known.end(); ++it)
                if (!start_symbols.contains(*it)) prefix = *it;
            if (!prefix) throw fail("every known symbol starts some burst");
            out.insert(out.begin(), *prefix);
            return out;
        }
    }
    return out;
}

inline std::int64_t to_micros(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1e6)); }

}  // namespace detail

/// Emits bursts segment by segment, each drawn uniformly from its phase's
/// grammars, then applies injections. Burst draws depend only on the seed and
/// schedule, so the same spec with and without injections yields the same
/// clean bursts.
inline GeneratedTraffic generate(const ScenarioSpec& spec) {
    validate(spec);
    Rng rng(derive_seed(spec.rng_seed, {0x5EED}));
    const auto known = detail::scenario_symbols(spec);
    std::set<Symbol> starts;
    for (const auto& [id, phase] : spec.phases)
        for (const auto& g : phase.burst_grammars) starts.insert(g.front());

    std::map<std::size_t, InjectionKind> injections;
    for (const auto& inj : spec.injections) injections.emplace(inj.position, inj.kind);

    GeneratedTraffic out;
    std::int64_t t_us = 0;
    std::uint16_t tid = 0;
    std::size_t index = 0;
    for (std::size_t s = 0; s < spec.schedule.size(); ++s) {
        const auto& seg = spec.schedule[s];
        const auto& phase = spec.phases.at(seg.phase_id);
        const std::int64_t intra = std::max<std::int64_t>(1, detail::to_micros(phase.intra_burst_gap));
        const std::int64_t inter = detail::to_micros(phase.inter_burst_gap);
        if (s > 0 && seg.phase_id != spec.schedule[s - 1].phase_id) out.truth.shift_bursts.push_back(index);
        for (std::size_t b = 0; b < seg.burst_count; ++b, ++index) {
            const auto& grammar = phase.burst_grammars[rng.uniform_index(phase.burst_grammars.size())];
            std::vector<Symbol> symbols = grammar;
            if (auto it = injections.find(index); it != injections.end()) {
                auto mutated = detail::mutate(grammar, it->second, known, starts, index);
                out.truth.injections.push_back(InjectionRecord{index, it->second, grammar, mutated});
                symbols = std::move(mutated);
            }
            if (index > 0) t_us += inter;
            Burst burst;
            burst.start_time = static_cast<double>(t_us) / 1e6;
            for (std::size_t j = 0; j < symbols.size(); ++j) {
                if (j > 0) t_us += intra;
                ModbusQuery q;
                q.timestamp = static_cast<double>(t_us) / 1e6;
                q.transaction_id = tid++;
                q.unit_id = spec.channel.unit_id;
                q.function_code = symbols[j].function_code;
                q.reference_number = symbols[j].reference_number;
                q.count = symbols[j].count;
                q.master_ip = spec.channel.master_ip;
                q.slave_ip = spec.channel.slave_ip;
                q.slave_port = spec.channel.slave_port;
                out.queries.push_back(q);
            }
            burst.end_time = static_cast<double>(t_us) / 1e6;
            burst.symbols = std::move(symbols);
            out.truth.burst_phase.push_back(seg.phase_id);
            out.truth.burst_lengths.push_back(burst.size());
            out.bursts.push_back(std::move(burst));
        }
    }
    return out;
}

/// One NDJSON line per query with fixed field order and microsecond timestamps.
inline void write_ndjson(std::ostream& os, std::span<const ModbusQuery> queries) {
    char line[256];
    for (const auto& q : queries) {
        const auto m = q.master_ip.to_string(), s = q.slave_ip.to_string();
        std::snprintf(line, sizeof line,
                      "{\"ts\":%.17g,\"mip\":\"%s\",\"sip\":\"%s\",\"uid\":%u,\"sport\":%u,\"tid\":%u,"
                      "\"fc\":%u,\"rn\":%u,\"cnt\":%u}\n",
                      q.timestamp, m.c_str(), s.c_str(), unsigned{q.unit_id}, unsigned{q.slave_port},
                      unsigned{q.transaction_id}, unsigned{q.function_code}, unsigned{q.reference_number},
                      unsigned{q.count});
        os << line;
    }
}

// Scenario JSON:
// {"name": ..., "seed": N, "channel": {...},
//  "phases": {"A": {"grammars": [[[fc,rn,cnt], ...], ...], "intra_burst_gap": s, "inter_burst_gap": s}},
//  "schedule": [{"phase": "A", "burst_count": n}, ...],
//  "injections": [{"position": i, "kind": "reorder"}, ...]}

inline void from_json(const nlohmann::json& j, ScenarioSpec& spec) {
    spec = ScenarioSpec{};
    spec.name = j.value("name", std::string{});
    spec.rng_seed = j.value("seed", std::uint64_t{0});
    spec.burst_gap_threshold = j.value("burst_gap_threshold", 0.1);
    spec.channel = j.at("channel").get<ChannelId>();
    for (const auto& [id, p] : j.at("phases").items()) {
        PhaseSpec ps;
        ps.burst_grammars = p.at("grammars").get<std::vector<std::vector<Symbol>>>();
        ps.intra_burst_gap = p.value("intra_burst_gap", ps.intra_burst_gap);
        ps.inter_burst_gap = p.value("inter_burst_gap", ps.inter_burst_gap);
        spec.phases.emplace(id, std::move(ps));
    }
    for (const auto& s : j.at("schedule"))
        spec.schedule.push_back(ScheduleSegment{s.at("phase").get<std::string>(), s.at("burst_count").get<std::size_t>()});
    if (auto it = j.find("injections"); it != j.end()) {
        for (const auto& inj : *it) {
            auto kind = parse_injection_kind(inj.at("kind").get<std::string>());
            if (!kind) throw ScenarioError({"unknown injection kind '" + inj.at("kind").get<std::string>() + "'"});
            spec.injections.push_back(Injection{inj.at("position").get<std::size_t>(), *kind});
        }
    }
}

inline void to_json(nlohmann::json& j, const ScenarioSpec& spec) {
    nlohmann::json phases = nlohmann::json::object();
    for (const auto& [id, p] : spec.phases)
        phases[id] = {{"grammars", p.burst_grammars},
                      {"intra_burst_gap", p.intra_burst_gap},
                      {"inter_burst_gap", p.inter_burst_gap}};
    nlohmann::json schedule = nlohmann::json::array();
    for (const auto& s : spec.schedule) schedule.push_back({{"phase", s.phase_id}, {"burst_count", s.burst_count}});
    nlohmann::json injections = nlohmann::json::array();
    for (const auto& i : spec.injections) injections.push_back({{"position", i.position}, {"kind", to_string(i.kind)}});
    j = nlohmann::json{{"name", spec.name},
                       {"seed", spec.rng_seed},
                       {"burst_gap_threshold", spec.burst_gap_threshold},
                       {"channel", spec.channel},
                       {"phases", phases},
                       {"schedule", schedule},
                       {"injections", injections}};
}

inline void to_json(nlohmann::json& j, const GroundTruth& t) {
    nlohmann::json inj = nlohmann::json::array();
    for (const auto& r : t.injections)
        inj.push_back({{"position", r.position},
                       {"kind", to_string(r.kind)},
                       {"original", r.original},
                       {"mutated", r.mutated}});
    j = nlohmann::json{{"bursts", t.burst_phase.size()},
                       {"burst_phase", t.burst_phase},
                       {"burst_lengths", t.burst_lengths},
                       {"shift_bursts", t.shift_bursts},
                       {"injections", inj}};
}

}  // namespace phasedfa
