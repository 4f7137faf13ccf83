#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "phasedfa/phasedfa.hpp"

namespace phasedfa::test {

inline Symbol sym(unsigned fc, unsigned rn = 0, unsigned cnt = 0) {
    return Symbol{static_cast<std::uint8_t>(fc), static_cast<std::uint16_t>(rn), static_cast<std::uint16_t>(cnt)};
}

inline Burst burst(std::vector<Symbol> s, double t0 = 0.0) {
    Burst b{std::move(s), t0, t0};
    b.end_time = t0 + 0.001 * static_cast<double>(b.symbols.size() - 1);
    return b;
}

/// Alphabet of s symbols (1,0,0) .. (s,0,0).
inline Alphabet alphabet_of_size(std::size_t s) {
    std::vector<Symbol> v;
    for (std::size_t i = 0; i < s; ++i) v.push_back(sym(static_cast<unsigned>(i + 1)));
    return Alphabet(v);
}

/// Boolean DFA with every edge present independently with probability p.
/// Edges into q0 and out of q_end are never set.
inline AdjMatrix random_dfa(Rng& rng, const Alphabet& a, double p) {
    AdjMatrix m(a);
    for (std::size_t r = 0; r < m.dim(); ++r) {
        if (r == m.q_end()) continue;
        for (std::size_t c = 0; c < m.dim(); ++c) {
            if (c == m.q0()) continue;
            if (r == m.q0() && c == m.q_end()) continue;
            if (rng.uniform01() < p) m.at(r, c) = 1;
        }
    }
    return m;
}

/// Oracle: explicit depth-first enumeration of q0 -> q_end walks with exactly
/// b + 1 edges.
inline std::uint64_t dfs_count_walks(const AdjMatrix& m, std::size_t b) {
    std::function<std::uint64_t(std::size_t, std::size_t)> walk = [&](std::size_t node, std::size_t edges_left) {
        if (edges_left == 0) return std::uint64_t{node == m.q_end() ? 1u : 0u};
        std::uint64_t total = 0;
        for (std::size_t next = 0; next < m.dim(); ++next)
            if (m.at(node, next) != 0) total += walk(next, edges_left - 1);
        return total;
    };
    return walk(m.q0(), b + 1);
}

/// Oracle: does the DFA accept the symbol-index sequence as a complete burst?
inline bool accepts(const AdjMatrix& m, const std::vector<std::size_t>& seq) {
    std::size_t cur = m.q0();
    for (auto s : seq) {
        if (m.at(cur, s) == 0) return false;
        cur = s;
    }
    return m.at(cur, m.q_end()) != 0;
}

/// Oracle: enumerate all s^b sequences and count those accepted by any DFA.
inline std::uint64_t brute_force_union(const std::vector<AdjMatrix>& dfas, std::size_t s, std::size_t b) {
    std::vector<std::size_t> seq(b, 0);
    std::uint64_t count = 0;
    for (;;) {
        for (const auto& d : dfas)
            if (accepts(d, seq)) {
                ++count;
                break;
            }
        std::size_t i = 0;
        while (i < b && ++seq[i] == s) seq[i++] = 0;
        if (i == b) break;
    }
    return count;
}

inline ScenarioSpec load_scenario(const std::string& name) {
    std::ifstream in(std::string(PHASEDFA_SCENARIO_DIR) + "/" + name + ".json");
    return nlohmann::json::parse(in).get<ScenarioSpec>();
}

/// Small random but valid scenario: 1-3 phases over a shared symbol pool,
/// grammars of length 1-6, 1-4 segments.
inline ScenarioSpec random_scenario(std::uint64_t seed) {
    Rng rng(seed);
    ScenarioSpec spec;
    spec.name = "random_" + std::to_string(seed);
    spec.rng_seed = seed;
    spec.channel = ChannelId{Ipv4Address::from_octets(10, 0, 0, 1), Ipv4Address::from_octets(10, 0, 0, 2), 1, 40000};
    const std::size_t pool = 2 + rng.uniform_index(8);
    const std::size_t phases = 1 + rng.uniform_index(3);
    for (std::size_t p = 0; p < phases; ++p) {
        PhaseSpec ps;
        const std::size_t grammars = 1 + rng.uniform_index(4);
        for (std::size_t g = 0; g < grammars; ++g) {
            std::vector<Symbol> seq;
            const std::size_t len = 1 + rng.uniform_index(6);
            for (std::size_t i = 0; i < len; ++i)
                seq.push_back(sym(3, 100 * static_cast<unsigned>(rng.uniform_index(pool)), 2));
            ps.burst_grammars.push_back(seq);
        }
        ps.intra_burst_gap = 0.001 + 0.05 * rng.uniform01();
        ps.inter_burst_gap = 0.5 + 3.0 * rng.uniform01();
        spec.phases.emplace(std::string(1, static_cast<char>('A' + p)), ps);
    }
    const std::size_t segments = 1 + rng.uniform_index(4);
    for (std::size_t s = 0; s < segments; ++s)
        spec.schedule.push_back(ScheduleSegment{std::string(1, static_cast<char>('A' + rng.uniform_index(phases))),
                                                20 + rng.uniform_index(200)});
    return spec;
}

}  // namespace phasedfa::test
