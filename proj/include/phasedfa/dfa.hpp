#pragma once

// Adjacency-matrix DFAs over burst symbols: construction, boolean union and
// single-burst evaluation into the six transition categories.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "phasedfa/traffic.hpp"

namespace phasedfa {

/// Sorted set of distinct symbols; a symbol's index is its rank.
class Alphabet {
public:
    Alphabet() = default;

    /// Sorts and deduplicates.
    explicit Alphabet(std::vector<Symbol> symbols) : symbols_(std::move(symbols)) {
        std::sort(symbols_.begin(), symbols_.end());
        symbols_.erase(std::unique(symbols_.begin(), symbols_.end()), symbols_.end());
    }

    static Alphabet from_bursts(std::span<const Burst> bursts) {
        std::vector<Symbol> all;
        for (const auto& b : bursts) all.insert(all.end(), b.symbols.begin(), b.symbols.end());
        return Alphabet(std::move(all));
    }

    std::size_t size() const { return symbols_.size(); }
    const std::vector<Symbol>& symbols() const { return symbols_; }
    const Symbol& operator[](std::size_t i) const { return symbols_[i]; }

    std::optional<std::size_t> index_of(const Symbol& s) const {
        auto it = std::lower_bound(symbols_.begin(), symbols_.end(), s);
        if (it == symbols_.end() || *it != s) return std::nullopt;
        return static_cast<std::size_t>(it - symbols_.begin());
    }
    bool contains(const Symbol& s) const { return index_of(s).has_value(); }

    bool operator==(const Alphabet&) const = default;

private:
    std::vector<Symbol> symbols_;
};

/// (s+2)x(s+2) transition counts. Rows/columns 0..s-1 are symbol states,
/// s is q0 and s+1 is q_end.
class AdjMatrix {
public:
    using Count = std::uint64_t;

    AdjMatrix() : AdjMatrix(Alphabet{}) {}
    explicit AdjMatrix(Alphabet alphabet)
        : alphabet_(std::move(alphabet)), dim_(alphabet_.size() + 2), counts_(dim_ * dim_, 0) {}

    AdjMatrix(Alphabet alphabet, std::vector<Count> counts)
        : alphabet_(std::move(alphabet)), dim_(alphabet_.size() + 2), counts_(std::move(counts)) {
        if (counts_.size() != dim_ * dim_)
            throw std::invalid_argument("adjacency counts have " + std::to_string(counts_.size()) +
                                        " entries, expected " + std::to_string(dim_ * dim_));
    }

    const Alphabet& alphabet() const { return alphabet_; }
    std::size_t dim() const { return dim_; }
    std::size_t q0() const { return dim_ - 2; }
    std::size_t q_end() const { return dim_ - 1; }

    Count at(std::size_t row, std::size_t col) const { return counts_[row * dim_ + col]; }
    Count& at(std::size_t row, std::size_t col) { return counts_[row * dim_ + col]; }
    bool has_edge(std::size_t row, std::size_t col) const { return at(row, col) > 0; }

    /// Row-major view of all entries.
    const std::vector<Count>& counts() const { return counts_; }

    std::size_t edge_count() const {
        return static_cast<std::size_t>(std::count_if(counts_.begin(), counts_.end(),
                                                      [](Count c) { return c > 0; }));
    }

    /// Same support, every nonzero entry set to 1.
    AdjMatrix support() const {
        AdjMatrix out = *this;
        for (auto& c : out.counts_) c = c > 0 ? 1 : 0;
        return out;
    }

    bool is_boolean() const {
        return std::all_of(counts_.begin(), counts_.end(), [](Count c) { return c <= 1; });
    }

    bool operator==(const AdjMatrix&) const = default;

private:
    Alphabet alphabet_;
    std::size_t dim_;
    std::vector<Count> counts_;
};

/// Interior transitions are incremented; the closing edge to q_end is assigned 1
/// rather than incremented, so only its support is meaningful.
inline AdjMatrix build_adj_matrix(std::span<const Burst> bursts, const Alphabet& alphabet) {
    AdjMatrix m(alphabet);
    for (const auto& burst : bursts) {
        std::size_t current = m.q0();
        for (const auto& sym : burst.symbols) {
            auto idx = alphabet.index_of(sym);
            if (!idx)
                throw std::invalid_argument("symbol " + sym.to_string() + " is not in the alphabet");
            ++m.at(current, *idx);
            current = *idx;
        }
        if (current != m.q0()) m.at(current, m.q_end()) = 1;
    }
    return m;
}

inline void require_same_alphabet(std::span<const AdjMatrix> matrices) {
    for (const auto& m : matrices)
        if (m.alphabet() != matrices.front().alphabet())
            throw std::invalid_argument("adjacency matrices built over different alphabets");
}

/// Entry is 1 iff nonzero in any input.
inline AdjMatrix boolean_or(std::span<const AdjMatrix> matrices) {
    if (matrices.empty()) throw std::invalid_argument("boolean_or of an empty set");
    require_same_alphabet(matrices);
    AdjMatrix out(matrices.front().alphabet());
    for (const auto& m : matrices)
        for (std::size_t r = 0; r < m.dim(); ++r)
            for (std::size_t c = 0; c < m.dim(); ++c)
                if (m.has_edge(r, c)) out.at(r, c) = 1;
    return out;
}

enum class Category { normal, miss, unknown, retransmit, wrong_beginning, wrong_ending };

inline const char* to_string(Category c) {
    switch (c) {
        case Category::normal: return "normal";
        case Category::miss: return "miss";
        case Category::unknown: return "unknown";
        case Category::retransmit: return "retransmit";
        case Category::wrong_beginning: return "wrong_beginning";
        case Category::wrong_ending: return "wrong_ending";
    }
    return "?";
}

struct BurstCounters {
    std::uint64_t normal = 0;
    std::uint64_t miss = 0;
    std::uint64_t unknown = 0;
    std::uint64_t retransmit = 0;
    std::uint64_t wrong_beginning = 0;
    std::uint64_t wrong_ending = 0;

    std::uint64_t total() const {
        return normal + miss + unknown + retransmit + wrong_beginning + wrong_ending;
    }
    /// Everything except Normal.
    std::uint64_t anomalies() const { return total() - normal; }
    /// Anomalies other than Unknown; the secondary phase-assignment key.
    std::uint64_t other_anomalies() const {
        return miss + retransmit + wrong_beginning + wrong_ending;
    }

    std::uint64_t get(Category c) const {
        switch (c) {
            case Category::normal: return normal;
            case Category::miss: return miss;
            case Category::unknown: return unknown;
            case Category::retransmit: return retransmit;
            case Category::wrong_beginning: return wrong_beginning;
            case Category::wrong_ending: return wrong_ending;
        }
        return 0;
    }

    /// Anomaly category with the largest count. Ties resolve in the order
    /// unknown, wrong_beginning, wrong_ending, retransmit, miss: a miss next to
    /// an unknown symbol or a bad boundary is a side effect of that anomaly.
    /// Returns nullopt for an all-normal burst.
    std::optional<Category> dominant_anomaly() const {
        constexpr Category order[] = {Category::unknown, Category::wrong_beginning,
                                      Category::wrong_ending, Category::retransmit, Category::miss};
        std::optional<Category> best;
        std::uint64_t best_count = 0;
        for (auto c : order) {
            if (get(c) > best_count) {
                best = c;
                best_count = get(c);
            }
        }
        return best;
    }

    BurstCounters& operator+=(const BurstCounters& o) {
        normal += o.normal;
        miss += o.miss;
        unknown += o.unknown;
        retransmit += o.retransmit;
        wrong_beginning += o.wrong_beginning;
        wrong_ending += o.wrong_ending;
        return *this;
    }

    bool operator==(const BurstCounters&) const = default;
};

/// Classifies burst.size() + 1 transitions: the q0 entry, each interior pair
/// (Unknown, then Retransmit, then Normal/Miss, in that priority) and the
/// q_end exit. An unknown first or last symbol has no matrix row and yields
/// Wrong-Beginning or Wrong-Ending; a transition out of an unknown state into
/// a known one has no edge and is a Miss.
inline BurstCounters evaluate_burst(const AdjMatrix& dfa, const Burst& burst) {
    BurstCounters c;
    const auto& syms = burst.symbols;
    if (syms.empty()) return c;
    const auto& alpha = dfa.alphabet();

    auto first = alpha.index_of(syms.front());
    if (first && dfa.has_edge(dfa.q0(), *first))
        ++c.normal;
    else
        ++c.wrong_beginning;

    auto current = first;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto next = alpha.index_of(syms[i + 1]);
        if (!next)
            ++c.unknown;
        else if (syms[i] == syms[i + 1])
            ++c.retransmit;
        else if (current && dfa.has_edge(*current, *next))
            ++c.normal;
        else
            ++c.miss;
        current = next;
    }

    if (current && dfa.has_edge(*current, dfa.q_end()))
        ++c.normal;
    else
        ++c.wrong_ending;
    return c;
}

// JSON: {"alphabet": [[fc,rn,cnt],...], "counts": [row-major (s+2)^2 integers]}

inline void to_json(nlohmann::json& j, const Alphabet& a) { j = a.symbols(); }

inline void from_json(const nlohmann::json& j, Alphabet& a) {
    auto syms = j.get<std::vector<Symbol>>();
    a = Alphabet(syms);
    if (a.symbols() != syms)
        throw std::invalid_argument("alphabet must be sorted and free of duplicates");
}

inline void to_json(nlohmann::json& j, const AdjMatrix& m) {
    j = nlohmann::json{{"alphabet", m.alphabet()}, {"counts", m.counts()}};
}

inline void from_json(const nlohmann::json& j, AdjMatrix& m) {
    m = AdjMatrix(j.at("alphabet").get<Alphabet>(), j.at("counts").get<std::vector<AdjMatrix::Count>>());
}

inline void to_json(nlohmann::json& j, const BurstCounters& c) {
    j = nlohmann::json{{"normal", c.normal},
                       {"miss", c.miss},
                       {"unknown", c.unknown},
                       {"retransmit", c.retransmit},
                       {"wrong_beginning", c.wrong_beginning},
                       {"wrong_ending", c.wrong_ending}};
}

}  // namespace phasedfa
