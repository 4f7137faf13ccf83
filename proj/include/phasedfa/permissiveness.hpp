#pragma once

// Model permissiveness: how many length-b symbol sequences a DFA (or a set of
// phase DFAs) accepts, relative to all s^b sequences.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "phasedfa/dfa.hpp"
#include "phasedfa/kphase.hpp"

namespace phasedfa {

/// Exact path count; s^b overflows fixed-width integers quickly.
using PathCount = boost::multiprecision::cpp_int;

inline constexpr std::size_t kDefaultMaxPhases = 15;

/// Dense square matrix of exact integers.
class BigMatrix {
public:
    explicit BigMatrix(std::size_t dim) : dim_(dim), v_(dim * dim) {}

    static BigMatrix from(const AdjMatrix& m) {
        BigMatrix out(m.dim());
        for (std::size_t r = 0; r < m.dim(); ++r)
            for (std::size_t c = 0; c < m.dim(); ++c) out.at(r, c) = m.at(r, c);
        return out;
    }

    static BigMatrix identity(std::size_t dim) {
        BigMatrix out(dim);
        for (std::size_t i = 0; i < dim; ++i) out.at(i, i) = 1;
        return out;
    }

    std::size_t dim() const { return dim_; }
    PathCount& at(std::size_t r, std::size_t c) { return v_[r * dim_ + c]; }
    const PathCount& at(std::size_t r, std::size_t c) const { return v_[r * dim_ + c]; }

    BigMatrix operator*(const BigMatrix& o) const {
        BigMatrix out(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t l = 0; l < dim_; ++l) {
                const auto& a = at(i, l);
                if (a.is_zero()) continue;
                for (std::size_t j = 0; j < dim_; ++j)
                    if (!o.at(l, j).is_zero()) out.at(i, j) += a * o.at(l, j);
            }
        return out;
    }

private:
    std::size_t dim_;
    std::vector<PathCount> v_;
};

/// A^e by repeated squaring.
inline BigMatrix matrix_power(const BigMatrix& a, std::size_t e) {
    BigMatrix result = BigMatrix::identity(a.dim());
    BigMatrix base = a;
    while (e > 0) {
        if (e & 1u) result = result * base;
        e >>= 1;
        if (e > 0) base = base * base;
    }
    return result;
}

/// Number of q0 -> q_end walks of length b + 1 in the boolean DFA, i.e. the
/// (q0, q_end) entry of A^(b+1). Computed by propagating the q0 row b + 1
/// times, which needs only O(b * dim^2) big-integer operations.
inline PathCount count_paths_single(const AdjMatrix& dfa, std::size_t b) {
    if (b < 1) throw std::invalid_argument("burst length b must be >= 1");
    const std::size_t n = dfa.dim();
    std::vector<PathCount> row(n), next(n);
    row[dfa.q0()] = 1;
    for (std::size_t step = 0; step <= b; ++step) {
        for (auto& x : next) x = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (row[i].is_zero()) continue;
            for (std::size_t j = 0; j < n; ++j)
                if (dfa.has_edge(i, j)) next[j] += row[i];
        }
        std::swap(row, next);
    }
    return row[dfa.q_end()];
}

struct PermValue {
    double r_perm = 0.0;
    bool no_complete_paths = false;
};

/// R_perm = allowed^(1/b) / s, with the root taken in floating point only at
/// the end. Zero allowed paths give 0 and set the flag.
inline PermValue r_perm_from_count(const PathCount& allowed, std::size_t s, std::size_t b) {
    if (s < 1 || b < 1) throw std::invalid_argument("R_perm needs s >= 1 and b >= 1");
    if (allowed.is_zero()) return PermValue{0.0, true};
    // log-domain root keeps counts beyond long double range usable.
    const long double count = allowed.convert_to<long double>();
    long double root;
    if (std::isfinite(count)) {
        root = std::pow(count, 1.0L / static_cast<long double>(b));
    } else {
        const std::size_t bits = boost::multiprecision::msb(allowed);
        const PathCount mant = allowed >> (bits > 60 ? bits - 60 : 0);
        const long double log_c =
            std::log(mant.convert_to<long double>()) + static_cast<long double>(bits > 60 ? bits - 60 : 0) * std::log(2.0L);
        root = std::exp(log_c / static_cast<long double>(b));
    }
    return PermValue{static_cast<double>(root / static_cast<long double>(s)), false};
}

inline PermValue r_perm_single(const AdjMatrix& dfa, std::size_t b) {
    return r_perm_from_count(count_paths_single(dfa, b), dfa.alphabet().size(), b);
}

/// Element-wise AND: only edges present in every input survive.
inline AdjMatrix intersect(std::span<const AdjMatrix> dfas) {
    if (dfas.empty()) throw std::invalid_argument("intersect of an empty set");
    require_same_alphabet(dfas);
    AdjMatrix out(dfas.front().alphabet());
    for (std::size_t r = 0; r < out.dim(); ++r)
        for (std::size_t c = 0; c < out.dim(); ++c) {
            bool all = true;
            for (const auto& d : dfas) all = all && d.has_edge(r, c);
            if (all) out.at(r, c) = 1;
        }
    return out;
}

/// Raised when inclusion-exclusion would need more than 2^k_max - 1 terms.
class TooManyPhases : public std::invalid_argument {
public:
    TooManyPhases(std::size_t k, std::size_t k_max)
        : std::invalid_argument("inclusion-exclusion over " + std::to_string(k) + " DFAs needs 2^" +
                                std::to_string(k) + " - 1 intersection terms; limit is k <= " +
                                std::to_string(k_max)) {}
};

namespace detail {

inline void inclusion_exclusion(std::span<const AdjMatrix> dfas, const AdjMatrix* acc, std::size_t start,
                                std::size_t depth, std::size_t b, PathCount& total) {
    for (std::size_t j = start; j < dfas.size(); ++j) {
        AdjMatrix term = acc ? intersect(std::array{*acc, dfas[j]}) : dfas[j].support();
        auto paths = count_paths_single(term, b);
        if (paths.is_zero()) continue;  // every superset intersects to a subgraph of `term`
        if (depth % 2 == 0)
            total += paths;
        else
            total -= paths;
        inclusion_exclusion(dfas, &term, j + 1, depth + 1, b, total);
    }
}

}  // namespace detail

/// Number of distinct length-b sequences accepted by at least one DFA:
/// sum over nonempty subsets J of (-1)^(|J|-1) * paths(AND of J).
/// Subsets are enumerated depth-first so each intersection extends its
/// parent's; branches whose intersection admits no path are pruned.
inline PathCount count_unique_paths(std::span<const AdjMatrix> dfas, std::size_t b,
                                    std::size_t k_max = kDefaultMaxPhases) {
    const std::size_t k = dfas.size();
    if (k < 1) throw std::invalid_argument("count_unique_paths needs at least one DFA");
    if (k > k_max) throw TooManyPhases(k, k_max);
    if (b < 1) throw std::invalid_argument("burst length b must be >= 1");
    require_same_alphabet(dfas);
    PathCount total = 0;
    detail::inclusion_exclusion(dfas, nullptr, 0, 0, b, total);
    return total;
}

struct PermReport {
    ChannelId channel;
    std::size_t burst_length_b = 0;
    std::size_t alphabet_size_s = 0;
    std::size_t k = 1;
    PathCount allowed_paths;
    double r_perm = 0.0;
    bool no_complete_paths = false;
};

inline PermReport r_perm_model(const PhaseModel& model, std::size_t b, std::size_t k_max = kDefaultMaxPhases) {
    if (b < 1) throw std::invalid_argument("burst length b must be >= 1");
    PermReport rep;
    rep.channel = model.channel;
    rep.burst_length_b = b;
    rep.alphabet_size_s = model.alphabet.size();
    rep.k = model.dfas.size();
    rep.allowed_paths = count_unique_paths(model.dfas, b, k_max);
    auto v = r_perm_from_count(rep.allowed_paths, std::max<std::size_t>(1, rep.alphabet_size_s), b);
    rep.r_perm = v.r_perm;
    rep.no_complete_paths = v.no_complete_paths;
    return rep;
}

/// round(mean burst length), at least 1.
inline std::size_t typical_burst_length(std::span<const Burst> bursts) {
    if (bursts.empty()) return 1;
    std::size_t total = 0;
    for (const auto& b : bursts) total += b.size();
    const auto mean = static_cast<double>(total) / static_cast<double>(bursts.size());
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(mean)));
}

}  // namespace phasedfa
