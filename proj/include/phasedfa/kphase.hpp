#pragma once

// The k-phase model: one boolean DFA per detected traffic phase, trained on a
// burst-sampled subset of the channel and enforced burst by burst.

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "phasedfa/dfa.hpp"
#include "phasedfa/phase_detect.hpp"
#include "phasedfa/traffic.hpp"

namespace phasedfa {

/// Every stride-th burst, starting at offset, goes to training.
struct SamplingPlan {
    std::size_t stride = 3;
    std::size_t offset = 0;

    void validate() const {
        if (stride < 1) throw std::invalid_argument("sampling stride must be >= 1");
        if (offset >= stride) throw std::invalid_argument("sampling offset must be < stride");
    }
};

struct TrainTestSplit {
    std::vector<Burst> train;
    std::vector<Burst> test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

inline TrainTestSplit sample_training_set(std::span<const Burst> bursts, const SamplingPlan& plan) {
    plan.validate();
    TrainTestSplit s;
    for (std::size_t i = 0; i < bursts.size(); ++i) {
        if (i % plan.stride == plan.offset) {
            s.train.push_back(bursts[i]);
            s.train_indices.push_back(i);
        } else {
            s.test.push_back(bursts[i]);
            s.test_indices.push_back(i);
        }
    }
    return s;
}

/// The first round(fraction * n) bursts train; the rest test. This is the
/// non-sampled baseline that misses phases starting late in the recording.
inline TrainTestSplit prefix_split(std::span<const Burst> bursts, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("prefix fraction must lie in (0, 1]");
    const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(bursts.size())));
    TrainTestSplit s;
    for (std::size_t i = 0; i < bursts.size(); ++i) {
        auto& dst = i < cut ? s.train : s.test;
        auto& idx = i < cut ? s.train_indices : s.test_indices;
        dst.push_back(bursts[i]);
        idx.push_back(i);
    }
    return s;
}

/// How the training set was drawn, so enforcement can reconstruct the test set.
struct TrainingSplitInfo {
    std::string method = "stride";  // "stride" | "prefix" | "all"
    std::size_t stride = 3;
    std::size_t offset = 0;
    double prefix_fraction = 0.0;

    TrainTestSplit apply(std::span<const Burst> bursts) const {
        if (method == "stride") return sample_training_set(bursts, SamplingPlan{stride, offset});
        if (method == "prefix") return prefix_split(bursts, prefix_fraction);
        if (method == "all") {
            TrainTestSplit s;
            s.train.assign(bursts.begin(), bursts.end());
            s.test.assign(bursts.begin(), bursts.end());
            for (std::size_t i = 0; i < bursts.size(); ++i) {
                s.train_indices.push_back(i);
                s.test_indices.push_back(i);
            }
            return s;
        }
        throw std::invalid_argument("unknown training split method '" + method + "'");
    }
};

struct PhaseModel {
    ChannelId channel;
    Alphabet alphabet;
    std::size_t k = 1;
    std::vector<AdjMatrix> dfas;                     // boolean, one per phase (phase p is dfas[p - 1])
    std::vector<std::vector<std::size_t>> phase_windows;  // training window indices per phase
    bool single_phase = false;
    std::size_t training_bursts = 0;
    std::uint64_t seed = 0;
    TrainingSplitInfo split;
    std::vector<std::vector<double>> silhouette_table;

    /// Boolean OR of all phase DFAs: the single merged Burst-DFA.
    AdjMatrix merged() const { return boolean_or(dfas); }
};

/// Clusters the training windows into phases and ORs each cluster's window
/// matrices into that phase's DFA.
inline PhaseModel train(std::span<const Burst> train_bursts, const PhaseDetectConfig& cfg, std::uint64_t seed,
                        const ChannelId& channel = {}) {
    if (train_bursts.empty()) throw std::invalid_argument("training set is empty");
    PhaseModel model;
    model.channel = channel;
    model.seed = seed;
    model.training_bursts = train_bursts.size();
    model.alphabet = Alphabet::from_bursts(train_bursts);

    auto ranges = window_ranges(train_bursts, cfg.num_windows, cfg.partition);
    auto matrices = window_matrices(train_bursts, model.alphabet, ranges);
    std::vector<Point> pts;
    pts.reserve(matrices.size());
    for (const auto& m : matrices) pts.push_back(normalized_vector(m));

    auto sel = select_k(std::span<const Point>(pts), cfg, seed);
    model.k = sel.assignment.k;
    model.single_phase = sel.single_phase;
    model.silhouette_table = sel.table;
    model.phase_windows.assign(model.k, {});
    for (std::size_t w = 0; w < sel.assignment.labels.size(); ++w)
        model.phase_windows[sel.assignment.labels[w] - 1].push_back(w);
    for (const auto& members : model.phase_windows) {
        std::vector<AdjMatrix> group;
        for (auto w : members) group.push_back(matrices[w]);
        model.dfas.push_back(boolean_or(group));
    }
    return model;
}

struct ScoredBurst {
    std::size_t phase = 1;  // 1-based
    BurstCounters counters;

    bool flagged() const { return counters.anomalies() > 0; }
};

/// Scores the burst against every phase DFA and keeps the one with the fewest
/// unknowns, then the fewest other anomalies, then the lowest phase index.
inline ScoredBurst assign_and_score(const PhaseModel& model, const Burst& burst) {
    ScoredBurst best;
    bool have = false;
    for (std::size_t p = 0; p < model.dfas.size(); ++p) {
        auto c = evaluate_burst(model.dfas[p], burst);
        const bool better = !have || c.unknown < best.counters.unknown ||
                            (c.unknown == best.counters.unknown &&
                             c.other_anomalies() < best.counters.other_anomalies());
        if (better) {
            best = ScoredBurst{p + 1, c};
            have = true;
        }
    }
    return best;
}

/// Aggregated counters. Query-level ratios divide by the summed burst lengths
/// and count the q0 entry check plus interior checks (the q_end exit check is
/// excluded); boundary ratios divide by the burst count.
struct RatioSummary {
    BurstCounters totals;
    std::size_t bursts = 0;
    std::size_t queries = 0;
    std::optional<double> normal_ratio;   // normal / queries
    std::optional<double> nmr_ratio;      // (normal + miss + retransmit) / queries
    std::optional<double> unknown_ratio;
    std::optional<double> miss_ratio;
    std::optional<double> retransmit_ratio;
    std::optional<double> bad_beginning_ratio;  // wrong_beginning / bursts
    std::optional<double> bad_ending_ratio;     // wrong_ending / bursts

    /// Normal classifications excluding the q_end exit checks.
    std::uint64_t query_normals() const { return totals.normal - (bursts - totals.wrong_ending); }
};

inline RatioSummary summarize(std::span<const ScoredBurst> scored, std::span<const Burst> bursts) {
    RatioSummary r;
    r.bursts = scored.size();
    for (const auto& s : scored) r.totals += s.counters;
    for (const auto& b : bursts) r.queries += b.size();
    if (r.bursts == 0 || r.queries == 0) return r;
    const double q = static_cast<double>(r.queries);
    const double nb = static_cast<double>(r.bursts);
    const double normals = static_cast<double>(r.query_normals());
    r.normal_ratio = normals / q;
    r.nmr_ratio = (normals + static_cast<double>(r.totals.miss + r.totals.retransmit)) / q;
    r.unknown_ratio = static_cast<double>(r.totals.unknown) / q;
    r.miss_ratio = static_cast<double>(r.totals.miss) / q;
    r.retransmit_ratio = static_cast<double>(r.totals.retransmit) / q;
    r.bad_beginning_ratio = static_cast<double>(r.totals.wrong_beginning) / nb;
    r.bad_ending_ratio = static_cast<double>(r.totals.wrong_ending) / nb;
    return r;
}

struct EnforcementResult {
    std::vector<ScoredBurst> per_burst;
    RatioSummary summary;
};

inline EnforcementResult enforce(const PhaseModel& model, std::span<const Burst> test_bursts) {
    EnforcementResult res;
    res.per_burst.reserve(test_bursts.size());
    for (const auto& b : test_bursts) res.per_burst.push_back(assign_and_score(model, b));
    res.summary = summarize(res.per_burst, test_bursts);
    return res;
}

struct PartScore {
    std::size_t part = 0;
    std::size_t burst_begin = 0;
    std::size_t burst_end = 0;
    double start_time = 0.0;
    double end_time = 0.0;
    RatioSummary summary;
};

/// Enforcement ratios over num_parts contiguous slices of the test bursts
/// (remainder to the earliest parts).
inline std::vector<PartScore> score_over_time(const PhaseModel& model, std::span<const Burst> test_bursts,
                                              std::size_t num_parts) {
    if (num_parts < 1) throw std::invalid_argument("num_parts must be >= 1");
    auto scored = enforce(model, test_bursts).per_burst;
    std::vector<PartScore> out;
    for (auto [b, e] : window_ranges(test_bursts, num_parts, WindowPartition::equal_bursts)) {
        PartScore p;
        p.part = out.size();
        p.burst_begin = b;
        p.burst_end = e;
        p.start_time = test_bursts[b].start_time;
        p.end_time = test_bursts[e - 1].end_time;
        p.summary = summarize(std::span(scored).subspan(b, e - b), test_bursts.subspan(b, e - b));
        out.push_back(std::move(p));
    }
    return out;
}

// Persistence: one JSON object per channel.

inline void to_json(nlohmann::json& j, const PhaseModel& m) {
    nlohmann::json dfas = nlohmann::json::array();
    for (const auto& d : m.dfas) dfas.push_back(d.counts());
    j = nlohmann::json{{"channel", m.channel},
                       {"alphabet", m.alphabet},
                       {"k", m.k},
                       {"dfas", dfas},
                       {"phase_windows", m.phase_windows},
                       {"single_phase", m.single_phase},
                       {"training_bursts", m.training_bursts},
                       {"seed", m.seed},
                       {"split",
                        {{"method", m.split.method},
                         {"stride", m.split.stride},
                         {"offset", m.split.offset},
                         {"prefix_fraction", m.split.prefix_fraction}}},
                       {"silhouette_table", m.silhouette_table}};
}

inline void from_json(const nlohmann::json& j, PhaseModel& m) {
    m.channel = j.at("channel").get<ChannelId>();
    m.alphabet = j.at("alphabet").get<Alphabet>();
    m.k = j.at("k").get<std::size_t>();
    m.dfas.clear();
    for (const auto& counts : j.at("dfas")) {
        AdjMatrix d(m.alphabet, counts.get<std::vector<AdjMatrix::Count>>());
        if (!d.is_boolean()) throw std::invalid_argument("phase DFAs must be boolean");
        m.dfas.push_back(std::move(d));
    }
    if (m.k < 1 || m.dfas.size() != m.k) throw std::invalid_argument("model k does not match its DFA count");
    m.phase_windows = j.value("phase_windows", std::vector<std::vector<std::size_t>>{});
    m.single_phase = j.value("single_phase", false);
    m.training_bursts = j.value("training_bursts", std::size_t{0});
    m.seed = j.value("seed", std::uint64_t{0});
    if (auto it = j.find("split"); it != j.end()) {
        m.split.method = it->value("method", std::string("stride"));
        m.split.stride = it->value("stride", std::size_t{3});
        m.split.offset = it->value("offset", std::size_t{0});
        m.split.prefix_fraction = it->value("prefix_fraction", 0.0);
    }
    m.silhouette_table = j.value("silhouette_table", std::vector<std::vector<double>>{});
}

}  // namespace phasedfa
