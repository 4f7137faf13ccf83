#pragma once

// Traffic-phase detection: each channel's burst list is cut into windows, every
// window is fingerprinted as a unit-length vectorized adjacency matrix, and
// windows are clustered with k-means. The number of phases is picked by the
// silhouette criterion.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "phasedfa/dfa.hpp"
#include "phasedfa/rng.hpp"
#include "phasedfa/traffic.hpp"

namespace phasedfa {

using Point = std::vector<double>;

enum class WindowPartition { equal_bursts, equal_duration };

struct PhaseDetectConfig {
    std::size_t num_windows = 100;
    std::size_t k_max = 15;
    std::size_t k_selection_runs = 3;
    std::size_t kmeans_max_iters = 100;
    std::size_t kmeans_restarts = 5;
    double silhouette_floor = 0.5;
    WindowPartition partition = WindowPartition::equal_bursts;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (num_windows < 2) throw std::invalid_argument("num_windows must be >= 2");
        if (k_max < 1 || k_max > num_windows)
            throw std::invalid_argument("k_max must lie in [1, num_windows]");
        if (k_selection_runs < 1 || kmeans_max_iters < 1 || kmeans_restarts < 1)
            throw std::invalid_argument("clustering run counts must be >= 1");
    }
};

struct WindowFingerprint {
    std::size_t window_index = 0;
    std::size_t burst_begin = 0;  // [burst_begin, burst_end) into the input burst list
    std::size_t burst_end = 0;
    double start_time = 0.0;
    double end_time = 0.0;
    Point vector;        // length (s+2)^2, unit L2 norm unless empty
    bool empty = false;  // window had no bursts; vector is all zeros
};

/// Contiguous [begin, end) burst ranges, one per window. With equal_bursts the
/// window count is min(num_windows, bursts) and the remainder goes to the
/// earliest windows; with equal_duration windows split the time span evenly
/// and may be empty.
inline std::vector<std::pair<std::size_t, std::size_t>> window_ranges(std::span<const Burst> bursts,
                                                                      std::size_t num_windows,
                                                                      WindowPartition partition) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    const std::size_t n = bursts.size();
    if (n == 0 || num_windows == 0) return ranges;
    if (partition == WindowPartition::equal_bursts) {
        const std::size_t w = std::min(num_windows, n);
        const std::size_t base = n / w, extra = n % w;
        std::size_t begin = 0;
        for (std::size_t i = 0; i < w; ++i) {
            const std::size_t len = base + (i < extra ? 1 : 0);
            ranges.emplace_back(begin, begin + len);
            begin += len;
        }
        return ranges;
    }
    const double t0 = bursts.front().start_time;
    const double span = bursts.back().start_time - t0;
    std::vector<std::size_t> window_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        if (span > 0.0)
            w = static_cast<std::size_t>((bursts[i].start_time - t0) / span * static_cast<double>(num_windows));
        window_of[i] = std::min(w, num_windows - 1);
    }
    std::size_t cursor = 0;
    for (std::size_t w = 0; w < num_windows; ++w) {
        const std::size_t begin = cursor;
        while (cursor < n && window_of[cursor] == w) ++cursor;
        ranges.emplace_back(begin, cursor);
    }
    return ranges;
}

/// Row-major vectorization scaled to unit L2 norm; the zero matrix maps to the zero vector.
inline Point normalized_vector(const AdjMatrix& m) {
    Point v(m.counts().begin(), m.counts().end());
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
    return v;
}

/// Unnormalized per-window adjacency matrices over `alphabet`.
inline std::vector<AdjMatrix> window_matrices(std::span<const Burst> bursts, const Alphabet& alphabet,
                                              std::span<const std::pair<std::size_t, std::size_t>> ranges) {
    std::vector<AdjMatrix> out;
    out.reserve(ranges.size());
    for (auto [b, e] : ranges) out.push_back(build_adj_matrix(bursts.subspan(b, e - b), alphabet));
    return out;
}

inline std::vector<WindowFingerprint> fingerprint_windows(std::span<const Burst> bursts,
                                                          const Alphabet& alphabet,
                                                          const PhaseDetectConfig& cfg) {
    auto ranges = window_ranges(bursts, cfg.num_windows, cfg.partition);
    std::vector<WindowFingerprint> out;
    out.reserve(ranges.size());
    for (std::size_t w = 0; w < ranges.size(); ++w) {
        auto [b, e] = ranges[w];
        WindowFingerprint fp;
        fp.window_index = w;
        fp.burst_begin = b;
        fp.burst_end = e;
        fp.empty = b == e;
        if (!fp.empty) {
            fp.start_time = bursts[b].start_time;
            fp.end_time = bursts[e - 1].end_time;
        }
        fp.vector = normalized_vector(build_adj_matrix(bursts.subspan(b, e - b), alphabet));
        out.push_back(std::move(fp));
    }
    return out;
}

inline std::vector<Point> points_of(std::span<const WindowFingerprint> fps) {
    std::vector<Point> pts;
    pts.reserve(fps.size());
    for (const auto& fp : fps) pts.push_back(fp.vector);
    return pts;
}

inline double squared_distance(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean(const Point& a, const Point& b) { return std::sqrt(squared_distance(a, b)); }

/// Symmetric pairwise Euclidean distances.
class DistanceMatrix {
public:
    DistanceMatrix() = default;

    explicit DistanceMatrix(std::span<const Point> pts) : n_(pts.size()), d_(n_ * n_, 0.0) {
        for (std::size_t i = 0; i < n_; ++i) {
            if (pts[i].size() != pts.front().size())
                throw std::invalid_argument("distance_matrix: vectors differ in length");
            for (std::size_t j = i + 1; j < n_; ++j) {
                const double dist = euclidean(pts[i], pts[j]);
                d_[i * n_ + j] = dist;
                d_[j * n_ + i] = dist;
            }
        }
    }

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

inline DistanceMatrix distance_matrix(std::span<const WindowFingerprint> fps) {
    auto pts = points_of(fps);
    return DistanceMatrix(pts);
}

struct PhaseAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> labels;  // 1..k, one per window
    std::vector<Point> centroids;     // centroids[c - 1] belongs to label c
    std::optional<double> mean_silhouette;
    double within_distance = 0.0;     // sum of point-to-centroid distances
    std::size_t iterations = 0;
    std::vector<double> sse_history;  // within-cluster sum of squares after each update
};

namespace detail {

inline std::vector<Point> cluster_means(std::span<const Point> pts, std::span<const std::size_t> labels,
                                        std::size_t k) {
    const std::size_t dim = pts.empty() ? 0 : pts.front().size();
    std::vector<Point> means(k, Point(dim, 0.0));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto& m = means[labels[i] - 1];
        for (std::size_t d = 0; d < dim; ++d) m[d] += pts[i][d];
        ++sizes[labels[i] - 1];
    }
    for (std::size_t c = 0; c < k; ++c)
        if (sizes[c] > 0)
            for (auto& x : means[c]) x /= static_cast<double>(sizes[c]);
    return means;
}

/// Renumbers clusters in order of first appearance so label 1 owns point 0.
inline void canonicalize(PhaseAssignment& a) {
    std::vector<std::size_t> remap(a.k + 1, 0);
    std::size_t next = 1;
    for (auto l : a.labels)
        if (remap[l] == 0) remap[l] = next++;
    for (std::size_t c = 1; c <= a.k; ++c)
        if (remap[c] == 0) remap[c] = next++;
    std::vector<Point> centroids(a.k);
    for (std::size_t c = 1; c <= a.k; ++c) centroids[remap[c] - 1] = std::move(a.centroids[c - 1]);
    a.centroids = std::move(centroids);
    for (auto& l : a.labels) l = remap[l];
}

}  // namespace detail

/// Lloyd's k-means. Initial centroids are k distinct points drawn with `seed`;
/// an emptied cluster is reseeded with the point farthest from its centroid.
inline PhaseAssignment kmeans(std::span<const Point> pts, std::size_t k, std::size_t max_iters,
                              std::uint64_t seed) {
    const std::size_t n = pts.size();
    if (k < 1 || k > n) throw std::invalid_argument("kmeans requires 1 <= k <= number of points");
    Rng rng(seed);
    PhaseAssignment a;
    a.k = k;
    for (auto idx : rng.sample_without_replacement(n, k)) a.centroids.push_back(pts[idx]);
    a.labels.assign(n, 0);

    std::vector<std::size_t> prev;
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(pts[i], a.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            a.labels[i] = best + 1;
        }
        // Empty-cluster repair.
        for (;;) {
            std::vector<std::size_t> sizes(k, 0);
            for (auto l : a.labels) ++sizes[l - 1];
            auto empty = std::find(sizes.begin(), sizes.end(), 0u);
            if (empty == sizes.end()) break;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[a.labels[i] - 1] < 2) continue;
                const double d = squared_distance(pts[i], a.centroids[a.labels[i] - 1]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            const std::size_t c = static_cast<std::size_t>(empty - sizes.begin());
            a.labels[far] = c + 1;
            a.centroids[c] = pts[far];
        }
        ++a.iterations;
        const bool stable = a.labels == prev;
        a.centroids = detail::cluster_means(pts, a.labels, k);
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) sse += squared_distance(pts[i], a.centroids[a.labels[i] - 1]);
        a.sse_history.push_back(sse);
        if (stable) break;
        prev = a.labels;
    }
    a.within_distance = 0.0;
    for (std::size_t i = 0; i < n; ++i) a.within_distance += euclidean(pts[i], a.centroids[a.labels[i] - 1]);
    detail::canonicalize(a);
    return a;
}

inline PhaseAssignment kmeans(std::span<const WindowFingerprint> fps, std::size_t k,
                              const PhaseDetectConfig& cfg, std::uint64_t seed) {
    auto pts = points_of(fps);
    return kmeans(pts, k, cfg.kmeans_max_iters, seed);
}

struct SilhouetteResult {
    std::vector<double> values;
    double mean = 0.0;
};

/// S(i) = (b(i) - a(i)) / max(a(i), b(i)). a(i) is the mean distance to the
/// other members of i's cluster; b(i) is the mean distance to the members of
/// the cluster whose mean is closest to i, excluding i's own. Singletons and
/// a = b = 0 score 0. Undefined (nullopt) when fewer than two clusters are used.
inline std::optional<SilhouetteResult> silhouette(std::span<const Point> pts,
                                                  std::span<const std::size_t> labels, std::size_t k) {
    if (k < 2 || pts.empty()) return std::nullopt;
    const auto means = detail::cluster_means(pts, labels, k);
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : labels) ++sizes[l - 1];
    if (std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }) < 2)
        return std::nullopt;

    SilhouetteResult res;
    res.values.resize(pts.size(), 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::size_t own = labels[i] - 1;
        if (sizes[own] < 2) continue;
        std::size_t neighbour = k;
        double nd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || sizes[c] == 0) continue;
            const double d = squared_distance(pts[i], means[c]);
            if (d < nd) {
                nd = d;
                neighbour = c;
            }
        }
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j == i) continue;
            if (labels[j] - 1 == own) a += euclidean(pts[i], pts[j]);
            else if (labels[j] - 1 == neighbour) b += euclidean(pts[i], pts[j]);
        }
        a /= static_cast<double>(sizes[own] - 1);
        b /= static_cast<double>(sizes[neighbour]);
        const double denom = std::max(a, b);
        res.values[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    double sum = 0.0;
    for (double v : res.values) sum += v;
    res.mean = sum / static_cast<double>(res.values.size());
    return res;
}

inline std::optional<SilhouetteResult> silhouette(std::span<const Point> pts, const PhaseAssignment& a) {
    return silhouette(pts, a.labels, a.k);
}

/// Lowest within-cluster distance over cfg.kmeans_restarts seeded runs.
inline PhaseAssignment best_kmeans(std::span<const Point> pts, std::size_t k, const PhaseDetectConfig& cfg,
                                   std::uint64_t seed) {
    std::optional<PhaseAssignment> best;
    for (std::size_t r = 0; r < cfg.kmeans_restarts; ++r) {
        auto a = kmeans(pts, k, cfg.kmeans_max_iters, derive_seed(seed, {r}));
        if (!best || a.within_distance < best->within_distance) best = std::move(a);
    }
    auto sil = silhouette(pts, *best);
    if (sil) best->mean_silhouette = sil->mean;
    return std::move(*best);
}

struct RunOptima {
    std::vector<std::size_t> per_run;  // argmax k of each run
    std::size_t chosen = 1;            // minimum over runs
};

/// table[run][j] is the mean silhouette for k = k_min + j. Each run's optimum is
/// its argmax (smallest k on ties); the chosen k is the smallest optimum.
inline RunOptima choose_k(const std::vector<std::vector<double>>& table, std::size_t k_min = 2) {
    RunOptima out;
    for (const auto& row : table) {
        if (row.empty()) continue;
        auto it = std::max_element(row.begin(), row.end());
        out.per_run.push_back(k_min + static_cast<std::size_t>(it - row.begin()));
    }
    if (!out.per_run.empty()) out.chosen = *std::min_element(out.per_run.begin(), out.per_run.end());
    return out;
}

struct KSelection {
    std::size_t k = 1;
    bool single_phase = false;
    std::size_t distinct_points = 0;
    std::size_t k_max_used = 0;                 // k swept over 2..k_max_used
    std::vector<std::vector<double>> table;     // [run][k - 2] mean silhouette
    std::vector<std::size_t> run_optima;
    double best_silhouette = 0.0;               // maximum over the whole table
    PhaseAssignment assignment;
};

namespace detail {

inline PhaseAssignment single_cluster(std::span<const Point> pts) {
    PhaseAssignment a;
    a.k = 1;
    a.labels.assign(pts.size(), 1);
    a.centroids = cluster_means(pts, a.labels, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) a.within_distance += euclidean(pts[i], a.centroids[0]);
    return a;
}

}  // namespace detail

/// Sweeps k = 2..k_max for k_selection_runs independent runs and keeps the
/// minimum of the per-run silhouette optima. Reports a single phase (k = 1)
/// when fewer than three distinct points exist or no clustering reaches
/// cfg.silhouette_floor.
inline KSelection select_k(std::span<const Point> pts, const PhaseDetectConfig& cfg, std::uint64_t seed) {
    KSelection sel;
    const std::size_t n = pts.size();
    sel.distinct_points = std::set<Point>(pts.begin(), pts.end()).size();
    if (n < 2 || sel.distinct_points < 3) {
        sel.single_phase = true;
        sel.assignment = detail::single_cluster(pts);
        return sel;
    }
    sel.k_max_used = std::max<std::size_t>(2, std::min(cfg.k_max, n - 1));
    std::vector<std::vector<PhaseAssignment>> runs(cfg.k_selection_runs);
    sel.table.assign(cfg.k_selection_runs, {});
    for (std::size_t r = 0; r < cfg.k_selection_runs; ++r) {
        for (std::size_t k = 2; k <= sel.k_max_used; ++k) {
            auto a = best_kmeans(pts, k, cfg, derive_seed(seed, {r, k}));
            sel.table[r].push_back(a.mean_silhouette.value_or(0.0));
            runs[r].push_back(std::move(a));
        }
    }
    auto optima = choose_k(sel.table);
    sel.run_optima = optima.per_run;
    sel.k = optima.chosen;
    sel.best_silhouette = -1.0;
    for (const auto& row : sel.table)
        for (double v : row) sel.best_silhouette = std::max(sel.best_silhouette, v);

    if (sel.best_silhouette < cfg.silhouette_floor) {
        sel.single_phase = true;
        sel.k = 1;
        sel.assignment = detail::single_cluster(pts);
        return sel;
    }
    std::size_t best_run = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (sel.table[r][sel.k - 2] > sel.table[best_run][sel.k - 2]) best_run = r;
    sel.assignment = std::move(runs[best_run][sel.k - 2]);
    return sel;
}

inline KSelection select_k(std::span<const WindowFingerprint> fps, const PhaseDetectConfig& cfg,
                           std::uint64_t seed) {
    auto pts = points_of(fps);
    return select_k(std::span<const Point>(pts), cfg, seed);
}

inline std::size_t count_phase_shifts(std::span<const std::size_t> labels) {
    std::size_t shifts = 0;
    for (std::size_t i = 0; i + 1 < labels.size(); ++i)
        if (labels[i] != labels[i + 1]) ++shifts;
    return shifts;
}

/// Window indices i at which labels[i - 1] != labels[i].
inline std::vector<std::size_t> shift_positions(std::span<const std::size_t> labels) {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i - 1] != labels[i]) out.push_back(i);
    return out;
}

/// Everything the phase report needs for one channel.
struct PhaseAnalysis {
    Alphabet alphabet;
    std::vector<WindowFingerprint> windows;
    DistanceMatrix distances;
    KSelection selection;
    std::size_t shifts = 0;
};

inline PhaseAnalysis analyze_phases(std::span<const Burst> bursts, const PhaseDetectConfig& cfg,
                                    std::uint64_t seed) {
    PhaseAnalysis out;
    out.alphabet = Alphabet::from_bursts(bursts);
    out.windows = fingerprint_windows(bursts, out.alphabet, cfg);
    auto pts = points_of(out.windows);
    out.distances = DistanceMatrix(pts);
    out.selection = select_k(std::span<const Point>(pts), cfg, seed);
    out.shifts = count_phase_shifts(out.selection.assignment.labels);
    return out;
}

}  // namespace phasedfa
