#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace phasedfa;
using phasedfa::test::burst;
using phasedfa::test::sym;

namespace {

std::vector<Burst> repeat(const std::vector<Symbol>& s, std::size_t n) {
    std::vector<Burst> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(burst(s, 2.0 * static_cast<double>(i)));
    return out;
}

double norm(const Point& p) {
    double s = 0;
    for (double x : p) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST(Windows, RemainderGoesToEarliest) {
    auto bs = repeat({sym(1)}, 103);
    auto r = window_ranges(bs, 100, WindowPartition::equal_bursts);
    ASSERT_EQ(r.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(r[i].second - r[i].first, i < 3 ? 2u : 1u);
    EXPECT_EQ(r.back().second, 103u);
    EXPECT_EQ(window_ranges(repeat({sym(1)}, 7), 100, WindowPartition::equal_bursts).size(), 7u);
}

TEST(Windows, EqualDuration) {
    std::vector<Burst> bs;
    for (double t : {0.0, 1.0, 2.0, 9.0, 10.0}) bs.push_back(burst({sym(1)}, t));
    auto r = window_ranges(bs, 5, WindowPartition::equal_duration);
    ASSERT_EQ(r.size(), 5u);
    EXPECT_EQ(r[0], (std::pair<std::size_t, std::size_t>{0, 2}));
    EXPECT_EQ(r[1], (std::pair<std::size_t, std::size_t>{2, 3}));
    EXPECT_EQ(r[2].first, r[2].second);  // empty
    EXPECT_EQ(r[4], (std::pair<std::size_t, std::size_t>{3, 5}));
}

TEST(Fingerprint, IdenticalBurstsGiveIdenticalUnitVectors) {
    auto bs = repeat({sym(1), sym(2)}, 100);
    PhaseDetectConfig cfg;
    auto fps = fingerprint_windows(bs, Alphabet::from_bursts(bs), cfg);
    ASSERT_EQ(fps.size(), 100u);
    auto d = distance_matrix(fps);
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_NEAR(norm(fps[i].vector), 1.0, 1e-12);
        for (std::size_t j = 0; j < 100; ++j) EXPECT_EQ(d(i, j), 0.0);
    }
}

TEST(Distance, Geometry) {
    Point e1{1, 0, 0}, e2{0, 1, 0};
    EXPECT_DOUBLE_EQ(euclidean(e1, e1), 0.0);
    EXPECT_DOUBLE_EQ(euclidean(e1, e2), std::sqrt(2.0));
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
        Point p(6), q(6);
        for (auto& v : p) v = rng.uniform01() - 0.5;
        for (auto& v : q) v = rng.uniform01() - 0.5;
        const double np = norm(p), nq = norm(q);
        for (auto& v : p) v /= np;
        for (auto& v : q) v /= nq;
        EXPECT_LE(euclidean(p, q), 2.0 + 1e-12);
    }
}

TEST(Distance, NormalizedVectorOfZeroMatrix) {
    AdjMatrix m(Alphabet({sym(1)}));
    auto v = normalized_vector(m);
    EXPECT_EQ(norm(v), 0.0);
}

TEST(Kmeans, KEqualsN) {
    std::vector<Point> pts{{0, 0}, {1, 0}, {5, 5}, {9, 1}};
    auto a = kmeans(pts, 4, 100, 1);
    EXPECT_NEAR(a.within_distance, 0.0, 1e-12);
    EXPECT_EQ(a.labels, (std::vector<std::size_t>{1, 2, 3, 4}));
}

TEST(Kmeans, KOneIsMean) {
    std::vector<Point> pts{{0, 0}, {2, 0}, {4, 6}};
    auto a = kmeans(pts, 1, 100, 1);
    EXPECT_DOUBLE_EQ(a.centroids[0][0], 2.0);
    EXPECT_DOUBLE_EQ(a.centroids[0][1], 2.0);
    EXPECT_THROW(kmeans(pts, 4, 100, 1), std::invalid_argument);
    EXPECT_THROW(kmeans(pts, 0, 100, 1), std::invalid_argument);
}

// Two well-separated groups: the clustering must equal the better of the two
// possible group labelings (checked by brute force over both).
TEST(Kmeans, RecoversSeparatedGroups) {
    Rng rng(8);
    for (int t = 0; t < 30; ++t) {
        std::vector<Point> pts;
        std::vector<std::size_t> truth;
        for (int i = 0; i < 20; ++i) {
            const bool g = rng.uniform01() < 0.5;
            pts.push_back({(g ? 10.0 : 0.0) + rng.uniform01(), rng.uniform01()});
            truth.push_back(g ? 1 : 0);
        }
        auto a = best_kmeans(pts, 2, PhaseDetectConfig{}, static_cast<std::uint64_t>(t));
        bool same = true, flipped = true;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            same = same && (a.labels[i] - 1 == truth[i]);
            flipped = flipped && (a.labels[i] - 1 != truth[i]);
        }
        EXPECT_TRUE(same || flipped);
    }
}

TEST(Kmeans, DeterministicAndCanonical) {
    Rng rng(9);
    std::vector<Point> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    auto a = kmeans(pts, 4, 100, 77), b = kmeans(pts, 4, 100, 77);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.labels[0], 1u);
    std::size_t seen = 0;
    for (auto l : a.labels) {
        EXPECT_LE(l, seen + 1);
        seen = std::max(seen, l);
    }
}

TEST(Kmeans, PropertyNoEmptyClustersAndMonotoneSse) {
    Rng rng(10);
    for (int t = 0; t < 100; ++t) {
        std::vector<Point> pts;
        const auto n = 3 + rng.uniform_index(40);
        for (std::size_t i = 0; i < n; ++i) pts.push_back({std::floor(rng.uniform01() * 3), std::floor(rng.uniform01() * 3)});
        const auto k = 1 + rng.uniform_index(n);
        auto a = kmeans(pts, k, 100, rng.next());
        std::vector<std::size_t> sizes(k, 0);
        for (auto l : a.labels) ++sizes[l - 1];
        for (auto s : sizes) EXPECT_GT(s, 0u);
        for (std::size_t i = 1; i < a.sse_history.size(); ++i)
            EXPECT_LE(a.sse_history[i], a.sse_history[i - 1] + 1e-9);
    }
}

TEST(Silhouette, TightDistantClusters) {
    std::vector<Point> pts{{0, 0}, {0, 0.001}, {100, 0}, {100, 0.001}};
    std::vector<std::size_t> labels{1, 1, 2, 2};
    auto s = silhouette(pts, labels, 2);
    ASSERT_TRUE(s);
    EXPECT_GT(s->mean, 0.999);
}

TEST(Silhouette, IdenticalPointsScoreZero) {
    std::vector<Point> pts(6, Point{1, 1});
    std::vector<std::size_t> labels{1, 1, 1, 2, 2, 2};
    auto s = silhouette(pts, labels, 2);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->mean, 0.0);
}

TEST(Silhouette, Rectangle) {
    // Corners of a 10 x 1 rectangle, clusters along the short edges.
    std::vector<Point> pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
    std::vector<std::size_t> labels{1, 1, 2, 2};
    const double a = 1.0;
    const double b = (10.0 + std::sqrt(101.0)) / 2.0;
    const double expected = (b - a) / b;
    auto s = silhouette(pts, labels, 2);
    ASSERT_TRUE(s);
    for (double v : s->values) EXPECT_NEAR(v, expected, 1e-12);
    EXPECT_NEAR(s->mean, expected, 1e-12);
    // Split along the long edges instead.
    std::vector<std::size_t> bad{1, 2, 1, 2};
    auto sb = silhouette(pts, bad, 2);
    const double a2 = 10.0, b2 = (1.0 + std::sqrt(101.0)) / 2.0;
    EXPECT_NEAR(sb->mean, (b2 - a2) / a2, 1e-12);
}

TEST(Silhouette, UndefinedForOneCluster) {
    std::vector<Point> pts{{0}, {1}};
    EXPECT_FALSE(silhouette(pts, std::vector<std::size_t>{1, 1}, 1));
    EXPECT_FALSE(silhouette(pts, std::vector<std::size_t>{1, 1}, 2));
}

TEST(Silhouette, PropertyRange) {
    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        const auto n = 2 + rng.uniform_index(30);
        const auto k = 2 + rng.uniform_index(std::min<std::size_t>(n - 1, 5));
        std::vector<Point> pts;
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < n; ++i) {
            pts.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
            labels.push_back(1 + (i < k ? i : rng.uniform_index(k)));
        }
        auto s = silhouette(pts, labels, k);
        ASSERT_TRUE(s);
        for (double v : s->values) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(SelectK, MinimumOfRunOptima) {
    // Rows are silhouette curves over k = 2..13 peaking at 12, 8 and 9.
    std::vector<std::vector<double>> table(3, std::vector<double>(12, 0.1));
    table[0][10] = 0.9;
    table[1][6] = 0.9;
    table[2][7] = 0.9;
    auto r = choose_k(table);
    EXPECT_EQ(r.per_run, (std::vector<std::size_t>{12, 8, 9}));
    EXPECT_EQ(r.chosen, 8u);
}

TEST(SelectK, IdenticalWindowsAreSinglePhase) {
    std::vector<Point> pts(20, Point{0.6, 0.8});
    auto sel = select_k(pts, PhaseDetectConfig{}, 1);
    EXPECT_TRUE(sel.single_phase);
    EXPECT_EQ(sel.k, 1u);
    EXPECT_EQ(count_phase_shifts(sel.assignment.labels), 0u);
}

TEST(SelectK, ThreeBlocks) {
    std::vector<Point> pts;
    Rng rng(13);
    for (int blk = 0; blk < 3; ++blk)
        for (int i = 0; i < 20; ++i) {
            Point p(3, 0.0);
            p[static_cast<std::size_t>(blk)] = 1.0;
            p[(static_cast<std::size_t>(blk) + 1) % 3] = 0.05 * rng.uniform01();
            pts.push_back(p);
        }
    PhaseDetectConfig cfg;
    cfg.k_max = 10;
    auto sel = select_k(pts, cfg, 5);
    EXPECT_EQ(sel.k, 3u);
    EXPECT_FALSE(sel.single_phase);
    EXPECT_EQ(shift_positions(sel.assignment.labels), (std::vector<std::size_t>{20, 40}));
    // The silhouette sweep peaks at 3 in every run.
    for (const auto& row : sel.table)
        EXPECT_EQ(std::max_element(row.begin(), row.end()) - row.begin(), 1);
    auto again = select_k(pts, cfg, 5);
    EXPECT_EQ(again.assignment.labels, sel.assignment.labels);
    EXPECT_EQ(again.table, sel.table);
}

TEST(Shifts, Counting) {
    EXPECT_EQ(count_phase_shifts(std::vector<std::size_t>{1, 1, 1}), 0u);
    EXPECT_EQ(count_phase_shifts(std::vector<std::size_t>{1, 1, 2, 2, 1}), 2u);
    EXPECT_EQ(shift_positions(std::vector<std::size_t>{1, 1, 2, 2, 1}), (std::vector<std::size_t>{2, 4}));
    EXPECT_EQ(count_phase_shifts(std::vector<std::size_t>{}), 0u);
}

// A x 30, B x 40, A x 30 scaled to thirty bursts per window. With one burst
// per window every phase collapses to a single fingerprint, and two distinct
// fingerprints are reported as single-phase. Few grammars per window also
// repeat fingerprints exactly, which lets large k score near 1.
TEST(Shifts, GeneratedABA) {
    ScenarioSpec spec;
    spec.channel = ChannelId{};
    spec.phases["A"].burst_grammars = {
        {sym(1), sym(2), sym(3)}, {sym(1), sym(2), sym(2), sym(3)}, {sym(2), sym(6), sym(3)}};
    spec.phases["B"].burst_grammars = {
        {sym(1), sym(4), sym(5), sym(3)}, {sym(1), sym(5), sym(3)}, {sym(4), sym(4), sym(3)}};
    spec.schedule = {{"A", 900}, {"B", 1200}, {"A", 900}};
    auto g = generate(spec);
    EXPECT_EQ(g.truth.shift_bursts, (std::vector<std::size_t>{900, 2100}));
    auto pa = analyze_phases(g.bursts, PhaseDetectConfig{}, 3);
    EXPECT_EQ(pa.selection.k, 2u);
    EXPECT_EQ(pa.shifts, 2u);
    EXPECT_EQ(shift_positions(pa.selection.assignment.labels), (std::vector<std::size_t>{30, 70}));
}

TEST(Shifts, TwoDistinctFingerprintsAreSinglePhase) {
    std::vector<Point> pts;
    for (int i = 0; i < 10; ++i) pts.push_back(i < 5 ? Point{1, 0} : Point{0, 1});
    auto sel = select_k(pts, PhaseDetectConfig{}, 1);
    EXPECT_TRUE(sel.single_phase);
    EXPECT_EQ(sel.distinct_points, 2u);
}

TEST(Fingerprint, ReplicationInvariance) {
    Rng rng(14);
    for (int t = 0; t < 50; ++t) {
        std::vector<Burst> bs;
        for (int i = 0; i < 12; ++i) {
            std::vector<Symbol> s;
            const auto len = 1 + rng.uniform_index(5);
            for (std::size_t j = 0; j < len; ++j) s.push_back(sym(static_cast<unsigned>(1 + rng.uniform_index(4))));
            bs.push_back(burst(s));
        }
        const auto al = Alphabet::from_bursts(bs);
        std::vector<Burst> rep;
        const auto m = 2 + rng.uniform_index(4);
        for (const auto& b : bs)
            for (std::size_t r = 0; r < m; ++r) rep.push_back(b);
        // The q_end edge is assigned, not counted, so compare windows without it.
        auto strip = [](AdjMatrix x) {
            for (std::size_t r = 0; r < x.dim(); ++r) x.at(r, x.q_end()) = 0;
            return x;
        };
        auto v1 = normalized_vector(strip(build_adj_matrix(bs, al)));
        auto v2 = normalized_vector(strip(build_adj_matrix(rep, al)));
        for (std::size_t i = 0; i < v1.size(); ++i) EXPECT_NEAR(v1[i], v2[i], 1e-12);
    }
}

TEST(Shifts, RelabelingInvariance) {
    Rng rng(15);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::size_t> labels;
        for (int i = 0; i < 30; ++i) labels.push_back(1 + rng.uniform_index(4));
        std::vector<std::size_t> perm{0, 3, 1, 4, 2};
        auto relabeled = labels;
        for (auto& l : relabeled) l = perm[l];
        EXPECT_EQ(count_phase_shifts(labels), count_phase_shifts(relabeled));
    }
}

TEST(PhaseConfig, Validation) {
    PhaseDetectConfig c;
    EXPECT_NO_THROW(c.validate());
    c.num_windows = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = PhaseDetectConfig{};
    c.k_max = 101;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
