#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "blobs.hpp"
#include "tumls/clustering.hpp"
#include "tumls/error.hpp"

using namespace tumls;
using namespace tumls::clustering;

namespace {

// Naive Ward: repeatedly merge the pair minimizing sqrt(2|A||B|/(|A|+|B|)) * |cA - cB|.
std::vector<double> ward_oracle(const std::vector<Point>& pts) {
    struct C {
        std::vector<double> centroid;
        int size;
    };
    std::vector<C> cs;
    for (const auto& p : pts) cs.push_back({p, 1});
    std::vector<double> heights;
    while (cs.size() > 1) {
        double best = 1e300;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < cs.size(); ++i)
            for (std::size_t j = i + 1; j < cs.size(); ++j) {
                double d2 = 0;
                for (std::size_t k = 0; k < cs[i].centroid.size(); ++k)
                    d2 += std::pow(cs[i].centroid[k] - cs[j].centroid[k], 2);
                const double na = cs[i].size, nb = cs[j].size;
                const double d = std::sqrt(2 * na * nb / (na + nb) * d2);
                if (d < best) best = d, bi = i, bj = j;
            }
        C merged{cs[bi].centroid, cs[bi].size + cs[bj].size};
        for (std::size_t k = 0; k < merged.centroid.size(); ++k)
            merged.centroid[k] = (cs[bi].centroid[k] * cs[bi].size + cs[bj].centroid[k] * cs[bj].size) / merged.size;
        cs.erase(cs.begin() + bj);
        cs[bi] = merged;
        heights.push_back(best);
    }
    return heights;
}

}  // namespace

TEST(Agglomerate, TwoPoints) {
    const auto d = agglomerate({{0.0, 0.0}, {3.0, 4.0}});
    ASSERT_EQ(d.merges.size(), 1u);
    EXPECT_NEAR(d.merges[0].distance, 5.0, 1e-12);
    EXPECT_EQ(d.merges[0].size, 2);
}

TEST(Agglomerate, CollinearNearestPairFirst) {
    const auto d = agglomerate({{0.0}, {1.0}, {10.0}});
    ASSERT_EQ(d.merges.size(), 2u);
    EXPECT_EQ(std::min(d.merges[0].a, d.merges[0].b), 0);
    EXPECT_EQ(std::max(d.merges[0].a, d.merges[0].b), 1);
    EXPECT_NEAR(d.merges[1].distance, ward_oracle({{0.0}, {1.0}, {10.0}})[1], 1e-12);
}

TEST(Agglomerate, MatchesNaiveWard) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto b = test::gaussian_blobs(3, 12, 4, 6.0, seed);
        const auto d = agglomerate(b.points);
        const auto oracle = ward_oracle(b.points);
        ASSERT_EQ(d.merges.size(), oracle.size());
        for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(d.merges[i].distance, oracle[i], 1e-9);
        for (std::size_t i = 1; i < d.merges.size(); ++i) EXPECT_GE(d.merges[i].distance, d.merges[i - 1].distance);
    }
}

TEST(Agglomerate, BlobsHaveTwoTallMerges) {
    const auto b = test::gaussian_blobs(3, 20, 5, 20.0, 7);
    const auto d = agglomerate(b.points);
    const auto& m = d.merges;
    const double third = m[m.size() - 3].distance;
    EXPECT_GT(m[m.size() - 2].distance, 3 * third);
    EXPECT_GT(m[m.size() - 1].distance, 3 * third);
}

TEST(Agglomerate, SubsamplesAboveMaxPoints) {
    const auto b = test::gaussian_blobs(2, 50, 3, 10.0, 2);
    const auto d = agglomerate(b.points, 30, 9);
    EXPECT_EQ(d.num_points, 30);
    EXPECT_EQ(d.sample_indices.size(), 30u);
    EXPECT_EQ(std::set<std::size_t>(d.sample_indices.begin(), d.sample_indices.end()).size(), 30u);
    EXPECT_EQ(agglomerate(b.points, 30, 9).sample_indices, d.sample_indices);
}

TEST(Agglomerate, NeedsTwoPoints) { EXPECT_THROW(agglomerate({{1.0}}), DataError); }

TEST(OptimalK, ThreeBlobs) {
    const auto b = test::gaussian_blobs(3, 20, 4, 15.0, 3);
    EXPECT_EQ(optimal_k(agglomerate(b.points), 8), 3);
}

TEST(OptimalK, TwoPointsGiveTwo) { EXPECT_EQ(optimal_k(agglomerate({{0.0}, {1.0}})), 2); }

TEST(OptimalK, LargestGapAtTopGivesTwo) {
    const auto b = test::gaussian_blobs(2, 25, 3, 30.0, 4);
    EXPECT_EQ(optimal_k(agglomerate(b.points)), 2);
}

TEST(OptimalK, HandBuiltDendrogram) {
    Dendrogram d;
    d.num_points = 5;
    // heights 1, 2, 6, 7: largest gap (4) lies between the 2nd and 3rd merge -> k = 3.
    d.merges = {{0, 1, 1.0, 2}, {2, 3, 2.0, 2}, {5, 6, 6.0, 4}, {4, 7, 7.0, 5}};
    EXPECT_EQ(optimal_k(d, 10), 3);
    EXPECT_EQ(optimal_k(d, 2), 2);
    // Equal gaps: smaller k wins.
    d.merges = {{0, 1, 1.0, 2}, {2, 3, 2.0, 2}, {5, 6, 3.0, 4}, {4, 7, 4.0, 5}};
    EXPECT_EQ(optimal_k(d, 10), 2);
}

TEST(KMeans, EachPointItsOwnCluster) {
    const std::vector<Point> pts{{0.0}, {1.0}, {5.0}, {9.0}};
    const auto m = kmeans(pts, 4, {});
    EXPECT_EQ(m.inertia(), 0.0);
}

TEST(KMeans, ExactSplit) {
    const auto m = kmeans({{0.0}, {0.0}, {10.0}, {10.0}}, 2, {});
    std::vector<double> c{m.centroids[0][0], m.centroids[1][0]};
    std::sort(c.begin(), c.end());
    EXPECT_EQ(c, (std::vector<double>{0.0, 10.0}));
    EXPECT_EQ(m.inertia(), 0.0);
    EXPECT_EQ(m.assignments[0], m.assignments[1]);
    EXPECT_NE(m.assignments[0], m.assignments[2]);
}

TEST(KMeans, RecoversBlobs) {
    const auto b = test::gaussian_blobs(3, 100, 4, 10.0, 5);
    const auto m = kmeans(b.points, 3, {11});
    EXPECT_GE(test::agreement(m.assignments, b.labels, 3), 0.95);
}

TEST(KMeans, InertiaNeverIncreases) {
    const auto b = test::gaussian_blobs(4, 30, 3, 3.0, 6);
    const auto m = kmeans(b.points, 4, {2});
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
        EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] + 1e-9);
}

TEST(KMeans, SeededRunsAreIdentical) {
    const auto b = test::gaussian_blobs(3, 30, 3, 5.0, 8);
    const auto a = kmeans(b.points, 3, {4}), c = kmeans(b.points, 3, {4});
    EXPECT_EQ(a.assignments, c.assignments);
    EXPECT_EQ(a.centroids, c.centroids);
}

TEST(KMeans, BadK) {
    EXPECT_THROW(kmeans({{0.0}, {1.0}}, 3, {}), Error);
    EXPECT_THROW(kmeans({{0.0}, {1.0}}, 0, {}), Error);
}

TEST(Uncertainty, DivideByClusterMax) {
    ClusterModel m;
    m.k = 2;
    m.assignments = {0, 0, 0, 1};
    m.distances = {1.0, 2.0, 4.0, 3.0};
    const auto u = uncertainty(m);
    EXPECT_EQ(u, (std::vector<double>{0.25, 0.5, 1.0, 0.0}));
}

TEST(Uncertainty, RangeAndCentroidMember) {
    const auto m = kmeans({{0.0}, {1.0}, {2.0}, {10.0}, {11.0}, {12.0}}, 2, {});
    for (std::size_t i = 0; i < m.normalized_distances.size(); ++i) {
        EXPECT_GE(m.normalized_distances[i], 0.0);
        EXPECT_LE(m.normalized_distances[i], 1.0);
    }
    EXPECT_EQ(m.normalized_distances[1], 0.0);
    EXPECT_EQ(m.normalized_distances[0], 1.0);
}

TEST(Representatives, OrderingAndTruncation) {
    ClusterModel m;
    m.k = 2;
    m.assignments = {0, 1, 0, 0, 1};
    m.distances = {0.3, 0.2, 0.1, 0.3, 0.9};
    m.normalized_distances = uncertainty(m);
    std::vector<pyramid::PatchAddress> addr;
    for (int i = 0; i < 5; ++i) addr.push_back({3, i, 0, 16});
    const auto reps = select_representatives(m, addr, 5);
    ASSERT_EQ(reps.size(), 2u);
    ASSERT_EQ(reps[0].size(), 3u);
    EXPECT_EQ(reps[0][0].index, 2u);
    EXPECT_EQ(reps[0][1].index, 0u);  // tie on 0.3 broken by index
    EXPECT_EQ(reps[0][2].index, 3u);
    EXPECT_EQ(reps[0][0].rank, 1);
    EXPECT_EQ(reps[1][0].address.gx, 1);
    const auto one = select_representatives(m, addr, 1);
    EXPECT_EQ(one[0].size(), 1u);
    EXPECT_EQ(one[1][0].index, 1u);
}

TEST(Distribution, SumsToOne) {
    ClusterModel m;
    m.k = 3;
    m.assignments = {0, 1, 1, 2, 2, 2};
    const auto f = tissue_distribution(m);
    EXPECT_NEAR(f[0] + f[1] + f[2], 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(f[2], 0.5);
}

TEST(ClusterJson, RoundTrip) {
    const auto b = test::gaussian_blobs(2, 5, 2, 10.0, 1);
    const auto m = kmeans(b.points, 2, {});
    std::vector<pyramid::PatchAddress> addr;
    for (int i = 0; i < 10; ++i) addr.push_back({2, i, 1, 16});
    std::vector<pyramid::PatchAddress> back_addr;
    const auto back = cluster_model_from_json(to_json(m, addr), &back_addr);
    EXPECT_EQ(back.k, m.k);
    EXPECT_EQ(back.assignments, m.assignments);
    EXPECT_EQ(back.centroids, m.centroids);
    EXPECT_EQ(back.distances, m.distances);
    EXPECT_EQ(back_addr, addr);
}
