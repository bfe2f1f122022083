#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "tumls/pyramid.hpp"

namespace tumls::clustering {

using Point = std::vector<double>;

/// One agglomerative merge. Cluster ids follow the usual convention: ids
/// below n are input points, id n + i is the cluster created by merge i.
struct Merge {
    int a = 0;
    int b = 0;
    double distance = 0.0;
    int size = 0;
};

/// Ward merge tree with non-decreasing merge distances.
struct Dendrogram {
    int num_points = 0;
    std::vector<Merge> merges;
    std::vector<std::size_t> sample_indices;  // rows of the input used (subsample)
};

/// Ward linkage over Euclidean distances. Singletons merge at their
/// Euclidean distance. When there are more than max_points inputs a seeded
/// uniform subsample is used.
Dendrogram agglomerate(const std::vector<Point>& points, std::size_t max_points = 2000,
                       std::uint64_t seed = 0);

/// Cluster count just below the largest gap between consecutive merge
/// distances, searched over k in [2, k_max]. Ties go to the smaller k.
int optimal_k(const Dendrogram& d, int k_max = 10);

struct ClusterModel {
    int k = 0;
    std::vector<Point> centroids;
    std::vector<int> assignments;
    std::vector<double> distances;
    std::vector<double> normalized_distances;
    std::vector<double> inertia_history;  // inertia after each assignment step
    int iterations = 0;

    double inertia() const;
};

struct KMeansOptions {
    std::uint64_t seed = 0;
    int max_iter = 300;
    double tol = 1e-6;
};

/// k-means++ seeding then Lloyd iterations until the largest centroid shift
/// drops below tol. Empty clusters are reseeded at the point farthest from
/// its centroid.
ClusterModel kmeans(const std::vector<Point>& points, int k, const KMeansOptions& opt = {});

/// Per-cluster distance / max distance. Singleton clusters (and clusters
/// whose members all sit on the centroid) get 0.
std::vector<double> uncertainty(const ClusterModel& model);

struct Representative {
    pyramid::PatchAddress address;
    int cluster = 0;
    int rank = 0;  // 1 = closest to the centroid
    double distance = 0.0;
    double normalized_distance = 0.0;
    std::size_t index = 0;  // row in the clustered set
};

/// Up to n members per cluster ordered by ascending distance (index breaks ties).
std::vector<std::vector<Representative>> select_representatives(
    const ClusterModel& model, const std::vector<pyramid::PatchAddress>& addresses, int n);

std::vector<double> tissue_distribution(const ClusterModel& model);

nlohmann::json to_json(const ClusterModel& model, const std::vector<pyramid::PatchAddress>& addresses);
ClusterModel cluster_model_from_json(const nlohmann::json& j,
                                     std::vector<pyramid::PatchAddress>* addresses = nullptr);

}  // namespace tumls::clustering
