#include "tumls/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tumls/error.hpp"
#include "tumls/parallel.hpp"

namespace tumls::clustering {

namespace {

double squared_distance(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void check_points(const std::vector<Point>& points) {
    if (points.empty()) return;
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw DataError("points have inconsistent dimensionality");
        for (double v : p)
            if (!std::isfinite(v)) throw DataError("non-finite coordinate in clustering input");
    }
}

// Symmetric matrix of squared Ward dissimilarities stored densely.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

private:
    std::size_t n_;
    std::vector<double> d_;
};

}  // namespace

Dendrogram agglomerate(const std::vector<Point>& points, std::size_t max_points, std::uint64_t seed) {
    if (points.size() < 2) throw DataError("agglomerate needs at least 2 points");
    check_points(points);

    Dendrogram dg;
    dg.sample_indices.resize(points.size());
    std::iota(dg.sample_indices.begin(), dg.sample_indices.end(), 0);
    if (max_points >= 2 && points.size() > max_points) {
        std::mt19937_64 rng(seed);
        std::shuffle(dg.sample_indices.begin(), dg.sample_indices.end(), rng);
        dg.sample_indices.resize(max_points);
        std::sort(dg.sample_indices.begin(), dg.sample_indices.end());
    }
    const std::size_t n = dg.sample_indices.size();
    dg.num_points = static_cast<int>(n);

    // Squared Euclidean distances; Lance-Williams Ward update keeps the
    // squared Ward dissimilarity 2|A||B|/(|A|+|B|) * |cA - cB|^2.
    DistanceMatrix D(n);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j)
            D(i, j) = i == j ? 0.0
                             : squared_distance(points[dg.sample_indices[i]], points[dg.sample_indices[j]]);
    });

    std::vector<int> size(n, 1);
    std::vector<char> active(n, 1);
    struct RawMerge {
        std::size_t a, b;
        double d2;
    };
    std::vector<RawMerge> raw;
    raw.reserve(n - 1);

    // Nearest-neighbour chain; valid for Ward because the linkage is reducible.
    std::vector<std::size_t> chain;
    chain.reserve(n);
    std::size_t remaining = n;
    while (remaining > 1) {
        if (chain.empty()) {
            for (std::size_t i = 0; i < n; ++i)
                if (active[i]) {
                    chain.push_back(i);
                    break;
                }
        }
        for (;;) {
            const std::size_t x = chain.back();
            const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
            std::size_t best = n;
            double best_d = std::numeric_limits<double>::infinity();
            if (prev != n) {
                best = prev;
                best_d = D(x, prev);
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (!active[j] || j == x) continue;
                if (D(x, j) < best_d) {
                    best_d = D(x, j);
                    best = j;
                }
            }
            if (best == prev) break;
            chain.push_back(best);
        }
        const std::size_t b = chain.back();
        chain.pop_back();
        const std::size_t a = chain.back();
        chain.pop_back();
        const double dab = D(a, b);
        raw.push_back({std::min(a, b), std::max(a, b), dab});

        // Merge into slot lo, deactivate hi.
        const std::size_t lo = std::min(a, b), hi = std::max(a, b);
        const double sa = size[a], sb = size[b];
        for (std::size_t j = 0; j < n; ++j) {
            if (!active[j] || j == a || j == b) continue;
            const double sj = size[j];
            const double t = sa + sb + sj;
            const double v = ((sa + sj) * D(a, j) + (sb + sj) * D(b, j) - sj * dab) / t;
            D(lo, j) = D(j, lo) = v;
        }
        size[lo] = size[a] + size[b];
        active[hi] = 0;
        --remaining;
    }

    // Replay in distance order (stable) to assign dendrogram ids.
    std::stable_sort(raw.begin(), raw.end(),
                     [](const RawMerge& x, const RawMerge& y) { return x.d2 < y.d2; });
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t v) {
        while (parent[v] != static_cast<int>(v)) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    std::vector<int> cluster_id(n);
    std::iota(cluster_id.begin(), cluster_id.end(), 0);
    std::vector<int> cluster_size(n, 1);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::size_t ra = find(raw[i].a), rb = find(raw[i].b);
        Merge m;
        m.a = std::min(cluster_id[ra], cluster_id[rb]);
        m.b = std::max(cluster_id[ra], cluster_id[rb]);
        m.distance = std::sqrt(std::max(0.0, raw[i].d2));
        m.size = cluster_size[ra] + cluster_size[rb];
        parent[rb] = static_cast<int>(ra);
        cluster_id[ra] = static_cast<int>(n + i);
        cluster_size[ra] = m.size;
        dg.merges.push_back(m);
    }
    return dg;
}

int optimal_k(const Dendrogram& d, int k_max) {
    if (k_max < 2) throw ConfigError("k_max must be >= 2");
    const int n = d.num_points;
    if (n < 2 || static_cast<int>(d.merges.size()) != n - 1) throw DataError("malformed dendrogram");

    // Leaving k clusters means performing the first n-k merges; the gap is
    // the jump to the next merge. Merge heights below the first merge are 0.
    auto height = [&](int count) { return count <= 0 ? 0.0 : d.merges[count - 1].distance; };
    int best_k = 2;
    double best_gap = -1.0;
    for (int k = 2; k <= std::min(k_max, n); ++k) {
        const double gap = height(n - k + 1) - height(n - k);
        if (gap > best_gap) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

double ClusterModel::inertia() const {
    double s = 0.0;
    for (double d : distances) s += d * d;
    return s;
}

namespace {

struct Assignment {
    std::vector<int> labels;
    std::vector<double> d2;
};

Assignment assign(const std::vector<Point>& points, const std::vector<Point>& centroids) {
    Assignment a;
    a.labels.resize(points.size());
    a.d2.resize(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double d = squared_distance(points[i], centroids[c]);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(c);
            }
        }
        a.labels[i] = best;
        a.d2[i] = bd;
    });
    return a;
}

}  // namespace

ClusterModel kmeans(const std::vector<Point>& points, int k, const KMeansOptions& opt) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (static_cast<std::size_t>(k) > points.size())
        throw DataError("k = " + std::to_string(k) + " exceeds number of points " +
                        std::to_string(points.size()));
    check_points(points);
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();

    // k-means++ seeding.
    std::mt19937_64 rng(opt.seed);
    std::vector<Point> centroids;
    centroids.reserve(k);
    centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(points[i], centroids[0]);
    while (centroids.size() < static_cast<std::size_t>(k)) {
        const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (nearest[i] <= 0.0) continue;
                r -= nearest[i];
                if (r < 0.0) {
                    pick = i;
                    break;
                }
            }
            while (nearest[pick] <= 0.0 && pick > 0) --pick;
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        centroids.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(points[i], centroids.back()));
    }

    ClusterModel m;
    m.k = k;
    Assignment a = assign(points, centroids);
    m.inertia_history.push_back(std::accumulate(a.d2.begin(), a.d2.end(), 0.0));

    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        m.iterations = iter;
        std::vector<Point> next(k, Point(dim, 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = a.labels[i];
            ++count[c];
            for (std::size_t j = 0; j < dim; ++j) next[c][j] += points[i][j];
        }
        std::vector<char> taken(n, 0);
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) {
                for (double& v : next[c]) v /= static_cast<double>(count[c]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && a.d2[i] > fd) {
                    fd = a.d2[i];
                    far = i;
                }
            taken[far] = 1;
            next[c] = points[far];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(squared_distance(next[c], centroids[c])));
        centroids = std::move(next);
        a = assign(points, centroids);
        m.inertia_history.push_back(std::accumulate(a.d2.begin(), a.d2.end(), 0.0));
        if (shift < opt.tol) break;
    }

    m.centroids = std::move(centroids);
    m.assignments = std::move(a.labels);
    m.distances.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.distances[i] = std::sqrt(a.d2[i]);
    m.normalized_distances = uncertainty(m);
    return m;
}

std::vector<double> uncertainty(const ClusterModel& m) {
    std::vector<double> max_d(m.k, 0.0);
    std::vector<std::size_t> count(m.k, 0);
    for (std::size_t i = 0; i < m.assignments.size(); ++i) {
        max_d[m.assignments[i]] = std::max(max_d[m.assignments[i]], m.distances[i]);
        ++count[m.assignments[i]];
    }
    std::vector<double> out(m.assignments.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mx = max_d[m.assignments[i]];
        out[i] = mx > 0.0 && count[m.assignments[i]] > 1 ? m.distances[i] / mx : 0.0;
    }
    return out;
}

std::vector<std::vector<Representative>> select_representatives(
    const ClusterModel& m, const std::vector<pyramid::PatchAddress>& addresses, int n) {
    if (n < 1) throw ConfigError("number of representatives must be >= 1");
    if (addresses.size() != m.assignments.size())
        throw DataError("address list does not match clustered set");
    std::vector<std::vector<std::size_t>> members(m.k);
    for (std::size_t i = 0; i < m.assignments.size(); ++i) members[m.assignments[i]].push_back(i);

    std::vector<std::vector<Representative>> out(m.k);
    for (int c = 0; c < m.k; ++c) {
        auto& mem = members[c];
        std::stable_sort(mem.begin(), mem.end(),
                         [&](std::size_t x, std::size_t y) { return m.distances[x] < m.distances[y]; });
        const std::size_t take = std::min<std::size_t>(n, mem.size());
        for (std::size_t r = 0; r < take; ++r) {
            const std::size_t i = mem[r];
            out[c].push_back({addresses[i], c, static_cast<int>(r + 1), m.distances[i],
                              m.normalized_distances.empty() ? 0.0 : m.normalized_distances[i], i});
        }
    }
    return out;
}

std::vector<double> tissue_distribution(const ClusterModel& m) {
    std::vector<double> frac(m.k, 0.0);
    if (m.assignments.empty()) return frac;
    for (int a : m.assignments) frac[a] += 1.0;
    for (double& f : frac) f /= static_cast<double>(m.assignments.size());
    return frac;
}

nlohmann::json to_json(const ClusterModel& m, const std::vector<pyramid::PatchAddress>& addresses) {
    nlohmann::json patches = nlohmann::json::array();
    for (std::size_t i = 0; i < m.assignments.size(); ++i) {
        nlohmann::json e;
        if (i < addresses.size()) e["address"] = pyramid::to_json(addresses[i]);
        e["cluster"] = m.assignments[i];
        e["distance"] = m.distances[i];
        e["normalized_distance"] = m.normalized_distances[i];
        patches.push_back(std::move(e));
    }
    return {{"k", m.k},
            {"centroids", m.centroids},
            {"iterations", m.iterations},
            {"inertia", m.inertia()},
            {"patches", patches}};
}

ClusterModel cluster_model_from_json(const nlohmann::json& j,
                                     std::vector<pyramid::PatchAddress>* addresses) {
    ClusterModel m;
    m.k = j.at("k").get<int>();
    m.centroids = j.at("centroids").get<std::vector<Point>>();
    m.iterations = j.value("iterations", 0);
    for (const auto& e : j.at("patches")) {
        m.assignments.push_back(e.at("cluster").get<int>());
        m.distances.push_back(e.at("distance").get<double>());
        m.normalized_distances.push_back(e.at("normalized_distance").get<double>());
        if (addresses) addresses->push_back(pyramid::address_from_json(e.at("address")));
    }
    return m;
}

}  // namespace tumls::clustering
