#include "fedrac/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedrac/error.hpp"
#include "fedrac/rng.hpp"

namespace fedrac {

namespace {

double weighted_sq(const NormalizedResource& a, const NormalizedResource& b, const ResourceWeights& w) {
    const double ds = a.speed - b.speed;
    const double dr = a.rate - b.rate;
    const double dm = a.memory - b.memory;
    return w.speed * ds * ds + w.rate * dr * dr + w.memory * dm * dm;
}

std::vector<NormalizedResource> means(std::span<const NormalizedResource> points, std::span<const int> assign, int k,
                                      std::vector<std::size_t>& counts) {
    std::vector<NormalizedResource> c(k);
    counts.assign(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto& m = c[assign[i]];
        m.speed += points[i].speed;
        m.rate += points[i].rate;
        m.memory += points[i].memory;
        ++counts[assign[i]];
    }
    for (int f = 0; f < k; ++f) {
        if (counts[f] == 0) continue;
        const double n = static_cast<double>(counts[f]);
        c[f] = {c[f].speed / n, c[f].rate / n, c[f].memory / n};
    }
    return c;
}

int nearest(const NormalizedResource& p, std::span<const NormalizedResource> centers, const ResourceWeights& w) {
    int best = 0;
    double best_d = weighted_sq(p, centers[0], w);
    for (int f = 1; f < static_cast<int>(centers.size()); ++f) {
        const double d = weighted_sq(p, centers[f], w);
        if (d < best_d) {
            best_d = d;
            best = f;
        }
    }
    return best;
}

std::vector<NormalizedResource> seed_plus_plus(std::span<const NormalizedResource> points, int k,
                                               const ResourceWeights& w, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<NormalizedResource> centers;
    centers.reserve(k);
    centers.push_back(points[rng.below(n)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = weighted_sq(points[i], centers[0], w);
    while (static_cast<int>(centers.size()) < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.below(n);
        } else {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], weighted_sq(points[i], centers.back(), w));
    }
    return centers;
}

double objective_of(std::span<const NormalizedResource> points, std::span<const int> assign,
                    std::span<const NormalizedResource> centers, const ResourceWeights& w) {
    double j = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) j += weighted_sq(points[i], centers[assign[i]], w);
    return j;
}

}  // namespace

std::vector<std::size_t> Partition::members(int cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == cluster) out.push_back(i);
    return out;
}

std::vector<std::vector<std::size_t>> Partition::clusters() const {
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
    return out;
}

void Partition::validate() const {
    require(k >= 1, "partition needs at least one cluster");
    std::vector<std::size_t> count(k, 0);
    for (int a : assignment) {
        require(a >= 0 && a < k, "partition label out of range");
        ++count[a];
    }
    for (auto c : count) require(c > 0, "partition has an empty cluster");
}

Partition canonical(const Partition& p) {
    std::vector<int> relabel(p.k, -1);
    int next = 0;
    Partition out{p.k, std::vector<int>(p.assignment.size())};
    for (std::size_t i = 0; i < p.assignment.size(); ++i) {
        int& r = relabel[p.assignment[i]];
        if (r < 0) r = next++;
        out.assignment[i] = r;
    }
    return out;
}

KMeansResult kmeans_restart(std::span<const NormalizedResource> points, int k, const ResourceWeights& w,
                            std::uint64_t seed, int restart, int max_iterations) {
    const std::size_t n = points.size();
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(restart)));
    auto centers = seed_plus_plus(points, k, w, rng);

    KMeansResult res;
    std::vector<int> assign(n, -1);
    std::vector<std::size_t> counts;
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const int f = nearest(points[i], centers, w);
            if (f != assign[i]) {
                assign[i] = f;
                changed = true;
            }
        }
        centers = means(points, assign, k, counts);
        // Empty clusters take the point farthest from its own centroid.
        for (int f = 0; f < k; ++f) {
            if (counts[f] != 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assign[i]] < 2) continue;
                const double d = weighted_sq(points[i], centers[assign[i]], w);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far == n) break;
            assign[far] = f;
            centers = means(points, assign, k, counts);
            changed = true;
        }
        res.trace.push_back(objective_of(points, assign, centers, w));
        if (!changed) break;
    }
    res.partition = canonical(Partition{k, std::move(assign)});
    res.objective = res.trace.back();
    res.restart = restart;
    return res;
}

KMeansResult kmeans(std::span<const NormalizedResource> points, int k, const ResourceWeights& w, std::uint64_t seed,
                    const KMeansOptions& options) {
    w.validate();
    if (k < 1 || static_cast<std::size_t>(k) > points.size())
        throw InvalidArgument("k-means: k=" + std::to_string(k) + " must be in [1, " + std::to_string(points.size()) +
                              "]");
    require(options.restarts >= 1, "k-means: restarts must be >= 1");

    const int r = options.restarts;
    std::vector<KMeansResult> runs(r);
    if (options.exec == Exec::Serial) {
        for (int i = 0; i < r; ++i) runs[i] = kmeans_restart(points, k, w, seed, i, options.max_iterations);
    } else {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < r; ++i) runs[i] = kmeans_restart(points, k, w, seed, i, options.max_iterations);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i)
        if (runs[i].objective < runs[best].objective) best = i;
    return std::move(runs[best]);
}

double kmeans_objective(std::span<const NormalizedResource> points, const Partition& p, const ResourceWeights& w) {
    std::vector<std::size_t> counts;
    const auto c = means(points, p.assignment, p.k, counts);
    return objective_of(points, p.assignment, c, w);
}

std::vector<NormalizedResource> centroids(std::span<const NormalizedResource> points, const Partition& p) {
    std::vector<std::size_t> counts;
    return means(points, p.assignment, p.k, counts);
}

double cluster_distance(std::span<const std::size_t> cf, std::span<const std::size_t> cg, const DistanceMatrix& s) {
    require(!cf.empty() && !cg.empty(), "cluster distance needs non-empty clusters");
    double best = std::numeric_limits<double>::infinity();
    for (auto i : cf) {
        for (auto j : cg) {
            if (i == j) throw InvalidArgument("cluster distance: clusters overlap at participant " + std::to_string(i));
            best = std::min(best, s(i, j));
        }
    }
    return best;
}

double cluster_diameter(std::span<const std::size_t> cf, const DistanceMatrix& s) {
    double d = 0.0;
    for (std::size_t a = 0; a < cf.size(); ++a)
        for (std::size_t b = a + 1; b < cf.size(); ++b) d = std::max(d, s(cf[a], cf[b]));
    return d;
}

std::optional<double> dunn_index(const Partition& p, const DistanceMatrix& s) {
    p.validate();
    require(p.k >= 2, "Dunn index needs k >= 2");
    require(p.size() == s.size(), "Dunn index: partition and distance matrix sizes differ");
    const auto groups = p.clusters();
    double max_dia = 0.0;
    for (const auto& g : groups) max_dia = std::max(max_dia, cluster_diameter(g, s));
    if (max_dia <= 0.0) return std::nullopt;
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < groups.size(); ++f)
        for (std::size_t g = f + 1; g < groups.size(); ++g)
            min_sep = std::min(min_sep, cluster_distance(groups[f], groups[g], s));
    return min_sep / max_dia;
}

ClusterSelection optimal_clusters(std::span<const NormalizedResource> points, const ResourceWeights& w,
                                  std::uint64_t seed, const KMeansOptions& options) {
    const std::size_t n = points.size();
    std::size_t k_max = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    while ((k_max + 1) * (k_max + 1) <= n) ++k_max;
    while (k_max * k_max > n) --k_max;
    if (k_max < 2)
        throw InvalidArgument("need at least 4 participants to cluster (floor(sqrt(" + std::to_string(n) +
                              ")) < 2)");

    const DistanceMatrix s = pairwise_similarity(points, w, options.exec);
    ClusterSelection sel;
    std::optional<double> best;
    for (int k = 2; k <= static_cast<int>(k_max); ++k) {
        auto km = kmeans(points, k, w, seed, options);
        DunnPoint pt{k, dunn_index(km.partition, s), km.partition, km.objective};
        if (pt.di && (!best || *pt.di > *best)) {
            best = pt.di;
            sel.k = k;
            sel.partition = pt.partition;
        }
        sel.curve.push_back(std::move(pt));
    }
    if (!best) throw DataError("degenerate population: every candidate k has zero cluster diameters");
    return sel;
}

Partition order_by_resources(const Partition& p, std::span<const NormalizedResource> points,
                             const ResourceWeights& w) {
    p.validate();
    std::vector<double> total(p.k, 0.0);
    std::vector<std::size_t> count(p.k, 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        total[p.assignment[i]] += aggregate_resources(points[i], w);
        ++count[p.assignment[i]];
    }
    std::vector<int> order(p.k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return total[a] / static_cast<double>(count[a]) > total[b] / static_cast<double>(count[b]);
    });
    std::vector<int> rank(p.k);
    for (int r = 0; r < p.k; ++r) rank[order[r]] = r;
    Partition out{p.k, p.assignment};
    for (auto& a : out.assignment) a = rank[a];
    return out;
}

Partition compact_clusters(const Partition& ordered, int m, std::span<const NormalizedResource> points,
                           const ResourceWeights& w) {
    ordered.validate();
    if (m < 2 || m >= ordered.k)
        throw InvalidArgument("compaction target m=" + std::to_string(m) + " must satisfy 2 <= m < k=" +
                              std::to_string(ordered.k));

    std::vector<std::vector<std::size_t>> groups = ordered.clusters();
    auto centroid = [&](const std::vector<std::size_t>& g) {
        NormalizedResource c;
        for (auto i : g) {
            c.speed += points[i].speed;
            c.rate += points[i].rate;
            c.memory += points[i].memory;
        }
        const double n = static_cast<double>(g.size());
        return NormalizedResource{c.speed / n, c.rate / n, c.memory / n};
    };
    while (static_cast<int>(groups.size()) > m) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f + 1 < groups.size(); ++f) {
            const double d = similarity(centroid(groups[f]), centroid(groups[f + 1]), w);
            if (d < best_d) {
                best_d = d;
                best = f;
            }
        }
        groups[best].insert(groups[best].end(), groups[best + 1].begin(), groups[best + 1].end());
        groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    }
    Partition out{m, std::vector<int>(ordered.size())};
    for (std::size_t f = 0; f < groups.size(); ++f)
        for (auto i : groups[f]) out.assignment[i] = static_cast<int>(f);
    return out;
}

}  // namespace fedrac
