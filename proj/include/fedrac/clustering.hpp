#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedrac/exec.hpp"
#include "fedrac/resources.hpp"

namespace fedrac {

// Assignment of participants to k clusters. Every cluster in [0, k) is
// non-empty and every participant belongs to exactly one cluster.
struct Partition {
    int k = 0;
    std::vector<int> assignment;

    std::size_t size() const noexcept { return assignment.size(); }
    std::vector<std::size_t> members(int cluster) const;
    std::vector<std::vector<std::size_t>> clusters() const;
    void validate() const;

    bool operator==(const Partition&) const = default;
};

// Relabels clusters in order of first appearance so equal groupings compare equal.
Partition canonical(const Partition& p);

struct KMeansOptions {
    int restarts = 16;
    int max_iterations = 300;
    Exec exec = Exec::Parallel;
};

struct KMeansResult {
    Partition partition;
    double objective = 0.0;          // sum of weighted squared distances to centroids
    int restart = 0;                 // index of the winning restart
    std::vector<double> trace;       // objective after every Lloyd iteration of the winner
};

/// One k-means++ seeded Lloyd run. Deterministic in (seed, restart).
KMeansResult kmeans_restart(std::span<const NormalizedResource> points, int k, const ResourceWeights& w,
                            std::uint64_t seed, int restart, int max_iterations = 300);

/// Best of `options.restarts` runs by (objective, restart index).
KMeansResult kmeans(std::span<const NormalizedResource> points, int k, const ResourceWeights& w,
                    std::uint64_t seed, const KMeansOptions& options = {});

double kmeans_objective(std::span<const NormalizedResource> points, const Partition& p, const ResourceWeights& w);

std::vector<NormalizedResource> centroids(std::span<const NormalizedResource> points, const Partition& p);

double cluster_distance(std::span<const std::size_t> cf, std::span<const std::size_t> cg, const DistanceMatrix& s);

double cluster_diameter(std::span<const std::size_t> cf, const DistanceMatrix& s);

/// Minimum inter-cluster distance over the largest cluster diameter.
/// Empty when every diameter is zero: separation is unbounded and the
/// index is not meaningful.
std::optional<double> dunn_index(const Partition& p, const DistanceMatrix& s);

struct DunnPoint {
    int k = 0;
    std::optional<double> di;
    Partition partition;
    double objective = 0.0;
};

struct ClusterSelection {
    int k = 0;
    Partition partition;
    std::vector<DunnPoint> curve;   // k = 2 .. floor(sqrt(N))
};

/// Scans k = 2 .. floor(sqrt(N)) and keeps the k with the largest Dunn index,
/// ties going to the smaller k.
ClusterSelection optimal_clusters(std::span<const NormalizedResource> points, const ResourceWeights& w,
                                  std::uint64_t seed, const KMeansOptions& options = {});

/// Relabels so cluster 0 holds the most aggregate resources (mean of the
/// weighted normalized vector over members), descending from there.
Partition order_by_resources(const Partition& p, std::span<const NormalizedResource> points,
                             const ResourceWeights& w);

/// Merges adjacent clusters of a resource-ordered partition until `m` remain.
/// Each step merges the adjacent pair whose centroids are closest.
Partition compact_clusters(const Partition& ordered, int m, std::span<const NormalizedResource> points,
                           const ResourceWeights& w);

}  // namespace fedrac
