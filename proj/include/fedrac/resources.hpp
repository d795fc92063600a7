#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedrac/exec.hpp"

namespace fedrac {

// Raw device resources as reported by a participant.
struct ResourceVector {
    double speed_ghz = 0.0;
    double rate_mbps = 0.0;
    double memory_gb = 0.0;

    void validate() const;
};

// Min-max scaled resources, each component in [0, 1].
struct NormalizedResource {
    double speed = 0.0;
    double rate = 0.0;
    double memory = 0.0;

    bool operator==(const NormalizedResource&) const = default;
};

// Contributions of processing speed, transmission rate and memory to the
// similarity measure. Must be nonnegative and sum to one.
struct ResourceWeights {
    double speed = 1.0 / 3.0;
    double rate = 1.0 / 3.0;
    double memory = 1.0 / 3.0;

    void validate() const;
    static ResourceWeights equal() { return {}; }
};

struct Participant {
    std::string id;
    ResourceVector resources;
};

/// Scales each component to [0, 1] over the population. A component that is
/// constant across the population maps to 0 for every participant.
/// Throws InvalidArgument for populations of fewer than two vectors.
std::vector<NormalizedResource> normalize_resources(std::span<const ResourceVector> vectors);

std::vector<NormalizedResource> normalize_resources(std::span<const Participant> participants);

/// Weighted Euclidean distance between two normalized vectors.
double similarity(const NormalizedResource& a, const NormalizedResource& b, const ResourceWeights& w);

// lambda-weighted sum of a normalized vector; used to rank clusters and
// participants by aggregate resources.
double aggregate_resources(const NormalizedResource& v, const ResourceWeights& w);

// Dense symmetric matrix of pairwise similarities.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}
    DistanceMatrix(std::size_t n, std::vector<double> values);

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
    const std::vector<double>& values() const noexcept { return d_; }

    DistanceMatrix scaled(double c) const;

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

DistanceMatrix pairwise_similarity(std::span<const NormalizedResource> points, const ResourceWeights& w,
                                   Exec exec = Exec::Parallel);

/// Reads `id,speed_ghz,rate_mbps,memory_gb` rows. Throws DataError on a
/// missing file, wrong header or malformed row.
std::vector<Participant> load_resource_csv(const std::filesystem::path& path);

void write_resource_csv(const std::filesystem::path& path, std::span<const Participant> participants);

}  // namespace fedrac
