#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedrac/matrix.hpp"

namespace fedrac {

struct Dataset {
    Matrix features;            // n x d
    std::vector<int> labels;    // each in [0, classes)
    int classes = 0;
    std::string provenance;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols; }
    void validate() const;
    std::vector<std::size_t> class_counts() const;
    Dataset subset(std::span<const std::size_t> index) const;
    Dataset head(std::size_t n) const;
};

/// `classes` isotropic Gaussian blobs (unit variance) whose means are at
/// least `separation` apart; labels cycle 0, 1, ..., c-1.
Dataset synth_blobs(int classes, int dim, std::size_t n, double separation, std::uint64_t seed);

/// Draws `counts[i]` instances for shard i without overlap. Shards are cut
/// from a class-interleaved permutation so each shard's class mix tracks the
/// global one. Throws DataError when the counts exceed the dataset.
std::vector<Dataset> partition_iid(const Dataset& ds, std::span<const std::size_t> counts, std::uint64_t seed);

struct LeaveOneOut {
    Dataset train;   // every class but the dropped one
    Dataset test;    // the full dataset
    int dropped = 0;
};

/// Drops `class_id`, or the most frequent class (lowest id on ties) when unset.
LeaveOneOut leave_one_out(const Dataset& ds, std::optional<int> class_id = std::nullopt);

/// Reads a header row with a `label` column and numeric feature columns.
Dataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace fedrac
