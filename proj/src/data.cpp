#include "fedrac/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrac/csv.hpp"
#include "fedrac/error.hpp"
#include "fedrac/rng.hpp"

namespace fedrac {

void Dataset::validate() const {
    require(classes >= 1, "dataset needs a class count");
    require(features.rows == labels.size(), "feature and label counts differ");
    for (int y : labels) require(y >= 0 && y < classes, "label out of range");
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> c(classes, 0);
    for (int y : labels) ++c[y];
    return c;
}

Dataset Dataset::subset(std::span<const std::size_t> index) const {
    Dataset out;
    out.features = gather_rows(features, index);
    out.labels.reserve(index.size());
    for (auto i : index) out.labels.push_back(labels[i]);
    out.classes = classes;
    out.provenance = provenance;
    return out;
}

Dataset Dataset::head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), 0);
    return subset(idx);
}

Dataset synth_blobs(int classes, int dim, std::size_t n, double separation, std::uint64_t seed) {
    require(classes >= 2, "synthetic blobs need at least 2 classes");
    require(dim >= 1, "synthetic blobs need dim >= 1");
    require(separation >= 0.0, "separation must be nonnegative");
    Rng rng(stream_seed(seed, 0x626c6f6273ULL));

    // Rejection-sample means in a cube; widen the cube when it gets crowded.
    Matrix means(classes, dim);
    double half = std::max(separation, 1e-9);
    for (int c = 0; c < classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            for (int j = 0; j < dim; ++j) means(c, j) = rng.uniform(-half, half);
            bool ok = true;
            for (int o = 0; o < c && ok; ++o) {
                double d2 = 0.0;
                for (int j = 0; j < dim; ++j) d2 += (means(c, j) - means(o, j)) * (means(c, j) - means(o, j));
                ok = std::sqrt(d2) >= separation;
            }
            if (ok) break;
            if (attempt % 64 == 63) half *= 1.25;
        }
    }

    Dataset ds;
    ds.classes = classes;
    ds.features = Matrix(n, dim);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.labels[i] = c;
        for (int j = 0; j < dim; ++j) ds.features(i, j) = means(c, j) + rng.normal();
    }
    ds.provenance = "synthetic:blobs seed=" + std::to_string(seed);
    return ds;
}

std::vector<Dataset> partition_iid(const Dataset& ds, std::span<const std::size_t> counts, std::uint64_t seed) {
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total > ds.size())
        throw DataError("partition needs " + std::to_string(total) + " instances, dataset has " +
                        std::to_string(ds.size()));
    Rng rng(stream_seed(seed, 0x7368617264ULL));

    // Within each class, shuffle; then order everything by fractional position
    // (rank + u) / class_size so any contiguous run is near-stratified.
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    struct Key {
        double pos;
        std::size_t index;
    };
    std::vector<Key> keys;
    keys.reserve(ds.size());
    for (auto& members : by_class) {
        rng.shuffle(members.begin(), members.end());
        const double m = static_cast<double>(members.size());
        for (std::size_t r = 0; r < members.size(); ++r)
            keys.push_back({(static_cast<double>(r) + rng.uniform()) / m, members[r]});
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        return a.pos < b.pos || (a.pos == b.pos && a.index < b.index);
    });

    std::vector<Dataset> shards;
    std::size_t at = 0;
    for (std::size_t c : counts) {
        std::vector<std::size_t> idx;
        idx.reserve(c);
        for (std::size_t i = 0; i < c; ++i) idx.push_back(keys[at + i].index);
        at += c;
        rng.shuffle(idx.begin(), idx.end());
        shards.push_back(ds.subset(idx));
    }
    return shards;
}

LeaveOneOut leave_one_out(const Dataset& ds, std::optional<int> class_id) {
    const auto counts = ds.class_counts();
    int drop = 0;
    if (class_id) {
        drop = *class_id;
        if (drop < 0 || drop >= ds.classes || counts[drop] == 0)
            throw InvalidArgument("leave-one-out: class " + std::to_string(drop) + " is not present");
    } else {
        drop = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.labels[i] != drop) keep.push_back(i);
    LeaveOneOut out{ds.subset(keep), ds, drop};
    out.train.provenance = ds.provenance + " without class " + std::to_string(drop);
    return out;
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t label_col = t.column("label");
    const std::size_t d = t.header.size() - 1;
    if (d == 0) throw DataError(path.string() + ": no feature columns");
    if (t.rows.empty()) throw DataError(path.string() + ": no rows");
    Dataset ds;
    ds.features = Matrix(t.rows.size(), d);
    ds.labels.resize(t.rows.size());
    int max_label = -1;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double y = t.number(r, label_col);
        if (y < 0 || y != std::floor(y)) throw DataError(path.string() + ": labels must be nonnegative integers");
        ds.labels[r] = static_cast<int>(y);
        max_label = std::max(max_label, ds.labels[r]);
        std::size_t j = 0;
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (c == label_col) continue;
            ds.features(r, j++) = t.number(r, c);
        }
    }
    ds.classes = max_label + 1;
    ds.provenance = "file:" + path.string();
    return ds;
}

}  // namespace fedrac
