#include "fedrac/resources.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fedrac/csv.hpp"
#include "fedrac/error.hpp"

namespace fedrac {

void ResourceVector::validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    require(ok(speed_ghz) && ok(rate_mbps) && ok(memory_gb),
            "resource vector components must be positive and finite");
}

void ResourceWeights::validate() const {
    require(speed >= 0.0 && rate >= 0.0 && memory >= 0.0, "resource weights must be nonnegative");
    require(std::abs(speed + rate + memory - 1.0) <= 1e-9, "resource weights must sum to 1");
}

std::vector<NormalizedResource> normalize_resources(std::span<const ResourceVector> vectors) {
    if (vectors.size() < 2) throw InvalidArgument("normalization needs at least 2 participants");
    for (const auto& v : vectors) v.validate();

    auto scale = [&](double ResourceVector::*field) {
        double lo = vectors.front().*field;
        double hi = lo;
        for (const auto& v : vectors) {
            lo = std::min(lo, v.*field);
            hi = std::max(hi, v.*field);
        }
        std::vector<double> out(vectors.size(), 0.0);
        if (hi > lo) {
            for (std::size_t i = 0; i < vectors.size(); ++i) out[i] = (vectors[i].*field - lo) / (hi - lo);
        }
        return out;
    };
    const auto s = scale(&ResourceVector::speed_ghz);
    const auto r = scale(&ResourceVector::rate_mbps);
    const auto a = scale(&ResourceVector::memory_gb);

    std::vector<NormalizedResource> out(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) out[i] = {s[i], r[i], a[i]};
    return out;
}

std::vector<NormalizedResource> normalize_resources(std::span<const Participant> participants) {
    std::vector<ResourceVector> v;
    v.reserve(participants.size());
    for (const auto& p : participants) v.push_back(p.resources);
    return normalize_resources(v);
}

double similarity(const NormalizedResource& a, const NormalizedResource& b, const ResourceWeights& w) {
    const double ds = a.speed - b.speed;
    const double dr = a.rate - b.rate;
    const double dm = a.memory - b.memory;
    return std::sqrt(w.speed * ds * ds + w.rate * dr * dr + w.memory * dm * dm);
}

double aggregate_resources(const NormalizedResource& v, const ResourceWeights& w) {
    return w.speed * v.speed + w.rate * v.rate + w.memory * v.memory;
}

DistanceMatrix::DistanceMatrix(std::size_t n, std::vector<double> values) : n_(n), d_(std::move(values)) {
    require(d_.size() == n * n, "distance matrix must be n x n");
}

DistanceMatrix DistanceMatrix::scaled(double c) const {
    DistanceMatrix out = *this;
    for (auto& v : out.d_) v *= c;
    return out;
}

DistanceMatrix pairwise_similarity(std::span<const NormalizedResource> points, const ResourceWeights& w,
                                   Exec exec) {
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    DistanceMatrix d(points.size());
    if (exec == Exec::Serial) {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            for (std::ptrdiff_t j = 0; j < n; ++j) d(i, j) = similarity(points[i], points[j], w);
        return d;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        for (std::ptrdiff_t j = 0; j < n; ++j) d(i, j) = similarity(points[i], points[j], w);
    return d;
}

std::vector<Participant> load_resource_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const auto id = table.column("id");
    const auto speed = table.column("speed_ghz");
    const auto rate = table.column("rate_mbps");
    const auto mem = table.column("memory_gb");

    std::vector<Participant> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        Participant p;
        p.id = table.rows[r][id];
        p.resources = {table.number(r, speed), table.number(r, rate), table.number(r, mem)};
        try {
            p.resources.validate();
        } catch (const InvalidArgument& e) {
            throw DataError(path.string() + ": participant " + p.id + ": " + e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

void write_resource_csv(const std::filesystem::path& path, std::span<const Participant> participants) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << "id,speed_ghz,rate_mbps,memory_gb\n";
    for (const auto& p : participants) {
        os << p.id << ',' << format_number(p.resources.speed_ghz) << ',' << format_number(p.resources.rate_mbps)
           << ',' << format_number(p.resources.memory_gb) << '\n';
    }
}

}  // namespace fedrac
