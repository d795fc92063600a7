#include "fedrac/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrac/error.hpp"

namespace fedrac {

int local_steps(std::size_t n, std::size_t batch, int epochs) {
    require(batch >= 1, "batch size must be >= 1");
    return static_cast<int>(static_cast<std::size_t>(epochs) * n / batch);
}

void ParticipantProfile::recompute_tau() { tau = local_steps(n, batch, epochs); }

void ParticipantProfile::validate() const {
    resources.validate();
    require(batch >= 1 && n >= batch, "participant " + id + ": need n >= batch >= 1");
    require(epochs >= 1, "participant " + id + ": epochs must be >= 1");
}

std::optional<ParticipantProfile> reduce_workload(const ParticipantProfile& p, double step) {
    require(step > 0.0 && step < 1.0, "reduction step must be in (0, 1)");
    if (p.n <= p.batch) return std::nullopt;
    ParticipantProfile out = p;
    const auto scaled = static_cast<std::size_t>(std::floor(static_cast<double>(p.n) * step));
    out.n = std::max(scaled, p.batch);
    out.recompute_tau();
    return out;
}

void TimingModel::validate() const {
    require(model_scale > 0.0 && flops_per_cycle > 0.0 && train_flops_factor > 0.0 && memory_overhead > 0.0,
            "timing constants must be positive");
    require(mar_seconds > 0.0, "MAR must be positive");
    require(kappa > 0.0 && kappa < 1.0, "kappa must be in (0, 1)");
}

double TimingModel::epoch_seconds(const ResourceVector& r, std::span<const LayerShape> model, std::size_t n) const {
    const double flops = train_flops_factor * forward_flops(model) * model_scale * static_cast<double>(n);
    return flops / (r.speed_ghz * 1e9 * flops_per_cycle);
}

double TimingModel::upload_seconds(const ResourceVector& r, std::span<const LayerShape> model) const {
    const double bits = 8.0 * static_cast<double>(parameter_bytes(model)) * model_scale;
    return bits / (r.rate_mbps * 1e6);
}

double TimingModel::round_seconds(const ParticipantProfile& p, std::span<const LayerShape> model) const {
    return epoch_seconds(p.resources, model, p.n) * p.epochs + upload_seconds(p.resources, model);
}

double TimingModel::footprint_bytes(std::span<const LayerShape> model) const {
    return static_cast<double>(parameter_bytes(model)) * model_scale * memory_overhead;
}

bool can_accommodate(const ParticipantProfile& p, const ClusterPlan& c, const TimingModel& t) {
    if (t.footprint_bytes(c.model) > p.resources.memory_gb * 1e9) return false;
    return t.round_seconds(p, c.model) * c.rounds <= c.time_share;
}

std::string to_string(RejectReason r) {
    switch (r) {
        case RejectReason::Memory: return "memory";
        case RejectReason::Time: return "time";
        case RejectReason::Precision: return "precision";
        case RejectReason::Error: return "error";
    }
    return "?";
}

std::vector<double> instance_weights(std::span<const ParticipantProfile> members) {
    double total = 0.0;
    for (const auto& m : members) total += static_cast<double>(m.n);
    std::vector<double> eps;
    for (const auto& m : members) eps.push_back(static_cast<double>(m.n) / total);
    return eps;
}

double cluster_precision(const ConvergenceParams& params, std::span<const ParticipantProfile> members,
                         const ClusterPlan& c) {
    ConvergenceParams p = params;
    p.epsilons = instance_weights(members);
    return precision_bound(p, c.epochs, static_cast<long>(c.rounds) * c.epochs);
}

double cluster_error(const ConvergenceParams& params, std::span<const ParticipantProfile> members,
                     const ClusterPlan& c) {
    ConvergenceParams p = params;
    p.epsilons = instance_weights(members);
    std::vector<AccumulationVector> patterns;
    for (const auto& m : members) patterns.push_back(AccumulationVector::fedavg(std::max(m.tau, 1)));
    return error_bound(p, patterns, c.rounds);
}

double default_delta(const ConvergenceParams& params, int epochs, int rounds, double slack) {
    ConvergenceParams p = params;
    p.epsilons = {1.0};
    return (1.0 + slack) * precision_bound(p, epochs, static_cast<long>(rounds) * epochs);
}

double default_theta(const ConvergenceParams& params, int tau, int rounds, double slack) {
    ConvergenceParams p = params;
    p.epsilons = {0.5, 0.5};
    const std::vector<AccumulationVector> patterns(2, AccumulationVector::fedavg(std::max(tau, 1)));
    return (1.0 + slack) * error_bound(p, patterns, rounds);
}

AssignmentResult assign_participants(std::span<const ParticipantProfile> participants,
                                     std::vector<ClusterPlan> clusters, const ConvergenceParams& params,
                                     const TimingModel& timing, const ResourceWeights& weights,
                                     const AssignmentOptions& options) {
    require(!clusters.empty(), "assignment needs at least one cluster");
    for (std::size_t f = 0; f < clusters.size(); ++f) {
        require(clusters[f].rank == static_cast<int>(f) + 1, "clusters must be ordered by rank");
        require(clusters[f].rounds >= 1, "cluster rounds must be >= 1");
        clusters[f].members.clear();
    }
    timing.validate();
    for (const auto& p : participants) p.validate();

    // Strongest participants first.
    std::vector<std::size_t> order(participants.size());
    std::iota(order.begin(), order.end(), 0);
    if (participants.size() >= 2) {
        const auto norm = normalize_resources([&] {
            std::vector<ResourceVector> v;
            for (const auto& p : participants) v.push_back(p.resources);
            return v;
        }());
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return aggregate_resources(norm[a], weights) > aggregate_resources(norm[b], weights);
        });
    }

    AssignmentResult res;
    res.profiles.assign(participants.begin(), participants.end());
    std::vector<std::vector<ParticipantProfile>> placed(clusters.size());

    for (std::size_t idx : order) {
        AssignmentEntry entry;
        entry.id = participants[idx].id;
        entry.participant = idx;
        bool done = false;
        for (std::size_t f = 0; f < clusters.size() && !done; ++f) {
            const ClusterPlan& c = clusters[f];
            ParticipantProfile p = participants[idx];
            p.epochs = c.epochs;
            p.recompute_tau();
            int reductions = 0;
            if (timing.footprint_bytes(c.model) > p.resources.memory_gb * 1e9) {
                entry.rejected.push_back({c.rank, RejectReason::Memory});
                continue;
            }
            bool fits = can_accommodate(p, c, timing);
            while (!fits && reductions < options.max_reductions) {
                auto smaller = reduce_workload(p, options.reduction_step);
                if (!smaller) break;
                p = *smaller;
                ++reductions;
                fits = can_accommodate(p, c, timing);
            }
            if (!fits) {
                entry.rejected.push_back({c.rank, RejectReason::Time});
                continue;
            }
            std::vector<ParticipantProfile> prospective = placed[f];
            prospective.push_back(p);
            if (cluster_precision(params, prospective, c) > c.delta) {
                entry.rejected.push_back({c.rank, RejectReason::Precision});
                continue;
            }
            // A lone participant has no intra-cluster heterogeneity to bound.
            if (!placed[f].empty() && cluster_error(params, prospective, c) > c.theta) {
                entry.rejected.push_back({c.rank, RejectReason::Error});
                continue;
            }
            placed[f].push_back(p);
            clusters[f].members.push_back(idx);
            res.profiles[idx] = p;
            entry.rank = c.rank;
            entry.n = p.n;
            entry.tau = p.tau;
            entry.reductions = reductions;
            done = true;
        }
        if (!done)
            throw InfeasibleError(entry.id, "participant " + entry.id +
                                                " cannot be placed in any cluster, even at its minimum workload");
        res.log.push_back(std::move(entry));
    }
    res.clusters = std::move(clusters);
    return res;
}

}  // namespace fedrac
