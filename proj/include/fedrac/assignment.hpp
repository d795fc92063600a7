#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedrac/convergence.hpp"
#include "fedrac/model.hpp"
#include "fedrac/resources.hpp"

namespace fedrac {

// One participant's workload: tau = floor(epochs * n / batch) local steps.
struct ParticipantProfile {
    std::string id;
    ResourceVector resources;
    std::size_t n = 0;
    std::size_t batch = 1;
    int epochs = 1;
    int tau = 0;

    void recompute_tau();
    void validate() const;
};

int local_steps(std::size_t n, std::size_t batch, int epochs);

/// Halves (by `step`) the instance count down to the batch size and
/// recomputes tau. Returns nullopt when the profile is already at n = batch.
std::optional<ParticipantProfile> reduce_workload(const ParticipantProfile& p, double step = 0.5);

// Converts model size and device resources into seconds and bytes.
// Desk-scale models are multiplied by `model_scale` to stand in for
// full-size networks.
struct TimingModel {
    double model_scale = 100.0;
    double flops_per_cycle = 1.0;       // sustained FLOP per clock cycle
    double train_flops_factor = 3.0;    // forward + backward relative to forward
    double memory_overhead = 4.0;       // training footprint relative to parameter bytes
    double mar_seconds = 2000.0;
    double kappa = 0.8;
    bool sequential = false;

    void validate() const;
    double epoch_seconds(const ResourceVector& r, std::span<const LayerShape> model, std::size_t n) const;
    double upload_seconds(const ResourceVector& r, std::span<const LayerShape> model) const;
    // T_i = T_a * E + T_c
    double round_seconds(const ParticipantProfile& p, std::span<const LayerShape> model) const;
    double footprint_bytes(std::span<const LayerShape> model) const;
};

struct ClusterPlan {
    int rank = 1;                      // 1 = master, most resources
    std::vector<LayerShape> model;
    int epochs = 1;
    int rounds = 1;
    double delta = 0.0;                // precision threshold
    double theta = 0.0;                // optimization-error threshold
    double time_share = 0.0;           // seconds of the response budget for this cluster
    std::vector<std::size_t> members;  // indices into the participant list
};

/// True when the model fits in memory and rounds * T_i fits the cluster's
/// time share (boundary inclusive).
bool can_accommodate(const ParticipantProfile& p, const ClusterPlan& c, const TimingModel& t);

struct AssignmentOptions {
    double reduction_step = 0.5;
    int max_reductions = 3;
};

enum class RejectReason { Memory, Time, Precision, Error };
std::string to_string(RejectReason r);

struct Rejection {
    int rank = 0;
    RejectReason reason = RejectReason::Time;
};

struct AssignmentEntry {
    std::string id;
    std::size_t participant = 0;
    int rank = 0;
    std::size_t n = 0;
    int tau = 0;
    int reductions = 0;
    std::vector<Rejection> rejected;
};

struct AssignmentResult {
    std::vector<ClusterPlan> clusters;
    std::vector<ParticipantProfile> profiles;   // final (possibly reduced) workloads, input order
    std::vector<AssignmentEntry> log;           // in processing order
};

// Cluster weights n_j / sum(n) for a prospective membership.
std::vector<double> instance_weights(std::span<const ParticipantProfile> members);

double cluster_precision(const ConvergenceParams& params, std::span<const ParticipantProfile> members,
                         const ClusterPlan& c);
double cluster_error(const ConvergenceParams& params, std::span<const ParticipantProfile> members,
                     const ClusterPlan& c);

/// delta_f: precision bound of a lone participant at the plan's (E, R), plus slack.
double default_delta(const ConvergenceParams& params, int epochs, int rounds, double slack = 0.10);

/// theta_f: error bound of two equal FedAvg participants with `tau` steps, plus slack.
double default_theta(const ConvergenceParams& params, int tau, int rounds, double slack = 0.25);

/// Places every participant in the highest-ranked cluster whose checks it
/// passes, reducing its workload before giving up on a cluster. Participants
/// are visited in descending aggregate-resource order. Throws
/// InfeasibleError naming the first participant that fits nowhere.
AssignmentResult assign_participants(std::span<const ParticipantProfile> participants,
                                     std::vector<ClusterPlan> clusters, const ConvergenceParams& params,
                                     const TimingModel& timing, const ResourceWeights& weights,
                                     const AssignmentOptions& options = {});

}  // namespace fedrac
