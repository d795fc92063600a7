#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedrac/assignment.hpp"
#include "fedrac/clustering.hpp"
#include "fedrac/config.hpp"
#include "fedrac/data.hpp"
#include "fedrac/model.hpp"

namespace fedrac {

// Server-hosted inference of the trained master model. Slaves query it on
// their own minibatches, so the master never has to fit on a slave device.
class TeacherOracle {
public:
    explicit TeacherOracle(WeightVector master) : master_(std::move(master)) {}
    Matrix operator()(const Matrix& x) const { return forward(master_, x); }
    const WeightVector& weights() const noexcept { return master_; }

private:
    WeightVector master_;
};

// Returns teacher logits for a batch of inputs.
using LogitOracle = std::function<Matrix(const Matrix&)>;

struct LocalTrainOptions {
    int epochs = 1;
    std::size_t batch = 32;
    double eta = 0.01;
    LogitOracle teacher;                         // empty: plain cross-entropy
    KdOptions kd;
    const WeightVector* prox_anchor = nullptr;   // FedProx: pull toward this
    double mu_prox = 0.0;
    bool class_balanced = false;
    std::optional<int> steps;                    // overrides floor(E * n / B)
};

struct LocalResult {
    WeightVector weights;
    double loss = 0.0;   // mean minibatch loss over the executed steps
    int steps = 0;
    std::vector<std::size_t> class_draws;   // instances drawn per class
};

/// floor(E * n / B) SGD steps over shuffled minibatches of the shard.
/// Throws DataError on an empty shard.
LocalResult local_train(const Dataset& shard, const WeightVector& init, const LocalTrainOptions& opt,
                        std::uint64_t seed);

/// Instance-weighted mean sum_i (n_i / sum n) w_i, accumulated left to right
/// as a running mean so identical inputs reproduce exactly.
WeightVector fedavg_aggregate(std::span<const WeightVector> wpms, std::span<const std::size_t> counts);

double weighted_mean(std::span<const double> values, std::span<const std::size_t> counts);

struct RoundReport {
    int round = 0;
    int cluster = 0;                     // rank
    std::vector<double> local_losses;    // member order
    double global_loss = 0.0;
    double round_seconds = 0.0;          // max member T_i
    double cumulative_seconds = 0.0;
    bool mar_violation = false;
    double accuracy = 0.0;
    double f1 = 0.0;
};

struct ClusterMember {
    std::string id;
    const Dataset* data = nullptr;
    ParticipantProfile profile;
    std::size_t index = 0;               // position in the population
};

enum class ClusterMode { Plain, FedProx };

struct ClusterRunOptions {
    int rounds = 1;
    ClusterMode mode = ClusterMode::Plain;
    double mu_prox = 0.0;
    double eta = 0.01;
    std::size_t batch = 32;
    int epochs = 1;
    LogitOracle teacher;
    KdOptions kd;
    bool class_balanced = false;
    std::optional<int> forced_steps;     // every member runs exactly this many steps
    const Dataset* eval = nullptr;       // test set for accuracy / F1
    const TimingModel* timing = nullptr;
    double time_share = 0.0;
    std::uint64_t seed = 1;
    Exec exec = Exec::Parallel;
};

struct ClusterRun {
    int rank = 0;
    WeightVector weights;
    std::vector<RoundReport> rounds;
};

/// Synchronous rounds: broadcast, local training on every member, aggregate,
/// evaluate. Member updates within a round are independent; aggregation
/// always folds them in member order.
ClusterRun run_cluster_fl(int rank, std::span<const ClusterMember> members, WeightVector init,
                          const ClusterRunOptions& opt);

struct ClusterSummary {
    int rank = 0;
    std::vector<int> widths;
    std::vector<std::string> members;
    int epochs = 0;
    int rounds = 0;
    double delta = 0.0;
    double theta = 0.0;
    double time_share = 0.0;
    double total_seconds = 0.0;
    bool mar_violation = false;
    double accuracy = 0.0;
    double f1 = 0.0;
    bool distilled = false;
    std::vector<double> accuracy_series;
};

struct ExperimentReport {
    std::string baseline;
    std::uint64_t seed = 0;
    int k_star = 0;
    std::vector<std::pair<int, std::optional<double>>> dunn_curve;
    int m = 0;
    std::vector<AssignmentEntry> assignment;
    std::vector<ClusterSummary> clusters;
    std::vector<RoundReport> rounds;
    double global_accuracy = 0.0;
    double global_f1 = 0.0;
    double total_seconds = 0.0;
    std::optional<int> dropped_class;
    std::vector<std::pair<int, WeightVector>> final_models;   // (rank, weights) per trained cluster
};

// Everything a run needs besides the trainer: population, plan and data.
struct ExperimentSetup {
    std::vector<Participant> population;
    std::vector<NormalizedResource> normalized;
    ClusterSelection selection;
    Partition ordered;               // resource-ordered k* partition
    Partition compacted;             // m clusters (or ordered when m = k*)
    int m = 0;
    AssignmentResult assignment;
    std::vector<Dataset> shards;     // one per participant, nominal size
    Dataset test;
    std::optional<int> dropped_class;
    ModelSpec spec;
};

std::vector<std::size_t> participant_sample_counts(const ExperimentConfig& c, std::size_t n);

/// Clustering, compaction, cluster plans, assignment and data partitioning.
ExperimentSetup prepare_experiment(const ExperimentConfig& c);

/// Cluster plans (model, E_f, R_f, thresholds, time share) for m ranks.
std::vector<ClusterPlan> build_cluster_plans(const ExperimentConfig& c, const ModelSpec& spec, int m,
                                             std::span<const std::size_t> expected_sizes);

/// The full pipeline: master cluster first, then slaves guided by the master's
/// logits. FedAvg / FedProx baselines train one cluster of every participant on
/// the smallest model.
ExperimentReport run_fedrac(const ExperimentConfig& c);
ExperimentReport run_experiment(const ExperimentConfig& c, const ExperimentSetup& setup);

struct InconsistencyRecord {
    double actual = 0.0;         // objective with every tau forced equal
    double inconsistent = 0.0;   // objective under heterogeneous tau
    double err = 0.0;
    double bound = 0.0;          // analytic optimization-error bound for the same setup
};

/// Objective values from per-participant losses under both regimes.
InconsistencyRecord inconsistency_from_losses(std::span<const double> actual_losses,
                                              std::span<const double> inconsistent_losses,
                                              std::span<const std::size_t> counts);

/// Trains one cluster of every participant with their own tau, then replays
/// with tau forced to the minimum, and compares the weighted objectives.
InconsistencyRecord measure_inconsistency(const ExperimentConfig& c);

}  // namespace fedrac
