#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedrac/assignment.hpp"
#include "fedrac/convergence.hpp"
#include "fedrac/exec.hpp"
#include "fedrac/model.hpp"
#include "fedrac/resources.hpp"

namespace fedrac {

enum class Baseline { FedRac, FedAvg, FedProx };
enum class TrainingMode { Parallel, Sequential };

std::string to_string(Baseline b);
Baseline parse_baseline(const std::string& s);
std::string to_string(TrainingMode m);
TrainingMode parse_mode(const std::string& s);

struct DataConfig {
    std::string source = "synthetic";   // "synthetic" or a CSV path
    int classes = 6;
    int dim = 20;
    double separation = 4.0;
    std::size_t samples_per_participant = 300;
    double samples_spread = 0.0;        // n_i drawn from n * [1 - s, 1 + s]
    std::size_t test_size = 1200;
    bool leave_one_out = false;
    std::optional<int> leave_out_class;
};

struct TrainingConfig {
    double eta = 0.002;
    std::size_t batch = 200;
    std::vector<int> epochs{1};         // per cluster rank; the last entry repeats
    int rounds_cap = 200;
    std::optional<double> target_precision;
    double mu_prox = 0.001;

    int epochs_for(int rank) const;
};

struct ExperimentConfig {
    // Population: a CSV path, or one of the built-in fixtures "table1" / "table3".
    std::string population = "table3";
    ResourceWeights weights{0.4, 0.4, 0.2};
    std::uint64_t seed = 1;
    int kmeans_restarts = 16;
    int compaction = 0;                 // target cluster count m; 0 keeps k*

    ConvergenceParams convergence;
    double loss_optimum = 0.03;
    std::optional<double> loss_gap;     // defaults to ln(classes) - loss_optimum

    TimingModel timing;
    TrainingMode mode = TrainingMode::Parallel;

    std::vector<int> base_widths{128, 64};
    double alpha = 0.5;

    DataConfig data;
    TrainingConfig training;

    bool kd_enabled = true;
    KdOptions kd;

    Baseline baseline = Baseline::FedRac;
    AssignmentOptions assignment;
    double delta_slack = 0.10;
    double theta_slack = 0.25;

    Exec exec = Exec::Parallel;

    void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
std::string config_to_json(const ExperimentConfig& c);

std::vector<Participant> load_population(const ExperimentConfig& c);

// Built-in resource fixtures.
std::vector<Participant> table1_population();
std::vector<Participant> table3_population();

}  // namespace fedrac
