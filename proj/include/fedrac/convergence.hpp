#pragma once

#include <span>
#include <vector>

namespace fedrac {

// Constants of the smoothness / strong-convexity / bounded-variance /
// bounded-gradient / gradient-dissimilarity assumptions for one cluster.
// The non-i.i.d. gap Gamma is fixed at zero.
struct ConvergenceParams {
    double L = 1.5;                   // smoothness
    double mu = 0.7;                  // strong convexity
    double sigma = 1.0;               // stochastic-gradient variance bound
    double G = 0.1;                   // gradient-norm bound
    double h1 = 1.0;                  // dissimilarity constants
    double h2 = 0.0;
    std::vector<double> epsilons{1.0};  // participant weights, sum to 1
    double w_gap_sq = 0.0064;         // E||w_1 - w*||^2
    double eta = 0.002;               // learning rate
    double loss_gap = 0.0;            // initial objective minus optimum

    void validate() const;

    // Initial-loss gap of a uniform classifier over `classes` classes: ln(c) - optimum.
    static double default_loss_gap(int classes, double optimum = 0.03);
};

// Local gradient-accumulation pattern of one participant; all-ones for FedAvg.
struct AccumulationVector {
    std::vector<double> entries;

    static AccumulationVector fedavg(int tau) { return {std::vector<double>(static_cast<std::size_t>(tau), 1.0)}; }
    double l1() const;
    double l2_sq() const;
    double last() const { return entries.back(); }
};

double beta(const ConvergenceParams& p, int epochs);

double b_term(const ConvergenceParams& p, int epochs);

/// Upper bound on E[L(w^R)] - L* after `total_steps` = R * E local steps.
double precision_bound(const ConvergenceParams& p, int epochs, long total_steps);

/// Rounds needed to reach precision `q_o`; rounded up, at least 1.
int rounds_for_cluster(const ConvergenceParams& p, int epochs, double q_o);

/// Optimization error bound for heterogeneous local step counts.
/// `patterns` holds one accumulation vector per participant, aligned with p.epsilons.
double error_bound(const ConvergenceParams& p, std::span<const AccumulationVector> patterns, int rounds);

/// Response-time budget when every slave trains in parallel after the master.
double mar_parallel(double kappa, int m, double slowest_budget);

/// Response-time budget when each cluster distils the next one in sequence.
double mar_sequential(double kappa, int m, double slowest_budget);

/// Share of the response-time budget given to cluster `rank` (1 = master):
/// kappa^(m - rank) * T_m, with T_m solved from the total.
double cluster_time_share(double total_budget, double kappa, int m, int rank, bool sequential);

}  // namespace fedrac
