#include "fedrac/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrac/error.hpp"

namespace fedrac {

void ConvergenceParams::validate() const {
    require(L > 0.0 && mu > 0.0, "L and mu must be positive");
    require(mu <= L, "mu must not exceed L");
    require(sigma >= 0.0 && G >= 0.0, "sigma and G must be nonnegative");
    require(h1 >= 1.0 && h2 >= 0.0, "need h1 >= 1 and h2 >= 0");
    require(!epsilons.empty(), "participant weights must be non-empty");
    double sum = 0.0;
    for (double e : epsilons) {
        require(e >= 0.0, "participant weights must be nonnegative");
        sum += e;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "participant weights must sum to 1");
    require(w_gap_sq >= 0.0, "w_gap_sq must be nonnegative");
    require(eta > 0.0, "learning rate must be positive");
    require(loss_gap >= 0.0, "loss gap must be nonnegative");
}

double ConvergenceParams::default_loss_gap(int classes, double optimum) {
    return std::log(static_cast<double>(classes)) - optimum;
}

double AccumulationVector::l1() const {
    return std::accumulate(entries.begin(), entries.end(), 0.0, [](double a, double x) { return a + std::abs(x); });
}

double AccumulationVector::l2_sq() const {
    return std::accumulate(entries.begin(), entries.end(), 0.0, [](double a, double x) { return a + x * x; });
}

double beta(const ConvergenceParams& p, int epochs) {
    return std::max(8.0 * p.L / p.mu, static_cast<double>(epochs));
}

double b_term(const ConvergenceParams& p, int epochs) {
    double eps_sq = 0.0;
    for (double e : p.epsilons) eps_sq += e * e;
    const double e1 = static_cast<double>(epochs - 1);
    return eps_sq * p.sigma * p.sigma + 8.0 * e1 * e1 * p.G * p.G;
}

double precision_bound(const ConvergenceParams& p, int epochs, long total_steps) {
    require(epochs >= 1, "epochs must be >= 1");
    require(total_steps >= 1, "total steps must be >= 1");
    const double b = beta(p, epochs);
    const double lead = p.L / (2.0 * p.mu * p.mu);
    return lead / (b + static_cast<double>(total_steps) - 1.0) *
           (4.0 * b_term(p, epochs) + p.mu * p.mu * b * p.w_gap_sq);
}

int rounds_for_cluster(const ConvergenceParams& p, int epochs, double q_o) {
    if (!(q_o > 0.0)) throw InvalidArgument("precision target must be positive");
    require(epochs >= 1, "epochs must be >= 1");
    const double b = beta(p, epochs);
    const double lead = p.L / (2.0 * p.mu * p.mu * q_o);
    const double r = (lead * (4.0 * b_term(p, epochs) + p.mu * p.mu * b * p.w_gap_sq) + 1.0 - b) /
                     static_cast<double>(epochs);
    // Absorb round-off so that inverting precision_bound lands on the same R.
    const double rounded = std::ceil(r - 1e-9 * std::max(1.0, std::abs(r)));
    if (!(rounded >= 1.0)) return 1;
    if (rounded > 1e9) throw InvalidArgument("precision target needs more than 1e9 rounds");
    return static_cast<int>(rounded);
}

double error_bound(const ConvergenceParams& p, std::span<const AccumulationVector> patterns, int rounds) {
    require(rounds >= 1, "rounds must be >= 1");
    require(patterns.size() == p.epsilons.size(), "one accumulation pattern per participant weight");
    const double f = static_cast<double>(patterns.size());
    double tau_sum = 0.0;
    for (const auto& o : patterns) {
        if (o.entries.empty() || !(o.l1() > 0.0)) throw InvalidArgument("accumulation vector has zero l1 norm");
        tau_sum += static_cast<double>(o.entries.size());
    }
    const double tau_e = tau_sum / f;

    double b2 = 0.0, b3 = 0.0, b4 = 0.0;
    for (std::size_t j = 0; j < patterns.size(); ++j) {
        const auto& o = patterns[j];
        const double e = p.epsilons[j];
        const double l1 = o.l1();
        const double l2 = o.l2_sq();
        b2 += e * e * l2 / (l1 * l1);
        b3 += e * (l2 - o.last() * o.last());
        b4 = std::max(b4, l1 * (l1 - o.last()));
    }
    b2 *= f * tau_e;

    const double eta = p.eta;
    const double s2 = p.sigma * p.sigma;
    return 4.0 * p.loss_gap / (eta * tau_e * static_cast<double>(rounds)) + 4.0 * eta * p.L * s2 * b2 / f +
           6.0 * eta * eta * p.L * p.L * s2 * b3 + 12.0 * eta * eta * p.L * p.L * p.h2 * p.h2 * b4;
}

double mar_parallel(double kappa, int m, double slowest_budget) {
    require(kappa > 0.0 && kappa < 1.0, "kappa must be in (0, 1)");
    require(m >= 1, "cluster count must be >= 1");
    return (std::pow(kappa, m - 1) + 1.0) * slowest_budget;
}

double mar_sequential(double kappa, int m, double slowest_budget) {
    require(kappa > 0.0 && kappa < 1.0, "kappa must be in (0, 1)");
    require(m >= 1, "cluster count must be >= 1");
    return slowest_budget * (1.0 - std::pow(kappa, m)) / (1.0 - kappa);
}

double cluster_time_share(double total_budget, double kappa, int m, int rank, bool sequential) {
    require(rank >= 1 && rank <= m, "cluster rank out of range");
    if (m == 1) return total_budget;
    const double slowest = total_budget / (sequential ? mar_sequential(kappa, m, 1.0) : mar_parallel(kappa, m, 1.0));
    return std::pow(kappa, m - rank) * slowest;
}

}  // namespace fedrac
