#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedrac {

double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Unweighted mean of per-class F1; a class with no predictions and no
/// instances (or zero precision and recall) contributes 0.
double macro_f1(std::span<const int> predictions, std::span<const int> labels, int classes);

/// 1-based index of the first value >= x, or nullopt if never reached.
std::optional<int> rounds_to_reach(std::span<const double> series, double x);

/// Master rounds plus the slowest slave's rounds.
int total_required_rounds(int master_rounds, std::span<const int> slave_rounds);

struct MetricSeries {
    std::string name;
    int cluster = 0;
    std::vector<double> values;
};

}  // namespace fedrac
