#include "fedrac/metrics.hpp"

#include <algorithm>

#include "fedrac/error.hpp"

namespace fedrac {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    require(predictions.size() == labels.size(), "accuracy: prediction and label counts differ");
    if (labels.empty()) throw InvalidArgument("accuracy is undefined on an empty set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double macro_f1(std::span<const int> predictions, std::span<const int> labels, int classes) {
    require(predictions.size() == labels.size(), "macro F1: prediction and label counts differ");
    require(classes >= 1, "macro F1 needs at least one class");
    std::vector<double> tp(classes, 0.0), fp(classes, 0.0), fn(classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        require(y >= 0 && y < classes, "macro F1: label out of range");
        if (p == y) {
            tp[y] += 1.0;
        } else {
            fn[y] += 1.0;
            if (p >= 0 && p < classes) fp[p] += 1.0;
        }
    }
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
        const double denom = 2.0 * tp[c] + fp[c] + fn[c];
        sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    }
    return sum / classes;
}

std::optional<int> rounds_to_reach(std::span<const double> series, double x) {
    require(!series.empty(), "rounds-to-reach needs a non-empty series");
    for (std::size_t i = 0; i < series.size(); ++i)
        if (series[i] >= x) return static_cast<int>(i + 1);
    return std::nullopt;
}

int total_required_rounds(int master_rounds, std::span<const int> slave_rounds) {
    require(master_rounds >= 1, "master rounds must be >= 1");
    int slowest = 0;
    for (int r : slave_rounds) slowest = std::max(slowest, r);
    return master_rounds + slowest;
}

}  // namespace fedrac
