#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedrac/matrix.hpp"

namespace fedrac {

// Dense classifier: input -> hidden widths (ReLU) -> class logits.
// Each rank below the master shrinks every hidden width by `alpha`;
// the output layer keeps `classes` units.
struct ModelSpec {
    int input_dim = 0;
    std::vector<int> hidden_widths;
    int classes = 0;
    double alpha = 0.5;

    void validate() const;
    std::vector<int> widths_for_rank(int rank) const;
};

struct LayerShape {
    int in = 0;
    int out = 0;

    std::size_t param_count() const { return static_cast<std::size_t>(in) * out + out; }
    bool operator==(const LayerShape&) const = default;
};

struct DenseLayer {
    Matrix weight;              // out x in
    std::vector<double> bias;   // out
};

// Flat parameter vector with its per-layer manifest. Layer l stores its
// out x in weight block row-major, then its bias.
struct WeightVector {
    std::vector<LayerShape> layers;
    std::vector<double> values;

    static WeightVector zeros(std::vector<LayerShape> layers);
    static WeightVector flatten(std::span<const DenseLayer> layers);
    std::vector<DenseLayer> unflatten() const;

    std::size_t size() const noexcept { return values.size(); }
    int input_dim() const { return layers.front().in; }
    int output_dim() const { return layers.back().out; }
    bool same_shape(const WeightVector& o) const { return layers == o.layers; }
    bool finite() const;

    bool operator==(const WeightVector&) const = default;
};

std::vector<LayerShape> layer_shapes(const ModelSpec& spec, int rank);

// Floating-point operations for one forward pass of one sample (2 per multiply-add).
double forward_flops(std::span<const LayerShape> layers);

std::size_t parameter_bytes(std::span<const LayerShape> layers);

/// Widths scaled by alpha^(rank-1); weights uniform in +-sqrt(6 / fan_in),
/// biases zero.
WeightVector build_model(const ModelSpec& spec, int rank, std::uint64_t seed);

/// Logits for a batch (rows of `x`). Throws InvalidArgument on a feature
/// count that does not match the first layer.
Matrix forward(const WeightVector& w, const Matrix& x);

struct LossGrad {
    double loss = 0.0;
    WeightVector grad;
};

/// Mean softmax cross-entropy over the batch, with its gradient.
LossGrad ce_loss_and_grad(const WeightVector& w, const Matrix& x, std::span<const int> labels);

struct KdOptions {
    double temperature = 2.0;
    double mix = 0.5;   // weight of the distillation term
};

/// (1 - mix) * CE(student, labels) + mix * T^2 * KL(soft(teacher) || soft(student)).
LossGrad kd_loss_and_grad(const WeightVector& w, const Matrix& x, std::span<const int> labels,
                          const Matrix& teacher_logits, const KdOptions& kd);

/// Adds (mu / 2) * ||w - anchor||^2 to the loss and mu * (w - anchor) to the gradient.
void add_proximal(LossGrad& lg, const WeightVector& w, const WeightVector& anchor, double mu);

WeightVector sgd_step(const WeightVector& w, const WeightVector& grad, double eta);
void sgd_step_inplace(WeightVector& w, const WeightVector& grad, double eta);

std::vector<int> predict(const WeightVector& w, const Matrix& x);

// Little-endian: "FRWV", u32 version, u32 layer count, (u32 in, u32 out) per
// layer, u64 value count, then the raw float64 values.
void save_checkpoint(const std::filesystem::path& path, const WeightVector& w);
WeightVector load_checkpoint(const std::filesystem::path& path);

}  // namespace fedrac
