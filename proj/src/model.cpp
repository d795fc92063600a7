#include "fedrac/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "fedrac/error.hpp"
#include "fedrac/rng.hpp"

namespace fedrac {

namespace {

struct Activations {
    std::vector<Matrix> pre;    // z_l per layer
    std::vector<Matrix> post;   // a_l per layer; post[0] = input
};

// Offsets of each layer's weight block inside the flat vector.
std::vector<std::size_t> offsets(std::span<const LayerShape> layers) {
    std::vector<std::size_t> out;
    std::size_t off = 0;
    for (const auto& l : layers) {
        out.push_back(off);
        off += l.param_count();
    }
    return out;
}

Activations run_forward(const WeightVector& w, const Matrix& x) {
    if (w.layers.empty()) throw InvalidArgument("model has no layers");
    if (static_cast<int>(x.cols) != w.input_dim())
        throw InvalidArgument("input has " + std::to_string(x.cols) + " features, model expects " +
                              std::to_string(w.input_dim()));
    const auto off = offsets(w.layers);
    Activations act;
    act.post.push_back(x);
    const std::size_t n = x.rows;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto [in, out] = w.layers[l];
        const double* wt = w.values.data() + off[l];
        const double* b = wt + static_cast<std::size_t>(in) * out;
        const Matrix& a = act.post.back();
        Matrix z(n, out);
        for (std::size_t r = 0; r < n; ++r) {
            const double* ar = &a.data[r * in];
            for (int o = 0; o < out; ++o) {
                const double* wr = wt + static_cast<std::size_t>(o) * in;
                double s = b[o];
                for (int i = 0; i < in; ++i) s += wr[i] * ar[i];
                z(r, o) = s;
            }
        }
        Matrix h = z;
        if (l + 1 < w.layers.size())
            for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
        act.pre.push_back(std::move(z));
        act.post.push_back(std::move(h));
    }
    return act;
}

// Backpropagates d(loss)/d(logits) through the network.
WeightVector run_backward(const WeightVector& w, const Activations& act, Matrix dz) {
    const auto off = offsets(w.layers);
    WeightVector g = WeightVector::zeros(w.layers);
    const std::size_t n = dz.rows;
    for (std::size_t l = w.layers.size(); l-- > 0;) {
        const auto [in, out] = w.layers[l];
        const Matrix& a = act.post[l];
        double* gw = g.values.data() + off[l];
        double* gb = gw + static_cast<std::size_t>(in) * out;
        for (std::size_t r = 0; r < n; ++r) {
            const double* ar = &a.data[r * in];
            for (int o = 0; o < out; ++o) {
                const double d = dz(r, o);
                gb[o] += d;
                double* gr = gw + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) gr[i] += d * ar[i];
            }
        }
        if (l == 0) break;
        const double* wt = w.values.data() + off[l];
        const Matrix& zprev = act.pre[l - 1];
        Matrix next(n, in);
        for (std::size_t r = 0; r < n; ++r) {
            for (int o = 0; o < out; ++o) {
                const double d = dz(r, o);
                const double* wr = wt + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) next(r, i) += d * wr[i];
            }
            for (int i = 0; i < in; ++i)
                if (zprev(r, i) <= 0.0) next(r, i) = 0.0;
        }
        dz = std::move(next);
    }
    return g;
}

// Row-wise softmax of logits / t.
Matrix softmax(const Matrix& z, double t) {
    Matrix p(z.rows, z.cols);
    for (std::size_t r = 0; r < z.rows; ++r) {
        const auto zr = z.row(r);
        const double mx = *std::max_element(zr.begin(), zr.end()) / t;
        double s = 0.0;
        for (std::size_t c = 0; c < z.cols; ++c) s += (p(r, c) = std::exp(zr[c] / t - mx));
        for (std::size_t c = 0; c < z.cols; ++c) p(r, c) /= s;
    }
    return p;
}

double log_sum_exp(std::span<const double> v, double t) {
    const double mx = *std::max_element(v.begin(), v.end()) / t;
    double s = 0.0;
    for (double x : v) s += std::exp(x / t - mx);
    return mx + std::log(s);
}

void check_labels(std::span<const int> labels, const Matrix& logits) {
    if (labels.size() != logits.rows) throw InvalidArgument("label count does not match batch size");
    for (int y : labels)
        if (y < 0 || y >= static_cast<int>(logits.cols)) throw InvalidArgument("label out of range");
}

void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}
void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}
std::uint64_t get_le(std::istream& is, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) throw DataError("checkpoint truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

}  // namespace

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> index) {
    Matrix out(index.size(), m.cols);
    for (std::size_t r = 0; r < index.size(); ++r) std::copy_n(m.row(index[r]).begin(), m.cols, out.row(r).begin());
    return out;
}

void ModelSpec::validate() const {
    require(input_dim >= 1, "model input_dim must be >= 1");
    require(classes >= 2, "model needs at least 2 classes");
    for (int h : hidden_widths) require(h >= 1, "hidden widths must be positive");
    require(alpha > 0.0 && alpha <= 1.0, "compression factor must be in (0, 1]");
}

std::vector<int> ModelSpec::widths_for_rank(int rank) const {
    require(rank >= 1, "cluster rank must be >= 1");
    const double scale = std::pow(alpha, rank - 1);
    std::vector<int> out;
    for (int h : hidden_widths) out.push_back(std::max(1, static_cast<int>(std::lround(scale * h))));
    return out;
}

std::vector<LayerShape> layer_shapes(const ModelSpec& spec, int rank) {
    spec.validate();
    std::vector<LayerShape> out;
    int in = spec.input_dim;
    for (int h : spec.widths_for_rank(rank)) {
        out.push_back({in, h});
        in = h;
    }
    out.push_back({in, spec.classes});
    return out;
}

double forward_flops(std::span<const LayerShape> layers) {
    double f = 0.0;
    for (const auto& l : layers) f += 2.0 * l.in * l.out;
    return f;
}

std::size_t parameter_bytes(std::span<const LayerShape> layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n * sizeof(double);
}

WeightVector WeightVector::zeros(std::vector<LayerShape> layers) {
    WeightVector w;
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    w.layers = std::move(layers);
    w.values.assign(n, 0.0);
    return w;
}

WeightVector WeightVector::flatten(std::span<const DenseLayer> layers) {
    WeightVector w;
    for (const auto& l : layers) {
        require(l.weight.rows == l.bias.size(), "bias length must equal layer output width");
        w.layers.push_back({static_cast<int>(l.weight.cols), static_cast<int>(l.weight.rows)});
        w.values.insert(w.values.end(), l.weight.data.begin(), l.weight.data.end());
        w.values.insert(w.values.end(), l.bias.begin(), l.bias.end());
    }
    return w;
}

std::vector<DenseLayer> WeightVector::unflatten() const {
    std::vector<DenseLayer> out;
    auto it = values.begin();
    for (const auto& l : layers) {
        DenseLayer d{Matrix(l.out, l.in), std::vector<double>(l.out)};
        const auto nw = static_cast<std::ptrdiff_t>(l.in) * l.out;
        std::copy(it, it + nw, d.weight.data.begin());
        it += nw;
        std::copy(it, it + l.out, d.bias.begin());
        it += l.out;
        out.push_back(std::move(d));
    }
    return out;
}

bool WeightVector::finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

WeightVector build_model(const ModelSpec& spec, int rank, std::uint64_t seed) {
    WeightVector w = WeightVector::zeros(layer_shapes(spec, rank));
    Rng rng(stream_seed(seed, 0x6d6f64656cULL, static_cast<std::uint64_t>(rank)));
    std::size_t off = 0;
    for (const auto& l : w.layers) {
        const double bound = std::sqrt(6.0 / l.in);
        for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * l.out; ++i)
            w.values[off + i] = rng.uniform(-bound, bound);
        off += l.param_count();
    }
    return w;
}

Matrix forward(const WeightVector& w, const Matrix& x) {
    return std::move(run_forward(w, x).post.back());
}

LossGrad ce_loss_and_grad(const WeightVector& w, const Matrix& x, std::span<const int> labels) {
    const Activations act = run_forward(w, x);
    const Matrix& z = act.post.back();
    check_labels(labels, z);
    const double n = static_cast<double>(z.rows);
    Matrix dz = softmax(z, 1.0);
    double loss = 0.0;
    for (std::size_t r = 0; r < z.rows; ++r) {
        loss += log_sum_exp(z.row(r), 1.0) - z(r, labels[r]);
        dz(r, labels[r]) -= 1.0;
    }
    for (auto& v : dz.data) v /= n;
    return {loss / n, run_backward(w, act, std::move(dz))};
}

LossGrad kd_loss_and_grad(const WeightVector& w, const Matrix& x, std::span<const int> labels,
                          const Matrix& teacher_logits, const KdOptions& kd) {
    require(kd.temperature > 0.0, "distillation temperature must be positive");
    require(kd.mix >= 0.0 && kd.mix <= 1.0, "distillation mix must be in [0, 1]");
    const Activations act = run_forward(w, x);
    const Matrix& z = act.post.back();
    check_labels(labels, z);
    require(teacher_logits.rows == z.rows && teacher_logits.cols == z.cols,
            "teacher logits must align with the student batch");
    const double n = static_cast<double>(z.rows);
    const double t = kd.temperature;
    const double lam = kd.mix;

    const Matrix p = softmax(z, 1.0);
    const Matrix ps = softmax(z, t);
    const Matrix pt = softmax(teacher_logits, t);
    Matrix dz(z.rows, z.cols);
    double ce = 0.0, kl = 0.0;
    for (std::size_t r = 0; r < z.rows; ++r) {
        ce += log_sum_exp(z.row(r), 1.0) - z(r, labels[r]);
        const double lse_s = log_sum_exp(z.row(r), t);
        const double lse_t = log_sum_exp(teacher_logits.row(r), t);
        for (std::size_t c = 0; c < z.cols; ++c) {
            const double q = pt(r, c);
            if (q > 0.0) kl += q * ((teacher_logits(r, c) / t - lse_t) - (z(r, c) / t - lse_s));
            const double onehot = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
            dz(r, c) = ((1.0 - lam) * (p(r, c) - onehot) + lam * t * (ps(r, c) - q)) / n;
        }
    }
    const double loss = (1.0 - lam) * ce / n + lam * t * t * kl / n;
    return {loss, run_backward(w, act, std::move(dz))};
}

void add_proximal(LossGrad& lg, const WeightVector& w, const WeightVector& anchor, double mu) {
    require(w.same_shape(anchor) && w.same_shape(lg.grad), "proximal term: shape mismatch");
    if (mu == 0.0) return;
    double sq = 0.0;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
        const double d = w.values[i] - anchor.values[i];
        sq += d * d;
        lg.grad.values[i] += mu * d;
    }
    lg.loss += 0.5 * mu * sq;
}

WeightVector sgd_step(const WeightVector& w, const WeightVector& grad, double eta) {
    WeightVector out = w;
    sgd_step_inplace(out, grad, eta);
    return out;
}

void sgd_step_inplace(WeightVector& w, const WeightVector& grad, double eta) {
    if (!w.same_shape(grad)) throw InvalidArgument("sgd step: gradient shape does not match weights");
    for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] -= eta * grad.values[i];
}

std::vector<int> predict(const WeightVector& w, const Matrix& x) {
    const Matrix z = forward(w, x);
    std::vector<int> out(z.rows);
    for (std::size_t r = 0; r < z.rows; ++r) {
        const auto zr = z.row(r);
        out[r] = static_cast<int>(std::max_element(zr.begin(), zr.end()) - zr.begin());
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const WeightVector& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write("FRWV", 4);
    put_u32(os, 1);
    put_u32(os, static_cast<std::uint32_t>(w.layers.size()));
    for (const auto& l : w.layers) {
        put_u32(os, static_cast<std::uint32_t>(l.in));
        put_u32(os, static_cast<std::uint32_t>(l.out));
    }
    put_u64(os, w.values.size());
    for (double v : w.values) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

WeightVector load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "FRWV") throw DataError(path.string() + ": not a weight checkpoint");
    if (get_le(is, 4) != 1) throw DataError(path.string() + ": unsupported checkpoint version");
    const auto nl = get_le(is, 4);
    std::vector<LayerShape> layers;
    for (std::uint64_t i = 0; i < nl; ++i) {
        const int in = static_cast<int>(get_le(is, 4));
        const int out = static_cast<int>(get_le(is, 4));
        layers.push_back({in, out});
    }
    WeightVector w = WeightVector::zeros(std::move(layers));
    if (get_le(is, 8) != w.values.size()) throw DataError(path.string() + ": value count disagrees with manifest");
    for (auto& v : w.values) v = std::bit_cast<double>(get_le(is, 8));
    return w;
}

}  // namespace fedrac
