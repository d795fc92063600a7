#include "fedrac/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedrac/error.hpp"

namespace fedrac {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw InvalidArgument("config: unknown key '" + where + "." + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

std::string to_string(Baseline b) {
    switch (b) {
        case Baseline::FedRac: return "fedrac";
        case Baseline::FedAvg: return "fedavg";
        case Baseline::FedProx: return "fedprox";
    }
    return "?";
}

Baseline parse_baseline(const std::string& s) {
    if (s == "fedrac") return Baseline::FedRac;
    if (s == "fedavg") return Baseline::FedAvg;
    if (s == "fedprox") return Baseline::FedProx;
    throw InvalidArgument("unknown baseline '" + s + "' (expected fedrac, fedavg or fedprox)");
}

std::string to_string(TrainingMode m) { return m == TrainingMode::Parallel ? "parallel" : "sequential"; }

TrainingMode parse_mode(const std::string& s) {
    if (s == "parallel") return TrainingMode::Parallel;
    if (s == "sequential") return TrainingMode::Sequential;
    throw InvalidArgument("unknown mode '" + s + "' (expected parallel or sequential)");
}

int TrainingConfig::epochs_for(int rank) const {
    const auto i = static_cast<std::size_t>(rank - 1);
    return i < epochs.size() ? epochs[i] : epochs.back();
}

void ExperimentConfig::validate() const {
    weights.validate();
    require(kmeans_restarts >= 1, "kmeans_restarts must be >= 1");
    require(compaction >= 0, "compaction must be >= 0");
    ConvergenceParams c = convergence;
    c.epsilons = {1.0};
    c.eta = training.eta;
    c.validate();
    require(loss_optimum >= 0.0, "loss_optimum must be nonnegative");
    timing.validate();
    require(!base_widths.empty(), "model needs at least one hidden layer");
    for (int w : base_widths) require(w >= 1, "hidden widths must be positive");
    require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
    require(data.classes >= 2 && data.dim >= 1, "data needs >= 2 classes and dim >= 1");
    require(data.samples_per_participant >= 1, "samples_per_participant must be >= 1");
    require(data.samples_spread >= 0.0 && data.samples_spread < 1.0, "samples_spread must be in [0, 1)");
    require(data.test_size >= 1, "test_size must be >= 1");
    require(training.eta > 0.0, "learning rate must be positive");
    require(training.batch >= 1, "batch size must be >= 1");
    require(!training.epochs.empty(), "epochs list must be non-empty");
    for (int e : training.epochs) require(e >= 1, "epochs must be >= 1");
    require(training.rounds_cap >= 1, "rounds_cap must be >= 1");
    if (training.target_precision) require(*training.target_precision > 0.0, "target_precision must be positive");
    require(training.mu_prox >= 0.0, "mu_prox must be nonnegative");
    require(kd.temperature > 0.0 && kd.mix >= 0.0 && kd.mix <= 1.0, "invalid distillation settings");
    require(assignment.reduction_step > 0.0 && assignment.reduction_step < 1.0, "reduction_step must be in (0, 1)");
    require(assignment.max_reductions >= 0, "max_reductions must be >= 0");
}

ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    check_keys(j, "config", {"population", "weights", "seed", "kmeans_restarts", "compaction", "convergence",
                             "timing", "mode", "model", "data", "training", "kd", "baseline", "assignment",
                             "threads"});
    ExperimentConfig c;
    read(j, "population", c.population);
    if (c.population != "table1" && c.population != "table3" && !base_dir.empty() &&
        std::filesystem::path(c.population).is_relative())
        c.population = (base_dir / c.population).string();
    if (j.contains("weights")) {
        const auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != 3) throw InvalidArgument("config: weights must have 3 entries");
        c.weights = {w[0], w[1], w[2]};
    }
    read(j, "seed", c.seed);
    read(j, "kmeans_restarts", c.kmeans_restarts);
    read(j, "compaction", c.compaction);
    if (j.contains("convergence")) {
        const auto& k = j.at("convergence");
        check_keys(k, "convergence", {"L", "mu", "sigma", "G", "h1", "h2", "w_gap_sq", "loss_optimum", "loss_gap"});
        read(k, "L", c.convergence.L);
        read(k, "mu", c.convergence.mu);
        read(k, "sigma", c.convergence.sigma);
        read(k, "G", c.convergence.G);
        read(k, "h1", c.convergence.h1);
        read(k, "h2", c.convergence.h2);
        read(k, "w_gap_sq", c.convergence.w_gap_sq);
        read(k, "loss_optimum", c.loss_optimum);
        if (k.contains("loss_gap")) c.loss_gap = k.at("loss_gap").get<double>();
    }
    if (j.contains("timing")) {
        const auto& t = j.at("timing");
        check_keys(t, "timing", {"mar_seconds", "kappa", "model_scale", "flops_per_cycle", "train_flops_factor",
                                 "memory_overhead"});
        read(t, "mar_seconds", c.timing.mar_seconds);
        read(t, "kappa", c.timing.kappa);
        read(t, "model_scale", c.timing.model_scale);
        read(t, "flops_per_cycle", c.timing.flops_per_cycle);
        read(t, "train_flops_factor", c.timing.train_flops_factor);
        read(t, "memory_overhead", c.timing.memory_overhead);
    }
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model", {"base_widths", "alpha"});
        read(m, "base_widths", c.base_widths);
        read(m, "alpha", c.alpha);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, "data", {"source", "classes", "dim", "separation", "samples_per_participant",
                               "samples_spread", "test_size", "leave_one_out", "leave_out_class"});
        read(d, "source", c.data.source);
        if (c.data.source != "synthetic" && !base_dir.empty() && std::filesystem::path(c.data.source).is_relative())
            c.data.source = (base_dir / c.data.source).string();
        read(d, "classes", c.data.classes);
        read(d, "dim", c.data.dim);
        read(d, "separation", c.data.separation);
        read(d, "samples_per_participant", c.data.samples_per_participant);
        read(d, "samples_spread", c.data.samples_spread);
        read(d, "test_size", c.data.test_size);
        read(d, "leave_one_out", c.data.leave_one_out);
        if (d.contains("leave_out_class")) c.data.leave_out_class = d.at("leave_out_class").get<int>();
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        check_keys(t, "training", {"eta", "batch", "epochs", "rounds_cap", "target_precision", "mu_prox"});
        read(t, "eta", c.training.eta);
        read(t, "batch", c.training.batch);
        if (t.contains("epochs")) {
            if (t.at("epochs").is_array())
                c.training.epochs = t.at("epochs").get<std::vector<int>>();
            else
                c.training.epochs = {t.at("epochs").get<int>()};
        }
        read(t, "rounds_cap", c.training.rounds_cap);
        if (t.contains("target_precision")) c.training.target_precision = t.at("target_precision").get<double>();
        read(t, "mu_prox", c.training.mu_prox);
    }
    if (j.contains("kd")) {
        const auto& k = j.at("kd");
        check_keys(k, "kd", {"enabled", "temperature", "mix"});
        read(k, "enabled", c.kd_enabled);
        read(k, "temperature", c.kd.temperature);
        read(k, "mix", c.kd.mix);
    }
    if (j.contains("baseline")) c.baseline = parse_baseline(j.at("baseline").get<std::string>());
    if (j.contains("assignment")) {
        const auto& a = j.at("assignment");
        check_keys(a, "assignment", {"reduction_step", "max_reductions", "delta_slack", "theta_slack"});
        read(a, "reduction_step", c.assignment.reduction_step);
        read(a, "max_reductions", c.assignment.max_reductions);
        read(a, "delta_slack", c.delta_slack);
        read(a, "theta_slack", c.theta_slack);
    }
    if (j.contains("threads")) {
        const auto t = j.at("threads").get<std::string>();
        if (t == "serial")
            c.exec = Exec::Serial;
        else if (t == "parallel")
            c.exec = Exec::Parallel;
        else
            throw InvalidArgument("config: threads must be 'serial' or 'parallel'");
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return config_from_json(ss.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["population"] = c.population;
    j["weights"] = {c.weights.speed, c.weights.rate, c.weights.memory};
    j["seed"] = c.seed;
    j["kmeans_restarts"] = c.kmeans_restarts;
    j["compaction"] = c.compaction;
    json conv = {{"L", c.convergence.L},           {"mu", c.convergence.mu},
                 {"sigma", c.convergence.sigma},   {"G", c.convergence.G},
                 {"h1", c.convergence.h1},         {"h2", c.convergence.h2},
                 {"w_gap_sq", c.convergence.w_gap_sq}, {"loss_optimum", c.loss_optimum}};
    if (c.loss_gap) conv["loss_gap"] = *c.loss_gap;
    j["convergence"] = conv;
    j["timing"] = {{"mar_seconds", c.timing.mar_seconds},
                   {"kappa", c.timing.kappa},
                   {"model_scale", c.timing.model_scale},
                   {"flops_per_cycle", c.timing.flops_per_cycle},
                   {"train_flops_factor", c.timing.train_flops_factor},
                   {"memory_overhead", c.timing.memory_overhead}};
    j["mode"] = to_string(c.mode);
    j["model"] = {{"base_widths", c.base_widths}, {"alpha", c.alpha}};
    json data = {{"source", c.data.source},
                 {"classes", c.data.classes},
                 {"dim", c.data.dim},
                 {"separation", c.data.separation},
                 {"samples_per_participant", c.data.samples_per_participant},
                 {"samples_spread", c.data.samples_spread},
                 {"test_size", c.data.test_size},
                 {"leave_one_out", c.data.leave_one_out}};
    if (c.data.leave_out_class) data["leave_out_class"] = *c.data.leave_out_class;
    j["data"] = data;
    json train = {{"eta", c.training.eta},
                  {"batch", c.training.batch},
                  {"epochs", c.training.epochs},
                  {"rounds_cap", c.training.rounds_cap},
                  {"mu_prox", c.training.mu_prox}};
    if (c.training.target_precision) train["target_precision"] = *c.training.target_precision;
    j["training"] = train;
    j["kd"] = {{"enabled", c.kd_enabled}, {"temperature", c.kd.temperature}, {"mix", c.kd.mix}};
    j["baseline"] = to_string(c.baseline);
    j["assignment"] = {{"reduction_step", c.assignment.reduction_step},
                       {"max_reductions", c.assignment.max_reductions},
                       {"delta_slack", c.delta_slack},
                       {"theta_slack", c.theta_slack}};
    j["threads"] = c.exec == Exec::Serial ? "serial" : "parallel";
    return j.dump(2);
}

std::vector<Participant> table1_population() {
    const double rows[10][3] = {{100, 10, 20}, {50, 15, 30}, {75, 8, 25},  {125, 10, 15}, {150, 7, 10},
                                {110, 10, 25}, {125, 15, 20}, {80, 10, 10}, {75, 15, 20},  {50, 10, 30}};
    std::vector<Participant> out;
    for (int i = 0; i < 10; ++i) out.push_back({"p" + std::to_string(i + 1), {rows[i][0], rows[i][1], rows[i][2]}});
    return out;
}

std::vector<Participant> table3_population() {
    const double rows[40][3] = {
        {1.6, 10.88, 8}, {2.8, 4.1, 3},   {1.1, 1.13, 6},  {1.6, 11.45, 3}, {3.2, 8.9, 3},   {2.2, 2, 4},
        {3.1, 8.7, 1},   {1.8, 60, 3},    {2.7, 8.89, 3},  {1.4, 34.5, 8},  {1.6, 12.54, 6}, {0.8, 1.2, 6},
        {1.3, 28.41, 6}, {1.3, 21.9, 3},  {3.1, 25.99, 6}, {3.2, 19.43, 4}, {1.0, 20.98, 3}, {1.6, 30, 3},
        {1.0, 12, 2},    {2.7, 10, 6},    {1.6, 40, 1},    {1.1, 11.4, 6},  {2.5, 25, 6},    {2.2, 30, 4},
        {1.6, 9.62, 6},  {2.2, 23.27, 6}, {1.5, 49.79, 6}, {1.7, 37.65, 6}, {3.1, 15.71, 6}, {2.6, 3, 6},
        {3.1, 18.04, 6}, {2.5, 44.13, 6}, {2.3, 6.5, 6},   {2.1, 60.21, 6}, {2.1, 61.3, 8},  {3.2, 19, 6},
        {2.7, 32.05, 6}, {2.9, 6.52, 6},  {0.8, 38.8, 6},  {2.1, 32, 6}};
    std::vector<Participant> out;
    for (int i = 0; i < 40; ++i) out.push_back({"p" + std::to_string(i + 1), {rows[i][0], rows[i][1], rows[i][2]}});
    return out;
}

std::vector<Participant> load_population(const ExperimentConfig& c) {
    if (c.population == "table1") return table1_population();
    if (c.population == "table3") return table3_population();
    return load_resource_csv(c.population);
}

}  // namespace fedrac
