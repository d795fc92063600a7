// fedrac: cluster, assign, simulate and report from the command line.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedrac/clustering.hpp"
#include "fedrac/config.hpp"
#include "fedrac/engine.hpp"
#include "fedrac/error.hpp"
#include "fedrac/report.hpp"

namespace fs = std::filesystem;
using namespace fedrac;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> m;
    std::optional<std::string> mode;
    std::optional<std::string> baseline;
    std::optional<bool> kd;
    std::string out_dir;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON configuration file (defaults apply when omitted)");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--m", o.m, "Compaction target cluster count (0 keeps k*)");
    cmd->add_option("--mode", o.mode, "parallel | sequential");
    cmd->add_option("--baseline", o.baseline, "fedrac | fedavg | fedprox");
    cmd->add_flag_function("--kd,!--no-kd", [&o](std::int64_t n) { o.kd = n > 0; }, "Enable or disable distillation");
    cmd->add_option("--out-dir", o.out_dir, "Directory for output files");
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.m) c.compaction = *o.m;
    if (o.mode) c.mode = parse_mode(*o.mode);
    if (o.baseline) c.baseline = parse_baseline(*o.baseline);
    if (o.kd) c.kd_enabled = *o.kd;
    c.validate();
    return c;
}

void emit(const Overrides& o, const std::string& name, const std::string& text) {
    std::cout << text;
    if (!o.out_dir.empty()) {
        fs::create_directories(o.out_dir);
        write_text_file(fs::path(o.out_dir) / name, text);
    }
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Invalid: return 1;
        case ErrorKind::Infeasible: return 2;
        case ErrorKind::Data: return 3;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Resource-aware clustered federated learning simulator"};
    app.require_subcommand(1);

    Overrides o;
    auto* cluster = app.add_subcommand("cluster", "Normalize resources, pick k*, optionally compact");
    auto* assign = app.add_subcommand("assign", "Cluster, then assign participants and print the log");
    auto* simulate = app.add_subcommand("simulate", "Run the full pipeline and write report files");
    for (auto* cmd : {cluster, assign, simulate}) add_common(cmd, o);

    auto* report = app.add_subcommand("report", "Render tables from one or more report files");
    std::vector<std::string> paths;
    std::vector<double> thresholds{0.8, 0.9};
    report->add_option("paths", paths, "report.json files or directories containing one")->required();
    report->add_option("--threshold", thresholds, "Accuracy thresholds for rounds-to-reach");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*cluster) {
            const auto c = resolve(o);
            const auto s = prepare_experiment(c);
            emit(o, "clustering.csv", clustering_text(s.selection, s.compacted, s.population));
        } else if (*assign) {
            const auto c = resolve(o);
            const auto s = prepare_experiment(c);
            emit(o, "assignment.csv", assignment_csv(s.assignment.log));
        } else if (*simulate) {
            const auto c = resolve(o);
            const auto r = run_fedrac(c);
            const fs::path dir = o.out_dir.empty() ? fs::path("fedrac-out") : fs::path(o.out_dir);
            write_report_files(dir, r);
            std::cout << "k*=" << r.k_star << " m=" << r.m << " global_accuracy=" << r.global_accuracy
                      << " global_f1=" << r.global_f1 << " total_seconds=" << r.total_seconds << '\n'
                      << "wrote " << dir.string() << '\n';
        } else if (*report) {
            std::vector<ExperimentReport> reports;
            std::vector<std::string> names;
            for (const auto& p : paths) {
                fs::path f = p;
                if (fs::is_directory(f)) f /= "report.json";
                reports.push_back(load_report(f));
                names.push_back(p);
            }
            std::cout << render_tables(reports, names, thresholds);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
