#include "fedrac/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fedrac/csv.hpp"
#include "fedrac/error.hpp"
#include "fedrac/metrics.hpp"

namespace fedrac {

using nlohmann::ordered_json;

namespace {

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

}  // namespace

std::string report_to_json(const ExperimentReport& r) {
    ordered_json j;
    j["baseline"] = r.baseline;
    j["seed"] = r.seed;
    j["k_star"] = r.k_star;
    j["dunn_curve"] = ordered_json::array();
    for (const auto& [k, di] : r.dunn_curve) j["dunn_curve"].push_back({{"k", k}, {"di", optional_number(di)}});
    j["m"] = r.m;
    j["dropped_class"] = r.dropped_class ? ordered_json(*r.dropped_class) : ordered_json(nullptr);
    j["global_accuracy"] = r.global_accuracy;
    j["global_f1"] = r.global_f1;
    j["total_seconds"] = r.total_seconds;
    j["clusters"] = ordered_json::array();
    for (const auto& c : r.clusters) {
        ordered_json cj;
        cj["rank"] = c.rank;
        cj["widths"] = c.widths;
        cj["members"] = c.members;
        cj["epochs"] = c.epochs;
        cj["rounds"] = c.rounds;
        cj["delta"] = c.delta;
        cj["theta"] = c.theta;
        cj["time_share"] = c.time_share;
        cj["total_seconds"] = c.total_seconds;
        cj["mar_violation"] = c.mar_violation;
        cj["distilled"] = c.distilled;
        cj["accuracy"] = c.accuracy;
        cj["f1"] = c.f1;
        cj["accuracy_series"] = c.accuracy_series;
        j["clusters"].push_back(std::move(cj));
    }
    j["assignment"] = ordered_json::array();
    for (const auto& e : r.assignment) {
        ordered_json ej;
        ej["id"] = e.id;
        ej["cluster"] = e.rank;
        ej["n"] = e.n;
        ej["tau"] = e.tau;
        ej["reductions"] = e.reductions;
        ej["rejected"] = ordered_json::array();
        for (const auto& rej : e.rejected)
            ej["rejected"].push_back({{"cluster", rej.rank}, {"reason", to_string(rej.reason)}});
        j["assignment"].push_back(std::move(ej));
    }
    return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text, const std::string& source) {
    ExperimentReport r;
    try {
        const auto j = ordered_json::parse(text);
        r.baseline = j.at("baseline").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.k_star = j.at("k_star").get<int>();
        for (const auto& p : j.at("dunn_curve")) {
            const auto& di = p.at("di");
            r.dunn_curve.emplace_back(p.at("k").get<int>(),
                                      di.is_null() ? std::nullopt : std::optional<double>(di.get<double>()));
        }
        r.m = j.at("m").get<int>();
        if (!j.at("dropped_class").is_null()) r.dropped_class = j.at("dropped_class").get<int>();
        r.global_accuracy = j.at("global_accuracy").get<double>();
        r.global_f1 = j.at("global_f1").get<double>();
        r.total_seconds = j.at("total_seconds").get<double>();
        for (const auto& cj : j.at("clusters")) {
            ClusterSummary c;
            c.rank = cj.at("rank").get<int>();
            c.widths = cj.at("widths").get<std::vector<int>>();
            c.members = cj.at("members").get<std::vector<std::string>>();
            c.epochs = cj.at("epochs").get<int>();
            c.rounds = cj.at("rounds").get<int>();
            c.delta = cj.at("delta").get<double>();
            c.theta = cj.at("theta").get<double>();
            c.time_share = cj.at("time_share").get<double>();
            c.total_seconds = cj.at("total_seconds").get<double>();
            c.mar_violation = cj.at("mar_violation").get<bool>();
            c.distilled = cj.at("distilled").get<bool>();
            c.accuracy = cj.at("accuracy").get<double>();
            c.f1 = cj.at("f1").get<double>();
            c.accuracy_series = cj.at("accuracy_series").get<std::vector<double>>();
            for (double a : c.accuracy_series)
                if (!(a >= 0.0 && a <= 1.0)) throw DataError(source + ": accuracy outside [0, 1]");
            r.clusters.push_back(std::move(c));
        }
        for (const auto& ej : j.at("assignment")) {
            AssignmentEntry e;
            e.id = ej.at("id").get<std::string>();
            e.rank = ej.at("cluster").get<int>();
            e.n = ej.at("n").get<std::size_t>();
            e.tau = ej.at("tau").get<int>();
            e.reductions = ej.at("reductions").get<int>();
            r.assignment.push_back(std::move(e));
        }
    } catch (const ordered_json::exception& e) {
        throw DataError(source + ": malformed report (" + e.what() + ")");
    }
    return r;
}

ExperimentReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str(), path.string());
}

std::string rounds_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << "round,cluster,global_loss,round_seconds,cumulative_seconds,mar_violation,accuracy,f1\n";
    for (const auto& x : r.rounds)
        out << x.round << ',' << x.cluster << ',' << format_number(x.global_loss) << ','
            << format_number(x.round_seconds) << ',' << format_number(x.cumulative_seconds) << ','
            << (x.mar_violation ? 1 : 0) << ',' << format_number(x.accuracy) << ',' << format_number(x.f1) << '\n';
    return out.str();
}

std::string local_losses_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << "cluster,round,participant,loss\n";
    for (const auto& x : r.rounds) {
        const auto it = std::find_if(r.clusters.begin(), r.clusters.end(),
                                     [&](const ClusterSummary& c) { return c.rank == x.cluster; });
        for (std::size_t i = 0; i < x.local_losses.size(); ++i) {
            const std::string id =
                it != r.clusters.end() && i < it->members.size() ? it->members[i] : std::to_string(i);
            out << x.cluster << ',' << x.round << ',' << id << ',' << format_number(x.local_losses[i]) << '\n';
        }
    }
    return out.str();
}

std::string assignment_csv(std::span<const AssignmentEntry> log) {
    std::ostringstream out;
    out << "participant,cluster,n,tau,reductions\n";
    for (const auto& e : log) out << e.id << ',' << e.rank << ',' << e.n << ',' << e.tau << ',' << e.reductions << '\n';
    return out.str();
}

std::string clustering_text(const ClusterSelection& sel, const Partition& final_partition,
                            std::span<const Participant> population) {
    std::ostringstream out;
    out << "k,dunn_index\n";
    for (const auto& p : sel.curve) out << p.k << ',' << (p.di ? format_number(*p.di) : std::string("nan")) << '\n';
    out << "k_star," << sel.k << '\n';
    out << "participant,cluster\n";
    for (std::size_t i = 0; i < population.size(); ++i)
        out << population[i].id << ',' << final_partition.assignment[i] + 1 << '\n';
    return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

void write_report_files(const std::filesystem::path& dir, const ExperimentReport& r) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "report.json", report_to_json(r));
    write_text_file(dir / "rounds.csv", rounds_csv(r));
    write_text_file(dir / "local_losses.csv", local_losses_csv(r));
    write_text_file(dir / "assignment.csv", assignment_csv(r.assignment));
    for (const auto& [rank, w] : r.final_models)
        save_checkpoint(dir / ("cluster" + std::to_string(rank) + ".frwv"), w);
}

namespace {

std::string cell(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

std::string cell(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("-"); }

void print_table(std::ostream& out, const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> w(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        w[c] = head[c].size();
        for (const auto& r : rows) w[c] = std::max(w[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c)
            out << (c ? "  " : "") << std::setw(static_cast<int>(w[c])) << (c ? std::right : std::left) << r[c];
        out << '\n';
    };
    line(head);
    for (const auto& r : rows) line(r);
}

const ClusterSummary* cluster_of(const ExperimentReport& r, int rank) {
    for (const auto& c : r.clusters)
        if (c.rank == rank && !c.accuracy_series.empty()) return &c;
    return nullptr;
}

}  // namespace

std::string render_tables(std::span<const ExperimentReport> reports, std::span<const std::string> names,
                          std::span<const double> thresholds) {
    require(!reports.empty() && reports.size() == names.size(), "one name per report");
    int max_rank = 0;
    for (const auto& r : reports)
        for (const auto& c : r.clusters) max_rank = std::max(max_rank, c.rank);

    std::ostringstream out;
    std::vector<std::string> head{"metric"};
    for (const auto& n : names) head.push_back(n);

    std::vector<std::vector<std::string>> rows;
    for (const char* metric : {"accuracy", "f1"}) {
        for (int rank = 1; rank <= max_rank; ++rank) {
            std::vector<std::string> row{std::string(metric) + " C" + std::to_string(rank)};
            for (const auto& r : reports) {
                const auto* c = cluster_of(r, rank);
                row.push_back(c ? cell(metric[0] == 'a' ? c->accuracy : c->f1) : "-");
            }
            rows.push_back(std::move(row));
        }
        std::vector<std::string> row{std::string(metric) + " global"};
        for (const auto& r : reports) row.push_back(cell(metric[0] == 'a' ? r.global_accuracy : r.global_f1));
        rows.push_back(std::move(row));
    }
    print_table(out, head, rows);

    for (double x : thresholds) {
        out << "\nrounds to reach " << cell(x) << " accuracy\n";
        rows.clear();
        for (int rank = 1; rank <= max_rank; ++rank) {
            std::vector<std::string> row{"C" + std::to_string(rank)};
            for (const auto& r : reports) {
                const auto* c = cluster_of(r, rank);
                row.push_back(c ? cell(rounds_to_reach(c->accuracy_series, x)) : "-");
            }
            rows.push_back(std::move(row));
        }
        std::vector<std::string> trr{"TRR"};
        for (const auto& r : reports) {
            std::optional<int> master;
            std::vector<int> slaves;
            bool reached = true, first = true;
            for (const auto& c : r.clusters) {
                if (c.accuracy_series.empty()) continue;
                const auto v = rounds_to_reach(c.accuracy_series, x);
                if (!v) reached = false;
                if (first) master = v;
                else if (v) slaves.push_back(*v);
                first = false;
            }
            trr.push_back(reached && master ? std::to_string(total_required_rounds(*master, slaves)) : "-");
        }
        rows.push_back(std::move(trr));
        print_table(out, head, rows);
    }
    return out.str();
}

}  // namespace fedrac
