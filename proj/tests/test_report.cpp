#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedrac/error.hpp"
#include "fedrac/report.hpp"

using namespace fedrac;

namespace {

ClusterSummary cluster(int rank, std::vector<double> series, std::vector<std::string> members) {
    ClusterSummary c;
    c.rank = rank;
    c.widths = {128 >> (rank - 1), 64 >> (rank - 1)};
    c.members = std::move(members);
    c.epochs = 1;
    c.rounds = static_cast<int>(series.size());
    c.delta = 0.1 / rank;
    c.theta = 3.0 + rank;
    c.time_share = 800.0 * rank;
    c.total_seconds = 12.5 * rank;
    c.accuracy = series.empty() ? 0.0 : series.back();
    c.f1 = c.accuracy - 0.01;
    c.distilled = rank > 1;
    c.accuracy_series = std::move(series);
    return c;
}

ExperimentReport sample() {
    ExperimentReport r;
    r.baseline = "fedrac";
    r.seed = 42;
    r.k_star = 3;
    r.dunn_curve = {{2, 0.125}, {3, 0.3}, {4, std::nullopt}};
    r.m = 3;
    r.clusters = {cluster(1, {0.5, 0.97}, {"p1", "p2"}), cluster(2, {0.4, 0.7, 0.96}, {"p3"}),
                  cluster(3, {}, {})};
    r.global_accuracy = (0.97 + 0.96) / 2;
    r.global_f1 = 0.955;
    r.total_seconds = 37.5;
    r.dropped_class = 2;
    AssignmentEntry e{"p3", 2, 2, 150, 3, 1, {{1, RejectReason::Time}}};
    r.assignment = {{"p1", 0, 1, 300, 1, 0, {}}, {"p2", 1, 1, 300, 1, 0, {}}, e};
    RoundReport rr;
    rr.round = 1;
    rr.cluster = 1;
    rr.local_losses = {0.7, 0.5};
    rr.global_loss = 0.6;
    rr.round_seconds = 6.25;
    rr.cumulative_seconds = 6.25;
    rr.accuracy = 0.5;
    rr.f1 = 0.49;
    r.rounds = {rr};
    WeightVector w = WeightVector::zeros({{2, 2}});
    w.values = {1, 2, 3, 4, 5, 6};
    r.final_models = {{1, w}, {2, w}};
    return r;
}

// Last whitespace-separated cell of the first line (at or after `from`) that starts with `label`.
std::string cell_after(const std::string& text, const std::string& label, std::size_t from = 0) {
    std::istringstream in(text.substr(from));
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(label, 0) != 0 || (line.size() > label.size() && line[label.size()] != ' ')) continue;
        std::istringstream cells(line.substr(label.size()));
        std::string c, last;
        while (cells >> c) last = c;
        return last;
    }
    return "<missing>";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("report json round trip") {
    const auto r = sample();
    const auto text = report_to_json(r);
    const auto back = report_from_json(text);
    CHECK(back.seed == 42);
    CHECK(back.k_star == 3);
    CHECK(back.dunn_curve == r.dunn_curve);
    CHECK(back.dropped_class == 2);
    CHECK(back.global_accuracy == r.global_accuracy);
    REQUIRE(back.clusters.size() == 3);
    CHECK(back.clusters[1].accuracy_series == r.clusters[1].accuracy_series);
    CHECK(back.clusters[1].members == r.clusters[1].members);
    CHECK(back.assignment.size() == 3);
    CHECK(back.assignment[2].n == 150);
    CHECK(report_to_json(back).size() > 0);
}

TEST_CASE("malformed reports are data errors") {
    CHECK_THROWS_AS(report_from_json("not json"), DataError);
    CHECK_THROWS_AS(report_from_json("{}"), DataError);
    auto text = report_to_json(sample());
    const auto pos = text.find("\"k_star\": 3");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "\"k_star\": \"x\"");
    CHECK_THROWS_AS(report_from_json(text), DataError);
    auto bad = sample();
    bad.clusters[0].accuracy_series = {1.5};
    CHECK_THROWS_AS(report_from_json(report_to_json(bad)), DataError);
    CHECK_THROWS_AS(load_report("/nonexistent/report.json"), DataError);
    CHECK_THROWS_AS(load_report(std::filesystem::path(FEDRAC_FIXTURES) / "malformed_report.json"), DataError);
}

TEST_CASE("csv emitters") {
    const auto r = sample();
    CHECK(rounds_csv(r) ==
          "round,cluster,global_loss,round_seconds,cumulative_seconds,mar_violation,accuracy,f1\n"
          "1,1,0.6,6.25,6.25,0,0.5,0.49\n");
    CHECK(local_losses_csv(r) == "cluster,round,participant,loss\n1,1,p1,0.7\n1,1,p2,0.5\n");
    CHECK(assignment_csv(r.assignment) ==
          "participant,cluster,n,tau,reductions\np1,1,300,1,0\np2,1,300,1,0\np3,2,150,3,1\n");
}

TEST_CASE("rendered tables") {
    const std::vector<ExperimentReport> reps{sample()};
    const std::vector<std::string> names{"run"};
    const std::vector<double> thresholds{0.96, 0.98};
    const auto text = render_tables(reps, names, thresholds);
    CHECK(cell_after(text, "accuracy C1") == "0.9700");
    CHECK(cell_after(text, "accuracy C2") == "0.9600");
    CHECK(cell_after(text, "accuracy C3") == "-");
    CHECK(cell_after(text, "accuracy global") == "0.9650");
    CHECK(cell_after(text, "f1 global") == "0.9550");
    // 0.96: master reaches it in round 2, the slave in round 3, so TRR = 5.
    const auto at96 = text.find("rounds to reach 0.9600");
    const auto at98 = text.find("rounds to reach 0.9800");
    REQUIRE(at96 != std::string::npos);
    REQUIRE(at98 != std::string::npos);
    CHECK(cell_after(text, "C1", at96) == "2");
    CHECK(cell_after(text, "C2", at96) == "3");
    CHECK(cell_after(text, "TRR", at96) == "5");
    CHECK(cell_after(text, "TRR", at98) == "-");

    const std::vector<ExperimentReport> two{sample(), sample()};
    const std::vector<std::string> both{"a", "b"};
    CHECK(render_tables(two, both, thresholds).find("metric") != std::string::npos);
    CHECK_THROWS_AS(render_tables(two, names, thresholds), InvalidArgument);
}

TEST_CASE("report files are written deterministically") {
    const auto dir = std::filesystem::temp_directory_path() / "fedrac_test_report";
    std::filesystem::remove_all(dir);
    write_report_files(dir / "a", sample());
    write_report_files(dir / "b", sample());
    for (const char* f : {"report.json", "rounds.csv", "local_losses.csv", "assignment.csv", "cluster1.frwv",
                          "cluster2.frwv"}) {
        CHECK(std::filesystem::exists(dir / "a" / f));
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    CHECK(load_checkpoint(dir / "a" / "cluster2.frwv") == sample().final_models[1].second);
    CHECK(load_report(dir / "a" / "report.json").seed == 42);
}
