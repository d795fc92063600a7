#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fedrac/config.hpp"
#include "fedrac/engine.hpp"
#include "fedrac/error.hpp"
#include "fedrac/rng.hpp"

using namespace fedrac;

namespace {

struct Fixture {
    std::vector<Dataset> shards;
    std::vector<ClusterMember> members;
    Dataset test;
    WeightVector init;
};

Fixture make_fixture(std::size_t n_members, std::uint64_t seed, std::size_t n = 48) {
    Fixture f;
    const Dataset pool = synth_blobs(3, 4, n_members * n + 90, 1.5, seed);
    std::vector<std::size_t> counts(n_members, n);
    counts.push_back(90);
    auto parts = partition_iid(pool, counts, seed);
    f.test = parts.back();
    parts.pop_back();
    f.shards = std::move(parts);
    for (std::size_t i = 0; i < n_members; ++i) {
        ParticipantProfile p;
        p.id = "p" + std::to_string(i);
        p.resources = {1.0 + 0.3 * static_cast<double>(i), 5.0 + static_cast<double>(i), 1.0};
        p.n = n;
        p.batch = 16;
        p.recompute_tau();
        f.members.push_back({p.id, &f.shards[i], p, i});
    }
    f.init = build_model(ModelSpec{4, {8}, 3, 0.5}, 1, seed);
    return f;
}

ClusterRunOptions base_options(const Dataset* eval) {
    ClusterRunOptions o;
    o.rounds = 4;
    o.eta = 0.1;
    o.batch = 16;
    o.eval = eval;
    o.seed = 11;
    return o;
}

ExperimentConfig smoke() { return load_config(std::filesystem::path(FEDRAC_CONFIGS) / "smoke.json"); }

}  // namespace

TEST_CASE("aggregation arithmetic") {
    WeightVector a = WeightVector::zeros({{1, 1}});
    a.values = {0.0, 0.0};
    WeightVector b = a;
    b.values = {4.0, -2.0};
    const std::vector<WeightVector> ab{a, b};
    const auto mean = fedavg_aggregate(ab, std::vector<std::size_t>{1, 3});
    CHECK(mean.values[0] == 3.0);
    CHECK(mean.values[1] == -1.5);

    Rng rng(4);
    WeightVector w = WeightVector::zeros({{3, 2}, {2, 2}});
    for (auto& v : w.values) v = rng.normal();
    const std::vector<WeightVector> same{w, w, w};
    CHECK(fedavg_aggregate(same, std::vector<std::size_t>{5, 5, 5}) == w);
    CHECK(fedavg_aggregate(same, std::vector<std::size_t>{1, 7, 2}) == w);
    CHECK(fedavg_aggregate(std::vector<WeightVector>{w}, std::vector<std::size_t>{9}) == w);

    const std::vector<WeightVector> bad{w, a};
    CHECK_THROWS_AS(fedavg_aggregate(bad, std::vector<std::size_t>{1, 1}), InvalidArgument);
    CHECK_THROWS_AS(fedavg_aggregate(same, std::vector<std::size_t>{1, 0, 1}), InvalidArgument);
    CHECK_THROWS_AS(fedavg_aggregate(std::vector<WeightVector>{}, std::vector<std::size_t>{}), InvalidArgument);
}

TEST_CASE("weighted mean against the direct sum") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const std::size_t k = 1 + rng.below(8);
        std::vector<double> v(k);
        std::vector<std::size_t> n(k);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            v[i] = rng.uniform(-3, 3);
            n[i] = 1 + rng.below(500);
            num += v[i] * static_cast<double>(n[i]);
            den += static_cast<double>(n[i]);
        }
        CHECK(weighted_mean(v, n) == doctest::Approx(num / den).epsilon(1e-12));
    }
}

TEST_CASE("local training step count and errors") {
    const auto f = make_fixture(1, 3, 32);
    LocalTrainOptions o;
    o.batch = 32;
    o.epochs = 1;
    CHECK(local_train(f.shards[0], f.init, o, 1).steps == 1);
    o.batch = 8;
    o.epochs = 3;
    CHECK(local_train(f.shards[0], f.init, o, 1).steps == 12);
    o.steps = 5;
    CHECK(local_train(f.shards[0], f.init, o, 1).steps == 5);
    CHECK_THROWS_AS(local_train(f.shards[0].head(0), f.init, o, 1), DataError);
}

TEST_CASE("local training is plain gradient descent when the batch is the shard") {
    // Independent oracle: full-batch descent steps on the mean cross-entropy.
    const auto f = make_fixture(1, 5, 40);
    LocalTrainOptions o;
    o.batch = 40;
    o.epochs = 6;
    o.eta = 0.2;
    const auto got = local_train(f.shards[0], f.init, o, 77);
    WeightVector ref = f.init;
    for (int s = 0; s < 6; ++s)
        sgd_step_inplace(ref, ce_loss_and_grad(ref, f.shards[0].features, f.shards[0].labels).grad, 0.2);
    REQUIRE(got.steps == 6);
    for (std::size_t j = 0; j < ref.size(); ++j) CHECK(got.weights.values[j] == doctest::Approx(ref.values[j]).epsilon(1e-10));
}

TEST_CASE("self-teacher distillation reduces to scaled cross-entropy for one step") {
    const auto f = make_fixture(1, 6, 40);
    LocalTrainOptions kd;
    kd.batch = 16;
    kd.eta = 0.3;
    kd.steps = 1;
    const TeacherOracle self(f.init);
    kd.teacher = [&self](const Matrix& x) { return self(x); };
    LocalTrainOptions ce = kd;
    ce.teacher = nullptr;
    ce.eta = kd.eta * (1.0 - kd.kd.mix);
    const auto a = local_train(f.shards[0], f.init, kd, 9);
    const auto b = local_train(f.shards[0], f.init, ce, 9);
    for (std::size_t j = 0; j < a.weights.size(); ++j)
        CHECK(a.weights.values[j] == doctest::Approx(b.weights.values[j]).epsilon(1e-12));
}

TEST_CASE("class-balanced draws differ by at most one per class") {
    // Skewed shard: 5 / 20 / 35 instances of classes 0 / 1 / 2.
    Dataset ds = synth_blobs(3, 2, 60, 1.0, 1);
    for (std::size_t i = 0; i < 60; ++i) ds.labels[i] = i < 5 ? 0 : (i < 25 ? 1 : 2);
    const WeightVector init = build_model(ModelSpec{2, {4}, 3, 0.5}, 1, 1);
    for (std::size_t b : {7u, 16u, 30u}) {
        LocalTrainOptions o;
        o.batch = b;
        o.epochs = 2;
        o.class_balanced = true;
        const auto r = local_train(ds, init, o, 13);
        const auto [lo, hi] = std::minmax_element(r.class_draws.begin(), r.class_draws.end());
        CHECK(*hi - *lo <= 1);
    }
}

TEST_CASE("teacher oracle") {
    const WeightVector w = build_model(ModelSpec{4, {8}, 3, 0.5}, 1, 3);
    const TeacherOracle oracle(w);
    const Dataset ds = synth_blobs(3, 4, 12, 1.0, 2);
    CHECK(oracle(ds.features) == oracle(ds.features));
    CHECK(oracle(ds.features) == forward(w, ds.features));
    const TeacherOracle zero(WeightVector::zeros(w.layers));
    for (double v : zero(ds.features).data) CHECK(v == 0.0);
    CHECK_THROWS_AS(oracle(Matrix(2, 5)), InvalidArgument);
}

TEST_CASE("cluster rounds: identities and timing") {
    auto f = make_fixture(4, 8);
    TimingModel timing;
    auto opt = base_options(&f.test);
    opt.timing = &timing;
    opt.time_share = 1e-9;

    SUBCASE("one member, one round is that member's local model") {
        auto o = opt;
        o.rounds = 1;
        const auto run = run_cluster_fl(2, std::span(f.members).first(1), f.init, o);
        LocalTrainOptions lo;
        lo.batch = 16;
        lo.eta = 0.1;
        const auto local = local_train(f.shards[0], f.init, lo, stream_seed(11, 2, 1, 0));
        CHECK(run.weights == local.weights);
    }
    SUBCASE("identical members reproduce a single member") {
        std::vector<ClusterMember> twins(3, f.members[1]);
        const auto solo = run_cluster_fl(1, std::span(twins).first(1), f.init, opt);
        const auto many = run_cluster_fl(1, twins, f.init, opt);
        for (std::size_t j = 0; j < solo.weights.size(); ++j)
            CHECK(many.weights.values[j] == doctest::Approx(solo.weights.values[j]).epsilon(1e-14));
    }
    SUBCASE("zero proximal weight is plain FedAvg") {
        auto prox = opt;
        prox.mode = ClusterMode::FedProx;
        prox.mu_prox = 0.0;
        CHECK(run_cluster_fl(1, f.members, f.init, prox).weights == run_cluster_fl(1, f.members, f.init, opt).weights);
        prox.mu_prox = 0.5;
        CHECK_FALSE(run_cluster_fl(1, f.members, f.init, prox).weights ==
                    run_cluster_fl(1, f.members, f.init, opt).weights);
    }
    SUBCASE("round time is the slowest member; cumulative time adds up") {
        const auto run = run_cluster_fl(1, f.members, f.init, opt);
        REQUIRE(run.rounds.size() == 4);
        double slowest = 0.0;
        for (const auto& m : f.members) slowest = std::max(slowest, timing.round_seconds(m.profile, f.init.layers));
        double sum = 0.0, prev = 0.0;
        for (const auto& r : run.rounds) {
            CHECK(r.round_seconds == slowest);
            sum += r.round_seconds;
            CHECK(r.cumulative_seconds == sum);
            CHECK(r.cumulative_seconds > prev);
            prev = r.cumulative_seconds;
            CHECK(r.mar_violation);
            CHECK(r.local_losses.size() == 4);
            CHECK(r.accuracy >= 0.0);
            CHECK(r.accuracy <= 1.0);
        }
        CHECK(run.weights.finite());
        CHECK(run.weights.same_shape(f.init));
    }
    SUBCASE("no-data member") {
        Dataset empty = f.shards[0].head(0);
        auto bad = f.members;
        bad[2].data = &empty;
        CHECK_THROWS_AS(run_cluster_fl(1, bad, f.init, opt), DataError);
    }
}

TEST_CASE("serial and OpenMP cluster runs are bit-identical") {
    omp_set_num_threads(4);
    auto f = make_fixture(6, 21);
    auto opt = base_options(&f.test);
    opt.exec = Exec::Serial;
    const auto serial = run_cluster_fl(1, f.members, f.init, opt);
    opt.exec = Exec::Parallel;
    const auto parallel = run_cluster_fl(1, f.members, f.init, opt);
    CHECK(serial.weights == parallel.weights);
    for (std::size_t t = 0; t < serial.rounds.size(); ++t) CHECK(serial.rounds[t].local_losses == parallel.rounds[t].local_losses);
}

TEST_CASE("single-cluster run matches a reference FedAvg loop") {
    auto c = smoke();
    c.compaction = 1;
    c.kd_enabled = false;
    const auto s = prepare_experiment(c);
    const auto rep = run_experiment(c, s);
    REQUIRE(s.assignment.clusters.size() == 1);
    const auto& plan = s.assignment.clusters[0];

    // Reference: broadcast, local_train every participant, instance-weighted mean.
    WeightVector w = build_model(s.spec, 1, c.seed);
    for (int t = 1; t <= plan.rounds; ++t) {
        std::vector<WeightVector> local;
        std::vector<std::size_t> counts;
        for (auto idx : plan.members) {
            LocalTrainOptions lo;
            lo.batch = c.training.batch;
            lo.eta = c.training.eta;
            lo.epochs = plan.epochs;
            const Dataset shard = s.shards[idx].head(s.assignment.profiles[idx].n);
            local.push_back(local_train(shard, w, lo, stream_seed(c.seed, 1, static_cast<std::uint64_t>(t), idx)).weights);
            counts.push_back(shard.size());
        }
        w = fedavg_aggregate(local, counts);
    }
    REQUIRE(rep.final_models.size() == 1);
    CHECK(rep.final_models[0].second == w);

    // m = 1 is the FedAvg baseline with the same model.
    auto base = c;
    base.baseline = Baseline::FedAvg;
    const auto fedavg = run_fedrac(base);
    CHECK(fedavg.final_models[0].second == w);
    CHECK(fedavg.global_accuracy == rep.global_accuracy);
}

TEST_CASE("full pipeline: global metrics are cluster means, parallel equals serial") {
    omp_set_num_threads(3);
    auto c = smoke();
    const auto rep = run_fedrac(c);
    double acc = 0.0, f1 = 0.0;
    int active = 0;
    for (const auto& cs : rep.clusters) {
        if (cs.members.empty()) continue;
        acc += cs.accuracy;
        f1 += cs.f1;
        ++active;
        CHECK(cs.distilled == (active > 1));
    }
    REQUIRE(active >= 2);
    CHECK(rep.global_accuracy == doctest::Approx(acc / active).epsilon(1e-15));
    CHECK(rep.global_f1 == doctest::Approx(f1 / active).epsilon(1e-15));

    c.exec = Exec::Serial;
    const auto serial = run_fedrac(c);
    REQUIRE(serial.final_models.size() == rep.final_models.size());
    for (std::size_t i = 0; i < rep.final_models.size(); ++i) CHECK(serial.final_models[i] == rep.final_models[i]);
    CHECK(serial.global_accuracy == rep.global_accuracy);

    c.exec = Exec::Parallel;
    c.mode = TrainingMode::Sequential;
    const auto seq = run_fedrac(c);
    double master = -1.0, slaves = 0.0;
    for (const auto& cs : seq.clusters) {
        if (cs.members.empty()) continue;
        if (master < 0) master = cs.total_seconds;
        else slaves += cs.total_seconds;
    }
    CHECK(seq.total_seconds == doctest::Approx(master + slaves).epsilon(1e-14));
}

TEST_CASE("objective inconsistency") {
    std::vector<double> actual{0.027}, inconsistent{0.036};
    const auto ex = inconsistency_from_losses(actual, inconsistent, std::vector<std::size_t>{1});
    CHECK(ex.err == doctest::Approx(0.009).epsilon(1e-12));
    CHECK(ex.err >= 0.0);

    auto c = smoke();
    c.population = "table1";
    c.training.rounds_cap = 6;
    const auto homo = measure_inconsistency(c);
    CHECK(homo.err <= 1e-9);

    c.data.samples_spread = 0.6;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        c.seed = seed;
        const auto r = measure_inconsistency(c);
        CHECK(r.err >= 0.0);
        CHECK(r.err > 0.0);
        CHECK(r.err <= r.bound);
    }
}
