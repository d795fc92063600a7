#include "fedrac/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrac/error.hpp"
#include "fedrac/metrics.hpp"
#include "fedrac/rng.hpp"

namespace fedrac {

namespace {

// Draws minibatches either from a reshuffled permutation or, for class-balanced
// sampling, round-robin over the classes present in the shard.
class BatchSampler {
public:
    BatchSampler(const Dataset& ds, bool balanced, Rng& rng) : ds_(ds), balanced_(balanced), rng_(rng) {
        if (balanced_) {
            std::vector<std::vector<std::size_t>> by(ds.classes);
            for (std::size_t i = 0; i < ds.size(); ++i) by[ds.labels[i]].push_back(i);
            for (int c = 0; c < ds.classes; ++c) {
                if (by[c].empty()) continue;
                rng_.shuffle(by[c].begin(), by[c].end());
                classes_.push_back(c);
                pools_.push_back(std::move(by[c]));
            }
            cursors_.assign(pools_.size(), 0);
        } else {
            perm_.resize(ds.size());
            std::iota(perm_.begin(), perm_.end(), 0);
            rng_.shuffle(perm_.begin(), perm_.end());
        }
    }

    std::vector<std::size_t> next(std::size_t b) {
        std::vector<std::size_t> idx;
        idx.reserve(b);
        for (std::size_t s = 0; s < b; ++s) {
            if (balanced_) {
                const std::size_t k = turn_++ % pools_.size();
                auto& pool = pools_[k];
                if (cursors_[k] == pool.size()) {
                    rng_.shuffle(pool.begin(), pool.end());
                    cursors_[k] = 0;
                }
                idx.push_back(pool[cursors_[k]++]);
            } else {
                if (cursor_ == perm_.size()) {
                    rng_.shuffle(perm_.begin(), perm_.end());
                    cursor_ = 0;
                }
                idx.push_back(perm_[cursor_++]);
            }
        }
        return idx;
    }

private:
    const Dataset& ds_;
    bool balanced_;
    Rng& rng_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_ = 0;
    std::vector<int> classes_;
    std::vector<std::vector<std::size_t>> pools_;
    std::vector<std::size_t> cursors_;
    std::size_t turn_ = 0;
};

double mean_loss_on(const WeightVector& w, const Dataset& ds) {
    return ce_loss_and_grad(w, ds.features, ds.labels).loss;
}

ConvergenceParams planning_params(const ExperimentConfig& c, int classes) {
    ConvergenceParams p = c.convergence;
    p.eta = c.training.eta;
    p.loss_gap = c.loss_gap.value_or(ConvergenceParams::default_loss_gap(classes, c.loss_optimum));
    p.epsilons = {1.0};
    return p;
}

}  // namespace

LocalResult local_train(const Dataset& shard, const WeightVector& init, const LocalTrainOptions& opt,
                        std::uint64_t seed) {
    if (shard.size() == 0) throw DataError("local training on an empty shard");
    require(opt.batch >= 1, "batch size must be >= 1");
    const std::size_t b = std::min(opt.batch, shard.size());
    const int steps = opt.steps.value_or(local_steps(shard.size(), b, opt.epochs));
    require(steps >= 0, "step count must be nonnegative");

    Rng rng(seed);
    BatchSampler sampler(shard, opt.class_balanced, rng);
    LocalResult res;
    res.weights = init;
    res.class_draws.assign(shard.classes, 0);
    double loss_sum = 0.0;
    for (int s = 0; s < steps; ++s) {
        const auto idx = sampler.next(b);
        const Matrix x = gather_rows(shard.features, idx);
        std::vector<int> y;
        y.reserve(idx.size());
        for (auto i : idx) {
            y.push_back(shard.labels[i]);
            ++res.class_draws[shard.labels[i]];
        }
        LossGrad lg = opt.teacher ? kd_loss_and_grad(res.weights, x, y, opt.teacher(x), opt.kd)
                                  : ce_loss_and_grad(res.weights, x, y);
        if (opt.prox_anchor) add_proximal(lg, res.weights, *opt.prox_anchor, opt.mu_prox);
        loss_sum += lg.loss;
        sgd_step_inplace(res.weights, lg.grad, opt.eta);
    }
    res.steps = steps;
    res.loss = steps > 0 ? loss_sum / steps : mean_loss_on(res.weights, shard);
    return res;
}

WeightVector fedavg_aggregate(std::span<const WeightVector> wpms, std::span<const std::size_t> counts) {
    require(!wpms.empty(), "aggregation needs at least one weight vector");
    require(wpms.size() == counts.size(), "one instance count per weight vector");
    WeightVector mean = wpms[0];
    double seen = static_cast<double>(counts[0]);
    require(counts[0] > 0, "instance counts must be positive");
    for (std::size_t i = 1; i < wpms.size(); ++i) {
        if (!wpms[i].same_shape(mean)) throw InvalidArgument("aggregation: weight shapes differ");
        require(counts[i] > 0, "instance counts must be positive");
        seen += static_cast<double>(counts[i]);
        const double r = static_cast<double>(counts[i]) / seen;
        for (std::size_t j = 0; j < mean.values.size(); ++j)
            mean.values[j] += r * (wpms[i].values[j] - mean.values[j]);
    }
    return mean;
}

double weighted_mean(std::span<const double> values, std::span<const std::size_t> counts) {
    require(!values.empty() && values.size() == counts.size(), "weighted mean: size mismatch");
    double mean = values[0];
    double seen = static_cast<double>(counts[0]);
    for (std::size_t i = 1; i < values.size(); ++i) {
        seen += static_cast<double>(counts[i]);
        mean += static_cast<double>(counts[i]) / seen * (values[i] - mean);
    }
    return mean;
}

ClusterRun run_cluster_fl(int rank, std::span<const ClusterMember> members, WeightVector init,
                          const ClusterRunOptions& opt) {
    require(!members.empty(), "cluster has no members");
    require(opt.rounds >= 1, "rounds must be >= 1");

    std::vector<Dataset> data;
    std::vector<std::size_t> counts;
    for (const auto& m : members) {
        if (!m.data || m.data->size() == 0) throw DataError("participant " + m.id + " has no data");
        data.push_back(m.data->head(m.profile.n));
        counts.push_back(data.back().size());
    }

    ClusterRun run;
    run.rank = rank;
    run.weights = std::move(init);
    double cumulative = 0.0;
    const auto nm = static_cast<std::ptrdiff_t>(members.size());
    for (int t = 1; t <= opt.rounds; ++t) {
        const WeightVector global = run.weights;
        std::vector<LocalResult> results(members.size());
        auto train_one = [&](std::ptrdiff_t i) {
            LocalTrainOptions lo;
            lo.epochs = opt.epochs;
            lo.batch = opt.batch;
            lo.eta = opt.eta;
            lo.teacher = opt.teacher;
            lo.kd = opt.kd;
            if (opt.mode == ClusterMode::FedProx) {
                lo.prox_anchor = &global;
                lo.mu_prox = opt.mu_prox;
            }
            lo.class_balanced = opt.class_balanced;
            lo.steps = opt.forced_steps;
            const auto seed = stream_seed(opt.seed, static_cast<std::uint64_t>(rank), static_cast<std::uint64_t>(t),
                                          members[i].index);
            results[i] = local_train(data[i], global, lo, seed);
        };
        if (opt.exec == Exec::Serial) {
            for (std::ptrdiff_t i = 0; i < nm; ++i) train_one(i);
        } else {
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t i = 0; i < nm; ++i) train_one(i);
        }

        std::vector<WeightVector> wpms;
        RoundReport rep;
        rep.round = t;
        rep.cluster = rank;
        for (auto& r : results) {
            rep.local_losses.push_back(r.loss);
            wpms.push_back(std::move(r.weights));
        }
        run.weights = fedavg_aggregate(wpms, counts);
        rep.global_loss = weighted_mean(rep.local_losses, counts);
        if (opt.timing) {
            for (std::size_t i = 0; i < members.size(); ++i) {
                ParticipantProfile p = members[i].profile;
                p.epochs = opt.epochs;
                rep.round_seconds = std::max(rep.round_seconds, opt.timing->round_seconds(p, run.weights.layers));
            }
        }
        cumulative += rep.round_seconds;
        rep.cumulative_seconds = cumulative;
        rep.mar_violation = opt.timing && cumulative > opt.time_share;
        if (opt.eval) {
            const auto pred = predict(run.weights, opt.eval->features);
            rep.accuracy = accuracy(pred, opt.eval->labels);
            rep.f1 = macro_f1(pred, opt.eval->labels, opt.eval->classes);
        }
        run.rounds.push_back(std::move(rep));
    }
    return run;
}

std::vector<std::size_t> participant_sample_counts(const ExperimentConfig& c, std::size_t n) {
    std::vector<std::size_t> out(n, c.data.samples_per_participant);
    if (c.data.samples_spread <= 0.0) return out;
    Rng rng(stream_seed(c.seed, 0x636f756e74ULL));
    const double base = static_cast<double>(c.data.samples_per_participant);
    for (auto& v : out) {
        const double f = 1.0 + c.data.samples_spread * (2.0 * rng.uniform() - 1.0);
        v = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base * f)));
    }
    return out;
}

std::vector<ClusterPlan> build_cluster_plans(const ExperimentConfig& c, const ModelSpec& spec, int m,
                                             std::span<const std::size_t> expected_sizes) {
    require(m >= 1, "need at least one cluster");
    const ConvergenceParams base = planning_params(c, spec.classes);
    std::vector<ClusterPlan> plans;
    for (int rank = 1; rank <= m; ++rank) {
        ClusterPlan p;
        p.rank = rank;
        p.model = layer_shapes(spec, rank);
        p.epochs = c.training.epochs_for(rank);
        p.rounds = c.training.rounds_cap;
        if (c.training.target_precision) {
            ConvergenceParams q = base;
            const std::size_t f =
                std::max<std::size_t>(1, static_cast<std::size_t>(rank - 1) < expected_sizes.size()
                                             ? expected_sizes[rank - 1]
                                             : 1);
            q.epsilons.assign(f, 1.0 / static_cast<double>(f));
            p.rounds = std::min(c.training.rounds_cap, rounds_for_cluster(q, p.epochs, *c.training.target_precision));
        }
        const std::size_t n = c.data.samples_per_participant;
        const int tau = local_steps(n, std::min(c.training.batch, n), p.epochs);
        p.delta = default_delta(base, p.epochs, p.rounds, c.delta_slack);
        p.theta = default_theta(base, tau, p.rounds, c.theta_slack);
        p.time_share = cluster_time_share(c.timing.mar_seconds, c.timing.kappa, m, rank,
                                          c.mode == TrainingMode::Sequential);
        plans.push_back(std::move(p));
    }
    return plans;
}

ExperimentSetup prepare_experiment(const ExperimentConfig& c) {
    c.validate();
    ExperimentSetup s;
    s.population = load_population(c);
    s.normalized = normalize_resources(std::span<const Participant>(s.population));
    KMeansOptions km{c.kmeans_restarts, 300, c.exec};
    s.selection = optimal_clusters(s.normalized, c.weights, c.seed, km);
    s.ordered = order_by_resources(s.selection.partition, s.normalized, c.weights);

    s.m = c.compaction == 0 ? s.selection.k : c.compaction;
    if (s.m > s.selection.k)
        throw InvalidArgument("compaction target m=" + std::to_string(s.m) + " exceeds k*=" +
                              std::to_string(s.selection.k));
    if (s.m == s.selection.k)
        s.compacted = s.ordered;
    else if (s.m == 1)
        s.compacted = Partition{1, std::vector<int>(s.population.size(), 0)};
    else
        s.compacted = compact_clusters(s.ordered, s.m, s.normalized, c.weights);

    // Data.
    const std::size_t n_part = s.population.size();
    const auto counts = participant_sample_counts(c, n_part);
    const std::size_t need = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    Dataset pool;
    if (c.data.source == "synthetic") {
        const auto cls = static_cast<std::size_t>(c.data.classes);
        // Room for dropping a class while keeping the same instances for the others.
        const std::size_t pool_size = (need * cls + cls - 2) / (cls - 1) + cls;
        Dataset all = synth_blobs(c.data.classes, c.data.dim, pool_size + c.data.test_size, c.data.separation,
                                  stream_seed(c.seed, 0x64617461ULL));
        std::vector<std::size_t> head(pool_size), tail(c.data.test_size);
        std::iota(head.begin(), head.end(), 0);
        std::iota(tail.begin(), tail.end(), pool_size);
        pool = all.subset(head);
        s.test = all.subset(tail);
    } else {
        Dataset all = load_dataset_csv(c.data.source);
        if (all.size() <= c.data.test_size) throw DataError("dataset is smaller than the requested test split");
        std::vector<std::size_t> idx(all.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(stream_seed(c.seed, 0x73706c6974ULL));
        rng.shuffle(idx.begin(), idx.end());
        const std::size_t split = all.size() - c.data.test_size;
        pool = all.subset(std::span<const std::size_t>(idx).first(split));
        s.test = all.subset(std::span<const std::size_t>(idx).subspan(split));
    }
    if (c.data.leave_one_out) {
        auto loo = leave_one_out(pool, c.data.leave_out_class);
        s.dropped_class = loo.dropped;
        pool = std::move(loo.train);
    }
    s.shards = partition_iid(pool, counts, stream_seed(c.seed, 0x7368617264ULL));
    s.spec = ModelSpec{static_cast<int>(pool.dim()), c.base_widths, std::max(pool.classes, s.test.classes), c.alpha};

    // Plans and assignment.
    std::vector<ParticipantProfile> profiles;
    for (std::size_t i = 0; i < n_part; ++i) {
        ParticipantProfile p;
        p.id = s.population[i].id;
        p.resources = s.population[i].resources;
        p.n = counts[i];
        p.batch = std::min(c.training.batch, counts[i]);
        p.epochs = c.training.epochs_for(1);
        p.recompute_tau();
        profiles.push_back(std::move(p));
    }
    const bool single = c.baseline != Baseline::FedRac || s.m == 1;
    if (single) {
        // One cluster of everyone on the smallest model, nominal workloads.
        ClusterPlan plan = build_cluster_plans(c, s.spec, 1, std::vector<std::size_t>{n_part}).front();
        plan.model = layer_shapes(s.spec, s.m);
        plan.time_share = c.timing.mar_seconds;
        plan.members.resize(n_part);
        std::iota(plan.members.begin(), plan.members.end(), 0);
        s.assignment.clusters = {plan};
        s.assignment.profiles = profiles;
        for (std::size_t i = 0; i < n_part; ++i)
            s.assignment.log.push_back({profiles[i].id, i, 1, profiles[i].n, profiles[i].tau, 0, {}});
    } else {
        std::vector<std::size_t> sizes(s.m, 0);
        for (int a : s.compacted.assignment) ++sizes[a];
        auto plans = build_cluster_plans(c, s.spec, s.m, sizes);
        ConvergenceParams params = planning_params(c, s.spec.classes);
        s.assignment = assign_participants(profiles, std::move(plans), params, c.timing, c.weights, c.assignment);
    }
    return s;
}

ExperimentReport run_experiment(const ExperimentConfig& c, const ExperimentSetup& s) {
    ExperimentReport rep;
    rep.baseline = to_string(c.baseline);
    rep.seed = c.seed;
    rep.k_star = s.selection.k;
    for (const auto& pt : s.selection.curve) rep.dunn_curve.emplace_back(pt.k, pt.di);
    rep.m = s.m;
    rep.assignment = s.assignment.log;
    rep.dropped_class = s.dropped_class;

    const auto& plans = s.assignment.clusters;
    auto members_of = [&](const ClusterPlan& plan) {
        std::vector<ClusterMember> out;
        for (auto idx : plan.members)
            out.push_back({s.population[idx].id, &s.shards[idx], s.assignment.profiles[idx], idx});
        return out;
    };
    auto options_for = [&](const ClusterPlan& plan) {
        ClusterRunOptions o;
        o.rounds = plan.rounds;
        o.mode = c.baseline == Baseline::FedProx ? ClusterMode::FedProx : ClusterMode::Plain;
        o.mu_prox = c.training.mu_prox;
        o.eta = c.training.eta;
        o.batch = c.training.batch;
        o.epochs = plan.epochs;
        o.kd = c.kd;
        o.eval = &s.test;
        o.timing = &c.timing;
        o.time_share = plan.time_share;
        o.seed = c.seed;
        return o;
    };
    // A lone cluster carries the smallest model (rank m).
    auto init_for = [&](const ClusterPlan& plan) {
        return build_model(s.spec, plans.size() == 1 ? s.m : plan.rank, c.seed);
    };

    // Ranks with members, in order; the first one is the master.
    std::vector<std::size_t> active;
    for (std::size_t f = 0; f < plans.size(); ++f)
        if (!plans[f].members.empty()) active.push_back(f);
    require(!active.empty(), "no cluster received any participant");

    std::vector<ClusterRun> runs(plans.size());
    std::vector<bool> distilled(plans.size(), false);
    const bool has_slaves = active.size() > 1;
    {
        const ClusterPlan& master = plans[active[0]];
        auto opt = options_for(master);
        opt.exec = c.exec;
        opt.class_balanced = has_slaves && c.kd_enabled;
        const auto members = members_of(master);
        runs[active[0]] = run_cluster_fl(master.rank, members, init_for(master), opt);
    }
    if (has_slaves) {
        const auto ns = static_cast<std::ptrdiff_t>(active.size()) - 1;
        if (c.mode == TrainingMode::Parallel) {
            const TeacherOracle oracle(runs[active[0]].weights);
            auto train_slave = [&](std::ptrdiff_t i) {
                const ClusterPlan& plan = plans[active[i + 1]];
                auto opt = options_for(plan);
                opt.exec = Exec::Serial;
                if (c.kd_enabled) opt.teacher = [&oracle](const Matrix& x) { return oracle(x); };
                const auto members = members_of(plan);
                runs[active[i + 1]] = run_cluster_fl(plan.rank, members, init_for(plan), opt);
            };
            if (c.exec == Exec::Serial) {
                for (std::ptrdiff_t i = 0; i < ns; ++i) train_slave(i);
            } else {
#pragma omp parallel for schedule(dynamic)
                for (std::ptrdiff_t i = 0; i < ns; ++i) train_slave(i);
            }
        } else {
            // Each cluster distils the one below it.
            for (std::ptrdiff_t i = 0; i < ns; ++i) {
                const ClusterPlan& plan = plans[active[i + 1]];
                const TeacherOracle oracle(runs[active[i]].weights);
                auto opt = options_for(plan);
                opt.exec = c.exec;
                if (c.kd_enabled) opt.teacher = [&oracle](const Matrix& x) { return oracle(x); };
                const auto members = members_of(plan);
                runs[active[i + 1]] = run_cluster_fl(plan.rank, members, init_for(plan), opt);
            }
        }
        if (c.kd_enabled)
            for (std::size_t i = 1; i < active.size(); ++i) distilled[active[i]] = true;
    }

    double master_time = 0.0, slave_time = 0.0;
    double acc_sum = 0.0, f1_sum = 0.0;
    for (std::size_t f = 0; f < plans.size(); ++f) {
        const ClusterPlan& plan = plans[f];
        ClusterSummary cs;
        cs.rank = plan.rank;
        for (std::size_t l = 0; l + 1 < plan.model.size(); ++l) cs.widths.push_back(plan.model[l].out);
        for (auto idx : plan.members) cs.members.push_back(s.population[idx].id);
        cs.epochs = plan.epochs;
        cs.rounds = plan.rounds;
        cs.delta = plan.delta;
        cs.theta = plan.theta;
        cs.time_share = plan.time_share;
        cs.distilled = distilled[f];
        if (!plan.members.empty()) {
            const auto& r = runs[f].rounds;
            cs.total_seconds = r.back().cumulative_seconds;
            cs.mar_violation = r.back().mar_violation;
            cs.accuracy = r.back().accuracy;
            cs.f1 = r.back().f1;
            for (const auto& rr : r) cs.accuracy_series.push_back(rr.accuracy);
            rep.rounds.insert(rep.rounds.end(), r.begin(), r.end());
            rep.final_models.emplace_back(plan.rank, runs[f].weights);
            acc_sum += cs.accuracy;
            f1_sum += cs.f1;
            if (f == active[0])
                master_time = cs.total_seconds;
            else if (c.mode == TrainingMode::Parallel)
                slave_time = std::max(slave_time, cs.total_seconds);
            else
                slave_time += cs.total_seconds;
        }
        rep.clusters.push_back(std::move(cs));
    }
    rep.global_accuracy = acc_sum / static_cast<double>(active.size());
    rep.global_f1 = f1_sum / static_cast<double>(active.size());
    rep.total_seconds = master_time + slave_time;
    return rep;
}

ExperimentReport run_fedrac(const ExperimentConfig& c) { return run_experiment(c, prepare_experiment(c)); }

InconsistencyRecord inconsistency_from_losses(std::span<const double> actual_losses,
                                              std::span<const double> inconsistent_losses,
                                              std::span<const std::size_t> counts) {
    InconsistencyRecord r;
    r.actual = weighted_mean(actual_losses, counts);
    r.inconsistent = weighted_mean(inconsistent_losses, counts);
    r.err = std::abs(r.inconsistent - r.actual);
    return r;
}

InconsistencyRecord measure_inconsistency(const ExperimentConfig& c) {
    c.validate();
    const auto population = load_population(c);
    const std::size_t n = population.size();
    const auto counts = participant_sample_counts(c, n);
    const std::size_t need = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    Dataset pool = synth_blobs(c.data.classes, c.data.dim, need, c.data.separation, stream_seed(c.seed, 0x64617461ULL));
    const auto shards = partition_iid(pool, counts, stream_seed(c.seed, 0x7368617264ULL));
    const ModelSpec spec{c.data.dim, c.base_widths, c.data.classes, c.alpha};

    std::vector<ClusterMember> members;
    for (std::size_t i = 0; i < n; ++i) {
        ParticipantProfile p;
        p.id = population[i].id;
        p.resources = population[i].resources;
        p.n = counts[i];
        p.batch = std::min(c.training.batch, counts[i]);
        p.epochs = c.training.epochs_for(1);
        p.recompute_tau();
        members.push_back({p.id, &shards[i], p, i});
    }
    int min_tau = members.front().profile.tau;
    for (const auto& m : members) min_tau = std::min(min_tau, m.profile.tau);

    ClusterRunOptions opt;
    opt.rounds = c.training.rounds_cap;
    opt.eta = c.training.eta;
    opt.batch = c.training.batch;
    opt.epochs = c.training.epochs_for(1);
    opt.seed = c.seed;
    opt.exec = c.exec;
    const WeightVector init = build_model(spec, 1, c.seed);

    const ClusterRun hetero = run_cluster_fl(1, members, init, opt);
    opt.forced_steps = min_tau;
    const ClusterRun equal = run_cluster_fl(1, members, init, opt);

    std::vector<double> loss_hetero, loss_equal;
    for (const auto& sh : shards) {
        loss_hetero.push_back(mean_loss_on(hetero.weights, sh));
        loss_equal.push_back(mean_loss_on(equal.weights, sh));
    }
    InconsistencyRecord rec = inconsistency_from_losses(loss_equal, loss_hetero, counts);

    ConvergenceParams p = planning_params(c, c.data.classes);
    p.epsilons.clear();
    const double total = static_cast<double>(need);
    std::vector<AccumulationVector> patterns;
    for (std::size_t i = 0; i < n; ++i) {
        p.epsilons.push_back(static_cast<double>(counts[i]) / total);
        patterns.push_back(AccumulationVector::fedavg(std::max(members[i].profile.tau, 1)));
    }
    rec.bound = error_bound(p, patterns, c.training.rounds_cap);
    return rec;
}

}  // namespace fedrac
