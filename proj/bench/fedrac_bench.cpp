// Serial reference vs OpenMP path for the parallel kernels.
// Usage: fedrac_bench [repeats]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "fedrac/clustering.hpp"
#include "fedrac/data.hpp"
#include "fedrac/engine.hpp"
#include "fedrac/exec.hpp"
#include "fedrac/rng.hpp"

using namespace fedrac;

namespace {

double best_ms(int repeats, const std::function<void()>& f) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, int repeats, const std::function<void(Exec)>& f) {
    const double s = best_ms(repeats, [&] { f(Exec::Serial); });
    const double p = best_ms(repeats, [&] { f(Exec::Parallel); });
    std::printf("%-26s %12.3f %12.3f %8.2fx\n", name, s, p, s / p);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
    std::printf("threads: %d, best of %d\n", worker_threads(), repeats);
    std::printf("%-26s %12s %12s %9s\n", "kernel", "serial ms", "openmp ms", "speedup");

    Rng rng(1);
    std::vector<NormalizedResource> pts(3000);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    const ResourceWeights w{0.4, 0.4, 0.2};
    row("pairwise_similarity n=3000", repeats, [&](Exec e) { (void)pairwise_similarity(pts, w, e); });

    const std::span<const NormalizedResource> head(pts.data(), 1000);
    row("kmeans k=8 n=1000 x16", repeats, [&](Exec e) { (void)kmeans(head, 8, w, 1, KMeansOptions{16, 300, e}); });

    const std::size_t members = 16, n = 200;
    const Dataset pool = synth_blobs(6, 20, members * n, 2.0, 3);
    const auto shards = partition_iid(pool, std::vector<std::size_t>(members, n), 3);
    std::vector<ClusterMember> cluster;
    for (std::size_t i = 0; i < members; ++i) {
        ParticipantProfile p;
        p.id = "p" + std::to_string(i);
        p.resources = {2.0, 10.0, 4.0};
        p.n = n;
        p.batch = 20;
        p.recompute_tau();
        cluster.push_back({p.id, &shards[i], p, i});
    }
    const WeightVector init = build_model(ModelSpec{20, {128, 64}, 6, 0.5}, 1, 1);
    row("run_cluster_fl 16x3 rounds", repeats, [&](Exec e) {
        ClusterRunOptions o;
        o.rounds = 3;
        o.batch = 20;
        o.eta = 0.05;
        o.exec = e;
        (void)run_cluster_fl(1, cluster, init, o);
    });
    return 0;
}
