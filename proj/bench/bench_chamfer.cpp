// Compares the serial brute-force nearest-neighbor reference against the
// kd-tree, and the serial vs OpenMP-parallel Chamfer loss, at several cloud
// sizes. Prints a small table of wall-clock times and speedups.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pokedyn/kdtree.hpp"
#include "pokedyn/losses.hpp"

using namespace pokedyn;
using Clock = std::chrono::steady_clock;

namespace {

double time_of(int reps, const std::function<void()>& fn) {
    fn();  // warm-up
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

Cloud grid_cloud(int side, std::uint64_t seed) {
    Cloud c;
    c.init(side, side);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.3, 0.3), uz(0.6, 1.2);
    for (std::size_t p = 0; p < c.valid.size(); ++p) {
        c.pts[p * 3] = u(rng);
        c.pts[p * 3 + 1] = u(rng);
        c.pts[p * 3 + 2] = uz(rng);
        c.valid[p] = 1;
    }
    return c;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP: not enabled\n");
#endif
    std::printf("%-8s %-14s %-14s %-14s %-9s %-9s\n", "points", "brute(ms)", "kd serial(ms)",
                "kd parallel(ms)", "kd-x", "par-x");

    for (int side : {16, 32, 64, 96}) {
        Cloud a = grid_cloud(side, 1), b = grid_cloud(side, 2);
        int reps = side <= 32 ? 20 : 5;

        double t_brute = time_of(reps, [&] {
            Tape t;
            chamfer_loss(t, t.constant({side, side, 3}, a.pts), a.valid, b,
                         NnBackend::BruteForce, false);
        });
        double t_kd = time_of(reps, [&] {
            Tape t;
            chamfer_loss(t, t.constant({side, side, 3}, a.pts), a.valid, b, NnBackend::KdTree,
                         false);
        });
        double t_par = time_of(reps, [&] {
            Tape t;
            chamfer_loss(t, t.constant({side, side, 3}, a.pts), a.valid, b, NnBackend::KdTree,
                         true);
        });
        std::printf("%-8d %-14.3f %-14.3f %-14.3f %-9.2f %-9.2f\n", side * side, t_brute * 1e3,
                    t_kd * 1e3, t_par * 1e3, t_brute / t_kd, t_kd / t_par);
    }
    return 0;
}
