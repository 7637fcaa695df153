// Compares the serial reference kernels against the OpenMP kernels at one
// thread and at the full thread count, and checks they agree.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "flowcast/kernels.hpp"
#include "flowcast/rng.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        f();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

void bench_matmul(int n, flowcast::Rng& rng) {
    std::vector<double> a(static_cast<std::size_t>(n) * n), b(a.size()), c_ref(a.size()),
        c_ker(a.size());
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);

    const double gflop = 2.0 * n * n * static_cast<double>(n) / 1e9;
    const int reps = n >= 512 ? 3 : 7;

    const double t_ref =
        time_best_of(reps, [&] { flowcast::ref::matmul(c_ref.data(), a.data(), b.data(), n, n, n); });

    omp_set_num_threads(1);
    const double t_one = time_best_of(reps, [&] {
        flowcast::kernels::matmul_nn(c_ker.data(), a.data(), b.data(), n, n, n, false);
    });

    omp_set_num_threads(omp_get_num_procs());
    const double t_omp = time_best_of(reps, [&] {
        flowcast::kernels::matmul_nn(c_ker.data(), a.data(), b.data(), n, n, n, false);
    });

    double max_diff = 0.0;
    for (std::size_t i = 0; i < c_ref.size(); ++i)
        max_diff = std::max(max_diff, std::abs(c_ref[i] - c_ker[i]));

    std::printf("matmul %4dx%-4d  ref %7.2f GF/s  kernel(1t) %7.2f GF/s  kernel(%dt) %7.2f "
                "GF/s  max|diff| %.2e\n",
                n, n, gflop / t_ref, gflop / t_one, omp_get_num_procs(), gflop / t_omp,
                max_diff);
}

void bench_elementwise(std::size_t n, flowcast::Rng& rng) {
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.uniform(-3, 3);

    const double t_ref = time_best_of(5, [&] {
        for (std::size_t i = 0; i < n; ++i) y[i] = flowcast::ref::tanh_scalar(x[i]);
    });
    omp_set_num_threads(1);
    const double t_one = time_best_of(5, [&] { flowcast::kernels::ew_tanh(y.data(), x.data(), n); });
    omp_set_num_threads(omp_get_num_procs());
    const double t_omp = time_best_of(5, [&] { flowcast::kernels::ew_tanh(y.data(), x.data(), n); });

    std::printf("tanh   n=%-8zu  ref %7.1f Mel/s  kernel(1t) %7.1f Mel/s  kernel(%dt) %7.1f "
                "Mel/s\n",
                n, n / t_ref / 1e6, n / t_one / 1e6, omp_get_num_procs(), n / t_omp / 1e6);
}

}  // namespace

int main() {
    flowcast::Rng rng(12345);
    std::printf("threads available: %d\n", omp_get_num_procs());
    for (int n : {64, 128, 256, 512}) bench_matmul(n, rng);
    bench_elementwise(1u << 20, rng);
    return 0;
}
