// Timing comparison of the serial reference kernels against the OpenMP
// variants, at shapes the denoiser actually hits plus a few larger ones.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "sdiff/kernels.hpp"
#include "sdiff/rng.hpp"

using namespace sdiff;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> rnd(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

void row(const char* name, double serial_ms, double omp_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, omp_ms,
                serial_ms / omp_ms);
}

}  // namespace

int main() {
    Rng rng(7);
    std::printf("threads available: %d (OpenMP %s)\n\n", kernels::thread_count(),
                kernels::openmp_available() ? "on" : "off");
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    {  // attention-sized and larger matmuls
        for (auto [m, k, n, reps] : {std::tuple{192, 32, 192, 200}, std::tuple{512, 64, 512, 20},
                                     std::tuple{1024, 128, 1024, 3}}) {
            auto a = rnd(size_t(m) * k, rng), b = rnd(size_t(k) * n, rng);
            std::vector<double> c(size_t(m) * n);
            char name[64];
            std::snprintf(name, sizeof name, "matmul %dx%dx%d", m, k, n);
            const double ts = time_ms(
                [&] { kernels::ref::matmul_nn(a.data(), b.data(), c.data(), m, k, n); }, reps);
            const double tp = time_ms(
                [&] { kernels::par::matmul_nn(a.data(), b.data(), c.data(), m, k, n); }, reps);
            row(name, ts, tp);
        }
    }

    {  // softmax over attention scores
        const int rows_n = 1536, cols = 1536;
        auto x = rnd(size_t(rows_n) * cols, rng);
        std::vector<double> y(x.size());
        const double ts = time_ms(
            [&] { kernels::ref::softmax_rows(x.data(), y.data(), rows_n, cols); }, 20);
        const double tp = time_ms(
            [&] { kernels::par::softmax_rows(x.data(), y.data(), rows_n, cols); }, 20);
        row("softmax 1536x1536", ts, tp);
    }

    {  // channel conv at clip scale
        const int sites = 24 * 16 * 16, chans = 64, window = 3;
        auto x = rnd(size_t(sites) * chans, rng);
        auto w = rnd(size_t(chans) * window, rng);
        std::vector<double> y(x.size());
        const double ts = time_ms(
            [&] {
                kernels::ref::conv1d_channels(x.data(), w.data(), y.data(), sites, chans,
                                              window, true);
            },
            50);
        const double tp = time_ms(
            [&] {
                kernels::par::conv1d_channels(x.data(), w.data(), y.data(), sites, chans,
                                              window, true);
            },
            50);
        row("conv1d 6144x64 w3", ts, tp);
    }

    {  // depthwise 3-d conv
        const int f = 24, h = 16, w = 16, c = 64;
        auto x = rnd(size_t(f) * h * w * c, rng);
        auto k = rnd(size_t(c) * 27, rng);
        std::vector<double> y(x.size());
        const double ts = time_ms(
            [&] { kernels::ref::conv3d_depthwise(x.data(), k.data(), y.data(), f, h, w, c, 3, 3, 3); },
            10);
        const double tp = time_ms(
            [&] { kernels::par::conv3d_depthwise(x.data(), k.data(), y.data(), f, h, w, c, 3, 3, 3); },
            10);
        row("conv3d 24x16x16x64", ts, tp);
    }

    {  // layer norm rows
        const int rows_n = 6144, cols = 64;
        auto x = rnd(size_t(rows_n) * cols, rng);
        auto g = rnd(size_t(cols), rng), b = rnd(size_t(cols), rng);
        std::vector<double> y(x.size()), h(x.size()), is(static_cast<size_t>(rows_n));
        const double ts = time_ms(
            [&] {
                kernels::ref::layer_norm_rows(x.data(), g.data(), b.data(), y.data(), h.data(),
                                              is.data(), rows_n, cols, 1e-10);
            },
            50);
        const double tp = time_ms(
            [&] {
                kernels::par::layer_norm_rows(x.data(), g.data(), b.data(), y.data(), h.data(),
                                              is.data(), rows_n, cols, 1e-10);
            },
            50);
        row("layer_norm 6144x64", ts, tp);
    }

    return 0;
}
