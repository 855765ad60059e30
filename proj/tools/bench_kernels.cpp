// SPDX-License-Identifier: Apache-2.0
//
// Times the OpenMP kernels against their serial references on the shapes the
// training loop actually produces, and verifies the results agree bitwise.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "layerlab/kernels.hpp"
#include "layerlab/rng.hpp"
#include "layerlab/tensor.hpp"

using namespace layerlab;
namespace k = kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool equal) {
    std::printf("%-34s %10.3f ms %10.3f ms %7.2fx  %s\n", name.c_str(),
                serial_ms, parallel_ms, serial_ms / parallel_ms,
                equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif
    std::printf("%-34s %13s %13s %8s\n", "kernel", "serial", "openmp", "speedup");

    Rng rng(1);
    struct GemmShape {
        int m, n, kk;
        const char* label;
    };
    const std::vector<GemmShape> shapes = {
        {16, 256, 20556, "gemm 16x20556 . 20556x256"},
        {16, 20480, 256, "gemm 16x256 . 256x20480"},
        {64, 256, 20556, "gemm 64x20556 . 20556x256"},
        {256, 256, 256, "gemm 256x256 . 256x256"},
    };
    for (const auto& s : shapes) {
        Tensor a = rng.normal_tensor({s.m, s.kk});
        Tensor b = rng.normal_tensor({s.kk, s.n});
        Tensor c1 = Tensor::zeros({s.m, s.n});
        Tensor c2 = Tensor::zeros({s.m, s.n});
        double ts = time_ms([&] {
            k::gemm_serial(false, false, s.m, s.n, s.kk, a.data.data(),
                           b.data.data(), c1.data.data(), 0.0);
        }, 5);
        double tp = time_ms([&] {
            k::gemm(false, false, s.m, s.n, s.kk, a.data.data(), b.data.data(),
                    c2.data.data(), 0.0);
        }, 5);
        report(s.label, ts, tp, c1.data == c2.data);
    }

    const std::size_t n = 16u * 20480u;
    Tensor x = rng.normal_tensor({static_cast<int>(n)});
    Tensor y = rng.normal_tensor({static_cast<int>(n)});
    Tensor o1 = Tensor::zeros({static_cast<int>(n)});
    Tensor o2 = Tensor::zeros({static_cast<int>(n)});
    {
        double ts = time_ms([&] {
            k::lincomb_serial(n, 0.3, x.data.data(), 0.7, y.data.data(), o1.data.data());
        }, 50);
        double tp = time_ms([&] {
            k::lincomb(n, 0.3, x.data.data(), 0.7, y.data.data(), o2.data.data());
        }, 50);
        report("lincomb 327680", ts, tp, o1.data == o2.data);
    }
    {
        double ts = time_ms([&] { k::vtanh_serial(n, x.data.data(), o1.data.data()); }, 20);
        double tp = time_ms([&] { k::vtanh(n, x.data.data(), o2.data.data()); }, 20);
        report("tanh 327680", ts, tp, o1.data == o2.data);
    }
    {
        Tensor mu = rng.normal_tensor({16, 20480});
        Tensor xx = rng.normal_tensor({16, 20480});
        Tensor r1 = Tensor::zeros({16});
        Tensor r2 = Tensor::zeros({16});
        double ts = time_ms([&] {
            k::gauss_logpdf_rows_serial(16, 20480, 20480, xx.data.data(),
                                        mu.data.data(), 0.25, r1.data.data());
        }, 20);
        double tp = time_ms([&] {
            k::gauss_logpdf_rows(16, 20480, 20480, xx.data.data(),
                                 mu.data.data(), 0.25, r2.data.data());
        }, 20);
        report("gauss_logpdf_rows 16x20480", ts, tp, r1.data == r2.data);
    }
    return 0;
}
