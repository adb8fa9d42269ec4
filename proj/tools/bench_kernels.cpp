// Times the serial reference kernels against the OpenMP variants on
// representative shapes and prints the ratio. On a single-core host the
// parallel build mostly measures scheduling overhead; the point is parity
// visibility, not a victory lap.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "msdet/kernels.hpp"

using namespace msdet;

namespace {

double time_ms(const std::function<void()>& fn) {
    fn();  // warm-up
    std::vector<double> ms;
    for (int i = 0; i < 7; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    return ms[ms.size() / 2];
}

std::vector<float> randn(size_t n, unsigned seed, float lo = -1.0f,
                         float hi = 1.0f) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> uf(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = uf(rng);
    return v;
}

void report(const char* name, double ref_ms, double par_ms) {
    std::printf("%-24s ref %8.3f ms   par %8.3f ms   ref/par %5.2fx\n", name,
                ref_ms, par_ms, par_ms > 0 ? ref_ms / par_ms : 0.0);
}

}  // namespace

int main() {
    // 3x3 convolution at backbone-stem scale
    {
        kernels::ConvDims d{};
        d.n = 1; d.cin = 16; d.hin = 64; d.win = 64;
        d.cout = 16; d.k = 3; d.stride = 1; d.pad = 1; d.groups = 1;
        d.hout = 64; d.wout = 64; d.has_bias = true;
        auto x = randn(size_t(d.n) * d.cin * d.hin * d.win, 1);
        auto w = randn(size_t(d.cout) * d.cin * d.k * d.k, 2);
        auto b = randn(size_t(d.cout), 3);
        std::vector<float> y(size_t(d.n) * d.cout * d.hout * d.wout);
        report("conv3x3 16x64x64",
               time_ms([&] {
                   kernels::ref::conv2d_forward(x.data(), w.data(), b.data(), d,
                                                y.data());
               }),
               time_ms([&] {
                   kernels::par::conv2d_forward(x.data(), w.data(), b.data(), d,
                                                y.data());
               }));
    }

    // pointwise convolution, the most common shape in the network
    {
        kernels::ConvDims d{};
        d.n = 1; d.cin = 64; d.hin = 32; d.win = 32;
        d.cout = 64; d.k = 1; d.stride = 1; d.pad = 0; d.groups = 1;
        d.hout = 32; d.wout = 32; d.has_bias = false;
        auto x = randn(size_t(d.n) * d.cin * d.hin * d.win, 4);
        auto w = randn(size_t(d.cout) * d.cin, 5);
        std::vector<float> y(size_t(d.n) * d.cout * d.hout * d.wout);
        report("conv1x1 64x32x32",
               time_ms([&] {
                   kernels::ref::conv2d_forward(x.data(), w.data(), nullptr, d,
                                                y.data());
               }),
               time_ms([&] {
                   kernels::par::conv2d_forward(x.data(), w.data(), nullptr, d,
                                                y.data());
               }));
    }

    // selective scan forward and backward
    {
        kernels::ScanDims d{2, 16, 1024, 8};
        size_t ncl = size_t(d.n) * d.c * d.l;
        size_t nsl = size_t(d.n) * d.s * d.l;
        auto u = randn(ncl, 6);
        auto delta = randn(ncl, 7, 0.05f, 1.0f);
        auto b = randn(nsl, 8);
        auto c = randn(nsl, 9);
        auto a = randn(size_t(d.c) * d.s, 10, -2.0f, -0.1f);
        std::vector<float> y(ncl), h(ncl * size_t(d.s));
        report("scan fwd c16 L1024",
               time_ms([&] {
                   kernels::ref::scan_forward(u.data(), delta.data(), b.data(),
                                              c.data(), a.data(), d, y.data(),
                                              h.data());
               }),
               time_ms([&] {
                   kernels::par::scan_forward(u.data(), delta.data(), b.data(),
                                              c.data(), a.data(), d, y.data(),
                                              h.data());
               }));

        auto dy = randn(ncl, 11);
        std::vector<float> du(ncl), dd(ncl), db(nsl), dc(nsl),
            da(size_t(d.c) * d.s);
        auto zero = [&] {
            std::fill(du.begin(), du.end(), 0.0f);
            std::fill(dd.begin(), dd.end(), 0.0f);
            std::fill(db.begin(), db.end(), 0.0f);
            std::fill(dc.begin(), dc.end(), 0.0f);
            std::fill(da.begin(), da.end(), 0.0f);
        };
        report("scan bwd c16 L1024",
               time_ms([&] {
                   zero();
                   kernels::ref::scan_backward(u.data(), delta.data(), b.data(),
                                               c.data(), a.data(), h.data(),
                                               dy.data(), d, du.data(),
                                               dd.data(), db.data(), dc.data(),
                                               da.data());
               }),
               time_ms([&] {
                   zero();
                   kernels::par::scan_backward(u.data(), delta.data(), b.data(),
                                               c.data(), a.data(), h.data(),
                                               dy.data(), d, du.data(),
                                               dd.data(), db.data(), dc.data(),
                                               da.data());
               }));
    }

    // quadratic attention baseline
    {
        int l = 512, c = 16;
        auto x = randn(size_t(l) * c, 12);
        auto wq = randn(size_t(c) * c, 13);
        auto wk = randn(size_t(c) * c, 14);
        auto wv = randn(size_t(c) * c, 15);
        std::vector<float> y(size_t(l) * c);
        report("attention L512 c16",
               time_ms([&] {
                   kernels::ref::attention_forward(x.data(), wq.data(),
                                                   wk.data(), wv.data(), l, c,
                                                   y.data());
               }),
               time_ms([&] {
                   kernels::par::attention_forward(x.data(), wq.data(),
                                                   wk.data(), wv.data(), l, c,
                                                   y.data());
               }));
    }
    return 0;
}
