#pragma once

// Raw float kernels for the hot paths: convolution, the selective state-space
// scan, the quadratic attention baseline, and the wide elementwise
// activations. Each kernel exists twice: kernels::ref holds the plain serial
// loops used as the correctness reference, kernels::par holds the
// OpenMP-parallel versions. Both variants accumulate per output element in
// the same order, so their results are bit-identical and parallel scheduling
// cannot change numerics. The unqualified dispatch functions pick the
// variant from the process-wide switch.
//
// All backward kernels accumulate (+=) into the caller's gradient buffers;
// the caller zeroes them, which lets one buffer collect contributions from
// several consumers.

#include <cstdint>

namespace msdet::kernels {

struct ConvDims {
    int n, cin, hin, win;
    int cout, k, stride, pad, groups;
    int hout, wout;
    bool has_bias;
};

struct ScanDims {
    int n;  // batch
    int c;  // channels
    int l;  // sequence length
    int s;  // state dimension
};

bool parallel_enabled();
void set_parallel(bool on);

// ZOH input-matrix factor phi(z) = (exp(z)-1)/z and its derivative, with the
// series limit below |z| < 1e-6 (phi -> 1, phi' -> 1/2).
float zoh_phi(float z);
float zoh_phi_prime(float z);

namespace ref {

void conv2d_forward(const float* x, const float* w, const float* bias,
                    const ConvDims& d, float* y);
void conv2d_backward_input(const float* dy, const float* w, const ConvDims& d,
                           float* dx);
void conv2d_backward_weights(const float* x, const float* dy, const ConvDims& d,
                             float* dw, float* db);

// u, delta: (n,c,l); B, C: (n,s,l); A: (c,s); y: (n,c,l); h: (n,c,l,s).
// Recurrence per token: h_k = exp(delta*A) h_{k-1} + phi(delta*A) delta B x_k,
// y_k = <C_k, h_k>.
void scan_forward(const float* u, const float* delta, const float* b,
                  const float* c, const float* a, const ScanDims& d, float* y,
                  float* h);
void scan_backward(const float* u, const float* delta, const float* b,
                   const float* c, const float* a, const float* h,
                   const float* dy, const ScanDims& d, float* du, float* ddelta,
                   float* db, float* dc, float* da);

// Single-head softmax attention, O(L^2): y_i = sum_j softmax(q_i.k/sqrt(c)) v_j
// with q, k, v the projected tokens. x: (l,c); wq/wk/wv: (c,c); y: (l,c).
void attention_forward(const float* x, const float* wq, const float* wk,
                       const float* wv, int l, int c, float* y);

void silu_forward(const float* x, std::int64_t count, float* y);
void gelu_forward(const float* x, std::int64_t count, float* y);

}  // namespace ref

namespace par {

void conv2d_forward(const float* x, const float* w, const float* bias,
                    const ConvDims& d, float* y);
void conv2d_backward_input(const float* dy, const float* w, const ConvDims& d,
                           float* dx);
void conv2d_backward_weights(const float* x, const float* dy, const ConvDims& d,
                             float* dw, float* db);
void scan_forward(const float* u, const float* delta, const float* b,
                  const float* c, const float* a, const ScanDims& d, float* y,
                  float* h);
void scan_backward(const float* u, const float* delta, const float* b,
                   const float* c, const float* a, const float* h,
                   const float* dy, const ScanDims& d, float* du, float* ddelta,
                   float* db, float* dc, float* da);
void attention_forward(const float* x, const float* wq, const float* wk,
                       const float* wv, int l, int c, float* y);
void silu_forward(const float* x, std::int64_t count, float* y);
void gelu_forward(const float* x, std::int64_t count, float* y);

}  // namespace par

void conv2d_forward(const float* x, const float* w, const float* bias,
                    const ConvDims& d, float* y);
void conv2d_backward_input(const float* dy, const float* w, const ConvDims& d,
                           float* dx);
void conv2d_backward_weights(const float* x, const float* dy, const ConvDims& d,
                             float* dw, float* db);
void scan_forward(const float* u, const float* delta, const float* b,
                  const float* c, const float* a, const ScanDims& d, float* y,
                  float* h);
void scan_backward(const float* u, const float* delta, const float* b,
                   const float* c, const float* a, const float* h,
                   const float* dy, const ScanDims& d, float* du, float* ddelta,
                   float* db, float* dc, float* da);
void attention_forward(const float* x, const float* wq, const float* wk,
                       const float* wv, int l, int c, float* y);
void silu_forward(const float* x, std::int64_t count, float* y);
void gelu_forward(const float* x, std::int64_t count, float* y);

}  // namespace msdet::kernels
