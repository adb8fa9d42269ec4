#pragma once

// Define-by-run reverse-mode autodiff over Tensor. Ops append nodes to the
// tape in execution order (so inputs always precede consumers); backward
// walks the tape in reverse and accumulates into Parameter::grad. The op set
// is exactly what the fusion / state-space / attention-gate blocks and the
// detection loss need.

#include <array>
#include <memory>
#include <vector>

#include "msdet/tensor.hpp"

namespace msdet {

enum class Mode { kTrain, kEval };

// The four 2D traversal orders. Forward/backward pairs are exact reverses of
// one another.
enum class ScanOrder { kRowFwd = 0, kRowBwd = 1, kColFwd = 2, kColBwd = 3 };

// Per-channel running statistics owned by a batch-norm module, updated by
// train-mode forward passes (momentum blend) and required by eval mode.
struct BnState {
    std::vector<float> mean;
    std::vector<float> var;
    std::int64_t steps = 0;
};

namespace detail {
struct Node;
}

class Graph {
  public:
    explicit Graph(Mode mode = Mode::kTrain);
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Mode mode() const { return mode_; }
    int size() const { return int(nodes_.size()); }

    // -- leaves --
    int input(Tensor t);
    int param(Parameter* p);

    const Tensor& val(int id) const;
    // Gradient of the last backward() w.r.t. node id (zeros if unreached).
    Tensor grad_of(int id) const;

    // Seeds d(loss)/d(loss) = 1 and runs the tape in reverse. loss must be
    // scalar. Parameter grads accumulate additively across calls.
    void backward(int loss_id);

    // -- primitives --
    int conv2d(int x, int w, int b, int kernel, int stride, int pad, int groups = 1);
    int relu(int x);
    int silu(int x);
    int gelu(int x);
    int sigmoid(int x);
    int softplus(int x);
    int exp_op(int x);
    int atan_op(int x);
    int batch_norm(int x, int gamma, int beta, BnState* state,
                   float momentum = 0.1f, float eps = 1e-5f);
    int global_avg_pool(int x);
    int adaptive_avg_pool(int x) { return global_avg_pool(x); }
    int adaptive_max_pool(int x);
    int channel_mean(int x);
    int channel_max(int x);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int div(int a, int b);
    int minimum(int a, int b);
    int maximum(int a, int b);
    int mul_channel(int x, int gate);  // gate (n,c,1,1) broadcast over h,w
    int mul_spatial(int x, int gate);  // gate (n,1,h,w) broadcast over c
    int affine(int x, float a, float b);
    int scale(int x, float a) { return affine(x, a, 0.0f); }
    int concat_c(int a, int b);
    int slice_c(int x, int start, int count);
    int reshape(int x, Shape4 s);
    // Flattens (n,c,h,w) to the (n,c,h*w,1) token sequence of the given
    // traversal order; inverse=true maps a sequence back onto the h-by-w grid.
    int scan_permute(int x, ScanOrder order, int h, int w, bool inverse);
    int space_to_depth(int x);
    // u,delta (n,c,L,1); b,c (n,S,L,1); a (c,S,1,1). ZOH-discretized selective
    // recurrence along L, differentiable in every input.
    int selective_scan(int u, int delta, int b, int c, int a);
    int sum_all(int x);
    int mean_all(int x);
    int weighted_sum(int x, Tensor weights);
    // Numerically stable mean binary cross-entropy on logits.
    int bce_mean(int logits, Tensor targets);
    // cells: (batch index, cell y, cell x), pairwise distinct; output (K,C,1,1).
    int gather_cells(int x, std::vector<std::array<int, 3>> cells);

    // Zero-initialized gradient buffer for a node, allocated on first touch.
    // Node backward implementations accumulate into it.
    Tensor& grad_buf(int id);

  private:
    int push(std::unique_ptr<detail::Node> n);

    Mode mode_;
    std::vector<std::unique_ptr<detail::Node>> nodes_;
    std::vector<Tensor> grads_;
};

// Token index tables for the four scan orders over an h-by-w grid.
// order_indices(o, h, w)[k] is the row-major position visited at step k.
std::vector<int> order_indices(ScanOrder o, int h, int w);

}  // namespace msdet
