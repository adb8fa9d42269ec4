#include "msdet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "msdet/kernels.hpp"

namespace msdet {

namespace detail {

struct Node {
    Tensor out;
    std::vector<int> ins;
    virtual ~Node() = default;
    // Propagates gy = d(loss)/d(out) into the gradient buffers of ins.
    virtual void backward(Graph&, const Tensor&) {}
};

}  // namespace detail

using detail::Node;

namespace {

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": operand shapes " + a.shape.str() +
                         " and " + b.shape.str() + " differ");
}

struct InputNode : Node {};

struct ParamNode : Node {
    Parameter* p;
    explicit ParamNode(Parameter* p_) : p(p_) {
        out = Tensor(p->shape, p->value);
    }
    void backward(Graph&, const Tensor& gy) override {
        if (!p->trainable) return;
        for (size_t i = 0; i < gy.data.size(); ++i) p->grad[i] += gy.data[i];
    }
};

struct Conv2dNode : Node {
    kernels::ConvDims d;
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        const Tensor& w = g.val(ins[1]);
        kernels::conv2d_backward_input(gy.data.data(), w.data.data(), d,
                                       g.grad_buf(ins[0]).data.data());
        float* db = d.has_bias ? g.grad_buf(ins[2]).data.data() : nullptr;
        kernels::conv2d_backward_weights(x.data.data(), gy.data.data(), d,
                                         g.grad_buf(ins[1]).data.data(), db);
    }
};

struct ReluNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i)
            if (x.data[i] > 0.0f) dx.data[i] += gy.data[i];
    }
};

struct SiluNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            const float s = sigmoidf(x.data[i]);
            dx.data[i] += gy.data[i] * s * (1.0f + x.data[i] * (1.0f - s));
        }
    }
};

struct GeluNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        Tensor& dx = g.grad_buf(ins[0]);
        const float c0 = 0.7978845608028654f;
        for (size_t i = 0; i < gy.data.size(); ++i) {
            const float v = x.data[i];
            const float t = std::tanh(c0 * (v + 0.044715f * v * v * v));
            const float du = c0 * (1.0f + 3.0f * 0.044715f * v * v);
            dx.data[i] += gy.data[i] *
                          (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du);
        }
    }
};

struct SigmoidNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            const float s = out.data[i];
            dx.data[i] += gy.data[i] * s * (1.0f - s);
        }
    }
};

struct SoftplusNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i)
            dx.data[i] += gy.data[i] * sigmoidf(x.data[i]);
    }
};

struct ExpNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i)
            dx.data[i] += gy.data[i] * out.data[i];
    }
};

struct AtanNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i)
            dx.data[i] += gy.data[i] / (1.0f + x.data[i] * x.data[i]);
    }
};

struct BatchNormNode : Node {
    bool train = true;
    std::vector<float> mean, invstd;  // the stats used by this forward
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        const Tensor& gamma = g.val(ins[1]);
        Tensor& dx = g.grad_buf(ins[0]);
        Tensor& dgamma = g.grad_buf(ins[1]);
        Tensor& dbeta = g.grad_buf(ins[2]);
        const int C = x.shape.c;
        const int hw = x.shape.h * x.shape.w;
        const std::int64_t m = std::int64_t(x.shape.n) * hw;
        for (int c = 0; c < C; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int n = 0; n < x.shape.n; ++n) {
                const size_t off = (size_t(n) * C + c) * hw;
                for (int p = 0; p < hw; ++p) {
                    const float xhat = (x.data[off + p] - mean[c]) * invstd[c];
                    sum_dy += gy.data[off + p];
                    sum_dy_xhat += double(gy.data[off + p]) * xhat;
                }
            }
            dgamma.data[c] += float(sum_dy_xhat);
            dbeta.data[c] += float(sum_dy);
            if (train) {
                const float f = gamma.data[c] * invstd[c] / float(m);
                for (int n = 0; n < x.shape.n; ++n) {
                    const size_t off = (size_t(n) * C + c) * hw;
                    for (int p = 0; p < hw; ++p) {
                        const float xhat = (x.data[off + p] - mean[c]) * invstd[c];
                        dx.data[off + p] +=
                            f * (float(m) * gy.data[off + p] - float(sum_dy) -
                                 xhat * float(sum_dy_xhat));
                    }
                }
            } else {
                const float f = gamma.data[c] * invstd[c];
                for (int n = 0; n < x.shape.n; ++n) {
                    const size_t off = (size_t(n) * C + c) * hw;
                    for (int p = 0; p < hw; ++p)
                        dx.data[off + p] += f * gy.data[off + p];
                }
            }
        }
    }
};

struct GlobalAvgPoolNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int hw = dx.shape.h * dx.shape.w;
        for (int n = 0; n < dx.shape.n; ++n)
            for (int c = 0; c < dx.shape.c; ++c) {
                const float g0 = gy.at(n, c, 0, 0) / float(hw);
                const size_t off = (size_t(n) * dx.shape.c + c) * hw;
                for (int p = 0; p < hw; ++p) dx.data[off + p] += g0;
            }
    }
};

struct AdaptiveMaxPoolNode : Node {
    std::vector<int> argmax;  // winning pixel per (n,c); ties -> lowest index
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int hw = dx.shape.h * dx.shape.w;
        for (int n = 0; n < dx.shape.n; ++n)
            for (int c = 0; c < dx.shape.c; ++c) {
                const size_t j = size_t(n) * dx.shape.c + c;
                dx.data[j * hw + argmax[j]] += gy.at(n, c, 0, 0);
            }
    }
};

struct ChannelMeanNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int C = dx.shape.c;
        const int hw = dx.shape.h * dx.shape.w;
        for (int n = 0; n < dx.shape.n; ++n)
            for (int c = 0; c < C; ++c) {
                const size_t off = (size_t(n) * C + c) * hw;
                const size_t goff = size_t(n) * hw;
                for (int p = 0; p < hw; ++p)
                    dx.data[off + p] += gy.data[goff + p] / float(C);
            }
    }
};

struct ChannelMaxNode : Node {
    std::vector<int> argmax;  // winning channel per (n,pixel); ties -> lowest
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int C = dx.shape.c;
        const int hw = dx.shape.h * dx.shape.w;
        for (int n = 0; n < dx.shape.n; ++n)
            for (int p = 0; p < hw; ++p) {
                const int c = argmax[size_t(n) * hw + p];
                dx.data[(size_t(n) * C + c) * hw + p] +=
                    gy.data[size_t(n) * hw + p];
            }
    }
};

struct AddNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            da.data[i] += gy.data[i];
            db.data[i] += gy.data[i];
        }
    }
};

struct SubNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            da.data[i] += gy.data[i];
            db.data[i] -= gy.data[i];
        }
    }
};

struct MulNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& a = g.val(ins[0]);
        const Tensor& b = g.val(ins[1]);
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            da.data[i] += gy.data[i] * b.data[i];
            db.data[i] += gy.data[i] * a.data[i];
        }
    }
};

struct DivNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& a = g.val(ins[0]);
        const Tensor& b = g.val(ins[1]);
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            da.data[i] += gy.data[i] / b.data[i];
            db.data[i] -= gy.data[i] * a.data[i] / (b.data[i] * b.data[i]);
        }
    }
};

// For minimum/maximum a tie routes the whole gradient to the first operand.
struct MinNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& a = g.val(ins[0]);
        const Tensor& b = g.val(ins[1]);
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            if (a.data[i] <= b.data[i]) da.data[i] += gy.data[i];
            else db.data[i] += gy.data[i];
        }
    }
};

struct MaxNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& a = g.val(ins[0]);
        const Tensor& b = g.val(ins[1]);
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        for (size_t i = 0; i < gy.data.size(); ++i) {
            if (a.data[i] >= b.data[i]) da.data[i] += gy.data[i];
            else db.data[i] += gy.data[i];
        }
    }
};

struct MulChannelNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        const Tensor& gate = g.val(ins[1]);
        Tensor& dx = g.grad_buf(ins[0]);
        Tensor& dg = g.grad_buf(ins[1]);
        const int hw = x.shape.h * x.shape.w;
        for (int n = 0; n < x.shape.n; ++n)
            for (int c = 0; c < x.shape.c; ++c) {
                const size_t off = (size_t(n) * x.shape.c + c) * hw;
                const float gv = gate.at(n, c, 0, 0);
                double acc = 0.0;
                for (int p = 0; p < hw; ++p) {
                    dx.data[off + p] += gy.data[off + p] * gv;
                    acc += double(gy.data[off + p]) * x.data[off + p];
                }
                dg.at(n, c, 0, 0) += float(acc);
            }
    }
};

struct MulSpatialNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        const Tensor& x = g.val(ins[0]);
        const Tensor& gate = g.val(ins[1]);
        Tensor& dx = g.grad_buf(ins[0]);
        Tensor& dg = g.grad_buf(ins[1]);
        const int hw = x.shape.h * x.shape.w;
        for (int n = 0; n < x.shape.n; ++n) {
            const size_t goff = size_t(n) * hw;
            for (int c = 0; c < x.shape.c; ++c) {
                const size_t off = (size_t(n) * x.shape.c + c) * hw;
                for (int p = 0; p < hw; ++p) {
                    dx.data[off + p] += gy.data[off + p] * gate.data[goff + p];
                    dg.data[goff + p] += gy.data[off + p] * x.data[off + p];
                }
            }
        }
    }
};

struct AffineNode : Node {
    float a = 1.0f;
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i)
            dx.data[i] += a * gy.data[i];
    }
};

struct ConcatCNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& da = g.grad_buf(ins[0]);
        Tensor& db = g.grad_buf(ins[1]);
        const int ca = da.shape.c, cb = db.shape.c;
        const int hw = da.shape.h * da.shape.w;
        for (int n = 0; n < da.shape.n; ++n) {
            const size_t gbase = size_t(n) * (ca + cb) * hw;
            for (int c = 0; c < ca; ++c)
                for (int p = 0; p < hw; ++p)
                    da.data[(size_t(n) * ca + c) * hw + p] +=
                        gy.data[gbase + size_t(c) * hw + p];
            for (int c = 0; c < cb; ++c)
                for (int p = 0; p < hw; ++p)
                    db.data[(size_t(n) * cb + c) * hw + p] +=
                        gy.data[gbase + size_t(ca + c) * hw + p];
        }
    }
};

struct SliceCNode : Node {
    int start = 0;
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int cin = dx.shape.c, cout = out.shape.c;
        const int hw = dx.shape.h * dx.shape.w;
        for (int n = 0; n < dx.shape.n; ++n)
            for (int c = 0; c < cout; ++c)
                for (int p = 0; p < hw; ++p)
                    dx.data[(size_t(n) * cin + start + c) * hw + p] +=
                        gy.data[(size_t(n) * cout + c) * hw + p];
    }
};

struct ReshapeNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < gy.data.size(); ++i) dx.data[i] += gy.data[i];
    }
};

struct ScanPermuteNode : Node {
    std::vector<int> idx;
    bool inverse = false;
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int L = int(idx.size());
        const int planes = dx.shape.n * dx.shape.c;
        for (int nc = 0; nc < planes; ++nc) {
            const size_t off = size_t(nc) * L;
            if (!inverse)
                for (int k = 0; k < L; ++k)
                    dx.data[off + idx[k]] += gy.data[off + k];
            else
                for (int k = 0; k < L; ++k)
                    dx.data[off + k] += gy.data[off + idx[k]];
        }
    }
};

struct SpaceToDepthNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int C = dx.shape.c;
        const int ho = out.shape.h, wo = out.shape.w;
        for (int n = 0; n < dx.shape.n; ++n)
            for (int q = 0; q < 4; ++q) {
                const int qr = q / 2, qc = q % 2;
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < ho; ++y)
                        for (int x = 0; x < wo; ++x)
                            dx.at(n, c, 2 * y + qr, 2 * x + qc) +=
                                gy.at(n, q * C + c, y, x);
            }
    }
};

struct SelectiveScanNode : Node {
    kernels::ScanDims sd;
    std::vector<float> hcache;  // (n,c,l,s) hidden states from forward
    void backward(Graph& g, const Tensor& gy) override {
        kernels::scan_backward(
            g.val(ins[0]).data.data(), g.val(ins[1]).data.data(),
            g.val(ins[2]).data.data(), g.val(ins[3]).data.data(),
            g.val(ins[4]).data.data(), hcache.data(), gy.data.data(), sd,
            g.grad_buf(ins[0]).data.data(), g.grad_buf(ins[1]).data.data(),
            g.grad_buf(ins[2]).data.data(), g.grad_buf(ins[3]).data.data(),
            g.grad_buf(ins[4]).data.data());
    }
};

struct SumAllNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += gy.data[0];
    }
};

struct MeanAllNode : Node {
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const float g0 = gy.data[0] / float(dx.data.size());
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += g0;
    }
};

struct WeightedSumNode : Node {
    Tensor weights;
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        for (size_t i = 0; i < dx.data.size(); ++i)
            dx.data[i] += gy.data[0] * weights.data[i];
    }
};

struct BceMeanNode : Node {
    Tensor targets;
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dz = g.grad_buf(ins[0]);
        const float scale = gy.data[0] / float(dz.data.size());
        const Tensor& z = g.val(ins[0]);
        for (size_t i = 0; i < dz.data.size(); ++i)
            dz.data[i] += scale * (sigmoidf(z.data[i]) - targets.data[i]);
    }
};

struct GatherCellsNode : Node {
    std::vector<std::array<int, 3>> cells;
    void backward(Graph& g, const Tensor& gy) override {
        Tensor& dx = g.grad_buf(ins[0]);
        const int C = dx.shape.c;
        for (size_t k = 0; k < cells.size(); ++k)
            for (int c = 0; c < C; ++c)
                dx.at(cells[k][0], c, cells[k][1], cells[k][2]) +=
                    gy.at(int(k), c, 0, 0);
    }
};

}  // namespace

Graph::Graph(Mode mode) : mode_(mode) {}
Graph::~Graph() = default;

int Graph::push(std::unique_ptr<Node> n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

const Tensor& Graph::val(int id) const { return nodes_.at(size_t(id))->out; }

Tensor& Graph::grad_buf(int id) {
    Tensor& t = grads_[size_t(id)];
    if (t.data.empty() && nodes_[size_t(id)]->out.numel() > 0)
        t = Tensor(nodes_[size_t(id)]->out.shape);
    return t;
}

Tensor Graph::grad_of(int id) const {
    const Tensor& out = nodes_.at(size_t(id))->out;
    if (size_t(id) < grads_.size() && !grads_[size_t(id)].data.empty())
        return grads_[size_t(id)];
    return Tensor(out.shape);
}

void Graph::backward(int loss_id) {
    const Tensor& loss = val(loss_id);
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " +
                         loss.shape.str());
    grads_.assign(nodes_.size(), Tensor{});
    grad_buf(loss_id).data[0] = 1.0f;
    for (int id = loss_id; id >= 0; --id)
        if (!grads_[size_t(id)].data.empty())
            nodes_[size_t(id)]->backward(*this, grads_[size_t(id)]);
}

int Graph::input(Tensor t) {
    auto n = std::make_unique<InputNode>();
    n->out = std::move(t);
    return push(std::move(n));
}

int Graph::param(Parameter* p) {
    return push(std::make_unique<ParamNode>(p));
}

int Graph::conv2d(int x, int w, int b, int kernel, int stride, int pad,
                  int groups) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    if (groups < 1 || xv.shape.c % groups != 0)
        throw ShapeError("conv2d: channel axis " + std::to_string(xv.shape.c) +
                         " not divisible by groups " + std::to_string(groups));
    kernels::ConvDims d;
    d.n = xv.shape.n;
    d.cin = xv.shape.c;
    d.hin = xv.shape.h;
    d.win = xv.shape.w;
    d.cout = wv.shape.n;
    d.k = kernel;
    d.stride = stride;
    d.pad = pad;
    d.groups = groups;
    if (d.cout % groups != 0)
        throw ShapeError("conv2d: output channel axis " +
                         std::to_string(d.cout) + " not divisible by groups " +
                         std::to_string(groups));
    if (wv.shape != Shape4(d.cout, d.cin / groups, kernel, kernel))
        throw ShapeError("conv2d: weight shape " + wv.shape.str() +
                         " does not match expected " +
                         Shape4(d.cout, d.cin / groups, kernel, kernel).str());
    d.hout = (d.hin + 2 * pad - kernel) / stride + 1;
    d.wout = (d.win + 2 * pad - kernel) / stride + 1;
    if (d.hout < 1 || d.wout < 1)
        throw ShapeError("conv2d: spatial axes " + xv.shape.str() +
                         " collapse below 1x1 for kernel " +
                         std::to_string(kernel) + " stride " +
                         std::to_string(stride));
    d.has_bias = b >= 0;
    auto node = std::make_unique<Conv2dNode>();
    node->d = d;
    node->ins = {x, w};
    const float* bias = nullptr;
    if (d.has_bias) {
        const Tensor& bv = val(b);
        if (bv.numel() != d.cout)
            throw ShapeError("conv2d: bias length " +
                             std::to_string(bv.numel()) +
                             " != output channel axis " +
                             std::to_string(d.cout));
        bias = bv.data.data();
        node->ins.push_back(b);
    }
    node->out = Tensor(Shape4(d.n, d.cout, d.hout, d.wout));
    kernels::conv2d_forward(xv.data.data(), wv.data.data(), bias, d,
                            node->out.data.data());
    return push(std::move(node));
}

int Graph::relu(int x) {
    auto n = std::make_unique<ReluNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i)
        n->out.data[i] = xv.data[i] > 0.0f ? xv.data[i] : 0.0f;
    return push(std::move(n));
}

int Graph::silu(int x) {
    auto n = std::make_unique<SiluNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    kernels::silu_forward(xv.data.data(), xv.numel(), n->out.data.data());
    return push(std::move(n));
}

int Graph::gelu(int x) {
    auto n = std::make_unique<GeluNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    kernels::gelu_forward(xv.data.data(), xv.numel(), n->out.data.data());
    return push(std::move(n));
}

int Graph::sigmoid(int x) {
    auto n = std::make_unique<SigmoidNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i)
        n->out.data[i] = sigmoidf(xv.data[i]);
    return push(std::move(n));
}

int Graph::softplus(int x) {
    auto n = std::make_unique<SoftplusNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i) {
        const float v = xv.data[i];
        n->out.data[i] =
            std::max(v, 0.0f) + std::log1p(std::exp(-std::fabs(v)));
    }
    return push(std::move(n));
}

int Graph::exp_op(int x) {
    auto n = std::make_unique<ExpNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i)
        n->out.data[i] = std::exp(xv.data[i]);
    return push(std::move(n));
}

int Graph::atan_op(int x) {
    auto n = std::make_unique<AtanNode>();
    const Tensor& xv = val(x);
    n->ins = {x};
    n->out = Tensor(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i)
        n->out.data[i] = std::atan(xv.data[i]);
    return push(std::move(n));
}

int Graph::batch_norm(int x, int gamma, int beta, BnState* state,
                      float momentum, float eps) {
    const Tensor& xv = val(x);
    const Tensor& gv = val(gamma);
    const Tensor& bv = val(beta);
    const int C = xv.shape.c;
    if (gv.numel() != C || bv.numel() != C)
        throw ShapeError("batch_norm: scale/shift lengths " +
                         std::to_string(gv.numel()) + "/" +
                         std::to_string(bv.numel()) + " != channel axis " +
                         std::to_string(C));
    if (state->mean.empty()) {
        state->mean.assign(size_t(C), 0.0f);
        state->var.assign(size_t(C), 1.0f);
    }
    auto node = std::make_unique<BatchNormNode>();
    node->ins = {x, gamma, beta};
    node->train = mode_ == Mode::kTrain;
    node->mean.resize(size_t(C));
    node->invstd.resize(size_t(C));
    const int hw = xv.shape.h * xv.shape.w;
    const std::int64_t m = std::int64_t(xv.shape.n) * hw;
    if (node->train) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0, s2 = 0.0;
            for (int n = 0; n < xv.shape.n; ++n) {
                const size_t off = (size_t(n) * C + c) * hw;
                for (int p = 0; p < hw; ++p) {
                    s += xv.data[off + p];
                    s2 += double(xv.data[off + p]) * xv.data[off + p];
                }
            }
            const double mu = s / double(m);
            // biased variance, the same estimate the running buffer stores
            const double var = std::max(0.0, s2 / double(m) - mu * mu);
            node->mean[c] = float(mu);
            node->invstd[c] = float(1.0 / std::sqrt(var + double(eps)));
            state->mean[c] =
                (1.0f - momentum) * state->mean[c] + momentum * float(mu);
            state->var[c] =
                (1.0f - momentum) * state->var[c] + momentum * float(var);
        }
        state->steps++;
    } else {
        if (state->steps == 0)
            throw std::runtime_error(
                "batch_norm: eval-mode forward before any train-mode batch "
                "has populated the running statistics");
        for (int c = 0; c < C; ++c) {
            node->mean[c] = state->mean[c];
            node->invstd[c] =
                float(1.0 / std::sqrt(double(state->var[c]) + double(eps)));
        }
    }
    node->out = Tensor(xv.shape);
    for (int n = 0; n < xv.shape.n; ++n)
        for (int c = 0; c < C; ++c) {
            const size_t off = (size_t(n) * C + c) * hw;
            const float mu = node->mean[c], is = node->invstd[c];
            const float ga = gv.data[c], be = bv.data[c];
            for (int p = 0; p < hw; ++p)
                node->out.data[off + p] =
                    ga * (xv.data[off + p] - mu) * is + be;
        }
    return push(std::move(node));
}

int Graph::global_avg_pool(int x) {
    const Tensor& xv = val(x);
    auto n = std::make_unique<GlobalAvgPoolNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(xv.shape.n, xv.shape.c, 1, 1));
    const int hw = xv.shape.h * xv.shape.w;
    for (int b = 0; b < xv.shape.n; ++b)
        for (int c = 0; c < xv.shape.c; ++c) {
            const size_t off = (size_t(b) * xv.shape.c + c) * hw;
            double acc = 0.0;
            for (int p = 0; p < hw; ++p) acc += xv.data[off + p];
            n->out.at(b, c, 0, 0) = float(acc / hw);
        }
    return push(std::move(n));
}

int Graph::adaptive_max_pool(int x) {
    const Tensor& xv = val(x);
    auto n = std::make_unique<AdaptiveMaxPoolNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(xv.shape.n, xv.shape.c, 1, 1));
    const int hw = xv.shape.h * xv.shape.w;
    n->argmax.resize(size_t(xv.shape.n) * xv.shape.c);
    for (int b = 0; b < xv.shape.n; ++b)
        for (int c = 0; c < xv.shape.c; ++c) {
            const size_t off = (size_t(b) * xv.shape.c + c) * hw;
            int best = 0;
            for (int p = 1; p < hw; ++p)
                if (xv.data[off + p] > xv.data[off + best]) best = p;
            n->argmax[size_t(b) * xv.shape.c + c] = best;
            n->out.at(b, c, 0, 0) = xv.data[off + best];
        }
    return push(std::move(n));
}

int Graph::channel_mean(int x) {
    const Tensor& xv = val(x);
    auto n = std::make_unique<ChannelMeanNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(xv.shape.n, 1, xv.shape.h, xv.shape.w));
    const int C = xv.shape.c;
    const int hw = xv.shape.h * xv.shape.w;
    for (int b = 0; b < xv.shape.n; ++b)
        for (int p = 0; p < hw; ++p) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                acc += xv.data[(size_t(b) * C + c) * hw + p];
            n->out.data[size_t(b) * hw + p] = float(acc / C);
        }
    return push(std::move(n));
}

int Graph::channel_max(int x) {
    const Tensor& xv = val(x);
    auto n = std::make_unique<ChannelMaxNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(xv.shape.n, 1, xv.shape.h, xv.shape.w));
    const int C = xv.shape.c;
    const int hw = xv.shape.h * xv.shape.w;
    n->argmax.resize(size_t(xv.shape.n) * hw);
    for (int b = 0; b < xv.shape.n; ++b)
        for (int p = 0; p < hw; ++p) {
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (xv.data[(size_t(b) * C + c) * hw + p] >
                    xv.data[(size_t(b) * C + best) * hw + p])
                    best = c;
            n->argmax[size_t(b) * hw + p] = best;
            n->out.data[size_t(b) * hw + p] =
                xv.data[(size_t(b) * C + best) * hw + p];
        }
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_same_shape("add", av, bv);
    auto n = std::make_unique<AddNode>();
    n->ins = {a, b};
    n->out = Tensor(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i)
        n->out.data[i] = av.data[i] + bv.data[i];
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_same_shape("sub", av, bv);
    auto n = std::make_unique<SubNode>();
    n->ins = {a, b};
    n->out = Tensor(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i)
        n->out.data[i] = av.data[i] - bv.data[i];
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_same_shape("mul", av, bv);
    auto n = std::make_unique<MulNode>();
    n->ins = {a, b};
    n->out = Tensor(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i)
        n->out.data[i] = av.data[i] * bv.data[i];
    return push(std::move(n));
}

int Graph::div(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_same_shape("div", av, bv);
    auto n = std::make_unique<DivNode>();
    n->ins = {a, b};
    n->out = Tensor(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i)
        n->out.data[i] = av.data[i] / bv.data[i];
    return push(std::move(n));
}

int Graph::minimum(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_same_shape("minimum", av, bv);
    auto n = std::make_unique<MinNode>();
    n->ins = {a, b};
    n->out = Tensor(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i)
        n->out.data[i] = std::min(av.data[i], bv.data[i]);
    return push(std::move(n));
}

int Graph::maximum(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check_same_shape("maximum", av, bv);
    auto n = std::make_unique<MaxNode>();
    n->ins = {a, b};
    n->out = Tensor(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i)
        n->out.data[i] = std::max(av.data[i], bv.data[i]);
    return push(std::move(n));
}

int Graph::mul_channel(int x, int gate) {
    const Tensor& xv = val(x);
    const Tensor& gv = val(gate);
    if (gv.shape.n != xv.shape.n || gv.shape.c != xv.shape.c ||
        gv.shape.h != 1 || gv.shape.w != 1)
        throw ShapeError("mul_channel: gate shape " + gv.shape.str() +
                         " must be (" + std::to_string(xv.shape.n) + "," +
                         std::to_string(xv.shape.c) + ",1,1)");
    auto n = std::make_unique<MulChannelNode>();
    n->ins = {x, gate};
    n->out = Tensor(xv.shape);
    const int hw = xv.shape.h * xv.shape.w;
    for (int b = 0; b < xv.shape.n; ++b)
        for (int c = 0; c < xv.shape.c; ++c) {
            const size_t off = (size_t(b) * xv.shape.c + c) * hw;
            const float g0 = gv.at(b, c, 0, 0);
            for (int p = 0; p < hw; ++p)
                n->out.data[off + p] = xv.data[off + p] * g0;
        }
    return push(std::move(n));
}

int Graph::mul_spatial(int x, int gate) {
    const Tensor& xv = val(x);
    const Tensor& gv = val(gate);
    if (gv.shape.n != xv.shape.n || gv.shape.c != 1 ||
        gv.shape.h != xv.shape.h || gv.shape.w != xv.shape.w)
        throw ShapeError("mul_spatial: gate shape " + gv.shape.str() +
                         " must be (" + std::to_string(xv.shape.n) + ",1," +
                         std::to_string(xv.shape.h) + "," +
                         std::to_string(xv.shape.w) + ")");
    auto n = std::make_unique<MulSpatialNode>();
    n->ins = {x, gate};
    n->out = Tensor(xv.shape);
    const int hw = xv.shape.h * xv.shape.w;
    for (int b = 0; b < xv.shape.n; ++b) {
        const size_t goff = size_t(b) * hw;
        for (int c = 0; c < xv.shape.c; ++c) {
            const size_t off = (size_t(b) * xv.shape.c + c) * hw;
            for (int p = 0; p < hw; ++p)
                n->out.data[off + p] = xv.data[off + p] * gv.data[goff + p];
        }
    }
    return push(std::move(n));
}

int Graph::affine(int x, float a, float b) {
    const Tensor& xv = val(x);
    auto n = std::make_unique<AffineNode>();
    n->a = a;
    n->ins = {x};
    n->out = Tensor(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i)
        n->out.data[i] = a * xv.data[i] + b;
    return push(std::move(n));
}

int Graph::concat_c(int a, int b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (av.shape.n != bv.shape.n || av.shape.h != bv.shape.h ||
        av.shape.w != bv.shape.w)
        throw ShapeError("concat_c: shapes " + av.shape.str() + " and " +
                         bv.shape.str() + " differ outside the channel axis");
    auto n = std::make_unique<ConcatCNode>();
    n->ins = {a, b};
    const int ca = av.shape.c, cb = bv.shape.c;
    const int hw = av.shape.h * av.shape.w;
    n->out = Tensor(Shape4(av.shape.n, ca + cb, av.shape.h, av.shape.w));
    for (int bn = 0; bn < av.shape.n; ++bn) {
        const size_t obase = size_t(bn) * (ca + cb) * hw;
        std::memcpy(n->out.data.data() + obase,
                    av.data.data() + size_t(bn) * ca * hw,
                    sizeof(float) * ca * hw);
        std::memcpy(n->out.data.data() + obase + size_t(ca) * hw,
                    bv.data.data() + size_t(bn) * cb * hw,
                    sizeof(float) * cb * hw);
    }
    return push(std::move(n));
}

int Graph::slice_c(int x, int start, int count) {
    const Tensor& xv = val(x);
    if (start < 0 || count < 1 || start + count > xv.shape.c)
        throw ShapeError("slice_c: channel range [" + std::to_string(start) +
                         "," + std::to_string(start + count) +
                         ") outside axis of " + std::to_string(xv.shape.c));
    auto n = std::make_unique<SliceCNode>();
    n->start = start;
    n->ins = {x};
    const int hw = xv.shape.h * xv.shape.w;
    n->out = Tensor(Shape4(xv.shape.n, count, xv.shape.h, xv.shape.w));
    for (int b = 0; b < xv.shape.n; ++b)
        std::memcpy(n->out.data.data() + size_t(b) * count * hw,
                    xv.data.data() + (size_t(b) * xv.shape.c + start) * hw,
                    sizeof(float) * count * hw);
    return push(std::move(n));
}

int Graph::reshape(int x, Shape4 s) {
    const Tensor& xv = val(x);
    if (s.numel() != xv.numel())
        throw ShapeError("reshape: target " + s.str() + " has " +
                         std::to_string(s.numel()) + " elements, source " +
                         xv.shape.str() + " has " +
                         std::to_string(xv.numel()));
    auto n = std::make_unique<ReshapeNode>();
    n->ins = {x};
    n->out = Tensor(s, xv.data);
    return push(std::move(n));
}

int Graph::scan_permute(int x, ScanOrder order, int h, int w, bool inverse) {
    const Tensor& xv = val(x);
    const int L = h * w;
    if (!inverse) {
        if (xv.shape.h != h || xv.shape.w != w)
            throw ShapeError("scan_permute: spatial axes of " +
                             xv.shape.str() + " != grid " + std::to_string(h) +
                             "x" + std::to_string(w));
    } else {
        if (xv.shape.h != L || xv.shape.w != 1)
            throw ShapeError("scan_permute: sequence axis of " +
                             xv.shape.str() + " != " + std::to_string(L) +
                             " tokens");
    }
    auto n = std::make_unique<ScanPermuteNode>();
    n->idx = order_indices(order, h, w);
    n->inverse = inverse;
    n->ins = {x};
    n->out = Tensor(inverse ? Shape4(xv.shape.n, xv.shape.c, h, w)
                            : Shape4(xv.shape.n, xv.shape.c, L, 1));
    const int planes = xv.shape.n * xv.shape.c;
    for (int nc = 0; nc < planes; ++nc) {
        const size_t off = size_t(nc) * L;
        if (!inverse)
            for (int k = 0; k < L; ++k)
                n->out.data[off + k] = xv.data[off + n->idx[k]];
        else
            for (int k = 0; k < L; ++k)
                n->out.data[off + n->idx[k]] = xv.data[off + k];
    }
    return push(std::move(n));
}

int Graph::space_to_depth(int x) {
    const Tensor& xv = val(x);
    if (xv.shape.h % 2 != 0 || xv.shape.w % 2 != 0)
        throw ShapeError("space_to_depth: spatial axes of " + xv.shape.str() +
                         " must be even");
    auto n = std::make_unique<SpaceToDepthNode>();
    n->ins = {x};
    const int C = xv.shape.c, ho = xv.shape.h / 2, wo = xv.shape.w / 2;
    n->out = Tensor(Shape4(xv.shape.n, 4 * C, ho, wo));
    for (int b = 0; b < xv.shape.n; ++b)
        for (int q = 0; q < 4; ++q) {
            const int qr = q / 2, qc = q % 2;
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < ho; ++y)
                    for (int xw = 0; xw < wo; ++xw)
                        n->out.at(b, q * C + c, y, xw) =
                            xv.at(b, c, 2 * y + qr, 2 * xw + qc);
        }
    return push(std::move(n));
}

int Graph::selective_scan(int u, int delta, int b, int c, int a) {
    const Tensor& uv = val(u);
    const Tensor& dv = val(delta);
    const Tensor& bv = val(b);
    const Tensor& cv = val(c);
    const Tensor& av = val(a);
    check_same_shape("selective_scan(u,delta)", uv, dv);
    check_same_shape("selective_scan(B,C)", bv, cv);
    if (uv.shape.w != 1 || bv.shape.w != 1)
        throw ShapeError("selective_scan: sequence tensors must be (n,c,L,1), "
                         "got " + uv.shape.str() + " and " + bv.shape.str());
    if (uv.shape.h < 1)
        throw ShapeError("selective_scan: empty sequence");
    if (bv.shape.n != uv.shape.n || bv.shape.h != uv.shape.h)
        throw ShapeError("selective_scan: B/C shape " + bv.shape.str() +
                         " disagrees with input " + uv.shape.str() +
                         " on batch or sequence axis");
    if (av.shape.n != uv.shape.c || av.shape.c != bv.shape.c ||
        av.shape.h != 1 || av.shape.w != 1)
        throw ShapeError("selective_scan: A shape " + av.shape.str() +
                         " must be (" + std::to_string(uv.shape.c) + "," +
                         std::to_string(bv.shape.c) + ",1,1)");
    kernels::ScanDims sd;
    sd.n = uv.shape.n;
    sd.c = uv.shape.c;
    sd.l = uv.shape.h;
    sd.s = bv.shape.c;
    if (sd.s > 64)
        throw ShapeError("selective_scan: state axis " + std::to_string(sd.s) +
                         " exceeds the supported 64");
    auto node = std::make_unique<SelectiveScanNode>();
    node->sd = sd;
    node->ins = {u, delta, b, c, a};
    node->out = Tensor(uv.shape);
    node->hcache.resize(size_t(sd.n) * sd.c * sd.l * sd.s);
    kernels::scan_forward(uv.data.data(), dv.data.data(), bv.data.data(),
                          cv.data.data(), av.data.data(), sd,
                          node->out.data.data(), node->hcache.data());
    return push(std::move(node));
}

int Graph::sum_all(int x) {
    const Tensor& xv = val(x);
    auto n = std::make_unique<SumAllNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(1, 1, 1, 1));
    double acc = 0.0;
    for (float v : xv.data) acc += v;
    n->out.data[0] = float(acc);
    return push(std::move(n));
}

int Graph::mean_all(int x) {
    const Tensor& xv = val(x);
    if (xv.numel() == 0)
        throw ShapeError("mean_all: input " + xv.shape.str() + " is empty");
    auto n = std::make_unique<MeanAllNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(1, 1, 1, 1));
    double acc = 0.0;
    for (float v : xv.data) acc += v;
    n->out.data[0] = float(acc / double(xv.numel()));
    return push(std::move(n));
}

int Graph::weighted_sum(int x, Tensor weights) {
    const Tensor& xv = val(x);
    check_same_shape("weighted_sum", xv, weights);
    auto n = std::make_unique<WeightedSumNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(1, 1, 1, 1));
    double acc = 0.0;
    for (size_t i = 0; i < xv.data.size(); ++i)
        acc += double(xv.data[i]) * weights.data[i];
    n->out.data[0] = float(acc);
    n->weights = std::move(weights);
    return push(std::move(n));
}

int Graph::bce_mean(int logits, Tensor targets) {
    const Tensor& zv = val(logits);
    check_same_shape("bce_mean", zv, targets);
    if (zv.numel() == 0)
        throw ShapeError("bce_mean: input " + zv.shape.str() + " is empty");
    auto n = std::make_unique<BceMeanNode>();
    n->ins = {logits};
    n->out = Tensor(Shape4(1, 1, 1, 1));
    double acc = 0.0;
    for (size_t i = 0; i < zv.data.size(); ++i) {
        const float z = zv.data[i];
        // max(z,0) - z*t + log(1+exp(-|z|)), stable for large |z|
        acc += std::max(z, 0.0f) - z * targets.data[i] +
               std::log1p(std::exp(-std::fabs(z)));
    }
    n->out.data[0] = float(acc / double(zv.numel()));
    n->targets = std::move(targets);
    return push(std::move(n));
}

int Graph::gather_cells(int x, std::vector<std::array<int, 3>> cells) {
    const Tensor& xv = val(x);
    for (const auto& cell : cells)
        if (cell[0] < 0 || cell[0] >= xv.shape.n || cell[1] < 0 ||
            cell[1] >= xv.shape.h || cell[2] < 0 || cell[2] >= xv.shape.w)
            throw ShapeError("gather_cells: cell (" + std::to_string(cell[0]) +
                             "," + std::to_string(cell[1]) + "," +
                             std::to_string(cell[2]) + ") outside " +
                             xv.shape.str());
    auto n = std::make_unique<GatherCellsNode>();
    n->ins = {x};
    n->out = Tensor(Shape4(int(cells.size()), xv.shape.c, 1, 1));
    for (size_t k = 0; k < cells.size(); ++k)
        for (int c = 0; c < xv.shape.c; ++c)
            n->out.at(int(k), c, 0, 0) =
                xv.at(cells[k][0], c, cells[k][1], cells[k][2]);
    n->cells = std::move(cells);
    return push(std::move(n));
}

std::vector<int> order_indices(ScanOrder o, int h, int w) {
    std::vector<int> idx(size_t(h) * w);
    int k = 0;
    switch (o) {
        case ScanOrder::kRowFwd:
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) idx[k++] = y * w + x;
            break;
        case ScanOrder::kRowBwd:
            for (int y = h - 1; y >= 0; --y)
                for (int x = w - 1; x >= 0; --x) idx[k++] = y * w + x;
            break;
        case ScanOrder::kColFwd:
            for (int x = 0; x < w; ++x)
                for (int y = 0; y < h; ++y) idx[k++] = y * w + x;
            break;
        case ScanOrder::kColBwd:
            for (int x = w - 1; x >= 0; --x)
                for (int y = h - 1; y >= 0; --y) idx[k++] = y * w + x;
            break;
    }
    return idx;
}

}  // namespace msdet
