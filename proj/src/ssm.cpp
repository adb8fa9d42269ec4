#include "msdet/ssm.hpp"

#include <cmath>
#include <stdexcept>

#include "msdet/kernels.hpp"

namespace msdet::ssm {

Discretized discretize(double a, double b, double delta) {
    if (delta <= 0.0)
        throw std::invalid_argument("discretize: delta must be positive, got " +
                                    std::to_string(delta));
    const double z = delta * a;
    Discretized d;
    d.abar = std::exp(z);
    if (std::fabs(z) < 1e-6)
        d.bbar = delta * b;
    else
        d.bbar = (std::expm1(z) / z) * delta * b;
    return d;
}

namespace {
constexpr std::array<ScanOrder, 4> kOrders = {
    ScanOrder::kRowFwd, ScanOrder::kRowBwd, ScanOrder::kColFwd,
    ScanOrder::kColBwd};
}

Ss2dCore::Ss2dCore(ParamStore& ps, const std::string& name, int channels,
                   int state_dim)
    : channels_(channels), state_(state_dim) {
    a_log_ = ps.create_const(name + ".a_log", Shape4(channels, state_dim, 1, 1),
                             0.0f);
    for (int ch = 0; ch < channels; ++ch)
        for (int i = 0; i < state_dim; ++i)
            a_log_->value[size_t(ch) * state_dim + i] = std::log(float(i + 1));
    for (int d = 0; d < 4; ++d) {
        const std::string dir = name + ".dir" + std::to_string(d);
        dt_proj_.emplace_back(ps, dir + ".dt", channels, channels, 1);
        b_proj_.emplace_back(ps, dir + ".b", channels, state_dim, 1);
        c_proj_.emplace_back(ps, dir + ".c", channels, state_dim, 1);
    }
}

int Ss2dCore::forward_seq(Graph& g, int xseq, int dir) const {
    // delta stays positive through softplus; the conv bias is its learned
    // pre-activation shift
    const int dt = g.softplus(dt_proj_[size_t(dir)].forward(g, xseq));
    const int bb = b_proj_[size_t(dir)].forward(g, xseq);
    const int cc = c_proj_[size_t(dir)].forward(g, xseq);
    // A = -exp(a_log): strictly negative, so |exp(delta*A)| < 1
    const int a = g.scale(g.exp_op(g.param(a_log_)), -1.0f);
    return g.selective_scan(xseq, dt, bb, cc, a);
}

std::array<int, 4> Ss2dCore::forward_branches(Graph& g, int x) const {
    const Shape4 s = g.val(x).shape;
    std::array<int, 4> out{};
    for (int d = 0; d < 4; ++d) {
        const int seq = g.scan_permute(x, kOrders[size_t(d)], s.h, s.w, false);
        const int y = forward_seq(g, seq, d);
        out[size_t(d)] =
            g.scan_permute(y, kOrders[size_t(d)], s.h, s.w, true);
    }
    return out;
}

int Ss2dCore::forward(Graph& g, int x) const {
    const std::array<int, 4> b = forward_branches(g, x);
    return g.add(g.add(b[0], b[1]), g.add(b[2], b[3]));
}

void Ss2dCore::tie_branch_weights(int src, int dst) {
    auto copy = [](const nn::Conv2d& from, const nn::Conv2d& to) {
        to.weight()->value = from.weight()->value;
        to.bias()->value = from.bias()->value;
    };
    copy(dt_proj_[size_t(src)], dt_proj_[size_t(dst)]);
    copy(b_proj_[size_t(src)], b_proj_[size_t(dst)]);
    copy(c_proj_[size_t(src)], c_proj_[size_t(dst)]);
}

AttentionRef::AttentionRef(ParamStore& ps, const std::string& name, int c)
    : c_(c) {
    wq_ = ps.create(name + ".wq", Shape4(c, c, 1, 1), c);
    wk_ = ps.create(name + ".wk", Shape4(c, c, 1, 1), c);
    wv_ = ps.create(name + ".wv", Shape4(c, c, 1, 1), c);
}

Tensor AttentionRef::forward(const Tensor& tokens) const {
    if (tokens.shape.c != c_ || tokens.shape.h != 1 || tokens.shape.w != 1)
        throw ShapeError("attention: tokens " + tokens.shape.str() +
                         " must be (L," + std::to_string(c_) + ",1,1)");
    Tensor y(tokens.shape);
    kernels::attention_forward(tokens.data.data(), wq_->value.data(),
                               wk_->value.data(), wv_->value.data(),
                               tokens.shape.n, c_, y.data.data());
    return y;
}

}  // namespace msdet::ssm
