#pragma once

// Selective state-space scanning: zero-order-hold discretization, the 1D
// selective scan with learned input-dependent parameters, and the four-path
// 2D scan (SS2D) over feature maps.

#include <array>
#include <string>
#include <vector>

#include "msdet/graph.hpp"
#include "msdet/nn.hpp"
#include "msdet/tensor.hpp"

namespace msdet::ssm {

struct Discretized {
    double abar;
    double bbar;
};

// Scalar-channel ZOH: Abar = exp(delta*a), Bbar = (delta*a)^-1 (exp(delta*a)
// - 1) * delta*b, with the series limit Bbar -> delta*b when |delta*a| <
// 1e-6. Double precision; this is the slow exact route the fused scan kernel
// is tested against. Throws std::invalid_argument for delta <= 0.
Discretized discretize(double a, double b, double delta);

class Ss2dCore {
  public:
    // Four directional branches with independent delta/B/C projections and a
    // shared diagonal A, initialized A_i = -(i+1) (stored as log magnitude).
    Ss2dCore(ParamStore& ps, const std::string& name, int channels,
             int state_dim = 8);

    // (n,c,h,w) -> (n,c,h,w): flatten under each scan order, scan, restore,
    // and sum the four branch grids.
    int forward(Graph& g, int x) const;

    // One direction's scan applied to an already-flattened (n,c,L,1)
    // sequence. Exposed so 1D behavior is testable in isolation.
    int forward_seq(Graph& g, int xseq, int dir) const;

    // Per-branch grid outputs before the merge, in ScanOrder enum order.
    std::array<int, 4> forward_branches(Graph& g, int x) const;

    int channels() const { return channels_; }
    int state_dim() const { return state_; }
    // Copies the projection weights of branch src into branch dst; used by
    // the symmetry tests that need weight-tied directions.
    void tie_branch_weights(int src, int dst);

  private:
    int channels_, state_;
    Parameter* a_log_;
    std::vector<nn::Conv2d> dt_proj_, b_proj_, c_proj_;
};

// Single-head softmax attention over an (l,c) token matrix; the O(L^2)
// complexity baseline for the scan benchmark. Forward only.
class AttentionRef {
  public:
    AttentionRef(ParamStore& ps, const std::string& name, int c);
    Tensor forward(const Tensor& tokens) const;  // (l,c,1,1) -> (l,c,1,1)

  private:
    int c_;
    Parameter* wq_;
    Parameter* wk_;
    Parameter* wv_;
};

}  // namespace msdet::ssm
