#pragma once

// Mask Enhanced Pixel-level Fusion: turns a registered 6-channel RGB+IR
// stack into one fused 6-channel image. Per modality a learned mask gates
// the raw pixels (x + x*mask, deliberately without 0.5 averaging), then a
// channel-wise modal factor rescales the concatenated result.

#include <string>
#include <utility>

#include "msdet/graph.hpp"
#include "msdet/nn.hpp"

namespace msdet::mepf {

// sigmoid(conv3x3(relu(conv3x3(x)))), 3->3->3 channels. One independent
// instance per modality.
class MaskGenerator {
  public:
    MaskGenerator(ParamStore& ps, const std::string& name);
    int forward(Graph& g, int x) const;

  private:
    nn::Conv2d c1_, c2_;
};

class MepfFusion {
  public:
    MepfFusion(ParamStore& ps, const std::string& name);

    // Full pipeline: split -> masks -> per-modality fuse -> modal factor ->
    // channel rescale. registered=false refuses with an alignment error.
    int forward(Graph& g, int x_in, bool registered = true) const;

    // Stage seams for tests and the fuse CLI's diagnostic outputs.
    static std::pair<int, int> split(Graph& g, int x_in);
    int mask_rgb(Graph& g, int x) const { return mg_rgb_.forward(g, x); }
    int mask_ir(Graph& g, int x) const { return mg_ir_.forward(g, x); }
    int fuse_rgb(Graph& g, int x, int mask) const;
    int fuse_ir(Graph& g, int x, int mask) const;
    // (n,6,1,1) sigmoid factor from the two fused branches
    int modal_factor(Graph& g, int x_out_rgb, int x_out_ir) const;

  private:
    MaskGenerator mg_rgb_, mg_ir_;
    nn::Conv2d conv_rgb_, conv_ir_;
    nn::Linear fc1_, fc2_;
};

// Closed-form parameter count of one MepfFusion under the fixed widths
// (convs cout*cin*k*k + cout, FCs out*in + out). The published reference
// figure this is compared against is 1650.
std::int64_t expected_param_count();

}  // namespace msdet::mepf
