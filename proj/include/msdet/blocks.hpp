#pragma once

// The backbone building blocks: input projection, the local-detail ESTD
// branch, the CARG channel/spatial gate, the combined ESTVSS block, and
// VisionClueMerge downsampling, assembled into a multi-scale backbone.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "msdet/graph.hpp"
#include "msdet/nn.hpp"
#include "msdet/ssm.hpp"

namespace msdet::blocks {

// SiLU(BN(conv1x1(x))), channel-preserving.
class InputProjection {
  public:
    InputProjection(ParamStore& ps, const std::string& name, int c);
    int forward(Graph& g, int x);

  private:
    nn::Conv2d conv_;
    nn::BatchNorm2d bn_;
};

// conv1x1 -> BN -> squeeze-excitation -> conv1x1 -> GELU -> conv1x1,
// shape-preserving local-attention branch.
class EstdBlock {
  public:
    EstdBlock(ParamStore& ps, const std::string& name, int c);
    int forward(Graph& g, int x);

  private:
    nn::Conv2d c1_, c2_, c3_;
    nn::BatchNorm2d bn_;
    nn::SqueezeExcite se_;
};

// Intermediate node ids of one CARG pass, for the range/shape invariants.
struct CargGates {
    int x_dw;       // after the depthwise-separable conv
    int channel;    // (n,c,1,1) channel attention, sigmoid output
    int x_ca;       // x_dw gated by channel attention
    int spatial;    // (n,1,h,w) spatial attention, sigmoid output
    int out;        // gated result + block input residual
};

class CargBlock {
  public:
    // spatial_kernel must be one of {1,3,7}.
    CargBlock(ParamStore& ps, const std::string& name, int c,
              int spatial_kernel = 1);
    int forward(Graph& g, int x) const;
    CargGates forward_with_gates(Graph& g, int x) const;

  private:
    nn::Conv2d dw_, pw_;
    nn::Conv2d avg1_, avg2_;  // channel attention, average-pool branch
    nn::Conv2d max1_, max2_;  // channel attention, max-pool branch
    nn::Conv2d spatial_;
};

// input projection -> {SS2D branch (+ optional ESTD branch, summed)} ->
// optional CARG -> + input residual. With both options off this is a plain
// visual state-space block, the ablation baseline.
//
// The merged scan output is batch-normalized before it meets the other
// branches: the selective recurrence is bilinear in its inputs (B and C are
// data-dependent), so without a norm its output scale compounds through the
// residual chain and a few spatial peaks eventually dominate the head.
class EstvssBlock {
  public:
    EstvssBlock(ParamStore& ps, const std::string& name, int c, int state_dim,
                int spatial_kernel, bool use_estd, bool use_carg);
    int forward(Graph& g, int x);
    ssm::Ss2dCore& ss2d() { return ss2d_; }

  private:
    InputProjection proj_;
    ssm::Ss2dCore ss2d_;
    nn::BatchNorm2d scan_bn_;
    std::optional<EstdBlock> estd_;
    std::optional<CargBlock> carg_;
};

// Lossless 2x2 space-to-depth to 4c channels, then a 1x1 projection to 2c:
// halves both spatial dims, doubles channels.
class VisionClueMerge {
  public:
    VisionClueMerge(ParamStore& ps, const std::string& name, int cin);
    int forward(Graph& g, int x) const;

  private:
    nn::Conv2d proj_;
};

struct BackboneConfig {
    float depth_scale = 0.33f;
    float width_scale = 0.25f;
    int state_dim = 8;
    int spatial_kernel = 1;
    bool use_estd = true;
    bool use_carg = true;
    std::array<int, 4> base_blocks{3, 6, 6, 3};
    std::array<int, 4> base_channels{64, 128, 256, 512};

    // max(1, round(scale * base)): stages never come out empty
    int blocks_at(int stage) const;
    // round(scale * base); must land even and >= 4
    int channels_at(int stage) const;
    void validate() const;
};

// Stem (two stride-2 3x3 convs, overall stride 4) on the 6-channel fused
// input, then four ESTVSS stages separated by VisionClueMerge. Emits the
// last three stage outputs at strides 8/16/32.
class Backbone {
  public:
    Backbone(ParamStore& ps, const std::string& name,
             const BackboneConfig& cfg);
    std::array<int, 3> forward(Graph& g, int x);
    const BackboneConfig& config() const { return cfg_; }
    // channels of the three emitted scales
    std::array<int, 3> out_channels() const;

  private:
    BackboneConfig cfg_;
    nn::Conv2d stem1_, stem2_;
    nn::BatchNorm2d sbn1_, sbn2_;
    std::vector<EstvssBlock> stages_[4];
    std::vector<VisionClueMerge> merges_;
};

}  // namespace msdet::blocks
