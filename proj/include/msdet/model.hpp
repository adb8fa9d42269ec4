#pragma once

// The full detector: optional mask-enhanced fusion on the 6-channel RGB+IR
// stack, the state-space backbone, and the anchor-free head. Ablation modes
// switch the fusion and the two block refinements on and off; the baseline
// is plain concatenation into a backbone of bare visual state-space blocks.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "msdet/blocks.hpp"
#include "msdet/boxes.hpp"
#include "msdet/detect.hpp"
#include "msdet/graph.hpp"
#include "msdet/mepf.hpp"
#include "msdet/tensor.hpp"

namespace msdet {

enum class Ablation { kBaseline, kMepf, kMepfEstd, kMepfCarg, kFull };

// "baseline" | "mepf" | "mepf-estd" | "mepf-carg" | "full"; throws
// std::invalid_argument otherwise.
Ablation parse_ablation(const std::string& s);
std::string ablation_name(Ablation a);

struct ModelConfig {
    int num_classes = 3;
    Ablation ablation = Ablation::kFull;
    blocks::BackboneConfig backbone;  // use_estd/use_carg overridden by ablation
    detect::HeadConfig head;          // num_classes overridden
};

class Model {
  public:
    Model(std::uint64_t seed, const ModelConfig& cfg);

    // x6 must be a (n,6,h,w) graph node: RGB channels then IR channels.
    std::array<int, 3> forward_maps(Graph& g, int x6);

    // Convenience single-image inference: fuse, run, decode, NMS. A negative
    // score_thresh means "use the configured deployment threshold"; mAP
    // evaluation passes a near-zero one so the whole PR curve is ranked.
    std::vector<DetectionBox> predict(const Tensor& rgb, const Tensor& ir,
                                      float score_thresh = -1.0f);

    ParamStore& store() { return store_; }
    const ModelConfig& config() const { return cfg_; }
    bool has_fusion() const { return fusion_.has_value(); }
    mepf::MepfFusion& fusion() { return *fusion_; }
    blocks::Backbone& backbone() { return backbone_; }
    detect::Head& head() { return head_; }

  private:
    ModelConfig cfg_;
    ParamStore store_;
    std::optional<mepf::MepfFusion> fusion_;
    blocks::Backbone backbone_;
    detect::Head head_;
};

// (1,6,h,w) stack from equally sized (1,3,h,w) images.
Tensor stack_rgb_ir(const Tensor& rgb, const Tensor& ir);

// Resolves ablation switches onto the backbone config.
blocks::BackboneConfig backbone_for(const ModelConfig& cfg);

}  // namespace msdet
