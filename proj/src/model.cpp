#include "msdet/model.hpp"

#include <cstring>
#include <stdexcept>

namespace msdet {

Ablation parse_ablation(const std::string& s) {
    if (s == "baseline") return Ablation::kBaseline;
    if (s == "mepf") return Ablation::kMepf;
    if (s == "mepf-estd") return Ablation::kMepfEstd;
    if (s == "mepf-carg") return Ablation::kMepfCarg;
    if (s == "full") return Ablation::kFull;
    throw std::invalid_argument(
        "unknown ablation \"" + s +
        "\" (expected baseline|mepf|mepf-estd|mepf-carg|full)");
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::kBaseline: return "baseline";
        case Ablation::kMepf: return "mepf";
        case Ablation::kMepfEstd: return "mepf-estd";
        case Ablation::kMepfCarg: return "mepf-carg";
        case Ablation::kFull: return "full";
    }
    return "?";
}

blocks::BackboneConfig backbone_for(const ModelConfig& cfg) {
    blocks::BackboneConfig b = cfg.backbone;
    switch (cfg.ablation) {
        case Ablation::kBaseline:
        case Ablation::kMepf:
            b.use_estd = false;
            b.use_carg = false;
            break;
        case Ablation::kMepfEstd:
            b.use_estd = true;
            b.use_carg = false;
            break;
        case Ablation::kMepfCarg:
            b.use_estd = false;
            b.use_carg = true;
            break;
        case Ablation::kFull:
            b.use_estd = true;
            b.use_carg = true;
            break;
    }
    return b;
}

// Fusion parameters register before backbone ones, so the emplace happens
// while backbone_'s config argument is evaluated.
Model::Model(std::uint64_t seed, const ModelConfig& cfg)
    : cfg_(cfg),
      store_(seed),
      fusion_(),
      backbone_(store_, "backbone",
                (cfg_.ablation != Ablation::kBaseline
                     ? (fusion_.emplace(store_, "mepf"), backbone_for(cfg_))
                     : backbone_for(cfg_))),
      head_(store_, "head", backbone_.out_channels(), cfg.num_classes) {
    cfg_.head.num_classes = cfg.num_classes;
    cfg_.backbone = backbone_.config();
}

std::array<int, 3> Model::forward_maps(Graph& g, int x6) {
    int fused = fusion_ ? fusion_->forward(g, x6) : x6;
    auto feats = backbone_.forward(g, fused);
    return head_.forward(g, feats);
}

std::vector<DetectionBox> Model::predict(const Tensor& rgb, const Tensor& ir,
                                         float score_thresh) {
    if (score_thresh < 0.0f) score_thresh = cfg_.head.score_thresh;
    Graph g(Mode::kEval);
    int x = g.input(stack_rgb_ir(rgb, ir));
    auto maps = forward_maps(g, x);
    std::vector<DetectionBox> boxes;
    for (int s = 0; s < 3; ++s) {
        auto scale_boxes = detect::decode(g.val(maps[size_t(s)]),
                                          cfg_.head.strides[size_t(s)],
                                          cfg_.num_classes, score_thresh);
        boxes.insert(boxes.end(), scale_boxes.begin(), scale_boxes.end());
    }
    return detect::nms(boxes, cfg_.head.nms_iou, score_thresh);
}

Tensor stack_rgb_ir(const Tensor& rgb, const Tensor& ir) {
    if (rgb.shape != ir.shape || rgb.shape.c != 3 || rgb.shape.n != 1)
        throw ShapeError("stack_rgb_ir: need matching (1,3,h,w) pair, got " +
                         rgb.shape.str() + " and " + ir.shape.str());
    Tensor out(Shape4(1, 6, rgb.shape.h, rgb.shape.w));
    std::memcpy(out.data.data(), rgb.data.data(),
                rgb.data.size() * sizeof(float));
    std::memcpy(out.data.data() + rgb.data.size(), ir.data.data(),
                ir.data.size() * sizeof(float));
    return out;
}

}  // namespace msdet
