#pragma once

// Anchor-free detection head over three feature scales, the matching
// training loss (objectness + class BCE + complete-IoU box term), and the
// inference path: decode, NMS, mAP50 evaluation.

#include <array>
#include <string>
#include <vector>

#include "msdet/boxes.hpp"
#include "msdet/graph.hpp"
#include "msdet/nn.hpp"

namespace msdet::detect {

struct HeadConfig {
    int num_classes = 3;
    std::array<int, 3> strides{8, 16, 32};
    float w_box = 5.0f;  // objectness weight is fixed at 1
    float w_cls = 1.0f;
    float score_thresh = 0.25f;
    float nms_iou = 0.5f;
};

// Per scale: 3x3 conv + SiLU, then a 1x1 projection to 4+1+K channels per
// cell, laid out [tx, ty, tw, th, objectness, class 0..K-1].
class Head {
  public:
    Head(ParamStore& ps, const std::string& name,
         const std::array<int, 3>& in_channels, int num_classes);
    std::array<int, 3> forward(Graph& g,
                               const std::array<int, 3>& feats) const;
    int num_classes() const { return num_classes_; }

  private:
    int num_classes_;
    std::vector<nn::Conv2d> mid_, out_;
};

// Cell decode: center = (sigmoid(t) + cell index) * stride, size =
// exp(satlog(t)) * stride where satlog is a smooth arctangent saturation of
// the size logit (bounded decoded sizes, but unlike a hard clamp the
// gradient never dies, so runaway logits can recover during training).
// Each cell emits its argmax class with score = sigmoid(objectness); boxes
// below score_thresh are dropped. map must be (1, 5+K, h, w).
std::vector<DetectionBox> decode(const Tensor& map, int stride,
                                 int num_classes, float score_thresh);

// One ground-truth box mapped to (scale, cell). Scale is the one whose
// stride is nearest to half the box's geometric-mean size in log space;
// the cell is the one containing the center. When two boxes land on the
// same cell the earlier one wins and the later is dropped.
struct Assignment {
    int scale;
    int cy, cx;
    int gt;
};
std::vector<Assignment> assign(const std::vector<DetectionBox>& gts,
                               const std::array<Shape4, 3>& map_shapes,
                               const std::array<int, 3>& strides);

struct LossParts {
    int total;     // scalar node id
    int obj;       // BCE over every cell of every scale, jointly averaged
    int cls = -1;  // matched cells only; -1 when nothing matched
    int box = -1;  // mean (1 - CIoU) over matched cells; -1 when unmatched
    int matched = 0;
};

// Builds the loss subgraph for one image's head maps. With no ground truth
// the loss is the objectness term alone, ln 2 at zero logits.
LossParts build_loss(Graph& g, const std::array<int, 3>& maps,
                     const std::vector<DetectionBox>& gts,
                     const HeadConfig& cfg);

// Greedy per-class suppression: keep in descending score order, drop any
// later same-class box with IoU >= iou_thresh against a kept one. Ties in
// score keep input order.
std::vector<DetectionBox> nms(std::vector<DetectionBox> boxes,
                              float iou_thresh = 0.5f,
                              float score_thresh = 0.25f);

struct EvalReport {
    std::vector<double> per_class_ap;
    std::vector<int> per_class_gt;
    double map50 = 0.0;  // mean AP over classes with at least one truth
    std::int64_t params_bytes = 0;
    double images_per_s = 0.0;
};

// AP at IoU 0.5 per class: predictions sorted by descending score (ties by
// input order), matched greedily one-to-one within each image, AP as the
// exact area under the monotone precision envelope.
EvalReport evaluate_map50(const std::vector<std::vector<DetectionBox>>& preds,
                          const std::vector<std::vector<DetectionBox>>& gts,
                          int num_classes);

std::string format_report(const EvalReport& r);

}  // namespace msdet::detect
