#pragma once

#include <string>
#include <vector>

namespace msdet {

// Axis-aligned box in pixel coordinates, center format. score is only
// meaningful on predictions; ground truth leaves it at 1.
struct DetectionBox {
    float cx = 0, cy = 0, w = 0, h = 0;
    int class_id = 0;
    float score = 1.0f;
};

// Intersection over union; 0 for degenerate (non-positive area) inputs.
float iou(const DetectionBox& a, const DetectionBox& b);

// boxes.txt format: one box per line, "class cx cy w h", space-separated.
// Lines starting with '#' and blank lines are skipped on read.
std::vector<DetectionBox> read_boxes(const std::string& path);
void write_boxes(const std::vector<DetectionBox>& boxes,
                 const std::string& path);

}  // namespace msdet
