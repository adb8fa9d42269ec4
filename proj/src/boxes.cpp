#include "msdet/boxes.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace msdet {

float iou(const DetectionBox& a, const DetectionBox& b) {
    if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0) return 0.0f;
    float ax0 = a.cx - a.w * 0.5f, ax1 = a.cx + a.w * 0.5f;
    float ay0 = a.cy - a.h * 0.5f, ay1 = a.cy + a.h * 0.5f;
    float bx0 = b.cx - b.w * 0.5f, bx1 = b.cx + b.w * 0.5f;
    float by0 = b.cy - b.h * 0.5f, by1 = b.cy + b.h * 0.5f;
    float iw = std::min(ax1, bx1) - std::max(ax0, bx0);
    float ih = std::min(ay1, by1) - std::max(ay0, by0);
    if (iw <= 0 || ih <= 0) return 0.0f;
    // doubles keep near-identical boxes from rounding above 1
    double inter = double(iw) * ih;
    double uni = double(a.w) * a.h + double(b.w) * b.h - inter;
    return uni > 0 ? float(inter / uni) : 0.0f;
}

std::vector<DetectionBox> read_boxes(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("boxes: cannot open " + path);
    std::vector<DetectionBox> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        DetectionBox b;
        if (!(ls >> b.class_id >> b.cx >> b.cy >> b.w >> b.h))
            throw std::runtime_error("boxes: parse error at " + path + ":" +
                                     std::to_string(lineno));
        out.push_back(b);
    }
    return out;
}

void write_boxes(const std::vector<DetectionBox>& boxes,
                 const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("boxes: cannot open " + path +
                                      " for writing");
    for (const auto& b : boxes) {
        os << b.class_id << " " << b.cx << " " << b.cy << " " << b.w << " "
           << b.h << "\n";
    }
    if (!os) throw std::runtime_error("boxes: write failed for " + path);
}

}  // namespace msdet
