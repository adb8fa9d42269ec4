#include "msdet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace msdet::detect {

namespace {
float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Log-size saturation: identity near zero, asymptotes at +-8 so exp() stays
// bounded, and the slope never reaches zero, so a runaway size logit can
// always be pulled back (a hard clamp would freeze its gradient).
constexpr float kSizeClamp = 8.0f;
constexpr float kSatGain = float(M_PI) / (2.0f * kSizeClamp);
float satlog(float t) { return std::atan(t * kSatGain) / kSatGain; }
}  // namespace

Head::Head(ParamStore& ps, const std::string& name,
           const std::array<int, 3>& in_channels, int num_classes)
    : num_classes_(num_classes) {
    if (num_classes < 1)
        throw std::invalid_argument("Head: need at least one class");
    mid_.reserve(3);
    out_.reserve(3);
    for (int s = 0; s < 3; ++s) {
        int c = in_channels[size_t(s)];
        std::string base = name + ".p" + std::to_string(s);
        mid_.emplace_back(ps, base + ".mid", c, c, 3);
        out_.emplace_back(ps, base + ".out", c, 5 + num_classes, 1);
        // Tame the first steps: shrink the projection and bias objectness
        // toward "empty" (sigmoid(-4.6) is about 1%), the usual detector
        // prior. Keeps lr 0.01 stable from step one.
        for (float& v : out_.back().weight()->value) v *= 0.1f;
        out_.back().bias()->value[4] = -4.6f;
    }
}

std::array<int, 3> Head::forward(Graph& g,
                                 const std::array<int, 3>& feats) const {
    std::array<int, 3> maps{};
    for (int s = 0; s < 3; ++s) {
        int m = g.silu(mid_[size_t(s)].forward(g, feats[size_t(s)]));
        maps[size_t(s)] = out_[size_t(s)].forward(g, m);
    }
    return maps;
}

std::vector<DetectionBox> decode(const Tensor& map, int stride,
                                 int num_classes, float score_thresh) {
    if (map.shape.n != 1 || map.shape.c != 5 + num_classes)
        throw ShapeError("decode: map shape " + map.shape.str() +
                         " does not match " + std::to_string(num_classes) +
                         " classes");
    std::vector<DetectionBox> out;
    for (int y = 0; y < map.shape.h; ++y) {
        for (int x = 0; x < map.shape.w; ++x) {
            int best = 0;
            for (int k = 1; k < num_classes; ++k)
                if (map.at(0, 5 + k, y, x) > map.at(0, 5 + best, y, x))
                    best = k;
            // Score is objectness alone; the class channel only picks the
            // label (sigmoid is monotone, so argmax over logits is argmax
            // over probabilities).
            float score = sigmoidf(map.at(0, 4, y, x));
            if (score < score_thresh) continue;
            DetectionBox b;
            b.cx = (sigmoidf(map.at(0, 0, y, x)) + float(x)) * float(stride);
            b.cy = (sigmoidf(map.at(0, 1, y, x)) + float(y)) * float(stride);
            b.w = std::exp(satlog(map.at(0, 2, y, x))) * float(stride);
            b.h = std::exp(satlog(map.at(0, 3, y, x))) * float(stride);
            b.class_id = best;
            b.score = score;
            out.push_back(b);
        }
    }
    return out;
}

std::vector<Assignment> assign(const std::vector<DetectionBox>& gts,
                               const std::array<Shape4, 3>& map_shapes,
                               const std::array<int, 3>& strides) {
    std::vector<Assignment> out;
    for (int i = 0; i < int(gts.size()); ++i) {
        const auto& b = gts[size_t(i)];
        double size = std::sqrt(double(b.w) * double(b.h));
        double ls = std::log(std::max(size, 1.0));
        int scale = 0;
        double best = 1e30;
        for (int s = 0; s < 3; ++s) {
            double d = std::abs(ls - std::log(2.0 * strides[size_t(s)]));
            if (d < best) {
                best = d;
                scale = s;
            }
        }
        int gw = map_shapes[size_t(scale)].w, gh = map_shapes[size_t(scale)].h;
        int cx = std::clamp(int(std::floor(b.cx / float(strides[size_t(scale)]))),
                            0, gw - 1);
        int cy = std::clamp(int(std::floor(b.cy / float(strides[size_t(scale)]))),
                            0, gh - 1);
        bool taken = false;
        for (const auto& a : out)
            if (a.scale == scale && a.cy == cy && a.cx == cx) {
                taken = true;
                break;
            }
        if (!taken) out.push_back({scale, cy, cx, i});
    }
    return out;
}

namespace {

// constant leaf holding one value per matched cell
int const_col(Graph& g, const std::vector<float>& v) {
    Tensor t(Shape4(int(v.size()), 1, 1, 1), v);
    return g.input(std::move(t));
}

int square(Graph& g, int x) { return g.mul(x, x); }

}  // namespace

LossParts build_loss(Graph& g, const std::array<int, 3>& maps,
                     const std::vector<DetectionBox>& gts,
                     const HeadConfig& cfg) {
    std::array<Shape4, 3> shapes;
    for (int s = 0; s < 3; ++s) {
        shapes[size_t(s)] = g.val(maps[size_t(s)]).shape;
        if (shapes[size_t(s)].n != 1 ||
            shapes[size_t(s)].c != 5 + cfg.num_classes)
            throw ShapeError("build_loss: map " + std::to_string(s) +
                             " has shape " + shapes[size_t(s)].str());
    }
    auto assigns = assign(gts, shapes, cfg.strides);

    // Objectness: every cell of every scale in one flat vector so the mean
    // weights each cell equally regardless of scale.
    std::array<int, 3> offs{};
    int total_cells = 0;
    for (int s = 0; s < 3; ++s) {
        offs[size_t(s)] = total_cells;
        total_cells += shapes[size_t(s)].h * shapes[size_t(s)].w;
    }
    int obj_all = -1;
    for (int s = 0; s < 3; ++s) {
        int hw = shapes[size_t(s)].h * shapes[size_t(s)].w;
        int flat = g.reshape(g.slice_c(maps[size_t(s)], 4, 1),
                             Shape4(1, hw, 1, 1));
        obj_all = (s == 0) ? flat : g.concat_c(obj_all, flat);
    }
    Tensor obj_t(Shape4(1, total_cells, 1, 1));
    for (const auto& a : assigns) {
        int idx = offs[size_t(a.scale)] + a.cy * shapes[size_t(a.scale)].w +
                  a.cx;
        obj_t.data[size_t(idx)] = 1.0f;
    }

    LossParts parts;
    parts.obj = g.bce_mean(obj_all, std::move(obj_t));
    parts.total = parts.obj;
    parts.matched = int(assigns.size());
    if (assigns.empty()) return parts;

    // Matched-cell terms, per scale, combined with weights M_s / M so the
    // result is the mean over all matched cells.
    int cls_sum = -1, box_sum = -1;
    for (int s = 0; s < 3; ++s) {
        std::vector<std::array<int, 3>> cells;
        std::vector<const DetectionBox*> matched;
        std::vector<float> cell_x, cell_y;
        for (const auto& a : assigns) {
            if (a.scale != s) continue;
            cells.push_back({0, a.cy, a.cx});
            matched.push_back(&gts[size_t(a.gt)]);
            cell_x.push_back(float(a.cx));
            cell_y.push_back(float(a.cy));
        }
        if (cells.empty()) continue;
        int m = int(cells.size());
        float frac = float(m) / float(parts.matched);
        float stride = float(cfg.strides[size_t(s)]);

        int picked = g.gather_cells(maps[size_t(s)], cells);

        Tensor cls_t(Shape4(m, cfg.num_classes, 1, 1));
        for (int i = 0; i < m; ++i)
            cls_t.at(i, matched[size_t(i)]->class_id, 0, 0) = 1.0f;
        int cls_bce =
            g.bce_mean(g.slice_c(picked, 5, cfg.num_classes), std::move(cls_t));
        int cls_part = g.scale(cls_bce, frac);
        cls_sum = (cls_sum < 0) ? cls_part : g.add(cls_sum, cls_part);

        // In-graph decode of the matched cells
        int cxp = g.scale(g.add(g.sigmoid(g.slice_c(picked, 0, 1)),
                                const_col(g, cell_x)),
                          stride);
        int cyp = g.scale(g.add(g.sigmoid(g.slice_c(picked, 1, 1)),
                                const_col(g, cell_y)),
                          stride);
        // same smooth log-size saturation the decoder applies
        int tw = g.scale(g.atan_op(g.scale(g.slice_c(picked, 2, 1), kSatGain)),
                         1.0f / kSatGain);
        int th = g.scale(g.atan_op(g.scale(g.slice_c(picked, 3, 1), kSatGain)),
                         1.0f / kSatGain);
        int wp = g.scale(g.exp_op(tw), stride);
        int hp = g.scale(g.exp_op(th), stride);

        std::vector<float> gx, gy, gw, gh, garea, gatan;
        for (const auto* b : matched) {
            gx.push_back(b->cx);
            gy.push_back(b->cy);
            gw.push_back(b->w);
            gh.push_back(b->h);
            garea.push_back(b->w * b->h);
            gatan.push_back(std::atan(b->w / b->h));
        }
        int gxc = const_col(g, gx), gyc = const_col(g, gy);
        int gwc = const_col(g, gw), ghc = const_col(g, gh);

        int ax0 = g.sub(cxp, g.scale(wp, 0.5f));
        int ax1 = g.add(cxp, g.scale(wp, 0.5f));
        int ay0 = g.sub(cyp, g.scale(hp, 0.5f));
        int ay1 = g.add(cyp, g.scale(hp, 0.5f));
        int bx0 = g.sub(gxc, g.scale(gwc, 0.5f));
        int bx1 = g.add(gxc, g.scale(gwc, 0.5f));
        int by0 = g.sub(gyc, g.scale(ghc, 0.5f));
        int by1 = g.add(gyc, g.scale(ghc, 0.5f));

        int iw = g.relu(g.sub(g.minimum(ax1, bx1), g.maximum(ax0, bx0)));
        int ih = g.relu(g.sub(g.minimum(ay1, by1), g.maximum(ay0, by0)));
        int inter = g.mul(iw, ih);
        int uni = g.sub(g.add(g.mul(wp, hp), const_col(g, garea)), inter);
        int iou_g = g.div(inter, g.affine(uni, 1.0f, 1e-7f));

        int rho2 = g.add(square(g, g.sub(cxp, gxc)),
                         square(g, g.sub(cyp, gyc)));
        int cw = g.sub(g.maximum(ax1, bx1), g.minimum(ax0, bx0));
        int ch = g.sub(g.maximum(ay1, by1), g.minimum(ay0, by0));
        int c2 = g.affine(g.add(square(g, cw), square(g, ch)), 1.0f, 1e-7f);

        // aspect term; the balance factor alpha stays inside the graph
        float k4pi2 = float(4.0 / (M_PI * M_PI));
        int dng = g.sub(const_col(g, gatan), g.atan_op(g.div(wp, hp)));
        int v = g.scale(square(g, dng), k4pi2);
        int alpha = g.div(v, g.affine(g.sub(v, iou_g), 1.0f, 1.0f + 1e-7f));

        int ciou = g.sub(g.sub(iou_g, g.div(rho2, c2)), g.mul(alpha, v));
        int box_part =
            g.scale(g.mean_all(g.affine(ciou, -1.0f, 1.0f)), frac);
        box_sum = (box_sum < 0) ? box_part : g.add(box_sum, box_part);
    }

    parts.cls = cls_sum;
    parts.box = box_sum;
    parts.total = g.add(parts.total, g.scale(cls_sum, cfg.w_cls));
    parts.total = g.add(parts.total, g.scale(box_sum, cfg.w_box));
    return parts;
}

std::vector<DetectionBox> nms(std::vector<DetectionBox> boxes,
                              float iou_thresh, float score_thresh) {
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return boxes[size_t(a)].score > boxes[size_t(b)].score;
    });
    std::vector<DetectionBox> kept;
    for (int idx : order) {
        const auto& b = boxes[size_t(idx)];
        if (b.score < score_thresh) continue;
        bool ok = true;
        for (const auto& k : kept) {
            if (k.class_id == b.class_id && iou(k, b) >= iou_thresh) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(b);
    }
    return kept;
}

EvalReport evaluate_map50(const std::vector<std::vector<DetectionBox>>& preds,
                          const std::vector<std::vector<DetectionBox>>& gts,
                          int num_classes) {
    if (preds.size() != gts.size())
        throw std::invalid_argument(
            "evaluate_map50: prediction and truth image counts differ");
    EvalReport rep;
    rep.per_class_ap.assign(size_t(num_classes), 0.0);
    rep.per_class_gt.assign(size_t(num_classes), 0);
    for (const auto& img : gts)
        for (const auto& b : img) {
            if (b.class_id < 0 || b.class_id >= num_classes)
                throw std::invalid_argument(
                    "evaluate_map50: truth class id out of range");
            ++rep.per_class_gt[size_t(b.class_id)];
        }

    int classes_with_gt = 0;
    double ap_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        if (rep.per_class_gt[size_t(c)] == 0) continue;
        ++classes_with_gt;

        struct Pred {
            const DetectionBox* box;
            int image;
            int index;  // global insertion order, the documented tie-break
        };
        std::vector<Pred> flat;
        int running = 0;
        for (int img = 0; img < int(preds.size()); ++img)
            for (const auto& b : preds[size_t(img)]) {
                if (b.class_id == c) flat.push_back({&b, img, running});
                ++running;
            }
        std::sort(flat.begin(), flat.end(), [](const Pred& a, const Pred& b) {
            if (a.box->score != b.box->score)
                return a.box->score > b.box->score;
            return a.index < b.index;
        });

        std::vector<std::vector<bool>> used(gts.size());
        for (size_t i = 0; i < gts.size(); ++i)
            used[i].assign(gts[i].size(), false);

        int tp = 0, fp = 0;
        std::vector<double> precision, recall;
        for (const auto& p : flat) {
            const DetectionBox* pb = p.box;
            double best_iou = 0.0;
            int best_gt = -1;
            const auto& truth = gts[size_t(p.image)];
            for (int gi = 0; gi < int(truth.size()); ++gi) {
                if (truth[size_t(gi)].class_id != c || used[size_t(p.image)][size_t(gi)])
                    continue;
                double v = iou(*pb, truth[size_t(gi)]);
                if (v > best_iou) {
                    best_iou = v;
                    best_gt = gi;
                }
            }
            if (best_gt >= 0 && best_iou >= 0.5) {
                used[size_t(p.image)][size_t(best_gt)] = true;
                ++tp;
            } else {
                ++fp;
            }
            precision.push_back(double(tp) / double(tp + fp));
            recall.push_back(double(tp) / double(rep.per_class_gt[size_t(c)]));
        }

        // exact area under the monotone precision envelope
        double ap = 0.0;
        double prev_r = 0.0;
        for (size_t i = 0; i < precision.size(); ++i) {
            double pmax = 0.0;
            for (size_t j = i; j < precision.size(); ++j)
                pmax = std::max(pmax, precision[j]);
            ap += (recall[i] - prev_r) * pmax;
            prev_r = recall[i];
        }
        rep.per_class_ap[size_t(c)] = ap;
        ap_sum += ap;
    }
    rep.map50 = classes_with_gt > 0 ? ap_sum / classes_with_gt : 0.0;
    return rep;
}

std::string format_report(const EvalReport& r) {
    std::ostringstream os;
    os << "map50: " << r.map50 << "\n";
    os << "classes: " << r.per_class_ap.size() << "\n";
    for (size_t c = 0; c < r.per_class_ap.size(); ++c)
        os << "class " << c << ": ap " << r.per_class_ap[c] << " gt "
           << r.per_class_gt[c] << "\n";
    os << "params_bytes: " << r.params_bytes << "\n";
    os << "images_per_s: " << r.images_per_s << "\n";
    return os.str();
}

}  // namespace msdet::detect
