#include "msdet/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace msdet::blocks {

InputProjection::InputProjection(ParamStore& ps, const std::string& name,
                                 int c)
    : conv_(ps, name + ".conv", c, c, 1, 1, 0, 1, /*bias=*/false),
      bn_(ps, name + ".bn", c) {}

int InputProjection::forward(Graph& g, int x) {
    return g.silu(bn_.forward(g, conv_.forward(g, x)));
}

EstdBlock::EstdBlock(ParamStore& ps, const std::string& name, int c)
    : c1_(ps, name + ".c1", c, c, 1, 1, 0, 1, /*bias=*/false),
      c2_(ps, name + ".c2", c, c, 1),
      c3_(ps, name + ".c3", c, c, 1),
      bn_(ps, name + ".bn", c),
      se_(ps, name + ".se", c) {}

int EstdBlock::forward(Graph& g, int x) {
    int y = bn_.forward(g, c1_.forward(g, x));
    y = se_.forward(g, y);
    y = g.gelu(c2_.forward(g, y));
    return c3_.forward(g, y);
}

namespace {
int bottleneck_width(int c) { return c >= 4 ? c / 4 : 1; }
}  // namespace

CargBlock::CargBlock(ParamStore& ps, const std::string& name, int c,
                     int spatial_kernel)
    : dw_(ps, name + ".dw", c, c, 3, 1, 1, /*groups=*/c),
      pw_(ps, name + ".pw", c, c, 1),
      avg1_(ps, name + ".ca_avg1", c, bottleneck_width(c), 1),
      avg2_(ps, name + ".ca_avg2", bottleneck_width(c), c, 1),
      max1_(ps, name + ".ca_max1", c, bottleneck_width(c), 1),
      max2_(ps, name + ".ca_max2", bottleneck_width(c), c, 1),
      spatial_(ps, name + ".sa", 2, 1, spatial_kernel, 1, spatial_kernel / 2) {
    if (spatial_kernel != 1 && spatial_kernel != 3 && spatial_kernel != 7) {
        throw std::invalid_argument(
            "CargBlock: spatial_kernel must be 1, 3 or 7, got " +
            std::to_string(spatial_kernel));
    }
}

CargGates CargBlock::forward_with_gates(Graph& g, int x) const {
    CargGates gates;
    gates.x_dw = pw_.forward(g, dw_.forward(g, x));

    int avg_desc = g.global_avg_pool(gates.x_dw);
    int max_desc = g.adaptive_max_pool(gates.x_dw);
    int avg_out = avg2_.forward(g, g.relu(avg1_.forward(g, avg_desc)));
    int max_out = max2_.forward(g, g.relu(max1_.forward(g, max_desc)));
    gates.channel = g.sigmoid(g.mul(avg_out, max_out));
    gates.x_ca = g.mul_channel(gates.x_dw, gates.channel);

    int pooled = g.concat_c(g.channel_mean(gates.x_ca),
                            g.channel_max(gates.x_ca));
    gates.spatial = g.sigmoid(spatial_.forward(g, pooled));
    int gated = g.mul_spatial(gates.x_ca, gates.spatial);

    gates.out = g.add(gated, x);
    return gates;
}

int CargBlock::forward(Graph& g, int x) const {
    return forward_with_gates(g, x).out;
}

EstvssBlock::EstvssBlock(ParamStore& ps, const std::string& name, int c,
                         int state_dim, int spatial_kernel, bool use_estd,
                         bool use_carg)
    : proj_(ps, name + ".proj", c), ss2d_(ps, name + ".ss2d", c, state_dim),
      scan_bn_(ps, name + ".scan_bn", c) {
    if (use_estd) estd_.emplace(ps, name + ".estd", c);
    if (use_carg) carg_.emplace(ps, name + ".carg", c, spatial_kernel);
}

int EstvssBlock::forward(Graph& g, int x) {
    int p = proj_.forward(g, x);
    int merged = scan_bn_.forward(g, ss2d_.forward(g, p));
    if (estd_) merged = g.add(merged, estd_->forward(g, p));
    int gated = carg_ ? carg_->forward(g, merged) : merged;
    return g.add(gated, x);
}

VisionClueMerge::VisionClueMerge(ParamStore& ps, const std::string& name,
                                 int cin)
    : proj_(ps, name + ".proj", 4 * cin, 2 * cin, 1, 1, 0, 1, /*bias=*/false) {}

int VisionClueMerge::forward(Graph& g, int x) const {
    return proj_.forward(g, g.space_to_depth(x));
}

int BackboneConfig::blocks_at(int stage) const {
    int n = static_cast<int>(std::lround(depth_scale * base_blocks[stage]));
    return n < 1 ? 1 : n;
}

int BackboneConfig::channels_at(int stage) const {
    return static_cast<int>(std::lround(width_scale * base_channels[stage]));
}

void BackboneConfig::validate() const {
    if (!(depth_scale > 0.0f) || depth_scale > 1.0f ||
        !(width_scale > 0.0f) || width_scale > 1.0f) {
        throw std::invalid_argument("BackboneConfig: scales must be in (0,1]");
    }
    for (int s = 0; s < 4; ++s) {
        int c = channels_at(s);
        if (c < 4 || c % 2 != 0) {
            throw std::invalid_argument(
                "BackboneConfig: stage " + std::to_string(s) + " channels " +
                std::to_string(c) + " (need even, >= 4)");
        }
        // VisionClueMerge always doubles channels, so the plan must too.
        if (s > 0 && c != 2 * channels_at(s - 1)) {
            throw std::invalid_argument(
                "BackboneConfig: stage " + std::to_string(s) + " channels " +
                std::to_string(c) + " must double stage " +
                std::to_string(s - 1));
        }
    }
    if (state_dim < 1 || state_dim > 64) {
        throw std::invalid_argument("BackboneConfig: state_dim out of range");
    }
}

namespace {
BackboneConfig validated(const BackboneConfig& cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

Backbone::Backbone(ParamStore& ps, const std::string& name,
                   const BackboneConfig& cfg)
    : cfg_(validated(cfg)),
      stem1_(ps, name + ".stem1", 6, cfg_.channels_at(0) / 2, 3, 2, 1, 1,
             /*bias=*/false),
      stem2_(ps, name + ".stem2", cfg_.channels_at(0) / 2, cfg_.channels_at(0),
             3, 2, 1, 1, /*bias=*/false),
      sbn1_(ps, name + ".stem1_bn", cfg_.channels_at(0) / 2),
      sbn2_(ps, name + ".stem2_bn", cfg_.channels_at(0)) {
    for (int s = 0; s < 4; ++s) {
        int c = cfg_.channels_at(s);
        int n = cfg_.blocks_at(s);
        stages_[s].reserve(static_cast<size_t>(n));
        for (int b = 0; b < n; ++b) {
            stages_[s].emplace_back(
                ps, name + ".s" + std::to_string(s) + "b" + std::to_string(b),
                c, cfg_.state_dim, cfg_.spatial_kernel, cfg_.use_estd,
                cfg_.use_carg);
        }
        if (s < 3) {
            merges_.emplace_back(ps, name + ".merge" + std::to_string(s), c);
        }
    }
}

std::array<int, 3> Backbone::forward(Graph& g, int x) {
    x = g.silu(sbn1_.forward(g, stem1_.forward(g, x)));
    x = g.silu(sbn2_.forward(g, stem2_.forward(g, x)));

    std::array<int, 3> outs{};
    for (int s = 0; s < 4; ++s) {
        for (auto& block : stages_[s]) x = block.forward(g, x);
        if (s >= 1) outs[static_cast<size_t>(s - 1)] = x;
        if (s < 3) x = merges_[static_cast<size_t>(s)].forward(g, x);
    }
    return outs;
}

std::array<int, 3> Backbone::out_channels() const {
    return {cfg_.channels_at(1), cfg_.channels_at(2), cfg_.channels_at(3)};
}

}  // namespace msdet::blocks
