#include "msdet/mepf.hpp"

#include <stdexcept>

namespace msdet::mepf {

MaskGenerator::MaskGenerator(ParamStore& ps, const std::string& name)
    : c1_(ps, name + ".conv1", 3, 3, 3), c2_(ps, name + ".conv2", 3, 3, 3) {}

int MaskGenerator::forward(Graph& g, int x) const {
    return g.sigmoid(c2_.forward(g, g.relu(c1_.forward(g, x))));
}

MepfFusion::MepfFusion(ParamStore& ps, const std::string& name)
    : mg_rgb_(ps, name + ".maskgen_rgb"),
      mg_ir_(ps, name + ".maskgen_ir"),
      conv_rgb_(ps, name + ".fuse_rgb", 3, 3, 3),
      conv_ir_(ps, name + ".fuse_ir", 3, 3, 3),
      fc1_(ps, name + ".fc1", 6, 3),
      fc2_(ps, name + ".fc2", 3, 6) {}

std::pair<int, int> MepfFusion::split(Graph& g, int x_in) {
    if (g.val(x_in).shape.c != 6)
        throw ShapeError("mepf split: channel axis must be exactly 6, got " +
                         std::to_string(g.val(x_in).shape.c));
    return {g.slice_c(x_in, 0, 3), g.slice_c(x_in, 3, 3)};
}

int MepfFusion::fuse_rgb(Graph& g, int x, int mask) const {
    return conv_rgb_.forward(g, g.add(x, g.mul(x, mask)));
}

int MepfFusion::fuse_ir(Graph& g, int x, int mask) const {
    return conv_ir_.forward(g, g.add(x, g.mul(x, mask)));
}

int MepfFusion::modal_factor(Graph& g, int x_out_rgb, int x_out_ir) const {
    const int pooled = g.global_avg_pool(g.concat_c(x_out_rgb, x_out_ir));
    return g.sigmoid(fc2_.forward(g, g.relu(fc1_.forward(g, pooled))));
}

int MepfFusion::forward(Graph& g, int x_in, bool registered) const {
    if (!registered)
        throw std::runtime_error(
            "mepf: input pair is not flagged pixel-registered; fusion "
            "requires aligned modalities");
    auto [rgb, ir] = split(g, x_in);
    const int xo_rgb = fuse_rgb(g, rgb, mask_rgb(g, rgb));
    const int xo_ir = fuse_ir(g, ir, mask_ir(g, ir));
    const int cat = g.concat_c(xo_rgb, xo_ir);
    return g.mul_channel(cat, modal_factor(g, xo_rgb, xo_ir));
}

std::int64_t expected_param_count() {
    const auto conv = [](int cin, int cout, int k) {
        return std::int64_t(cout) * cin * k * k + cout;
    };
    const auto fc = [](int in, int out) { return std::int64_t(out) * in + out; };
    // two mask generators, two fuse convs, the two modal-factor FCs
    return 2 * (conv(3, 3, 3) + conv(3, 3, 3)) + 2 * conv(3, 3, 3) +
           fc(6, 3) + fc(3, 6);
}

}  // namespace msdet::mepf
