// Command-line front end: dataset generation, fusion diagnostics, training,
// evaluation, gradient checking, the scan-vs-attention benchmark, and
// detection overlays. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msdet/checkpoint.hpp"
#include "msdet/config.hpp"
#include "msdet/data.hpp"
#include "msdet/detect.hpp"
#include "msdet/gradcheck.hpp"
#include "msdet/kernels.hpp"
#include "msdet/mepf.hpp"
#include "msdet/model.hpp"
#include "msdet/ppm.hpp"
#include "msdet/ssm.hpp"
#include "msdet/train.hpp"

namespace fs = std::filesystem;
using namespace msdet;

namespace {

// Every command announces the options it actually runs with.
void print_resolved(const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
    std::cout << "resolved config:\n  command = " << command << "\n";
    for (const auto& [k, v] : kv) std::cout << "  " << k << " = " << v << "\n";
}

std::string fstr(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// One-plane (1,1,h,w) tensor to a grayscale image, clamped to [0,1].
ppm::Image gray_image(const Tensor& t) {
    ppm::Image img(t.shape.w, t.shape.h);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float v = std::clamp(t.at(0, 0, y, x), 0.0f, 1.0f);
            auto b = static_cast<unsigned char>(std::lround(v * 255.0f));
            img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = b;
        }
    return img;
}

// Channel-mean of a feature map rescaled to span [0,1], for stage heatmaps.
ppm::Image heatmap_image(const Tensor& feat) {
    Tensor plane(Shape4(1, 1, feat.shape.h, feat.shape.w));
    float lo = 1e30f, hi = -1e30f;
    for (int y = 0; y < feat.shape.h; ++y)
        for (int x = 0; x < feat.shape.w; ++x) {
            float acc = 0.0f;
            for (int c = 0; c < feat.shape.c; ++c) acc += feat.at(0, c, y, x);
            acc /= float(feat.shape.c);
            plane.at(0, 0, y, x) = acc;
            lo = std::min(lo, acc);
            hi = std::max(hi, acc);
        }
    float span = hi - lo;
    if (span < 1e-12f) span = 1.0f;
    for (float& v : plane.data) v = (v - lo) / span;
    return gray_image(plane);
}

// ---- gen-data ----

struct GenOpts {
    int n = 0;
    int size = 128;
    std::uint64_t seed = 0;
    std::string out;
    int classes = 3;
    float density = 1.0f;
    float clutter = 0.5f;
    int illumination = -1;
    bool big_targets = false;
};

int run_gen(const GenOpts& o) {
    data::SceneSpec spec;
    spec.size = o.size;
    spec.num_classes = o.classes;
    spec.density = o.density;
    spec.clutter_density = o.clutter;
    spec.illumination = o.illumination;
    spec.small_targets = !o.big_targets;
    print_resolved("gen-data",
                   {{"n", std::to_string(o.n)},
                    {"size", std::to_string(o.size)},
                    {"seed", std::to_string(o.seed)},
                    {"out", o.out},
                    {"classes", std::to_string(o.classes)},
                    {"density", fstr(o.density)},
                    {"clutter_density", fstr(o.clutter)},
                    {"illumination", std::to_string(o.illumination)},
                    {"small_targets", spec.small_targets ? "1" : "0"}});
    data::generate_dataset(o.out, o.n, spec, o.seed);
    std::cout << "wrote " << o.n << " scenes to " << o.out << "\n";
    return 0;
}

// ---- fuse ----

struct FuseOpts {
    std::string rgb, ir, out, ckpt;
};

int run_fuse(const FuseOpts& o) {
    print_resolved("fuse", {{"rgb", o.rgb},
                            {"ir", o.ir},
                            {"out", o.out},
                            {"ckpt", o.ckpt.empty() ? "(fresh weights)" : o.ckpt}});
    Tensor rgb = ppm::to_tensor(ppm::read(o.rgb));
    Tensor ir = ppm::to_tensor(ppm::read(o.ir));

    ParamStore store(0);
    mepf::MepfFusion fusion(store, "mepf");
    if (!o.ckpt.empty()) checkpoint::load(store, o.ckpt);

    Graph g(Mode::kEval);
    int x = g.input(stack_rgb_ir(rgb, ir));
    auto [xr, xi] = mepf::MepfFusion::split(g, x);
    int mr = fusion.mask_rgb(g, xr);
    int mi = fusion.mask_ir(g, xi);
    int fr = fusion.fuse_rgb(g, xr, mr);
    int fi = fusion.fuse_ir(g, xi, mi);
    int mf = fusion.modal_factor(g, fr, fi);
    int fused = g.mul_channel(g.concat_c(fr, fi), mf);

    fs::create_directories(o.out);
    // Mask heatmaps: channel-mean to one plane, gray value = mask strength.
    Graph gs(Mode::kEval);
    ppm::write(gray_image(g.val(g.channel_mean(mr))), o.out + "/mask_rgb.ppm");
    ppm::write(gray_image(g.val(g.channel_mean(mi))), o.out + "/mask_ir.ppm");
    // Each fused channel as its own grayscale image, plus an RGB preview of
    // the first three.
    int f6 = gs.input(g.val(fused));
    for (int c = 0; c < 6; ++c)
        ppm::write(gray_image(gs.val(gs.slice_c(f6, c, 1))),
                   o.out + "/fused_c" + std::to_string(c) + ".ppm");
    ppm::write(ppm::from_tensor(gs.val(gs.slice_c(f6, 0, 3))),
               o.out + "/preview.ppm");
    {
        std::ofstream os(o.out + "/modal_factor.txt");
        const Tensor& m = g.val(mf);
        for (int c = 0; c < 6; ++c) os << m.data[size_t(c)] << "\n";
    }
    std::cout << "wrote masks, fused channels and modal factor to " << o.out
              << "\n";
    return 0;
}

// ---- train / eval shared model plumbing ----

struct ModelFileConfig {
    ModelConfig model;
    train::TrainConfig tcfg;
};

ModelFileConfig config_from(config::Config& cfg, const std::string& ablation_flag) {
    ModelFileConfig out;
    out.tcfg.lr = cfg.get_float("lr", 0.01f);
    out.tcfg.momentum = cfg.get_float("momentum", 0.937f);
    out.tcfg.weight_decay = cfg.get_float("weight_decay", 0.0005f);
    out.tcfg.batch = cfg.get_int("batch", 8);
    out.tcfg.epochs = cfg.get_int("epochs", 50);
    out.tcfg.seed = std::uint64_t(cfg.get_int("seed", 0));
    out.tcfg.max_steps = cfg.get_int("max_steps", 0);
    out.tcfg.warmup_steps = cfg.get_int("warmup_steps", 50);
    out.tcfg.grad_clip = cfg.get_float("grad_clip", 10.0f);
    out.tcfg.cosine = cfg.get_int("cosine", 1) != 0;
    out.tcfg.lr_final_frac = cfg.get_float("lr_final_frac", 0.05f);

    out.model.num_classes = cfg.get_int("num_classes", 3);
    std::string ab = cfg.get_str("ablation", "full");
    if (!ablation_flag.empty()) ab = ablation_flag;
    out.model.ablation = parse_ablation(ab);
    out.model.backbone.state_dim = cfg.get_int("state_dim", 8);
    out.model.backbone.spatial_kernel = cfg.get_int("spatial_kernel", 1);
    out.model.backbone.depth_scale = cfg.get_float("depth_scale", 0.33f);
    out.model.backbone.width_scale = cfg.get_float("width_scale", 0.25f);
    out.model.head.w_box = cfg.get_float("w_box", 5.0f);
    out.model.head.w_cls = cfg.get_float("w_cls", 1.0f);
    out.model.head.score_thresh = cfg.get_float("score_thresh", 0.25f);
    out.model.head.nms_iou = cfg.get_float("nms_iou", 0.5f);

    auto unused = cfg.unused_keys();
    if (!unused.empty()) {
        std::string msg = "config: unknown key(s):";
        for (const auto& k : unused) msg += " " + k;
        throw std::runtime_error(msg);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> describe(
    const ModelFileConfig& c) {
    return {{"ablation", ablation_name(c.model.ablation)},
            {"num_classes", std::to_string(c.model.num_classes)},
            {"state_dim", std::to_string(c.model.backbone.state_dim)},
            {"spatial_kernel", std::to_string(c.model.backbone.spatial_kernel)},
            {"depth_scale", fstr(c.model.backbone.depth_scale)},
            {"width_scale", fstr(c.model.backbone.width_scale)},
            {"lr", fstr(c.tcfg.lr)},
            {"momentum", fstr(c.tcfg.momentum)},
            {"weight_decay", fstr(c.tcfg.weight_decay)},
            {"batch", std::to_string(c.tcfg.batch)},
            {"epochs", std::to_string(c.tcfg.epochs)},
            {"max_steps", std::to_string(c.tcfg.max_steps)},
            {"warmup_steps", std::to_string(c.tcfg.warmup_steps)},
            {"grad_clip", fstr(c.tcfg.grad_clip)},
            {"seed", std::to_string(c.tcfg.seed)},
            {"w_box", fstr(c.model.head.w_box)},
            {"w_cls", fstr(c.model.head.w_cls)},
            {"score_thresh", fstr(c.model.head.score_thresh)},
            {"nms_iou", fstr(c.model.head.nms_iou)}};
}

// The checkpoint's sidecar records what is needed to rebuild the matching
// model before loading weights.
void write_meta(const std::string& ckpt_path, const ModelConfig& m) {
    std::ofstream os(ckpt_path + ".meta");
    if (!os)
        throw std::runtime_error("cannot write " + ckpt_path + ".meta");
    os << "# model layout for " << fs::path(ckpt_path).filename().string()
       << "\n";
    os << "ablation = " << ablation_name(m.ablation) << "\n";
    os << "num_classes = " << m.num_classes << "\n";
    os << "state_dim = " << m.backbone.state_dim << "\n";
    os << "spatial_kernel = " << m.backbone.spatial_kernel << "\n";
    os << "depth_scale = " << m.backbone.depth_scale << "\n";
    os << "width_scale = " << m.backbone.width_scale << "\n";
}

Model model_from_ckpt(const std::string& ckpt_path) {
    auto meta = config::Config::from_file(ckpt_path + ".meta");
    ModelConfig mc;
    mc.ablation = parse_ablation(meta.get_str("ablation", "full"));
    mc.num_classes = meta.get_int("num_classes", 3);
    mc.backbone.state_dim = meta.get_int("state_dim", 8);
    mc.backbone.spatial_kernel = meta.get_int("spatial_kernel", 1);
    mc.backbone.depth_scale = meta.get_float("depth_scale", 0.33f);
    mc.backbone.width_scale = meta.get_float("width_scale", 0.25f);
    Model model(0, mc);
    checkpoint::load(model.store(), ckpt_path);
    return model;
}

std::vector<data::Sample> load_dataset(const std::string& root) {
    auto dirs = data::list_scene_dirs(root);
    if (dirs.empty())
        throw std::runtime_error("no scene directories under " + root);
    std::vector<data::Sample> samples;
    samples.reserve(dirs.size());
    for (const auto& d : dirs) samples.push_back(data::load_scene(d));
    return samples;
}

// ---- train ----

struct TrainOpts {
    std::string data, cfg, out, ablation, log;
};

int run_train(const TrainOpts& o) {
    auto cfg_file = config::Config::from_file(o.cfg);
    auto c = config_from(cfg_file, o.ablation);
    auto kv = describe(c);
    kv.insert(kv.begin(), {{"data", o.data}, {"cfg", o.cfg}, {"out", o.out}});
    std::string log_path = o.log.empty() ? o.out + ".log.csv" : o.log;
    kv.push_back({"log", log_path});
    print_resolved("train", kv);

    auto samples = load_dataset(o.data);
    std::cout << "loaded " << samples.size() << " scenes\n";

    Model model(c.tcfg.seed, c.model);
    std::cout << "trainable parameters: " << model.store().count_trainable()
              << "\n";
    auto result =
        train::train_model(model, samples, c.tcfg, log_path, &std::cout);
    checkpoint::save(model.store(), o.out);
    write_meta(o.out, model.config());
    std::cout << "steps: " << result.steps << "\n";
    if (!result.epoch_loss.empty())
        std::cout << "final epoch loss: " << result.epoch_loss.back() << "\n";
    std::cout << "saved checkpoint to " << o.out << "\n";
    return 0;
}

// ---- eval ----

struct EvalOpts {
    std::string ckpt, data;
};

int run_eval(const EvalOpts& o) {
    print_resolved("eval", {{"ckpt", o.ckpt}, {"data", o.data}});
    Model model = model_from_ckpt(o.ckpt);
    auto samples = load_dataset(o.data);
    auto rep = train::evaluate_model(model, samples);
    std::cout << detect::format_report(rep);
    if (model.has_fusion()) {
        std::int64_t mepf_params = model.store().count_matching("mepf.");
        std::cout << "mepf_params: " << mepf_params << "\n";
        std::cout << "mepf_delta_vs_reference_1650: " << (mepf_params - 1650)
                  << "\n";
    }
    return 0;
}

// ---- gradcheck ----

struct GcOpts {
    std::string module = "all";
};

Tensor random_input(Shape4 s, std::uint64_t seed) {
    std::mt19937 rng(static_cast<unsigned>(seed));
    std::uniform_real_distribution<float> uf(-1.0f, 1.0f);
    Tensor t(s);
    for (auto& v : t.data) v = uf(rng);
    return t;
}

Tensor random_weights(Shape4 s, std::uint64_t seed) {
    std::mt19937 rng(static_cast<unsigned>(seed));
    std::uniform_real_distribution<float> uf(0.1f, 1.0f);
    Tensor t(s);
    for (auto& v : t.data) v = uf(rng);
    return t;
}

struct GcOutcome {
    std::string name;
    double max_rel_err;
    bool pass;
};

template <typename BuildModule>
GcOutcome gradcheck_module(const std::string& name, Shape4 input_shape,
                           BuildModule&& make_forward, double tol = 1e-3) {
    ParamStore store(7);
    auto forward = make_forward(store);
    Tensor x = random_input(input_shape, 11);

    std::vector<Parameter*> params;
    for (const auto& p : store.all())
        if (p->trainable) params.push_back(p.get());

    auto build_params = [&](Graph& g) {
        int out = forward(g, g.input(x));
        return g.weighted_sum(out, random_weights(g.val(out).shape, 13));
    };
    auto r1 = gradcheck::check_params(build_params, params);

    auto build_inputs = [&](Graph& g, const std::vector<int>& ins) {
        int out = forward(g, ins[0]);
        return g.weighted_sum(out, random_weights(g.val(out).shape, 13));
    };
    auto r2 = gradcheck::check_inputs(build_inputs, {x});

    double err = std::max(r1.max_rel_err, r2.max_rel_err);
    return {name, err, err < tol};
}

int run_gradcheck(const GcOpts& o) {
    print_resolved("gradcheck", {{"module", o.module}});
    std::vector<GcOutcome> results;
    bool want_all = o.module == "all";

    if (want_all || o.module == "mepf") {
        results.push_back(gradcheck_module(
            "mepf", Shape4(1, 6, 8, 8), [](ParamStore& ps) {
                auto fusion = std::make_shared<mepf::MepfFusion>(ps, "mepf");
                return [fusion](Graph& g, int x) {
                    return fusion->forward(g, x);
                };
            }));
    }
    if (want_all || o.module == "estd") {
        results.push_back(gradcheck_module(
            "estd", Shape4(1, 8, 6, 6), [](ParamStore& ps) {
                auto block = std::make_shared<blocks::EstdBlock>(ps, "estd", 8);
                return [block](Graph& g, int x) {
                    return block->forward(g, x);
                };
            }));
    }
    if (want_all || o.module == "carg") {
        results.push_back(gradcheck_module(
            "carg", Shape4(1, 8, 6, 6), [](ParamStore& ps) {
                auto block =
                    std::make_shared<blocks::CargBlock>(ps, "carg", 8, 3);
                return [block](Graph& g, int x) {
                    return block->forward(g, x);
                };
            }));
    }
    if (want_all || o.module == "ss2d") {
        results.push_back(gradcheck_module(
            "ss2d", Shape4(1, 4, 5, 6), [](ParamStore& ps) {
                auto core = std::make_shared<ssm::Ss2dCore>(ps, "ss2d", 4, 8);
                return [core](Graph& g, int x) {
                    return core->forward(g, x);
                };
            }));
    }
    if (results.empty())
        throw std::runtime_error("gradcheck: unknown module " + o.module);

    bool ok = true;
    for (const auto& r : results) {
        std::cout << r.name << ": max_rel_err " << r.max_rel_err << " "
                  << (r.pass ? "pass" : "FAIL") << "\n";
        ok = ok && r.pass;
    }
    if (!ok) throw std::runtime_error("gradcheck: tolerance exceeded");
    return 0;
}

// ---- bench-scan ----

struct BenchOpts {
    std::string lengths = "256,1024,4096,16384";
    std::string csv;
};

std::vector<int> parse_lengths(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        int v = std::stoi(tok);
        if (v < 2) throw std::runtime_error("bench-scan: length must be >= 2");
        out.push_back(v);
    }
    if (out.empty()) throw std::runtime_error("bench-scan: no lengths given");
    return out;
}

double time_ns(const std::function<void()>& fn, double min_total_s) {
    // median of repeated timings, repeats sized to the budget
    fn();  // warm-up
    std::vector<double> ns;
    auto t_begin = std::chrono::steady_clock::now();
    for (int i = 0; i < 25; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        ns.push_back(
            std::chrono::duration<double, std::nano>(t1 - t0).count());
        double total =
            std::chrono::duration<double>(t1 - t_begin).count();
        if (i >= 2 && total > min_total_s) break;
    }
    std::sort(ns.begin(), ns.end());
    return ns[ns.size() / 2];
}

int run_bench(const BenchOpts& o) {
    auto lengths = parse_lengths(o.lengths);
    print_resolved("bench-scan",
                   {{"lengths", o.lengths},
                    {"csv", o.csv.empty() ? "(stdout only)" : o.csv}});

    const int c = 8, s = 8;
    ParamStore store(3);
    ssm::AttentionRef attn(store, "attn", c);

    std::ostringstream csv;
    csv << "tokens,ss2d_ns,attention_ns\n";
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> uf(-1.0f, 1.0f);
    for (int l : lengths) {
        Tensor u(Shape4(1, c, l, 1)), delta(Shape4(1, c, l, 1));
        Tensor b(Shape4(1, s, l, 1)), cc(Shape4(1, s, l, 1));
        Tensor a(Shape4(c, s, 1, 1));
        for (auto& v : u.data) v = uf(rng);
        for (auto& v : delta.data) v = 0.1f + 0.5f * (uf(rng) + 1.0f);
        for (auto& v : b.data) v = uf(rng);
        for (auto& v : cc.data) v = uf(rng);
        for (auto& v : a.data) v = -0.2f - (uf(rng) + 1.0f);
        std::vector<float> hbuf(size_t(c) * s * l);
        Tensor tokens(Shape4(l, c, 1, 1));
        for (auto& v : tokens.data) v = uf(rng);

        kernels::ScanDims dims{1, c, l, s};
        std::vector<float> ybuf(size_t(c) * l);
        double scan_ns = time_ns(
            [&] {
                kernels::scan_forward(u.data.data(), delta.data.data(),
                                      b.data.data(), cc.data.data(),
                                      a.data.data(), dims, ybuf.data(),
                                      hbuf.data());
            },
            0.3);
        double attn_ns = time_ns([&] { (void)attn.forward(tokens); }, 0.3);
        csv << l << "," << std::llround(scan_ns) << ","
            << std::llround(attn_ns) << "\n";
        std::cout << "L=" << l << " scan " << std::llround(scan_ns)
                  << " ns, attention " << std::llround(attn_ns) << " ns\n";
    }
    if (!o.csv.empty()) {
        std::ofstream os(o.csv);
        if (!os) throw std::runtime_error("bench-scan: cannot write " + o.csv);
        os << csv.str();
        std::cout << "wrote " << o.csv << "\n";
    }
    return 0;
}

// ---- viz ----

struct VizOpts {
    std::string ckpt, image, out;
};

void draw_box(ppm::Image& img, const DetectionBox& b) {
    static const unsigned char palette[5][3] = {{255, 64, 64},
                                                {64, 128, 255},
                                                {64, 220, 96},
                                                {240, 220, 64},
                                                {220, 96, 240}};
    const unsigned char* col = palette[b.class_id % 5];
    int x0 = std::max(0, int(std::lround(b.cx - b.w / 2)));
    int x1 = std::min(img.w - 1, int(std::lround(b.cx + b.w / 2)));
    int y0 = std::max(0, int(std::lround(b.cy - b.h / 2)));
    int y1 = std::min(img.h - 1, int(std::lround(b.cy + b.h / 2)));
    for (int x = x0; x <= x1; ++x)
        for (int y : {y0, y1})
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
    for (int y = y0; y <= y1; ++y)
        for (int x : {x0, x1})
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
}

int run_viz(const VizOpts& o) {
    print_resolved("viz",
                   {{"ckpt", o.ckpt}, {"image", o.image}, {"out", o.out}});
    // accept a scene directory or a direct rgb.ppm with sibling ir.ppm
    std::string rgb_path, ir_path;
    if (fs::is_directory(o.image)) {
        rgb_path = o.image + "/rgb.ppm";
        ir_path = o.image + "/ir.ppm";
    } else {
        rgb_path = o.image;
        ir_path = (fs::path(o.image).parent_path() / "ir.ppm").string();
    }
    Model model = model_from_ckpt(o.ckpt);
    ppm::Image rgb_img = ppm::read(rgb_path);
    ppm::Image ir_img = ppm::read(ir_path);
    auto boxes =
        model.predict(ppm::to_tensor(rgb_img), ppm::to_tensor(ir_img));

    fs::create_directories(o.out);
    {
        // Per-stage channel-mean heatmaps of the backbone features.
        Graph g(Mode::kEval);
        int x6 = g.input(
            stack_rgb_ir(ppm::to_tensor(rgb_img), ppm::to_tensor(ir_img)));
        int fused = model.has_fusion() ? model.fusion().forward(g, x6) : x6;
        auto feats = model.backbone().forward(g, fused);
        for (size_t s = 0; s < feats.size(); ++s)
            ppm::write(heatmap_image(g.val(feats[s])),
                       o.out + "/stage_p" + std::to_string(s + 3) + ".ppm");
    }
    for (const auto& b : boxes) {
        draw_box(rgb_img, b);
        draw_box(ir_img, b);
    }
    ppm::write(rgb_img, o.out + "/overlay_rgb.ppm");
    ppm::write(ir_img, o.out + "/overlay_ir.ppm");
    {
        std::ofstream os(o.out + "/detections.txt");
        for (const auto& b : boxes)
            os << b.class_id << " " << b.cx << " " << b.cy << " " << b.w << " "
               << b.h << " " << b.score << "\n";
    }
    std::cout << "detections: " << boxes.size() << "\n";
    std::cout << "wrote overlays to " << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multispectral small-target detector"};
    app.require_subcommand(1);

    GenOpts gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "generate synthetic scenes");
    cmd_gen->add_option("--n", gen.n, "number of scenes")->required();
    cmd_gen->add_option("--size", gen.size, "image side (default 128)");
    cmd_gen->add_option("--seed", gen.seed, "base seed (default 0)");
    cmd_gen->add_option("--out", gen.out, "output dataset directory")
        ->required();
    cmd_gen->add_option("--classes", gen.classes, "class count, 2..5");
    cmd_gen->add_option("--density", gen.density, "object density, 0 disables");
    cmd_gen->add_option("--clutter-density", gen.clutter,
                        "RGB-only distractor density");
    cmd_gen->add_option("--illumination", gen.illumination,
                        "-1 mixed, 0 day, 1 night, 2 overexposed");
    cmd_gen->add_flag("--big-targets", gen.big_targets,
                      "lift the small-target size bound");

    FuseOpts fuse;
    auto* cmd_fuse =
        app.add_subcommand("fuse", "run pixel fusion on one RGB/IR pair");
    cmd_fuse->add_option("--rgb", fuse.rgb, "RGB ppm")->required();
    cmd_fuse->add_option("--ir", fuse.ir, "IR ppm")->required();
    cmd_fuse->add_option("--out", fuse.out, "output directory")->required();
    cmd_fuse->add_option("--ckpt", fuse.ckpt,
                         "optional fusion-bearing checkpoint");

    TrainOpts train_o;
    auto* cmd_train = app.add_subcommand("train", "train a detector");
    cmd_train->add_option("--data", train_o.data, "training dataset root")
        ->required();
    cmd_train->add_option("--cfg", train_o.cfg, "key=value config file")
        ->required();
    cmd_train->add_option("--out", train_o.out, "checkpoint path")->required();
    cmd_train->add_option("--ablation", train_o.ablation,
                          "baseline|mepf|mepf-estd|mepf-carg|full");
    cmd_train->add_option("--log", train_o.log,
                          "loss CSV path (default <out>.log.csv)");

    EvalOpts eval_o;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_eval->add_option("--ckpt", eval_o.ckpt, "checkpoint path")->required();
    cmd_eval->add_option("--data", eval_o.data, "dataset root")->required();

    GcOpts gc;
    auto* cmd_gc =
        app.add_subcommand("gradcheck", "finite-difference gradient checks");
    cmd_gc->add_option("--module", gc.module, "all|mepf|estd|carg|ss2d");

    BenchOpts bench;
    auto* cmd_bench = app.add_subcommand(
        "bench-scan", "selective scan vs attention timing");
    cmd_bench->add_option("--lengths", bench.lengths,
                          "comma-separated token counts");
    cmd_bench->add_option("--csv", bench.csv, "CSV output path");

    VizOpts viz;
    auto* cmd_viz =
        app.add_subcommand("viz", "draw detections for one scene");
    cmd_viz->add_option("--ckpt", viz.ckpt, "checkpoint path")->required();
    cmd_viz->add_option("--image", viz.image,
                        "scene directory or rgb.ppm path")
        ->required();
    cmd_viz->add_option("--out", viz.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help text, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_fuse->parsed()) return run_fuse(fuse);
        if (cmd_train->parsed()) return run_train(train_o);
        if (cmd_eval->parsed()) return run_eval(eval_o);
        if (cmd_gc->parsed()) return run_gradcheck(gc);
        if (cmd_bench->parsed()) return run_bench(bench);
        if (cmd_viz->parsed()) return run_viz(viz);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
