#include "msdet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;

namespace msdet::data {

namespace {

// One RGB plane set in float, quantized to bytes at the very end.
struct Planes {
    int size;
    std::vector<float> v;  // 3 planes
    explicit Planes(int s) : size(s), v(size_t(3) * s * s, 0.0f) {}
    float& at(int c, int y, int x) {
        return v[(size_t(c) * size + y) * size + x];
    }
};

struct Wave {
    float amp, fx, fy, phase;
};

std::vector<Wave> make_waves(std::mt19937& rng, int count, float amp) {
    std::uniform_real_distribution<float> uf(0.0f, 1.0f);
    std::vector<Wave> waves(static_cast<size_t>(count));
    for (auto& w : waves) {
        w.amp = amp * (0.5f + uf(rng));
        w.fx = 0.02f + 0.12f * uf(rng);
        w.fy = 0.02f + 0.12f * uf(rng);
        w.phase = 6.2831853f * uf(rng);
    }
    return waves;
}

float wave_value(const std::vector<Wave>& waves, int y, int x) {
    float v = 0.0f;
    for (const auto& w : waves)
        v += w.amp * std::cos(w.fx * float(x) + w.fy * float(y) + w.phase);
    return v;
}

// Five vehicle classes: a base tint plus a stripe pattern, with the shape
// (rectangle vs ellipse) alternating by class so silhouettes differ too.
constexpr float kClassColor[5][3] = {
    {0.75f, 0.20f, 0.15f},
    {0.20f, 0.30f, 0.80f},
    {0.20f, 0.65f, 0.25f},
    {0.85f, 0.80f, 0.20f},
    {0.60f, 0.25f, 0.70f},
};

struct Placed {
    int x0, y0, w, h;  // integer pixel extents
    int class_id;
    bool ellipse;
};

bool overlaps(const Placed& a, const Placed& b, int margin) {
    return a.x0 < b.x0 + b.w + margin && b.x0 < a.x0 + a.w + margin &&
           a.y0 < b.y0 + b.h + margin && b.y0 < a.y0 + a.h + margin;
}

bool inside_shape(const Placed& p, int y, int x) {
    if (!p.ellipse) return true;  // caller already restricts to the rect
    float dx = (float(x) - (p.x0 + 0.5f * (p.w - 1))) / (0.5f * p.w);
    float dy = (float(y) - (p.y0 + 0.5f * (p.h - 1))) / (0.5f * p.h);
    return dx * dx + dy * dy <= 1.0f;
}

void paint_rgb(Planes& rgb, const Placed& p, std::mt19937& rng) {
    std::uniform_real_distribution<float> uf(-0.08f, 0.08f);
    float jitter[3] = {uf(rng), uf(rng), uf(rng)};
    for (int y = p.y0; y < p.y0 + p.h; ++y) {
        for (int x = p.x0; x < p.x0 + p.w; ++x) {
            if (!inside_shape(p, y, x)) continue;
            // class-consistent stripes: orientation flips with class parity
            int band = (p.class_id % 2 == 0) ? (x - p.x0 + y - p.y0) : (y - p.y0);
            float shade = (band % 3 == 0) ? 0.78f : 1.0f;
            for (int c = 0; c < 3; ++c) {
                float v = kClassColor[p.class_id][c] * shade + jitter[c];
                rgb.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
}

void paint_ir_blob(std::vector<float>& ir, int size, const Placed& p,
                   float peak) {
    float cx = p.x0 + 0.5f * (p.w - 1), cy = p.y0 + 0.5f * (p.h - 1);
    float sx = 0.45f * p.w, sy = 0.45f * p.h;
    int rx = int(std::ceil(1.8f * sx)) + 1, ry = int(std::ceil(1.8f * sy)) + 1;
    int x0 = std::max(0, p.x0 - rx), x1 = std::min(size - 1, p.x0 + p.w + rx);
    int y0 = std::max(0, p.y0 - ry), y1 = std::min(size - 1, p.y0 + p.h + ry);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            float dx = (float(x) - cx) / sx, dy = (float(y) - cy) / sy;
            float v = peak * std::exp(-0.5f * (dx * dx + dy * dy));
            float& dst = ir[size_t(y) * size + x];
            dst = std::max(dst, v);
        }
    }
}

void paint_ir_cold(std::vector<float>& ir, int size, const Placed& p) {
    for (int y = p.y0; y < p.y0 + p.h; ++y)
        for (int x = p.x0; x < p.x0 + p.w; ++x)
            if (inside_shape(p, y, x)) ir[size_t(y) * size + x] *= 0.3f;
}

Placed place_one(std::mt19937& rng, int size, int wmax,
                 const std::vector<Placed>& taken, int class_id, bool ellipse) {
    std::uniform_int_distribution<int> usize(4, wmax);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Placed p;
        p.w = usize(rng);
        p.h = usize(rng);
        std::uniform_int_distribution<int> ux(2, size - p.w - 2);
        std::uniform_int_distribution<int> uy(2, size - p.h - 2);
        p.x0 = ux(rng);
        p.y0 = uy(rng);
        p.class_id = class_id;
        p.ellipse = ellipse;
        bool ok = true;
        for (const auto& t : taken)
            if (overlaps(p, t, 2)) {
                ok = false;
                break;
            }
        if (ok) return p;
    }
    throw std::runtime_error(
        "generate_scene: could not place an object after 100 attempts; "
        "lower the density or enlarge the image");
}

std::mt19937 stream_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), stream};
    return std::mt19937(seq);
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
    if (spec.size < 64 || spec.size % 32 != 0)
        throw std::invalid_argument(
            "generate_scene: size must be >= 64 and divisible by 32");
    if (spec.num_classes < 2 || spec.num_classes > 5)
        throw std::invalid_argument(
            "generate_scene: num_classes must be in [2,5]");
    if (spec.density < 0 || spec.clutter_density < 0)
        throw std::invalid_argument("generate_scene: densities must be >= 0");
    if (spec.illumination < -1 || spec.illumination > 2)
        throw std::invalid_argument(
            "generate_scene: illumination must be -1, 0, 1 or 2");

    const int size = spec.size;
    // Independent streams: layout draws never depend on rendering draws, and
    // the IR stream never sees illumination, which only transforms RGB.
    auto layout = stream_rng(seed, 1);
    auto rgb_rng = stream_rng(seed, 2);
    auto ir_rng = stream_rng(seed, 3);

    std::uniform_real_distribution<float> uf(0.0f, 1.0f);

    Illumination illum;
    if (spec.illumination >= 0) {
        illum = Illumination(spec.illumination);
    } else {
        float r = uf(layout);
        illum = r < 0.5f ? Illumination::kDay
                         : (r < 0.8f ? Illumination::kNight
                                     : Illumination::kOverexposed);
    }

    // Object layout
    int target_cap = int(std::lround(spec.density * spec.max_targets));
    int n_targets = 0;
    if (target_cap > 0) {
        int lo = std::max(1, (target_cap + 1) / 2);
        std::uniform_int_distribution<int> un(lo, target_cap);
        n_targets = un(layout);
    }
    int n_clutter = int(std::lround(spec.density * spec.clutter_density *
                                    spec.max_targets));

    int wmax = spec.small_targets
                   ? std::max(4, int(0.095f * float(size)))
                   : std::max(6, size / 4);

    std::vector<Placed> targets, clutter, taken;
    std::uniform_int_distribution<int> uclass(0, spec.num_classes - 1);
    for (int i = 0; i < n_targets; ++i) {
        int cls = uclass(layout);
        Placed p = place_one(layout, size, wmax, taken, cls, cls % 2 == 1);
        targets.push_back(p);
        taken.push_back(p);
    }
    for (int i = 0; i < n_clutter; ++i) {
        int cls = uclass(layout);
        Placed p = place_one(layout, size, wmax, taken, cls, cls % 2 == 1);
        clutter.push_back(p);
        taken.push_back(p);
    }

    // RGB: textured background, then distractors and targets painted on the
    // day-basis image, then one illumination transform over everything.
    Planes rgb(size);
    auto waves = make_waves(rgb_rng, 4, 0.06f);
    float tint[3] = {0.40f + 0.15f * uf(rgb_rng), 0.38f + 0.15f * uf(rgb_rng),
                     0.33f + 0.15f * uf(rgb_rng)};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            float base = wave_value(waves, y, x);
            for (int c = 0; c < 3; ++c)
                rgb.at(c, y, x) = std::clamp(tint[c] + base, 0.0f, 1.0f);
        }
    for (const auto& p : clutter) paint_rgb(rgb, p, rgb_rng);
    for (const auto& p : targets) paint_rgb(rgb, p, rgb_rng);

    if (illum == Illumination::kNight) {
        // strong global dimming plus one uneven light pool
        float scale = 0.10f + 0.08f * uf(rgb_rng);
        float lx = uf(rgb_rng) * float(size), ly = uf(rgb_rng) * float(size);
        float radius = 0.35f * float(size);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                float d2 = ((float(x) - lx) * (float(x) - lx) +
                            (float(y) - ly) * (float(y) - ly)) /
                           (radius * radius);
                float pool = 0.30f * std::exp(-d2);
                for (int c = 0; c < 3; ++c) {
                    float v = rgb.at(c, y, x) * (scale + pool);
                    rgb.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
                }
            }
    } else if (illum == Illumination::kOverexposed) {
        for (float& v : rgb.v) v = std::clamp(0.50f + 0.70f * v, 0.0f, 1.0f);
    }

    std::uniform_real_distribution<float> noise(-0.02f, 0.02f);
    for (float& v : rgb.v) v = std::clamp(v + noise(rgb_rng), 0.0f, 1.0f);

    // IR: cool textured background, cold distractor silhouettes, hot target
    // blobs on top. Never touched by the illumination transform.
    std::vector<float> ir(size_t(size) * size);
    auto ir_waves = make_waves(ir_rng, 3, 0.05f);
    float ir_base = 0.15f + 0.06f * uf(ir_rng);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            ir[size_t(y) * size + x] =
                std::clamp(ir_base + wave_value(ir_waves, y, x), 0.0f, 1.0f);
    for (const auto& p : clutter) paint_ir_cold(ir, size, p);
    std::uniform_real_distribution<float> upeak(0.85f, 1.0f);
    for (const auto& p : targets) paint_ir_blob(ir, size, p, upeak(ir_rng));
    for (float& v : ir) v = std::clamp(v + noise(ir_rng), 0.0f, 1.0f);

    SyntheticScene scene;
    scene.illumination = illum;
    scene.clutter_density = spec.clutter_density;
    scene.rgb = ppm::Image(size, size);
    scene.ir = ppm::Image(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < 3; ++c)
                scene.rgb.at(y, x, c) = static_cast<unsigned char>(
                    std::lround(rgb.at(c, y, x) * 255.0f));
            auto g = static_cast<unsigned char>(
                std::lround(ir[size_t(y) * size + x] * 255.0f));
            scene.ir.at(y, x, 0) = g;
            scene.ir.at(y, x, 1) = g;
            scene.ir.at(y, x, 2) = g;
        }

    for (const auto& p : targets) {
        DetectionBox b;
        b.cx = float(p.x0) + 0.5f * float(p.w);
        b.cy = float(p.y0) + 0.5f * float(p.h);
        b.w = float(p.w);
        b.h = float(p.h);
        b.class_id = p.class_id;
        scene.boxes.push_back(b);
    }
    return scene;
}

void save_scene(const SyntheticScene& scene, const std::string& dir) {
    fs::create_directories(dir);
    ppm::write(scene.rgb, dir + "/rgb.ppm");
    ppm::write(scene.ir, dir + "/ir.ppm");
    write_boxes(scene.boxes, dir + "/boxes.txt");
}

Sample load_scene(const std::string& dir) {
    Sample s;
    s.dir = dir;
    s.rgb = ppm::to_tensor(ppm::read(dir + "/rgb.ppm"));
    s.ir = ppm::to_tensor(ppm::read(dir + "/ir.ppm"));
    s.boxes = read_boxes(dir + "/boxes.txt");
    return s;
}

std::vector<std::string> list_scene_dirs(const std::string& root) {
    if (!fs::is_directory(root))
        throw std::runtime_error("dataset: " + root + " is not a directory");
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "rgb.ppm"))
            dirs.push_back(entry.path().string());
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

void generate_dataset(const std::string& root, int n, const SceneSpec& spec,
                      std::uint64_t base_seed) {
    if (n < 0) throw std::invalid_argument("generate_dataset: n must be >= 0");
    fs::create_directories(root);
    for (int i = 0; i < n; ++i) {
        std::uint64_t seed =
            base_seed ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(i + 1));
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05d", i);
        save_scene(generate_scene(seed, spec), root + "/" + name);
    }
}

}  // namespace msdet::data
