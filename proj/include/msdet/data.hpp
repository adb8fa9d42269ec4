#pragma once

// Synthetic multispectral scenes: paired RGB and thermal-IR views of small
// ground vehicles over textured backgrounds. Targets always carry a bright
// IR blob; clutter distractors mimic target appearance in RGB while staying
// cold in IR, so only the IR stream reliably separates them.

#include <cstdint>
#include <string>
#include <vector>

#include "msdet/boxes.hpp"
#include "msdet/ppm.hpp"
#include "msdet/tensor.hpp"

namespace msdet::data {

enum class Illumination { kDay = 0, kNight = 1, kOverexposed = 2 };

struct SceneSpec {
    int size = 128;             // square; >= 64 and divisible by 32
    int num_classes = 3;        // 2..5
    float density = 1.0f;       // scales object count; 0 gives pure background
    float clutter_density = 0.5f;  // scales RGB-only distractor count
    bool small_targets = true;  // keep every box under 0.1 of the image side
    int illumination = -1;      // -1 draws a mode per scene; 0/1/2 pins one
    int max_targets = 6;
};

struct SyntheticScene {
    ppm::Image rgb;
    ppm::Image ir;  // grayscale, replicated across the three channels
    std::vector<DetectionBox> boxes;
    Illumination illumination = Illumination::kDay;
    float clutter_density = 0.0f;
};

// Deterministic in (seed, spec). The RGB, IR and layout random streams are
// independent, so pinning a different illumination mode changes only the
// RGB rendering. Throws std::invalid_argument on a bad spec and
// std::runtime_error if object placement keeps colliding after bounded
// retries.
SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

// Writes rgb.ppm, ir.ppm and boxes.txt into dir (created if needed).
void save_scene(const SyntheticScene& scene, const std::string& dir);

// One loaded scene: images as (1,3,h,w) tensors in [0,1].
struct Sample {
    Tensor rgb;
    Tensor ir;
    std::vector<DetectionBox> boxes;
    std::string dir;
};

Sample load_scene(const std::string& dir);

// Sorted scene directories under root (any directory holding an rgb.ppm).
std::vector<std::string> list_scene_dirs(const std::string& root);

// n scenes under root/scene_00000.., seeds derived from base_seed.
void generate_dataset(const std::string& root, int n, const SceneSpec& spec,
                      std::uint64_t base_seed);

}  // namespace msdet::data
