#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "msdet/data.hpp"
#include "msdet/detect.hpp"
#include "msdet/model.hpp"
#include "msdet/tensor.hpp"

namespace msdet::train {

struct TrainConfig {
    float lr = 0.01f;
    float momentum = 0.937f;
    float weight_decay = 0.0005f;
    int batch = 8;
    int epochs = 50;
    std::uint64_t seed = 0;
    int max_steps = 0;      // 0 means no step cap beyond epochs
    int warmup_steps = 50;  // linear ramp from lr/10; logged in the CSV
    float grad_clip = 10.0f;  // global-norm cap before each step; 0 disables
    bool cosine = true;     // decay to lr_final_frac*lr after warmup
    float lr_final_frac = 0.05f;
    void validate() const;  // momentum in [0,1); lr, wd >= 0; batch, epochs > 0
};

// Momentum SGD: v <- m*v + g, then p <- p - lr*(v + wd*p). Velocities start
// at zero; non-trainable buffers are left alone.
class Sgd {
  public:
    Sgd(ParamStore& store, float lr, float momentum, float weight_decay);
    void step();
    void zero_grad();
    float lr() const { return lr_; }
    void set_lr(float lr) { lr_ = lr; }

  private:
    ParamStore* store_;
    float lr_, m_, wd_;
    std::vector<std::vector<float>> velocity_;
};

struct TrainResult {
    std::vector<double> step_loss;   // mean per-image loss of each batch
    std::vector<double> epoch_loss;  // mean of the epoch's batch losses
    int steps = 0;
};

// Shuffled-batch SGD training, bit-reproducible for a fixed seed and build.
// Boxes come from the scene annotation stream, which follows the IR view.
// Writes a CSV log with header epoch,step,loss,lr to log_csv_path (skipped
// if empty). Throws std::runtime_error the moment a batch loss goes
// non-finite, naming the step.
TrainResult train_model(Model& model, const std::vector<data::Sample>& samples,
                        const TrainConfig& cfg, const std::string& log_csv_path,
                        std::ostream* progress = nullptr);

// Runs inference over every sample and scores it; fills parameter bytes and
// measured images/s.
detect::EvalReport evaluate_model(Model& model,
                                  const std::vector<data::Sample>& samples);

}  // namespace msdet::train
