#include "msdet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace msdet::train {

void TrainConfig::validate() const {
    if (!(lr >= 0.0f) || !std::isfinite(lr))
        throw std::invalid_argument("TrainConfig: lr must be finite and >= 0");
    if (!(momentum >= 0.0f) || momentum >= 1.0f)
        throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (!(weight_decay >= 0.0f))
        throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (epochs < 1)
        throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (max_steps < 0)
        throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
    if (warmup_steps < 0)
        throw std::invalid_argument("TrainConfig: warmup_steps must be >= 0");
    if (!(grad_clip >= 0.0f))
        throw std::invalid_argument("TrainConfig: grad_clip must be >= 0");
}

namespace {

// Scales every trainable gradient so the global norm stays under the cap.
void clip_gradients(ParamStore& store, float cap) {
    if (cap <= 0) return;
    double norm2 = 0.0;
    for (const auto& p : store.all()) {
        if (!p->trainable) continue;
        for (float g : p->grad) norm2 += double(g) * g;
    }
    double norm = std::sqrt(norm2);
    if (norm <= cap) return;
    float s = float(cap / norm);
    for (const auto& p : store.all()) {
        if (!p->trainable) continue;
        for (float& g : p->grad) g *= s;
    }
}

}  // namespace

Sgd::Sgd(ParamStore& store, float lr, float momentum, float weight_decay)
    : store_(&store), lr_(lr), m_(momentum), wd_(weight_decay) {
    velocity_.reserve(store.all().size());
    for (const auto& p : store.all())
        velocity_.emplace_back(p->value.size(), 0.0f);
}

void Sgd::step() {
    const auto& params = store_->all();
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.trainable) continue;
        auto& v = velocity_[i];
        for (size_t j = 0; j < v.size(); ++j) {
            v[j] = m_ * v[j] + p.grad[j];
            p.value[j] -= lr_ * (v[j] + wd_ * p.value[j]);
        }
    }
}

void Sgd::zero_grad() { store_->zero_grads(); }

TrainResult train_model(Model& model, const std::vector<data::Sample>& samples,
                        const TrainConfig& cfg, const std::string& log_csv_path,
                        std::ostream* progress) {
    cfg.validate();
    if (samples.empty())
        throw std::invalid_argument("train_model: no training samples");

    std::ofstream log;
    if (!log_csv_path.empty()) {
        log.open(log_csv_path);
        if (!log)
            throw std::runtime_error("train_model: cannot open log " +
                                     log_csv_path);
        log << "epoch,step,loss,lr\n";
    }

    Sgd opt(model.store(), cfg.lr, cfg.momentum, cfg.weight_decay);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    int batches_per_epoch =
        int((order.size() + size_t(cfg.batch) - 1) / size_t(cfg.batch));
    int total_steps = cfg.epochs * batches_per_epoch;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

    TrainResult result;
    bool done = false;
    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_sum = 0.0;
        int epoch_batches = 0;
        for (size_t start = 0; start < order.size() && !done;
             start += size_t(cfg.batch)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch));
            int bs = int(end - start);
            opt.zero_grad();
            double batch_loss = 0.0;
            for (size_t k = start; k < end; ++k) {
                const auto& s = samples[size_t(order[k])];
                Graph g(Mode::kTrain);
                int x = g.input(stack_rgb_ir(s.rgb, s.ir));
                auto maps = model.forward_maps(g, x);
                auto parts = detect::build_loss(g, maps, s.boxes,
                                                model.config().head);
                int scaled = g.scale(parts.total, 1.0f / float(bs));
                g.backward(scaled);
                batch_loss += double(g.val(scaled).data[0]);
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error(
                    "train_model: loss diverged (non-finite) at step " +
                    std::to_string(result.steps + 1));
            clip_gradients(model.store(), cfg.grad_clip);
            if (cfg.warmup_steps > 0 && result.steps < cfg.warmup_steps) {
                float t = float(result.steps) / float(cfg.warmup_steps);
                opt.set_lr(cfg.lr * (0.1f + 0.9f * t));
            } else if (cfg.cosine && total_steps > cfg.warmup_steps) {
                float t = float(result.steps - cfg.warmup_steps) /
                          float(total_steps - cfg.warmup_steps);
                float floor = cfg.lr_final_frac;
                opt.set_lr(cfg.lr * (floor + (1.0f - floor) * 0.5f *
                                                 (1.0f + std::cos(t * float(M_PI)))));
            } else {
                opt.set_lr(cfg.lr);
            }
            opt.step();
            ++result.steps;
            result.step_loss.push_back(batch_loss);
            epoch_sum += batch_loss;
            ++epoch_batches;
            if (log)
                log << epoch << "," << result.steps << "," << batch_loss << ","
                    << opt.lr() << "\n";
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) done = true;
        }
        if (epoch_batches > 0)
            result.epoch_loss.push_back(epoch_sum / epoch_batches);
        if (progress && epoch_batches > 0)
            *progress << "epoch " << epoch << " loss "
                      << result.epoch_loss.back() << "\n";
    }
    return result;
}

detect::EvalReport evaluate_model(Model& model,
                                  const std::vector<data::Sample>& samples) {
    std::vector<std::vector<DetectionBox>> preds, gts;
    preds.reserve(samples.size());
    gts.reserve(samples.size());
    auto t0 = std::chrono::steady_clock::now();
    for (const auto& s : samples) {
        // Near-zero threshold: mAP needs the low-confidence tail ranked, not
        // the deployment cutoff.
        preds.push_back(model.predict(s.rgb, s.ir, 1e-3f));
        gts.push_back(s.boxes);
    }
    auto t1 = std::chrono::steady_clock::now();
    auto rep = detect::evaluate_map50(preds, gts, model.config().num_classes);
    rep.params_bytes =
        model.store().count_trainable() * std::int64_t(sizeof(float));
    double secs = std::chrono::duration<double>(t1 - t0).count();
    rep.images_per_s = secs > 0 ? double(samples.size()) / secs : 0.0;
    return rep;
}

}  // namespace msdet::train
