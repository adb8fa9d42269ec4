#include "msdet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace msdet {

bool Tensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

float Tensor::abs_max() const {
    float m = 0.0f;
    for (float v : data) m = std::max(m, std::fabs(v));
    return m;
}

void ParamStore::check_unique(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name)
            throw std::runtime_error("ParamStore: duplicate parameter name " + name);
}

Parameter* ParamStore::create(const std::string& name, Shape4 shape, int fan_in) {
    check_unique(name);
    auto p = std::make_unique<Parameter>(name, shape);
    if (fan_in > 0) {
        const float s = 1.0f / std::sqrt(float(fan_in));
        std::uniform_real_distribution<float> dist(-s, s);
        for (auto& v : p->value) v = dist(rng_);
    }
    params_.push_back(std::move(p));
    return params_.back().get();
}

Parameter* ParamStore::create_const(const std::string& name, Shape4 shape,
                                    float fill, bool trainable) {
    check_unique(name);
    auto p = std::make_unique<Parameter>(name, shape);
    std::fill(p->value.begin(), p->value.end(), fill);
    p->trainable = trainable;
    params_.push_back(std::move(p));
    return params_.back().get();
}

Parameter* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

std::int64_t ParamStore::count_trainable() const {
    std::int64_t total = 0;
    for (const auto& p : params_)
        if (p->trainable) total += p->numel();
    return total;
}

std::int64_t ParamStore::count_matching(const std::string& prefix) const {
    std::int64_t total = 0;
    for (const auto& p : params_)
        if (p->trainable && p->name.rfind(prefix, 0) == 0) total += p->numel();
    return total;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->zero_grad();
}

}  // namespace msdet
