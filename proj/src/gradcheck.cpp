#include "msdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace msdet::gradcheck {

float rel_err(float a, float b) {
    return std::fabs(a - b) /
           std::max({1.0f, std::fabs(a), std::fabs(b)});
}

namespace {

float eval_loss(const BuildFromInputs& build,
                const std::vector<Tensor>& inputs) {
    Graph g;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.input(t));
    return g.val(build(g, ids)).data[0];
}

void note(Result& r, float analytic, float fd, const std::string& where) {
    const float e = rel_err(analytic, fd);
    if (e > r.max_rel_err) {
        r.max_rel_err = e;
        r.worst = where;
    }
    r.checked++;
}

}  // namespace

Result check_inputs(const BuildFromInputs& build, std::vector<Tensor> inputs,
                    float eps, std::int64_t stride) {
    Result r;
    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<int> ids;
        for (const Tensor& t : inputs) ids.push_back(g.input(t));
        const int loss = build(g, ids);
        g.backward(loss);
        for (int id : ids) analytic.push_back(g.grad_of(id));
    }
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        for (std::int64_t j = 0; j < inputs[ti].numel(); j += stride) {
            const float orig = inputs[ti].data[size_t(j)];
            inputs[ti].data[size_t(j)] = orig + eps;
            const float lp = eval_loss(build, inputs);
            inputs[ti].data[size_t(j)] = orig - eps;
            const float lm = eval_loss(build, inputs);
            inputs[ti].data[size_t(j)] = orig;
            const float fd = (lp - lm) / (2.0f * eps);
            note(r, analytic[ti].data[size_t(j)], fd,
                 "input " + std::to_string(ti) + " entry " +
                     std::to_string(j));
        }
    }
    return r;
}

Result check_params(const BuildFromParams& build,
                    const std::vector<Parameter*>& params, float eps,
                    std::int64_t stride) {
    Result r;
    std::vector<std::vector<float>> analytic;
    {
        for (Parameter* p : params) p->zero_grad();
        Graph g;
        const int loss = build(g);
        g.backward(loss);
        for (Parameter* p : params) analytic.push_back(p->grad);
    }
    auto loss_only = [&build]() {
        Graph g;
        return g.val(build(g)).data[0];
    };
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (std::int64_t j = 0; j < p->numel(); j += stride) {
            const float orig = p->value[size_t(j)];
            p->value[size_t(j)] = orig + eps;
            const float lp = loss_only();
            p->value[size_t(j)] = orig - eps;
            const float lm = loss_only();
            p->value[size_t(j)] = orig;
            const float fd = (lp - lm) / (2.0f * eps);
            note(r, analytic[pi][size_t(j)], fd,
                 p->name + " entry " + std::to_string(j));
        }
    }
    return r;
}

}  // namespace msdet::gradcheck
