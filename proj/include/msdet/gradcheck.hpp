#pragma once

// Central-difference gradient oracle. A builder callable reconstructs the
// scalar loss from scratch on every evaluation; the checker compares the
// tape's analytic gradients against (f(x+e) - f(x-e)) / 2e entry by entry.

#include <functional>
#include <string>
#include <vector>

#include "msdet/graph.hpp"
#include "msdet/tensor.hpp"

namespace msdet::gradcheck {

// |a - b| / max(1, |a|, |b|)
float rel_err(float a, float b);

struct Result {
    float max_rel_err = 0.0f;
    std::int64_t checked = 0;
    std::string worst;  // where the largest error sat
};

// Loss built from graph inputs; ids arrive in the same order as the tensors.
using BuildFromInputs = std::function<int(Graph&, const std::vector<int>&)>;

// Checks d(loss)/d(input) for every tensor. stride > 1 subsamples entries
// (every stride-th index) to keep large checks affordable.
Result check_inputs(const BuildFromInputs& build, std::vector<Tensor> inputs,
                    float eps = 1e-3f, std::int64_t stride = 1);

// Loss built from module parameters the builder reaches on its own.
using BuildFromParams = std::function<int(Graph&)>;

Result check_params(const BuildFromParams& build,
                    const std::vector<Parameter*>& params, float eps = 1e-3f,
                    std::int64_t stride = 1);

}  // namespace msdet::gradcheck
