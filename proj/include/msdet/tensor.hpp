#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace msdet {

// Thrown for dimension mismatches; message names the offending axis.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense rank-4 shape (batch, channels, height, width). Lower-rank data
// (vectors, matrices) uses trailing 1s.
struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    Shape4() = default;
    Shape4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

    std::int64_t numel() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape4& o) const { return !(*this == o); }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Row-major float32 activation tensor.
struct Tensor {
    Shape4 shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(Shape4 s, float fill = 0.0f)
        : shape(s), data(size_t(s.numel()), fill) {}
    Tensor(Shape4 s, std::vector<float> d) : shape(s), data(std::move(d)) {
        if (std::int64_t(data.size()) != shape.numel())
            throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                             " != numel of shape " + shape.str());
    }

    float& at(int in, int ic, int ih, int iw) {
        return data[((size_t(in) * shape.c + ic) * shape.h + ih) * shape.w + iw];
    }
    float at(int in, int ic, int ih, int iw) const {
        return data[((size_t(in) * shape.c + ic) * shape.h + ih) * shape.w + iw];
    }
    std::int64_t numel() const { return shape.numel(); }

    bool all_finite() const;
    float abs_max() const;
};

// Trainable weight. grad is accumulated by Graph::backward and zeroed by the
// optimizer between steps.
struct Parameter {
    std::string name;
    Shape4 shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool trainable = true;  // false for buffers (running stats)

    Parameter(std::string name_, Shape4 shape_)
        : name(std::move(name_)),
          shape(shape_),
          value(size_t(shape_.numel()), 0.0f),
          grad(size_t(shape_.numel()), 0.0f) {}

    std::int64_t numel() const { return shape.numel(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

// Owns every Parameter of one model. Registration order is the checkpoint
// order and the init-RNG draw order, so a fixed seed gives bit-identical
// weights.
class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

    // Uniform(-s, s) with s = 1/sqrt(fan_in); fan_in <= 0 means zero init.
    Parameter* create(const std::string& name, Shape4 shape, int fan_in);
    Parameter* create_const(const std::string& name, Shape4 shape, float fill,
                            bool trainable = true);

    Parameter* find(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

    std::int64_t count_trainable() const;
    std::int64_t count_matching(const std::string& prefix) const;
    void zero_grads();

  private:
    void check_unique(const std::string& name) const;
    std::vector<std::unique_ptr<Parameter>> params_;
    std::mt19937 rng_;
};

}  // namespace msdet
