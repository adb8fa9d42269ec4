#include "msdet/nn.hpp"

#include <algorithm>

namespace msdet::nn {

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout,
               int k, int stride, int pad, int groups, bool bias)
    : k_(k), stride_(stride), pad_(pad < 0 ? k / 2 : pad), groups_(groups) {
    const int fan_in = (cin / groups) * k * k;
    w_ = ps.create(name + ".weight", Shape4(cout, cin / groups, k, k), fan_in);
    if (bias) b_ = ps.create(name + ".bias", Shape4(cout, 1, 1, 1), fan_in);
}

int Conv2d::forward(Graph& g, int x) const {
    const int b = b_ ? g.param(b_) : -1;
    return g.conv2d(x, g.param(w_), b, k_, stride_, pad_, groups_);
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out,
               bool bias)
    : conv_(ps, name, in, out, 1, 1, 0, 1, bias) {}

int Linear::forward(Graph& g, int x) const { return conv_.forward(g, x); }

BatchNorm2d::BatchNorm2d(ParamStore& ps, const std::string& name, int c) {
    gamma_ = ps.create_const(name + ".weight", Shape4(c, 1, 1, 1), 1.0f);
    beta_ = ps.create_const(name + ".bias", Shape4(c, 1, 1, 1), 0.0f);
    run_mean_ = ps.create_const(name + ".running_mean", Shape4(c, 1, 1, 1),
                                0.0f, false);
    run_var_ = ps.create_const(name + ".running_var", Shape4(c, 1, 1, 1), 1.0f,
                               false);
    steps_ = ps.create_const(name + ".steps", Shape4(1, 1, 1, 1), 0.0f, false);
}

int BatchNorm2d::forward(Graph& g, int x) {
    BnState st;
    st.mean = run_mean_->value;
    st.var = run_var_->value;
    st.steps = std::int64_t(steps_->value[0]);
    const int y = g.batch_norm(x, g.param(gamma_), g.param(beta_), &st);
    run_mean_->value = st.mean;
    run_var_->value = st.var;
    steps_->value[0] = float(st.steps);
    return y;
}

SqueezeExcite::SqueezeExcite(ParamStore& ps, const std::string& name, int c,
                             int reduction)
    : fc1_(ps, name + ".fc1", c, std::max(1, c / reduction)),
      fc2_(ps, name + ".fc2", std::max(1, c / reduction), c) {}

int SqueezeExcite::gate(Graph& g, int x) const {
    int s = g.global_avg_pool(x);
    s = fc1_.forward(g, s);
    s = g.relu(s);
    s = fc2_.forward(g, s);
    return g.sigmoid(s);
}

int SqueezeExcite::forward(Graph& g, int x) const {
    return g.mul_channel(x, gate(g, x));
}

}  // namespace msdet::nn
