#pragma once

// Trainable layer wrappers: each owns Parameters registered in a ParamStore
// under a dotted name prefix and emits graph ops on forward. Construction
// order fixes both the checkpoint layout and the init RNG stream.

#include <string>

#include "msdet/graph.hpp"
#include "msdet/tensor.hpp"

namespace msdet::nn {

class Conv2d {
  public:
    // pad -1 picks kernel/2 (size-preserving at stride 1). Weight and bias
    // draw from uniform(-s, s), s = 1/sqrt(fan_in), fan_in = cin/groups*k*k.
    Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
           int stride = 1, int pad = -1, int groups = 1, bool bias = true);
    int forward(Graph& g, int x) const;
    Parameter* weight() const { return w_; }
    Parameter* bias() const { return b_; }

  private:
    Parameter* w_;
    Parameter* b_ = nullptr;
    int k_, stride_, pad_, groups_;
};

// Fully connected layer on (n,c,1,1) descriptors, the Eq.-style FC. Wraps a
// 1x1 convolution, which is the same arithmetic.
class Linear {
  public:
    Linear(ParamStore& ps, const std::string& name, int in, int out,
           bool bias = true);
    int forward(Graph& g, int x) const;

  private:
    Conv2d conv_;
};

class BatchNorm2d {
  public:
    // gamma=1, beta=0; running stats live in non-trainable buffer Parameters
    // so checkpoints carry them.
    BatchNorm2d(ParamStore& ps, const std::string& name, int c);
    int forward(Graph& g, int x);

  private:
    Parameter* gamma_;
    Parameter* beta_;
    Parameter* run_mean_;
    Parameter* run_var_;
    Parameter* steps_;
};

// Squeeze-excitation channel gate: sigmoid(FC(relu(FC(avgpool(x))))) applied
// as a per-channel rescale. Bottleneck width c/reduction, floored at 1.
class SqueezeExcite {
  public:
    SqueezeExcite(ParamStore& ps, const std::string& name, int c,
                  int reduction = 4);
    int forward(Graph& g, int x) const;
    // the (n,c,1,1) gate by itself, for range checks
    int gate(Graph& g, int x) const;

  private:
    Linear fc1_, fc2_;
};

}  // namespace msdet::nn
