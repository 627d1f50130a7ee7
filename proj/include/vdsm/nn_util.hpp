// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vdsm/autodiff.hpp"
#include "vdsm/rng.hpp"
#include "vdsm/tensor.hpp"

namespace vdsm {

// Negative slope shared by every LeakyReLU in the conv stacks.
inline constexpr double kLeakySlope = 0.2;

// Declarative parameter table. Modules list their tensors; initialization
// walks the list in order so parameter draws are reproducible.
struct ParamDef {
    std::string name;
    std::vector<int> shape;
    // Uniform on [-bound, bound]; 0 means zero-initialized (biases).
    double bound = 0.0;
};

using ParamMap = std::map<std::string, Tensor>;

// Fan-in scaled uniform bound for a weight of the given shape: 1/sqrt(fan_in),
// where fan_in is everything but the leading output dimension for conv weights
// and the input dimension for [in,out] linear weights.
double fanin_bound_linear(int fan_in);

ParamMap init_params(const std::vector<ParamDef>& defs, Rng& rng);

// Lazily places parameters on a tape, each at most once, with requires_grad
// decided by the trainable predicate.
class Binding {
public:
    Binding(Tape& tape, const ParamMap& params,
            std::function<bool(const std::string&)> trainable = nullptr)
        : tape_(&tape), params_(&params), trainable_(std::move(trainable)) {}

    Var operator()(const std::string& name);
    bool placed(const std::string& name) const { return cache_.count(name) > 0; }

    // Collects d(loss)/d(param) for every trainable parameter that was placed
    // and received gradient; call after Tape::backward.
    std::map<std::string, Tensor> gradients() const;

private:
    Tape* tape_;
    const ParamMap* params_;
    std::function<bool(const std::string&)> trainable_;
    std::map<std::string, Var> cache_;
};

// One step of a standard LSTM cell over a row batch.
// x [N,I], h [N,H], c [N,H]; w [I,4H], u [H,4H], b {4H}; gate order (i,f,g,o).
struct LstmState {
    Var h;
    Var c;
};
LstmState lstm_step(Tape& t, Var x, Var h, Var c, Var w, Var u, Var b);

std::vector<ParamDef> lstm_param_defs(const std::string& prefix, int input, int hidden);

}  // namespace vdsm
