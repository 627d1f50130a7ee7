// SPDX-License-Identifier: Apache-2.0
#include "vdsm/nn_util.hpp"

#include <cmath>
#include <stdexcept>

namespace vdsm {

double fanin_bound_linear(int fan_in) {
    if (fan_in < 1) throw std::invalid_argument("fan_in must be >= 1");
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

ParamMap init_params(const std::vector<ParamDef>& defs, Rng& rng) {
    ParamMap out;
    for (const ParamDef& d : defs) {
        Tensor t(d.shape);
        if (d.bound > 0.0) {
            for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-d.bound, d.bound);
        }
        if (!out.emplace(d.name, std::move(t)).second)
            throw std::logic_error("duplicate parameter name: " + d.name);
    }
    return out;
}

Var Binding::operator()(const std::string& name) {
    auto hit = cache_.find(name);
    if (hit != cache_.end()) return hit->second;
    auto it = params_->find(name);
    if (it == params_->end()) throw std::logic_error("unknown parameter: " + name);
    const bool rg = trainable_ ? trainable_(name) : true;
    Var v = tape_->leaf(it->second, rg);
    cache_.emplace(name, v);
    return v;
}

std::map<std::string, Tensor> Binding::gradients() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : cache_) {
        if (!tape_->requires_grad(var) || !tape_->has_grad(var)) continue;
        out.emplace(name, tape_->grad(var));
    }
    return out;
}

LstmState lstm_step(Tape& t, Var x, Var h, Var c, Var w, Var u, Var b) {
    const int hidden = t.val(h).dim(1);
    Var gates = t.add(t.linear(x, w, b), t.linear(h, u, Var{}));
    Var i = t.sigmoid(t.slice(gates, 1, 0, hidden));
    Var f = t.sigmoid(t.slice(gates, 1, hidden, hidden));
    Var g = t.tanh(t.slice(gates, 1, 2 * hidden, hidden));
    Var o = t.sigmoid(t.slice(gates, 1, 3 * hidden, hidden));
    Var c_next = t.add(t.mul(f, c), t.mul(i, g));
    Var h_next = t.mul(o, t.tanh(c_next));
    return {h_next, c_next};
}

std::vector<ParamDef> lstm_param_defs(const std::string& prefix, int input, int hidden) {
    const double bw = fanin_bound_linear(input);
    const double bu = fanin_bound_linear(hidden);
    return {
        {prefix + ".W", {input, 4 * hidden}, bw},
        {prefix + ".U", {hidden, 4 * hidden}, bu},
        {prefix + ".b", {4 * hidden}, 0.0},
    };
}

}  // namespace vdsm
