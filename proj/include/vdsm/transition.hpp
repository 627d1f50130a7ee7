// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vdsm/config.hpp"
#include "vdsm/distributions.hpp"
#include "vdsm/nn_util.hpp"
#include "vdsm/sequence_model.hpp"

namespace vdsm {

// Gated transition prior p(z_t | z_{t-1}, d).

std::vector<ParamDef> transition_param_defs(const Config& cfg);

// z_prev [B, kappa_z], d [B, kappa_d].
// g = sigmoid(f2(relu(f1(u)))), h = f4(relu(f3(u))),
// loc = g*h + (1-g)*f5(u), scale = softplus(f6(relu(h))), u = [z_prev, d].
GaussianHeads transition_step(Tape& t, Binding& p, const Config& cfg, Var z_prev, Var d);

DiagGaussian transition_step_plain(const ParamMap& params, const Config& cfg, const Tensor& z_prev,
                                   const Tensor& d);

// Ancestral rollout: z_t = loc + scale * noise[t-1], starting from z_1.
// noise holds T-1 vectors of dimension kappa_z. Returns [T, kappa_z].
Tensor rollout(const ParamMap& params, const Config& cfg, const Tensor& z1, const Tensor& d, int T,
               const std::vector<Tensor>& noise);

}  // namespace vdsm
