// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vdsm/config.hpp"
#include "vdsm/distributions.hpp"
#include "vdsm/nn_util.hpp"

namespace vdsm {

// One upsampling stage of the decoder stack.
struct DecoderStage {
    int in_ch;
    int out_ch;
    int kernel;
    int stride;
    int pad;
};

// Stage geometry implied by the configuration: a 1x1 latent column is expanded
// to the configured frame size.
std::vector<DecoderStage> decoder_stages(const Config& cfg);

std::vector<ParamDef> decoder_param_defs(const Config& cfg);

// Materialized convex combination of the bank: one effective tensor per stage
// parameter. mix is {n_experts}; zs holds decoder inputs [N, kappa_s+kappa_z].
// Output: pixel probabilities [N, C, H, W], sigmoid-squashed.
Var moe_decode(Tape& t, Binding& p, const Config& cfg, Var mix, Var zs);

// Direct single-expert forward pass (no blending); vertex reference.
Var expert_decode(Tape& t, Binding& p, const Config& cfg, int expert, Var zs);

// Plain blending of the raw parameter tensors: name -> convex combination.
ParamMap blend_bank(const ParamMap& params, const Config& cfg, const Tensor& mix);

// Plain forward pass for generation paths: one sequence's mix and inputs.
Tensor decode_frames(const ParamMap& params, const Config& cfg, const Tensor& mix, const Tensor& zs);

}  // namespace vdsm
