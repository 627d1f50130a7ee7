// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vdsm/config.hpp"
#include "vdsm/distributions.hpp"
#include "vdsm/nn_util.hpp"

namespace vdsm {

// Seq2seq inference backbone: bidirectional recurrent encoder over per-frame
// pose embeddings -> dynamics bottleneck d -> unidirectional decoder whose
// hidden states drive the per-step pose combiner.

struct GaussianHeads {
    Var loc;
    Var scale;
};

std::vector<ParamDef> seq_param_defs(const Config& cfg);

// pose_rows holds T entries, each [B, kappa_z]. Returns d posterior heads
// [B, kappa_d] from the concatenated final hidden states of both directions.
GaussianHeads summarize_dynamics(Tape& t, Binding& p, const Config& cfg, const std::vector<Var>& pose_rows);

// d [B, kappa_d] seeds both recurrent state vectors (after a linear
// projection); the same learned token is consumed at every step.
std::vector<Var> unroll_decoder(Tape& t, Binding& p, const Config& cfg, Var d, int T);

// c = 0.5 * (tanh(f7(z_prev)) + [hbar, d]); loc = f8(c), scale = softplus(f9(c)).
GaussianHeads combine(Tape& t, Binding& p, const Config& cfg, Var z_prev, Var hbar, Var d);

// Plain forms over single vectors, for tests and generation.
DiagGaussian summarize_dynamics_plain(const ParamMap& params, const Config& cfg, const Tensor& pose_locs);
std::vector<Tensor> unroll_decoder_plain(const ParamMap& params, const Config& cfg, const Tensor& d, int T);
DiagGaussian combine_plain(const ParamMap& params, const Config& cfg, const Tensor& z_prev,
                           const Tensor& hbar, const Tensor& d);

}  // namespace vdsm
