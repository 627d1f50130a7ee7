// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "vdsm/config.hpp"
#include "vdsm/frame_encoder.hpp"
#include "vdsm/moe_decoder.hpp"
#include "vdsm/schedules.hpp"
#include "vdsm/sequence_model.hpp"
#include "vdsm/transition.hpp"

namespace vdsm {

struct LossBreakdown {
    double reconstruction = 0.0;
    double kl_s = 0.0;
    double kl_d = 0.0;
    double kl_z1 = 0.0;
    double kl_z_trans = 0.0;
    double weighted_total = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
};

// Reparameterization noise for one batch. Pretraining uses s [1,kappa_s] and
// z [N,kappa_z]; the sequence objective uses s [B,kappa_s], d [B,kappa_d] and
// z [B,T,kappa_z].
struct ElboNoise {
    Tensor s;
    Tensor d;
    Tensor z;
};

// Values plus the scalar node to run backward on (negated ELBO, so backward
// yields ascent directions after a sign flip in the optimizer).
struct ElboGraph {
    LossBreakdown values;
    Var neg_elbo;
};

// Identity-grouped pretraining objective: one static code for the whole
// batch, per-frame pose codes against N(0,1), frames [N,C,H,W].
ElboGraph pretrain_elbo(Tape& t, Binding& p, const Config& cfg, const Tensor& frames,
                        const AnnealState& anneal, const ElboNoise& noise);

// Full sequential objective over a batch of sequences [B,T,C,H,W].
ElboGraph sequence_elbo(Tape& t, Binding& p, const Config& cfg, const Tensor& seqs,
                        const AnnealState& anneal, const ElboNoise& noise);

// Central-difference gradient audit. For every parameter tensor, up to
// samples_per_tensor coordinates are perturbed by +-eps and the reconstructed
// derivative is compared with the analytic one. Relative error uses
// |fd - an| / max(|fd|, |an|) when the larger magnitude exceeds 1e-6;
// smaller pairs must agree within 1e-8 absolute and contribute 0.
double finite_difference_check(const std::function<double(const ParamMap&)>& loss, const ParamMap& params,
                               const std::map<std::string, Tensor>& analytic, double eps,
                               int samples_per_tensor, Rng& rng);

}  // namespace vdsm
