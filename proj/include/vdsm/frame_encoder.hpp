// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vdsm/config.hpp"
#include "vdsm/distributions.hpp"
#include "vdsm/nn_util.hpp"

namespace vdsm {

// Per-frame outputs: pose posterior parameters plus identity features feeding
// the mean-pooled static head.
struct FrameEncoding {
    DiagGaussian pose;      // dimension kappa_z
    Tensor identity_feats;  // dimension feat_s
};

// Tape-level outputs over a frame batch.
struct EncoderOut {
    Var pose_loc;    // [N, kappa_z]
    Var pose_scale;  // [N, kappa_z], softplus + floor applied
    Var feats;       // [N, feat_s]
};

struct StaticHeadOut {
    Var s_loc;    // [B, kappa_s]
    Var s_scale;  // [B, kappa_s]
};

std::vector<ParamDef> encoder_param_defs(const Config& cfg);

// x is [N, C, H, W] in [0,1]. Shared conv trunk, then pose and identity heads.
EncoderOut encode_frames(Tape& t, Binding& p, const Config& cfg, Var x);

// feats is [B, feat_s] (already pooled); applies the two static heads.
StaticHeadOut static_head(Tape& t, Binding& p, const Config& cfg, Var feats);

// Mean over the time axis of t-major frame features: [T*B, F] -> [B, F].
Var pool_time(Tape& t, Var feats, int T, int B);

// Plain convenience forms used by tests and generation paths.
FrameEncoding encode_frame(const ParamMap& params, const Config& cfg, const Tensor& frame);
DiagGaussian infer_static(const ParamMap& params, const Config& cfg,
                          const std::vector<FrameEncoding>& encodings);

}  // namespace vdsm
