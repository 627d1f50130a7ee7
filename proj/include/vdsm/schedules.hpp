// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vdsm/config.hpp"

namespace vdsm {

enum class Stage { pretrain, sequence };

// Per-epoch annealing weights, a pure function of (epoch, stage, config).
struct AnnealState {
    double lambda_z = 1.0;
    double lambda_s = 1.0;
    double lambda_d = 1.0;
    double tau_s = 1.0;
    int epoch = 0;
    Stage stage = Stage::pretrain;
};

// lambda_z descends and lambda_s ascends along half-cosine profiles between
// their configured endpoints; tau_s ramps linearly from tau_min to tau_max.
AnnealState pretrain_schedule(int epoch, int total_epochs, const Config& cfg);

// lambda_z rises quadratically (slow start) from its start to its end value;
// lambda_s, lambda_d and tau_s are held constant.
AnnealState sequence_schedule(int epoch, int total_epochs, const Config& cfg);

}  // namespace vdsm
