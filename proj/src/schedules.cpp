// SPDX-License-Identifier: Apache-2.0
#include "vdsm/schedules.hpp"

#include <cmath>
#include <stdexcept>

namespace vdsm {

namespace {
// Progress through a stage in [0,1]; a single-epoch stage sits at the start.
double progress(int epoch, int total_epochs) {
    if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs)
        throw std::invalid_argument("schedule: epoch out of range");
    if (total_epochs == 1) return 0.0;
    return static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
}

// 0 -> 1 along a half cosine.
double half_cosine(double u) { return 0.5 * (1.0 - std::cos(M_PI * u)); }
}  // namespace

AnnealState pretrain_schedule(int epoch, int total_epochs, const Config& cfg) {
    const double u = progress(epoch, total_epochs);
    AnnealState a;
    a.lambda_z = cfg.lambda_z_pre_start + (cfg.lambda_z_pre_end - cfg.lambda_z_pre_start) * half_cosine(u);
    a.lambda_s = cfg.lambda_s_pre_start + (cfg.lambda_s_pre_end - cfg.lambda_s_pre_start) * half_cosine(u);
    a.lambda_d = cfg.lambda_d;
    a.tau_s = cfg.tau_min + (cfg.tau_max - cfg.tau_min) * u;
    a.epoch = epoch;
    a.stage = Stage::pretrain;
    return a;
}

AnnealState sequence_schedule(int epoch, int total_epochs, const Config& cfg) {
    const double u = progress(epoch, total_epochs);
    AnnealState a;
    a.lambda_z = cfg.lambda_z_seq_start + (cfg.lambda_z_seq_end - cfg.lambda_z_seq_start) * u * u;
    a.lambda_s = cfg.lambda_s_seq;
    a.lambda_d = cfg.lambda_d;
    a.tau_s = cfg.tau_max;
    a.epoch = epoch;
    a.stage = Stage::sequence;
    return a;
}

}  // namespace vdsm
