// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vdsm/datasets.hpp"
#include "vdsm/objectives.hpp"
#include "vdsm/schedules.hpp"

namespace vdsm {

// Everything a run owns: parameters, optimizer moments, stage bookkeeping and
// the training RNG. Parameters and moments are quantized through 32-bit floats
// after every update so checkpoints round-trip bit for bit.
struct ModelState {
    Config cfg;
    ParamMap params;
    ParamMap adam_m;
    ParamMap adam_v;
    unsigned long long adam_step = 0;
    Stage stage = Stage::pretrain;
    bool pretrain_complete = false;
    int epochs_done_pretrain = 0;
    int epochs_done_sequence = 0;
    AnnealState anneal;  // last applied epoch schedule
    Rng rng{0};
};

// Declaration order fixes initialization draws: encoder, expert bank,
// sequence model, transition.
std::vector<ParamDef> all_param_defs(const Config& cfg);

// Parameters left trainable in the sequential stage: the final layers feeding
// the pose and identity posteriors plus the whole sequence/transition stack.
bool stage2_trainable(const std::string& name);

// Casts every element through float precision in place.
void quantize_f32(Tensor& t);

ModelState init_state(const Config& cfg);

struct MetricsRow {
    Stage stage = Stage::pretrain;
    int epoch = 0;
    LossBreakdown mean;  // per-batch means over the epoch
    AnnealState anneal;
};
using MetricsFn = std::function<void(const MetricsRow&)>;

// Runs up to max_epochs of the identity-grouped stage (negative = all
// remaining). Marks the state pretrain-complete when the configured epoch
// count is reached.
void pretrain(ModelState& state, const Dataset& ds, int max_epochs, const MetricsFn& metrics);

// Sequential stage over full sequences with the freezing mask applied.
// Requires a pretrain-complete state; optimizer moments reset on entry.
void train_sequences(ModelState& state, const Dataset& ds, int max_epochs, const MetricsFn& metrics);

// Ablation entry point: the sequential objective from scratch with nothing
// frozen and no pretraining stage.
void train_single_stage(ModelState& state, const Dataset& ds, int max_epochs, const MetricsFn& metrics);

// Posterior means for one sequence [T,C,H,W].
struct InferredFactors {
    Tensor s;   // {kappa_s}
    Tensor d;   // {kappa_d}
    Tensor z1;  // {kappa_z}
};
InferredFactors infer_factors(const ModelState& state, const Tensor& frames);

struct SequenceEmbedding {
    Tensor s;  // {kappa_s}
    Tensor d;  // {kappa_d}
};
SequenceEmbedding embed_sequence(const ModelState& state, const Tensor& frames);

// Unconditional or conditioned generation: missing factors are drawn from
// their priors, the transition is rolled out (optionally along its mean path),
// and every step is decoded with the blended bank.
struct GenerateInit {
    std::optional<Tensor> s;
    std::optional<Tensor> d;
    std::optional<Tensor> z1;
};
Tensor generate(const ModelState& state, int T, const GenerateInit& init, unsigned long long seed,
                bool zero_transition_noise = false);

// Mean path of the per-step inference chain: the d-driven recurrent unroll
// combined step by step with the previous pose. Training reconstructs along
// this chain, so conditional regeneration has to follow it too; the
// transition-prior rollout in generate() is a different (noisier) path.
// Returns [T, kappa_z].
Tensor inference_mean_path(const ModelState& state, const Tensor& d, int T);

// Decodes a pose path [T, kappa_z] under identity s with the blended bank.
Tensor decode_sequence(const ModelState& state, const Tensor& s, const Tensor& path);

// Conditional regeneration: decode_sequence over the inference mean path of
// the inferred factors.
Tensor reconstruct(const ModelState& state, const Tensor& frames);

enum class SwapFactor { identity, dynamics };

// Recombines inferred factors: the donor (b) contributes the swapped factor,
// the base (a) keeps the rest; decoded along the inference mean path.
Tensor swap_factors(const ModelState& state, const Tensor& a, const Tensor& b, SwapFactor which);

}  // namespace vdsm
