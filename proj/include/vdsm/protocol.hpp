// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vdsm/evaluation.hpp"
#include "vdsm/trainer.hpp"

namespace vdsm {

// Model-vs-dataset measurement protocols shared by the command line and the
// acceptance suite.

// Posterior-mean embeddings for every sequence, in dataset order.
struct EmbeddingTable {
    std::vector<Tensor> s;
    std::vector<Tensor> d;
    std::vector<int> identity_labels;
    std::vector<int> action_labels;
};
EmbeddingTable embed_dataset(const ModelState& state, const Dataset& ds, int threads = 1);

// The four-cell probe matrix plus consistency and diversity metrics.
struct EvalReport {
    std::vector<ProbeResult> probes;  // (s,identity), (s,action), (d,identity), (d,action)
    double consistency_identity = 0.0;  // probe agreement real vs reconstructed, s embedding
    double consistency_action = 0.0;    // same with d embedding and the action probe
    int n_sequences = 0;
    double entropy_inter = 0.0;  // identity-probe diversity over fresh unconditional samples
    double entropy_intra = 0.0;
    int n_generated = 0;
};
EvalReport run_eval_protocol(const ModelState& state, const Dataset& ds, unsigned long long seed,
                             int threads = 1);

// Fixed CSV schema: metric,embedding,factor,value,n; one row per measurement
// (4 probe + 2 consistency + 2 entropy).
void write_eval_csv(const EvalReport& report, const std::string& path);

// Factor transplants re-encoded and probed: a swap counts as a hit when the
// probe on the swapped sequence predicts the donor's label.
struct SwapReport {
    double identity_hit_rate = 0.0;  // donor color recovered from s after identity swap
    double dynamics_hit_rate = 0.0;  // donor speed recovered from d after dynamics swap
    int n_pairs = 0;
};
SwapReport run_swap_protocol(const ModelState& state, const Dataset& ds, unsigned long long seed,
                             int threads = 1);

}  // namespace vdsm
