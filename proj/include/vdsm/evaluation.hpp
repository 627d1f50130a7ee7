// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vdsm/rng.hpp"
#include "vdsm/tensor.hpp"

namespace vdsm {

// Multinomial logistic probe. Linear on purpose: a factor counts as decodable
// only if it is linearly readable from the embedding.
struct Probe {
    Tensor w;  // [dim, n_classes]
    Tensor b;  // {n_classes}
    Tensor feat_mean;  // standardization fitted on the training split
    Tensor feat_std;

    int predict(const Tensor& x) const;
    Tensor predict_probs(const Tensor& x) const;  // {n_classes}, sums to 1
};

struct ProbeResult {
    std::string embedding;
    std::string factor;
    double accuracy = 0.0;
    int n_test = 0;
};

// Full-batch mean-gradient fit on standardized features; deterministic from
// the zero initialization, so duplicating every sample leaves the decision
// function unchanged.
Probe fit_probe_full(const std::vector<Tensor>& embeddings, const std::vector<int>& labels,
                     int n_classes, int iters = 400, double lr = 0.5);

// 80/20 split by shuffled index, fit on the training side, accuracy reported
// on the held-out side only.
Probe fit_linear_probe(const std::vector<Tensor>& embeddings, const std::vector<int>& labels,
                       unsigned long long split_seed, ProbeResult* result);

// Fraction of pairs where the probe predicts the same class for the generated
// sequence's embedding as for its real source.
double consistency_score(const std::vector<Tensor>& real_embeddings,
                         const std::vector<Tensor>& generated_embeddings, const Probe& probe);

// Diversity metrics over per-sequence class distributions, in nats:
// inter = H(mean distribution), intra = mean per-row entropy.
std::pair<double, double> entropies(const std::vector<Tensor>& class_probabilities);

}  // namespace vdsm
