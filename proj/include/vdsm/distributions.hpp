// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vdsm/rng.hpp"
#include "vdsm/tensor.hpp"

namespace vdsm {

// Smallest scale any Gaussian head may emit; raw head outputs pass through
// softplus and this floor is added on top, so scales stay strictly positive.
inline constexpr double kScaleFloor = 1e-5;
// Probabilities are clamped away from {0,1} by this margin inside Bernoulli
// log likelihoods.
inline constexpr double kPixelEps = 1e-6;

// Diagonal Gaussian with per-coordinate location and standard deviation.
struct DiagGaussian {
    Tensor loc;
    Tensor scale;

    DiagGaussian() = default;
    DiagGaussian(Tensor loc, Tensor scale);

    static DiagGaussian standard(std::vector<int> shape);
    // Zero mean, stddev 1/n in every coordinate (identity-code prior, with n
    // the expert count).
    static DiagGaussian shrunk_standard(std::vector<int> shape, int n);

    Tensor sample(Rng& rng) const;
    double log_prob(const Tensor& x) const;
};

// Sum over coordinates of KL(q || p) between diagonal Gaussians.
double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p);

// Monte-Carlo estimate of the same KL; used only to cross-check the closed form.
double kl_diag_gaussian_mc(const DiagGaussian& q, const DiagGaussian& p, int n_samples, Rng& rng);

double softplus(double x);
double sigmoid(double x);

// Entries sum to 1 and are each >= 0; built from logits via softmax(tau * v).
struct SimplexVector {
    Tensor probs;
    explicit SimplexVector(Tensor probs);
};

SimplexVector softmax_sharp(const Tensor& logits, double tau);

// Sum over elements of x log(p) + (1-x) log(1-p) with p clamped to
// [eps, 1-eps]. x must lie in [0,1].
double bernoulli_log_prob(const Tensor& x, const Tensor& p, double eps = kPixelEps);

}  // namespace vdsm
