// SPDX-License-Identifier: Apache-2.0
#include "vdsm/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace vdsm {

namespace {
void check_scale(const Tensor& scale) {
    for (std::int64_t i = 0; i < scale.size(); ++i) {
        if (!(scale[i] > 0.0) || !std::isfinite(scale[i]))
            throw std::invalid_argument("DiagGaussian: scale must be finite and > 0");
    }
}
}  // namespace

DiagGaussian::DiagGaussian(Tensor l, Tensor s) : loc(std::move(l)), scale(std::move(s)) {
    check_same_shape(loc, scale, "DiagGaussian");
    for (std::int64_t i = 0; i < loc.size(); ++i)
        if (!std::isfinite(loc[i])) throw std::invalid_argument("DiagGaussian: non-finite loc");
    check_scale(scale);
}

DiagGaussian DiagGaussian::standard(std::vector<int> shape) {
    Tensor l(shape);
    return DiagGaussian(std::move(l), Tensor::full(std::move(shape), 1.0));
}

DiagGaussian DiagGaussian::shrunk_standard(std::vector<int> shape, int n) {
    if (n < 1) throw std::invalid_argument("shrunk_standard: n must be >= 1");
    Tensor l(shape);
    return DiagGaussian(std::move(l), Tensor::full(std::move(shape), 1.0 / static_cast<double>(n)));
}

Tensor DiagGaussian::sample(Rng& rng) const {
    Tensor out(loc.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = loc[i] + scale[i] * rng.normal();
    return out;
}

double DiagGaussian::log_prob(const Tensor& x) const {
    check_same_shape(x, loc, "DiagGaussian::log_prob");
    constexpr double kLog2Pi = 1.8378770664093454836;
    double lp = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double z = (x[i] - loc[i]) / scale[i];
        lp += -0.5 * kLog2Pi - std::log(scale[i]) - 0.5 * z * z;
    }
    return lp;
}

double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
    check_same_shape(q.loc, p.loc, "kl_diag_gaussian");
    double total = 0.0;
    for (std::int64_t i = 0; i < q.loc.size(); ++i) {
        const double r = q.scale[i] / p.scale[i];
        const double dm = (q.loc[i] - p.loc[i]) / p.scale[i];
        total += -std::log(r) + 0.5 * (r * r + dm * dm) - 0.5;
    }
    return total;
}

double kl_diag_gaussian_mc(const DiagGaussian& q, const DiagGaussian& p, int n_samples, Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("kl mc: need at least one sample");
    double acc = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        Tensor x = q.sample(rng);
        acc += q.log_prob(x) - p.log_prob(x);
    }
    return acc / n_samples;
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

SimplexVector::SimplexVector(Tensor p) : probs(std::move(p)) {
    double total = 0.0;
    for (std::int64_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0)) throw std::invalid_argument("SimplexVector: negative entry");
        total += probs[i];
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("SimplexVector: entries must sum to 1");
}

SimplexVector softmax_sharp(const Tensor& logits, double tau) {
    double m = -1e300;
    for (std::int64_t i = 0; i < logits.size(); ++i) m = std::max(m, tau * logits[i]);
    Tensor out(logits.shape());
    double z = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(tau * logits[i] - m);
        z += out[i];
    }
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] /= z;
    return SimplexVector(std::move(out));
}

double bernoulli_log_prob(const Tensor& x, const Tensor& p, double eps) {
    check_same_shape(x, p, "bernoulli_log_prob");
    double total = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= 0.0 && x[i] <= 1.0)) throw std::invalid_argument("bernoulli_log_prob: x outside [0,1]");
        const double pc = std::min(std::max(p[i], eps), 1.0 - eps);
        total += x[i] * std::log(pc) + (1.0 - x[i]) * std::log(1.0 - pc);
    }
    return total;
}

}  // namespace vdsm
