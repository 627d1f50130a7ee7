// SPDX-License-Identifier: Apache-2.0
#include "vdsm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace vdsm {

namespace {

Tensor standardize(const Tensor& x, const Tensor& mean, const Tensor& std) {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
    return out;
}

Tensor softmax(const Tensor& logits) {
    Tensor out(logits.shape());
    double m = logits[0];
    for (std::int64_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (std::int64_t i = 0; i < logits.size(); ++i) out[i] /= z;
    return out;
}

Tensor probe_logits(const Probe& p, const Tensor& x) {
    const Tensor xs = standardize(x, p.feat_mean, p.feat_std);
    const int k = p.b.dim(0);
    const int dim = p.w.dim(0);
    Tensor logits({k});
    for (int j = 0; j < k; ++j) {
        double acc = p.b[j];
        for (int i = 0; i < dim; ++i) acc += xs[i] * p.w.at(i, j);
        logits[j] = acc;
    }
    return logits;
}

void validate_probe_inputs(const std::vector<Tensor>& embeddings, const std::vector<int>& labels) {
    if (embeddings.empty() || embeddings.size() != labels.size())
        throw std::invalid_argument("probe: embeddings and labels must be nonempty and paired");
    const std::int64_t dim = embeddings[0].size();
    for (const Tensor& e : embeddings)
        if (e.size() != dim) throw std::invalid_argument("probe: inconsistent embedding width");
    for (int l : labels)
        if (l < 0) throw std::invalid_argument("probe: negative label");
}

}  // namespace

int Probe::predict(const Tensor& x) const {
    const Tensor logits = probe_logits(*this, x);
    int best = 0;
    for (int j = 1; j < logits.dim(0); ++j)
        if (logits[j] > logits[best]) best = j;
    return best;
}

Tensor Probe::predict_probs(const Tensor& x) const { return softmax(probe_logits(*this, x)); }

Probe fit_probe_full(const std::vector<Tensor>& embeddings, const std::vector<int>& labels,
                     int n_classes, int iters, double lr) {
    validate_probe_inputs(embeddings, labels);
    if (n_classes < 2) throw std::invalid_argument("probe: need at least 2 classes");
    const int n = static_cast<int>(embeddings.size());
    const int dim = static_cast<int>(embeddings[0].size());

    Probe p;
    p.feat_mean = Tensor({dim});
    p.feat_std = Tensor({dim});
    for (int i = 0; i < dim; ++i) {
        double mu = 0.0;
        for (const Tensor& e : embeddings) mu += e[i];
        mu /= n;
        double var = 0.0;
        for (const Tensor& e : embeddings) var += (e[i] - mu) * (e[i] - mu);
        var /= n;
        p.feat_mean[i] = mu;
        p.feat_std[i] = std::sqrt(var) + 1e-8;
    }

    std::vector<Tensor> xs;
    xs.reserve(static_cast<size_t>(n));
    for (const Tensor& e : embeddings) xs.push_back(standardize(e, p.feat_mean, p.feat_std));

    p.w = Tensor({dim, n_classes});
    p.b = Tensor({n_classes});
    Tensor gw({dim, n_classes}), gb({n_classes});
    for (int it = 0; it < iters; ++it) {
        gw.fill(0.0);
        gb.fill(0.0);
        for (int s = 0; s < n; ++s) {
            Tensor logits({n_classes});
            for (int j = 0; j < n_classes; ++j) {
                double acc = p.b[j];
                for (int i = 0; i < dim; ++i) acc += xs[static_cast<size_t>(s)][i] * p.w.at(i, j);
                logits[j] = acc;
            }
            Tensor probs = softmax(logits);
            for (int j = 0; j < n_classes; ++j) {
                const double err = probs[j] - (labels[static_cast<size_t>(s)] == j ? 1.0 : 0.0);
                gb[j] += err;
                for (int i = 0; i < dim; ++i) gw.at(i, j) += err * xs[static_cast<size_t>(s)][i];
            }
        }
        const double scale = lr / n;
        for (std::int64_t i = 0; i < gw.size(); ++i) p.w[i] -= scale * gw[i];
        for (std::int64_t i = 0; i < gb.size(); ++i) p.b[i] -= scale * gb[i];
    }
    return p;
}

Probe fit_linear_probe(const std::vector<Tensor>& embeddings, const std::vector<int>& labels,
                       unsigned long long split_seed, ProbeResult* result) {
    validate_probe_inputs(embeddings, labels);
    std::map<int, int> class_counts;
    for (int l : labels) ++class_counts[l];
    if (class_counts.size() < 2) throw std::invalid_argument("probe: need at least 2 distinct classes");
    for (const auto& [cls, cnt] : class_counts)
        if (cnt < 10)
            throw std::invalid_argument("probe: class " + std::to_string(cls) +
                                        " has fewer than 10 samples");
    const int n_classes = class_counts.rbegin()->first + 1;

    const int n = static_cast<int>(embeddings.size());
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(split_seed);
    rng.shuffle(order);
    const int n_train = std::max(1, (n * 4) / 5);

    std::vector<Tensor> train_x;
    std::vector<int> train_y;
    for (int i = 0; i < n_train; ++i) {
        train_x.push_back(embeddings[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        train_y.push_back(labels[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    }
    Probe p = fit_probe_full(train_x, train_y, n_classes);

    int correct = 0, total = 0;
    for (int i = n_train; i < n; ++i) {
        const int idx = order[static_cast<size_t>(i)];
        if (p.predict(embeddings[static_cast<size_t>(idx)]) == labels[static_cast<size_t>(idx)]) ++correct;
        ++total;
    }
    if (result) {
        result->accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
        result->n_test = total;
    }
    return p;
}

double consistency_score(const std::vector<Tensor>& real_embeddings,
                         const std::vector<Tensor>& generated_embeddings, const Probe& probe) {
    if (real_embeddings.empty() || real_embeddings.size() != generated_embeddings.size())
        throw std::invalid_argument("consistency: inputs must be nonempty and paired");
    int agree = 0;
    for (size_t i = 0; i < real_embeddings.size(); ++i)
        if (probe.predict(real_embeddings[i]) == probe.predict(generated_embeddings[i])) ++agree;
    return static_cast<double>(agree) / static_cast<double>(real_embeddings.size());
}

std::pair<double, double> entropies(const std::vector<Tensor>& class_probabilities) {
    if (class_probabilities.empty()) throw std::invalid_argument("entropies: empty input");
    const std::int64_t k = class_probabilities[0].size();
    Tensor mean({static_cast<int>(k)});
    double intra = 0.0;
    for (const Tensor& row : class_probabilities) {
        if (row.size() != k) throw std::invalid_argument("entropies: inconsistent row width");
        double sum = 0.0;
        double h = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            const double pj = row[j];
            if (pj < -1e-12) throw std::invalid_argument("entropies: negative probability");
            sum += pj;
            if (pj > 0.0) h -= pj * std::log(pj);
            mean[j] += pj;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("entropies: row does not sum to 1");
        intra += h;
    }
    const double n = static_cast<double>(class_probabilities.size());
    intra /= n;
    double inter = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
        const double pj = mean[j] / n;
        if (pj > 0.0) inter -= pj * std::log(pj);
    }
    return {inter, intra};
}

}  // namespace vdsm
