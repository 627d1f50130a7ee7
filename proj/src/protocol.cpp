// SPDX-License-Identifier: Apache-2.0
#include "vdsm/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "vdsm/parallel.hpp"

namespace vdsm {

EmbeddingTable embed_dataset(const ModelState& state, const Dataset& ds, int threads) {
    const int n = static_cast<int>(ds.sequences.size());
    if (n == 0) throw std::invalid_argument("embed_dataset: empty dataset");
    EmbeddingTable table;
    table.s.resize(static_cast<size_t>(n));
    table.d.resize(static_cast<size_t>(n));
    table.identity_labels.resize(static_cast<size_t>(n));
    table.action_labels.resize(static_cast<size_t>(n));
    parallel_for(n, threads, [&](int i) {
        const LabeledSequence& seq = ds.sequences[static_cast<size_t>(i)];
        SequenceEmbedding emb = embed_sequence(state, seq.frames);
        table.s[static_cast<size_t>(i)] = std::move(emb.s);
        table.d[static_cast<size_t>(i)] = std::move(emb.d);
        table.identity_labels[static_cast<size_t>(i)] = seq.identity_label;
        table.action_labels[static_cast<size_t>(i)] = seq.action_label;
    });
    return table;
}

EvalReport run_eval_protocol(const ModelState& state, const Dataset& ds, unsigned long long seed,
                             int threads) {
    const EmbeddingTable table = embed_dataset(state, ds, threads);
    const int n = static_cast<int>(ds.sequences.size());

    EvalReport report;
    report.n_sequences = n;
    auto probe_cell = [&](const std::vector<Tensor>& embs, const std::vector<int>& labels,
                          const char* emb_name, const char* factor_name) {
        ProbeResult res;
        fit_linear_probe(embs, labels, seed, &res);
        res.embedding = emb_name;
        res.factor = factor_name;
        report.probes.push_back(res);
    };
    probe_cell(table.s, table.identity_labels, "s", "identity");
    probe_cell(table.s, table.action_labels, "s", "action");
    probe_cell(table.d, table.identity_labels, "d", "identity");
    probe_cell(table.d, table.action_labels, "d", "action");

    // Consistency: conditionally regenerate every sequence from its inferred
    // factors, re-encode, and compare full-data probe predictions.
    const Probe probe_s_id = fit_probe_full(table.s, table.identity_labels, ds.n_identities);
    const Probe probe_d_act = fit_probe_full(table.d, table.action_labels, ds.n_actions);
    std::vector<Tensor> rec_s(static_cast<size_t>(n)), rec_d(static_cast<size_t>(n));
    parallel_for(n, threads, [&](int i) {
        const Tensor rec = reconstruct(state, ds.sequences[static_cast<size_t>(i)].frames);
        SequenceEmbedding emb = embed_sequence(state, rec);
        rec_s[static_cast<size_t>(i)] = std::move(emb.s);
        rec_d[static_cast<size_t>(i)] = std::move(emb.d);
    });
    report.consistency_identity = consistency_score(table.s, rec_s, probe_s_id);
    report.consistency_action = consistency_score(table.d, rec_d, probe_d_act);

    // Diversity: unconditional samples scored by the identity probe.
    const int n_gen = std::min(100, std::max(16, n));
    std::vector<Tensor> gen_probs(static_cast<size_t>(n_gen));
    parallel_for(n_gen, threads, [&](int i) {
        const Tensor sample =
            generate(state, ds.seq_len, GenerateInit{}, seed * 1000003ULL + static_cast<unsigned long long>(i));
        SequenceEmbedding emb = embed_sequence(state, sample);
        gen_probs[static_cast<size_t>(i)] = probe_s_id.predict_probs(emb.s);
    });
    const auto [inter, intra] = entropies(gen_probs);
    report.entropy_inter = inter;
    report.entropy_intra = intra;
    report.n_generated = n_gen;
    return report;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("eval: cannot write " + path);
    f << "metric,embedding,factor,value,n\n";
    for (const ProbeResult& p : report.probes)
        f << "probe," << p.embedding << "," << p.factor << "," << p.accuracy << "," << p.n_test << "\n";
    f << "consistency,s,identity," << report.consistency_identity << "," << report.n_sequences << "\n";
    f << "consistency,d,action," << report.consistency_action << "," << report.n_sequences << "\n";
    f << "entropy,inter,identity," << report.entropy_inter << "," << report.n_generated << "\n";
    f << "entropy,intra,identity," << report.entropy_intra << "," << report.n_generated << "\n";
    if (!f) throw std::runtime_error("eval: write failed for " + path);
}

SwapReport run_swap_protocol(const ModelState& state, const Dataset& ds, unsigned long long seed,
                             int threads) {
    const EmbeddingTable table = embed_dataset(state, ds, threads);
    const int n = static_cast<int>(ds.sequences.size());
    if (n < 2) throw std::invalid_argument("swap protocol: need at least two sequences");

    const Probe probe_s_id = fit_probe_full(table.s, table.identity_labels, ds.n_identities);
    const Probe probe_d_act = fit_probe_full(table.d, table.action_labels, ds.n_actions);

    // Every sequence receives a donor from a seeded shuffle; self-donations
    // are bumped to the next slot.
    Rng rng(seed ^ 0x5AFEULL);
    std::vector<int> donor(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) donor[static_cast<size_t>(i)] = i;
    rng.shuffle(donor);
    for (int i = 0; i < n; ++i)
        if (donor[static_cast<size_t>(i)] == i)
            donor[static_cast<size_t>(i)] = (i + 1) % n;

    std::vector<int> id_hits(static_cast<size_t>(n)), dyn_hits(static_cast<size_t>(n));
    parallel_for(n, threads, [&](int i) {
        const Tensor& base = ds.sequences[static_cast<size_t>(i)].frames;
        const int j = donor[static_cast<size_t>(i)];
        const Tensor& from = ds.sequences[static_cast<size_t>(j)].frames;

        const Tensor id_swapped = swap_factors(state, base, from, SwapFactor::identity);
        const int id_pred = probe_s_id.predict(embed_sequence(state, id_swapped).s);
        id_hits[static_cast<size_t>(i)] = id_pred == table.identity_labels[static_cast<size_t>(j)] ? 1 : 0;

        const Tensor dyn_swapped = swap_factors(state, base, from, SwapFactor::dynamics);
        const int dyn_pred = probe_d_act.predict(embed_sequence(state, dyn_swapped).d);
        dyn_hits[static_cast<size_t>(i)] = dyn_pred == table.action_labels[static_cast<size_t>(j)] ? 1 : 0;
    });

    SwapReport report;
    report.n_pairs = n;
    for (int i = 0; i < n; ++i) {
        report.identity_hit_rate += id_hits[static_cast<size_t>(i)];
        report.dynamics_hit_rate += dyn_hits[static_cast<size_t>(i)];
    }
    report.identity_hit_rate /= n;
    report.dynamics_hit_rate /= n;
    return report;
}

}  // namespace vdsm
