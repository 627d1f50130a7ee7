// SPDX-License-Identifier: Apache-2.0
#include "vdsm/trainer.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace vdsm {

namespace {

unsigned long long mix_seed(unsigned long long seed, unsigned long long salt) {
    unsigned long long x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

ParamMap zeros_like(const ParamMap& params) {
    ParamMap out;
    for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape()));
    return out;
}

LossBreakdown scaled(const LossBreakdown& b, double f) {
    LossBreakdown out = b;
    out.reconstruction *= f;
    out.kl_s *= f;
    out.kl_d *= f;
    out.kl_z1 *= f;
    out.kl_z_trans *= f;
    out.weighted_total *= f;
    return out;
}

// Clipped Adam descent step on the negated objective, then re-quantization of
// every touched tensor. Parameters absent from grads are left alone.
void adam_update(ModelState& st, const std::map<std::string, Tensor>& grads, double lr) {
    const Config& cfg = st.cfg;
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (std::int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    const double norm = std::sqrt(sq);
    const double scale = (norm > cfg.grad_clip && norm > 0.0) ? cfg.grad_clip / norm : 1.0;

    st.adam_step += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.adam_step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.adam_step));

    for (const auto& [name, g] : grads) {
        Tensor& p = st.params.at(name);
        Tensor& m = st.adam_m.at(name);
        Tensor& v = st.adam_v.at(name);
        if (!p.same_shape(g)) throw std::logic_error("adam_update: gradient shape mismatch for " + name);
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] * scale;
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        }
        quantize_f32(p);
        quantize_f32(m);
        quantize_f32(v);
    }
}

void check_dataset(const Dataset& ds, const Config& cfg, const char* where) {
    if (ds.sequences.empty()) throw std::invalid_argument(std::string(where) + ": empty dataset");
    if (ds.frame_channels != cfg.frame_channels || ds.frame_size != cfg.frame_size)
        throw std::invalid_argument(std::string(where) + ": dataset frame geometry does not match config");
    if (ds.seq_len < 2) throw std::invalid_argument(std::string(where) + ": sequences must have T >= 2");
}

// Shared epoch loop for both sequential-objective entry points.
void run_sequence_epochs(ModelState& st, const Dataset& ds, int max_epochs, const MetricsFn& metrics,
                         const std::function<bool(const std::string&)>& trainable) {
    const Config& cfg = st.cfg;
    check_dataset(ds, cfg, "train_sequences");
    if (st.stage == Stage::pretrain) {
        // Fresh optimizer for the new objective and freezing mask.
        st.adam_m = zeros_like(st.params);
        st.adam_v = zeros_like(st.params);
        st.adam_step = 0;
        st.stage = Stage::sequence;
    }
    const int target = cfg.epochs_sequence;
    const int end = max_epochs < 0 ? target
                                   : std::min(target, st.epochs_done_sequence + max_epochs);
    for (int e = st.epochs_done_sequence; e < end; ++e) {
        const AnnealState anneal = sequence_schedule(e, cfg.epochs_sequence, cfg);
        SequenceBatcher batcher(ds, cfg.batch_sequence,
                                mix_seed(cfg.seed ^ 0x5EC5ULL, static_cast<unsigned long long>(e)));
        const int nb = cfg.batches_per_epoch_sequence;
        LossBreakdown acc;
        for (int bi = 0; bi < nb; ++bi) {
            Tensor seqs = batcher.next();
            const int b = seqs.dim(0), T = seqs.dim(1);
            ElboNoise noise;
            noise.s = Tensor({b, cfg.kappa_s});
            noise.d = Tensor({b, cfg.kappa_d});
            noise.z = Tensor({b, T, cfg.kappa_z});
            st.rng.fill_normal(noise.s.data(), noise.s.size());
            st.rng.fill_normal(noise.d.data(), noise.d.size());
            st.rng.fill_normal(noise.z.data(), noise.z.size());

            Tape t;
            Binding p(t, st.params, trainable);
            ElboGraph g = sequence_elbo(t, p, cfg, seqs, anneal, noise);
            t.backward(g.neg_elbo);
            adam_update(st, p.gradients(), cfg.lr_sequence);
            acc += g.values;
        }
        st.epochs_done_sequence = e + 1;
        st.anneal = anneal;
        if (metrics) metrics(MetricsRow{Stage::sequence, e, scaled(acc, 1.0 / nb), anneal});
    }
}

}  // namespace

std::vector<ParamDef> all_param_defs(const Config& cfg) {
    std::vector<ParamDef> defs = encoder_param_defs(cfg);
    auto append = [&defs](std::vector<ParamDef> more) {
        for (auto& d : more) defs.push_back(std::move(d));
    };
    append(decoder_param_defs(cfg));
    append(seq_param_defs(cfg));
    append(transition_param_defs(cfg));
    return defs;
}

bool stage2_trainable(const std::string& name) {
    static const char* prefixes[] = {"enc.z_head.", "enc.s_loc.", "enc.s_scale.", "seq.", "trans."};
    for (const char* p : prefixes)
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

void quantize_f32(Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
}

ModelState init_state(const Config& cfg) {
    cfg.validate();
    ModelState st;
    st.cfg = cfg;
    st.rng = Rng(cfg.seed);
    st.params = init_params(all_param_defs(cfg), st.rng);
    for (auto& [name, t] : st.params) quantize_f32(t);
    st.adam_m = zeros_like(st.params);
    st.adam_v = zeros_like(st.params);
    if (cfg.epochs_pretrain > 0) st.anneal = pretrain_schedule(0, cfg.epochs_pretrain, cfg);
    return st;
}

void pretrain(ModelState& st, const Dataset& ds, int max_epochs, const MetricsFn& metrics) {
    const Config& cfg = st.cfg;
    if (st.stage != Stage::pretrain)
        throw std::logic_error("pretrain: state has already advanced to the sequential stage");
    check_dataset(ds, cfg, "pretrain");
    const int target = cfg.epochs_pretrain;
    const int end = max_epochs < 0 ? target : std::min(target, st.epochs_done_pretrain + max_epochs);
    for (int e = st.epochs_done_pretrain; e < end; ++e) {
        const AnnealState anneal = pretrain_schedule(e, cfg.epochs_pretrain, cfg);
        IdentityBatcher batcher(ds, cfg.batch_pretrain,
                                mix_seed(cfg.seed ^ 0xA11CULL, static_cast<unsigned long long>(e)));
        const int nb = cfg.batches_per_epoch_pretrain;
        LossBreakdown acc;
        for (int bi = 0; bi < nb; ++bi) {
            Tensor frames = batcher.next();
            const int n = frames.dim(0);
            ElboNoise noise;
            noise.s = Tensor({cfg.kappa_s});
            noise.z = Tensor({n, cfg.kappa_z});
            st.rng.fill_normal(noise.s.data(), noise.s.size());
            st.rng.fill_normal(noise.z.data(), noise.z.size());

            Tape t;
            Binding p(t, st.params);
            ElboGraph g = pretrain_elbo(t, p, cfg, frames, anneal, noise);
            t.backward(g.neg_elbo);
            adam_update(st, p.gradients(), cfg.lr_pretrain);
            acc += g.values;
        }
        st.epochs_done_pretrain = e + 1;
        st.anneal = anneal;
        if (metrics) metrics(MetricsRow{Stage::pretrain, e, scaled(acc, 1.0 / nb), anneal});
    }
    if (st.epochs_done_pretrain >= target) st.pretrain_complete = true;
}

void train_sequences(ModelState& st, const Dataset& ds, int max_epochs, const MetricsFn& metrics) {
    if (!st.pretrain_complete)
        throw std::logic_error("train_sequences: state has not completed the pretraining stage");
    run_sequence_epochs(st, ds, max_epochs, metrics, stage2_trainable);
}

void train_single_stage(ModelState& st, const Dataset& ds, int max_epochs, const MetricsFn& metrics) {
    if (st.pretrain_complete || st.epochs_done_pretrain > 0)
        throw std::logic_error("train_single_stage: state already carries pretraining progress");
    run_sequence_epochs(st, ds, max_epochs, metrics, nullptr);
}

InferredFactors infer_factors(const ModelState& st, const Tensor& frames) {
    const Config& cfg = st.cfg;
    if (frames.rank() != 4 || frames.dim(0) < 2)
        throw std::invalid_argument("infer_factors: expected [T,C,H,W] with T >= 2");
    if (frames.dim(1) != cfg.frame_channels || frames.dim(2) != cfg.frame_size ||
        frames.dim(3) != cfg.frame_size)
        throw std::invalid_argument("infer_factors: frame geometry does not match config");
    const int T = frames.dim(0);
    const std::int64_t frame_elems = frames.size() / T;

    std::vector<FrameEncoding> encodings;
    Tensor pose_locs({T, cfg.kappa_z});
    for (int ti = 0; ti < T; ++ti) {
        Tensor frame(std::vector<int>{cfg.frame_channels, cfg.frame_size, cfg.frame_size});
        std::memcpy(frame.data(), frames.data() + ti * frame_elems,
                    sizeof(double) * static_cast<size_t>(frame_elems));
        encodings.push_back(encode_frame(st.params, cfg, frame));
        std::memcpy(pose_locs.data() + static_cast<std::int64_t>(ti) * cfg.kappa_z,
                    encodings.back().pose.loc.data(), sizeof(double) * static_cast<size_t>(cfg.kappa_z));
    }

    InferredFactors out;
    out.s = infer_static(st.params, cfg, encodings).loc;
    out.d = summarize_dynamics_plain(st.params, cfg, pose_locs).loc;
    const Tensor hbar1 = unroll_decoder_plain(st.params, cfg, out.d, 1).front();
    out.z1 = combine_plain(st.params, cfg, Tensor({cfg.kappa_z}), hbar1, out.d).loc;
    return out;
}

SequenceEmbedding embed_sequence(const ModelState& st, const Tensor& frames) {
    InferredFactors f = infer_factors(st, frames);
    return SequenceEmbedding{std::move(f.s), std::move(f.d)};
}

Tensor generate(const ModelState& st, int T, const GenerateInit& init, unsigned long long seed,
                bool zero_transition_noise) {
    const Config& cfg = st.cfg;
    if (T < 1) throw std::invalid_argument("generate: T must be >= 1");
    auto check_dim = [](const Tensor& t, int want, const char* what) {
        if (t.size() != want)
            throw std::invalid_argument(std::string("generate: ") + what + " has wrong dimension");
    };
    Rng rng(seed);
    // Missing factors consume prior draws in a fixed order: s, d, z1, then
    // transition noise, so a given seed is reproducible under partial inits.
    Tensor s, d, z1;
    if (init.s) {
        check_dim(*init.s, cfg.kappa_s, "s");
        s = init.s->reshaped({cfg.kappa_s});
    } else {
        s = DiagGaussian::shrunk_standard({cfg.kappa_s}, cfg.n_experts).sample(rng);
    }
    if (init.d) {
        check_dim(*init.d, cfg.kappa_d, "d");
        d = init.d->reshaped({cfg.kappa_d});
    } else {
        d = DiagGaussian::standard({cfg.kappa_d}).sample(rng);
    }
    if (init.z1) {
        check_dim(*init.z1, cfg.kappa_z, "z1");
        z1 = init.z1->reshaped({cfg.kappa_z});
    } else {
        z1 = DiagGaussian::standard({cfg.kappa_z}).sample(rng);
    }

    std::vector<Tensor> noise;
    for (int ti = 1; ti < T; ++ti) {
        Tensor eps({cfg.kappa_z});
        if (!zero_transition_noise) rng.fill_normal(eps.data(), eps.size());
        noise.push_back(std::move(eps));
    }
    Tensor path = rollout(st.params, cfg, z1, d, T, noise);  // [T, kappa_z]
    return decode_sequence(st, s, path);
}

Tensor inference_mean_path(const ModelState& st, const Tensor& d, int T) {
    const Config& cfg = st.cfg;
    if (T < 1) throw std::invalid_argument("inference_mean_path: T must be >= 1");
    if (d.size() != cfg.kappa_d)
        throw std::invalid_argument("inference_mean_path: d has wrong dimension");
    const Tensor d_row = d.reshaped({cfg.kappa_d});
    const std::vector<Tensor> hbars = unroll_decoder_plain(st.params, cfg, d_row, T);
    Tensor path({T, cfg.kappa_z});
    Tensor z_prev({cfg.kappa_z});
    for (int ti = 0; ti < T; ++ti) {
        z_prev = combine_plain(st.params, cfg, z_prev, hbars[static_cast<size_t>(ti)], d_row).loc;
        std::memcpy(path.data() + static_cast<std::int64_t>(ti) * cfg.kappa_z, z_prev.data(),
                    sizeof(double) * static_cast<size_t>(cfg.kappa_z));
    }
    return path;
}

Tensor decode_sequence(const ModelState& st, const Tensor& s, const Tensor& path) {
    const Config& cfg = st.cfg;
    if (s.size() != cfg.kappa_s)
        throw std::invalid_argument("decode_sequence: s has wrong dimension");
    if (path.rank() != 2 || path.dim(1) != cfg.kappa_z)
        throw std::invalid_argument("decode_sequence: path must be [T, kappa_z]");
    const Tensor s_row = s.reshaped({cfg.kappa_s});
    const int T = path.dim(0);
    Tensor mix = cfg.n_experts == 1 ? Tensor::scalar(1.0)
                                    : softmax_sharp(s_row, cfg.tau_max).probs;
    Tensor zs({T, cfg.latent_in()});
    for (int ti = 0; ti < T; ++ti) {
        std::memcpy(zs.data() + static_cast<std::int64_t>(ti) * cfg.latent_in(), s_row.data(),
                    sizeof(double) * static_cast<size_t>(cfg.kappa_s));
        std::memcpy(zs.data() + static_cast<std::int64_t>(ti) * cfg.latent_in() + cfg.kappa_s,
                    path.data() + static_cast<std::int64_t>(ti) * cfg.kappa_z,
                    sizeof(double) * static_cast<size_t>(cfg.kappa_z));
    }
    return decode_frames(st.params, cfg, mix, zs);
}

Tensor reconstruct(const ModelState& st, const Tensor& frames) {
    InferredFactors f = infer_factors(st, frames);
    return decode_sequence(st, f.s, inference_mean_path(st, f.d, frames.dim(0)));
}

Tensor swap_factors(const ModelState& st, const Tensor& a, const Tensor& b, SwapFactor which) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0))
        throw std::invalid_argument("swap_factors: sequences must share [T,C,H,W]");
    InferredFactors fa = infer_factors(st, a);
    InferredFactors fb = infer_factors(st, b);
    const Tensor& s = which == SwapFactor::identity ? fb.s : fa.s;
    const Tensor& d = which == SwapFactor::identity ? fa.d : fb.d;
    return decode_sequence(st, s, inference_mean_path(st, d, a.dim(0)));
}

}  // namespace vdsm
