// SPDX-License-Identifier: Apache-2.0
#include "vdsm/objectives.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace vdsm {

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    reconstruction += o.reconstruction;
    kl_s += o.kl_s;
    kl_d += o.kl_d;
    kl_z1 += o.kl_z1;
    kl_z_trans += o.kl_z_trans;
    weighted_total += o.weighted_total;
    return *this;
}

namespace {

Var reparam(Tape& t, Var loc, Var scale, const Tensor& eps) {
    return t.add(loc, t.mul(scale, t.constant(eps)));
}

Var mix_from_s(Tape& t, const Config& cfg, Var s_sample_row, double tau) {
    if (cfg.n_experts == 1) return t.constant(Tensor::scalar(1.0));
    return t.softmax_sharp(t.reshape(s_sample_row, {cfg.kappa_s}), tau);
}

struct Priors {
    Var s_loc, s_scale, unit_loc_z, unit_scale_z;
};

}  // namespace

ElboGraph pretrain_elbo(Tape& t, Binding& p, const Config& cfg, const Tensor& frames,
                        const AnnealState& anneal, const ElboNoise& noise) {
    if (frames.rank() != 4 || frames.dim(0) < 1)
        throw std::invalid_argument("pretrain_elbo: expected a nonempty [N,C,H,W] batch");
    const int n = frames.dim(0);
    if (noise.s.size() != cfg.kappa_s || noise.z.size() != static_cast<std::int64_t>(n) * cfg.kappa_z)
        throw std::invalid_argument("pretrain_elbo: noise shape mismatch");

    Var x = t.constant(frames);
    EncoderOut enc = encode_frames(t, p, cfg, x);
    StaticHeadOut sh = static_head(t, p, cfg, pool_time(t, enc.feats, n, 1));

    Var s_sample = reparam(t, sh.s_loc, sh.s_scale, noise.s.reshaped({1, cfg.kappa_s}));
    Var z_sample = reparam(t, enc.pose_loc, enc.pose_scale, noise.z.reshaped({n, cfg.kappa_z}));

    Var mix = mix_from_s(t, cfg, s_sample, anneal.tau_s);
    Var s_rows = t.broadcast_rows(t.reshape(s_sample, {cfg.kappa_s}), n);
    Var probs = moe_decode(t, p, cfg, mix, t.concat({s_rows, z_sample}, 1));
    Var recon = t.bernoulli_ll(x, probs, kPixelEps);

    Var kl_s = t.kl_diag(sh.s_loc, sh.s_scale, t.constant(Tensor({1, cfg.kappa_s})),
                         t.constant(Tensor::full({1, cfg.kappa_s}, 1.0 / cfg.n_experts)));
    Var kl_z = t.kl_diag(enc.pose_loc, enc.pose_scale, t.constant(Tensor({n, cfg.kappa_z})),
                         t.constant(Tensor::full({n, cfg.kappa_z}, 1.0)));

    Var weighted = t.add_n({recon, t.mul_scalar(kl_s, -anneal.lambda_s), t.mul_scalar(kl_z, -anneal.lambda_z)});

    ElboGraph out;
    out.values.reconstruction = t.scalar_val(recon);
    out.values.kl_s = t.scalar_val(kl_s);
    out.values.kl_z1 = t.scalar_val(kl_z);
    out.values.weighted_total = t.scalar_val(weighted);
    out.neg_elbo = t.neg(weighted);
    return out;
}

ElboGraph sequence_elbo(Tape& t, Binding& p, const Config& cfg, const Tensor& seqs,
                        const AnnealState& anneal, const ElboNoise& noise) {
    if (seqs.rank() != 5) throw std::invalid_argument("sequence_elbo: expected [B,T,C,H,W]");
    const int b = seqs.dim(0), T = seqs.dim(1), c = seqs.dim(2), h = seqs.dim(3), w = seqs.dim(4);
    if (T < 2) throw std::invalid_argument("sequence_elbo: sequences must have T >= 2");
    if (noise.s.size() != static_cast<std::int64_t>(b) * cfg.kappa_s ||
        noise.d.size() != static_cast<std::int64_t>(b) * cfg.kappa_d ||
        noise.z.size() != static_cast<std::int64_t>(b) * T * cfg.kappa_z)
        throw std::invalid_argument("sequence_elbo: noise shape mismatch");

    const std::int64_t frame_elems = static_cast<std::int64_t>(c) * h * w;
    // Frames rearranged t-major so per-step row batches are contiguous.
    Tensor enc_in({T * b, c, h, w});
    for (int bi = 0; bi < b; ++bi)
        for (int ti = 0; ti < T; ++ti)
            std::memcpy(enc_in.data() + (static_cast<std::int64_t>(ti) * b + bi) * frame_elems,
                        seqs.data() + (static_cast<std::int64_t>(bi) * T + ti) * frame_elems,
                        sizeof(double) * static_cast<size_t>(frame_elems));

    EncoderOut enc = encode_frames(t, p, cfg, t.constant(std::move(enc_in)));
    StaticHeadOut sh = static_head(t, p, cfg, pool_time(t, enc.feats, T, b));
    Var s_sample = reparam(t, sh.s_loc, sh.s_scale, noise.s.reshaped({b, cfg.kappa_s}));

    std::vector<Var> pose_rows;
    for (int ti = 0; ti < T; ++ti) pose_rows.push_back(t.slice(enc.pose_loc, 0, ti * b, b));
    GaussianHeads dh = summarize_dynamics(t, p, cfg, pose_rows);
    Var d_sample = reparam(t, dh.loc, dh.scale, noise.d.reshaped({b, cfg.kappa_d}));

    std::vector<Var> hbars = unroll_decoder(t, p, cfg, d_sample, T);

    // Posterior chain with the transition prior evaluated along the sampled path.
    std::vector<Var> z_steps;
    Var kl_z1{};
    std::vector<Var> kl_trans_terms;
    Var z_prev = t.constant(Tensor({b, cfg.kappa_z}));
    for (int ti = 0; ti < T; ++ti) {
        GaussianHeads q = combine(t, p, cfg, z_prev, hbars[static_cast<size_t>(ti)], d_sample);
        if (ti == 0) {
            kl_z1 = t.kl_diag(q.loc, q.scale, t.constant(Tensor({b, cfg.kappa_z})),
                              t.constant(Tensor::full({b, cfg.kappa_z}, 1.0)));
        } else {
            GaussianHeads prior = transition_step(t, p, cfg, z_prev, d_sample);
            kl_trans_terms.push_back(t.kl_diag(q.loc, q.scale, prior.loc, prior.scale));
        }
        Tensor eps({b, cfg.kappa_z});
        for (int bi = 0; bi < b; ++bi)
            for (int j = 0; j < cfg.kappa_z; ++j)
                eps.at(bi, j) = noise.z[(static_cast<std::int64_t>(bi) * T + ti) * cfg.kappa_z + j];
        Var z_t = reparam(t, q.loc, q.scale, eps);
        z_steps.push_back(z_t);
        z_prev = z_t;
    }
    Var kl_trans = t.add_n(kl_trans_terms);

    // Per-sequence blended decoding.
    std::vector<Var> recon_terms;
    for (int bi = 0; bi < b; ++bi) {
        std::vector<Var> z_rows;
        for (int ti = 0; ti < T; ++ti) z_rows.push_back(t.row(z_steps[static_cast<size_t>(ti)], bi));
        Var z_seq = t.concat(z_rows, 0);
        Var s_row = t.row(s_sample, bi);
        Var mix = mix_from_s(t, cfg, s_row, anneal.tau_s);
        Var s_rows = t.broadcast_rows(t.reshape(s_row, {cfg.kappa_s}), T);
        Var probs = moe_decode(t, p, cfg, mix, t.concat({s_rows, z_seq}, 1));
        Tensor x_b({T, c, h, w});
        std::memcpy(x_b.data(), seqs.data() + static_cast<std::int64_t>(bi) * T * frame_elems,
                    sizeof(double) * static_cast<size_t>(T * frame_elems));
        recon_terms.push_back(t.bernoulli_ll(t.constant(std::move(x_b)), probs, kPixelEps));
    }
    Var recon = t.add_n(recon_terms);

    Var kl_s = t.kl_diag(sh.s_loc, sh.s_scale, t.constant(Tensor({b, cfg.kappa_s})),
                         t.constant(Tensor::full({b, cfg.kappa_s}, 1.0 / cfg.n_experts)));
    Var kl_d = t.kl_diag(dh.loc, dh.scale, t.constant(Tensor({b, cfg.kappa_d})),
                         t.constant(Tensor::full({b, cfg.kappa_d}, 1.0)));

    Var weighted = t.add_n({recon, t.mul_scalar(kl_s, -anneal.lambda_s), t.mul_scalar(kl_d, -anneal.lambda_d),
                            t.mul_scalar(t.add(kl_z1, kl_trans), -anneal.lambda_z)});

    ElboGraph out;
    out.values.reconstruction = t.scalar_val(recon);
    out.values.kl_s = t.scalar_val(kl_s);
    out.values.kl_d = t.scalar_val(kl_d);
    out.values.kl_z1 = t.scalar_val(kl_z1);
    out.values.kl_z_trans = t.scalar_val(kl_trans);
    out.values.weighted_total = t.scalar_val(weighted);
    out.neg_elbo = t.neg(weighted);
    return out;
}

double finite_difference_check(const std::function<double(const ParamMap&)>& loss, const ParamMap& params,
                               const std::map<std::string, Tensor>& analytic, double eps,
                               int samples_per_tensor, Rng& rng) {
    if (eps <= 0.0) throw std::invalid_argument("finite_difference_check: eps must be > 0");
    ParamMap work = params;
    double worst = 0.0;
    for (auto& [name, tensor] : work) {
        const auto an_it = analytic.find(name);
        const std::int64_t n = tensor.size();
        const int samples = static_cast<int>(std::min<std::int64_t>(samples_per_tensor, n));
        for (int s = 0; s < samples; ++s) {
            const std::int64_t idx =
                n == 1 ? 0 : static_cast<std::int64_t>(rng.uniform_int(static_cast<int>(n)));
            const double saved = tensor[idx];
            tensor[idx] = saved + eps;
            const double up = loss(work);
            tensor[idx] = saved - eps;
            const double down = loss(work);
            tensor[idx] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double an = an_it == analytic.end() ? 0.0 : an_it->second[idx];
            const double hi = std::max(std::abs(fd), std::abs(an));
            if (hi < 1e-6) {
                if (std::abs(fd - an) < 1e-8) continue;
            }
            worst = std::max(worst, std::abs(fd - an) / std::max(hi, 1e-12));
        }
    }
    return worst;
}

}  // namespace vdsm
