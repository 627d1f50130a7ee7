// SPDX-License-Identifier: Apache-2.0
#include "vdsm/sequence_model.hpp"

#include <stdexcept>

namespace vdsm {

std::vector<ParamDef> seq_param_defs(const Config& cfg) {
    std::vector<ParamDef> defs;
    auto append = [&defs](std::vector<ParamDef> more) {
        for (ParamDef& d : more) defs.push_back(std::move(d));
    };
    append(lstm_param_defs("seq.enc_fwd", cfg.kappa_z, cfg.rnn_hidden));
    append(lstm_param_defs("seq.enc_bwd", cfg.kappa_z, cfg.rnn_hidden));
    const int h2 = 2 * cfg.rnn_hidden;
    defs.push_back({"seq.d_loc.w", {h2, cfg.kappa_d}, fanin_bound_linear(h2)});
    defs.push_back({"seq.d_loc.b", {cfg.kappa_d}, 0.0});
    defs.push_back({"seq.d_scale.w", {h2, cfg.kappa_d}, fanin_bound_linear(h2)});
    defs.push_back({"seq.d_scale.b", {cfg.kappa_d}, 0.0});
    defs.push_back({"seq.dec_init.w", {cfg.kappa_d, cfg.rnn_hidden}, fanin_bound_linear(cfg.kappa_d)});
    defs.push_back({"seq.dec_init.b", {cfg.rnn_hidden}, 0.0});
    defs.push_back({"seq.token", {cfg.rnn_token_dim}, 1.0});
    append(lstm_param_defs("seq.dec", cfg.rnn_token_dim, cfg.rnn_hidden));
    const int hhat = cfg.rnn_hidden + cfg.kappa_d;
    defs.push_back({"seq.f7.w", {cfg.kappa_z, hhat}, fanin_bound_linear(cfg.kappa_z)});
    defs.push_back({"seq.f7.b", {hhat}, 0.0});
    defs.push_back({"seq.f8.w", {hhat, cfg.kappa_z}, fanin_bound_linear(hhat)});
    defs.push_back({"seq.f8.b", {cfg.kappa_z}, 0.0});
    defs.push_back({"seq.f9.w", {hhat, cfg.kappa_z}, fanin_bound_linear(hhat)});
    defs.push_back({"seq.f9.b", {cfg.kappa_z}, 0.0});
    return defs;
}

GaussianHeads summarize_dynamics(Tape& t, Binding& p, const Config& cfg,
                                 const std::vector<Var>& pose_rows) {
    if (pose_rows.size() < 2) throw std::invalid_argument("summarize_dynamics: need at least 2 frames");
    const int b = t.val(pose_rows[0]).dim(0);
    const int hid = cfg.rnn_hidden;
    Var hf = t.constant(Tensor({b, hid}));
    Var cf = hf;
    for (const Var& x : pose_rows) {
        LstmState st = lstm_step(t, x, hf, cf, p("seq.enc_fwd.W"), p("seq.enc_fwd.U"), p("seq.enc_fwd.b"));
        hf = st.h;
        cf = st.c;
    }
    Var hb = t.constant(Tensor({b, hid}));
    Var cb = hb;
    for (auto it = pose_rows.rbegin(); it != pose_rows.rend(); ++it) {
        LstmState st = lstm_step(t, *it, hb, cb, p("seq.enc_bwd.W"), p("seq.enc_bwd.U"), p("seq.enc_bwd.b"));
        hb = st.h;
        cb = st.c;
    }
    Var h = t.concat({hf, hb}, 1);
    Var loc = t.linear(h, p("seq.d_loc.w"), p("seq.d_loc.b"));
    Var scale = t.add_scalar(t.softplus(t.linear(h, p("seq.d_scale.w"), p("seq.d_scale.b"))), kScaleFloor);
    return {loc, scale};
}

std::vector<Var> unroll_decoder(Tape& t, Binding& p, const Config& cfg, Var d, int T) {
    if (T < 1) throw std::invalid_argument("unroll_decoder: T must be >= 1");
    const int b = t.val(d).dim(0);
    Var init = t.linear(d, p("seq.dec_init.w"), p("seq.dec_init.b"));
    Var h = init;
    Var c = init;
    Var token = t.broadcast_rows(p("seq.token"), b);
    std::vector<Var> out;
    for (int step = 0; step < T; ++step) {
        LstmState st = lstm_step(t, token, h, c, p("seq.dec.W"), p("seq.dec.U"), p("seq.dec.b"));
        h = st.h;
        c = st.c;
        out.push_back(h);
    }
    return out;
}

GaussianHeads combine(Tape& t, Binding& p, const Config& cfg, Var z_prev, Var hbar, Var d) {
    if (t.val(hbar).dim(1) != cfg.rnn_hidden || t.val(d).dim(1) != cfg.kappa_d ||
        t.val(z_prev).dim(1) != cfg.kappa_z)
        throw std::invalid_argument("combine: dimension mismatch");
    Var hhat = t.concat({hbar, d}, 1);
    Var c = t.mul_scalar(t.add(t.tanh(t.linear(z_prev, p("seq.f7.w"), p("seq.f7.b"))), hhat), 0.5);
    Var loc = t.linear(c, p("seq.f8.w"), p("seq.f8.b"));
    Var scale = t.add_scalar(t.softplus(t.linear(c, p("seq.f9.w"), p("seq.f9.b"))), kScaleFloor);
    return {loc, scale};
}

namespace {
Tensor as_row(const Tensor& v) {
    return v.rank() == 1 ? v.reshaped({1, v.dim(0)}) : v;
}
}  // namespace

DiagGaussian summarize_dynamics_plain(const ParamMap& params, const Config& cfg, const Tensor& pose_locs) {
    if (pose_locs.rank() != 2 || pose_locs.dim(1) != cfg.kappa_z)
        throw std::invalid_argument("summarize_dynamics: expected [T, kappa_z]");
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    std::vector<Var> rows;
    for (int i = 0; i < pose_locs.dim(0); ++i) {
        Tensor r({1, cfg.kappa_z});
        for (int j = 0; j < cfg.kappa_z; ++j) r[j] = pose_locs.at(i, j);
        rows.push_back(t.constant(std::move(r)));
    }
    GaussianHeads h = summarize_dynamics(t, p, cfg, rows);
    return DiagGaussian(t.val(h.loc).reshaped({cfg.kappa_d}), t.val(h.scale).reshaped({cfg.kappa_d}));
}

std::vector<Tensor> unroll_decoder_plain(const ParamMap& params, const Config& cfg, const Tensor& d, int T) {
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    std::vector<Var> hs = unroll_decoder(t, p, cfg, t.constant(as_row(d)), T);
    std::vector<Tensor> out;
    for (Var h : hs) out.push_back(t.val(h).reshaped({cfg.rnn_hidden}));
    return out;
}

DiagGaussian combine_plain(const ParamMap& params, const Config& cfg, const Tensor& z_prev,
                           const Tensor& hbar, const Tensor& d) {
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    GaussianHeads h =
        combine(t, p, cfg, t.constant(as_row(z_prev)), t.constant(as_row(hbar)), t.constant(as_row(d)));
    return DiagGaussian(t.val(h.loc).reshaped({cfg.kappa_z}), t.val(h.scale).reshaped({cfg.kappa_z}));
}

}  // namespace vdsm
