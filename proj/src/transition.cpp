// SPDX-License-Identifier: Apache-2.0
#include "vdsm/transition.hpp"

#include <stdexcept>

namespace vdsm {

std::vector<ParamDef> transition_param_defs(const Config& cfg) {
    const int in = cfg.kappa_z + cfg.kappa_d;
    const int th = cfg.trans_hidden;
    const int kz = cfg.kappa_z;
    return {
        {"trans.f1.w", {in, th}, fanin_bound_linear(in)},
        {"trans.f1.b", {th}, 0.0},
        {"trans.f2.w", {th, kz}, fanin_bound_linear(th)},
        {"trans.f2.b", {kz}, 0.0},  // zero gate bias keeps g near 0.5 at init
        {"trans.f3.w", {in, th}, fanin_bound_linear(in)},
        {"trans.f3.b", {th}, 0.0},
        {"trans.f4.w", {th, kz}, fanin_bound_linear(th)},
        {"trans.f4.b", {kz}, 0.0},
        {"trans.f5.w", {in, kz}, fanin_bound_linear(in)},
        {"trans.f5.b", {kz}, 0.0},
        {"trans.f6.w", {kz, kz}, fanin_bound_linear(kz)},
        {"trans.f6.b", {kz}, 0.0},
    };
}

GaussianHeads transition_step(Tape& t, Binding& p, const Config& cfg, Var z_prev, Var d) {
    if (t.val(z_prev).dim(1) != cfg.kappa_z || t.val(d).dim(1) != cfg.kappa_d ||
        t.val(z_prev).dim(0) != t.val(d).dim(0))
        throw std::invalid_argument("transition_step: dimension mismatch");
    Var u = t.concat({z_prev, d}, 1);
    Var g = t.sigmoid(t.linear(t.relu(t.linear(u, p("trans.f1.w"), p("trans.f1.b"))), p("trans.f2.w"),
                               p("trans.f2.b")));
    Var h = t.linear(t.relu(t.linear(u, p("trans.f3.w"), p("trans.f3.b"))), p("trans.f4.w"),
                     p("trans.f4.b"));
    Var skip = t.linear(u, p("trans.f5.w"), p("trans.f5.b"));
    Var one_minus_g = t.add_scalar(t.neg(g), 1.0);
    Var loc = t.add(t.mul(g, h), t.mul(one_minus_g, skip));
    Var scale =
        t.add_scalar(t.softplus(t.linear(t.relu(h), p("trans.f6.w"), p("trans.f6.b"))), kScaleFloor);
    return {loc, scale};
}

DiagGaussian transition_step_plain(const ParamMap& params, const Config& cfg, const Tensor& z_prev,
                                   const Tensor& d) {
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    auto as_row = [](const Tensor& v) { return v.rank() == 1 ? v.reshaped({1, v.dim(0)}) : v; };
    GaussianHeads h = transition_step(t, p, cfg, t.constant(as_row(z_prev)), t.constant(as_row(d)));
    return DiagGaussian(t.val(h.loc).reshaped({cfg.kappa_z}), t.val(h.scale).reshaped({cfg.kappa_z}));
}

Tensor rollout(const ParamMap& params, const Config& cfg, const Tensor& z1, const Tensor& d, int T,
               const std::vector<Tensor>& noise) {
    if (T < 1) throw std::invalid_argument("rollout: T must be >= 1");
    if (static_cast<int>(noise.size()) != T - 1)
        throw std::invalid_argument("rollout: need exactly T-1 noise vectors");
    Tensor out({T, cfg.kappa_z});
    Tensor z = z1.reshaped({cfg.kappa_z});
    for (int j = 0; j < cfg.kappa_z; ++j) out.at(0, j) = z[j];
    for (int t = 1; t < T; ++t) {
        DiagGaussian prior = transition_step_plain(params, cfg, z, d);
        const Tensor& eps = noise[static_cast<size_t>(t) - 1];
        if (eps.size() != cfg.kappa_z) throw std::invalid_argument("rollout: noise dimension mismatch");
        for (int j = 0; j < cfg.kappa_z; ++j) {
            z[j] = prior.loc[j] + prior.scale[j] * eps[j];
            out.at(t, j) = z[j];
        }
    }
    return out;
}

}  // namespace vdsm
