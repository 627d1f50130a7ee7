// SPDX-License-Identifier: Apache-2.0
#include "vdsm/moe_decoder.hpp"

#include <stdexcept>

namespace vdsm {

namespace {

std::string stage_name(int expert, int stage, const char* leaf) {
    return "dec.e" + std::to_string(expert) + ".ct" + std::to_string(stage) + "." + leaf;
}

int log2i(int x) {
    int n = 0;
    while ((1 << n) < x) ++n;
    return n;
}

}  // namespace

std::vector<DecoderStage> decoder_stages(const Config& cfg) {
    const int latent = cfg.latent_in();
    const int c = cfg.frame_channels;
    if (cfg.frame_size == 2) return {{latent, c, 2, 1, 0}};
    const std::vector<int> widths = cfg.decoder_widths();
    const int n_mid = cfg.frame_size <= 4 ? 0 : log2i(cfg.frame_size / 4);
    if (static_cast<int>(widths.size()) != n_mid)
        throw std::invalid_argument("decoder_stages: width list does not match frame size");
    std::vector<DecoderStage> stages;
    stages.push_back({latent, n_mid == 0 ? c : widths[0], 4, 1, 0});
    for (int i = 1; i <= n_mid; ++i)
        stages.push_back({widths[i - 1], i == n_mid ? c : widths[i], 4, 2, 1});
    return stages;
}

std::vector<ParamDef> decoder_param_defs(const Config& cfg) {
    const std::vector<DecoderStage> stages = decoder_stages(cfg);
    std::vector<ParamDef> defs;
    for (int e = 0; e < cfg.n_experts; ++e) {
        for (size_t j = 0; j < stages.size(); ++j) {
            const DecoderStage& st = stages[j];
            defs.push_back({stage_name(e, static_cast<int>(j), "w"),
                            {st.in_ch, st.out_ch, st.kernel, st.kernel},
                            fanin_bound_linear(st.in_ch * st.kernel * st.kernel)});
            defs.push_back({stage_name(e, static_cast<int>(j), "b"), {st.out_ch}, 0.0});
        }
    }
    return defs;
}

namespace {

// Runs the stack given per-stage effective weights.
Var run_stack(Tape& t, const Config& cfg, const std::vector<std::pair<Var, Var>>& stage_params, Var zs) {
    const std::vector<DecoderStage> stages = decoder_stages(cfg);
    const Tensor& vz = t.val(zs);
    if (vz.rank() != 2 || vz.dim(1) != cfg.latent_in())
        throw std::invalid_argument("decode: expected inputs [N, kappa_s+kappa_z]");
    const int n = vz.dim(0);
    Var h = t.reshape(zs, {n, cfg.latent_in(), 1, 1});
    for (size_t j = 0; j < stages.size(); ++j) {
        const DecoderStage& st = stages[j];
        h = t.conv2d_transpose(h, stage_params[j].first, stage_params[j].second, st.stride, st.pad);
        h = (j + 1 == stages.size()) ? t.sigmoid(h) : t.leaky_relu(h, kLeakySlope);
    }
    return h;
}

}  // namespace

Var moe_decode(Tape& t, Binding& p, const Config& cfg, Var mix, Var zs) {
    if (t.val(mix).size() != cfg.n_experts)
        throw std::invalid_argument("moe_decode: mix length != n_experts");
    const std::vector<DecoderStage> stages = decoder_stages(cfg);
    std::vector<std::pair<Var, Var>> eff;
    for (size_t j = 0; j < stages.size(); ++j) {
        std::vector<Var> ws, bs;
        for (int e = 0; e < cfg.n_experts; ++e) {
            ws.push_back(p(stage_name(e, static_cast<int>(j), "w")));
            bs.push_back(p(stage_name(e, static_cast<int>(j), "b")));
        }
        eff.emplace_back(t.blend(ws, mix), t.blend(bs, mix));
    }
    return run_stack(t, cfg, eff, zs);
}

Var expert_decode(Tape& t, Binding& p, const Config& cfg, int expert, Var zs) {
    if (expert < 0 || expert >= cfg.n_experts) throw std::invalid_argument("expert_decode: index out of range");
    const std::vector<DecoderStage> stages = decoder_stages(cfg);
    std::vector<std::pair<Var, Var>> eff;
    for (size_t j = 0; j < stages.size(); ++j)
        eff.emplace_back(p(stage_name(expert, static_cast<int>(j), "w")),
                         p(stage_name(expert, static_cast<int>(j), "b")));
    return run_stack(t, cfg, eff, zs);
}

ParamMap blend_bank(const ParamMap& params, const Config& cfg, const Tensor& mix) {
    if (mix.size() != cfg.n_experts) throw std::invalid_argument("blend_bank: mix length != n_experts");
    const std::vector<DecoderStage> stages = decoder_stages(cfg);
    ParamMap out;
    for (size_t j = 0; j < stages.size(); ++j) {
        for (const char* leaf : {"w", "b"}) {
            Tensor acc;
            for (int e = 0; e < cfg.n_experts; ++e) {
                const Tensor& src = params.at(stage_name(e, static_cast<int>(j), leaf));
                if (acc.empty()) acc = Tensor(src.shape());
                for (std::int64_t i = 0; i < src.size(); ++i) acc[i] += mix[e] * src[i];
            }
            out.emplace("ct" + std::to_string(j) + "." + leaf, std::move(acc));
        }
    }
    return out;
}

Tensor decode_frames(const ParamMap& params, const Config& cfg, const Tensor& mix, const Tensor& zs) {
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    Var out = moe_decode(t, p, cfg, t.constant(mix), t.constant(zs));
    return t.val(out);
}

}  // namespace vdsm
