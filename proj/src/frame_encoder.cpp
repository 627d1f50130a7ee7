// SPDX-License-Identifier: Apache-2.0
#include "vdsm/frame_encoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace vdsm {

namespace {
std::string conv_name(int i, const char* leaf) { return "enc.conv" + std::to_string(i) + "." + leaf; }
}  // namespace

std::vector<ParamDef> encoder_param_defs(const Config& cfg) {
    std::vector<ParamDef> defs;
    const std::vector<int> widths = cfg.encoder_widths();
    const int k = cfg.enc_blur ? 3 : 4;
    int in_ch = cfg.frame_channels;
    for (size_t i = 0; i < widths.size(); ++i) {
        defs.push_back({conv_name(static_cast<int>(i), "w"), {widths[i], in_ch, k, k},
                        fanin_bound_linear(in_ch * k * k)});
        defs.push_back({conv_name(static_cast<int>(i), "b"), {widths[i]}, 0.0});
        in_ch = widths[i];
    }
    const int sp = cfg.trunk_spatial();
    const int flat = in_ch * sp * sp;
    defs.push_back({"enc.feat.w", {flat, cfg.feat_s}, fanin_bound_linear(flat)});
    defs.push_back({"enc.feat.b", {cfg.feat_s}, 0.0});
    defs.push_back({"enc.z_head.w", {flat, 2 * cfg.kappa_z}, fanin_bound_linear(flat)});
    defs.push_back({"enc.z_head.b", {2 * cfg.kappa_z}, 0.0});
    defs.push_back({"enc.s_loc.w", {cfg.feat_s, cfg.kappa_s}, fanin_bound_linear(cfg.feat_s)});
    defs.push_back({"enc.s_loc.b", {cfg.kappa_s}, 0.0});
    defs.push_back({"enc.s_scale.w", {cfg.feat_s, cfg.kappa_s}, fanin_bound_linear(cfg.feat_s)});
    defs.push_back({"enc.s_scale.b", {cfg.kappa_s}, 0.0});
    return defs;
}

EncoderOut encode_frames(Tape& t, Binding& p, const Config& cfg, Var x) {
    const Tensor& vx = t.val(x);
    if (vx.rank() != 4 || vx.dim(1) != cfg.frame_channels || vx.dim(2) != cfg.frame_size ||
        vx.dim(3) != cfg.frame_size)
        throw std::invalid_argument("encode_frames: frame shape does not match configuration");
    const std::vector<int> widths = cfg.encoder_widths();
    Var h = x;
    for (size_t i = 0; i < widths.size(); ++i) {
        Var w = p(conv_name(static_cast<int>(i), "w"));
        Var b = p(conv_name(static_cast<int>(i), "b"));
        if (cfg.enc_blur) {
            h = t.avg_pool2(t.leaky_relu(t.conv2d(h, w, b, 1, 1), kLeakySlope));
        } else {
            h = t.leaky_relu(t.conv2d(h, w, b, 2, 1), kLeakySlope);
        }
    }
    const Tensor& vh = t.val(h);
    const int n = vh.dim(0);
    const int flat = static_cast<int>(vh.size() / n);
    Var hf = t.reshape(h, {n, flat});
    Var feats = t.leaky_relu(t.linear(hf, p("enc.feat.w"), p("enc.feat.b")), kLeakySlope);
    Var zp = t.linear(hf, p("enc.z_head.w"), p("enc.z_head.b"));
    Var loc = t.slice(zp, 1, 0, cfg.kappa_z);
    Var scale = t.add_scalar(t.softplus(t.slice(zp, 1, cfg.kappa_z, cfg.kappa_z)), kScaleFloor);
    return {loc, scale, feats};
}

StaticHeadOut static_head(Tape& t, Binding& p, const Config& cfg, Var feats) {
    Var s_loc = t.linear(feats, p("enc.s_loc.w"), p("enc.s_loc.b"));
    Var s_scale =
        t.add_scalar(t.softplus(t.linear(feats, p("enc.s_scale.w"), p("enc.s_scale.b"))), kScaleFloor);
    return {s_loc, s_scale};
}

Var pool_time(Tape& t, Var feats, int T, int B) {
    const Tensor& vf = t.val(feats);
    if (vf.rank() != 2 || vf.dim(0) != T * B) throw std::invalid_argument("pool_time: expected [T*B, F]");
    const int f = vf.dim(1);
    return t.reshape(t.mean_rows(t.reshape(feats, {T, B * f})), {B, f});
}

FrameEncoding encode_frame(const ParamMap& params, const Config& cfg, const Tensor& frame) {
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    Tensor x = frame.rank() == 3
                   ? frame.reshaped({1, frame.dim(0), frame.dim(1), frame.dim(2)})
                   : frame;
    EncoderOut out = encode_frames(t, p, cfg, t.constant(std::move(x)));
    DiagGaussian pose(t.val(out.pose_loc).reshaped({cfg.kappa_z}),
                      t.val(out.pose_scale).reshaped({cfg.kappa_z}));
    return {std::move(pose), t.val(out.feats).reshaped({cfg.feat_s})};
}

DiagGaussian infer_static(const ParamMap& params, const Config& cfg,
                          const std::vector<FrameEncoding>& encodings) {
    if (encodings.empty()) throw std::invalid_argument("infer_static: empty encoding list");
    Tape t;
    Binding p(t, params, [](const std::string&) { return false; });
    // Summation order is canonicalized per coordinate so the pooled mean is
    // bit-for-bit invariant to frame order.
    Tensor pooled({1, cfg.feat_s});
    std::vector<double> column(encodings.size());
    for (int i = 0; i < cfg.feat_s; ++i) {
        for (size_t e = 0; e < encodings.size(); ++e) {
            if (encodings[e].identity_feats.size() != cfg.feat_s)
                throw std::invalid_argument("infer_static: feature width mismatch");
            column[e] = encodings[e].identity_feats[i];
        }
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (double v : column) acc += v;
        pooled[i] = acc / static_cast<double>(encodings.size());
    }
    StaticHeadOut s = static_head(t, p, cfg, t.constant(std::move(pooled)));
    return DiagGaussian(t.val(s.s_loc).reshaped({cfg.kappa_s}), t.val(s.s_scale).reshaped({cfg.kappa_s}));
}

}  // namespace vdsm
