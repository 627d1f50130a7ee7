// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pattern.hpp"
#include "vdsm/moe_decoder.hpp"

using namespace vdsm;

namespace {

Config toy_config() {
    Config c;
    c.frame_channels = 1;
    c.frame_size = 4;
    c.enc_widths = {2};
    c.kappa_z = 2;
    c.kappa_s = 2;
    c.n_experts = 2;
    c.feat_s = 3;
    c.validate();
    return c;
}

// Reference output for two latent rows through the half/half blend, computed
// by an independent direct transpose-convolution implementation.
const std::vector<double> kBlendRef = {
    0.89061698318841453,  0.46549610354944299, 0.46549610354944304, 0.82320804246510559,
    0.46549610354944304,  0.66818777216816616, 0.46549610354944299, 0.46549610354944304,
    0.86028355315788962,  0.46549610354944304, 0.46549610354944304, 0.86028355315788962,
    0.46549610354944304,  0.46549610354944304, 0.66818777216816616, 0.46549610354944304,
    0.68934498368443042,  0.64767238654844594, 0.54910590120013469, 0.36586440898919931,
    0.62038353956118786,  0.6416086381714633,  0.68681999432267771, 0.59231153265904213,
    0.71336114038043874,  0.66097609626518461, 0.56362381491137792, 0.53084314196201332,
    0.63413559101080075,  0.53450389645055696, 0.52937788798925534, 0.60643538886655701};

Tensor toy_inputs() {
    testpat::Gen fg = testpat::frame_gen();
    Tensor zs = fg.take({2, 4});
    for (std::int64_t i = 0; i < zs.size(); ++i) zs[i] = zs[i] * 2.0 - 1.0;
    return zs;
}

}  // namespace

TEST_CASE("half/half blend matches the reference transpose convolution") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(decoder_param_defs(cfg));
    Tape t;
    Binding p(t, params);
    Tensor mix({2});
    mix[0] = 0.5;
    mix[1] = 0.5;
    Var out = moe_decode(t, p, cfg, t.constant(mix), t.constant(toy_inputs()));
    const Tensor& vo = t.val(out);
    REQUIRE(vo.shape() == std::vector<int>({2, 1, 4, 4}));
    for (std::int64_t i = 0; i < vo.size(); ++i)
        CHECK(vo[i] == doctest::Approx(kBlendRef[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("one-hot mixture reproduces the lone expert bit for bit") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(decoder_param_defs(cfg));
    const Tensor zs = toy_inputs();
    for (int e = 0; e < cfg.n_experts; ++e) {
        Tape t;
        Binding p(t, params);
        Tensor mix({2});
        mix[e] = 1.0;
        Var blended = moe_decode(t, p, cfg, t.constant(mix), t.constant(zs));
        Var direct = expert_decode(t, p, cfg, e, t.constant(zs));
        const Tensor& a = t.val(blended);
        const Tensor& b = t.val(direct);
        REQUIRE(a.size() == b.size());
        for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("blending the bank is linear in the mixture weights") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(decoder_param_defs(cfg));
    Tensor m1({2}), m2({2}), mmid({2});
    m1[0] = 0.9; m1[1] = 0.1;
    m2[0] = 0.2; m2[1] = 0.8;
    const double alpha = 0.3;
    for (int i = 0; i < 2; ++i) mmid[i] = alpha * m1[i] + (1 - alpha) * m2[i];
    ParamMap b1 = blend_bank(params, cfg, m1);
    ParamMap b2 = blend_bank(params, cfg, m2);
    ParamMap bm = blend_bank(params, cfg, mmid);
    for (const auto& [name, tm] : bm) {
        const Tensor& t1 = b1.at(name);
        const Tensor& t2 = b2.at(name);
        for (std::int64_t i = 0; i < tm.size(); ++i)
            CHECK(std::abs(tm[i] - (alpha * t1[i] + (1 - alpha) * t2[i])) < 1e-10);
    }
}

TEST_CASE("plain decode agrees with the tape path") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(decoder_param_defs(cfg));
    Tensor mix({2});
    mix[0] = 0.5;
    mix[1] = 0.5;
    Tensor out = decode_frames(params, cfg, mix, toy_inputs());
    REQUIRE(out.shape() == std::vector<int>({2, 1, 4, 4}));
    for (std::int64_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(kBlendRef[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("stage geometry expands the latent column to the frame size") {
    Config cfg = toy_config();

    cfg.frame_size = 32;
    cfg.enc_widths.clear();
    std::vector<DecoderStage> st = decoder_stages(cfg);
    REQUIRE(st.size() == 4);  // 1x1 -> 4x4 -> 8 -> 16 -> 32
    CHECK(st[0].kernel == 4);
    CHECK(st[0].stride == 1);
    CHECK(st[0].pad == 0);
    CHECK(st[0].in_ch == cfg.kappa_s + cfg.kappa_z);
    CHECK(st.back().out_ch == cfg.frame_channels);
    for (size_t i = 1; i < st.size(); ++i) {
        CHECK(st[i].stride == 2);
        CHECK(st[i].pad == 1);
        CHECK(st[i].in_ch == st[i - 1].out_ch);
    }

    cfg.frame_size = 2;
    st = decoder_stages(cfg);
    REQUIRE(st.size() == 1);
    CHECK(st[0].kernel == 2);
    CHECK(st[0].out_ch == cfg.frame_channels);

    // End-to-end shape check on a deeper stack.
    cfg.frame_size = 16;
    ParamMap params;
    Rng rng(5);
    params = init_params(decoder_param_defs(cfg), rng);
    Tape t;
    Binding p(t, params);
    Tensor mix({2});
    mix[0] = 0.25;
    mix[1] = 0.75;
    Tensor zs({3, cfg.kappa_s + cfg.kappa_z});
    for (std::int64_t i = 0; i < zs.size(); ++i) zs[i] = rng.uniform(-1.0, 1.0);
    Var out = moe_decode(t, p, cfg, t.constant(mix), t.constant(zs));
    CHECK(t.val(out).shape() == std::vector<int>({3, cfg.frame_channels, 16, 16}));
    for (std::int64_t i = 0; i < t.val(out).size(); ++i) {
        CHECK(t.val(out)[i] > 0.0);
        CHECK(t.val(out)[i] < 1.0);
    }
}

TEST_CASE("single-decoder ablation uses one expert bank") {
    Config cfg = toy_config();
    cfg.kappa_s = 2;
    cfg.n_experts = 1;
    cfg.validate();
    std::vector<ParamDef> defs = decoder_param_defs(cfg);
    REQUIRE(defs.size() == 2);  // one stage: w and b for the lone expert
    ParamMap params = testpat::pattern_params(defs);
    Tape t;
    Binding p(t, params);
    Tensor mix({1});
    mix[0] = 1.0;
    Var a = moe_decode(t, p, cfg, t.constant(mix), t.constant(toy_inputs()));
    Var b = expert_decode(t, p, cfg, 0, t.constant(toy_inputs()));
    for (std::int64_t i = 0; i < t.val(a).size(); ++i) CHECK(t.val(a)[i] == t.val(b)[i]);
}

TEST_CASE("decoder input and mixture sizes are validated") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(decoder_param_defs(cfg));
    Tape t;
    Binding p(t, params);
    Tensor mix({2});
    mix[0] = 0.5;
    mix[1] = 0.5;
    CHECK_THROWS_AS(moe_decode(t, p, cfg, t.constant(Tensor({3})), t.constant(toy_inputs())),
                    std::invalid_argument);
    CHECK_THROWS_AS(moe_decode(t, p, cfg, t.constant(mix), t.constant(Tensor({2, 7}))),
                    std::invalid_argument);
    CHECK_THROWS_AS(expert_decode(t, p, cfg, 5, t.constant(toy_inputs())), std::invalid_argument);
}
