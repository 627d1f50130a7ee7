// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "pattern.hpp"
#include "vdsm/sequence_model.hpp"

using namespace vdsm;

namespace {

Config toy_config() {
    Config c;
    c.kappa_z = 2;
    c.kappa_d = 2;
    c.kappa_s = 2;
    c.n_experts = 2;
    c.rnn_hidden = 2;
    c.rnn_token_dim = 3;
    c.validate();
    return c;
}

void check_vec(const Tensor& got, const std::vector<double>& want) {
    REQUIRE(got.size() == static_cast<std::int64_t>(want.size()));
    for (size_t j = 0; j < want.size(); ++j)
        CHECK(got[static_cast<std::int64_t>(j)] == doctest::Approx(want[j]).epsilon(1e-12));
}

}  // namespace

// Cases below share one parameter fill and one continuing input stream; the
// reference numbers come from an independent step-by-step recurrence.
TEST_CASE("dynamics summarizer, decoder unroll, and combiner match references") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(seq_param_defs(cfg));
    testpat::Gen fg = testpat::frame_gen();

    Tensor pose({2, 2});
    for (int i = 0; i < 4; ++i) pose[i] = fg.next();
    DiagGaussian d = summarize_dynamics_plain(params, cfg, pose);
    check_vec(d.loc, {0.47550936005673683, 0.97181569843851678});
    check_vec(d.scale, {0.35872231348714673, 1.0176324698886117});

    Tensor d_in = fg.take({1, 2});
    std::vector<Tensor> hs = unroll_decoder_plain(params, cfg, d_in, 2);
    REQUIRE(hs.size() == 2);
    check_vec(hs[0], {0.037537610668214379, 0.18256970985456228});
    check_vec(hs[1], {0.054622278897676471, 0.16148794731070981});

    Tensor z_prev = fg.take({1, 2});
    Tensor hbar = fg.take({1, 2});
    Tensor dv = fg.take({1, 2});
    DiagGaussian q = combine_plain(params, cfg, z_prev, hbar, dv);
    check_vec(q.loc, {-0.16313735169531463, 0.8217390651591937});
    check_vec(q.scale, {0.3936461556598983, 0.68578268953962129});
}

TEST_CASE("summarizer runs one pass in each direction") {
    // With the two directions sharing weights, reversing the input sequence
    // swaps the two halves of the concatenated summary, so the heads see a
    // genuinely order-sensitive code built from both passes.
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(seq_param_defs(cfg));
    params.at("seq.enc_bwd.W") = params.at("seq.enc_fwd.W");
    params.at("seq.enc_bwd.U") = params.at("seq.enc_fwd.U");
    params.at("seq.enc_bwd.b") = params.at("seq.enc_fwd.b");

    Rng rng(17);
    Tensor pose({3, 2}), reversed({3, 2});
    for (std::int64_t i = 0; i < pose.size(); ++i) pose[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) reversed.at(i, j) = pose.at(2 - i, j);

    // Same weights both directions: d heads read [h_fwd, h_bwd] for the
    // original and [h_bwd, h_fwd] for the reversed input. Reconstruct the
    // expected swap through the loc head by symmetrizing the head weights.
    Tensor& wl = params.at("seq.d_loc.w");
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            const double avg = 0.5 * (wl.at(j, k) + wl.at(j + 2, k));
            wl.at(j, k) = avg;
            wl.at(j + 2, k) = avg;
        }
    Tensor& ws = params.at("seq.d_scale.w");
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            const double avg = 0.5 * (ws.at(j, k) + ws.at(j + 2, k));
            ws.at(j, k) = avg;
            ws.at(j + 2, k) = avg;
        }

    DiagGaussian a = summarize_dynamics_plain(params, cfg, pose);
    DiagGaussian b = summarize_dynamics_plain(params, cfg, reversed);
    for (int j = 0; j < cfg.kappa_d; ++j) {
        CHECK(a.loc[j] == doctest::Approx(b.loc[j]).epsilon(1e-12));
        CHECK(a.scale[j] == doctest::Approx(b.scale[j]).epsilon(1e-12));
    }
}

TEST_CASE("summary is sensitive to frame order in general") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(seq_param_defs(cfg));
    Rng rng(23);
    Tensor pose({4, 2}), reversed({4, 2});
    for (std::int64_t i = 0; i < pose.size(); ++i) pose[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) reversed.at(i, j) = pose.at(3 - i, j);
    DiagGaussian a = summarize_dynamics_plain(params, cfg, pose);
    DiagGaussian b = summarize_dynamics_plain(params, cfg, reversed);
    double diff = 0.0;
    for (int j = 0; j < cfg.kappa_d; ++j) diff += std::abs(a.loc[j] - b.loc[j]);
    CHECK(diff > 1e-6);
}

TEST_CASE("decoder unroll depends on the input only through its conditioning") {
    // The unrolled decoder consumes a learned constant token; two different
    // dynamics codes must produce different hidden tracks while equal codes
    // reproduce the same track exactly.
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(seq_param_defs(cfg));
    Tensor d1({1, 2}), d2({1, 2});
    d1[0] = 0.3;
    d1[1] = -0.4;
    d2[0] = -0.8;
    d2[1] = 0.9;
    std::vector<Tensor> a = unroll_decoder_plain(params, cfg, d1, 3);
    std::vector<Tensor> b = unroll_decoder_plain(params, cfg, d1, 3);
    std::vector<Tensor> c = unroll_decoder_plain(params, cfg, d2, 3);
    for (int t = 0; t < 3; ++t)
        for (int j = 0; j < cfg.rnn_hidden; ++j) CHECK(a[t][j] == b[t][j]);
    double diff = 0.0;
    for (int j = 0; j < cfg.rnn_hidden; ++j) diff += std::abs(a[0][j] - c[0][j]);
    CHECK(diff > 1e-6);
}

TEST_CASE("sequence model guards its input shapes") {
    const Config cfg = toy_config();
    ParamMap params = testpat::pattern_params(seq_param_defs(cfg));
    CHECK_THROWS_AS(summarize_dynamics_plain(params, cfg, Tensor({1, 2})), std::invalid_argument);
    CHECK_THROWS_AS(summarize_dynamics_plain(params, cfg, Tensor({3, 5})), std::invalid_argument);
    CHECK_THROWS_AS(unroll_decoder_plain(params, cfg, Tensor({1, 2}), 0), std::invalid_argument);
    Tape t;
    Binding p(t, params);
    CHECK_THROWS_AS(
        combine(t, p, cfg, t.constant(Tensor({1, 3})), t.constant(Tensor({1, 2})), t.constant(Tensor({1, 2}))),
        std::invalid_argument);
}
