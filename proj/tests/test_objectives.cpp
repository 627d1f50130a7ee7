// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pattern.hpp"
#include "vdsm/objectives.hpp"

using namespace vdsm;

namespace {

Config pretrain_toy_config() {
    Config c;
    c.frame_channels = 1;
    c.frame_size = 2;
    c.enc_widths = {2};
    c.kappa_z = 1;
    c.kappa_s = 2;
    c.n_experts = 2;
    c.feat_s = 2;
    c.kappa_d = 1;
    c.rnn_hidden = 2;
    c.rnn_token_dim = 2;
    c.trans_hidden = 2;
    c.validate();
    return c;
}

Config sequence_toy_config() {
    Config c = pretrain_toy_config();
    c.kappa_s = 1;
    c.n_experts = 1;
    c.validate();
    return c;
}

// Parameters for the pretraining toy: encoder defs then decoder defs filled
// from one continuing pattern stream.
ParamMap pretrain_toy_params(const Config& cfg) {
    std::vector<ParamDef> defs = encoder_param_defs(cfg);
    for (ParamDef& d : decoder_param_defs(cfg)) defs.push_back(std::move(d));
    return testpat::pattern_params(defs);
}

// The sequence toy additionally stacks the sequence and transition modules.
ParamMap sequence_toy_params(const Config& cfg) {
    std::vector<ParamDef> defs = encoder_param_defs(cfg);
    for (ParamDef& d : decoder_param_defs(cfg)) defs.push_back(std::move(d));
    for (ParamDef& d : seq_param_defs(cfg)) defs.push_back(std::move(d));
    for (ParamDef& d : transition_param_defs(cfg)) defs.push_back(std::move(d));
    return testpat::pattern_params(defs);
}

AnnealState pretrain_anneal() {
    AnnealState a;
    a.lambda_s = 0.7;
    a.lambda_z = 1.3;
    a.tau_s = 2.5;
    return a;
}

AnnealState sequence_anneal() {
    AnnealState a;
    a.lambda_s = 0.6;
    a.lambda_d = 0.8;
    a.lambda_z = 1.1;
    a.tau_s = 3.0;
    a.stage = Stage::sequence;
    return a;
}

}  // namespace

TEST_CASE("pretraining objective matches the reference composition") {
    const Config cfg = pretrain_toy_config();
    ParamMap params = pretrain_toy_params(cfg);
    testpat::Gen fg = testpat::frame_gen();
    Tensor frames = fg.take({2, 1, 2, 2});
    testpat::Gen ng = testpat::noise_gen();
    ElboNoise noise;
    noise.s = ng.take({2});
    noise.z = ng.take({2});

    Tape t;
    Binding p(t, params);
    ElboGraph g = pretrain_elbo(t, p, cfg, frames, pretrain_anneal(), noise);
    CHECK(g.values.reconstruction == doctest::Approx(-6.7194731024546703).epsilon(1e-12));
    CHECK(g.values.kl_s == doctest::Approx(3.175014433894086).epsilon(1e-12));
    CHECK(g.values.kl_z1 == doctest::Approx(0.64586113449034155).epsilon(1e-12));
    CHECK(g.values.weighted_total == doctest::Approx(-9.7816026810179757).epsilon(1e-12));
    CHECK(t.scalar_val(g.neg_elbo) == doctest::Approx(9.7816026810179757).epsilon(1e-12));
}

TEST_CASE("sequence objective matches the reference composition") {
    const Config cfg = sequence_toy_config();
    ParamMap params = sequence_toy_params(cfg);
    testpat::Gen fg = testpat::frame_gen();
    Tensor seqs = fg.take({1, 2, 1, 2, 2});
    testpat::Gen ng = testpat::noise_gen();
    ElboNoise noise;
    noise.s = ng.take({1});
    noise.d = ng.take({1});
    noise.z = ng.take({2});

    Tape t;
    Binding p(t, params);
    ElboGraph g = sequence_elbo(t, p, cfg, seqs, sequence_anneal(), noise);
    CHECK(g.values.reconstruction == doctest::Approx(-6.7884092710711137).epsilon(1e-12));
    CHECK(g.values.kl_s == doctest::Approx(0.31264409030256402).epsilon(1e-12));
    CHECK(g.values.kl_d == doctest::Approx(0.18703877754784315).epsilon(1e-12));
    CHECK(g.values.kl_z1 == doctest::Approx(0.27254956091909488).epsilon(1e-12));
    CHECK(g.values.kl_z_trans == doctest::Approx(2.065846648971414).epsilon(1e-12));
    CHECK(g.values.weighted_total == doctest::Approx(-9.6978625781704864).epsilon(1e-12));
}

TEST_CASE("with all weights zeroed the objective reduces to reconstruction") {
    const Config cfg = pretrain_toy_config();
    ParamMap params = pretrain_toy_params(cfg);
    testpat::Gen fg = testpat::frame_gen();
    Tensor frames = fg.take({2, 1, 2, 2});
    testpat::Gen ng = testpat::noise_gen();
    ElboNoise noise;
    noise.s = ng.take({2});
    noise.z = ng.take({2});
    AnnealState a;
    a.lambda_s = 0.0;
    a.lambda_z = 0.0;
    a.tau_s = 2.5;
    Tape t;
    Binding p(t, params);
    ElboGraph g = pretrain_elbo(t, p, cfg, frames, a, noise);
    CHECK(g.values.weighted_total == doctest::Approx(g.values.reconstruction).epsilon(1e-12));

    const Config scfg = sequence_toy_config();
    ParamMap sparams = sequence_toy_params(scfg);
    testpat::Gen sfg = testpat::frame_gen();
    Tensor seqs = sfg.take({1, 2, 1, 2, 2});
    testpat::Gen sng = testpat::noise_gen();
    ElboNoise snoise;
    snoise.s = sng.take({1});
    snoise.d = sng.take({1});
    snoise.z = sng.take({2});
    AnnealState sa;
    sa.lambda_s = 0.0;
    sa.lambda_d = 0.0;
    sa.lambda_z = 0.0;
    Tape st;
    Binding sp(st, sparams);
    ElboGraph sg = sequence_elbo(st, sp, scfg, seqs, sa, snoise);
    CHECK(sg.values.weighted_total == doctest::Approx(sg.values.reconstruction).epsilon(1e-12));
}

TEST_CASE("analytic gradients of the pretraining objective pass a central-difference audit") {
    const Config cfg = pretrain_toy_config();
    ParamMap params = pretrain_toy_params(cfg);
    testpat::Gen fg = testpat::frame_gen();
    const Tensor frames = fg.take({2, 1, 2, 2});
    testpat::Gen ng = testpat::noise_gen();
    ElboNoise noise;
    noise.s = ng.take({2});
    noise.z = ng.take({2});
    const AnnealState a = pretrain_anneal();

    Tape t;
    Binding p(t, params);
    ElboGraph g = pretrain_elbo(t, p, cfg, frames, a, noise);
    t.backward(g.neg_elbo);
    std::map<std::string, Tensor> analytic = p.gradients();

    auto loss = [&](const ParamMap& pm) {
        Tape t2;
        Binding p2(t2, pm);
        ElboGraph g2 = pretrain_elbo(t2, p2, cfg, frames, a, noise);
        return -g2.values.weighted_total;
    };
    Rng rng(41);
    CHECK(finite_difference_check(loss, params, analytic, 1e-5, 6, rng) < 1e-4);
}

TEST_CASE("analytic gradients of the sequence objective pass a central-difference audit") {
    const Config cfg = sequence_toy_config();
    ParamMap params = sequence_toy_params(cfg);
    testpat::Gen fg = testpat::frame_gen();
    const Tensor seqs = fg.take({1, 2, 1, 2, 2});
    testpat::Gen ng = testpat::noise_gen();
    ElboNoise noise;
    noise.s = ng.take({1});
    noise.d = ng.take({1});
    noise.z = ng.take({2});
    const AnnealState a = sequence_anneal();

    Tape t;
    Binding p(t, params);
    ElboGraph g = sequence_elbo(t, p, cfg, seqs, a, noise);
    t.backward(g.neg_elbo);
    std::map<std::string, Tensor> analytic = p.gradients();

    auto loss = [&](const ParamMap& pm) {
        Tape t2;
        Binding p2(t2, pm);
        ElboGraph g2 = sequence_elbo(t2, p2, cfg, seqs, a, noise);
        return -g2.values.weighted_total;
    };
    Rng rng(43);
    CHECK(finite_difference_check(loss, params, analytic, 1e-5, 4, rng) < 1e-4);
}

TEST_CASE("loss accumulation sums every component") {
    LossBreakdown a;
    a.reconstruction = 1.0;
    a.kl_s = 2.0;
    a.kl_d = 3.0;
    a.kl_z1 = 4.0;
    a.kl_z_trans = 5.0;
    a.weighted_total = 6.0;
    LossBreakdown b = a;
    b += a;
    CHECK(b.reconstruction == 2.0);
    CHECK(b.kl_s == 4.0);
    CHECK(b.kl_d == 6.0);
    CHECK(b.kl_z1 == 8.0);
    CHECK(b.kl_z_trans == 10.0);
    CHECK(b.weighted_total == 12.0);
}

TEST_CASE("objectives validate their inputs") {
    const Config cfg = pretrain_toy_config();
    ParamMap params = pretrain_toy_params(cfg);
    Tape t;
    Binding p(t, params);
    ElboNoise noise;
    noise.s = Tensor({2});
    noise.z = Tensor({2});
    AnnealState a;
    CHECK_THROWS_AS(pretrain_elbo(t, p, cfg, Tensor({2, 1, 2}), a, noise), std::invalid_argument);
    ElboNoise bad;
    bad.s = Tensor({3});
    bad.z = Tensor({2});
    CHECK_THROWS_AS(pretrain_elbo(t, p, cfg, Tensor({2, 1, 2, 2}), a, bad), std::invalid_argument);

    const Config scfg = sequence_toy_config();
    ParamMap sparams = sequence_toy_params(scfg);
    Tape st;
    Binding sp(st, sparams);
    ElboNoise snoise;
    snoise.s = Tensor({1});
    snoise.d = Tensor({1});
    snoise.z = Tensor({1});  // needs B*T*kappa_z = 2
    CHECK_THROWS_AS(sequence_elbo(st, sp, scfg, Tensor({1, 2, 1, 2, 2}), a, snoise), std::invalid_argument);
    snoise.z = Tensor({2});
    CHECK_THROWS_AS(sequence_elbo(st, sp, scfg, Tensor({1, 1, 1, 2, 2}), a, snoise), std::invalid_argument);
}
