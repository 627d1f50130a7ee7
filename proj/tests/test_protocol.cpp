// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vdsm/protocol.hpp"

using namespace vdsm;

namespace {

Config tiny_config() {
    Config cfg;
    cfg.kappa_z = 3;
    cfg.kappa_s = 2;
    cfg.n_experts = 2;
    cfg.kappa_d = 2;
    cfg.feat_s = 4;
    cfg.rnn_hidden = 4;
    cfg.rnn_token_dim = 2;
    cfg.trans_hidden = 3;
    cfg.frame_channels = 3;
    cfg.frame_size = 8;
    cfg.seq_len = 4;
    cfg.seed = 404;
    cfg.validate();
    return cfg;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.sequences.size() != b.sequences.size()) return false;
    for (size_t i = 0; i < a.sequences.size(); ++i) {
        if (a.sequences[i].identity_label != b.sequences[i].identity_label) return false;
        if (a.sequences[i].action_label != b.sequences[i].action_label) return false;
        if (!tensors_equal(a.sequences[i].frames, b.sequences[i].frames)) return false;
    }
    return true;
}

bool reports_equal(const EvalReport& a, const EvalReport& b) {
    if (a.probes.size() != b.probes.size()) return false;
    for (size_t i = 0; i < a.probes.size(); ++i) {
        if (a.probes[i].embedding != b.probes[i].embedding) return false;
        if (a.probes[i].factor != b.probes[i].factor) return false;
        if (a.probes[i].accuracy != b.probes[i].accuracy) return false;
        if (a.probes[i].n_test != b.probes[i].n_test) return false;
    }
    return a.consistency_identity == b.consistency_identity &&
           a.consistency_action == b.consistency_action && a.n_sequences == b.n_sequences &&
           a.entropy_inter == b.entropy_inter && a.entropy_intra == b.entropy_intra &&
           a.n_generated == b.n_generated;
}

}  // namespace

TEST_CASE("dataset generation is byte-identical for any thread count") {
    const Dataset p1 = gen_pendulum(2, 2, 4, 6, 8, 42, 1);
    const Dataset p3 = gen_pendulum(2, 2, 4, 6, 8, 42, 3);
    CHECK(datasets_equal(p1, p3));
    REQUIRE(p1.pendulum_params.size() == p3.pendulum_params.size());
    for (size_t i = 0; i < p1.pendulum_params.size(); ++i) {
        CHECK(p1.pendulum_params[i].omega == p3.pendulum_params[i].omega);
        CHECK(p1.pendulum_params[i].phi0 == p3.pendulum_params[i].phi0);
    }

    const Dataset s1 = gen_moving_shapes(4, 3, 5, 5, 16, 31, 1);
    const Dataset s2 = gen_moving_shapes(4, 3, 5, 5, 16, 31, 2);
    CHECK(datasets_equal(s1, s2));
    REQUIRE(s1.shape_trajectories.size() == s2.shape_trajectories.size());
    for (size_t i = 0; i < s1.shape_trajectories.size(); ++i) {
        CHECK(s1.shape_trajectories[i].motion == s2.shape_trajectories[i].motion);
        CHECK(s1.shape_trajectories[i].x0 == s2.shape_trajectories[i].x0);
        CHECK(s1.shape_trajectories[i].speed == s2.shape_trajectories[i].speed);
    }
}

TEST_CASE("embed_dataset matches per-sequence embedding and ignores thread count") {
    const ModelState state = init_state(tiny_config());
    const Dataset ds = gen_pendulum(2, 2, 4, 6, 8, 42);

    const EmbeddingTable t1 = embed_dataset(state, ds, 1);
    const EmbeddingTable t3 = embed_dataset(state, ds, 3);
    REQUIRE(t1.s.size() == ds.sequences.size());
    for (size_t i = 0; i < ds.sequences.size(); ++i) {
        CHECK(tensors_equal(t1.s[i], t3.s[i]));
        CHECK(tensors_equal(t1.d[i], t3.d[i]));
        CHECK(t1.identity_labels[i] == ds.sequences[i].identity_label);
        CHECK(t1.action_labels[i] == ds.sequences[i].action_label);
    }

    const SequenceEmbedding solo = embed_sequence(state, ds.sequences[2].frames);
    CHECK(tensors_equal(solo.s, t1.s[2]));
    CHECK(tensors_equal(solo.d, t1.d[2]));

    Dataset empty = ds;
    empty.sequences.clear();
    CHECK_THROWS_AS(embed_dataset(state, empty, 1), std::invalid_argument);
}

TEST_CASE("eval protocol emits the documented cells deterministically") {
    const ModelState state = init_state(tiny_config());
    const Dataset ds = gen_pendulum(2, 2, 4, 60, 8, 777);

    // The split probe refuses classes with fewer than 10 samples; make sure
    // this fixture stays above that line.
    std::map<int, int> id_counts, act_counts;
    for (const auto& seq : ds.sequences) {
        ++id_counts[seq.identity_label];
        ++act_counts[seq.action_label];
    }
    for (const auto& [cls, cnt] : id_counts) REQUIRE(cnt >= 10);
    for (const auto& [cls, cnt] : act_counts) REQUIRE(cnt >= 10);

    const EvalReport r1 = run_eval_protocol(state, ds, 9, 1);
    const EvalReport r2 = run_eval_protocol(state, ds, 9, 3);
    CHECK(reports_equal(r1, r2));

    REQUIRE(r1.probes.size() == 4);
    CHECK(r1.probes[0].embedding == "s");
    CHECK(r1.probes[0].factor == "identity");
    CHECK(r1.probes[1].embedding == "s");
    CHECK(r1.probes[1].factor == "action");
    CHECK(r1.probes[2].embedding == "d");
    CHECK(r1.probes[2].factor == "identity");
    CHECK(r1.probes[3].embedding == "d");
    CHECK(r1.probes[3].factor == "action");
    for (const ProbeResult& p : r1.probes) {
        CHECK(p.accuracy >= 0.0);
        CHECK(p.accuracy <= 1.0);
        CHECK(p.n_test == 12);  // 60 sequences, 80/20 split
    }
    CHECK(r1.n_sequences == 60);
    CHECK(r1.consistency_identity >= 0.0);
    CHECK(r1.consistency_identity <= 1.0);
    CHECK(r1.consistency_action >= 0.0);
    CHECK(r1.consistency_action <= 1.0);

    CHECK(r1.n_generated == 60);
    CHECK(r1.entropy_inter >= 0.0);
    CHECK(r1.entropy_inter <= std::log(2.0) + 1e-9);
    CHECK(r1.entropy_intra >= 0.0);
    CHECK(r1.entropy_intra <= std::log(2.0) + 1e-9);
}

TEST_CASE("eval csv follows the metric,embedding,factor,value,n schema") {
    EvalReport r;
    r.probes.resize(4);
    r.probes[0] = {"s", "identity", 0.875, 12};
    r.probes[1] = {"s", "action", 0.5, 12};
    r.probes[2] = {"d", "identity", 0.25, 12};
    r.probes[3] = {"d", "action", 1.0, 12};
    r.consistency_identity = 0.9;
    r.consistency_action = 0.8;
    r.n_sequences = 60;
    r.entropy_inter = 0.69;
    r.entropy_intra = 0.01;
    r.n_generated = 60;

    const std::string path = "eval_schema_test.csv";
    write_eval_csv(r, path);
    std::ifstream f(path);
    REQUIRE(f.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    f.close();
    std::remove(path.c_str());

    REQUIRE(lines.size() == 9);
    CHECK(lines[0] == "metric,embedding,factor,value,n");
    CHECK(lines[1] == "probe,s,identity,0.875,12");
    CHECK(lines[4] == "probe,d,action,1,12");
    CHECK(lines[5] == "consistency,s,identity,0.9,60");
    CHECK(lines[6] == "consistency,d,action,0.8,60");
    CHECK(lines[7] == "entropy,inter,identity,0.69,60");
    CHECK(lines[8] == "entropy,intra,identity,0.01,60");

    CHECK_THROWS_AS(write_eval_csv(r, "no_such_dir/eval.csv"), std::runtime_error);
}

TEST_CASE("swap protocol scores donor recovery deterministically") {
    const ModelState state = init_state(tiny_config());
    const Dataset ds = gen_pendulum(2, 2, 4, 6, 8, 42);

    const SwapReport r1 = run_swap_protocol(state, ds, 5, 1);
    const SwapReport r2 = run_swap_protocol(state, ds, 5, 3);
    CHECK(r1.identity_hit_rate == r2.identity_hit_rate);
    CHECK(r1.dynamics_hit_rate == r2.dynamics_hit_rate);
    CHECK(r1.n_pairs == 6);
    CHECK(r1.identity_hit_rate >= 0.0);
    CHECK(r1.identity_hit_rate <= 1.0);
    CHECK(r1.dynamics_hit_rate >= 0.0);
    CHECK(r1.dynamics_hit_rate <= 1.0);

    Dataset lone = ds;
    lone.sequences.resize(1);
    lone.pendulum_params.resize(1);
    CHECK_THROWS_AS(run_swap_protocol(state, lone, 5, 1), std::invalid_argument);
}
