// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <stdexcept>

#include "vdsm/schedules.hpp"

using namespace vdsm;

TEST_CASE("pretraining schedule endpoints and midpoint") {
    Config cfg;  // lambda_z 30 -> 1, lambda_s 0.1 -> 1, tau 1 -> 10
    AnnealState first = pretrain_schedule(0, 21, cfg);
    CHECK(first.lambda_z == doctest::Approx(30.0).epsilon(1e-15));
    CHECK(first.lambda_s == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(first.tau_s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(first.stage == Stage::pretrain);

    AnnealState last = pretrain_schedule(20, 21, cfg);
    CHECK(last.lambda_z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(last.lambda_s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(last.tau_s == doctest::Approx(10.0).epsilon(1e-12));

    // Half-cosine midpoint sits exactly halfway between the endpoints.
    AnnealState mid = pretrain_schedule(10, 21, cfg);
    CHECK(mid.lambda_z == doctest::Approx(15.5).epsilon(1e-12));
    CHECK(mid.lambda_s == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(mid.tau_s == doctest::Approx(5.5).epsilon(1e-12));
}

TEST_CASE("pretraining weights move monotonically") {
    Config cfg;
    double prev_z = 1e300, prev_s = -1e300, prev_tau = -1e300;
    for (int e = 0; e < 40; ++e) {
        AnnealState a = pretrain_schedule(e, 40, cfg);
        CHECK(a.lambda_z <= prev_z);
        CHECK(a.lambda_s >= prev_s);
        CHECK(a.tau_s >= prev_tau);
        prev_z = a.lambda_z;
        prev_s = a.lambda_s;
        prev_tau = a.tau_s;
    }
}

TEST_CASE("sequence schedule rises quadratically with a slow start") {
    Config cfg;  // lambda_z 0.1 -> 1.0
    AnnealState first = sequence_schedule(0, 11, cfg);
    CHECK(first.lambda_z == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(first.lambda_s == doctest::Approx(cfg.lambda_s_seq).epsilon(1e-15));
    CHECK(first.lambda_d == doctest::Approx(cfg.lambda_d).epsilon(1e-15));
    CHECK(first.tau_s == doctest::Approx(cfg.tau_max).epsilon(1e-15));
    CHECK(first.stage == Stage::sequence);

    // Midpoint of the rising quadratic: 0.1 + 0.9 * 0.5^2 = 0.325.
    AnnealState mid = sequence_schedule(5, 11, cfg);
    CHECK(mid.lambda_z == doctest::Approx(0.325).epsilon(1e-12));

    AnnealState last = sequence_schedule(10, 11, cfg);
    CHECK(last.lambda_z == doctest::Approx(1.0).epsilon(1e-12));

    // Slow start: the first-quarter rise is smaller than the last-quarter rise.
    const double q1 = sequence_schedule(25, 101, cfg).lambda_z - sequence_schedule(0, 101, cfg).lambda_z;
    const double q4 = sequence_schedule(100, 101, cfg).lambda_z - sequence_schedule(75, 101, cfg).lambda_z;
    CHECK(q1 < q4);

    double prev = -1e300;
    for (int e = 0; e < 17; ++e) {
        AnnealState a = sequence_schedule(e, 17, cfg);
        CHECK(a.lambda_z >= prev);
        prev = a.lambda_z;
    }
}

TEST_CASE("single-epoch stages hold the starting weights") {
    Config cfg;
    AnnealState p = pretrain_schedule(0, 1, cfg);
    CHECK(p.lambda_z == doctest::Approx(30.0).epsilon(1e-15));
    CHECK(p.lambda_s == doctest::Approx(0.1).epsilon(1e-15));
    AnnealState s = sequence_schedule(0, 1, cfg);
    CHECK(s.lambda_z == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("schedules reject epochs outside the stage") {
    Config cfg;
    CHECK_THROWS_AS(pretrain_schedule(-1, 10, cfg), std::invalid_argument);
    CHECK_THROWS_AS(pretrain_schedule(10, 10, cfg), std::invalid_argument);
    CHECK_THROWS_AS(sequence_schedule(5, 5, cfg), std::invalid_argument);
    CHECK_THROWS_AS(sequence_schedule(0, 0, cfg), std::invalid_argument);
}
