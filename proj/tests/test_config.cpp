// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <stdexcept>

#include "vdsm/config.hpp"

using namespace vdsm;

TEST_CASE("config round trips through its text form") {
    Config a;
    a.kappa_z = 5;
    a.frame_size = 16;
    a.lr_sequence = 0.00123;
    a.enc_blur = true;
    a.enc_widths = {8, 8, 16};
    Config b = parse_config_text(a.serialize());
    CHECK(b.kappa_z == 5);
    CHECK(b.frame_size == 16);
    CHECK(b.lr_sequence == 0.00123);
    CHECK(b.enc_blur == true);
    CHECK(b.enc_widths == std::vector<int>{8, 8, 16});
    CHECK(b.serialize() == a.serialize());
}

TEST_CASE("unknown keys and malformed lines are rejected") {
    CHECK_THROWS_AS(parse_config_text("kappa_q = 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("kappa_z 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("kappa_z = banana\n"), std::invalid_argument);
    CHECK_NOTHROW(parse_config_text("# comment\n\nkappa_z = 3 # trailing\n"));
}

TEST_CASE("validation catches inconsistent settings") {
    Config c;
    CHECK_NOTHROW(c.validate());
    c.n_experts = 3;  // neither kappa_s nor 1
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.n_experts = 1;
    CHECK_NOTHROW(c.validate());
    c = Config{};
    c.frame_size = 24;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = Config{};
    c.enc_widths = {4, 4};  // needs 4 stages at frame 32
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = Config{};
    c.seq_len = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("derived architecture geometry") {
    Config c;
    CHECK(c.encoder_widths() == std::vector<int>{16, 16, 32, 32});
    CHECK(c.decoder_widths() == std::vector<int>{48, 24, 12});
    CHECK(c.trunk_spatial() == 2);
    c.frame_size = 16;
    CHECK(c.encoder_widths().size() == 3);
    CHECK(c.decoder_widths().size() == 2);
    CHECK(c.trunk_spatial() == 2);
    c.frame_size = 4;
    CHECK(c.encoder_widths().size() == 1);
    CHECK(c.decoder_widths().empty());
    CHECK(c.trunk_spatial() == 2);
    c.frame_size = 2;
    CHECK(c.encoder_widths().size() == 1);
    CHECK(c.trunk_spatial() == 1);
}
