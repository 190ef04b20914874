#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "sparsenet/protocol.hpp"

using namespace sparsenet;

TEST_CASE("protocol grammar accepts the standard forms") {
    auto p = parse_protocol("RR");
    REQUIRE(p.stage_init.size() == 2);
    CHECK(p.stage_init[0].kind == InitKind::Random);
    CHECK_FALSE(p.fine_tune);
    CHECK_FALSE(p.sparse_state);
    CHECK_FALSE(protocol_needs_pretraining(p));

    p = parse_protocol("UU");
    CHECK(p.stage_init[0].kind == InitKind::Unsup);
    CHECK(p.stage_init[1].kind == InitKind::Unsup);
    CHECK(protocol_needs_pretraining(p));

    p = parse_protocol("U+U+");
    CHECK(p.fine_tune);
    CHECK_FALSE(p.sparse_state);

    p = parse_protocol("D+D+");
    CHECK(p.stage_init[0].kind == InitKind::Disc);
    CHECK(p.fine_tune);

    p = parse_protocol("UcU");
    CHECK(p.stage_init[0].convolutional);
    CHECK_FALSE(p.stage_init[1].convolutional);

    p = parse_protocol("R+L1R+L1");
    REQUIRE(p.stage_init.size() == 2);
    CHECK(p.fine_tune);
    CHECK(p.sparse_state);

    p = parse_protocol("R");
    CHECK(p.stage_init.size() == 1);
}

TEST_CASE("protocol grammar rejects malformed strings") {
    CHECK_THROWS_AS(parse_protocol(""), config_error);
    CHECK_THROWS_AS(parse_protocol("X"), config_error);
    CHECK_THROWS_AS(parse_protocol("R L1"), config_error);
    CHECK_THROWS_AS(parse_protocol("RL1"), config_error);   // L1 without +
    CHECK_THROWS_AS(parse_protocol("UUc"), config_error);   // conv pretrain beyond stage 1
    CHECK_THROWS_AS(parse_protocol("1R"), config_error);
}

TEST_CASE("protocol string round trip") {
    for (const char* s : {"RR", "UU", "U+U+", "D+D+", "R+L1R+L1", "UcU"}) {
        Protocol p = parse_protocol(s);
        CHECK(protocol_to_string(p) == s);
    }
}

TEST_CASE("config file parsing handles comments and whitespace") {
    std::string path = "cfg_test.txt";
    {
        std::ofstream f(path);
        f << "# full-line comment\n"
          << "  arch = cifar   # trailing comment\n"
          << "seed=42\n"
          << "\n"
          << "bad line without equals\n"
          << "empty=\n";
    }
    auto kv = parse_config_file(path);
    CHECK(kv.at("arch") == "cifar");
    CHECK(kv.at("seed") == "42");
    CHECK(kv.at("empty") == "");
    CHECK(kv.count("bad") == 0);
    std::remove(path.c_str());
    CHECK_THROWS_AS(parse_config_file("no_such_config.txt"), config_error);
}
