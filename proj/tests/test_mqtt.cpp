#include <catch2/catch_amalgamated.hpp>

#include <p1451/mqtt.hpp>
#include <p1451/topic.hpp>

#include "support/generators.hpp"

using namespace p1451;
using namespace p1451::mqtt;

namespace {

Bytes octets(std::initializer_list<int> list) {
    Bytes b;
    for (int v : list) b.push_back(static_cast<std::uint8_t>(v));
    return b;
}

TopicName topic(const std::string& s) { return TopicName::parse(s).value(); }
TopicFilter filter(const std::string& s) { return TopicFilter::parse(s).value(); }

}  // namespace

TEST_CASE("varint boundary values round-trip against the divide-by-128 oracle") {
    const std::uint32_t boundaries[] = {0,     127,     128,     16383,
                                        16384, 2097151, 2097152, 268435455};
    for (auto value : boundaries) {
        auto encoded = encode_varint(value);
        REQUIRE(encoded.ok());
        CHECK(*encoded == testgen::varint_oracle(value));
        auto decoded = decode_varint(*encoded);
        REQUIRE(decoded.ok());
        CHECK(decoded->first == value);
        CHECK(decoded->second == encoded->size());
    }
    CHECK(encode_varint(128).value() == octets({0x80, 0x01}));
    CHECK_FALSE(encode_varint(268435456).ok());
}

TEST_CASE("empty-body packets encode to their two-octet frames") {
    CHECK(encode_packet(Packet{Pingreq{}}).value() == octets({0xC0, 0x00}));
    CHECK(encode_packet(Packet{Pingresp{}}).value() == octets({0xD0, 0x00}));
    CHECK(encode_packet(Packet{Disconnect{}}).value() == octets({0xE0, 0x00}));

    auto ping = decode_packet(octets({0xC0, 0x00}));
    REQUIRE(ping.ok());
    CHECK(std::holds_alternative<Pingreq>(ping->packet));
    CHECK(ping->consumed == 2);

    auto pong = decode_packet(octets({0xD0, 0x00}));
    REQUIRE(pong.ok());
    CHECK(std::holds_alternative<Pingresp>(pong->packet));
    CHECK(pong->consumed == 2);
}

TEST_CASE("minimal publish encodes per the fixed-header rules") {
    Publish p{topic("a"), {}, QoS::at_most_once, std::nullopt, false, false};
    CHECK(encode_packet(Packet{p}).value() == octets({0x30, 0x03, 0x00, 0x01, 0x61}));
}

TEST_CASE("decode reports incomplete buffers as retryable") {
    // declared remaining length 5, only 3 octets present
    auto r = decode_packet(octets({0x30, 0x05, 0x00, 0x01, 0x61}));
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == Errc::incomplete);

    CHECK(decode_packet({}).error().code == Errc::incomplete);
    CHECK(decode_packet(octets({0x30})).error().code == Errc::incomplete);
    // varint not finished
    CHECK(decode_packet(octets({0x30, 0x80})).error().code == Errc::incomplete);
}

TEST_CASE("decode rejects malformed input distinctly") {
    SECTION("five-octet varint") {
        auto r = decode_packet(octets({0x30, 0xFF, 0xFF, 0xFF, 0xFF, 0x01}));
        REQUIRE_FALSE(r.ok());
        CHECK(r.error().code == Errc::malformed_varint);
    }
    SECTION("unknown packet type") {
        auto r = decode_packet(octets({0x00, 0x00}));
        CHECK(r.error().code == Errc::unknown_packet_type);
        auto r2 = decode_packet(octets({0xF0, 0x00}));
        CHECK(r2.error().code == Errc::unknown_packet_type);
    }
    SECTION("publish with qos 2") {
        auto r = decode_packet(octets({0x34, 0x05, 0x00, 0x01, 0x61, 0x00, 0x01}));
        CHECK(r.error().code == Errc::qos2_unsupported);
    }
    SECTION("subscribe entry with qos 2") {
        auto r = decode_packet(octets({0x82, 0x06, 0x00, 0x01, 0x00, 0x01, 0x61, 0x02}));
        CHECK(r.error().code == Errc::qos2_unsupported);
    }
    SECTION("invalid utf-8 in topic") {
        auto r = decode_packet(octets({0x30, 0x04, 0x00, 0x02, 0xC3, 0x28}));
        CHECK(r.error().code == Errc::invalid_utf8);
    }
    SECTION("reserved fixed-header flags") {
        auto r = decode_packet(octets({0xC1, 0x00}));
        CHECK(r.error().code == Errc::malformed_packet);
    }
    SECTION("wrong protocol level in connect") {
        Bytes frame = octets({0x10, 0x0C, 0x00, 0x04, 'M', 'Q', 'T', 'T', 0x05, 0x02, 0x00, 0x00,
                              0x00, 0x00});
        auto r = decode_packet(frame);
        CHECK(r.error().code == Errc::unacceptable_protocol);
    }
}

TEST_CASE("decode leaves trailing octets untouched") {
    Bytes two = octets({0xC0, 0x00, 0xD0, 0x00});
    auto first = decode_packet(two);
    REQUIRE(first.ok());
    CHECK(first->consumed == 2);
    auto second = decode_packet(BytesView(two).subspan(first->consumed));
    REQUIRE(second.ok());
    CHECK(std::holds_alternative<Pingresp>(second->packet));
}

TEST_CASE("packet round-trip over randomized generators") {
    testgen::Rng rng(20260810);
    for (int i = 0; i < 1200; ++i) {
        Packet p = testgen::random_packet(rng);
        auto encoded = encode_packet(p);
        REQUIRE(encoded.ok());
        auto decoded = decode_packet(*encoded);
        REQUIRE(decoded.ok());
        CHECK(decoded->consumed == encoded->size());
        CHECK(decoded->packet == p);
        // canonical inputs re-encode to the consumed octets
        CHECK(encode_packet(decoded->packet).value() == *encoded);
    }
}

TEST_CASE("publish packet id accompanies qos 1 only") {
    Publish no_id{topic("a"), {}, QoS::at_least_once, std::nullopt, false, false};
    CHECK_FALSE(encode_packet(Packet{no_id}).ok());
    Publish spurious{topic("a"), {}, QoS::at_most_once, std::uint16_t{7}, false, false};
    CHECK_FALSE(encode_packet(Packet{spurious}).ok());
}

TEST_CASE("topic filter validation") {
    CHECK(validate_filter("#").ok());
    CHECK(validate_filter("a/+/c").ok());
    CHECK(validate_filter("+").ok());
    CHECK(validate_filter("a/#").ok());
    CHECK(validate_filter("/").ok());

    CHECK_FALSE(validate_filter("").ok());
    CHECK_FALSE(validate_filter("sport/#/x").ok());
    CHECK_FALSE(validate_filter("a+b").ok());
    CHECK_FALSE(validate_filter("a/b#").ok());
    CHECK_FALSE(validate_filter("#/a").ok());
    CHECK_FALSE(validate_filter(std::string("a\0b", 3)).ok());
}

TEST_CASE("topic name validation") {
    CHECK(TopicName::parse("1451.1.6/ACL/CONFIG").ok());
    CHECK(TopicName::parse("/leading").ok());
    CHECK_FALSE(TopicName::parse("").ok());
    CHECK_FALSE(TopicName::parse("a/+").ok());
    CHECK_FALSE(TopicName::parse("a/#").ok());
    CHECK_FALSE(TopicName::parse(std::string("a\0", 2)).ok());
}

TEST_CASE("filter matching follows the level-wise rules") {
    CHECK(filter_matches(filter("1451.1.6/ACL/CONFIG"), topic("1451.1.6/ACL/CONFIG")));
    CHECK(filter_matches(filter("a/#"), topic("a")));
    CHECK(filter_matches(filter("a/#"), topic("a/b/c")));
    CHECK_FALSE(filter_matches(filter("+/b"), topic("a/b/c")));
    CHECK(filter_matches(filter("+/b"), topic("a/b")));
    CHECK_FALSE(filter_matches(filter("a/+"), topic("a")));
    CHECK(filter_matches(filter("a//b"), topic("a//b")));

    // '$'-prefixed topics are invisible to leading wildcards
    CHECK_FALSE(filter_matches(filter("#"), topic("$SYS/broker")));
    CHECK_FALSE(filter_matches(filter("+/broker"), topic("$SYS/broker")));
    CHECK(filter_matches(filter("$SYS/#"), topic("$SYS/broker")));
}

TEST_CASE("filter_matches('#', t) accepts every topic not beginning with '$'") {
    testgen::Rng rng(42);
    auto hash = filter("#");
    for (int i = 0; i < 500; ++i) {
        auto t = topic(testgen::random_topic(rng));
        CHECK(filter_matches(hash, t));
    }
}

TEST_CASE("filter matching agrees with the recursive oracle on the bounded universe") {
    auto filters = testgen::level_universe({"a", "b", "+", "#", ""}, 4);
    auto topics = testgen::level_universe({"a", "b", ""}, 4);

    std::size_t checked = 0;
    for (const auto& f : filters) {
        auto parsed_f = TopicFilter::parse(f);
        if (!parsed_f.ok()) continue;
        for (const auto& t : topics) {
            auto parsed_t = TopicName::parse(t);
            if (!parsed_t.ok()) continue;
            bool expect = testgen::oracle_filter_matches(f, t);
            bool got = filter_matches(*parsed_f, *parsed_t);
            if (expect != got) {
                CAPTURE(f, t, expect, got);
                REQUIRE(expect == got);
            }
            ++checked;
        }
    }
    // the exhaustive sweep must actually cover a meaningful universe
    CHECK(checked > 50000);
}
