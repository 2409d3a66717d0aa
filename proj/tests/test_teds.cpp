#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include <p1451/teds.hpp>
#include <p1451/teds_text.hpp>

#include "support/generators.hpp"
#include "support/tempdir.hpp"

using namespace p1451;
using namespace p1451::teds;

namespace {

// Table II example: level E with TLS 1.3, login/password V1.0, MQTT-ACL V1.0.
SecurityTeds golden_teds() {
    SecurityTeds t;
    t.level = SecurityLevel::E;
    t.entries = {{10, 4}, {12, 1}, {128, 1}};
    return t;
}

// Assembled independently of the codec (and cross-checked against the
// committed fixture file): length 0x21 TLVs, checksum 0xFE64.
const char* kGoldenHex =
    "00000021"
    "0305010610 0201"
    "0a0145"
    "0b0103"
    "0c010a"
    "0d0104"
    "0e010c"
    "0f0101"
    "100180"
    "110101"
    "fe64";

Bytes golden_block() {
    std::string hex;
    for (const char* p = kGoldenHex; *p; ++p)
        if (*p != ' ') hex.push_back(*p);
    return from_hex(hex).value();
}

Bytes fixture_block() {
    std::ifstream in(std::string(P1451_TEST_DATA_DIR) + "/golden_security_teds.bin",
                     std::ios::binary);
    REQUIRE(in.good());
    return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("golden security TEDS encodes to the Table II block") {
    auto encoded = encode_security_teds(golden_teds());
    REQUIRE(encoded.ok());
    CHECK(encoded->octets == golden_block());
    CHECK(encoded->octets == fixture_block());
    CHECK(encoded->octets.size() == 37);

    // length field counts everything after itself, checksum included
    CHECK(Bytes(encoded->octets.begin(), encoded->octets.begin() + 4) ==
          Bytes{0x00, 0x00, 0x00, 0x21});

    // checksum octets match the independent summation oracle
    Bytes summed(encoded->octets.begin(), encoded->octets.end() - 2);
    auto expect = testgen::checksum_oracle(summed);
    CHECK(encoded->octets[35] == (expect >> 8));
    CHECK(encoded->octets[36] == (expect & 0xFF));
    CHECK(expect == 0xFE64);
}

TEST_CASE("golden block decodes back to the structure") {
    auto decoded = decode_security_teds(RawTedsBlock{golden_block()});
    REQUIRE(decoded.ok());
    CHECK(decoded->teds_id == TedsId{1, 6, 16, 2, 1});
    CHECK(decoded->level == SecurityLevel::E);
    REQUIRE(decoded->entries.size() == 3);
    CHECK(decoded->entries[0] == SecurityStandardEntry{10, 4});
    CHECK(decoded->entries[1] == SecurityStandardEntry{12, 1});
    CHECK(decoded->entries[2] == SecurityStandardEntry{128, 1});
    CHECK(decoded->unknown_fields.empty());
    CHECK(*decoded == golden_teds());
}

TEST_CASE("empty-standards TEDS carries only TEDSID, level and count") {
    SecurityTeds t;
    t.level = SecurityLevel::N;
    auto encoded = encode_security_teds(t);
    REQUIRE(encoded.ok());
    Bytes expected = from_hex("0000000f030501061002010a014e0b0100ff69").value();
    CHECK(encoded->octets == expected);

    std::set<std::uint8_t> types;
    ByteReader r(BytesView(encoded->octets).subspan(4, encoded->octets.size() - 6));
    while (!r.exhausted()) {
        auto type = r.u8().value();
        types.insert(type);
        auto len = r.u8().value();
        (void)r.take(len);
    }
    CHECK(types == std::set<std::uint8_t>{3, 10, 11});
}

TEST_CASE("reserved standard codes are rejected on encode, flagged on decode") {
    SecurityTeds t = golden_teds();
    t.entries.push_back({50, 1});
    auto encoded = encode_security_teds(t);
    REQUIRE_FALSE(encoded.ok());
    CHECK(encoded.error().code == Errc::reserved_code);

    // craft a block carrying a reserved code by hand
    SecurityTeds ok = golden_teds();
    auto block = encode_security_teds(ok).value();
    block.octets[19] = 14;  // SecurityStdName1 value: 10 -> 14 (reserved)
    std::uint16_t checksum =
        compute_checksum(BytesView(block.octets).first(block.octets.size() - 2));
    block.octets[35] = static_cast<std::uint8_t>(checksum >> 8);
    block.octets[36] = static_cast<std::uint8_t>(checksum & 0xFF);
    std::vector<std::string> warnings;
    auto decoded = decode_security_teds(block, &warnings);
    REQUIRE(decoded.ok());
    CHECK(decoded->entries[0].standard_code == 14);
    REQUIRE(warnings.size() == 1);
}

TEST_CASE("checksum basics") {
    CHECK(compute_checksum({}) == 0xFFFF);
    Bytes one{0x01};
    CHECK(compute_checksum(one) == 0xFFFE);
    Bytes wrap(256, 0xFF);  // sum 0xFF00
    CHECK(compute_checksum(wrap) == 0x00FF);
    testgen::Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        Bytes data = rng.payload(64);
        CHECK(compute_checksum(data) == testgen::checksum_oracle(data));
    }
}

TEST_CASE("every single-octet corruption of the golden block is detected") {
    Bytes golden = golden_block();
    testgen::Rng rng(99);
    for (std::size_t pos = 0; pos < golden.size(); ++pos) {
        for (int sample = 0; sample < 8; ++sample) {
            Bytes corrupted = golden;
            std::uint8_t replacement;
            do {
                replacement = rng.u8();
            } while (replacement == golden[pos]);
            corrupted[pos] = replacement;
            auto decoded = decode_security_teds(RawTedsBlock{corrupted});
            if (decoded.ok()) {
                CAPTURE(pos, int(replacement));
                FAIL("corruption went undetected");
            }
        }
    }
    // flipping the final octet specifically trips the checksum
    Bytes last_flipped = golden;
    last_flipped.back() ^= 0xFF;
    auto r = decode_security_teds(RawTedsBlock{last_flipped});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == Errc::checksum_mismatch);
}

TEST_CASE("decode error taxonomy") {
    CHECK(decode_security_teds(RawTedsBlock{{}}).error().code == Errc::truncated);
    CHECK(decode_security_teds(RawTedsBlock{{0x00, 0x00}}).error().code == Errc::truncated);

    Bytes golden = golden_block();
    SECTION("payload shorter than the declared length") {
        Bytes shorter(golden.begin(), golden.end() - 1);
        CHECK(decode_security_teds(RawTedsBlock{shorter}).error().code == Errc::truncated);
    }
    SECTION("payload longer than the declared length") {
        Bytes longer = golden;
        longer.push_back(0x00);
        CHECK(decode_security_teds(RawTedsBlock{longer}).error().code == Errc::length_mismatch);
    }
    SECTION("level octet outside N/A..E") {
        SecurityTeds t = golden_teds();
        auto block = encode_security_teds(t).value();
        block.octets[13] = 'Z';  // level TLV value
        std::uint16_t checksum =
            compute_checksum(BytesView(block.octets).first(block.octets.size() - 2));
        block.octets[35] = static_cast<std::uint8_t>(checksum >> 8);
        block.octets[36] = static_cast<std::uint8_t>(checksum & 0xFF);
        auto r = decode_security_teds(block);
        REQUIRE_FALSE(r.ok());
        CHECK(r.error().code == Errc::bad_field);
    }
    SECTION("NumOfStandards inconsistent with the entry fields") {
        SecurityTeds t = golden_teds();
        auto block = encode_security_teds(t).value();
        block.octets[16] = 2;  // claims 2 standards while 3 pairs follow
        std::uint16_t checksum =
            compute_checksum(BytesView(block.octets).first(block.octets.size() - 2));
        block.octets[35] = static_cast<std::uint8_t>(checksum >> 8);
        block.octets[36] = static_cast<std::uint8_t>(checksum & 0xFF);
        auto r = decode_security_teds(block);
        REQUIRE_FALSE(r.ok());
        CHECK(r.error().code == Errc::bad_field);
    }
}

TEST_CASE("TEDS round-trip over randomized values") {
    testgen::Rng rng(20260811);
    for (int i = 0; i < 1200; ++i) {
        SecurityTeds t = testgen::random_teds(rng);
        auto encoded = encode_security_teds(t);
        REQUIRE(encoded.ok());
        auto decoded = decode_security_teds(*encoded);
        REQUIRE(decoded.ok());
        CHECK(*decoded == t);
    }
}

TEST_CASE("unknown TLV fields survive decode and re-encode octet-exactly") {
    // hand-build: golden TLVs plus an unknown type 0x40 field after entries
    Bytes body;
    auto put_tlv = [&](std::uint8_t type, Bytes value) {
        body.push_back(type);
        body.push_back(static_cast<std::uint8_t>(value.size()));
        body.insert(body.end(), value.begin(), value.end());
    };
    put_tlv(2, {0xAA, 0xBB});  // reserved row, unknown to the decoder
    put_tlv(3, {1, 6, 16, 2, 1});
    put_tlv(7, {0x77});  // reserved row
    put_tlv(10, {'E'});
    put_tlv(11, {1});
    put_tlv(12, {10});
    put_tlv(13, {4});
    put_tlv(0x40, {0xDE, 0xAD, 0xBE, 0xEF});

    Bytes block;
    put_u32(block, static_cast<std::uint32_t>(body.size() + 2));
    put_bytes(block, body);
    put_u16(block, compute_checksum(block));

    auto decoded = decode_security_teds(RawTedsBlock{block});
    REQUIRE(decoded.ok());
    REQUIRE(decoded->unknown_fields.size() == 3);
    CHECK(decoded->unknown_fields[0].field_type == 2);
    CHECK(decoded->unknown_fields[1].field_type == 7);
    CHECK(decoded->unknown_fields[2].field_type == 0x40);
    CHECK(decoded->entries.size() == 1);

    auto reencoded = encode_security_teds(*decoded);
    REQUIRE(reencoded.ok());
    CHECK(reencoded->octets == block);
}

TEST_CASE("octet-exact re-encode holds for random blocks with unknown fields") {
    testgen::Rng rng(31337);
    for (int i = 0; i < 300; ++i) {
        SecurityTeds t = testgen::random_teds(rng, 5);
        if (rng.chance(0.7)) {
            std::uint8_t type = rng.chance(0.5)
                                    ? static_cast<std::uint8_t>(4 + rng.below(6))  // reserved rows
                                    : static_cast<std::uint8_t>(200 + rng.below(56));
            if (type >= 12 && type < 12 + 2 * t.entries.size()) continue;
            t.unknown_fields.push_back({type, rng.payload(8)});
        }
        auto encoded = encode_security_teds(t);
        if (!encoded.ok()) continue;  // collision between unknown type and entry range
        auto decoded = decode_security_teds(*encoded);
        REQUIRE(decoded.ok());
        auto reencoded = encode_security_teds(*decoded);
        REQUIRE(reencoded.ok());
        CHECK(reencoded->octets == encoded->octets);
    }
}

TEST_CASE("entry capacity is bounded by the field-type space") {
    SecurityTeds t;
    t.level = SecurityLevel::A;
    for (int i = 0; i < 122; ++i) t.entries.push_back({6, 1});
    CHECK(encode_security_teds(t).ok());
    t.entries.push_back({6, 1});
    auto r = encode_security_teds(t);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == Errc::invalid_argument);
}

TEST_CASE("security standard names cover the whole code space") {
    CHECK(standard_name(10) == "TLS");
    CHECK(standard_name(12) == "Username/Password");
    CHECK(standard_name(128) == "MQTT-ACL");
    CHECK(standard_name(14) == "Reserved");
    CHECK(standard_name(127) == "Reserved");
    CHECK(standard_name(129) == "User-defined");
    CHECK(standard_name(255) == "User-defined");
    CHECK(standard_name(1) == "NIST CSF");
    CHECK(standard_name(6) == "AES");
    for (int code = 0; code <= 255; ++code)
        CHECK_FALSE(standard_name(static_cast<std::uint8_t>(code)).empty());
}

TEST_CASE("TLS version names") {
    CHECK(tls_version_name(0) == "Default");
    CHECK(tls_version_name(1) == "TLS 1.0");
    CHECK(tls_version_name(2) == "TLS 1.1");
    CHECK(tls_version_name(3) == "TLS 1.2");
    CHECK(tls_version_name(4) == "TLS 1.3");
    CHECK(tls_version_name(5) == "Manufacturer-defined");
    CHECK(tls_version_name(7) == "Manufacturer-defined");
    CHECK(tls_version_name(255) == "Manufacturer-defined");
}

TEST_CASE("level policy sets are the fixed combinations and injective") {
    CHECK(level_policies(SecurityLevel::N) == PolicySet{false, false, false});
    CHECK(level_policies(SecurityLevel::A) == PolicySet{true, false, false});
    CHECK(level_policies(SecurityLevel::B) == PolicySet{false, true, false});
    CHECK(level_policies(SecurityLevel::C) == PolicySet{true, true, false});
    CHECK(level_policies(SecurityLevel::D) == PolicySet{false, true, true});
    CHECK(level_policies(SecurityLevel::E) == PolicySet{true, true, true});

    const SecurityLevel all[] = {SecurityLevel::N, SecurityLevel::A, SecurityLevel::B,
                                 SecurityLevel::C, SecurityLevel::D, SecurityLevel::E};
    for (auto a : all)
        for (auto b : all)
            if (a != b) CHECK_FALSE(level_policies(a) == level_policies(b));
}

TEST_CASE("description files parse and render") {
    auto teds = parse_description("# demo\nlevel=E\nstandard=10,4\nstandard=12,1\nstandard=128,1\n");
    REQUIRE(teds.ok());
    CHECK(*teds == golden_teds());

    CHECK_FALSE(parse_description("standard=10,4\n").ok());   // missing level
    CHECK_FALSE(parse_description("level=Q\n").ok());
    CHECK_FALSE(parse_description("level=E\nstandard=10\n").ok());
    CHECK_FALSE(parse_description("level=E\nbogus=1\n").ok());
    CHECK_FALSE(parse_description("level=E\nstandard=300,1\n").ok());
}

TEST_CASE("pretty print matches the read-out layout") {
    std::string text = pretty_print(golden_teds());
    CHECK(text.find("Level: E (encryption, authentication, authorization)") != std::string::npos);
    CHECK(text.find("Standards: 3") != std::string::npos);
    CHECK(text.find("TLS (10) TLS 1.3") != std::string::npos);
    CHECK(text.find("Username/Password (12) V1.0") != std::string::npos);
    CHECK(text.find("MQTT-ACL (128) V1.0") != std::string::npos);
    CHECK(text.find("family 1.6, access code 16, version 2, tuple length 1") != std::string::npos);

    // deterministic across calls
    CHECK(pretty_print(golden_teds()) == text);

    SecurityTeds none;
    none.level = SecurityLevel::N;
    CHECK(pretty_print(none).find("Level: N (none)") != std::string::npos);
    SecurityTeds d;
    d.level = SecurityLevel::D;
    CHECK(pretty_print(d).find("Level: D (authentication, authorization)") != std::string::npos);
}
