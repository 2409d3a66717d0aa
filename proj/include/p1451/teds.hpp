#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <p1451/common.hpp>

namespace p1451::teds {

// Security TEDS block layout: a 4-octet big-endian Length (octet count of
// everything that follows, checksum included), TLV fields with 1-octet type
// and 1-octet value length in strictly ascending type order, and a 2-octet
// sum-complement checksum over the Length field plus all TLVs.

namespace field_type {
constexpr std::uint8_t teds_id = 3;
constexpr std::uint8_t level = 10;
constexpr std::uint8_t num_of_standards = 11;
constexpr std::uint8_t first_entry = 12;
}  // namespace field_type

constexpr std::size_t kMaxEntries = 122;  // field types 12..255 hold 122 name/version pairs

struct TedsId {
    std::uint8_t family_major = 1;
    std::uint8_t family_minor = 6;
    std::uint8_t access_code = 16;
    std::uint8_t teds_version = 2;
    std::uint8_t tuple_length = 1;

    bool operator==(const TedsId&) const = default;
};

constexpr std::uint8_t kSecurityTedsAccessCode = 16;

enum class SecurityLevel : std::uint8_t {
    N = 'N',
    A = 'A',
    B = 'B',
    C = 'C',
    D = 'D',
    E = 'E',
};

struct PolicySet {
    bool encryption = false;
    bool authentication = false;
    bool authorization = false;

    bool operator==(const PolicySet&) const = default;
};

inline PolicySet level_policies(SecurityLevel level) {
    switch (level) {
        case SecurityLevel::N: return {false, false, false};
        case SecurityLevel::A: return {true, false, false};
        case SecurityLevel::B: return {false, true, false};
        case SecurityLevel::C: return {true, true, false};
        case SecurityLevel::D: return {false, true, true};
        case SecurityLevel::E: return {true, true, true};
    }
    return {};
}

inline Result<SecurityLevel> parse_level(std::uint8_t octet) {
    switch (octet) {
        case 'N': case 'A': case 'B': case 'C': case 'D': case 'E':
            return static_cast<SecurityLevel>(octet);
        default:
            return make_error(Errc::bad_field, "level octet " + std::to_string(octet));
    }
}

inline char level_letter(SecurityLevel level) { return static_cast<char>(level); }

struct SecurityStandardEntry {
    std::uint8_t standard_code = 0;
    std::uint8_t version_code = 0;

    bool operator==(const SecurityStandardEntry&) const = default;
};

inline bool is_reserved_standard(std::uint8_t code) { return code >= 14 && code <= 127; }

/// Enumeration names of the P1451.1.6 security standards table.
inline std::string_view standard_name(std::uint8_t code) {
    switch (code) {
        case 1:  return "NIST CSF";
        case 2:  return "PCI-DSS";
        case 3:  return "FIPS-140-2";
        case 4:  return "NSA Suite B";
        case 5:  return "ChaCha20";
        case 6:  return "AES";
        case 7:  return "ISO 29192";
        case 8:  return "LDAP";
        case 9:  return "OAuth";
        case 10: return "TLS";
        case 11: return "VPN";
        case 12: return "Username/Password";
        case 13: return "Client Identifier";
        case 128: return "MQTT-ACL";
        default:
            if (code >= 129) return "User-defined";
            return "Reserved";
    }
}

inline std::string_view tls_version_name(std::uint8_t code) {
    switch (code) {
        case 0: return "Default";
        case 1: return "TLS 1.0";
        case 2: return "TLS 1.1";
        case 3: return "TLS 1.2";
        case 4: return "TLS 1.3";
        default: return "Manufacturer-defined";
    }
}

constexpr std::uint8_t kStandardTls = 10;
constexpr std::uint8_t kStandardUsernamePassword = 12;
constexpr std::uint8_t kStandardMqttAcl = 128;

struct UnknownField {
    std::uint8_t field_type = 0;
    Bytes raw_value;

    bool operator==(const UnknownField&) const = default;
};

struct SecurityTeds {
    TedsId teds_id;
    SecurityLevel level = SecurityLevel::N;
    std::vector<SecurityStandardEntry> entries;
    std::vector<UnknownField> unknown_fields;

    bool operator==(const SecurityTeds&) const = default;
};

struct RawTedsBlock {
    Bytes octets;

    bool operator==(const RawTedsBlock&) const = default;
};

/// 0xFFFF minus the octet sum, mod 2^16.
inline std::uint16_t compute_checksum(BytesView octets) {
    std::uint32_t sum = 0;
    for (std::uint8_t b : octets) sum += b;
    return static_cast<std::uint16_t>(0xFFFF - (sum & 0xFFFF));
}

inline Result<RawTedsBlock> encode_security_teds(const SecurityTeds& teds) {
    if (teds.entries.size() > kMaxEntries)
        return make_error(Errc::invalid_argument, "more than 122 standard entries");
    for (const auto& e : teds.entries)
        if (is_reserved_standard(e.standard_code))
            return make_error(Errc::reserved_code,
                              "standard code " + std::to_string(e.standard_code));

    struct Tlv {
        std::uint8_t type;
        Bytes value;
    };
    std::vector<Tlv> tlvs;
    tlvs.push_back({field_type::teds_id,
                    {teds.teds_id.family_major, teds.teds_id.family_minor, teds.teds_id.access_code,
                     teds.teds_id.teds_version, teds.teds_id.tuple_length}});
    tlvs.push_back({field_type::level, {static_cast<std::uint8_t>(teds.level)}});
    tlvs.push_back({field_type::num_of_standards,
                    {static_cast<std::uint8_t>(teds.entries.size())}});
    for (std::size_t i = 0; i < teds.entries.size(); ++i) {
        auto base = static_cast<std::uint8_t>(field_type::first_entry + 2 * i);
        tlvs.push_back({base, {teds.entries[i].standard_code}});
        tlvs.push_back({static_cast<std::uint8_t>(base + 1), {teds.entries[i].version_code}});
    }
    std::uint8_t last_entry_type =
        teds.entries.empty() ? field_type::num_of_standards
                             : static_cast<std::uint8_t>(field_type::first_entry +
                                                         2 * teds.entries.size() - 1);
    for (const auto& u : teds.unknown_fields) {
        bool known = u.field_type == field_type::teds_id || u.field_type == field_type::level ||
                     (u.field_type >= field_type::num_of_standards && u.field_type <= last_entry_type);
        if (known)
            return make_error(Errc::invalid_argument,
                              "unknown field type collides: " + std::to_string(u.field_type));
        if (u.raw_value.size() > 255)
            return make_error(Errc::invalid_argument, "unknown field value too long");
        tlvs.push_back({u.field_type, u.raw_value});
    }
    std::stable_sort(tlvs.begin(), tlvs.end(),
                     [](const Tlv& a, const Tlv& b) { return a.type < b.type; });

    Bytes body;
    for (const auto& tlv : tlvs) {
        put_u8(body, tlv.type);
        put_u8(body, static_cast<std::uint8_t>(tlv.value.size()));
        put_bytes(body, tlv.value);
    }

    Bytes block;
    put_u32(block, static_cast<std::uint32_t>(body.size() + 2));  // TLVs plus checksum
    put_bytes(block, body);
    std::uint16_t checksum = compute_checksum(block);
    put_u16(block, checksum);
    return RawTedsBlock{std::move(block)};
}

/// Inverse of encode_security_teds. Unrecognized field types survive in
/// unknown_fields so a re-encode reproduces the block octet for octet.
inline Result<SecurityTeds> decode_security_teds(const RawTedsBlock& block,
                                                 std::vector<std::string>* warnings = nullptr) {
    const Bytes& data = block.octets;
    if (data.size() < 6) return make_error(Errc::truncated, "block shorter than length+checksum");
    ByteReader header(data);
    std::uint32_t declared = header.u32().value();
    if (data.size() < 4 + declared) return make_error(Errc::truncated, "block shorter than Length");
    if (data.size() > 4 + declared) return make_error(Errc::length_mismatch, "trailing octets");
    if (declared < 2) return make_error(Errc::length_mismatch, "Length below checksum size");

    std::uint16_t stored = static_cast<std::uint16_t>(data[data.size() - 2] << 8 | data.back());
    std::uint16_t computed = compute_checksum(BytesView(data).first(data.size() - 2));
    if (stored != computed)
        return make_error(Errc::checksum_mismatch,
                          "stored " + to_hex(Bytes{data[data.size() - 2], data.back()}));

    ByteReader r(BytesView(data).subspan(4, data.size() - 6));
    SecurityTeds teds;
    bool saw_id = false, saw_level = false, saw_count = false;
    std::uint8_t declared_count = 0;
    std::vector<std::pair<std::uint8_t, Bytes>> entry_fields;
    int last_type = -1;

    while (!r.exhausted()) {
        auto type = r.u8();
        auto len = r.u8();
        if (!type || !len) return make_error(Errc::truncated, "TLV header");
        auto value = r.take(*len);
        if (!value) return make_error(Errc::truncated, "TLV value");
        if (static_cast<int>(*type) <= last_type)
            return make_error(Errc::bad_field, "field types not strictly ascending");
        last_type = *type;

        if (*type == field_type::teds_id) {
            if (value->size() != 5) return make_error(Errc::bad_field, "TEDSID value not 5 octets");
            teds.teds_id = TedsId{(*value)[0], (*value)[1], (*value)[2], (*value)[3], (*value)[4]};
            saw_id = true;
        } else if (*type == field_type::level) {
            if (value->size() != 1) return make_error(Errc::bad_field, "level length");
            auto level = parse_level((*value)[0]);
            if (!level) return level.error();
            teds.level = *level;
            saw_level = true;
        } else if (*type == field_type::num_of_standards) {
            if (value->size() != 1) return make_error(Errc::bad_field, "NumOfStandards length");
            declared_count = (*value)[0];
            saw_count = true;
        } else if (*type >= field_type::first_entry && saw_count &&
                   *type < field_type::first_entry + 2 * declared_count) {
            entry_fields.emplace_back(*type, Bytes(value->begin(), value->end()));
        } else {
            teds.unknown_fields.push_back({*type, Bytes(value->begin(), value->end())});
        }
    }

    if (!saw_id) return make_error(Errc::bad_field, "missing TEDSID");
    if (!saw_level) return make_error(Errc::bad_field, "missing level");
    if (!saw_count) return make_error(Errc::bad_field, "missing NumOfStandards");
    if (entry_fields.size() != 2u * declared_count)
        return make_error(Errc::bad_field, "NumOfStandards inconsistent with entry fields");
    for (std::size_t i = 0; i < declared_count; ++i) {
        const auto& [name_type, name_val] = entry_fields[2 * i];
        const auto& [ver_type, ver_val] = entry_fields[2 * i + 1];
        if (name_type != field_type::first_entry + 2 * i || ver_type != name_type + 1)
            return make_error(Errc::bad_field, "entry field types out of sequence");
        if (name_val.size() != 1 || ver_val.size() != 1)
            return make_error(Errc::bad_field, "entry field length");
        teds.entries.push_back({name_val[0], ver_val[0]});
        if (is_reserved_standard(name_val[0]) && warnings)
            warnings->push_back("entry " + std::to_string(i) + " uses reserved standard code " +
                                std::to_string(name_val[0]));
    }
    return teds;
}

}  // namespace p1451::teds
