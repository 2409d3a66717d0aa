#pragma once

// Randomized generators and independent oracles shared by the unit and
// acceptance suites. Oracles deliberately reimplement the arithmetic from
// first principles rather than calling the library.

#include <random>
#include <string>
#include <vector>

#include <p1451/acl.hpp>
#include <p1451/mqtt.hpp>
#include <p1451/netsvc.hpp>
#include <p1451/teds.hpp>

namespace testgen {

using p1451::Bytes;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint32_t below(std::uint32_t n) {
        return std::uniform_int_distribution<std::uint32_t>(0, n - 1)(engine_);
    }
    bool chance(double p) { return std::uniform_real_distribution<>(0, 1)(engine_) < p; }
    std::uint8_t u8() { return static_cast<std::uint8_t>(below(256)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(below(65536)); }
    std::uint32_t u32() { return engine_(); }

    std::string identifier(std::size_t min_len, std::size_t max_len) {
        static const char alphabet[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-";
        std::size_t len = min_len + below(static_cast<std::uint32_t>(max_len - min_len + 1));
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[below(sizeof(alphabet) - 1)]);
        return s;
    }

    Bytes payload(std::size_t max_len) {
        Bytes b(below(static_cast<std::uint32_t>(max_len + 1)));
        for (auto& x : b) x = u8();
        return b;
    }

    std::mt19937& engine() { return engine_; }

private:
    std::mt19937 engine_;
};

// ---------------------------------------------------------------------------
// Varint oracle: the divide-by-128 loop.

inline Bytes varint_oracle(std::uint32_t value) {
    Bytes out;
    do {
        std::uint8_t digit = value % 128;
        value /= 128;
        if (value > 0) digit |= 0x80;
        out.push_back(digit);
    } while (value > 0);
    return out;
}

// ---------------------------------------------------------------------------
// Topic matching oracle: naive recursion over level lists.

inline bool oracle_match_levels(const std::vector<std::string_view>& f,
                                const std::vector<std::string_view>& t, std::size_t fi,
                                std::size_t ti) {
    if (fi == f.size()) return ti == t.size();
    if (f[fi] == "#") return true;
    if (ti == t.size()) return false;
    if (f[fi] == "+" || f[fi] == t[ti]) return oracle_match_levels(f, t, fi + 1, ti + 1);
    return false;
}

inline bool oracle_filter_matches(const std::string& filter, const std::string& topic) {
    auto f = p1451::mqtt::split_levels(filter);
    auto t = p1451::mqtt::split_levels(topic);
    if ((f[0] == "+" || f[0] == "#") && !t[0].empty() && t[0][0] == '$') return false;
    return oracle_match_levels(f, t, 0, 0);
}

/// All level sequences of length 1..depth over the alphabet, joined by '/'.
inline std::vector<std::string> level_universe(const std::vector<std::string>& alphabet,
                                               std::size_t depth) {
    std::vector<std::string> out;
    std::vector<std::string> frontier{""};
    for (std::size_t d = 1; d <= depth; ++d) {
        std::vector<std::string> next;
        for (const auto& prefix : frontier) {
            for (const auto& level : alphabet) {
                std::string joined = d == 1 ? level : prefix + "/" + level;
                out.push_back(joined);
                next.push_back(joined);
            }
        }
        frontier = std::move(next);
    }
    return out;
}

// ---------------------------------------------------------------------------
// TEDS checksum/length oracle: independent summation.

inline std::uint16_t checksum_oracle(const Bytes& octets) {
    unsigned long sum = 0;
    for (auto b : octets) sum += b;
    return static_cast<std::uint16_t>(0xFFFFu - (sum % 0x10000u));
}

inline p1451::teds::SecurityTeds random_teds(Rng& rng, std::size_t max_entries = 10) {
    using namespace p1451::teds;
    SecurityTeds t;
    static const SecurityLevel levels[] = {SecurityLevel::N, SecurityLevel::A, SecurityLevel::B,
                                           SecurityLevel::C, SecurityLevel::D, SecurityLevel::E};
    t.level = levels[rng.below(6)];
    std::size_t n = rng.below(static_cast<std::uint32_t>(max_entries + 1));
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t code;
        do {
            code = rng.u8();
        } while (is_reserved_standard(code));
        t.entries.push_back({code, rng.u8()});
    }
    return t;
}

// ---------------------------------------------------------------------------
// MQTT packet generator (valid packets only).

inline std::string random_topic(Rng& rng) {
    std::size_t levels = 1 + rng.below(4);
    std::string t;
    for (std::size_t i = 0; i < levels; ++i) {
        if (i) t += '/';
        t += rng.identifier(1, 8);
    }
    return t;
}

inline std::string random_filter(Rng& rng) {
    std::size_t levels = 1 + rng.below(4);
    std::string f;
    for (std::size_t i = 0; i < levels; ++i) {
        if (i) f += '/';
        if (i + 1 == levels && rng.chance(0.2)) {
            f += '#';
            return f;
        }
        f += rng.chance(0.2) ? "+" : rng.identifier(1, 8);
    }
    return f;
}

inline p1451::mqtt::Packet random_packet(Rng& rng) {
    using namespace p1451::mqtt;
    switch (rng.below(11)) {
        case 0: {
            Connect c;
            c.client_id = rng.identifier(0, 16);
            if (rng.chance(0.6)) {
                c.username = rng.identifier(1, 12);
                if (rng.chance(0.7)) c.password = rng.payload(16);
            }
            c.keep_alive_seconds = rng.u16();
            c.clean_session = rng.chance(0.9);
            return c;
        }
        case 1:
            return Connack{rng.chance(0.3), static_cast<std::uint8_t>(rng.below(6))};
        case 2: {
            auto qos = rng.chance(0.5) ? QoS::at_most_once : QoS::at_least_once;
            Publish p{TopicName::parse(random_topic(rng)).value(), rng.payload(64), qos,
                      std::nullopt, false, rng.chance(0.2)};
            if (qos == QoS::at_least_once) {
                p.packet_id = static_cast<std::uint16_t>(1 + rng.below(65535));
                p.dup = rng.chance(0.2);
            }
            return p;
        }
        case 3:
            return Puback{rng.u16()};
        case 4: {
            Subscribe s{rng.u16(), {}};
            std::size_t n = 1 + rng.below(4);
            for (std::size_t i = 0; i < n; ++i)
                s.entries.emplace_back(TopicFilter::parse(random_filter(rng)).value(),
                                       rng.chance(0.5) ? QoS::at_most_once : QoS::at_least_once);
            return s;
        }
        case 5: {
            Suback s{rng.u16(), {}};
            std::size_t n = 1 + rng.below(4);
            static const std::uint8_t codes[] = {0x00, 0x01, 0x80};
            for (std::size_t i = 0; i < n; ++i) s.return_codes.push_back(codes[rng.below(3)]);
            return s;
        }
        case 6: {
            Unsubscribe u{rng.u16(), {}};
            std::size_t n = 1 + rng.below(4);
            for (std::size_t i = 0; i < n; ++i)
                u.filters.push_back(TopicFilter::parse(random_filter(rng)).value());
            return u;
        }
        case 7:
            return Unsuback{rng.u16()};
        case 8:
            return Pingreq{};
        case 9:
            return Pingresp{};
        default:
            return Disconnect{};
    }
}

// ---------------------------------------------------------------------------
// Network-service generators.

inline p1451::netsvc::Uuid1451 random_uuid(Rng& rng) {
    p1451::netsvc::Uuid1451 id;
    for (auto& b : id.octets) b = rng.u8();
    return id;
}

inline p1451::netsvc::ReadTedsCommand random_command(Rng& rng) {
    p1451::netsvc::ReadTedsCommand cmd;
    cmd.app_id = random_uuid(rng);
    cmd.ncap_id = random_uuid(rng);
    cmd.tim_id = random_uuid(rng);
    cmd.channel_id = rng.u16();
    cmd.teds_access_code = rng.u8();
    cmd.teds_offset = rng.u32();
    cmd.timeout = {rng.u32(), rng.below(1'000'000'000)};
    return cmd;
}

inline p1451::netsvc::ReadTedsReply random_reply(Rng& rng) {
    p1451::netsvc::ReadTedsReply rep;
    rep.error_code = rng.chance(0.7) ? 0 : static_cast<std::uint16_t>(1 + rng.below(6));
    rep.app_id = random_uuid(rng);
    rep.ncap_id = random_uuid(rng);
    rep.tim_id = random_uuid(rng);
    rep.channel_id = rng.u16();
    rep.teds_offset = rng.u32();
    if (rep.error_code == 0) rep.raw_teds_block = rng.payload(128);
    return rep;
}

// ---------------------------------------------------------------------------
// ACL document generator.

inline p1451::acl::AclDocument random_acl_document(Rng& rng, std::size_t max_rules = 8) {
    using namespace p1451::acl;
    AclDocument doc;
    std::size_t users = 1 + rng.below(3);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < users; ++i) names.push_back(rng.identifier(1, 8));
    std::size_t n = rng.below(static_cast<std::uint32_t>(max_rules + 1));
    static const Access modes[] = {Access::read, Access::write, Access::readwrite};
    for (std::size_t i = 0; i < n; ++i) {
        AclRule rule{names[rng.below(static_cast<std::uint32_t>(names.size()))],
                     modes[rng.below(3)],
                     p1451::mqtt::TopicFilter::parse(random_filter(rng)).value()};
        doc.rules.push_back(std::move(rule));
    }
    return doc;
}

}  // namespace testgen
