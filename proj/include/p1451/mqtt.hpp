#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <p1451/common.hpp>
#include <p1451/topic.hpp>

namespace p1451::mqtt {

// MQTT 3.1.1 control-packet subset. QoS 2, retained delivery, will messages
// and persistent sessions are outside this codec's contract.

enum class QoS : std::uint8_t {
    at_most_once = 0,
    at_least_once = 1,
};

constexpr std::uint32_t kMaxRemainingLength = 268'435'455;

namespace connack_code {
constexpr std::uint8_t accepted = 0x00;
constexpr std::uint8_t unacceptable_protocol = 0x01;
constexpr std::uint8_t identifier_rejected = 0x02;
constexpr std::uint8_t bad_credentials = 0x04;
constexpr std::uint8_t not_authorized = 0x05;
}  // namespace connack_code

constexpr std::uint8_t kSubackFailure = 0x80;

struct Connect {
    std::string client_id;
    std::optional<std::string> username;
    std::optional<Bytes> password;
    std::uint16_t keep_alive_seconds = 0;
    bool clean_session = true;

    bool operator==(const Connect&) const = default;
};

struct Connack {
    bool session_present = false;
    std::uint8_t return_code = 0;

    bool operator==(const Connack&) const = default;
};

struct Publish {
    TopicName topic;
    Bytes payload;
    QoS qos = QoS::at_most_once;
    std::optional<std::uint16_t> packet_id;  // present iff qos > 0
    bool dup = false;
    bool retain = false;

    bool operator==(const Publish&) const = default;
};

struct Puback {
    std::uint16_t packet_id = 0;
    bool operator==(const Puback&) const = default;
};

struct Subscribe {
    std::uint16_t packet_id = 0;
    std::vector<std::pair<TopicFilter, QoS>> entries;
    bool operator==(const Subscribe&) const = default;
};

struct Suback {
    std::uint16_t packet_id = 0;
    std::vector<std::uint8_t> return_codes;  // granted QoS or 0x80
    bool operator==(const Suback&) const = default;
};

struct Unsubscribe {
    std::uint16_t packet_id = 0;
    std::vector<TopicFilter> filters;
    bool operator==(const Unsubscribe&) const = default;
};

struct Unsuback {
    std::uint16_t packet_id = 0;
    bool operator==(const Unsuback&) const = default;
};

struct Pingreq {
    bool operator==(const Pingreq&) const = default;
};
struct Pingresp {
    bool operator==(const Pingresp&) const = default;
};
struct Disconnect {
    bool operator==(const Disconnect&) const = default;
};

using Packet = std::variant<Connect, Connack, Publish, Puback, Subscribe, Suback, Unsubscribe,
                            Unsuback, Pingreq, Pingresp, Disconnect>;

inline std::string_view packet_name(const Packet& p) {
    struct Visitor {
        std::string_view operator()(const Connect&) { return "CONNECT"; }
        std::string_view operator()(const Connack&) { return "CONNACK"; }
        std::string_view operator()(const Publish&) { return "PUBLISH"; }
        std::string_view operator()(const Puback&) { return "PUBACK"; }
        std::string_view operator()(const Subscribe&) { return "SUBSCRIBE"; }
        std::string_view operator()(const Suback&) { return "SUBACK"; }
        std::string_view operator()(const Unsubscribe&) { return "UNSUBSCRIBE"; }
        std::string_view operator()(const Unsuback&) { return "UNSUBACK"; }
        std::string_view operator()(const Pingreq&) { return "PINGREQ"; }
        std::string_view operator()(const Pingresp&) { return "PINGRESP"; }
        std::string_view operator()(const Disconnect&) { return "DISCONNECT"; }
    };
    return std::visit(Visitor{}, p);
}

// ---------------------------------------------------------------------------
// Encoding

inline Result<Bytes> encode_varint(std::uint32_t value) {
    if (value > kMaxRemainingLength) return make_error(Errc::packet_too_large);
    Bytes out;
    do {
        std::uint8_t digit = value % 128;
        value /= 128;
        if (value > 0) digit |= 0x80;
        out.push_back(digit);
    } while (value > 0);
    return out;
}

namespace detail {

inline void put_string(Bytes& out, std::string_view s) {
    put_u16(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

inline void put_binary(Bytes& out, BytesView b) {
    put_u16(out, static_cast<std::uint16_t>(b.size()));
    put_bytes(out, b);
}

inline Result<Bytes> frame(std::uint8_t first_byte, Bytes body) {
    auto len = encode_varint(static_cast<std::uint32_t>(body.size()));
    if (!len) return len.error();
    Bytes out;
    out.reserve(1 + len->size() + body.size());
    out.push_back(first_byte);
    put_bytes(out, *len);
    put_bytes(out, body);
    return out;
}

}  // namespace detail

inline Result<Bytes> encode_packet(const Packet& packet) {
    using namespace detail;
    Bytes body;

    if (const auto* p = std::get_if<Connect>(&packet)) {
        put_string(body, "MQTT");
        put_u8(body, 4);  // protocol level 3.1.1
        std::uint8_t flags = 0;
        if (p->clean_session) flags |= 0x02;
        if (p->password && !p->username)
            return make_error(Errc::malformed_packet, "password without username");
        if (p->username) flags |= 0x80;
        if (p->password) flags |= 0x40;
        put_u8(body, flags);
        put_u16(body, p->keep_alive_seconds);
        put_string(body, p->client_id);
        if (p->username) put_string(body, *p->username);
        if (p->password) put_binary(body, *p->password);
        return frame(0x10, std::move(body));
    }
    if (const auto* p = std::get_if<Connack>(&packet)) {
        put_u8(body, p->session_present ? 0x01 : 0x00);
        put_u8(body, p->return_code);
        return frame(0x20, std::move(body));
    }
    if (const auto* p = std::get_if<Publish>(&packet)) {
        bool has_id = p->packet_id.has_value();
        if ((p->qos == QoS::at_most_once) == has_id)
            return make_error(Errc::malformed_packet, "packet id must accompany qos 1 only");
        std::uint8_t first = 0x30;
        if (p->dup) first |= 0x08;
        first |= static_cast<std::uint8_t>(p->qos) << 1;
        if (p->retain) first |= 0x01;
        put_string(body, p->topic.str());
        if (has_id) put_u16(body, *p->packet_id);
        put_bytes(body, p->payload);
        return frame(first, std::move(body));
    }
    if (const auto* p = std::get_if<Puback>(&packet)) {
        put_u16(body, p->packet_id);
        return frame(0x40, std::move(body));
    }
    if (const auto* p = std::get_if<Subscribe>(&packet)) {
        if (p->entries.empty()) return make_error(Errc::malformed_packet, "empty subscribe");
        put_u16(body, p->packet_id);
        for (const auto& [filter, qos] : p->entries) {
            put_string(body, filter.str());
            put_u8(body, static_cast<std::uint8_t>(qos));
        }
        return frame(0x82, std::move(body));
    }
    if (const auto* p = std::get_if<Suback>(&packet)) {
        put_u16(body, p->packet_id);
        for (std::uint8_t rc : p->return_codes) put_u8(body, rc);
        return frame(0x90, std::move(body));
    }
    if (const auto* p = std::get_if<Unsubscribe>(&packet)) {
        if (p->filters.empty()) return make_error(Errc::malformed_packet, "empty unsubscribe");
        put_u16(body, p->packet_id);
        for (const auto& filter : p->filters) put_string(body, filter.str());
        return frame(0xA2, std::move(body));
    }
    if (const auto* p = std::get_if<Unsuback>(&packet)) {
        put_u16(body, p->packet_id);
        return frame(0xB0, std::move(body));
    }
    if (std::holds_alternative<Pingreq>(packet)) return frame(0xC0, {});
    if (std::holds_alternative<Pingresp>(packet)) return frame(0xD0, {});
    return frame(0xE0, {});  // Disconnect
}

// ---------------------------------------------------------------------------
// Decoding

struct Decoded {
    Packet packet;
    std::size_t consumed;
};

/// Decodes one variable-length integer. Incomplete input is retryable;
/// a fifth continuation octet is malformed.
inline Result<std::pair<std::uint32_t, std::size_t>> decode_varint(BytesView data) {
    std::uint32_t value = 0;
    std::uint32_t multiplier = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= data.size()) return make_error(Errc::incomplete);
        std::uint8_t digit = data[i];
        value += (digit & 0x7F) * multiplier;
        if ((digit & 0x80) == 0) return std::pair{value, i + 1};
        multiplier *= 128;
    }
    return make_error(Errc::malformed_varint, "more than 4 octets");
}

namespace detail {

inline Result<std::string> read_string(ByteReader& r) {
    auto len = r.u16();
    if (!len) return make_error(Errc::malformed_packet, "string length");
    auto raw = r.take(*len);
    if (!raw) return make_error(Errc::malformed_packet, "string body");
    std::string s(reinterpret_cast<const char*>(raw->data()), raw->size());
    if (!valid_mqtt_utf8(s)) return make_error(Errc::invalid_utf8);
    return s;
}

inline Result<Bytes> read_binary(ByteReader& r) {
    auto len = r.u16();
    if (!len) return make_error(Errc::malformed_packet, "binary length");
    auto raw = r.take(*len);
    if (!raw) return make_error(Errc::malformed_packet, "binary body");
    return Bytes(raw->begin(), raw->end());
}

inline Result<QoS> read_qos(std::uint8_t raw) {
    if (raw == 2) return make_error(Errc::qos2_unsupported);
    if (raw > 2) return make_error(Errc::malformed_packet, "qos 3");
    return static_cast<QoS>(raw);
}

inline Result<Packet> decode_connect(ByteReader& r) {
    auto proto = read_string(r);
    if (!proto) return proto.error();
    if (*proto != "MQTT") return make_error(Errc::unacceptable_protocol, "protocol name");
    auto level = r.u8();
    if (!level) return make_error(Errc::malformed_packet);
    if (*level != 4) return make_error(Errc::unacceptable_protocol, "protocol level");
    auto flags = r.u8();
    if (!flags) return make_error(Errc::malformed_packet);
    if (*flags & 0x01) return make_error(Errc::malformed_packet, "reserved connect flag");
    if (*flags & 0x04) return make_error(Errc::malformed_packet, "will messages unsupported");
    bool has_username = *flags & 0x80;
    bool has_password = *flags & 0x40;
    if (has_password && !has_username)
        return make_error(Errc::malformed_packet, "password without username");
    auto keep_alive = r.u16();
    if (!keep_alive) return make_error(Errc::malformed_packet);

    Connect c;
    c.clean_session = *flags & 0x02;
    c.keep_alive_seconds = *keep_alive;
    auto client_id = read_string(r);
    if (!client_id) return client_id.error();
    c.client_id = std::move(*client_id);
    if (has_username) {
        auto u = read_string(r);
        if (!u) return u.error();
        c.username = std::move(*u);
    }
    if (has_password) {
        auto pw = read_binary(r);
        if (!pw) return pw.error();
        c.password = std::move(*pw);
    }
    return Packet{std::move(c)};
}

inline Result<Packet> decode_publish(std::uint8_t flags, ByteReader& r) {
    auto qos = read_qos((flags >> 1) & 0x03);
    if (!qos) return qos.error();
    bool dup = (flags & 0x08) != 0;
    bool retain = (flags & 0x01) != 0;
    if (dup && *qos == QoS::at_most_once)
        return make_error(Errc::malformed_packet, "dup with qos 0");
    auto topic = read_string(r);
    if (!topic) return topic.error();
    auto name = TopicName::parse(std::move(*topic));
    if (!name) return make_error(Errc::malformed_packet, "bad topic: " + name.error().detail);
    Publish p{std::move(*name), {}, *qos, std::nullopt, dup, retain};
    if (p.qos != QoS::at_most_once) {
        auto id = r.u16();
        if (!id) return make_error(Errc::malformed_packet, "missing packet id");
        p.packet_id = *id;
    }
    auto rest = r.take(r.remaining());
    p.payload.assign(rest->begin(), rest->end());
    return Packet{std::move(p)};
}

inline Result<Packet> decode_subscribe(ByteReader& r) {
    auto id = r.u16();
    if (!id) return make_error(Errc::malformed_packet);
    Subscribe s{*id, {}};
    while (!r.exhausted()) {
        auto raw = read_string(r);
        if (!raw) return raw.error();
        auto filter = TopicFilter::parse(std::move(*raw));
        if (!filter) return make_error(Errc::malformed_packet, "bad filter: " + filter.error().detail);
        auto qos_raw = r.u8();
        if (!qos_raw) return make_error(Errc::malformed_packet);
        if (*qos_raw & 0xFC) return make_error(Errc::malformed_packet, "reserved qos bits");
        auto qos = read_qos(*qos_raw);
        if (!qos) return qos.error();
        s.entries.emplace_back(std::move(*filter), *qos);
    }
    if (s.entries.empty()) return make_error(Errc::malformed_packet, "empty subscribe");
    return Packet{std::move(s)};
}

inline Result<Packet> decode_unsubscribe(ByteReader& r) {
    auto id = r.u16();
    if (!id) return make_error(Errc::malformed_packet);
    Unsubscribe u{*id, {}};
    while (!r.exhausted()) {
        auto raw = read_string(r);
        if (!raw) return raw.error();
        auto filter = TopicFilter::parse(std::move(*raw));
        if (!filter) return make_error(Errc::malformed_packet, "bad filter: " + filter.error().detail);
        u.filters.push_back(std::move(*filter));
    }
    if (u.filters.empty()) return make_error(Errc::malformed_packet, "empty unsubscribe");
    return Packet{std::move(u)};
}

}  // namespace detail

/// Decodes the first complete packet in `buffer`. Errc::incomplete means
/// wait for more octets; all other errors are fatal for the stream.
inline Result<Decoded> decode_packet(BytesView buffer) {
    if (buffer.empty()) return make_error(Errc::incomplete);
    std::uint8_t first = buffer[0];
    auto varint = decode_varint(buffer.subspan(1));
    if (!varint) return varint.error();
    auto [remaining_len, varint_len] = *varint;
    std::size_t header_len = 1 + varint_len;
    if (buffer.size() < header_len + remaining_len) return make_error(Errc::incomplete);

    std::uint8_t type = first >> 4;
    std::uint8_t flags = first & 0x0F;
    ByteReader r(buffer.subspan(header_len, remaining_len));
    std::size_t consumed = header_len + remaining_len;

    auto fixed_flags = [&](std::uint8_t expected) -> Result<void> {
        if (flags != expected) return make_error(Errc::malformed_packet, "reserved flag bits");
        return {};
    };
    auto done = [&](Result<Packet> p) -> Result<Decoded> {
        if (!p) return p.error();
        if (!r.exhausted()) return make_error(Errc::malformed_packet, "trailing octets in body");
        return Decoded{std::move(*p), consumed};
    };
    auto packet_id_only = [&]() -> Result<std::uint16_t> {
        auto id = r.u16();
        if (!id) return make_error(Errc::malformed_packet);
        return *id;
    };

    switch (type) {
        case 1: {
            if (auto f = fixed_flags(0); !f) return f.error();
            return done(detail::decode_connect(r));
        }
        case 2: {
            if (auto f = fixed_flags(0); !f) return f.error();
            auto ack_flags = r.u8();
            auto rc = r.u8();
            if (!ack_flags || !rc) return make_error(Errc::malformed_packet);
            if (*ack_flags & 0xFE) return make_error(Errc::malformed_packet, "connack flags");
            return done(Packet{Connack{(*ack_flags & 0x01) != 0, *rc}});
        }
        case 3:
            return done(detail::decode_publish(flags, r));
        case 4: {
            if (auto f = fixed_flags(0); !f) return f.error();
            auto id = packet_id_only();
            if (!id) return id.error();
            return done(Packet{Puback{*id}});
        }
        case 8: {
            if (auto f = fixed_flags(2); !f) return f.error();
            return done(detail::decode_subscribe(r));
        }
        case 9: {
            if (auto f = fixed_flags(0); !f) return f.error();
            auto id = r.u16();
            if (!id) return make_error(Errc::malformed_packet);
            Suback s{*id, {}};
            while (!r.exhausted()) s.return_codes.push_back(*r.u8());
            return done(Packet{std::move(s)});
        }
        case 10: {
            if (auto f = fixed_flags(2); !f) return f.error();
            return done(detail::decode_unsubscribe(r));
        }
        case 11: {
            if (auto f = fixed_flags(0); !f) return f.error();
            auto id = packet_id_only();
            if (!id) return id.error();
            return done(Packet{Unsuback{*id}});
        }
        case 12: {
            if (auto f = fixed_flags(0); !f) return f.error();
            return done(Packet{Pingreq{}});
        }
        case 13: {
            if (auto f = fixed_flags(0); !f) return f.error();
            return done(Packet{Pingresp{}});
        }
        case 14: {
            if (auto f = fixed_flags(0); !f) return f.error();
            return done(Packet{Disconnect{}});
        }
        default:
            return make_error(Errc::unknown_packet_type, std::to_string(type));
    }
}

}  // namespace p1451::mqtt
