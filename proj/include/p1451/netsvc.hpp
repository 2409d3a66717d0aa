#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>

#include <p1451/common.hpp>
#include <p1451/topic.hpp>

namespace p1451::netsvc {

// Read-TEDS command and reply messages: a 5-octet header (netSvcType,
// netSvcId, msgType, msgLength) followed by the fixed-order body, every
// integer big-endian. One MQTT publish payload carries exactly one message.

constexpr std::uint8_t kTedsServiceType = 3;
constexpr std::uint8_t kTedsServiceId = 2;
constexpr std::uint8_t kMsgTypeCommand = 1;
constexpr std::uint8_t kMsgTypeReply = 2;

constexpr std::uint16_t kCommandBodyLength = 63;
constexpr std::uint16_t kReplyFixedBodyLength = 56;

namespace error_code {
constexpr std::uint16_t success = 0;
constexpr std::uint16_t unsupported_service = 1;
constexpr std::uint16_t unknown_tim_or_channel = 2;
constexpr std::uint16_t teds_not_found = 3;
constexpr std::uint16_t invalid_offset = 4;
constexpr std::uint16_t internal_error = 5;
constexpr std::uint16_t access_denied = 6;
}  // namespace error_code

struct Uuid1451 {
    std::array<std::uint8_t, 16> octets{};

    static Uuid1451 zero() { return {}; }

    static Uuid1451 random() {
        std::random_device rd;
        Uuid1451 id;
        for (auto& b : id.octets) b = static_cast<std::uint8_t>(rd() & 0xFF);
        return id;
    }

    static Result<Uuid1451> parse_hex(std::string_view hex) {
        auto raw = from_hex(hex);
        if (!raw || raw->size() != 16)
            return make_error(Errc::parse_error, "UUID must be 32 hex characters");
        Uuid1451 id;
        std::copy(raw->begin(), raw->end(), id.octets.begin());
        return id;
    }

    std::string hex() const { return to_hex(BytesView(octets)); }
    bool is_zero() const {
        for (auto b : octets)
            if (b != 0) return false;
        return true;
    }

    bool operator==(const Uuid1451&) const = default;
};

struct TimeDuration {
    std::uint32_t seconds = 0;
    std::uint32_t nanoseconds = 0;

    bool operator==(const TimeDuration&) const = default;
};

struct ReadTedsCommand {
    Uuid1451 app_id;
    Uuid1451 ncap_id;
    Uuid1451 tim_id;
    std::uint16_t channel_id = 0;
    std::uint8_t teds_access_code = 0;
    std::uint32_t teds_offset = 0;
    TimeDuration timeout{2, 0};

    bool operator==(const ReadTedsCommand&) const = default;
};

struct ReadTedsReply {
    std::uint16_t error_code = 0;
    Uuid1451 app_id;
    Uuid1451 ncap_id;
    Uuid1451 tim_id;
    std::uint16_t channel_id = 0;
    std::uint32_t teds_offset = 0;
    Bytes raw_teds_block;

    bool operator==(const ReadTedsReply&) const = default;
};

namespace detail {

inline void put_header(Bytes& out, std::uint8_t msg_type, std::uint16_t msg_length) {
    put_u8(out, kTedsServiceType);
    put_u8(out, kTedsServiceId);
    put_u8(out, msg_type);
    put_u16(out, msg_length);
}

inline void put_uuid(Bytes& out, const Uuid1451& id) { put_bytes(out, BytesView(id.octets)); }

inline Result<Uuid1451> read_uuid(ByteReader& r) {
    auto raw = r.take(16);
    if (!raw) return raw.error();
    Uuid1451 id;
    std::copy(raw->begin(), raw->end(), id.octets.begin());
    return id;
}

/// Checks the 5-octet header and returns the body reader.
inline Result<ByteReader> open_message(BytesView data, std::uint8_t expected_msg_type,
                                       Errc wrong_type_errc) {
    ByteReader r(data);
    auto svc_type = r.u8();
    auto svc_id = r.u8();
    auto msg_type = r.u8();
    auto msg_length = r.u16();
    if (!svc_type || !svc_id || !msg_type || !msg_length)
        return make_error(Errc::truncated, "header");
    if (*svc_type != kTedsServiceType || *svc_id != kTedsServiceId)
        return make_error(wrong_type_errc, "service " + std::to_string(*svc_type) + "/" +
                                               std::to_string(*svc_id));
    if (*msg_type != expected_msg_type)
        return make_error(wrong_type_errc, "msgType " + std::to_string(*msg_type));
    if (data.size() - 5 != *msg_length)
        return data.size() - 5 < *msg_length
                   ? make_error(Errc::truncated, "body")
                   : make_error(Errc::length_mismatch, "msgLength vs body");
    return r;
}

}  // namespace detail

inline Bytes encode_command(const ReadTedsCommand& cmd) {
    Bytes out;
    out.reserve(5 + kCommandBodyLength);
    detail::put_header(out, kMsgTypeCommand, kCommandBodyLength);
    detail::put_uuid(out, cmd.app_id);
    detail::put_uuid(out, cmd.ncap_id);
    detail::put_uuid(out, cmd.tim_id);
    put_u16(out, cmd.channel_id);
    put_u8(out, cmd.teds_access_code);
    put_u32(out, cmd.teds_offset);
    put_u32(out, cmd.timeout.seconds);
    put_u32(out, cmd.timeout.nanoseconds);
    return out;
}

inline Result<ReadTedsCommand> decode_command(BytesView data) {
    auto reader = detail::open_message(data, kMsgTypeCommand, Errc::not_a_command);
    if (!reader) return reader.error();
    ByteReader& r = *reader;
    if (r.remaining() != kCommandBodyLength)
        return make_error(Errc::length_mismatch, "command body must be 63 octets");

    ReadTedsCommand cmd;
    cmd.app_id = detail::read_uuid(r).value();
    cmd.ncap_id = detail::read_uuid(r).value();
    cmd.tim_id = detail::read_uuid(r).value();
    cmd.channel_id = r.u16().value();
    cmd.teds_access_code = r.u8().value();
    cmd.teds_offset = r.u32().value();
    cmd.timeout.seconds = r.u32().value();
    cmd.timeout.nanoseconds = r.u32().value();
    if (cmd.timeout.nanoseconds >= 1'000'000'000)
        return make_error(Errc::bad_field, "timeout nanoseconds");
    return cmd;
}

inline Result<Bytes> encode_reply(const ReadTedsReply& rep) {
    std::size_t body_len = kReplyFixedBodyLength + rep.raw_teds_block.size();
    if (body_len > 0xFFFF) return make_error(Errc::packet_too_large, "reply body");
    if (rep.error_code != error_code::success && !rep.raw_teds_block.empty())
        return make_error(Errc::invalid_argument, "error reply must carry an empty block");
    Bytes out;
    out.reserve(5 + body_len);
    detail::put_header(out, kMsgTypeReply, static_cast<std::uint16_t>(body_len));
    put_u16(out, rep.error_code);
    detail::put_uuid(out, rep.app_id);
    detail::put_uuid(out, rep.ncap_id);
    detail::put_uuid(out, rep.tim_id);
    put_u16(out, rep.channel_id);
    put_u32(out, rep.teds_offset);
    put_bytes(out, rep.raw_teds_block);
    return out;
}

inline Result<ReadTedsReply> decode_reply(BytesView data) {
    auto reader = detail::open_message(data, kMsgTypeReply, Errc::not_a_reply);
    if (!reader) return reader.error();
    ByteReader& r = *reader;
    if (r.remaining() < kReplyFixedBodyLength)
        return make_error(Errc::length_mismatch, "reply body below 56 octets");

    ReadTedsReply rep;
    rep.error_code = r.u16().value();
    rep.app_id = detail::read_uuid(r).value();
    rep.ncap_id = detail::read_uuid(r).value();
    rep.tim_id = detail::read_uuid(r).value();
    rep.channel_id = r.u16().value();
    rep.teds_offset = r.u32().value();
    auto rest = r.take(r.remaining());
    rep.raw_teds_block.assign(rest->begin(), rest->end());
    return rep;
}

inline mqtt::TopicName command_topic(const Uuid1451& ncap_id) {
    return mqtt::TopicName::parse("1451.1.6/cmd/" + ncap_id.hex()).value();
}

inline mqtt::TopicName reply_topic(const Uuid1451& app_id) {
    return mqtt::TopicName::parse("1451.1.6/reply/" + app_id.hex()).value();
}

/// A reply answers a command iff it echoes both the appId and the ncapId.
/// timId takes no part: replies report 0 for NCAP-level TEDS.
inline bool correlate(const ReadTedsCommand& cmd, const ReadTedsReply& rep) {
    return rep.app_id == cmd.app_id && rep.ncap_id == cmd.ncap_id;
}

}  // namespace p1451::netsvc
