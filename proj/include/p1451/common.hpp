#pragma once

#include <cstdint>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace p1451 {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

enum class Errc {
    // generic
    invalid_argument,
    io_error,
    timeout,
    closed,
    auth_failed,
    denied,
    not_found,
    parse_error,
    // mqtt codec
    incomplete,
    malformed_packet,
    malformed_varint,
    unknown_packet_type,
    qos2_unsupported,
    invalid_utf8,
    unacceptable_protocol,
    packet_too_large,
    // teds codec
    truncated,
    length_mismatch,
    checksum_mismatch,
    reserved_code,
    bad_field,
    // netsvc
    not_a_command,
    not_a_reply,
};

inline std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::invalid_argument:       return "invalid_argument";
        case Errc::io_error:               return "io_error";
        case Errc::timeout:                return "timeout";
        case Errc::closed:                 return "closed";
        case Errc::auth_failed:            return "auth_failed";
        case Errc::denied:                 return "denied";
        case Errc::not_found:              return "not_found";
        case Errc::parse_error:            return "parse_error";
        case Errc::incomplete:             return "incomplete";
        case Errc::malformed_packet:       return "malformed_packet";
        case Errc::malformed_varint:       return "malformed_varint";
        case Errc::unknown_packet_type:    return "unknown_packet_type";
        case Errc::qos2_unsupported:       return "qos2_unsupported";
        case Errc::invalid_utf8:           return "invalid_utf8";
        case Errc::unacceptable_protocol:  return "unacceptable_protocol";
        case Errc::packet_too_large:       return "packet_too_large";
        case Errc::truncated:              return "truncated";
        case Errc::length_mismatch:        return "length_mismatch";
        case Errc::checksum_mismatch:      return "checksum_mismatch";
        case Errc::reserved_code:          return "reserved_code";
        case Errc::bad_field:              return "bad_field";
        case Errc::not_a_command:          return "not_a_command";
        case Errc::not_a_reply:            return "not_a_reply";
    }
    return "unknown";
}

struct Error {
    Errc code;
    std::string detail;

    std::string to_string() const {
        std::string s{errc_name(code)};
        if (!detail.empty()) {
            s += ": ";
            s += detail;
        }
        return s;
    }
};

inline Error make_error(Errc code, std::string detail = {}) {
    return Error{code, std::move(detail)};
}

/// Value-or-error carrier used across the codecs and services.
template <typename T>
class [[nodiscard]] Result {
public:
    Result(T value) : v_(std::move(value)) {}
    Result(Error err) : v_(std::move(err)) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    T& value() & { return std::get<T>(v_); }
    const T& value() const& { return std::get<T>(v_); }
    T&& value() && { return std::get<T>(std::move(v_)); }

    const Error& error() const { return std::get<Error>(v_); }

    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }
    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }

private:
    std::variant<T, Error> v_;
};

template <>
class [[nodiscard]] Result<void> {
public:
    Result() = default;
    Result(Error err) : err_(std::move(err)) {}

    bool ok() const { return !err_.has_value(); }
    explicit operator bool() const { return ok(); }
    const Error& error() const { return *err_; }

private:
    std::optional<Error> err_;
};

// ---------------------------------------------------------------------------
// Big-endian byte packing

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_bytes(Bytes& out, BytesView v) { out.insert(out.end(), v.begin(), v.end()); }

/// Cursor over an immutable octet buffer; reads fail once exhausted.
class ByteReader {
public:
    explicit ByteReader(BytesView data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }
    bool exhausted() const { return pos_ == data_.size(); }

    Result<std::uint8_t> u8() {
        if (remaining() < 1) return make_error(Errc::truncated);
        return data_[pos_++];
    }

    Result<std::uint16_t> u16() {
        if (remaining() < 2) return make_error(Errc::truncated);
        std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
        pos_ += 2;
        return v;
    }

    Result<std::uint32_t> u32() {
        if (remaining() < 4) return make_error(Errc::truncated);
        std::uint32_t v = (std::uint32_t{data_[pos_]} << 24) | (std::uint32_t{data_[pos_ + 1]} << 16) |
                          (std::uint32_t{data_[pos_ + 2]} << 8) | std::uint32_t{data_[pos_ + 3]};
        pos_ += 4;
        return v;
    }

    Result<BytesView> take(std::size_t n) {
        if (remaining() < n) return make_error(Errc::truncated);
        BytesView v = data_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

private:
    BytesView data_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Hex helpers

inline std::string to_hex(BytesView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline Result<Bytes> from_hex(std::string_view s) {
    if (s.size() % 2 != 0) return make_error(Errc::parse_error, "odd hex length");
    Bytes out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2) {
        int hi = hex_nibble(s[i]);
        int lo = hex_nibble(s[i + 1]);
        if (hi < 0 || lo < 0) return make_error(Errc::parse_error, "bad hex digit");
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

// ---------------------------------------------------------------------------
// UTF-8 validation (RFC 3629; additionally rejects U+0000, as MQTT requires)

inline bool valid_mqtt_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto b0 = static_cast<std::uint8_t>(s[i]);
        if (b0 == 0x00) return false;
        if (b0 < 0x80) {
            i += 1;
            continue;
        }
        std::size_t len;
        std::uint32_t cp;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            auto b = static_cast<std::uint8_t>(s[i + k]);
            if ((b & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (b & 0x3F);
        }
        if (len == 2 && cp < 0x80) return false;
        if (len == 3 && cp < 0x800) return false;
        if (len == 4 && cp < 0x10000) return false;
        if (cp > 0x10FFFF) return false;
        if (cp >= 0xD800 && cp <= 0xDFFF) return false;
        i += len;
    }
    return true;
}

}  // namespace p1451
