#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <p1451/common.hpp>
#include <p1451/teds.hpp>

namespace p1451::teds {

// Textual TEDS description, one key per line:
//   level=E
//   standard=10,4
// Blank lines and '#' comments are ignored. The TEDS identification header
// is the fixed security-TEDS one.

inline Result<SecurityTeds> parse_description(std::string_view text) {
    SecurityTeds teds;
    bool saw_level = false;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t eol = text.find('\n', start);
        std::string_view line =
            eol == std::string_view::npos ? text.substr(start) : text.substr(start, eol - start);
        start = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        auto fail = [&](std::string why) {
            return make_error(Errc::parse_error,
                              "line " + std::to_string(line_no) + ": " + std::move(why));
        };
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) return fail("expected key=value");
        std::string_view key = line.substr(0, eq);
        std::string_view value = line.substr(eq + 1);

        if (key == "level") {
            if (value.size() != 1) return fail("level must be one of N A B C D E");
            auto level = parse_level(static_cast<std::uint8_t>(value[0]));
            if (!level) return fail("level must be one of N A B C D E");
            teds.level = *level;
            saw_level = true;
        } else if (key == "standard") {
            std::size_t comma = value.find(',');
            if (comma == std::string_view::npos) return fail("expected standard=<code>,<version>");
            int code = -1, version = -1;
            try {
                code = std::stoi(std::string(value.substr(0, comma)));
                version = std::stoi(std::string(value.substr(comma + 1)));
            } catch (...) {
                return fail("expected numeric code and version");
            }
            if (code < 0 || code > 255 || version < 0 || version > 255)
                return fail("code and version must be octets");
            teds.entries.push_back({static_cast<std::uint8_t>(code),
                                    static_cast<std::uint8_t>(version)});
        } else {
            return fail("unknown key '" + std::string(key) + "'");
        }
    }
    if (!saw_level) return make_error(Errc::parse_error, "missing level line");
    return teds;
}

inline Result<SecurityTeds> load_description(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(Errc::io_error, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_description(buf.str());
}

inline std::string describe_policies(SecurityLevel level) {
    auto p = level_policies(level);
    std::string out;
    auto append = [&](std::string_view name) {
        if (!out.empty()) out += ", ";
        out += name;
    };
    if (p.encryption) append("encryption");
    if (p.authentication) append("authentication");
    if (p.authorization) append("authorization");
    if (out.empty()) out = "none";
    return out;
}

inline std::string version_display(const SecurityStandardEntry& entry) {
    if (entry.standard_code == kStandardTls) return std::string(tls_version_name(entry.version_code));
    return "V" + std::to_string(entry.version_code) + ".0";
}

/// Deterministic human-readable rendering of a decoded security TEDS.
inline std::string pretty_print(const SecurityTeds& teds) {
    std::ostringstream out;
    const auto& id = teds.teds_id;
    out << "Security TEDS\n";
    out << "  TEDS ID: family " << int(id.family_major) << "." << int(id.family_minor)
        << ", access code " << int(id.access_code) << ", version " << int(id.teds_version)
        << ", tuple length " << int(id.tuple_length) << "\n";
    out << "  Level: " << level_letter(teds.level) << " (" << describe_policies(teds.level)
        << ")\n";
    out << "  Standards: " << teds.entries.size() << "\n";
    for (const auto& entry : teds.entries) {
        out << "    " << standard_name(entry.standard_code) << " (" << int(entry.standard_code)
            << ") " << version_display(entry) << "\n";
    }
    for (const auto& unknown : teds.unknown_fields) {
        out << "    field " << int(unknown.field_type) << ": " << to_hex(unknown.raw_value)
            << "\n";
    }
    return out.str();
}

}  // namespace p1451::teds
