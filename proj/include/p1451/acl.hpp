#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <p1451/common.hpp>
#include <p1451/topic.hpp>

namespace p1451::acl {

// Per-user topic access rules in a Mosquitto-compatible subset: `user <name>`
// opens a section, `topic [read|write|readwrite] <filter>` appends rules for
// it. Anonymous clients are the empty username and match only rules under an
// empty user name. Documents are immutable values; mutations return copies.

enum class Access : std::uint8_t {
    read,       // subscribe
    write,      // publish
    readwrite,  // both
};

inline std::string_view access_name(Access a) {
    switch (a) {
        case Access::read: return "read";
        case Access::write: return "write";
        case Access::readwrite: return "readwrite";
    }
    return "?";
}

inline Result<Access> parse_access(std::string_view s) {
    if (s == "read") return Access::read;
    if (s == "write") return Access::write;
    if (s == "readwrite") return Access::readwrite;
    return make_error(Errc::parse_error, "unknown access '" + std::string(s) + "'");
}

inline bool grants_read(Access a) { return a == Access::read || a == Access::readwrite; }
inline bool grants_write(Access a) { return a == Access::write || a == Access::readwrite; }

struct AclRule {
    std::string username;
    Access access = Access::readwrite;
    mqtt::TopicFilter filter;

    bool operator==(const AclRule&) const = default;
};

struct AclDocument {
    std::vector<AclRule> rules;

    bool operator==(const AclDocument&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

}  // namespace detail

inline Result<AclDocument> parse_acl(std::string_view text) {
    AclDocument doc;
    std::string current_user;
    bool have_user = false;
    std::size_t line_no = 0;
    std::size_t start = 0;

    while (start <= text.size()) {
        std::size_t eol = text.find('\n', start);
        std::string_view line = eol == std::string_view::npos
                                    ? text.substr(start)
                                    : text.substr(start, eol - start);
        start = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        line = detail::trim(line);
        if (line.empty() || line.front() == '#') continue;

        std::size_t sp = line.find(' ');
        std::string_view keyword = sp == std::string_view::npos ? line : line.substr(0, sp);
        std::string_view rest = sp == std::string_view::npos
                                    ? std::string_view{}
                                    : detail::trim(line.substr(sp + 1));

        auto fail = [&](std::string why) {
            return make_error(Errc::parse_error,
                              "line " + std::to_string(line_no) + ": " + std::move(why));
        };

        if (keyword == "user") {
            if (rest.empty()) return fail("user line without a name");
            current_user = std::string(rest);
            have_user = true;
        } else if (keyword == "topic") {
            if (!have_user) return fail("topic line before any user line");
            Access access = Access::readwrite;
            std::string_view filter_text = rest;
            std::size_t sp2 = rest.find(' ');
            if (sp2 != std::string_view::npos) {
                auto mode = parse_access(rest.substr(0, sp2));
                if (!mode) return fail(mode.error().detail);
                access = *mode;
                filter_text = detail::trim(rest.substr(sp2 + 1));
            }
            if (filter_text.empty()) return fail("topic line without a filter");
            auto filter = mqtt::TopicFilter::parse(std::string(filter_text));
            if (!filter) return fail("invalid filter: " + filter.error().detail);
            doc.rules.push_back({current_user, access, std::move(*filter)});
        } else {
            return fail("unknown keyword '" + std::string(keyword) + "'");
        }
    }
    return doc;
}

inline std::string serialize_acl(const AclDocument& doc) {
    std::ostringstream out;
    const std::string* open_user = nullptr;
    for (const auto& rule : doc.rules) {
        if (!open_user || *open_user != rule.username) {
            out << "user " << rule.username << "\n";
            open_user = &rule.username;
        }
        out << "topic " << access_name(rule.access) << " " << rule.filter.str() << "\n";
    }
    return out.str();
}

inline bool check_publish(const AclDocument& doc, std::string_view username,
                          const mqtt::TopicName& topic) {
    for (const auto& rule : doc.rules)
        if (rule.username == username && grants_write(rule.access) &&
            mqtt::filter_matches(rule.filter, topic))
            return true;
    return false;
}

/// True iff every topic matched by `specific` is matched by `general`.
inline bool filter_covers(const mqtt::TopicFilter& general, const mqtt::TopicFilter& specific) {
    auto g = mqtt::split_levels(general.str());
    auto s = mqtt::split_levels(specific.str());

    // A wildcard-leading general filter reaches no '$'-topics, but a literal
    // '$'-leading specific filter matches only those.
    bool g_wild = g[0] == "+" || g[0] == "#";
    bool s_dollar = !s[0].empty() && s[0][0] == '$' && s[0] != "+" && s[0] != "#";
    if (g_wild && s_dollar) return false;

    std::size_t i = 0, j = 0;
    while (true) {
        if (i == g.size() && j == s.size()) return true;
        if (i < g.size() && g[i] == "#") return true;
        if (i == g.size() || j == s.size()) return false;
        if (s[j] == "#") return false;   // specific reaches deeper than general allows
        if (g[i] == "+") { ++i; ++j; continue; }
        if (s[j] == "+") return false;   // general demands a literal here
        if (g[i] != s[j]) return false;
        ++i; ++j;
    }
}

inline bool check_subscribe(const AclDocument& doc, std::string_view username,
                            const mqtt::TopicFilter& requested) {
    for (const auto& rule : doc.rules)
        if (rule.username == username && grants_read(rule.access) &&
            filter_covers(rule.filter, requested))
            return true;
    return false;
}

inline AclDocument add_rule(AclDocument doc, AclRule rule) {
    for (const auto& existing : doc.rules)
        if (existing == rule) return doc;  // idempotent
    doc.rules.push_back(std::move(rule));
    return doc;
}

struct RemoveOutcome {
    AclDocument document;
    bool found = false;
};

inline RemoveOutcome remove_rule(AclDocument doc, const AclRule& rule) {
    RemoveOutcome out;
    for (auto& existing : doc.rules) {
        if (existing == rule) {
            out.found = true;
            continue;
        }
        out.document.rules.push_back(std::move(existing));
    }
    return out;
}

/// True iff `filter` sits strictly below `scope_prefix`: it must extend the
/// prefix by at least one level, with wildcards confined to the extension.
inline bool is_within_scope(std::string_view scope_prefix, const mqtt::TopicFilter& filter) {
    auto scope_topic = mqtt::TopicName::parse(std::string(scope_prefix));
    if (!scope_topic) return false;
    auto scope = mqtt::split_levels(scope_prefix);
    auto f = mqtt::split_levels(filter.str());
    if (f.size() <= scope.size()) return false;
    for (std::size_t i = 0; i < scope.size(); ++i)
        if (f[i] != scope[i]) return false;
    return true;
}

}  // namespace p1451::acl
