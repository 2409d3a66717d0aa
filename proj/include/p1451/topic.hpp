#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <p1451/common.hpp>

namespace p1451::mqtt {

inline std::vector<std::string_view> split_levels(std::string_view s) {
    std::vector<std::string_view> levels;
    std::size_t start = 0;
    while (true) {
        std::size_t sep = s.find('/', start);
        if (sep == std::string_view::npos) {
            levels.push_back(s.substr(start));
            return levels;
        }
        levels.push_back(s.substr(start, sep - start));
        start = sep + 1;
    }
}

/// Concrete topic a message is published on: no wildcards, no NUL.
class TopicName {
public:
    static Result<TopicName> parse(std::string value) {
        if (value.empty()) return make_error(Errc::invalid_argument, "empty topic");
        if (!valid_mqtt_utf8(value)) return make_error(Errc::invalid_utf8, "topic");
        if (value.find('+') != std::string::npos || value.find('#') != std::string::npos)
            return make_error(Errc::invalid_argument, "wildcard in topic name");
        return TopicName(std::move(value));
    }

    const std::string& str() const { return value_; }
    bool operator==(const TopicName&) const = default;

private:
    explicit TopicName(std::string v) : value_(std::move(v)) {}
    std::string value_;
};

/// Subscription filter: '#' only as the final level, '+' only as a whole level.
class TopicFilter {
public:
    static Result<TopicFilter> parse(std::string value) {
        if (value.empty()) return make_error(Errc::invalid_argument, "empty filter");
        if (!valid_mqtt_utf8(value)) return make_error(Errc::invalid_utf8, "filter");
        auto levels = split_levels(value);
        for (std::size_t i = 0; i < levels.size(); ++i) {
            std::string_view lvl = levels[i];
            if (lvl == "#") {
                if (i + 1 != levels.size())
                    return make_error(Errc::invalid_argument, "'#' must be the final level");
            } else if (lvl.find('#') != std::string_view::npos) {
                return make_error(Errc::invalid_argument, "'#' must occupy a whole level");
            } else if (lvl != "+" && lvl.find('+') != std::string_view::npos) {
                return make_error(Errc::invalid_argument, "'+' must occupy a whole level");
            }
        }
        return TopicFilter(std::move(value));
    }

    const std::string& str() const { return value_; }
    bool operator==(const TopicFilter&) const = default;

private:
    explicit TopicFilter(std::string v) : value_(std::move(v)) {}
    std::string value_;
};

inline Result<TopicFilter> validate_filter(std::string candidate) {
    return TopicFilter::parse(std::move(candidate));
}

/// Level-wise MQTT matching. Filters starting with a wildcard never match
/// topics whose first level starts with '$'.
inline bool filter_matches(const TopicFilter& filter, const TopicName& topic) {
    auto f = split_levels(filter.str());
    auto t = split_levels(topic.str());

    if ((f[0] == "+" || f[0] == "#") && !t[0].empty() && t[0][0] == '$') return false;

    std::size_t i = 0;
    for (; i < f.size(); ++i) {
        if (f[i] == "#") return true;  // matches the parent level and everything below
        if (i >= t.size()) return false;
        if (f[i] != "+" && f[i] != t[i]) return false;
    }
    return i == t.size();
}

}  // namespace p1451::mqtt
