#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <p1451/acl.hpp>
#include <p1451/client.hpp>
#include <p1451/common.hpp>
#include <p1451/log.hpp>

namespace p1451::acs {

constexpr std::string_view kConfigTopic = "1451.1.6/ACL/CONFIG";
constexpr std::string_view kResultTopic = "1451.1.6/ACL/RESULT";

/// A pre-shared token authorizing ACL updates strictly below its scope
/// prefix, optionally restricted to a set of rule subjects.
struct AccessToken {
    std::string token;         // >= 16 characters
    std::string scope_prefix;  // wildcard-free topic
    std::vector<std::string> allowed_users;  // empty = any

    bool operator==(const AccessToken&) const = default;
};

/// Registry file: one `token=<value> scope=<prefix> users=<comma-list-or-*>`
/// line per token.
class TokenRegistry {
public:
    static Result<TokenRegistry> parse(std::string_view text) {
        TokenRegistry registry;
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t eol = text.find('\n', start);
            std::string_view line = eol == std::string_view::npos
                                        ? text.substr(start)
                                        : text.substr(start, eol - start);
            start = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty() || line.front() == '#') continue;

            auto fail = [&](std::string why) {
                return make_error(Errc::parse_error,
                                  "line " + std::to_string(line_no) + ": " + std::move(why));
            };
            AccessToken token;
            bool saw_token = false, saw_scope = false, saw_users = false;
            std::istringstream fields{std::string(line)};
            std::string field;
            while (fields >> field) {
                std::size_t eq = field.find('=');
                if (eq == std::string::npos) return fail("expected key=value fields");
                std::string key = field.substr(0, eq);
                std::string value = field.substr(eq + 1);
                if (key == "token") {
                    token.token = value;
                    saw_token = true;
                } else if (key == "scope") {
                    token.scope_prefix = value;
                    saw_scope = true;
                } else if (key == "users") {
                    saw_users = true;
                    if (value == "*") continue;
                    std::size_t p = 0;
                    while (p <= value.size()) {
                        std::size_t comma = value.find(',', p);
                        std::string user = comma == std::string::npos
                                               ? value.substr(p)
                                               : value.substr(p, comma - p);
                        if (!user.empty()) token.allowed_users.push_back(std::move(user));
                        p = comma == std::string::npos ? value.size() + 1 : comma + 1;
                    }
                } else {
                    return fail("unknown key '" + key + "'");
                }
            }
            if (!saw_token || !saw_scope || !saw_users)
                return fail("token, scope and users are all required");
            if (token.token.size() < 16) return fail("token shorter than 16 characters");
            auto scope = mqtt::TopicName::parse(token.scope_prefix);
            if (!scope) return fail("scope must be a wildcard-free topic");
            if (registry.by_token_.count(token.token)) return fail("duplicate token");
            registry.by_token_.emplace(token.token, std::move(token));
        }
        return registry;
    }

    static Result<TokenRegistry> load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) return make_error(Errc::io_error, "cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    void add(AccessToken token) { by_token_[token.token] = std::move(token); }

    const AccessToken* find(std::string_view token) const {
        auto it = by_token_.find(std::string(token));
        return it == by_token_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return by_token_.size(); }

private:
    std::map<std::string, AccessToken, std::less<>> by_token_;
};

// ---------------------------------------------------------------------------
// Request / result wire format: UTF-8 `key=value` lines.

enum class Op : std::uint8_t { add, remove };

struct AclUpdateRequest {
    std::string request_id;
    std::string token;
    Op op = Op::add;
    std::string user;
    acl::Access access = acl::Access::read;
    mqtt::TopicFilter filter;

    bool operator==(const AclUpdateRequest&) const = default;
};

enum class Status : std::uint8_t { ok, denied, invalid, error };

inline std::string_view status_name(Status s) {
    switch (s) {
        case Status::ok: return "ok";
        case Status::denied: return "denied";
        case Status::invalid: return "invalid";
        case Status::error: return "error";
    }
    return "?";
}

struct AclUpdateResult {
    std::string request_id;
    Status status = Status::error;
    std::string detail;
};

/// Keys request_id, token, op, user, access, topic — each exactly once,
/// any order.
inline Result<AclUpdateRequest> parse_request(std::string_view payload) {
    std::map<std::string, std::string, std::less<>> kv;
    std::size_t start = 0;
    while (start <= payload.size()) {
        std::size_t eol = payload.find('\n', start);
        std::string_view line = eol == std::string_view::npos
                                    ? payload.substr(start)
                                    : payload.substr(start, eol - start);
        start = eol == std::string_view::npos ? payload.size() + 1 : eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            return make_error(Errc::parse_error, "expected key=value lines");
        std::string key(line.substr(0, eq));
        if (kv.count(key)) return make_error(Errc::parse_error, "duplicate key " + key);
        kv.emplace(std::move(key), std::string(line.substr(eq + 1)));
    }
    for (const char* required : {"request_id", "token", "op", "user", "access", "topic"})
        if (!kv.count(required))
            return make_error(Errc::parse_error, std::string("missing key ") + required);
    if (kv.size() != 6) return make_error(Errc::parse_error, "unexpected extra keys");

    AclUpdateRequest req;
    req.request_id = kv["request_id"];
    req.token = kv["token"];
    if (kv["op"] == "add")
        req.op = Op::add;
    else if (kv["op"] == "remove")
        req.op = Op::remove;
    else
        return make_error(Errc::parse_error, "unknown op '" + kv["op"] + "'");
    req.user = kv["user"];
    auto access = acl::parse_access(kv["access"]);
    if (!access) return access.error();
    req.access = *access;
    auto filter = mqtt::TopicFilter::parse(kv["topic"]);
    if (!filter) return make_error(Errc::parse_error, "invalid topic: " + filter.error().detail);
    req.filter = std::move(*filter);
    return req;
}

inline std::string serialize_request(const AclUpdateRequest& req) {
    std::string out;
    out += "request_id=" + req.request_id + "\n";
    out += "token=" + req.token + "\n";
    out += std::string("op=") + (req.op == Op::add ? "add" : "remove") + "\n";
    out += "user=" + req.user + "\n";
    out += "access=" + std::string(acl::access_name(req.access)) + "\n";
    out += "topic=" + req.filter.str() + "\n";
    return out;
}

inline std::string serialize_result(const AclUpdateResult& result) {
    std::string out;
    out += "request_id=" + result.request_id + "\n";
    out += "status=" + std::string(status_name(result.status)) + "\n";
    if (!result.detail.empty()) out += "detail=" + result.detail + "\n";
    return out;
}

inline Result<AclUpdateResult> parse_result(std::string_view payload) {
    AclUpdateResult result;
    bool saw_id = false, saw_status = false;
    std::size_t start = 0;
    while (start <= payload.size()) {
        std::size_t eol = payload.find('\n', start);
        std::string_view line = eol == std::string_view::npos
                                    ? payload.substr(start)
                                    : payload.substr(start, eol - start);
        start = eol == std::string_view::npos ? payload.size() + 1 : eol + 1;
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) return make_error(Errc::parse_error);
        std::string_view key = line.substr(0, eq);
        std::string_view value = line.substr(eq + 1);
        if (key == "request_id") {
            result.request_id = std::string(value);
            saw_id = true;
        } else if (key == "status") {
            saw_status = true;
            if (value == "ok") result.status = Status::ok;
            else if (value == "denied") result.status = Status::denied;
            else if (value == "invalid") result.status = Status::invalid;
            else if (value == "error") result.status = Status::error;
            else return make_error(Errc::parse_error, "unknown status");
        } else if (key == "detail") {
            result.detail = std::string(value);
        }
    }
    if (!saw_id || !saw_status) return make_error(Errc::parse_error, "missing fields");
    return result;
}

// ---------------------------------------------------------------------------
// Request evaluation

struct HandleOutcome {
    AclUpdateResult result;
    acl::AclDocument document;  // unchanged unless result.status == ok
};

/// Token checks, then strict below-scope confinement, then the mutation.
inline HandleOutcome handle_request(const AclUpdateRequest& req, const TokenRegistry& registry,
                                    const acl::AclDocument& document) {
    HandleOutcome out;
    out.result.request_id = req.request_id;
    out.document = document;

    const AccessToken* token = registry.find(req.token);
    if (!token) {
        out.result.status = Status::denied;
        out.result.detail = "unknown token";
        return out;
    }
    if (!token->allowed_users.empty() &&
        std::find(token->allowed_users.begin(), token->allowed_users.end(), req.user) ==
            token->allowed_users.end()) {
        out.result.status = Status::denied;
        out.result.detail = "user not allowed for this token";
        return out;
    }
    if (!acl::is_within_scope(token->scope_prefix, req.filter)) {
        out.result.status = Status::denied;
        out.result.detail = "filter not strictly below scope " + token->scope_prefix;
        return out;
    }

    acl::AclRule rule{req.user, req.access, req.filter};
    if (req.op == Op::add) {
        out.document = acl::add_rule(std::move(out.document), std::move(rule));
        out.result.status = Status::ok;
    } else {
        auto removed = acl::remove_rule(std::move(out.document), rule);
        if (!removed.found) {
            out.document = document;
            out.result.status = Status::error;
            out.result.detail = "rule not found";
            return out;
        }
        out.document = std::move(removed.document);
        out.result.status = Status::ok;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Atomic persistence: write a sibling temp file, then rename over the target
// so a reader never observes a partial document.

inline Result<void> persist_acl(const std::string& path, const acl::AclDocument& document) {
    std::string tmp = path + ".tmp." + std::to_string(::getpid());
    std::string text = acl::serialize_acl(document);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return make_error(Errc::io_error, "cannot open " + tmp);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) return make_error(Errc::io_error, "short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        return make_error(Errc::io_error, "rename to " + path);
    }
    return {};
}

// ---------------------------------------------------------------------------
// Service loop

struct AcsConfig {
    std::string broker_host = "127.0.0.1";
    std::uint16_t broker_port = 1883;
    std::optional<std::string> username;
    std::optional<std::string> password;
    bool tls = false;
    std::optional<std::string> ca_cert;
    std::string registry_path;
    std::string acl_path;
};

/// Subscribes to the configuration topic, applies one request at a time in
/// arrival order, persists the document, triggers a reload, and publishes
/// exactly one result per request.
class AcsService {
public:
    using ReloadHook = std::function<void()>;

    AcsService(AcsConfig config, TokenRegistry registry, acl::AclDocument document,
               ReloadHook reload_hook = {})
        : config_(std::move(config)),
          registry_(std::move(registry)),
          document_(std::move(document)),
          reload_hook_(std::move(reload_hook)) {}

    ~AcsService() { stop(); }

    static Result<AcsService> create(AcsConfig config, ReloadHook reload_hook = {}) {
        auto registry = TokenRegistry::load(config.registry_path);
        if (!registry) return registry.error();
        std::ifstream in(config.acl_path, std::ios::binary);
        if (!in) return make_error(Errc::io_error, "cannot open " + config.acl_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        auto document = acl::parse_acl(buf.str());
        if (!document) return document.error();
        return AcsService(std::move(config), std::move(*registry), std::move(*document),
                          std::move(reload_hook));
    }

    void start() {
        running_ = true;
        thread_ = std::thread([this] { serve(); });
    }

    void stop() {
        running_ = false;
        if (thread_.joinable()) thread_.join();
    }

    const acl::AclDocument& document() const { return document_; }

    /// Runs until stop(); reconnects with backoff on connection loss.
    void serve() {
        auto backoff = std::chrono::milliseconds(100);
        auto config_filter = mqtt::TopicFilter::parse(std::string(kConfigTopic)).value();
        auto result_topic = mqtt::TopicName::parse(std::string(kResultTopic)).value();

        while (running_) {
            client::ClientConfig cc;
            cc.host = config_.broker_host;
            cc.port = config_.broker_port;
            cc.client_id = "mqtt-acs";
            cc.username = config_.username;
            cc.password = config_.password;
            cc.tls = config_.tls;
            cc.ca_cert = config_.ca_cert;

            auto connected = client::MqttClient::connect(cc);
            if (!connected) {
                log::event("acs_connect_failed", {{"detail", connected.error().to_string()}});
                std::this_thread::sleep_for(backoff);
                backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
                continue;
            }
            auto& mqtt_client = *connected;
            auto sub = mqtt_client.subscribe(config_filter, mqtt::QoS::at_least_once,
                                             net::after(std::chrono::seconds(5)));
            if (!sub) {
                log::event("acs_subscribe_failed", {{"detail", sub.error().to_string()}});
                mqtt_client.disconnect();
                std::this_thread::sleep_for(backoff);
                backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
                continue;
            }
            backoff = std::chrono::milliseconds(100);
            log::event("acs_ready", {{"topic", std::string(kConfigTopic)}});

            while (running_) {
                auto msg = mqtt_client.poll(net::after(std::chrono::milliseconds(200)));
                if (!msg) {
                    if (msg.error().code == Errc::timeout) continue;
                    log::event("acs_connection_lost", {{"detail", msg.error().to_string()}});
                    break;
                }
                auto result = process(std::string(msg->payload.begin(), msg->payload.end()));
                auto payload_text = serialize_result(result);
                Bytes payload(payload_text.begin(), payload_text.end());
                auto pub = mqtt_client.publish(result_topic, std::move(payload),
                                               mqtt::QoS::at_least_once,
                                               net::after(std::chrono::seconds(5)));
                if (!pub)
                    log::event("acs_result_error", {{"detail", pub.error().to_string()}});
            }
            mqtt_client.disconnect();
        }
    }

    /// Parses and applies one request; persists and triggers reload on ok.
    AclUpdateResult process(std::string_view payload) {
        auto req = parse_request(payload);
        if (!req) {
            log::event("acs_request", {{"requestId", "?"}, {"status", "invalid"}});
            return AclUpdateResult{"?", Status::invalid, req.error().to_string()};
        }
        auto outcome = handle_request(*req, registry_, document_);
        if (outcome.result.status == Status::ok) {
            if (auto persisted = persist_acl(config_.acl_path, outcome.document); !persisted) {
                outcome.result.status = Status::error;
                outcome.result.detail = persisted.error().to_string();
            } else {
                document_ = std::move(outcome.document);
                if (reload_hook_) reload_hook_();
            }
        }
        log::event("acs_request", {{"requestId", outcome.result.request_id},
                                   {"status", std::string(status_name(outcome.result.status))}});
        return outcome.result;
    }

private:
    AcsConfig config_;
    TokenRegistry registry_;
    acl::AclDocument document_;
    ReloadHook reload_hook_;
    std::atomic<bool> running_{false};
    std::thread thread_;
};

}  // namespace p1451::acs
